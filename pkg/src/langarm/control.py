"""Closed-loop discriminative control.

Each step embeds the observation and the prompted instruction once, dots
the context against cached primitive embeddings, takes the argmax, decodes
through the lookup table and executes. An advisor can rescale scores with
time-decaying appropriateness factors, and a correction source can replace
the chosen primitive outright, limited by a per-episode budget.
"""

from __future__ import annotations

import ast
import base64
import json
import logging
import re
import urllib.request
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .actions import (
    MotionPrimitive,
    PrimitiveVocabulary,
    primitive_to_action,
)
from .encoders import (
    EncoderParams,
    encode_text,
    image_embed_raw,
    prompted,
    text_embed_raw,
)
from .world import (
    Observation,
    TaskSpec,
    WorldState,
    apply_action,
    check_success,
    render,
)

logger = logging.getLogger(__name__)

DEFAULT_GUIDANCE_ALPHA = 0.7

# primitive-id families for the four planar directions an advisor may judge
PLANAR_FAMILIES = {
    "move arm back": tuple(range(0, 4)),
    "move arm forward": tuple(range(4, 8)),
    "move arm to the right": tuple(range(8, 12)),
    "move arm to the left": tuple(range(12, 16)),
}
_PLANAR_IDS = frozenset(i for fam in PLANAR_FAMILIES.values() for i in fam)


@dataclass(frozen=True)
class ScoreVector:
    """Per-primitive raw cosines and probabilities, in vocabulary order."""

    cosines: np.ndarray
    probabilities: np.ndarray

    def __len__(self) -> int:
        return len(self.probabilities)


@dataclass(frozen=True)
class GuidanceVerdict:
    """Advisor output: primitive ids judged appropriate/inappropriate at step t."""

    appropriate: tuple[int, ...]
    inappropriate: tuple[int, ...]
    step: int
    alpha: float = DEFAULT_GUIDANCE_ALPHA

    def __post_init__(self):
        overlap = set(self.appropriate) & set(self.inappropriate)
        if overlap:
            raise ValueError(f"ids judged both ways: {sorted(overlap)}")
        stray = (set(self.appropriate) | set(self.inappropriate)) - _PLANAR_IDS
        if stray:
            raise ValueError(f"advisor ids outside the planar families: {sorted(stray)}")

    def is_empty(self) -> bool:
        return not self.appropriate and not self.inappropriate


EMPTY_VERDICT = GuidanceVerdict(appropriate=(), inappropriate=(), step=1)


class PrimitiveCache:
    """Primitive text embeddings computed once per parameter set, plus an
    encoder invocation counter for the single-pass bookkeeping."""

    def __init__(self, vocab: PrimitiveVocabulary, params: EncoderParams):
        self.vocab = vocab
        self.params = params
        self.invocations = 0
        self.embeddings = np.stack([
            self._encode(p.canonical_text) for p in vocab.primitives])

    def _encode(self, text: str) -> np.ndarray:
        self.invocations += 1
        return encode_text(text, self.params)

    def context(self, obs: Observation, instruction: str) -> np.ndarray:
        raw = (image_embed_raw(obs.pixels, self.params)
               + text_embed_raw(prompted(instruction), self.params))
        self.invocations += 2
        norm = float(np.linalg.norm(raw))
        if norm == 0.0:
            raise ValueError("degenerate context")
        return raw / norm


def score_primitives(obs: Observation, instruction: str,
                     vocab: PrimitiveVocabulary, params: EncoderParams,
                     cache: PrimitiveCache | None = None) -> ScoreVector:
    """Score every primitive in one pass: two encoder invocations when the
    cache is warm, regardless of vocabulary size."""
    if cache is None:
        cache = PrimitiveCache(vocab, params)
    ctx = cache.context(obs, instruction)
    cosines = cache.embeddings @ ctx
    probs = 1.0 / (1.0 + np.exp(-cosines))
    return ScoreVector(cosines=cosines, probabilities=probs)


def select_action(scores: ScoreVector, vocab: PrimitiveVocabulary) -> MotionPrimitive:
    """Highest probability wins; exact ties go to the lowest primitive id."""
    best = int(np.argmax(scores.probabilities))  # argmax returns the first max
    return vocab.by_id(best)


def apply_guidance(scores: ScoreVector, verdict: GuidanceVerdict) -> ScoreVector:
    """Rescale probabilities by (1 +/- alpha^t); everything else untouched."""
    if not 0.0 <= verdict.alpha < 1.0:
        raise ValueError(f"guidance alpha {verdict.alpha} outside [0, 1)")
    factor = verdict.alpha ** verdict.step
    probs = scores.probabilities.copy()
    for pid in verdict.appropriate:
        probs[pid] *= 1.0 + factor
    for pid in verdict.inappropriate:
        probs[pid] *= 1.0 - factor
    return ScoreVector(cosines=scores.cosines, probabilities=probs)


def scripted_advisor(state: WorldState, task: TaskSpec, step: int,
                     alpha: float = DEFAULT_GUIDANCE_ALPHA) -> GuidanceVerdict:
    """Ground-truth advisor: the planar family that most reduces the
    gripper-to-target distance is appropriate, its opposite inappropriate.

    When the task object is already held, the goal object (if any) becomes
    the reference point. At the target, or without one, the verdict is empty.
    """
    try:
        target = state.object(task.target)
    except KeyError:
        return GuidanceVerdict((), (), step, alpha)
    ref = target.position
    if target.held and task.goal is not None:
        ref = state.object(task.goal).position
    dx = ref[0] - state.pose.x
    dy = ref[1] - state.pose.y
    if max(abs(dx), abs(dy)) < 0.01:
        return GuidanceVerdict((), (), step, alpha)
    if abs(dx) >= abs(dy):
        good = "move arm forward" if dx > 0 else "move arm back"
        bad = "move arm back" if dx > 0 else "move arm forward"
    else:
        good = "move arm to the left" if dy > 0 else "move arm to the right"
        bad = "move arm to the right" if dy > 0 else "move arm to the left"
    return GuidanceVerdict(appropriate=PLANAR_FAMILIES[good],
                           inappropriate=PLANAR_FAMILIES[bad],
                           step=step, alpha=alpha)


ADVISOR_PROMPT = """You watch a tabletop robot arm from above and advise its next move.
Return one dictionary with exactly two keys, "Appropriate" and
"Inappropriate", each mapping to a list of action strings chosen from:
["move arm back", "move arm forward", "move arm to the right", "move arm to the left"]
Put the single best action under "Appropriate" and the wrong ones under
"Inappropriate". The x axis points away from the viewer, the y axis grows to
the left. Align left/right before depth. No other text.
Instruction: {instruction}
Which way should the robot move?"""


def _verdict_from_reply(text: str, step: int, alpha: float) -> GuidanceVerdict:
    match = re.search(r"\{.*\}", text, re.DOTALL)
    if not match:
        raise ValueError("no dictionary in reply")
    blob = match.group(0)
    try:
        parsed = json.loads(blob)
    except json.JSONDecodeError:
        parsed = ast.literal_eval(blob)
    if not isinstance(parsed, dict):
        raise ValueError("reply is not a dictionary")
    appropriate: list[int] = []
    inappropriate: list[int] = []
    for key, sink in (("Appropriate", appropriate), ("Inappropriate", inappropriate)):
        for name in parsed.get(key, []):
            fam = PLANAR_FAMILIES.get(str(name).strip().lower())
            if fam is None:
                logger.info("advisor named unknown action %r; ignored", name)
                continue
            sink.extend(fam)
    return GuidanceVerdict(tuple(appropriate), tuple(inappropriate), step, alpha)


def llm_advisor_client(obs: Observation, instruction: str, endpoint: str,
                       step: int = 1, alpha: float = DEFAULT_GUIDANCE_ALPHA,
                       timeout: float = 10.0) -> GuidanceVerdict:
    """Ask an external endpoint for a verdict; anything malformed or slow
    degrades to no guidance."""
    from .world import observation_png

    payload = json.dumps({
        "prompt": ADVISOR_PROMPT.format(instruction=instruction),
        "image_png_b64": base64.b64encode(observation_png(obs)).decode("ascii"),
    })
    request = urllib.request.Request(
        endpoint, data=payload.encode("utf-8"),
        headers={"Content-Type": "application/json"}, method="POST")
    try:
        with urllib.request.urlopen(request, timeout=timeout) as resp:
            reply = json.loads(resp.read().decode("utf-8"))
        return _verdict_from_reply(reply["text"], step, alpha)
    except Exception as err:  # noqa: BLE001 - guidance is best-effort
        logger.warning("advisor endpoint failed (%s); continuing unguided", err)
        return GuidanceVerdict((), (), step, alpha)


@dataclass
class StepTrace:
    step: int
    primitive_id: int
    probability: float
    intervened: bool


@dataclass
class EpisodeResult:
    success: bool
    steps: int
    interventions_used: int
    trace: list[StepTrace] = field(default_factory=list)


@dataclass
class ControlConfig:
    max_steps: int | None = None
    # (state, task, step) -> GuidanceVerdict
    advisor: Callable | None = None
    alpha: float = DEFAULT_GUIDANCE_ALPHA
    intervention_budget: int = 0
    # (state, task, step, chosen) -> MotionPrimitive | None
    correction_source: Callable | None = None


def run_episode(params: EncoderParams, state: WorldState, task: TaskSpec,
                vocab: PrimitiveVocabulary,
                config: ControlConfig | None = None,
                cache: PrimitiveCache | None = None) -> EpisodeResult:
    """Score, guide, select, maybe correct, decode, execute, until success or
    the step cap. Interventions replace one step's primitive and consume
    budget; guidance never consumes anything."""
    config = config or ControlConfig()
    cache = cache or PrimitiveCache(vocab, params)
    instruction = task.instruction()
    max_steps = config.max_steps if config.max_steps is not None else task.max_steps
    used = 0
    trace: list[StepTrace] = []
    success = False
    for step in range(1, max_steps + 1):
        obs = render(state)
        scores = score_primitives(obs, instruction, vocab, params, cache)
        if config.advisor is not None:
            verdict = config.advisor(state, task, step)
            scores = apply_guidance(scores, verdict)
        chosen = select_action(scores, vocab)
        intervened = False
        if config.correction_source is not None and used < config.intervention_budget:
            correction = config.correction_source(state, task, step, chosen)
            if correction is not None and correction.id != chosen.id:
                chosen = correction
                used += 1
                intervened = True
        state = apply_action(state, primitive_to_action(chosen))
        trace.append(StepTrace(step=step, primitive_id=chosen.id,
                               probability=float(scores.probabilities[chosen.id]),
                               intervened=intervened))
        if check_success(state, task):
            success = True
            break
    return EpisodeResult(success=success, steps=len(trace),
                         interventions_used=used, trace=trace)
