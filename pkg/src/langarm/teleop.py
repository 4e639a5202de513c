"""Language-based teleoperation.

Free-form supervision strings become low-level actions through a rule-based
translator (direction verbs, magnitude words, explicit quantities), get
snapped onto the motion vocabulary, and execute in the simulated world. A
session records the resulting (observation, instruction, supervision,
primitive, action) tuples into replayable episode files. An optional HTTP
client delegates translation to an external chat-completion endpoint and
falls back to the local grammar on any failure.
"""

from __future__ import annotations

import base64
import enum
import hashlib
import json
import logging
import math
import re
import urllib.request
from dataclasses import dataclass, field

from .actions import (
    GRIP_CLOSE,
    GRIP_NOOP,
    GRIP_OPEN,
    LowLevelAction,
    MotionPrimitive,
    action_to_primitive,
    primitive_to_action,
)
from .world import (
    Observation,
    TaskSpec,
    WorldState,
    apply_action,
    check_success,
    get_task,
    init_world,
    observation_png,
    png_to_observation,
    render,
)

logger = logging.getLogger(__name__)

EPISODE_FORMAT_VERSION = 1

ZERO_ACTION = LowLevelAction()

# canonical radian values for the four rotation step sizes; the vocabulary
# stores 4-decimal truncations, so a plain degrees->radians conversion of 5
# degrees (0.08727) would not round-trip
_CANONICAL_DEG = {5.0: 0.0872, 15.0: 0.2618, 45.0: 0.7854, 90.0: 1.5708}

_POS_WORDS = {
    "forward": (0, 1.0), "forwards": (0, 1.0), "ahead": (0, 1.0),
    "advance": (0, 1.0),
    "back": (0, -1.0), "backward": (0, -1.0), "backwards": (0, -1.0),
    "retreat": (0, -1.0),
    "left": (1, 1.0),
    "right": (1, -1.0),
    "up": (2, 1.0), "upward": (2, 1.0), "upwards": (2, 1.0),
    "raise": (2, 1.0), "lift": (2, 1.0),
    "down": (2, -1.0), "downward": (2, -1.0), "downwards": (2, -1.0),
    "lower": (2, -1.0), "descend": (2, -1.0),
}

_DEG_RE = re.compile(r"(\d+(?:\.\d+)?)\s*(?:degrees?|deg\b)")
_CM_RE = re.compile(r"(\d+(?:\.\d+)?)\s*cm\b")


class Source(str, enum.Enum):
    TELEOP = "teleop"
    STA_DIVERSIFY = "sta_diversify"
    STA_RECOVERY = "sta_recovery"


@dataclass(frozen=True)
class Transition:
    observation: Observation
    instruction: str
    supervision: str
    primitive: MotionPrimitive
    action: LowLevelAction
    source: Source = Source.TELEOP


@dataclass
class Episode:
    task_id: str
    instruction: str
    transitions: list[Transition]
    success: bool
    seed: int
    # full executed action list for augmented episodes (includes the
    # deviations that are excluded from transitions); None for teleop
    replay_actions: tuple[LowLevelAction, ...] | None = None
    # indices into replay_actions that carry the recorded transitions, in order
    replay_transition_indices: tuple[int, ...] | None = None


class SessionStatus(str, enum.Enum):
    ACTIVE = "active"
    DONE = "done"
    ABORTED = "aborted"


class SessionStateError(RuntimeError):
    """Command issued to a session that is not active."""


class EpisodeFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def _words(text: str) -> list[str]:
    return re.findall(r"[a-z]+", text.lower())


def _rotation_axis(words: list[str]) -> int | None:
    wordset = set(words)
    if wordset & {"gripper", "grip"} and wordset & {"rotate", "twist", "spin", "turn"}:
        return 6
    if "roll" in wordset:
        return 3
    if wordset & {"tilt", "pitch", "angle"}:
        return 4
    if wordset & {"yaw", "swing"}:
        return 5
    return None


def _rotation_sign(axis: int, words: list[str]) -> float:
    wordset = set(words)
    if "counterclockwise" in wordset:
        return -1.0
    if "clockwise" in wordset:
        return 1.0
    if axis == 3:  # rolling toward the left reads as clockwise here
        if "left" in wordset:
            return 1.0
        if "right" in wordset:
            return -1.0
    if axis == 4:
        if wordset & {"up", "upward", "upwards"}:
            return -1.0
        if wordset & {"down", "downward", "downwards"}:
            return 1.0
    if axis == 5:
        if "left" in wordset:
            return -1.0
        if "right" in wordset:
            return 1.0
    return 1.0


def _magnitude_words(words: list[str], tiny: float, bit: float,
                     default: float, lot: float) -> float:
    wordset = set(words)
    if "tiny" in wordset or "slightly" in wordset:
        return tiny
    if "bit" in wordset or "little" in wordset:
        return bit
    if "lot" in wordset:
        return lot
    return default


def translate_supervision(text: str) -> LowLevelAction:
    """Rule-based supervision-to-action translator.

    Direction verbs pick the axis and sign; "a tiny bit" / "a bit" /
    (nothing) / "a lot" select 1/5/10/20 cm for positions and 5/15/45/90
    degrees for rotations; explicit "<n>cm" and "<n> degrees" quantities win
    over magnitude words. Clockwise is positive, rotations clamp to 90
    degrees, and anything unrecognized maps to the all-zero action.
    """
    if not text:
        raise ValueError("empty supervision text")
    lowered = text.lower()
    words = _words(lowered)
    wordset = set(words)

    if wordset & {"open", "release"} or ("let" in wordset and "go" in wordset):
        return LowLevelAction(grip_cmd=GRIP_OPEN)
    if wordset & {"close", "clamp"} or "grip" in wordset:
        return LowLevelAction(grip_cmd=GRIP_CLOSE)

    rot_axis = _rotation_axis(words)
    if rot_axis is not None:
        match = _DEG_RE.search(lowered)
        if match:
            deg = float(match.group(1))
            deg = min(deg, 90.0)
            radians = _CANONICAL_DEG.get(deg, math.radians(deg))
        else:
            radians = _magnitude_words(words, 0.0872, 0.2618, 0.7854, 1.5708)
        value = _rotation_sign(rot_axis, words) * radians
        vec = [0.0] * 8
        vec[rot_axis] = value
        vec[7] = GRIP_NOOP
        return LowLevelAction.from_vector(vec)

    axis_votes = [(_POS_WORDS[w], i) for i, w in enumerate(words) if w in _POS_WORDS]
    if axis_votes:
        (axis, sign), _ = axis_votes[0]
        match = _CM_RE.search(lowered)
        if match:
            meters = float(match.group(1)) / 100.0
        else:
            meters = _magnitude_words(words, 0.01, 0.05, 0.1, 0.2)
        vec = [0.0] * 8
        vec[axis] = sign * meters
        vec[7] = GRIP_NOOP
        return LowLevelAction.from_vector(vec)

    return ZERO_ACTION


# --- session ------------------------------------------------------------------

@dataclass
class Session:
    session_id: str
    world: WorldState
    task: TaskSpec
    instruction: str
    transitions: list[Transition] = field(default_factory=list)
    status: SessionStatus = SessionStatus.ACTIVE


def start_session(task: TaskSpec, seed: int, session_id: str = "local") -> Session:
    world = init_world(task, seed)
    return Session(session_id=session_id, world=world, task=task,
                   instruction=task.instruction())


def step_session(session: Session, text: str) -> tuple[Observation, Transition | None]:
    """Translate, snap to the vocabulary, execute, record.

    Unrecognized text leaves the world untouched and records nothing. The
    stored observation is the one the action was chosen in.
    """
    if session.status is not SessionStatus.ACTIVE:
        raise SessionStateError(f"session {session.session_id} is {session.status.value}")
    raw = translate_supervision(text)
    if raw.is_zero():
        return render(session.world), None
    primitive = action_to_primitive(raw)
    action = primitive_to_action(primitive)
    before = render(session.world)
    session.world = apply_action(session.world, action)
    transition = Transition(observation=before, instruction=session.instruction,
                            supervision=text, primitive=primitive, action=action,
                            source=Source.TELEOP)
    session.transitions.append(transition)
    return render(session.world), transition


def finish_session(session: Session, aborted: bool = False) -> Episode:
    if session.status is not SessionStatus.ACTIVE:
        raise SessionStateError(f"session {session.session_id} is {session.status.value}")
    session.status = SessionStatus.ABORTED if aborted else SessionStatus.DONE
    return Episode(
        task_id=session.task.task_id,
        instruction=session.instruction,
        transitions=list(session.transitions),
        success=check_success(session.world, session.task),
        seed=session.world.rng_seed,
    )


# --- episode files ------------------------------------------------------------

def _transition_line(index: int, tr: Transition) -> str:
    record = {
        "step": index,
        "u": tr.supervision,
        "instruction": tr.instruction,
        "primitive": tr.primitive.id,
        "action": [float(v) for v in tr.action.vector()],
        "source": tr.source.value,
        "png": base64.b64encode(observation_png(tr.observation)).decode("ascii"),
    }
    return json.dumps(record, separators=(",", ":"))


def save_episode(episode: Episode, path) -> None:
    """Line-delimited record: header, one line per transition, checksum."""
    header = {
        "format": "langarm-episode",
        "version": EPISODE_FORMAT_VERSION,
        "task_id": episode.task_id,
        "instruction": episode.instruction,
        "seed": episode.seed,
        "success": episode.success,
        "transitions": len(episode.transitions),
    }
    if episode.replay_actions is not None:
        header["replay_actions"] = [
            [float(v) for v in a.vector()] for a in episode.replay_actions]
        header["replay_transition_indices"] = list(
            episode.replay_transition_indices or ())
    lines = [json.dumps(header, separators=(",", ":"))]
    lines += [_transition_line(i, tr) for i, tr in enumerate(episode.transitions)]
    body = "\n".join(lines)
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(body + "\n" + json.dumps({"sha256": digest}) + "\n")


def load_episode(path) -> Episode:
    from .actions import bare_vocabulary

    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 2:
        raise EpisodeFormatError("truncated episode file", line=max(len(lines), 1))

    def parse(idx: int) -> dict:
        try:
            return json.loads(lines[idx])
        except json.JSONDecodeError as err:
            raise EpisodeFormatError(f"malformed record: {err.msg}", line=idx + 1) from err

    header = parse(0)
    if header.get("format") != "langarm-episode":
        raise EpisodeFormatError("not an episode file", line=1)
    if header.get("version") != EPISODE_FORMAT_VERSION:
        raise EpisodeFormatError(
            f"unsupported episode version {header.get('version')!r}", line=1)

    footer = parse(len(lines) - 1)
    if "sha256" not in footer:
        raise EpisodeFormatError("missing checksum line", line=len(lines))
    body = "\n".join(lines[:-1])
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if digest != footer["sha256"]:
        raise EpisodeFormatError("checksum mismatch", line=len(lines))

    expected = header["transitions"]
    if len(lines) - 2 != expected:
        raise EpisodeFormatError(
            f"expected {expected} transitions, file has {len(lines) - 2}",
            line=len(lines))

    vocab = bare_vocabulary()
    transitions = []
    for idx in range(1, len(lines) - 1):
        rec = parse(idx)
        for key in ("step", "u", "primitive", "action", "source", "png"):
            if key not in rec:
                raise EpisodeFormatError(f"missing field {key!r}", line=idx + 1)
        obs = png_to_observation(base64.b64decode(rec["png"]))
        transitions.append(Transition(
            observation=obs,
            instruction=rec.get("instruction", header["instruction"]),
            supervision=rec["u"],
            primitive=vocab.by_id(rec["primitive"]),
            action=LowLevelAction.from_vector(rec["action"]),
            source=Source(rec["source"]),
        ))
    replay = None
    replay_idx = None
    if "replay_actions" in header:
        replay = tuple(LowLevelAction.from_vector(v) for v in header["replay_actions"])
        replay_idx = tuple(header.get("replay_transition_indices", ()))
    return Episode(task_id=header["task_id"], instruction=header["instruction"],
                   transitions=transitions, success=header["success"],
                   seed=header["seed"], replay_actions=replay,
                   replay_transition_indices=replay_idx)


def replay_episode(episode: Episode, task: TaskSpec | None = None):
    """Re-execute an episode from its seed, yielding (stored, recomputed)
    observation pairs; augmented episodes replay their full action list."""
    task = task or get_task(episode.task_id)
    state = init_world(task, episode.seed)
    if episode.replay_actions is None:
        for tr in episode.transitions:
            yield tr.observation, render(state)
            state = apply_action(state, tr.action)
        return
    marked = set(episode.replay_transition_indices or ())
    queue = list(episode.transitions)
    for idx, action in enumerate(episode.replay_actions):
        if idx in marked:
            yield queue.pop(0).observation, render(state)
        state = apply_action(state, action)


# --- external translator ------------------------------------------------------

TRANSLATOR_PROMPT = """You convert one human command for a tabletop robot arm into numbers.
Reply with a single list of seven numbers and nothing else:
[x, y, z, roll, pitch, yaw, gripper_rotation]
- x, y, z are deltas in meters. The x axis points away from the viewer
  (forward positive), y grows to the left, z grows upward.
- roll, pitch, yaw and gripper_rotation are deltas in degrees, each within
  -90 to 90. Positive means clockwise.
- The gripper starts pointing straight down with fingers open.
- If the command is unrelated to arm motion, reply with all zeros.
Examples:
move to the right: [0.0, -0.1, 0.0, 0.0, 0.0, 0.0, 0.0]
move forward a bit: [0.05, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
lower arm a tiny bit: [0.0, 0.0, -0.01, 0.0, 0.0, 0.0, 0.0]
raise arm up a lot: [0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0]
roll arm to the left a bit: [0.0, 0.0, 0.0, 15.0, 0.0, 0.0, 0.0]
tilt end effector up a lot: [0.0, 0.0, 0.0, 0.0, -90.0, 0.0, 0.0]
yaw arm to the left a tiny bit: [0.0, 0.0, 0.0, 0.0, 0.0, -5.0, 0.0]
rotate gripper 45 degrees clockwise: [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 45.0]
close the gripper: [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
Command: {supervision}"""

_LIST_RE = re.compile(r"\[[^\[\]]*\]")


def _parse_seven(reply_text: str) -> LowLevelAction:
    match = _LIST_RE.search(reply_text)
    if not match:
        raise ValueError("no list in reply")
    parts = [p.strip() for p in match.group(0)[1:-1].split(",") if p.strip()]
    if len(parts) != 7:
        raise ValueError(f"expected 7 elements, got {len(parts)}")
    nums = [float(p) for p in parts]
    deg = [min(max(v, -90.0), 90.0) for v in nums[3:]]
    rads = [math.copysign(_CANONICAL_DEG.get(abs(v), math.radians(abs(v))), v)
            if v != 0.0 else 0.0 for v in deg]
    return LowLevelAction(nums[0], nums[1], nums[2],
                          rads[0], rads[1], rads[2], rads[3], GRIP_NOOP)


def llm_translator_client(text: str, endpoint: str,
                          timeout: float = 10.0) -> LowLevelAction:
    """Translate via an external chat endpoint; local grammar on failure.

    Gripper open/close is decided from the verbs locally (the reply format
    has no slot for it). The endpoint receives POST {"prompt": ...} and must
    answer {"text": ...} containing a 7-number list (meters + degrees).
    One retry, then fallback.
    """
    wordset = set(_words(text))
    if "open" in wordset:
        return LowLevelAction(grip_cmd=GRIP_OPEN)
    if "close" in wordset:
        return LowLevelAction(grip_cmd=GRIP_CLOSE)

    payload = json.dumps({"prompt": TRANSLATOR_PROMPT.format(supervision=text)})
    request = urllib.request.Request(
        endpoint, data=payload.encode("utf-8"),
        headers={"Content-Type": "application/json"}, method="POST")
    for attempt in (1, 2):
        try:
            with urllib.request.urlopen(request, timeout=timeout) as resp:
                reply = json.loads(resp.read().decode("utf-8"))
            return _parse_seven(reply["text"])
        except Exception as err:  # noqa: BLE001 - any failure falls back
            logger.warning("translator endpoint attempt %d failed: %s", attempt, err)
    logger.warning("translator endpoint unusable; falling back to local grammar")
    return translate_supervision(text)
