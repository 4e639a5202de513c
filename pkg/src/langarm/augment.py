"""Stochastic trajectory augmentation.

A demonstration splits into segments at waypoints (gripper flips and
positional progress reversals). Each augmentation rebuilds every segment
from its cumulative action: positional progress is resampled as random
increments from {1, 5, 10} cm that keep the remaining direction and never
overshoot, one deviation/recovery pair per segment is injected near the
waypoint (recovery is the exact negation of the deviation and is the only
half that trains), rotations are re-emitted atomically at the segment end,
and gripper events are preserved. The rebuilt action sequence replays in
the simulator from the original seed to harvest observations; an
augmentation whose endpoint drifts from the demonstration endpoint is
rejected and resampled.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from .actions import (
    GRIP_NOOP,
    LowLevelAction,
    action_to_primitive,
)
from .teleop import Episode, Source, Transition
from .world import TaskSpec, apply_action, get_task, init_world, render

logger = logging.getLogger(__name__)

#: Increment sizes for the diversification phase, meters.
SAMPLE_SET = (0.01, 0.05, 0.1)
#: Residual norm below which a segment counts as finished.
EPSILON = 1e-6
#: Proximity (to the waypoint) that triggers the recovery phase; max(SAMPLE_SET).
RECOVERY_THRESHOLD = 0.1
#: Feasibility slack so float dust never blocks the largest viable increment.
_FEAS_TOL = 1e-9

_MAX_DEVIATION_RESAMPLES = 100
_MAX_REPLAY_ATTEMPTS = 10
_REPLAY_TOL = 1e-4


class WaypointKind(str, enum.Enum):
    GRIPPER_CHANGE = "gripper_change"
    PROGRESS_REVERSAL = "progress_reversal"
    TERMINAL = "terminal"


@dataclass(frozen=True)
class Waypoint:
    index: int
    kind: WaypointKind


@dataclass
class SegmentPlan:
    """Planned emission for one segment of one augmentation."""

    cumulative: np.ndarray                       # (7,) dx..dgrip_rot
    increments: list[LowLevelAction]
    recovery_pairs: list[tuple[LowLevelAction, LowLevelAction]]
    # emission order: each entry is ("inc", i) | ("dev", j) | ("rec", j)
    order: list[tuple[str, int]]


class ReplayDivergence(RuntimeError):
    """Augmented endpoint strayed from the demonstration endpoint."""


def find_waypoints(episode: Episode) -> list[Waypoint]:
    """Gripper flips and per-axis progress reversals, plus the terminal.

    A reversal is a step whose positional delta on some axis opposes the
    direction accumulated on that axis since the segment began. The waypoint
    index is the step where the new direction starts.
    """
    if not episode.transitions:
        raise ValueError("empty trajectory")
    waypoints: list[Waypoint] = []
    direction = [0, 0, 0]
    for t, tr in enumerate(episode.transitions):
        a = tr.action
        if a.grip_cmd >= 0.0:
            waypoints.append(Waypoint(t, WaypointKind.GRIPPER_CHANGE))
            direction = [0, 0, 0]
            continue
        reversed_here = False
        for i, delta in enumerate((a.dx, a.dy, a.dz)):
            if delta == 0.0:
                continue
            sign = 1 if delta > 0 else -1
            if direction[i] == 0:
                direction[i] = sign
            elif direction[i] != sign:
                reversed_here = True
                break
        if reversed_here:
            waypoints.append(Waypoint(t, WaypointKind.PROGRESS_REVERSAL))
            direction = [0, 0, 0]
            for i, delta in enumerate((a.dx, a.dy, a.dz)):
                if delta != 0.0:
                    direction[i] = 1 if delta > 0 else -1
    waypoints.append(Waypoint(len(episode.transitions), WaypointKind.TERMINAL))
    return waypoints


def segment_bounds(episode: Episode) -> list[tuple[int, int, int | None]]:
    """(start, end, gripper_event_index) per segment; end is exclusive and the
    gripper event, when present, sits at the boundary and belongs to no
    segment's cumulative action."""
    bounds = []
    start = 0
    for wp in find_waypoints(episode):
        if wp.kind is WaypointKind.GRIPPER_CHANGE:
            bounds.append((start, wp.index, wp.index))
            start = wp.index + 1
        elif wp.kind is WaypointKind.PROGRESS_REVERSAL:
            bounds.append((start, wp.index, None))
            start = wp.index
        else:
            bounds.append((start, wp.index, None))
    return bounds


def cumulative_action(episode: Episode, from_index: int, to_index: int) -> np.ndarray:
    """Componentwise sum of the segment's deltas (first seven slots)."""
    if from_index > to_index:
        raise ValueError("segment start after segment end")
    total = np.zeros(7)
    for tr in episode.transitions[from_index:to_index]:
        total += tr.action.vector()[:7]
    return total


def _position_action(vec3) -> LowLevelAction:
    return LowLevelAction(float(vec3[0]), float(vec3[1]), float(vec3[2]),
                          grip_cmd=GRIP_NOOP)


def _sample_increment(remaining: np.ndarray, rng: np.random.Generator
                      ) -> np.ndarray | None:
    """One diversification increment, or None when no axis can sample.

    Per axis: choose uniformly among the sizes not exceeding the remaining
    magnitude, signed to match it. Axes with nothing feasible stay zero.
    """
    inc = np.zeros(3)
    sampled = False
    for i in range(3):
        mag = abs(remaining[i])
        feasible = [s for s in SAMPLE_SET if s <= mag + _FEAS_TOL]
        if not feasible or mag <= EPSILON:
            continue
        inc[i] = math.copysign(feasible[int(rng.integers(len(feasible)))], remaining[i])
        sampled = True
    return inc if sampled else None


def diversify_segment(cumulative, rng: np.random.Generator) -> list[LowLevelAction]:
    """Resample a segment's positional progress as vocabulary-sized steps.

    Accepts the 7-slot cumulative action (or a bare 3-vector); only the
    positional part is diversified. Residuals too small for the sample set
    are flushed as one exact corrective increment so the emitted steps always
    sum to the input.
    """
    cumulative = np.asarray(cumulative, dtype=float)
    remaining = cumulative[:3].astype(float).copy()
    out: list[LowLevelAction] = []
    while float(np.linalg.norm(remaining)) > EPSILON:
        inc = _sample_increment(remaining, rng)
        if inc is None:
            inc = remaining.copy()  # exact corrective residual below min(S)
        out.append(_position_action(inc))
        remaining -= inc
    return out


def make_recovery_pair(remaining, rng: np.random.Generator
                       ) -> tuple[LowLevelAction, LowLevelAction] | None:
    """Deviation/recovery pair near a waypoint; None if sampling caps out.

    The deviation samples x and y from the step sizes (signed to match the
    remaining action) and uses the remaining z magnitude, kept nonnegative;
    it must strictly grow ||remaining + deviation||. The recovery is its
    exact negation.
    """
    remaining = np.asarray(remaining, dtype=float)[:3]
    base = float(np.linalg.norm(remaining))
    for _ in range(_MAX_DEVIATION_RESAMPLES):
        dev = np.zeros(3)
        for i in (0, 1):
            size = SAMPLE_SET[int(rng.integers(len(SAMPLE_SET)))]
            dev[i] = -size if remaining[i] < 0 else size
        dev[2] = abs(remaining[2])
        if float(np.linalg.norm(remaining + dev)) > base:
            deviation = _position_action(dev)
            recovery = _position_action(-dev)
            return deviation, recovery
    logger.info("recovery sampling capped out; segment keeps no recovery pair")
    return None


def plan_segment(cumulative: np.ndarray, rng: np.random.Generator,
                 with_recovery: bool = True) -> SegmentPlan:
    """Diversified increments with at most one recovery pair injected at the
    first moment the remaining action is inside the proximity threshold."""
    remaining = cumulative[:3].astype(float).copy()
    plan = SegmentPlan(cumulative=cumulative.copy(), increments=[],
                       recovery_pairs=[], order=[])
    recovery_done = not with_recovery
    while float(np.linalg.norm(remaining)) > EPSILON:
        inc = _sample_increment(remaining, rng)
        if inc is None:
            inc = remaining.copy()
        plan.increments.append(_position_action(inc))
        plan.order.append(("inc", len(plan.increments) - 1))
        remaining -= inc
        if not recovery_done and float(np.linalg.norm(remaining)) < RECOVERY_THRESHOLD:
            recovery_done = True
            pair = make_recovery_pair(remaining, rng)
            if pair is not None:
                plan.recovery_pairs.append(pair)
                plan.order.append(("dev", len(plan.recovery_pairs) - 1))
                plan.order.append(("rec", len(plan.recovery_pairs) - 1))
    return plan


def _rotation_action(cumulative: np.ndarray) -> LowLevelAction | None:
    rot = cumulative[3:7]
    if not np.any(rot != 0.0):
        return None
    return LowLevelAction(0.0, 0.0, 0.0, float(rot[0]), float(rot[1]),
                          float(rot[2]), float(rot[3]), GRIP_NOOP)


def _emit_plan(episode: Episode, rng: np.random.Generator
               ) -> list[tuple[LowLevelAction, Source | None]]:
    """One augmentation's full executed action list; None source = deviation
    (executed, never trained)."""
    emitted: list[tuple[LowLevelAction, Source | None]] = []
    for start, end, gripper_idx in segment_bounds(episode):
        if end > start:
            cumulative = cumulative_action(episode, start, end)
            plan = plan_segment(cumulative, rng)
            for kind, idx in plan.order:
                if kind == "inc":
                    emitted.append((plan.increments[idx], Source.STA_DIVERSIFY))
                elif kind == "dev":
                    emitted.append((plan.recovery_pairs[idx][0], None))
                else:
                    emitted.append((plan.recovery_pairs[idx][1], Source.STA_RECOVERY))
            rotation = _rotation_action(cumulative)
            if rotation is not None:
                emitted.append((rotation, Source.STA_DIVERSIFY))
        if gripper_idx is not None:
            emitted.append((episode.transitions[gripper_idx].action,
                            Source.STA_DIVERSIFY))
    return emitted


def _final_pose(task: TaskSpec, episode: Episode):
    state = init_world(task, episode.seed)
    for tr in episode.transitions:
        state = apply_action(state, tr.action)
    return state.pose


def augment_trajectory(episode: Episode, n_aug: int = 3,
                       task: TaskSpec | None = None,
                       rng: np.random.Generator | int | None = None,
                       world_factory=init_world) -> list[Episode]:
    """Build n_aug augmented episodes by replaying resampled actions.

    Every emitted action is recorded with the canonical text of its
    dominant-axis primitive; deviations execute (so the recovery observes the
    deviated state) but never appear among the episode's transitions. The
    replay must land on the demonstration's endpoint within 1e-4 m per axis,
    otherwise the augmentation is resampled, up to 10 attempts.
    """
    if n_aug < 1:
        raise ValueError("n_aug must be at least 1")
    task = task or get_task(episode.task_id)
    if isinstance(rng, (int, np.integer)) or rng is None:
        rng = np.random.default_rng(0 if rng is None else int(rng))
    target_pose = _final_pose(task, episode)

    out: list[Episode] = []
    for aug_index in range(n_aug):
        child = np.random.default_rng(rng.integers(0, 2**63 - 1))
        for attempt in range(_MAX_REPLAY_ATTEMPTS):
            emitted = _emit_plan(episode, child)
            state = world_factory(task, episode.seed)
            transitions: list[Transition] = []
            indices: list[int] = []
            for idx, (action, source) in enumerate(emitted):
                before = render(state)
                state = apply_action(state, action)
                if source is None:
                    continue
                primitive = action_to_primitive(action)
                transitions.append(Transition(
                    observation=before, instruction=episode.instruction,
                    supervision=primitive.canonical_text, primitive=primitive,
                    action=action, source=source))
                indices.append(idx)
            pose = state.pose
            err = max(abs(pose.x - target_pose.x), abs(pose.y - target_pose.y),
                      abs(pose.z - target_pose.z))
            if err <= _REPLAY_TOL:
                out.append(Episode(
                    task_id=episode.task_id, instruction=episode.instruction,
                    transitions=transitions, success=episode.success,
                    seed=episode.seed,
                    replay_actions=tuple(a for a, _ in emitted),
                    replay_transition_indices=tuple(indices)))
                break
            logger.info("augmentation %d attempt %d diverged by %.2e; resampling",
                        aug_index, attempt + 1, err)
        else:
            raise ReplayDivergence(
                f"augmentation {aug_index} kept diverging after "
                f"{_MAX_REPLAY_ATTEMPTS} attempts")
    return out
