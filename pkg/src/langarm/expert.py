"""Scripted expert for the stock tasks.

One policy serves three roles: collecting demonstrations through the
language-teleoperation pipeline, acting as the correction source for
intervention experiments, and giving tests a known-good rollout. It works
from ground-truth state (simulator privilege), navigates the dominant axis
with the largest step that does not overshoot, and runs the grasp sequence
for pick/place.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .actions import (
    MotionPrimitive,
    POSITION_GRANULARITIES,
    action_to_primitive,
    LowLevelAction,
)
from .teleop import Episode, Session, finish_session, start_session, step_session
from .world import TaskSpec, WorldState, check_success

logger = logging.getLogger(__name__)

_NAV_TOL = 0.02       # stop distance for planar navigation, under the 0.03 grasp radius
_GRASP_Z = 0.05
_LIFT_Z = 0.25


def _axis_step(residual: float) -> float:
    """Largest granularity not overshooting; 1cm once under the tolerance band."""
    mag = abs(residual)
    step = POSITION_GRANULARITIES[0]
    for g in POSITION_GRANULARITIES:
        if g <= mag:
            step = g
    return math.copysign(step, residual)


def _planar_move(state: WorldState, tx: float, ty: float) -> LowLevelAction | None:
    dx = tx - state.pose.x
    dy = ty - state.pose.y
    if math.hypot(dx, dy) <= _NAV_TOL:
        return None
    if abs(dx) >= abs(dy):
        return LowLevelAction(dx=_axis_step(dx))
    return LowLevelAction(dy=_axis_step(dy))


def expert_action(state: WorldState, task: TaskSpec) -> LowLevelAction | None:
    """Next action toward success, or None when the predicate already holds."""
    if check_success(state, task):
        return None
    target = state.object(task.target)
    if task.predicate == "point":
        return _planar_move(state, *target.position)

    if task.predicate == "pick":
        if not target.held:
            move = _planar_move(state, *target.position)
            if move is not None:
                return move
            if state.pose.z > _GRASP_Z:
                return LowLevelAction(dz=_axis_step(_GRASP_Z - state.pose.z))
            if state.pose.open:
                return LowLevelAction(grip_cmd=0.0)
            # closed on nothing: reopen and retry the approach
            return LowLevelAction(grip_cmd=1.0)
        return LowLevelAction(dz=_axis_step(_LIFT_Z - state.pose.z))

    if task.predicate == "place":
        goal = state.object(task.goal)
        if target.held:
            move = _planar_move(state, *goal.position)
            if move is not None:
                return move
            return LowLevelAction(grip_cmd=1.0)
        # dropped early: reacquire
        move = _planar_move(state, *target.position)
        if move is not None:
            return move
        if state.pose.z > _GRASP_Z:
            return LowLevelAction(dz=_axis_step(_GRASP_Z - state.pose.z))
        if state.pose.open:
            return LowLevelAction(grip_cmd=0.0)
        return LowLevelAction(dz=_axis_step(_LIFT_Z - state.pose.z))

    raise ValueError(f"no expert for predicate {task.predicate!r}")


def expert_primitive(state: WorldState, task: TaskSpec) -> MotionPrimitive | None:
    action = expert_action(state, task)
    return None if action is None else action_to_primitive(action)


def _phrase_for(primitive: MotionPrimitive, rng: np.random.Generator,
                vocab) -> str:
    """Canonical text or one of its grammar-safe paraphrases."""
    phrases = [primitive.canonical_text]
    if primitive.axis.value < 3 or primitive.axis.name == "GRIPPER":
        phrases += list(vocab.synonyms.get(primitive.id, ()))
    return phrases[int(rng.integers(len(phrases)))]


def collect_demonstration(task: TaskSpec, seed: int, vocab=None,
                          paraphrase_seed: int | None = None,
                          max_steps: int = 60) -> Episode:
    """Drive a teleoperation session with the scripted expert.

    Supervisions are typed as language (canonical or a paraphrase when a
    paraphrase seed is given), translated and executed exactly like a human
    session would be.
    """
    from .actions import canonical_vocabulary

    vocab = vocab or canonical_vocabulary()
    rng = np.random.default_rng(seed if paraphrase_seed is None else paraphrase_seed)
    session = start_session(task, seed, session_id=f"expert-{task.task_id}-{seed}")
    for _ in range(max_steps):
        primitive = expert_primitive(session.world, task)
        if primitive is None:
            break
        text = (_phrase_for(primitive, rng, vocab)
                if paraphrase_seed is not None else primitive.canonical_text)
        _, transition = step_session(session, text)
        if transition is not None and transition.primitive.id != primitive.id:
            raise RuntimeError(
                f"paraphrase {text!r} translated to a different primitive")
        if transition is None:  # grammar did not read the phrase; type it plainly
            _, transition = step_session(session, primitive.canonical_text)
    episode = finish_session(session)
    if not episode.success:
        logger.warning("expert failed %s with seed %d after %d steps",
                       task.task_id, seed, len(episode.transitions))
    return episode


def collect_vocabulary_sweep(task: TaskSpec, seed: int, vocab=None) -> Episode:
    """One calibration episode that runs every canonical motion once.

    Covering the whole vocabulary gives each supervision embedding training
    pressure; policies trained only on task-relevant motions leave the other
    classes' scores uncontrolled, and those hijack the argmax at inference.
    This is the desk-scale stand-in for broad pretraining coverage.
    """
    from .actions import canonical_vocabulary

    vocab = vocab or canonical_vocabulary()
    session = start_session(task, seed, session_id=f"calib-{task.task_id}-{seed}")
    for primitive in vocab.primitives:
        _, transition = step_session(session, primitive.canonical_text)
        if transition is None or transition.primitive.id != primitive.id:
            raise RuntimeError(
                f"calibration text {primitive.canonical_text!r} did not execute")
    return finish_session(session)


def make_correction_source(tolerant: bool = True):
    """Correction callable for run_episode.

    Corrects only when the policy's choice does not strictly reduce the
    expert's distance-to-go (a slower-but-helpful move is left alone when
    tolerant), so a small budget stretches over the episode.
    """
    from .actions import primitive_to_action
    from .world import apply_action

    def potential(state: WorldState, task: TaskSpec) -> float:
        target = state.object(task.target)
        pose = state.pose
        if task.predicate == "point":
            return math.hypot(pose.x - target.position[0], pose.y - target.position[1])
        if task.predicate == "pick":
            if not target.held:
                return (math.hypot(pose.x - target.position[0],
                                   pose.y - target.position[1])
                        + max(pose.z - _GRASP_Z, 0.0) + 1.0)
            return max(0.15 - pose.z, 0.0)
        if task.predicate == "place":
            goal = state.object(task.goal)
            if target.held:
                return math.hypot(pose.x - goal.position[0],
                                  pose.y - goal.position[1]) + 0.5
            return math.hypot(target.position[0] - goal.position[0],
                              target.position[1] - goal.position[1])
        raise ValueError(f"no potential for predicate {task.predicate!r}")

    def correct(state: WorldState, task: TaskSpec, step: int,
                chosen: MotionPrimitive) -> MotionPrimitive | None:
        preferred = expert_primitive(state, task)
        if preferred is None or preferred.id == chosen.id:
            return None
        if tolerant:
            before = potential(state, task)
            after = potential(apply_action(state, primitive_to_action(chosen)), task)
            if after < before - 1e-9:
                return None
        return preferred

    return correct
