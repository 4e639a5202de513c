"""Motion-primitive vocabulary: the canonical language motions, their exact
8-D end-effector actions, and the dominant-axis discretizer that maps any
action back onto the vocabulary.

The action layout is fixed everywhere in this package:

    [dx, dy, dz, droll, dpitch, dyaw, dgrip_rot, grip_cmd]

Positions in meters, rotations in radians. The eighth slot is a gripper
command encoded as a real: -1.0 no-op, 0.0 close, 1.0 open. Axis
conventions: x grows away from the viewer (forward positive), y grows to
the left (right is negative), z grows upward. Positive rotation values are
clockwise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

GRIP_NOOP = -1.0
GRIP_CLOSE = 0.0
GRIP_OPEN = 1.0

#: Positional step sizes, meters.
POSITION_GRANULARITIES = (0.01, 0.05, 0.1, 0.2)
#: Rotational step sizes, radians, exactly as the vocabulary stores them
#: (4-decimal truncations of 5, 15, 45 and 90 degrees).
ROTATION_GRANULARITIES = (0.0872, 0.2618, 0.7854, 1.5708)

VOCABULARY_VERSION = 1


class Axis(enum.Enum):
    X = 0
    Y = 1
    Z = 2
    ROLL = 3
    PITCH = 4
    YAW = 5
    GRIP_ROT = 6
    GRIPPER = 7


class NoMotionError(ValueError):
    """An all-zero action with a no-op gripper command names no motion."""


class UnknownPrimitiveError(KeyError):
    """Primitive id or text outside the vocabulary."""


class ParaphraseCollisionError(ValueError):
    """A paraphrase string was claimed by two different primitives."""


@dataclass(frozen=True)
class LowLevelAction:
    """One 8-D end-effector delta plus gripper command."""

    dx: float = 0.0
    dy: float = 0.0
    dz: float = 0.0
    droll: float = 0.0
    dpitch: float = 0.0
    dyaw: float = 0.0
    dgrip_rot: float = 0.0
    grip_cmd: float = GRIP_NOOP

    def vector(self) -> np.ndarray:
        return np.array(
            [self.dx, self.dy, self.dz, self.droll, self.dpitch, self.dyaw,
             self.dgrip_rot, self.grip_cmd],
            dtype=float,
        )

    @staticmethod
    def from_vector(vec) -> "LowLevelAction":
        vals = [float(v) for v in vec]
        if len(vals) != 8:
            raise ValueError(f"action vector needs 8 slots, got {len(vals)}")
        return LowLevelAction(*vals)

    def is_zero(self) -> bool:
        return (
            self.grip_cmd < 0.0
            and all(v == 0.0 for v in (self.dx, self.dy, self.dz, self.droll,
                                       self.dpitch, self.dyaw, self.dgrip_rot))
        )


@dataclass(frozen=True)
class MotionPrimitive:
    """A canonical language motion bound to one exact low-level action."""

    id: int
    canonical_text: str
    axis: Axis
    magnitude: float  # signed; meters or radians; open/close flag for GRIPPER
    granularity_label: str


# (text, action-8-vector) in vocabulary order. The numbers are the contract:
# control, training labels and file formats all assume these exact values.
_TABLE: list[tuple[str, tuple[float, ...]]] = [
    ("move arm back by 20cm",    (-0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("move arm back by 10cm",    (-0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("move arm back by 5cm",     (-0.05, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("move arm back by 1cm",     (-0.01, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("move arm forward by 1cm",  (0.01, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("move arm forward by 5cm",  (0.05, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("move arm forward by 10cm", (0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("move arm forward by 20cm", (0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("move arm to the right by 20cm", (0.0, -0.2, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("move arm to the right by 10cm", (0.0, -0.1, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("move arm to the right by 5cm",  (0.0, -0.05, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("move arm to the right by 1cm",  (0.0, -0.01, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("move arm to the left by 1cm",   (0.0, 0.01, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("move arm to the left by 5cm",   (0.0, 0.05, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("move arm to the left by 10cm",  (0.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("move arm to the left by 20cm",  (0.0, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("lower arm by 20cm",  (0.0, 0.0, -0.2, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("lower arm by 10cm",  (0.0, 0.0, -0.1, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("lower arm by 5cm",   (0.0, 0.0, -0.05, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("lower arm by 1cm",   (0.0, 0.0, -0.01, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("raise arm up by 1cm",  (0.0, 0.0, 0.01, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("raise arm up by 5cm",  (0.0, 0.0, 0.05, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("raise arm up by 10cm", (0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("raise arm up by 20cm", (0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0, -1.0)),
    ("roll arm 90 degrees counterclockwise", (0.0, 0.0, 0.0, -1.5708, 0.0, 0.0, 0.0, -1.0)),
    ("roll arm 45 degrees counterclockwise", (0.0, 0.0, 0.0, -0.7854, 0.0, 0.0, 0.0, -1.0)),
    ("roll arm 15 degrees counterclockwise", (0.0, 0.0, 0.0, -0.2618, 0.0, 0.0, 0.0, -1.0)),
    ("roll arm 5 degrees counterclockwise",  (0.0, 0.0, 0.0, -0.0872, 0.0, 0.0, 0.0, -1.0)),
    ("roll arm 5 degrees clockwise",   (0.0, 0.0, 0.0, 0.0872, 0.0, 0.0, 0.0, -1.0)),
    ("roll arm 15 degrees clockwise",  (0.0, 0.0, 0.0, 0.2618, 0.0, 0.0, 0.0, -1.0)),
    ("roll arm 45 degrees clockwise",  (0.0, 0.0, 0.0, 0.7854, 0.0, 0.0, 0.0, -1.0)),
    ("roll arm 90 degrees clockwise",  (0.0, 0.0, 0.0, 1.5708, 0.0, 0.0, 0.0, -1.0)),
    ("tilt arm up 90 degrees", (0.0, 0.0, 0.0, 0.0, -1.5708, 0.0, 0.0, -1.0)),
    ("tilt arm up 45 degrees", (0.0, 0.0, 0.0, 0.0, -0.7854, 0.0, 0.0, -1.0)),
    ("tilt arm up 15 degrees", (0.0, 0.0, 0.0, 0.0, -0.2618, 0.0, 0.0, -1.0)),
    ("tilt arm up 5 degrees",  (0.0, 0.0, 0.0, 0.0, -0.0872, 0.0, 0.0, -1.0)),
    ("tilt arm down 5 degrees",  (0.0, 0.0, 0.0, 0.0, 0.0872, 0.0, 0.0, -1.0)),
    ("tilt arm down 15 degrees", (0.0, 0.0, 0.0, 0.0, 0.2618, 0.0, 0.0, -1.0)),
    ("tilt arm down 45 degrees", (0.0, 0.0, 0.0, 0.0, 0.7854, 0.0, 0.0, -1.0)),
    ("tilt arm down 90 degrees", (0.0, 0.0, 0.0, 0.0, 1.5708, 0.0, 0.0, -1.0)),
    ("yaw arm 90 degrees counterclockwise", (0.0, 0.0, 0.0, 0.0, 0.0, -1.5708, 0.0, -1.0)),
    ("yaw arm 45 degrees counterclockwise", (0.0, 0.0, 0.0, 0.0, 0.0, -0.7854, 0.0, -1.0)),
    ("yaw arm 15 degrees counterclockwise", (0.0, 0.0, 0.0, 0.0, 0.0, -0.2618, 0.0, -1.0)),
    ("yaw arm 5 degrees counterclockwise",  (0.0, 0.0, 0.0, 0.0, 0.0, -0.0872, 0.0, -1.0)),
    ("yaw arm 5 degrees clockwise",   (0.0, 0.0, 0.0, 0.0, 0.0, 0.0872, 0.0, -1.0)),
    ("yaw arm 15 degrees clockwise",  (0.0, 0.0, 0.0, 0.0, 0.0, 0.2618, 0.0, -1.0)),
    ("yaw arm 45 degrees clockwise",  (0.0, 0.0, 0.0, 0.0, 0.0, 0.7854, 0.0, -1.0)),
    ("yaw arm 90 degrees clockwise",  (0.0, 0.0, 0.0, 0.0, 0.0, 1.5708, 0.0, -1.0)),
    ("rotate gripper 90 degrees counterclockwise", (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.5708, -1.0)),
    ("rotate gripper 45 degrees counterclockwise", (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -0.7854, -1.0)),
    ("rotate gripper 15 degrees counterclockwise", (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -0.2618, -1.0)),
    ("rotate gripper 5 degrees counterclockwise",  (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -0.0872, -1.0)),
    ("rotate gripper 5 degrees clockwise",   (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0872, -1.0)),
    ("rotate gripper 15 degrees clockwise",  (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.2618, -1.0)),
    ("rotate gripper 45 degrees clockwise",  (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.7854, -1.0)),
    ("rotate gripper 90 degrees clockwise",  (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.5708, -1.0)),
    ("close the gripper", (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)),
    ("open the gripper",  (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)),
]

_GRAN_LABELS_POS = {0.01: "1cm", 0.05: "5cm", 0.1: "10cm", 0.2: "20cm"}
_GRAN_LABELS_ROT = {0.0872: "5deg", 0.2618: "15deg", 0.7854: "45deg", 1.5708: "90deg"}


def _primitive_from_row(pid: int, text: str, vec: tuple[float, ...]) -> MotionPrimitive:
    if vec[7] >= 0.0:
        label = "open" if vec[7] == GRIP_OPEN else "close"
        return MotionPrimitive(pid, text, Axis.GRIPPER, vec[7], label)
    axis_idx = max(range(7), key=lambda i: abs(vec[i]))
    value = vec[axis_idx]
    labels = _GRAN_LABELS_POS if axis_idx < 3 else _GRAN_LABELS_ROT
    return MotionPrimitive(pid, text, Axis(axis_idx), value, labels[abs(value)])


@dataclass(frozen=True)
class PrimitiveVocabulary:
    """The primitive list plus paraphrase expansions.

    Immutable after construction; safe to share across threads.
    """

    primitives: tuple[MotionPrimitive, ...]
    synonyms: dict[int, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        texts = [p.canonical_text for p in self.primitives]
        if len(set(texts)) != len(texts):
            raise ValueError("canonical texts must be unique")
        seen: dict[str, int] = {}
        for pid, phrases in self.synonyms.items():
            for phrase in phrases:
                if phrase in seen and seen[phrase] != pid:
                    raise ParaphraseCollisionError(
                        f"paraphrase {phrase!r} claimed by ids {seen[phrase]} and {pid}")
                seen[phrase] = pid

    def __len__(self) -> int:
        return len(self.primitives)

    def by_id(self, pid: int) -> MotionPrimitive:
        if not 0 <= pid < len(self.primitives):
            raise UnknownPrimitiveError(f"no primitive with id {pid}")
        return self.primitives[pid]

    def by_text(self, text: str) -> MotionPrimitive:
        """Resolve canonical text or any registered paraphrase."""
        for p in self.primitives:
            if p.canonical_text == text:
                return p
        for pid, phrases in self.synonyms.items():
            if text in phrases:
                return self.primitives[pid]
        raise UnknownPrimitiveError(f"no primitive for text {text!r}")

    def lookup(self, text: str) -> LowLevelAction:
        return primitive_to_action(self.by_text(text))


_ACTIONS: tuple[LowLevelAction, ...] = tuple(
    LowLevelAction(*vec) for _, vec in _TABLE)
_PRIMITIVES: tuple[MotionPrimitive, ...] = tuple(
    _primitive_from_row(i, text, vec) for i, (text, vec) in enumerate(_TABLE))
# (axis index, signed magnitude) -> primitive, for the dominant-axis mapping
_BY_AXIS_MAG: dict[tuple[int, float], MotionPrimitive] = {
    (p.axis.value, p.magnitude): p for p in _PRIMITIVES if p.axis is not Axis.GRIPPER
}


def canonical_vocabulary() -> PrimitiveVocabulary:
    """The full motion vocabulary with its default paraphrase table applied."""
    return expand_paraphrases(
        PrimitiveVocabulary(primitives=_PRIMITIVES), default_synonym_table())


def bare_vocabulary() -> PrimitiveVocabulary:
    """The vocabulary without any paraphrases."""
    return PrimitiveVocabulary(primitives=_PRIMITIVES)


def primitive_to_action(p: MotionPrimitive) -> LowLevelAction:
    """Exact table row for a canonical primitive."""
    if not 0 <= p.id < len(_ACTIONS):
        raise UnknownPrimitiveError(f"no primitive with id {p.id}")
    return _ACTIONS[p.id]


def _snap(value: float, granularities) -> float:
    """Nearest granularity by absolute difference; ties go to the smaller one."""
    mag = abs(value)
    best = granularities[0]
    for g in granularities[1:]:
        if abs(mag - g) < abs(mag - best):
            best = g
    return best if value >= 0 else -best


def action_to_primitive(a: LowLevelAction) -> MotionPrimitive:
    """Map any action onto the vocabulary via its dominant axis.

    The gripper command wins outright when present; otherwise the axis with
    the largest absolute delta is snapped to its nearest granularity. Axis
    ties resolve in slot order (x, y, z, roll, pitch, yaw, gripper rotation).
    """
    if a.grip_cmd >= 0.0:
        return _PRIMITIVES[57] if a.grip_cmd >= 0.5 else _PRIMITIVES[56]
    deltas = (a.dx, a.dy, a.dz, a.droll, a.dpitch, a.dyaw, a.dgrip_rot)
    mags = [abs(v) for v in deltas]
    peak = max(mags)
    if peak == 0.0:
        raise NoMotionError("all deltas zero and gripper command is a no-op")
    axis_idx = mags.index(peak)  # first max = fixed-order tie break
    grans = POSITION_GRANULARITIES if axis_idx < 3 else ROTATION_GRANULARITIES
    snapped = _snap(deltas[axis_idx], grans)
    return _BY_AXIS_MAG[(axis_idx, snapped)]


def expand_paraphrases(vocab: PrimitiveVocabulary,
                       table: dict[int, list[str]]) -> PrimitiveVocabulary:
    """Merge a synonym table into the vocabulary.

    Every paraphrase must resolve to exactly one primitive id; a string
    claimed twice raises ParaphraseCollisionError.
    """
    for pid in table:
        vocab.by_id(pid)  # validates the key range
    merged: dict[int, tuple[str, ...]] = {k: v for k, v in vocab.synonyms.items()}
    for pid, phrases in table.items():
        existing = list(merged.get(pid, ()))
        for phrase in phrases:
            if phrase not in existing:
                existing.append(phrase)
        merged[pid] = tuple(existing)
    return PrimitiveVocabulary(primitives=vocab.primitives, synonyms=merged)


def default_synonym_table() -> dict[int, list[str]]:
    """Hand-written paraphrases, three per primitive.

    Kept deliberately small: the point is that several surface strings share
    one low-level action, not to cover natural language.
    """
    table: dict[int, list[str]] = {}
    for p in _PRIMITIVES:
        if p.axis is Axis.GRIPPER:
            continue
        if p.axis.value < 3:
            amount = p.granularity_label  # "5cm" etc.
            direction = {
                (Axis.X, 1): ("forward", "push arm forward {a}",
                              "advance the arm by {a}", "move ahead {a}"),
                (Axis.X, -1): ("back", "pull arm back {a}",
                               "move backward by {a}", "retreat {a}"),
                (Axis.Y, 1): ("left", "move left by {a}",
                              "shift the arm left {a}", "slide arm to the left {a}"),
                (Axis.Y, -1): ("right", "move right by {a}",
                               "shift the arm right {a}", "slide arm to the right {a}"),
                (Axis.Z, 1): ("up", "move upwards by {a}",
                              "lift the arm {a}", "move arm up {a}"),
                (Axis.Z, -1): ("down", "move arm down by {a}",
                               "descend {a}", "bring the arm down {a}"),
            }[(p.axis, 1 if p.magnitude > 0 else -1)]
            table[p.id] = [t.format(a=amount) for t in direction[1:]]
        else:
            deg = p.granularity_label.replace("deg", " degrees")
            sense = "clockwise" if p.magnitude > 0 else "counterclockwise"
            verb = {
                Axis.ROLL: ("roll the arm {d} {s}", "twist arm {d} {s}",
                            "rotate the roll axis {d} {s}"),
                Axis.PITCH: ("pitch the arm {w} by {d}", "tilt the arm {w} {d}",
                             "angle the arm {w} by {d}"),
                Axis.YAW: ("yaw the arm {d} {s}", "swing arm {d} {s}",
                           "turn the arm {d} {s}"),
                Axis.GRIP_ROT: ("twist gripper {d} {s}", "turn the gripper {d} {s}",
                                "spin the gripper {d} {s}"),
            }[p.axis]
            way = "up" if (p.axis is Axis.PITCH and p.magnitude < 0) else "down"
            table[p.id] = [t.format(d=deg, s=sense, w=way) for t in verb]
    table[56] = ["close gripper", "grip now", "clamp the gripper shut"]
    table[57] = ["open gripper", "release the grip", "let go"]
    return table


def action_token_vocabulary(vocab: PrimitiveVocabulary) -> PrimitiveVocabulary:
    """Opaque-token variant: every primitive text becomes an isolated token.

    Paraphrase lists are dropped, so no two entries share any text signal.
    Tokens whose hash bucket collides with an earlier token are re-minted so
    the hashed token sets stay pairwise disjoint.
    """
    from .encoders import token_buckets

    used: set[int] = set()
    prims = []
    for p in vocab.primitives:
        stem = f"tok_{p.id:02d}"
        candidate = stem
        salt = 0
        while True:
            buckets = set(token_buckets(candidate))
            if not (buckets & used):
                used |= buckets
                break
            salt += 1
            candidate = f"{stem}_{chr(ord('a') + salt - 1)}"
        prims.append(replace(p, canonical_text=candidate))
    return PrimitiveVocabulary(primitives=tuple(prims), synonyms={})


def save_vocabulary(vocab: PrimitiveVocabulary, path) -> None:
    """Versioned text dump: one record per primitive."""
    lines = [f"langarm-vocabulary v{VOCABULARY_VERSION}"]
    for p in vocab.primitives:
        vec = primitive_to_action(p).vector()
        nums = ",".join(repr(float(v)) for v in vec)
        phrases = ";".join(vocab.synonyms.get(p.id, ()))
        lines.append(f"{p.id}|{p.canonical_text}|{nums}|{phrases}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_vocabulary(path) -> PrimitiveVocabulary:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("langarm-vocabulary v"):
        raise ValueError("not a vocabulary file")
    version = lines[0].split("v")[-1]
    if version != str(VOCABULARY_VERSION):
        raise ValueError(f"unsupported vocabulary version {version!r}")
    prims = []
    synonyms: dict[int, tuple[str, ...]] = {}
    for ln in lines[1:]:
        if not ln:
            continue
        pid_s, text, nums, phrases = ln.split("|")
        pid = int(pid_s)
        vec = tuple(float(v) for v in nums.split(","))
        prims.append(_primitive_from_row(pid, text, vec))
        if phrases:
            synonyms[pid] = tuple(phrases.split(";"))
    return PrimitiveVocabulary(primitives=tuple(prims), synonyms=synonyms)
