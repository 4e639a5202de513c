"""Deterministic kinematic tabletop world.

The gripper is a point pose inside a fixed workspace box; objects are flat
shapes on the table plane. Actions integrate directly into the pose (no
dynamics), closing the gripper near the table grabs the nearest object in
reach, and rendering produces a 64x64 top-down raster that is a pure
function of the state. Everything is a value: applying an action returns a
new state and never mutates the old one.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .actions import LowLevelAction

WORKSPACE = {"x": (0.0, 0.8), "y": (-0.4, 0.4), "z": (0.0, 0.6)}
GRASP_RADIUS = 0.03
GRASP_MAX_Z = 0.05
IMAGE_SIDE = 64
PIXELS_PER_METER = IMAGE_SIDE / (WORKSPACE["x"][1] - WORKSPACE["x"][0])

TABLE_COLOR = (205, 185, 150)

HOME_POSE = dict(x=0.4, y=0.0, z=0.04, roll=0.0, pitch=0.0, yaw=0.0,
                 grip_rot=0.0, open=True)


class PlacementError(RuntimeError):
    """Object layout could not be sampled without overlap."""


class UnknownPredicateError(KeyError):
    """Task references a success predicate that is not registered."""


def _wrap_angle(theta: float) -> float:
    w = math.remainder(theta, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


def _clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


@dataclass(frozen=True)
class GripperPose:
    x: float
    y: float
    z: float
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0
    grip_rot: float = 0.0
    open: bool = True


@dataclass(frozen=True)
class SceneObject:
    name: str
    shape: str           # disk | block | bowl
    color: tuple[int, int, int]
    position: tuple[float, float]
    radius: float
    held: bool = False


@dataclass(frozen=True)
class ObjectSpec:
    """Placement recipe for one object in a task layout."""

    name: str
    shape: str
    color: tuple[int, int, int]
    radius: float
    zone: tuple[tuple[float, float], tuple[float, float]] = ((0.15, 0.65), (-0.3, 0.3))
    start_held: bool = False


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    instruction_template: str     # may contain <obj> and <goal>
    predicate: str                # registered success-predicate id
    objects: tuple[ObjectSpec, ...]
    target: str                   # object name <obj> resolves to
    goal: str | None = None       # object name <goal> resolves to
    max_steps: int = 30

    def instruction(self) -> str:
        text = self.instruction_template.replace("<obj>", self.target)
        if self.goal is not None:
            text = text.replace("<goal>", self.goal)
        if "<" in text:
            raise ValueError(f"unresolved placeholder in {text!r}")
        return text


@dataclass(frozen=True)
class WorldState:
    pose: GripperPose
    objects: tuple[SceneObject, ...]
    step_count: int
    rng_seed: int

    def object(self, name: str) -> SceneObject:
        for obj in self.objects:
            if obj.name == name:
                return obj
        raise KeyError(f"no object named {name!r}")

    def held_object(self) -> SceneObject | None:
        for obj in self.objects:
            if obj.held:
                return obj
        return None


@dataclass(frozen=True, eq=False)
class Observation:
    pixels: np.ndarray  # (64, 64, 3) uint8, row-major

    def __eq__(self, other):
        return isinstance(other, Observation) and bool(
            np.array_equal(self.pixels, other.pixels))

    def __hash__(self):
        return hash(self.pixels.tobytes())


def _seed_for(task: TaskSpec, seed: int) -> np.random.Generator:
    # fold the task id into the stream so tasks do not share layouts
    tag = sum(ord(c) * (i + 1) for i, c in enumerate(task.task_id)) % (2**31)
    return np.random.default_rng((seed, tag))


def init_world(task: TaskSpec, seed: int) -> WorldState:
    """Sample the task layout; deterministic per (task, seed)."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    rng = _seed_for(task, seed)
    pose = GripperPose(**HOME_POSE)
    placed: list[SceneObject] = []
    for spec in task.objects:
        if spec.start_held:
            placed.append(SceneObject(spec.name, spec.shape, spec.color,
                                      (pose.x, pose.y), spec.radius, held=True))
            continue
        ok = False
        for _ in range(100):
            (x_lo, x_hi), (y_lo, y_hi) = spec.zone
            x = float(rng.uniform(x_lo, x_hi))
            y = float(rng.uniform(y_lo, y_hi))
            if all(math.hypot(x - o.position[0], y - o.position[1])
                   >= spec.radius + o.radius + 0.04
                   for o in placed if not o.held):
                placed.append(SceneObject(spec.name, spec.shape, spec.color,
                                          (x, y), spec.radius))
                ok = True
                break
        if not ok:
            raise PlacementError(f"could not place {spec.name!r} without overlap")
    held = [o for o in placed if o.held]
    if len(held) > 1:
        raise ValueError("at most one object may start held")
    if held:
        pose = replace(pose, open=False)
    return WorldState(pose=pose, objects=tuple(placed), step_count=0, rng_seed=seed)


def apply_action(state: WorldState, action: LowLevelAction) -> WorldState:
    """Integrate one action: move, clamp, wrap, then resolve the gripper."""
    p = state.pose
    pose = GripperPose(
        x=_clamp(p.x + action.dx, *WORKSPACE["x"]),
        y=_clamp(p.y + action.dy, *WORKSPACE["y"]),
        z=_clamp(p.z + action.dz, *WORKSPACE["z"]),
        roll=_wrap_angle(p.roll + action.droll),
        pitch=_wrap_angle(p.pitch + action.dpitch),
        yaw=_wrap_angle(p.yaw + action.dyaw),
        grip_rot=_wrap_angle(p.grip_rot + action.dgrip_rot),
        open=p.open,
    )
    objects = list(state.objects)

    if action.grip_cmd >= 0.5:  # open
        pose = replace(pose, open=True)
        objects = [replace(o, held=False) if o.held else o for o in objects]
    elif action.grip_cmd >= 0.0:  # close
        pose = replace(pose, open=False)
        if not any(o.held for o in objects) and pose.z <= GRASP_MAX_Z:
            best = None
            best_d = GRASP_RADIUS
            for idx, o in enumerate(objects):
                d = math.hypot(pose.x - o.position[0], pose.y - o.position[1])
                if d <= best_d:
                    best, best_d = idx, d
            if best is not None:
                objects[best] = replace(objects[best], held=True)

    objects = [replace(o, position=(pose.x, pose.y)) if o.held else o
               for o in objects]
    return WorldState(pose=pose, objects=tuple(objects),
                      step_count=state.step_count + 1, rng_seed=state.rng_seed)


# --- rendering ---------------------------------------------------------------

def _to_pixel(x: float, y: float) -> tuple[int, int]:
    row = int((WORKSPACE["x"][1] - x) * PIXELS_PER_METER)
    col = int((WORKSPACE["y"][1] - y) * PIXELS_PER_METER)
    return (min(max(row, 0), IMAGE_SIDE - 1), min(max(col, 0), IMAGE_SIDE - 1))


_ROWS, _COLS = np.mgrid[0:IMAGE_SIDE, 0:IMAGE_SIDE]


def _paint_disk(img, row, col, radius_px, color):
    mask = (_ROWS - row) ** 2 + (_COLS - col) ** 2 <= radius_px ** 2
    img[mask] = color


def _paint_square(img, row, col, half_px, color):
    r0, r1 = max(row - half_px, 0), min(row + half_px + 1, IMAGE_SIDE)
    c0, c1 = max(col - half_px, 0), min(col + half_px + 1, IMAGE_SIDE)
    img[r0:r1, c0:c1] = color


def _paint_square_outline(img, row, col, half_px, color):
    r0, r1 = max(row - half_px, 0), min(row + half_px, IMAGE_SIDE - 1)
    c0, c1 = max(col - half_px, 0), min(col + half_px, IMAGE_SIDE - 1)
    img[r0, c0:c1 + 1] = color
    img[r1, c0:c1 + 1] = color
    img[r0:r1 + 1, c0] = color
    img[r0:r1 + 1, c1] = color


MARKER_COLOR = (0, 0, 0)
STATUS_OPEN_COLOR = (255, 255, 255)
STATUS_CLOSED_COLOR = (60, 60, 60)
TICK_COLOR = (200, 30, 160)
HALO_COLOR = (255, 150, 0)
BEARING_COLOR = (90, 55, 25)
_MIN_OBJECT_PX = 3


def render(state: WorldState) -> Observation:
    """Top-down raster. Objects draw in list order as filled shapes (with a
    minimum on-screen size so small props stay visible); the gripper is a
    filled black square whose half-size encodes height and whose protruding
    magenta tick encodes gripper rotation. A fixed corner light shows the
    open (white) or closed (dark) finger state, so the marker itself keeps
    one color and its position stays readable."""
    img = np.empty((IMAGE_SIDE, IMAGE_SIDE, 3), dtype=np.uint8)
    img[:] = TABLE_COLOR
    # bearing lines first, as an underlay: gripper to every table object
    g_row, g_col = _to_pixel(state.pose.x, state.pose.y)
    for obj in state.objects:
        if obj.held:
            continue
        o_row, o_col = _to_pixel(*obj.position)
        steps = max(abs(o_row - g_row), abs(o_col - g_col), 1)
        for t in range(steps + 1):
            rr = g_row + int(round((o_row - g_row) * t / steps))
            cc = g_col + int(round((o_col - g_col) * t / steps))
            img[rr, cc] = BEARING_COLOR
    for obj in state.objects:
        row, col = _to_pixel(*obj.position)
        radius_px = max(int(round(obj.radius * PIXELS_PER_METER)), _MIN_OBJECT_PX)
        if obj.shape == "disk":
            _paint_disk(img, row, col, radius_px, obj.color)
        elif obj.shape == "block":
            _paint_square(img, row, col, radius_px, obj.color)
        elif obj.shape == "bowl":
            radius_px = max(radius_px, _MIN_OBJECT_PX + 1)
            _paint_disk(img, row, col, radius_px, obj.color)
            inner = (_ROWS - row) ** 2 + (_COLS - col) ** 2 <= max(radius_px - 2, 0) ** 2
            img[inner] = (int(obj.color[0] * 0.5), int(obj.color[1] * 0.5),
                          int(obj.color[2] * 0.5))
        else:
            raise ValueError(f"unknown shape {obj.shape!r}")

    pose = state.pose
    row, col = _to_pixel(pose.x, pose.y)
    half = 1 + int(round(pose.z * 20.0))
    aligned = any(
        math.hypot(pose.x - o.position[0], pose.y - o.position[1]) <= GRASP_RADIUS
        for o in state.objects if not o.held)
    if aligned:  # hover halo: the gripper is over something on the table
        _paint_square_outline(img, row, col, half + 2, HALO_COLOR)
        _paint_square_outline(img, row, col, half + 3, HALO_COLOR)
    _paint_square(img, row, col, half, MARKER_COLOR)
    # rotation tick pokes out beyond the square
    for step in range(half + 3):
        tr = row - int(round(step * math.cos(pose.grip_rot)))
        tc = col + int(round(step * math.sin(pose.grip_rot)))
        if 0 <= tr < IMAGE_SIDE and 0 <= tc < IMAGE_SIDE:
            img[tr, tc] = TICK_COLOR
    # side gauge: column fill mirrors height; it glows warm while hovering,
    # cold otherwise (the marker size encodes height too, but a 1 px size
    # change is hard to read back off patch means)
    fill = int(round(pose.z / WORKSPACE["z"][1] * IMAGE_SIDE))
    if fill > 0:
        img[IMAGE_SIDE - fill:, 62:64] = HALO_COLOR if aligned else (30, 90, 220)
    img[0:4, 0:4] = STATUS_OPEN_COLOR if pose.open else STATUS_CLOSED_COLOR
    return Observation(pixels=img)


def observation_png(obs: Observation) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(obs.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_to_observation(data: bytes) -> Observation:
    from PIL import Image

    img = Image.open(io.BytesIO(data)).convert("RGB")
    arr = np.asarray(img, dtype=np.uint8)
    if arr.shape != (IMAGE_SIDE, IMAGE_SIDE, 3):
        raise ValueError(f"bad raster shape {arr.shape}")
    return Observation(pixels=arr)


def snapshot(state: WorldState) -> str:
    """Human-readable structured text record of the full state."""
    lines = [
        f"step={state.step_count} seed={state.rng_seed}",
        ("pose x={x:.4f} y={y:.4f} z={z:.4f} roll={roll:.4f} pitch={pitch:.4f} "
         "yaw={yaw:.4f} grip_rot={grip_rot:.4f} open={open}").format(
            x=state.pose.x, y=state.pose.y, z=state.pose.z,
            roll=state.pose.roll, pitch=state.pose.pitch, yaw=state.pose.yaw,
            grip_rot=state.pose.grip_rot, open=state.pose.open),
    ]
    for o in state.objects:
        lines.append(f"object {o.name} shape={o.shape} x={o.position[0]:.4f} "
                     f"y={o.position[1]:.4f} r={o.radius:.3f} held={o.held}")
    return "\n".join(lines)


# --- success predicates -------------------------------------------------------

def _point_success(state: WorldState, task: TaskSpec) -> bool:
    t = state.object(task.target)
    return math.hypot(state.pose.x - t.position[0],
                      state.pose.y - t.position[1]) <= 0.04


def _pick_success(state: WorldState, task: TaskSpec) -> bool:
    return state.object(task.target).held and state.pose.z >= 0.15


def _place_success(state: WorldState, task: TaskSpec) -> bool:
    t = state.object(task.target)
    g = state.object(task.goal)
    return (not t.held) and math.hypot(t.position[0] - g.position[0],
                                       t.position[1] - g.position[1]) <= 0.05


PREDICATES = {
    "point": _point_success,
    "pick": _pick_success,
    "place": _place_success,
}


def check_success(state: WorldState, task: TaskSpec) -> bool:
    if task.predicate not in PREDICATES:
        raise UnknownPredicateError(f"unknown success predicate {task.predicate!r}")
    return PREDICATES[task.predicate](state, task)


# --- stock tasks --------------------------------------------------------------

def make_point_task() -> TaskSpec:
    return TaskSpec(
        task_id="point",
        instruction_template="point at the <obj>",
        predicate="point",
        objects=(
            ObjectSpec("red disk", "disk", (230, 30, 30), 0.06),
        ),
        target="red disk",
        max_steps=120,
    )


def make_pick_task() -> TaskSpec:
    return TaskSpec(
        task_id="pick",
        instruction_template="pick the <obj>",
        predicate="pick",
        objects=(
            ObjectSpec("green disk", "disk", (30, 200, 50), 0.04,
                       zone=((0.33, 0.47), (-0.07, 0.07))),
        ),
        target="green disk",
        max_steps=120,
    )


def make_place_task() -> TaskSpec:
    return TaskSpec(
        task_id="place",
        instruction_template="place the <obj> in the <goal>",
        predicate="place",
        objects=(
            ObjectSpec("red disk", "disk", (230, 30, 30), 0.02, start_held=True),
            ObjectSpec("blue bowl", "bowl", (40, 90, 230), 0.08,
                       zone=((0.37, 0.52), (-0.1, 0.1))),
        ),
        target="red disk",
        goal="blue bowl",
        max_steps=120,
    )


STOCK_TASKS = {
    "point": make_point_task,
    "pick": make_pick_task,
    "place": make_place_task,
}


def get_task(task_id: str) -> TaskSpec:
    if task_id not in STOCK_TASKS:
        raise KeyError(f"unknown task {task_id!r}; stock tasks: {sorted(STOCK_TASKS)}")
    return STOCK_TASKS[task_id]()
