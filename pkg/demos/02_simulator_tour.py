# The kinematic tabletop world: pose integration, grasping, top-down
# rendering and task predicates. Everything is a value; applying an action
# returns a new state.

from langarm.actions import LowLevelAction
from langarm.expert import expert_action
from langarm.world import (
    apply_action,
    check_success,
    get_task,
    init_world,
    observation_png,
    render,
    snapshot,
)

task = get_task("pick")
state = init_world(task, seed=7)
print(task.instruction())
print(snapshot(state), "\n")

# drive with raw actions: move, close, lift
state = apply_action(state, LowLevelAction(dx=0.05))
state = apply_action(state, LowLevelAction(grip_cmd=0.0))   # close (may miss)
print("holding after blind close:", state.held_object() is not None)

# the scripted expert knows the scene; let it finish the job
state = init_world(task, seed=7)
steps = 0
while (action := expert_action(state, task)) is not None:
    state = apply_action(state, action)
    steps += 1
print(f"expert solved '{task.task_id}' in {steps} steps:",
      check_success(state, task))

# observations are 64x64 rasters, exportable as PNG
obs = render(state)
png = observation_png(obs)
with open("pick_final.png", "wb") as fh:
    fh.write(png)
print(f"wrote pick_final.png ({len(png)} bytes); raster {obs.pixels.shape}")
