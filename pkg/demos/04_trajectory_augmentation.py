# Stochastic trajectory augmentation: waypoint segmentation, resampled
# increments that conserve each segment's cumulative action, and
# deviation/recovery pairs (only the recovery trains).

import numpy as np

from langarm.augment import (
    augment_trajectory,
    cumulative_action,
    diversify_segment,
    find_waypoints,
    make_recovery_pair,
)
from langarm.expert import collect_demonstration
from langarm.teleop import Source
from langarm.world import get_task

task = get_task("pick")
demo = collect_demonstration(task, seed=5)
print(f"demo: {len(demo.transitions)} steps, success={demo.success}")
for wp in find_waypoints(demo):
    print(f"  waypoint @ {wp.index}: {wp.kind.value}")

total = cumulative_action(demo, 0, len(demo.transitions))
print("cumulative action over the whole demo:", np.round(total, 3))

# the diversification of a 7 cm move: random steps from {1, 5, 10} cm that
# sum back exactly
rng = np.random.default_rng(0)
for _ in range(3):
    seq = diversify_segment(np.array([0.07, 0, 0, 0, 0, 0, 0.0]), rng)
    print("7cm decomposition:", [round(a.dx, 2) for a in seq])

# a deviation near the waypoint and its exact negation
dev, rec = make_recovery_pair(np.array([0.02, 0.0, 0.0]), rng)
print(f"deviation {np.round(dev.vector()[:3], 2)} "
      f"-> recovery {np.round(rec.vector()[:3], 2)}")

augmented = augment_trajectory(demo, n_aug=3, task=task, rng=rng)
for i, aug in enumerate(augmented):
    sources = [tr.source for tr in aug.transitions]
    print(f"augmentation {i}: {len(aug.transitions)} trainable transitions "
          f"({sources.count(Source.STA_RECOVERY)} recoveries), "
          f"{len(aug.replay_actions) - len(aug.transitions)} hidden deviations")
