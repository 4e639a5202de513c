# The experiment harness: augmentation ablation, intervention sweep, latency
# probe, and the per-axis k-means distortion trend.

import numpy as np

from langarm.bench import (
    BenchConfig,
    ablation_experiment,
    collect_corpus,
    demo_seeds_of,
    intervention_sweep,
    latency_probe,
    monotone,
    weakened_checkpoint,
)
from langarm.data import build_dataset, distortion_sweep
from langarm.encoders import init_params
from langarm.training import TrainConfig

# full (with augmentation) vs passive (teleop only), perturbed starts
report = ablation_experiment(master_seed=0, rollouts_per_task=20)
print("augmentation ablation, success over 20 perturbed-start rollouts/task:")
for task_id, rates in report.per_task.items():
    print(f"  {task_id:<6} full {rates['full']:.2f}  passive {rates['passive']:.2f}")
print(f"aggregate: full {report.aggregate_full:.3f}, "
      f"passive {report.aggregate_passive:.3f}, gap {report.aggregate_gap:+.3f}\n")

# human corrections: a weakened checkpoint plus 0/2/4 expert corrections
config = BenchConfig(master_seed=0, tasks=("pick",))
episodes = collect_corpus(config)
weak = weakened_checkpoint(episodes, TrainConfig())
rates = intervention_sweep(weak, "pick", budgets=(0, 2, 4),
                           seeds=demo_seeds_of(episodes)["pick"])
print(f"intervention sweep on pick: {rates} (monotone={monotone(rates)})\n")

# runtime probe: constant two encoder invocations per step, warm cache
probe = latency_probe(init_params(seed=0), steps=300)
print(f"latency probe: {probe['encoder_invocations_per_step']:.0f} encoder "
      f"invocations/step, {probe['steps_per_second']:.0f} steps/s\n")

# discretization error falls as the per-axis codebook grows
transitions = build_dataset([], episodes=episodes)
print("per-axis k-means distortion (nested initialization):")
for k, mean_l1, _ in distortion_sweep(transitions, ks=(1, 2, 4, 8, 16), seed=0):
    print(f"  k={k:<3d} mean L1 {mean_l1:.5f}")
