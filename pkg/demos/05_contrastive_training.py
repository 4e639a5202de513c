# Training the dual encoder: pairwise sigmoid loss over context/supervision
# cosines, positives defined by shared low-level actions, hand-derived
# gradients, SGD with momentum.

import numpy as np

from langarm.augment import augment_trajectory
from langarm.bench import BenchConfig, collect_corpus
from langarm.data import build_dataset, export_primitive_embeddings
from langarm.actions import canonical_vocabulary
from langarm.encoders import cil_grad, cil_loss, init_params
from langarm.training import (
    TrainConfig,
    batch_from_transitions,
    load_checkpoint,
    save_checkpoint,
    train,
)

config = BenchConfig(tasks=("pick",), demos_per_task=10, augmentations=3,
                     master_seed=0)
episodes = collect_corpus(config)
transitions = build_dataset([], episodes=episodes)
print(f"corpus: {len(episodes)} episodes, {len(transitions)} transitions")

# loss and analytic gradient on one mini-batch
params = init_params(seed=0)
batch = batch_from_transitions(transitions[:8])
loss, grads = cil_grad(batch, params)
print(f"initial batch loss {loss:.4f}; "
      f"gradient norm {np.linalg.norm(grads.flatten()):.4f}")

result = train(transitions, TrainConfig())
print(f"trained {result.config.epochs} epochs: "
      f"loss {result.loss_trace[0]:.4f} -> {result.loss_trace[-1]:.4f}")

save_checkpoint(result, "pick_policy.npz")
reloaded = load_checkpoint("pick_policy.npz")
print("checkpoint round-trips:",
      np.array_equal(reloaded.params.token_emb, result.params.token_emb))

# 2-D view of the 58 primitive embeddings (granularity families cluster)
coords = export_primitive_embeddings(result.params, canonical_vocabulary())
print("embedding projection shape:", coords.shape)
np.savetxt("primitive_embeddings_2d.csv", coords, delimiter=",",
           header="x,y", comments="")
print("wrote primitive_embeddings_2d.csv")
