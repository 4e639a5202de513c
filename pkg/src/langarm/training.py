"""Mini-batch training of the dual encoder on recorded transitions.

Plain SGD with momentum, fixed shuffle and reduction order per seed, so a
run is bit-reproducible. Checkpoints bundle the weights, the config and the
per-epoch loss trace into one npz file.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .encoders import (
    Batch,
    BatchItem,
    DEFAULT_DIM,
    EncoderParams,
    cil_grad,
    init_params,
)
from .teleop import Transition

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    seed: int = 0
    batch_size: int = 8
    learning_rate: float = 2.0
    momentum: float = 0.9
    epochs: int = 100
    dim: int = DEFAULT_DIM


@dataclass
class TrainResult:
    params: EncoderParams
    loss_trace: list[float]
    config: TrainConfig


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


def batch_from_transitions(transitions: list[Transition]) -> Batch:
    return Batch(items=[
        BatchItem(pixels=tr.observation.pixels, instruction=tr.instruction,
                  supervision=tr.supervision, action=tr.action)
        for tr in transitions
    ])


def train(dataset: list[Transition], config: TrainConfig | None = None) -> TrainResult:
    """SGD with momentum over shuffled mini-batches; deterministic per seed
    (fixed shuffle and reduction order)."""
    config = config or TrainConfig()
    if not dataset:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    params = init_params(config.dim, seed=config.seed)
    velocity = params.zeros_like()
    trace: list[float] = []
    n = len(dataset)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for b_idx, start in enumerate(range(0, n, config.batch_size)):
            chunk = [dataset[i] for i in order[start:start + config.batch_size]]
            batch = batch_from_transitions(chunk)
            try:
                loss, grads = cil_grad(batch, params)
            except FloatingPointError as err:
                raise TrainingDiverged(epoch, b_idx) from err
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, b_idx)
            for vel, par, grad in zip(velocity.arrays(), params.arrays(),
                                      grads.arrays()):
                vel *= config.momentum
                vel -= config.learning_rate * grad
                par += vel
            epoch_losses.append(loss)
        trace.append(float(np.mean(epoch_losses)))
    logger.info("trained %d epochs on %d transitions; loss %.4f -> %.4f",
                config.epochs, len(dataset), trace[0], trace[-1])
    return TrainResult(params=params, loss_trace=trace, config=config)


def save_checkpoint(result: TrainResult, path) -> None:
    meta = {"version": CHECKPOINT_VERSION, "config": asdict(result.config)}
    np.savez_compressed(
        path,
        token_emb=result.params.token_emb,
        text_w=result.params.text_w,
        text_b=result.params.text_b,
        image_w=result.params.image_w,
        image_b=result.params.image_b,
        loss_trace=np.asarray(result.loss_trace),
        meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
    )


def load_checkpoint(path) -> TrainResult:
    data = np.load(path)
    meta = json.loads(bytes(data["meta"]).decode("utf-8"))
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
    params = EncoderParams(
        token_emb=data["token_emb"], text_w=data["text_w"], text_b=data["text_b"],
        image_w=data["image_w"], image_b=data["image_b"])
    return TrainResult(params=params,
                       loss_trace=[float(v) for v in data["loss_trace"]],
                       config=TrainConfig(**meta["config"]))
