"""Dataset assembly, per-axis action quantization, and embedding export.

The quantizer is a 1-D k-means variant with an L1 objective (centers are
cluster medians), because the quality metric is L1 distance. Sweeps over k
use nested initialization (previous centers plus a worst-cluster split) so
distortion is nonincreasing in k by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoders import EncoderParams, encode_text
from .teleop import Episode, Source, Transition, load_episode

logger = logging.getLogger(__name__)


# --- dataset assembly ----------------------------------------------------------

def _episode_sort_key(episode: Episode, path: str) -> tuple:
    teleop_only = all(tr.source is Source.TELEOP for tr in episode.transitions)
    return (episode.task_id, episode.seed, 0 if teleop_only else 1, path)


def load_episode_dirs(episode_dirs) -> list[tuple[Episode, str]]:
    pairs = []
    for d in episode_dirs:
        for path in sorted(Path(d).glob("*.jsonl")):
            pairs.append((load_episode(path), str(path)))
    return pairs


def build_dataset(episode_dirs, include_sta: bool = True,
                  few_shot_n: int | None = None,
                  episodes: list[Episode] | None = None) -> list[Transition]:
    """Flatten episodes into an order-stable transition list.

    include_sta=False keeps only teleoperated transitions. few_shot_n keeps
    the first n demonstration seeds per task (in seed order) together with
    the augmentations derived from those seeds.
    """
    if episodes is not None:
        pairs = [(ep, f"mem-{i:06d}") for i, ep in enumerate(episodes)]
    else:
        pairs = load_episode_dirs(episode_dirs)
    pairs.sort(key=lambda pe: _episode_sort_key(*pe))

    if few_shot_n is not None:
        keep: dict[str, list[int]] = {}
        for ep, _ in pairs:
            if all(tr.source is Source.TELEOP for tr in ep.transitions):
                seeds = keep.setdefault(ep.task_id, [])
                if ep.seed not in seeds:
                    seeds.append(ep.seed)
        allowed = {task: set(sorted(seeds)[:few_shot_n])
                   for task, seeds in keep.items()}
        pairs = [(ep, p) for ep, p in pairs
                 if ep.seed in allowed.get(ep.task_id, set())]

    out: list[Transition] = []
    for ep, _ in pairs:
        for tr in ep.transitions:
            if not include_sta and tr.source is not Source.TELEOP:
                continue
            out.append(tr)
    if not out:
        raise ValueError("no transitions left after filtering")
    return out


# --- per-axis L1 k-means ---------------------------------------------------------

@dataclass
class QuantizerModel:
    """Per-axis cluster centers for the seven motion slots."""

    centers: list[np.ndarray]      # 7 arrays, each sorted ascending
    k: int
    seed: int
    distortion: np.ndarray         # (7,) training L1 distortion per axis

    def __post_init__(self):
        for c in self.centers:
            if len(c) < 1:
                raise ValueError("every axis needs at least one center")
            if np.any(np.diff(c) < 0):
                raise ValueError("centers must be sorted ascending")


def _assign(values: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return np.abs(values[:, None] - centers[None, :]).argmin(axis=1)


def _l1_distortion(values: np.ndarray, centers: np.ndarray) -> float:
    return float(np.abs(values[:, None] - centers[None, :]).min(axis=1).mean())


def _lloyd_l1(values: np.ndarray, centers: np.ndarray,
              max_iter: int = 200, tol: float = 1e-9) -> np.ndarray:
    centers = np.sort(np.asarray(centers, dtype=float))
    for _ in range(max_iter):
        labels = _assign(values, centers)
        new = centers.copy()
        for idx in range(len(centers)):
            members = values[labels == idx]
            if len(members):
                new[idx] = np.median(members)
        new = np.sort(new)
        if np.max(np.abs(new - centers)) < tol:
            return new
        centers = new
    return centers


def fit_axis_kmeans(values, k: int, seed: int = 0,
                    init_centers=None) -> np.ndarray:
    """L1 k-means on one axis: Lloyd iterations with median updates.

    Default initialization is the best of five seeded restarts (by L1
    distortion) over random distinct values; an explicit init runs once.
    k = 1 returns the median outright, the L1-optimal single center.
    """
    values = np.asarray(list(values), dtype=float)
    if len(values) == 0:
        raise ValueError("no values to quantize")
    distinct = np.unique(values)
    if k > len(distinct):
        raise ValueError(f"k={k} exceeds the {len(distinct)} distinct values")
    if k == 1:
        return np.array([float(np.median(values))])
    if init_centers is not None:
        return _lloyd_l1(values, np.asarray(init_centers, dtype=float))
    best = None
    best_score = np.inf
    for restart in range(5):
        rng = np.random.default_rng((seed, restart))
        init = rng.choice(distinct, size=k, replace=False)
        centers = _lloyd_l1(values, init)
        score = _l1_distortion(values, centers)
        if score < best_score - 1e-15:
            best, best_score = centers, score
    return best


def _grow_one(values: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Add one center: the costliest member of the costliest cluster.

    Keeping every existing center means the new set's distortion can only
    drop; that is what makes the k-ladder monotone.
    """
    pool = np.setdiff1d(np.unique(values), centers)
    if len(pool) == 0:
        return centers
    labels = _assign(values, centers)
    costs = np.abs(values - centers[labels])
    order = np.argsort(-costs, kind="stable")
    for idx in order:
        candidate = values[idx]
        if candidate not in centers:
            return np.sort(np.append(centers, candidate))
    return np.sort(np.append(centers, pool[0]))


def nested_center_ladder(values, k: int, seed: int = 0) -> np.ndarray:
    """Centers for k grown from the median one split at a time, re-fitting
    after each growth; distortion is nonincreasing along the ladder and hits
    zero exactly when k reaches the distinct-value count."""
    values = np.asarray(list(values), dtype=float)
    distinct = np.unique(values)
    k = min(k, len(distinct))
    if k == len(distinct):
        return distinct.astype(float)
    centers = fit_axis_kmeans(values, 1, seed)
    while len(centers) < k:
        grown = _grow_one(values, centers)
        if len(grown) == len(centers):
            break
        refit = _lloyd_l1(values, grown)
        if _l1_distortion(values, refit) <= _l1_distortion(values, grown):
            centers = refit
        else:  # Lloyd cannot regress, but guard the monotone guarantee anyway
            centers = grown
    return centers


def fit_quantizer(transitions: list[Transition], k: int, seed: int = 0) -> QuantizerModel:
    """Nested-init per-axis fit; k is capped at each axis's distinct count."""
    matrix = np.stack([tr.action.vector()[:7] for tr in transitions])
    centers = []
    distortion = np.zeros(7)
    for axis in range(7):
        c = nested_center_ladder(matrix[:, axis], k, seed)
        centers.append(c)
        distortion[axis] = _l1_distortion(matrix[:, axis], c)
    return QuantizerModel(centers=centers, k=k, seed=seed, distortion=distortion)


def quantize_dataset(transitions: list[Transition], k: int, seed: int = 0
                     ) -> tuple[list[Transition], float, QuantizerModel]:
    """Replace every action component with its nearest per-axis center.

    Returns (quantized transitions, mean L1 distance original vs quantized,
    the fitted model).
    """
    from dataclasses import replace as dc_replace

    from .actions import LowLevelAction

    model = fit_quantizer(transitions, k, seed)
    out = []
    originals = np.zeros((len(transitions), 7))
    quantized = np.zeros((len(transitions), 7))
    for row, tr in enumerate(transitions):
        vec = tr.action.vector()
        quant = vec.copy()
        for axis in range(7):
            centers = model.centers[axis]
            quant[axis] = centers[np.abs(centers - vec[axis]).argmin()]
        originals[row] = vec[:7]
        quantized[row] = quant[:7]
        out.append(dc_replace(tr, action=LowLevelAction.from_vector(quant)))
    # per-axis means summed, so the k=1 value is bit-identical to the sum of
    # per-axis absolute deviations about the median
    mean_l1 = float(sum(np.abs(originals[:, axis] - quantized[:, axis]).mean()
                        for axis in range(7)))
    return out, mean_l1, model


def distortion_sweep(transitions: list[Transition], ks, seed: int = 0
                     ) -> list[tuple[int, float, np.ndarray]]:
    """(k, mean L1 distortion, per-axis distortion) for each k, nested init."""
    rows = []
    for k in sorted(ks):
        _, mean_l1, model = quantize_dataset(transitions, k, seed)
        rows.append((k, mean_l1, model.distortion.copy()))
    return rows


# --- embedding export ------------------------------------------------------------

def export_primitive_embeddings(params: EncoderParams, vocab) -> np.ndarray:
    """2-D coordinates for every primitive text: centered embeddings
    projected on the top two principal directions, with a deterministic sign
    convention (largest-magnitude loading positive)."""
    emb = np.stack([encode_text(p.canonical_text, params)
                    for p in vocab.primitives])
    centered = emb - emb.mean(axis=0, keepdims=True)
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    if svals[1] < 1e-12:
        logger.warning("embedding covariance is rank-deficient; projection "
                       "collapses onto fewer than two directions")
    components = vt[:2]
    for row in range(components.shape[0]):
        peak = np.argmax(np.abs(components[row]))
        if components[row, peak] < 0:
            components[row] = -components[row]
    return centered @ components.T


def write_distortion_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k,mean_l1," + ",".join(f"axis{i}_l1" for i in range(7)) + "\n")
        for k, mean_l1, per_axis in rows:
            fh.write(f"{k},{mean_l1!r}," + ",".join(repr(float(v)) for v in per_axis) + "\n")
