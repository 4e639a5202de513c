"""Tiny dual encoder and the contrastive imitation loss.

Text goes through a hash-bag embedding (FNV-1a token hashing into a fixed
bucket table, mean pooling, linear head). Images go through per-patch
channel means and a linear projection. The context for a control step is
the normalized sum of the raw image embedding and the raw embedding of the
prompted instruction; supervision strings embed on their own. Training
maximizes sigmoid(cosine) for pairs that share a low-level action and
minimizes it otherwise.

All gradients here are hand-derived and checked against central finite
differences in the test suite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .actions import LowLevelAction

logger = logging.getLogger(__name__)

VOCAB_BUCKETS = 1024
PATCH = 8
IMAGE_SIDE = 64
GRID = IMAGE_SIDE // PATCH
PATCH_FEATURES = GRID * GRID * 3  # 192
DEFAULT_DIM = 64

INSTRUCTION_PROMPT = (
    "What motion should the robot arm perform to complete the instruction "
    "{instruction}?"
)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def _fnv1a(token: str) -> int:
    h = _FNV_OFFSET
    for b in token.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def tokenize(text: str) -> list[str]:
    """Lowercase word split; punctuation separates, underscores do not."""
    out = []
    word = []
    for ch in text.lower():
        if ch.isalnum() or ch == "_":
            word.append(ch)
        elif word:
            out.append("".join(word))
            word = []
    if word:
        out.append("".join(word))
    return out


@lru_cache(maxsize=65536)
def _buckets_cached(text: str) -> tuple[int, ...]:
    return tuple(_fnv1a(tok) % VOCAB_BUCKETS for tok in tokenize(text))


def token_buckets(text: str) -> list[int]:
    return list(_buckets_cached(text))


@dataclass
class EncoderParams:
    """All trainable weights. Also doubles as the gradient container, since
    gradients are congruent to the parameters."""

    token_emb: np.ndarray   # (VOCAB_BUCKETS, d)
    text_w: np.ndarray      # (d, d)
    text_b: np.ndarray      # (d,)
    image_w: np.ndarray     # (PATCH_FEATURES, d)
    image_b: np.ndarray     # (d,)

    @property
    def dim(self) -> int:
        return self.text_b.shape[0]

    def copy(self) -> "EncoderParams":
        return EncoderParams(*(a.copy() for a in self.arrays()))

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.token_emb, self.text_w, self.text_b,
                self.image_w, self.image_b)

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def unflatten(self, flat: np.ndarray) -> "EncoderParams":
        out = []
        offset = 0
        for a in self.arrays():
            out.append(flat[offset:offset + a.size].reshape(a.shape).copy())
            offset += a.size
        return EncoderParams(*out)

    def zeros_like(self) -> "EncoderParams":
        return EncoderParams(*(np.zeros_like(a) for a in self.arrays()))

    def check_finite(self) -> None:
        for name, a in zip(("token_emb", "text_w", "text_b", "image_w", "image_b"),
                           self.arrays()):
            if not np.all(np.isfinite(a)):
                raise FloatingPointError(f"non-finite values in {name}")


def init_params(dim: int = DEFAULT_DIM, seed: int = 0) -> EncoderParams:
    # the image head starts an order of magnitude hotter than the text head:
    # centered patch features are small (~0.1) against O(1) text bags, and the
    # context sum would otherwise start blind to the scene
    rng = np.random.default_rng(seed)
    scale = 0.1
    return EncoderParams(
        token_emb=rng.normal(0.0, scale, (VOCAB_BUCKETS, dim)),
        text_w=rng.normal(0.0, scale, (dim, dim)) + np.eye(dim) * 0.5,
        text_b=rng.normal(0.0, scale, dim),
        image_w=rng.normal(0.0, 10.0 * scale, (PATCH_FEATURES, dim)),
        image_b=rng.normal(0.0, scale, dim),
    )


@lru_cache(maxsize=4096)
def _image_features_cached(data: bytes) -> np.ndarray:
    arr = np.frombuffer(data, dtype=np.uint8).astype(float) / 255.0
    patched = arr.reshape(GRID, PATCH, GRID, PATCH, 3).mean(axis=(1, 3))
    out = patched.reshape(-1)
    # express each patch mean relative to the image's own mean: the shared
    # table background otherwise drowns the scene signal after normalization
    out -= out.mean()
    out.flags.writeable = False
    return out


def image_features(pixels: np.ndarray) -> np.ndarray:
    """Per-patch channel means, centered on the image mean. Shape (192,).

    Cached by pixel content: training epochs and repeated scoring revisit
    the same rasters constantly.
    """
    if pixels.shape != (IMAGE_SIDE, IMAGE_SIDE, 3):
        raise ValueError(f"expected {IMAGE_SIDE}x{IMAGE_SIDE} RGB raster, "
                         f"got shape {pixels.shape}")
    if pixels.dtype != np.uint8:
        pixels = pixels.astype(np.uint8)
    return _image_features_cached(pixels.tobytes())


def text_embed_raw(text: str, params: EncoderParams) -> np.ndarray:
    buckets = token_buckets(text)
    if not buckets:
        raise ValueError("empty text")
    mean = params.token_emb[buckets].mean(axis=0)
    return mean @ params.text_w + params.text_b


def image_embed_raw(pixels: np.ndarray, params: EncoderParams) -> np.ndarray:
    return image_features(pixels) @ params.image_w + params.image_b


def _normalize(vec: np.ndarray, what: str) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError(f"degenerate {what}")
    return vec / norm


def encode_text(text: str, params: EncoderParams) -> np.ndarray:
    """Unit-norm embedding of a supervision or primitive string."""
    return _normalize(text_embed_raw(text, params), "text embedding")


def encode_image(pixels: np.ndarray, params: EncoderParams) -> np.ndarray:
    """Unit-norm embedding of a 64x64 RGB observation."""
    return _normalize(image_embed_raw(pixels, params), "image embedding")


def prompted(instruction: str) -> str:
    return INSTRUCTION_PROMPT.format(instruction=instruction)


def context(pixels: np.ndarray, instruction: str,
            params: EncoderParams) -> np.ndarray:
    """Unit-norm context: raw image embedding plus raw embedding of the
    prompted instruction, normalized once after the sum."""
    raw = image_embed_raw(pixels, params) + text_embed_raw(prompted(instruction), params)
    return _normalize(raw, "context")


@dataclass(frozen=True)
class BatchItem:
    pixels: np.ndarray
    instruction: str
    supervision: str
    action: LowLevelAction


@dataclass
class Batch:
    """A mini-batch of (observation, instruction, supervision) triplets with
    their aligned low-level actions."""

    items: list[BatchItem]

    def __len__(self) -> int:
        return len(self.items)


def label_matrix(batch: Batch) -> np.ndarray:
    """Pairwise positives: 1 on the diagonal and wherever two rows carry
    componentwise-identical actions."""
    m = len(batch)
    vecs = [it.action.vector() for it in batch.items]
    y = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            y[i, j] = 1.0 if i == j or bool(np.all(vecs[i] == vecs[j])) else 0.0
    return y


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class _Forward:
    """Intermediate tensors kept for the backward pass."""

    ctx_raw: np.ndarray      # (M, d)
    ctx_hat: np.ndarray      # (M, d)
    ctx_norm: np.ndarray     # (M,)
    sup_raw: np.ndarray      # (M, d)
    sup_hat: np.ndarray      # (M, d)
    sup_norm: np.ndarray     # (M,)
    feats: np.ndarray        # (M, 192)
    instr_buckets: list[list[int]]
    sup_buckets: list[list[int]]
    instr_means: np.ndarray  # (M, d)
    sup_means: np.ndarray    # (M, d)
    scores: np.ndarray       # (M, M) cosines
    probs: np.ndarray        # (M, M)
    labels: np.ndarray       # (M, M)
    loss: float


def _forward(batch: Batch, params: EncoderParams) -> _Forward:
    m = len(batch)
    if m < 1:
        raise ValueError("batch is empty")
    d = params.dim
    feats = np.stack([image_features(it.pixels) for it in batch.items])
    instr_buckets = [token_buckets(prompted(it.instruction)) for it in batch.items]
    sup_buckets = [token_buckets(it.supervision) for it in batch.items]
    if any(not b for b in sup_buckets):
        raise ValueError("empty text")
    instr_means = np.stack([params.token_emb[b].mean(axis=0) for b in instr_buckets])
    sup_means = np.stack([params.token_emb[b].mean(axis=0) for b in sup_buckets])

    ctx_raw = (feats @ params.image_w + params.image_b
               + instr_means @ params.text_w + params.text_b)
    ctx_norm = np.linalg.norm(ctx_raw, axis=1)
    if np.any(ctx_norm == 0.0):
        raise ValueError("degenerate context")
    ctx_hat = ctx_raw / ctx_norm[:, None]

    sup_raw = sup_means @ params.text_w + params.text_b
    sup_norm = np.linalg.norm(sup_raw, axis=1)
    if np.any(sup_norm == 0.0):
        raise ValueError("degenerate supervision embedding")
    sup_hat = sup_raw / sup_norm[:, None]

    scores = ctx_hat @ sup_hat.T
    probs = _sigmoid(scores)
    labels = label_matrix(batch)
    loss_terms = labels * np.log(probs) + (1.0 - labels) * np.log(1.0 - probs)
    loss = float(-loss_terms.sum() / (m * m))
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite contrastive loss")
    return _Forward(ctx_raw, ctx_hat, ctx_norm, sup_raw, sup_hat, sup_norm,
                    feats, instr_buckets, sup_buckets, instr_means, sup_means,
                    scores, probs, labels, loss)


def cil_loss(batch: Batch, params: EncoderParams) -> float:
    """Mean pairwise sigmoid cross-entropy over all context/supervision pairs;
    sigmoid applied directly to the cosine, no temperature."""
    return _forward(batch, params).loss


def _backprop_normalize(grad_hat: np.ndarray, hat: np.ndarray,
                        norm: np.ndarray) -> np.ndarray:
    # d/dx of x/||x||, applied rowwise
    inner = np.sum(grad_hat * hat, axis=1, keepdims=True)
    return (grad_hat - inner * hat) / norm[:, None]


def cil_grad(batch: Batch, params: EncoderParams) -> tuple[float, EncoderParams]:
    """Loss and its exact analytic gradient.

    Returns (loss, grads) with grads congruent to EncoderParams.
    """
    fwd = _forward(batch, params)
    m = len(batch)
    grads = params.zeros_like()

    dscores = (fwd.probs - fwd.labels) / (m * m)          # (M, M)
    dctx_hat = dscores @ fwd.sup_hat                       # (M, d)
    dsup_hat = dscores.T @ fwd.ctx_hat                     # (M, d)

    dctx_raw = _backprop_normalize(dctx_hat, fwd.ctx_hat, fwd.ctx_norm)
    dsup_raw = _backprop_normalize(dsup_hat, fwd.sup_hat, fwd.sup_norm)

    # image side: ctx_raw += feats @ image_w + image_b
    grads.image_w += fwd.feats.T @ dctx_raw
    grads.image_b += dctx_raw.sum(axis=0)

    # text head: both the prompted instruction and the supervision use it
    grads.text_w += fwd.instr_means.T @ dctx_raw + fwd.sup_means.T @ dsup_raw
    grads.text_b += dctx_raw.sum(axis=0) + dsup_raw.sum(axis=0)

    # bag means back to the bucket table
    dinstr_means = dctx_raw @ params.text_w.T
    dsup_means = dsup_raw @ params.text_w.T
    for row, buckets in zip(dinstr_means, fwd.instr_buckets):
        share = row / len(buckets)
        for b in buckets:
            grads.token_emb[b] += share
    for row, buckets in zip(dsup_means, fwd.sup_buckets):
        share = row / len(buckets)
        for b in buckets:
            grads.token_emb[b] += share
    return fwd.loss, grads
