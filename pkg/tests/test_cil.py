import math

import numpy as np
import pytest

from langarm.actions import LowLevelAction
from langarm.encoders import (
    Batch,
    BatchItem,
    EncoderParams,
    PATCH_FEATURES,
    VOCAB_BUCKETS,
    cil_grad,
    cil_loss,
    context,
    encode_image,
    encode_text,
    image_features,
    init_params,
    label_matrix,
    prompted,
    token_buckets,
    tokenize,
)

ACTIONS = [
    LowLevelAction(dx=0.05),
    LowLevelAction(dy=-0.1),
    LowLevelAction(dz=0.01),
    LowLevelAction(grip_cmd=1.0),
]


def random_item(rng, d_action=None, instruction=None, supervision=None):
    pixels = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
    texts = ["move arm forward by 5cm", "move arm to the right by 10cm",
             "raise arm up by 1cm", "open the gripper"]
    idx = int(rng.integers(len(texts)))
    return BatchItem(
        pixels=pixels,
        instruction=instruction or f"task number {int(rng.integers(5))}",
        supervision=supervision or texts[idx],
        action=d_action or ACTIONS[idx],
    )


def random_batch(rng, m=3):
    return Batch(items=[random_item(rng) for _ in range(m)])


# --- encoders ------------------------------------------------------------------

def test_text_encoding_deterministic():
    params = init_params(16, seed=1)
    a = encode_text("move the arm left", params)
    b = encode_text("move the arm left", params)
    assert np.array_equal(a, b)


def test_text_norm_is_one():
    params = init_params(16, seed=1)
    for text in ("move arm back by 5cm", "open the gripper", "x"):
        assert np.linalg.norm(encode_text(text, params)) == pytest.approx(1.0, abs=1e-6)


def test_empty_text_rejected():
    with pytest.raises(ValueError, match="empty text"):
        encode_text("", init_params(8))


def test_left_right_have_distinct_token_sets_and_cosine_below_one():
    assert set(token_buckets("move left")) != set(token_buckets("move right"))
    params = init_params(32, seed=0)
    cos = float(encode_text("move left", params) @ encode_text("move right", params))
    assert cos < 1.0 - 1e-9


def test_image_wrong_size_rejected():
    with pytest.raises(ValueError, match="64x64"):
        encode_image(np.zeros((32, 32, 3), dtype=np.uint8), init_params(8))


def test_black_image_embeds_to_normalized_bias():
    params = init_params(8, seed=3)
    out = encode_image(np.zeros((64, 64, 3), dtype=np.uint8), params)
    expected = params.image_b / np.linalg.norm(params.image_b)
    assert np.allclose(out, expected)


def test_patch_translation_changes_embedding():
    params = init_params(16, seed=4)
    img_a = np.zeros((64, 64, 3), dtype=np.uint8)
    img_a[0:8, 0:8] = 255
    img_b = np.zeros((64, 64, 3), dtype=np.uint8)
    img_b[0:8, 8:16] = 255
    assert not np.allclose(encode_image(img_a, params), encode_image(img_b, params))


def test_image_norm_is_one():
    params = init_params(16, seed=4)
    img = np.full((64, 64, 3), 77, dtype=np.uint8)
    assert np.linalg.norm(encode_image(img, params)) == pytest.approx(1.0, abs=1e-6)


def test_tokenizer_keeps_underscores_and_splits_punctuation():
    assert tokenize("tok_07") == ["tok_07"]
    assert tokenize("Move, the arm!") == ["move", "the", "arm"]


# --- context -------------------------------------------------------------------

def test_context_unit_norm_and_image_sensitivity():
    params = init_params(16, seed=5)
    rng = np.random.default_rng(0)
    img_a = rng.integers(0, 256, (64, 64, 3), dtype=np.uint8)
    img_b = rng.integers(0, 256, (64, 64, 3), dtype=np.uint8)
    ctx_a = context(img_a, "pick the disk", params)
    ctx_b = context(img_b, "pick the disk", params)
    assert np.linalg.norm(ctx_a) == pytest.approx(1.0, abs=1e-6)
    assert not np.allclose(ctx_a, ctx_b)


def test_degenerate_context_errors():
    params = init_params(4, seed=0)
    params.token_emb[:] = 0.0
    params.text_w[:] = np.eye(4)
    params.image_w[:] = 0.0
    params.text_b[:] = np.array([1.0, 0.0, 0.0, 0.0])
    params.image_b[:] = -params.text_b  # image and text cancel exactly
    with pytest.raises(ValueError, match="degenerate context"):
        context(np.zeros((64, 64, 3), dtype=np.uint8), "anything", params)


# --- labels ----------------------------------------------------------------------

def test_distinct_actions_give_identity_labels(rng):
    batch = Batch(items=[random_item(rng, d_action=a, supervision=t)
                         for a, t in zip(ACTIONS, ["a", "b", "c", "d"])])
    assert np.array_equal(label_matrix(batch), np.eye(4))


def test_shared_action_pairs_are_positive(rng):
    shared = LowLevelAction(dz=0.05)
    batch = Batch(items=[
        random_item(rng, d_action=shared, supervision="move upwards"),
        random_item(rng, d_action=shared, supervision="raise the arm"),
        random_item(rng, d_action=LowLevelAction(dz=-0.05), supervision="lower"),
    ])
    y = label_matrix(batch)
    assert y[0, 1] == 1.0 and y[1, 0] == 1.0
    assert y[0, 2] == 0.0 and y[2, 1] == 0.0
    assert np.all(np.diag(y) == 1.0)


def test_labels_symmetric_on_random_batches(rng):
    for _ in range(10):
        y = label_matrix(random_batch(rng, m=5))
        assert np.array_equal(y, y.T)


def test_duplicating_a_sample_never_reduces_positives(rng):
    batch = random_batch(rng, m=3)
    base = label_matrix(batch).sum(axis=1)
    extended = Batch(items=batch.items + [batch.items[0]])
    grown = label_matrix(extended).sum(axis=1)
    assert grown[0] >= base[0] + 1  # its duplicate is a new positive


# --- loss anchors -----------------------------------------------------------------

def anchor_params(sup_vec):
    """d=2 parameters making the context exactly e1 and the supervision
    embedding exactly sup_vec, for a black observation and one-token text."""
    params = EncoderParams(
        token_emb=np.zeros((VOCAB_BUCKETS, 2)),
        text_w=np.eye(2),
        text_b=np.zeros(2),
        image_w=np.zeros((PATCH_FEATURES, 2)),
        image_b=np.array([1.0, 0.0]),
    )
    bucket = token_buckets("go")[0]
    # the single-token supervision "go" reads sup_vec; the prompt's own tokens
    # stay zero, so the context is exactly the image bias
    params.token_emb[bucket] = np.array(sup_vec, dtype=float)
    assert bucket not in token_buckets(prompted("wait"))
    return params


def anchor_batch():
    return Batch(items=[BatchItem(
        pixels=np.zeros((64, 64, 3), dtype=np.uint8),
        instruction="wait", supervision="go", action=LowLevelAction(dx=0.01))])


def test_loss_anchor_orthogonal_is_log_two():
    params = anchor_params([0.0, 1.0])
    loss = cil_loss(anchor_batch(), params)
    assert loss == pytest.approx(math.log(2.0), abs=1e-12)


def test_loss_anchor_aligned_is_log_sigmoid_one():
    params = anchor_params([1.0, 0.0])
    loss = cil_loss(anchor_batch(), params)
    expected = -math.log(1.0 / (1.0 + math.exp(-1.0)))
    assert loss == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.313262, abs=1e-6)


# --- loss vs independent oracle -----------------------------------------------------

def loop_loss_oracle(batch, params):
    """Scalar re-implementation: explicit loops over every (i, j) pair."""
    m = len(batch)
    ctxs = []
    sups = []
    for item in batch.items:
        feats = image_features(item.pixels)
        img_raw = feats @ params.image_w + params.image_b
        buckets = token_buckets(prompted(item.instruction))
        txt_raw = params.token_emb[buckets].mean(axis=0) @ params.text_w + params.text_b
        c = img_raw + txt_raw
        ctxs.append(c / np.linalg.norm(c))
        zb = token_buckets(item.supervision)
        z = params.token_emb[zb].mean(axis=0) @ params.text_w + params.text_b
        sups.append(z / np.linalg.norm(z))
    total = 0.0
    for i in range(m):
        for j in range(m):
            same = (i == j or np.array_equal(batch.items[i].action.vector(),
                                             batch.items[j].action.vector()))
            s = float(np.dot(ctxs[i], sups[j]))
            p = 1.0 / (1.0 + math.exp(-s))
            total += math.log(p) if same else math.log(1.0 - p)
    return -total / (m * m)


def test_loss_matches_pairwise_loop_oracle(rng):
    params = init_params(16, seed=6)
    for _ in range(5):
        batch = random_batch(rng, m=4)
        assert cil_loss(batch, params) == pytest.approx(
            loop_loss_oracle(batch, params), abs=1e-10)


def test_loss_positive_and_permutation_invariant(rng):
    params = init_params(16, seed=7)
    batch = random_batch(rng, m=4)
    loss = cil_loss(batch, params)
    assert loss > 0.0
    shuffled = Batch(items=[batch.items[i] for i in (2, 0, 3, 1)])
    assert cil_loss(shuffled, params) == pytest.approx(loss, abs=1e-12)


# --- gradients ------------------------------------------------------------------------

def active_positions(batch, params, rng):
    """Flat indices worth differencing: every non-embedding parameter plus
    the token rows the batch actually touches. Untouched rows are
    structurally zero on both routes; a random sample of them is checked
    too, so the sweep covers every kind of parameter."""
    d = params.dim
    used_rows = set()
    for item in batch.items:
        used_rows.update(token_buckets(prompted(item.instruction)))
        used_rows.update(token_buckets(item.supervision))
    positions = []
    for row in sorted(used_rows):
        positions.extend(range(row * d, (row + 1) * d))
    sample = rng.choice(sorted(set(range(VOCAB_BUCKETS)) - used_rows),
                        size=8, replace=False)
    for row in sample:
        positions.extend(range(row * d, (row + 1) * d))
    emb_size = VOCAB_BUCKETS * d
    positions.extend(range(emb_size, params.flatten().size))
    return np.array(sorted(positions))


def finite_difference_grad(batch, params, positions, h=1e-5):
    flat = params.flatten()
    grad = np.zeros(len(positions))
    for out_idx, k in enumerate(positions):
        plus = flat.copy()
        plus[k] += h
        minus = flat.copy()
        minus[k] -= h
        grad[out_idx] = (cil_loss(batch, params.unflatten(plus))
                         - cil_loss(batch, params.unflatten(minus))) / (2 * h)
    return grad


def test_gradient_matches_finite_differences(rng):
    for trial in range(5):
        params = init_params(8, seed=100 + trial)
        batch = random_batch(rng, m=3)
        positions = active_positions(batch, params, rng)
        _, grads = cil_grad(batch, params)
        analytic = grads.flatten()[positions]
        numeric = finite_difference_grad(batch, params, positions)
        nonzero = np.abs(numeric) > 1e-12
        rel = (np.abs(analytic - numeric)[nonzero]
               / np.maximum(np.abs(numeric[nonzero]), 1e-8))
        assert rel.max() <= 1e-4, f"trial {trial}: max rel err {rel.max():.2e}"
        # wherever the numeric gradient is zero, the analytic one is too
        if np.any(~nonzero):
            assert np.abs(analytic[~nonzero]).max() <= 1e-10


def test_gradient_zero_for_unused_buckets(rng):
    params = init_params(8, seed=9)
    batch = random_batch(rng, m=3)
    _, grads = cil_grad(batch, params)
    used = set()
    for item in batch.items:
        used.update(token_buckets(prompted(item.instruction)))
        used.update(token_buckets(item.supervision))
    unused = sorted(set(range(VOCAB_BUCKETS)) - used)
    assert np.all(grads.token_emb[unused] == 0.0)


def test_gradient_vanishes_at_bfgs_critical_point(rng):
    scipy_optimize = pytest.importorskip("scipy.optimize")
    params = init_params(8, seed=10)
    batch = random_batch(rng, m=2)

    def objective(flat):
        p = params.unflatten(flat)
        loss, grads = cil_grad(batch, p)
        return loss, grads.flatten()

    result = scipy_optimize.minimize(
        objective, params.flatten(), jac=True, method="L-BFGS-B",
        options={"gtol": 1e-9, "ftol": 0.0, "maxiter": 8000, "maxcor": 50})
    _, grads = cil_grad(batch, params.unflatten(result.x))
    assert np.abs(grads.flatten()).max() <= 1e-6


def test_loss_rejects_empty_batch():
    with pytest.raises(ValueError):
        cil_loss(Batch(items=[]), init_params(8))
