import numpy as np
import pytest

from langarm.actions import canonical_vocabulary
from langarm.augment import augment_trajectory
from langarm.data import (
    build_dataset,
    distortion_sweep,
    export_primitive_embeddings,
    fit_axis_kmeans,
    fit_quantizer,
    nested_center_ladder,
    quantize_dataset,
    write_distortion_csv,
)
from langarm.encoders import encode_text
from langarm.expert import collect_demonstration
from langarm.teleop import Source, load_episode, save_episode
from langarm.world import get_task


@pytest.fixture(scope="module")
def corpus():
    """10 demos for one task with 3 augmentations each."""
    task = get_task("pick")
    episodes = []
    for seed in range(10):
        demo = collect_demonstration(task, seed)
        episodes.append(demo)
        episodes.extend(augment_trajectory(demo, n_aug=3, task=task,
                                           rng=np.random.default_rng(seed)))
    return episodes


# --- dataset assembly ----------------------------------------------------------

def test_ten_demos_with_three_augmentations_is_forty_episodes(corpus):
    assert len(corpus) == 40
    transitions = build_dataset([], episodes=corpus)
    assert len(transitions) == sum(len(ep.transitions) for ep in corpus)


def test_passive_filter_keeps_only_teleop(corpus):
    transitions = build_dataset([], episodes=corpus, include_sta=False)
    assert transitions
    assert all(tr.source is Source.TELEOP for tr in transitions)


def test_few_shot_keeps_first_seeds_with_their_augmentations(corpus):
    transitions = build_dataset([], episodes=corpus, few_shot_n=1)
    assert {tr.source for tr in transitions} >= {Source.TELEOP, Source.STA_DIVERSIFY}
    # only the first demo seed appears
    teleop_only = build_dataset([], episodes=corpus, few_shot_n=1,
                                include_sta=False)
    demo_lengths = {len(ep.transitions) for ep in corpus[:1]}
    assert len(teleop_only) in demo_lengths


def test_few_shot_one_episode_per_task(corpus):
    teleop_only = build_dataset([], episodes=corpus, few_shot_n=1,
                                include_sta=False)
    # all transitions share one (task, seed) pair
    assert len({(tr.instruction,) for tr in teleop_only}) == 1


def test_everything_filtered_is_an_error(corpus):
    with pytest.raises(ValueError):
        build_dataset([], episodes=corpus, few_shot_n=0)


def test_order_stable(corpus, tmp_path):
    a = build_dataset([], episodes=corpus)
    b = build_dataset([], episodes=list(corpus))
    assert [id(x) for x in a] == [id(x) for x in b]
    # and through the file system
    for i, ep in enumerate(corpus[:4]):
        save_episode(ep, tmp_path / f"ep{i}.jsonl")
    c = build_dataset([tmp_path])
    d = build_dataset([tmp_path])
    assert [(tr.supervision, tr.action.vector().tolist()) for tr in c] == \
        [(tr.supervision, tr.action.vector().tolist()) for tr in d]


# --- k-means ----------------------------------------------------------------------

def test_k1_center_is_median_and_distortion_is_mad():
    values = [0.3, -0.1, 0.0, 0.7, 0.1, 0.1, -0.4]
    centers = fit_axis_kmeans(values, k=1)
    assert centers.tolist() == [float(np.median(values))]
    mad = float(np.abs(np.array(values) - np.median(values)).mean())
    diffs = np.abs(np.array(values)[:, None] - centers[None, :]).min(axis=1)
    assert float(diffs.mean()) == pytest.approx(mad, abs=0)


def test_k_equals_distinct_gives_zero_distortion():
    values = [0.1, 0.2, 0.3, 0.2, 0.1]
    centers = fit_axis_kmeans(values, k=3)
    assert sorted(centers.tolist()) == [0.1, 0.2, 0.3]


def test_symmetric_pairs():
    centers = fit_axis_kmeans([-0.1, -0.1, 0.1, 0.1], k=2)
    assert centers.tolist() == [-0.1, 0.1]


def test_k_above_distinct_count_rejected():
    with pytest.raises(ValueError):
        fit_axis_kmeans([0.1, 0.1, 0.2], k=3)


def test_empty_values_rejected():
    with pytest.raises(ValueError):
        fit_axis_kmeans([], k=1)


def test_ladder_monotone_on_continuous_values(rng):
    values = rng.normal(0.0, 0.1, size=400)
    prev = None
    for k in (1, 2, 4, 8, 16, 32):
        centers = nested_center_ladder(values, k, seed=0)
        diffs = np.abs(values[:, None] - centers[None, :]).min(axis=1)
        distortion = float(diffs.mean())
        if prev is not None:
            assert distortion <= prev + 1e-12
        prev = distortion


def test_quantize_dataset_reports_mean_l1(corpus):
    transitions = build_dataset([], episodes=corpus)
    quantized, distortion, model = quantize_dataset(transitions, k=4, seed=0)
    assert len(quantized) == len(transitions)
    assert distortion >= 0.0
    recomputed = float(np.mean([
        np.abs(a.action.vector()[:7] - b.action.vector()[:7]).sum()
        for a, b in zip(transitions, quantized)]))
    assert distortion == pytest.approx(recomputed, abs=1e-12)


def test_quantization_idempotent(corpus):
    transitions = build_dataset([], episodes=corpus)
    once, d1, _ = quantize_dataset(transitions, k=4, seed=0)
    twice, d2, _ = quantize_dataset(once, k=4, seed=0)
    assert d2 == pytest.approx(0.0, abs=1e-15)
    for a, b in zip(once, twice):
        assert a.action == b.action


def test_coarser_k_never_beats_finer_k(rng, corpus):
    transitions = build_dataset([], episodes=corpus)
    rows = distortion_sweep(transitions, ks=(8, 128), seed=0)
    by_k = {k: d for k, d, _ in rows}
    assert by_k[8] >= by_k[128] - 1e-15


def test_sweep_nonincreasing_on_corpus(corpus):
    transitions = build_dataset([], episodes=corpus)
    rows = distortion_sweep(transitions, ks=(1, 2, 4, 8, 16), seed=0)
    distortions = [d for _, d, _ in rows]
    assert all(a >= b - 1e-12 for a, b in zip(distortions, distortions[1:]))
    # k=1 distortion is exactly the sum of per-axis MADs about the median
    matrix = np.stack([tr.action.vector()[:7] for tr in transitions])
    mad = sum(float(np.abs(matrix[:, i] - np.median(matrix[:, i])).mean())
              for i in range(7))
    assert rows[0][1] == pytest.approx(mad, abs=1e-12)


def test_distortion_csv(tmp_path, corpus):
    transitions = build_dataset([], episodes=corpus)
    rows = distortion_sweep(transitions, ks=(1, 2), seed=0)
    path = tmp_path / "quant.csv"
    write_distortion_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("k,mean_l1")
    assert len(lines) == 3


# --- embedding export ------------------------------------------------------------

def test_embedding_export_shape_and_determinism(small_trained, vocab):
    coords = export_primitive_embeddings(small_trained.params, vocab)
    again = export_primitive_embeddings(small_trained.params, vocab)
    assert coords.shape == (58, 2)
    assert np.array_equal(coords, again)


def test_embedding_projection_preserves_neighbor_ordering(small_trained, vocab):
    """For at least half the primitives, the full-space nearest neighbor must
    keep its ordering against the majority of other primitives after the 2-D
    projection (exact top-1 identity is not preservable in two dimensions)."""
    params = small_trained.params
    full = np.stack([encode_text(p.canonical_text, params)
                     for p in vocab.primitives])
    coords = export_primitive_embeddings(params, vocab)
    preserved = 0
    n = len(vocab)
    for i in range(n):
        d_full = np.linalg.norm(full - full[i], axis=1)
        d_full[i] = np.inf
        d_proj = np.linalg.norm(coords - coords[i], axis=1)
        d_proj[i] = np.inf
        nn = int(np.argmin(d_full))
        closer_in_proj = int((d_proj < d_proj[nn]).sum())
        if closer_in_proj < (n - 2) / 2:
            preserved += 1
    assert preserved >= n // 2, f"only {preserved}/{n} orderings preserved"
