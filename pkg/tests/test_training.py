import numpy as np
import pytest

from langarm.actions import canonical_vocabulary, primitive_to_action
from langarm.control import PrimitiveCache, score_primitives, select_action
from langarm.teleop import Source, Transition
from langarm.training import (
    TrainConfig,
    TrainingDiverged,
    load_checkpoint,
    save_checkpoint,
    train,
)
from langarm.world import Observation, get_task, init_world, render


def toy_transitions(vocab):
    """Two visually distinct states, two instructions, two primitives."""
    dark = np.zeros((64, 64, 3), dtype=np.uint8)
    dark[16:32, 16:32] = (255, 0, 0)
    light = np.full((64, 64, 3), 200, dtype=np.uint8)
    light[40:56, 40:56] = (0, 0, 255)
    up = vocab.by_text("raise arm up by 20cm")
    close = vocab.by_text("close the gripper")
    items = []
    for _ in range(8):
        items.append(Transition(
            observation=Observation(pixels=dark), instruction="lift it",
            supervision=up.canonical_text, primitive=up,
            action=primitive_to_action(up), source=Source.TELEOP))
        items.append(Transition(
            observation=Observation(pixels=light), instruction="grab it",
            supervision=close.canonical_text, primitive=close,
            action=primitive_to_action(close), source=Source.TELEOP))
    return items


def test_loss_trace_finite_and_decreasing(demo_episodes):
    transitions = [tr for ep in demo_episodes for tr in ep.transitions]
    result = train(transitions, TrainConfig(seed=0, epochs=6, batch_size=16))
    assert all(np.isfinite(v) for v in result.loss_trace)
    assert result.loss_trace[-1] <= result.loss_trace[0]


def test_same_seed_identical_params(demo_episodes):
    transitions = [tr for ep in demo_episodes for tr in ep.transitions][:40]
    config = TrainConfig(seed=3, epochs=3, batch_size=8)
    a = train(transitions, config).params
    b = train(transitions, config).params
    for arr_a, arr_b in zip(a.arrays(), b.arrays()):
        assert np.array_equal(arr_a, arr_b)


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        train([], TrainConfig())


def test_divergence_reports_epoch_and_batch(monkeypatch, demo_episodes):
    transitions = [tr for ep in demo_episodes for tr in ep.transitions][:20]

    def explode(batch, params):
        raise FloatingPointError("boom")

    monkeypatch.setattr("langarm.training.cil_grad", explode)
    with pytest.raises(TrainingDiverged) as err:
        train(transitions, TrainConfig(epochs=1))
    assert err.value.epoch == 0
    assert err.value.batch == 0


def test_checkpoint_round_trip(tmp_path, demo_episodes):
    transitions = [tr for ep in demo_episodes for tr in ep.transitions][:30]
    result = train(transitions, TrainConfig(seed=1, epochs=2, batch_size=8))
    path = tmp_path / "ckpt.npz"
    save_checkpoint(result, path)
    loaded = load_checkpoint(path)
    for arr_a, arr_b in zip(result.params.arrays(), loaded.params.arrays()):
        assert np.array_equal(arr_a, arr_b)
    assert loaded.loss_trace == pytest.approx(result.loss_trace)
    assert loaded.config == result.config


def test_checkpoint_version_guard(tmp_path, demo_episodes):
    transitions = [tr for ep in demo_episodes for tr in ep.transitions][:10]
    result = train(transitions, TrainConfig(seed=1, epochs=1, batch_size=8))
    path = tmp_path / "ckpt.npz"
    save_checkpoint(result, path)
    import json
    import zipfile

    # rewrite the embedded metadata with a foreign version
    data = np.load(path)
    arrays = {k: data[k] for k in data.files}
    meta = json.loads(bytes(arrays["meta"]).decode())
    meta["version"] = 99
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez_compressed(path, **arrays)
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(path)


def test_two_primitive_toy_set_reaches_full_accuracy(vocab):
    transitions = toy_transitions(vocab)
    result = train(transitions, TrainConfig(seed=0, epochs=200, batch_size=8,
                                            learning_rate=0.5))
    cache = PrimitiveCache(vocab, result.params)
    hits = 0
    for tr in transitions[:2]:
        scores = score_primitives(tr.observation, tr.instruction, vocab,
                                  result.params, cache)
        chosen = select_action(scores, vocab)
        hits += int(chosen.id == tr.primitive.id)
    assert hits == 2
