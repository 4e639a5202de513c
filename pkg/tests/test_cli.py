import json

import pytest

from langarm.cli import main
from langarm.expert import collect_demonstration
from langarm.teleop import save_episode
from langarm.world import get_task


@pytest.fixture(scope="module")
def episode_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("episodes")
    task = get_task("point")
    for seed in (1, 2):
        save_episode(collect_demonstration(task, seed), d / f"point-{seed}.jsonl")
    return d


def test_augment_command(episode_dir, tmp_path):
    out = tmp_path / "aug"
    code = main(["augment", "--in", str(episode_dir), "--out", str(out),
                 "--n", "2", "--seed", "0"])
    assert code == 0
    assert len(list(out.glob("*.jsonl"))) == 4


def test_train_rollout_quantize_pipeline(episode_dir, tmp_path):
    ckpt = tmp_path / "ckpt.npz"
    code = main(["train", "--data", str(episode_dir), "--epochs", "2",
                 "--out", str(ckpt)])
    assert code == 0
    assert ckpt.exists()

    trace = tmp_path / "trace.json"
    code = main(["rollout", "--ckpt", str(ckpt), "--task", "point",
                 "--seeds", "1", "--out", str(trace)])
    assert code == 0
    payload = json.loads(trace.read_text())
    assert payload and "trace" in payload[0]

    report = tmp_path / "quant.csv"
    code = main(["quantize", "--data", str(episode_dir), "--k", "1,2",
                 "--report", str(report)])
    assert code == 0
    assert report.read_text().startswith("k,mean_l1")


def test_benchmark_command(tmp_path):
    config = tmp_path / "bench.json"
    config.write_text(json.dumps({
        "tasks": ["point"], "variants": ["full"], "demos_per_task": 1,
        "augmentations": 1, "eval_rollouts": 1, "master_seed": 2,
        "train": {"epochs": 1, "seed": 0}}))
    code = main(["benchmark", "--config", str(config),
                 "--csv", str(tmp_path / "b.csv")])
    assert code == 0
