import numpy as np
import pytest

from langarm.actions import canonical_vocabulary
from langarm.expert import collect_demonstration
from langarm.training import TrainConfig, train
from langarm.world import get_task


@pytest.fixture(scope="session")
def vocab():
    return canonical_vocabulary()


@pytest.fixture(scope="session")
def pick_task():
    return get_task("pick")


@pytest.fixture(scope="session")
def point_task():
    return get_task("point")


@pytest.fixture(scope="session")
def demo_episodes():
    """A small demonstration corpus: 3 episodes per stock task."""
    episodes = []
    for task_id in ("point", "pick", "place"):
        task = get_task(task_id)
        for seed in (11, 23, 47):
            episodes.append(collect_demonstration(task, seed))
    return episodes


@pytest.fixture(scope="session")
def small_trained(demo_episodes):
    """Quickly trained parameters shared by the tests that just need a
    plausible checkpoint, not a strong one."""
    transitions = [tr for ep in demo_episodes for tr in ep.transitions]
    config = TrainConfig(seed=0, epochs=8, batch_size=16)
    return train(transitions, config)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
