"""Experiment harness: demo collection, ablation grids, intervention sweeps
and latency probes, all reproducible from one master seed.

Success-rate magnitudes from desk-scale rollouts mean nothing in absolute
terms; the harness asserts directions and orderings only, and every cell is
recomputable bit-identically from (config, master seed).
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .actions import PrimitiveVocabulary, action_token_vocabulary, canonical_vocabulary
from .augment import augment_trajectory
from .control import ControlConfig, PrimitiveCache, run_episode, score_primitives
from .data import build_dataset
from .encoders import EncoderParams
from .expert import (
    collect_demonstration,
    collect_vocabulary_sweep,
    make_correction_source,
)
from .teleop import Episode, Transition
from .training import TrainConfig, train
from .world import GripperPose, WorldState, get_task, init_world, render

logger = logging.getLogger(__name__)

DEFAULT_TASKS = ("point", "pick", "place")


@dataclass
class BenchConfig:
    tasks: tuple[str, ...] = DEFAULT_TASKS
    variants: tuple[str, ...] = ("full", "passive", "action-token")
    regimes: tuple[str, ...] = ("multi",)
    shots: tuple = ("all",)
    demos_per_task: int = 10
    augmentations: int = 3
    eval_rollouts: int = 10
    perturbed_start: bool = True
    master_seed: int = 0
    # one per task: a calibration episode running the whole vocabulary, so
    # every supervision embedding sees training pressure (all variants get it)
    calibration_sweeps: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class BenchCell:
    variant: str
    task: str
    regime: str
    shots: object
    success_rate: float | None
    rollouts: int
    transitions: int
    note: str = ""


def collect_corpus(config: BenchConfig) -> list[Episode]:
    """Teleop demos plus their augmentations for every task."""
    episodes: list[Episode] = []
    rng = np.random.default_rng(config.master_seed)
    for task_id in config.tasks:
        task = get_task(task_id)
        collected = 0
        while collected < config.demos_per_task:
            seed = int(rng.integers(0, 2**31 - 1))
            episode = collect_demonstration(
                task, seed, paraphrase_seed=config.master_seed + collected)
            if not episode.transitions:  # layout spawned already solved
                continue
            collected += 1
            episodes.append(episode)
            if config.augmentations > 0:
                episodes.extend(augment_trajectory(
                    episode, n_aug=config.augmentations, task=task,
                    rng=np.random.default_rng((config.master_seed, seed))))
        for sweep in range(config.calibration_sweeps):
            episodes.append(collect_vocabulary_sweep(
                task, seed=int(rng.integers(0, 2**31 - 1))))
    return episodes


def _variant_dataset(episodes: list[Episode], variant: str, task_filter,
                     shots, vocab: PrimitiveVocabulary,
                     token_vocab: PrimitiveVocabulary) -> list[Transition]:
    subset = [ep for ep in episodes if task_filter(ep.task_id)]
    include_sta = variant != "passive"
    few_shot = None if shots == "all" else int(shots)
    transitions = build_dataset([], include_sta=include_sta,
                                few_shot_n=few_shot, episodes=subset)
    if variant == "action-token":
        transitions = [
            dc_replace(tr,
                       supervision=token_vocab.by_id(tr.primitive.id).canonical_text,
                       primitive=token_vocab.by_id(tr.primitive.id))
            for tr in transitions
        ]
    return transitions


def perturbed_world(task, seed: int, planar: float = 0.05,
                    draw: int = 0) -> WorldState:
    """Fresh world with the gripper knocked off its home pose in the plane;
    the scene itself stays exactly as init_world placed it. `draw` selects
    among different offsets for the same layout."""
    state = init_world(task, seed)
    rng = np.random.default_rng((seed, draw, 77))
    pose = state.pose
    moved = GripperPose(
        x=min(max(pose.x + float(rng.uniform(-planar, planar)), 0.1), 0.7),
        y=min(max(pose.y + float(rng.uniform(-planar, planar)), -0.3), 0.3),
        z=pose.z,
        roll=pose.roll, pitch=pose.pitch, yaw=pose.yaw,
        grip_rot=pose.grip_rot, open=pose.open,
    )
    return WorldState(pose=moved, objects=state.objects,
                      step_count=state.step_count, rng_seed=state.rng_seed)


def is_calibration_episode(ep: Episode) -> bool:
    return (len(ep.transitions) == 58
            and all(tr.primitive.id == i for i, tr in enumerate(ep.transitions)))


def demo_seeds_of(episodes: list[Episode]) -> dict[str, list[int]]:
    """Demonstration layout seeds per task (calibration sweeps excluded)."""
    seeds: dict[str, list[int]] = {}
    for ep in episodes:
        teleop_only = all(tr.source.value == "teleop" for tr in ep.transitions)
        if teleop_only and not is_calibration_episode(ep):
            bucket = seeds.setdefault(ep.task_id, [])
            if ep.seed not in bucket:
                bucket.append(ep.seed)
    return seeds


def evaluate(params: EncoderParams, vocab: PrimitiveVocabulary, task_id: str,
             rollouts, perturbed: bool = True, planar: float = 0.05,
             control: ControlConfig | None = None,
             cache: PrimitiveCache | None = None) -> float:
    """Success rate over (layout seed, perturbation draw) rollouts.

    Perturbed rollouts restart demonstrated layouts with the gripper
    displaced in the plane: the off-demonstration condition the augmentation
    exists to cover. Unperturbed rollouts start from the home pose.
    """
    task = get_task(task_id)
    cache = cache or PrimitiveCache(vocab, params)
    rollouts = list(rollouts)
    wins = 0
    for seed, draw in rollouts:
        if perturbed:
            state = perturbed_world(task, int(seed), planar=planar, draw=int(draw))
        else:
            state = init_world(task, int(seed))
        result = run_episode(params, state, task, vocab, control, cache=cache)
        wins += int(result.success)
    return wins / len(rollouts)


def eval_rollout_plan(demo_seeds: list[int], n_rollouts: int) -> list[tuple[int, int]]:
    """(layout seed, perturbation draw) pairs cycling through the seeds."""
    plan: list[tuple[int, int]] = []
    draw = 0
    while len(plan) < n_rollouts:
        for seed in demo_seeds:
            plan.append((seed, draw))
            if len(plan) == n_rollouts:
                break
        draw += 1
    return plan


def run_benchmark(config: BenchConfig,
                  episodes: list[Episode] | None = None) -> list[BenchCell]:
    """Grid over (variant, task, regime, shots); missing cells are marked
    absent and the run continues."""
    vocab = canonical_vocabulary()
    token_vocab = action_token_vocabulary(vocab)
    episodes = episodes if episodes is not None else collect_corpus(config)
    cells: list[BenchCell] = []
    trained: dict[tuple, tuple[EncoderParams, int] | None] = {}

    for variant in config.variants:
        use_vocab = token_vocab if variant == "action-token" else vocab
        for regime in config.regimes:
            for shots in config.shots:
                for task_id in config.tasks:
                    if regime == "multi":
                        key = (variant, regime, shots)
                        task_filter = lambda t: t in config.tasks  # noqa: E731
                    else:
                        key = (variant, regime, shots, task_id)
                        task_filter = lambda t, this=task_id: t == this  # noqa: E731
                    if key not in trained:
                        try:
                            transitions = _variant_dataset(
                                episodes, variant, task_filter, shots,
                                vocab, token_vocab)
                            result = train(transitions, config.train)
                            trained[key] = (result.params, len(transitions))
                        except ValueError as err:
                            logger.warning("cell %s unavailable: %s", key, err)
                            trained[key] = None
                    entry = trained[key]
                    if entry is None:
                        cells.append(BenchCell(variant, task_id, regime, shots,
                                               None, 0, 0, note="absent"))
                        continue
                    params, n_transitions = entry
                    plan = eval_rollout_plan(
                        demo_seeds_of(episodes).get(task_id, [0]),
                        config.eval_rollouts)
                    rate = evaluate(params, use_vocab, task_id, plan,
                                    perturbed=config.perturbed_start)
                    cells.append(BenchCell(variant, task_id, regime, shots,
                                           rate, config.eval_rollouts,
                                           n_transitions))
    return cells


def cells_to_csv(cells: list[BenchCell], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("variant,task,regime,shots,success_rate,rollouts,transitions,note\n")
        for c in cells:
            rate = "" if c.success_rate is None else repr(c.success_rate)
            fh.write(f"{c.variant},{c.task},{c.regime},{c.shots},{rate},"
                     f"{c.rollouts},{c.transitions},{c.note}\n")


def summarize(cells: list[BenchCell]) -> str:
    lines = ["variant      task     regime shots  rate"]
    for c in cells:
        rate = " absent" if c.success_rate is None else f"{c.success_rate:6.2f}"
        lines.append(f"{c.variant:<12} {c.task:<8} {c.regime:<6} "
                     f"{str(c.shots):<6}{rate}")
    return "\n".join(lines)


# --- focused experiments -----------------------------------------------------------

@dataclass
class AblationReport:
    per_task: dict[str, dict[str, float]]
    aggregate_full: float
    aggregate_passive: float

    @property
    def aggregate_gap(self) -> float:
        return self.aggregate_full - self.aggregate_passive


def ablation_experiment(master_seed: int = 0, rollouts_per_task: int = 20,
                        demos_per_task: int = 10, augmentations: int = 3,
                        train_config: TrainConfig | None = None,
                        tasks=DEFAULT_TASKS) -> AblationReport:
    """Full (with augmentation) vs passive (teleop only), perturbed starts."""
    config = BenchConfig(tasks=tuple(tasks), variants=("full", "passive"),
                         demos_per_task=demos_per_task,
                         augmentations=augmentations,
                         eval_rollouts=rollouts_per_task,
                         master_seed=master_seed,
                         train=train_config or TrainConfig())
    episodes = collect_corpus(config)
    vocab = canonical_vocabulary()
    token_vocab = action_token_vocabulary(vocab)
    seeds_by_task = demo_seeds_of(episodes)
    per_task: dict[str, dict[str, float]] = {t: {} for t in config.tasks}
    # one policy per task: at this scale the instruction conditioning is too
    # weak for a single multi-task policy, and the augmentation contrast is
    # what the experiment isolates
    for task_id in config.tasks:
        plan = eval_rollout_plan(seeds_by_task[task_id], rollouts_per_task)
        for variant in ("full", "passive"):
            transitions = _variant_dataset(episodes, variant,
                                           lambda t, this=task_id: t == this,
                                           "all", vocab, token_vocab)
            params = train(transitions, config.train).params
            per_task[task_id][variant] = evaluate(
                params, vocab, task_id, plan, perturbed=True)
    agg_full = float(np.mean([per_task[t]["full"] for t in config.tasks]))
    agg_passive = float(np.mean([per_task[t]["passive"] for t in config.tasks]))
    return AblationReport(per_task=per_task, aggregate_full=agg_full,
                          aggregate_passive=agg_passive)


def weakened_checkpoint(episodes: list[Episode], train_config: TrainConfig,
                        fraction: float = 0.25) -> EncoderParams:
    """Early-stopped training (a fraction of the epochs) for intervention
    studies, leaving headroom for corrections to matter."""
    weak = dc_replace(train_config,
                      epochs=max(int(train_config.epochs * fraction), 1))
    transitions = build_dataset([], episodes=episodes)
    return train(transitions, weak).params


def intervention_sweep(params: EncoderParams, task_id: str,
                       budgets=(0, 2, 4), seeds=range(10),
                       vocab: PrimitiveVocabulary | None = None
                       ) -> dict[int, float]:
    """Success rate per correction budget with the scripted expert."""
    vocab = vocab or canonical_vocabulary()
    task = get_task(task_id)
    cache = PrimitiveCache(vocab, params)
    correction = make_correction_source()
    rates: dict[int, float] = {}
    for budget in budgets:
        wins = 0
        n = 0
        for seed in seeds:
            state = perturbed_world(task, int(seed))
            cfg = ControlConfig(intervention_budget=budget,
                                correction_source=correction)
            result = run_episode(params, state, task, vocab, cfg, cache=cache)
            assert result.interventions_used <= budget
            wins += int(result.success)
            n += 1
        rates[budget] = wins / n
    return rates


def latency_probe(params: EncoderParams, vocab: PrimitiveVocabulary | None = None,
                  steps: int = 1000) -> dict[str, float]:
    """Throughput of the scoring path with a warm primitive cache."""
    vocab = vocab or canonical_vocabulary()
    task = get_task("point")
    state = init_world(task, seed=0)
    obs = render(state)
    instruction = task.instruction()
    cache = PrimitiveCache(vocab, params)
    score_primitives(obs, instruction, vocab, params, cache)  # warm
    before = cache.invocations
    t0 = time.perf_counter()
    for _ in range(steps):
        score_primitives(obs, instruction, vocab, params, cache)
    elapsed = time.perf_counter() - t0
    invocations = (cache.invocations - before) / steps
    return {
        "encoder_invocations_per_step": invocations,
        "wall_time_per_step": elapsed / steps,
        "steps_per_second": steps / elapsed if elapsed > 0 else float("inf"),
    }


def monotone(rates: dict[int, float]) -> bool:
    budgets = sorted(rates)
    return all(rates[a] <= rates[b] for a, b in zip(budgets, budgets[1:]))


def load_bench_config(path) -> BenchConfig:
    """Declarative JSON config; unknown keys are rejected."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    train_raw = raw.pop("train", {})
    known = {f for f in BenchConfig.__dataclass_fields__} - {"train"}
    stray = set(raw) - known
    if stray:
        raise ValueError(f"unknown benchmark config keys: {sorted(stray)}")
    for key in ("tasks", "variants", "regimes", "shots"):
        if key in raw:
            raw[key] = tuple(raw[key])
    return BenchConfig(train=TrainConfig(**train_raw), **raw)


def run_benchmark_file(config_path, csv_path=None, summary_path=None) -> int:
    """Run a config file, write CSV and summary, return a process exit code.

    Exit is nonzero if a directional property asserted by the config fails:
    with both the full and passive variants present, full must beat passive
    on the aggregate; with both regimes present, multi must not lose to
    single on the aggregate.
    """
    config = load_bench_config(config_path)
    cells = run_benchmark(config)
    if csv_path:
        cells_to_csv(cells, csv_path)
    text = summarize(cells)
    if summary_path:
        with open(summary_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    logger.info("benchmark summary:\n%s", text)

    def agg(variant: str, regime: str | None = None) -> float | None:
        rates = [c.success_rate for c in cells
                 if c.variant == variant and c.success_rate is not None
                 and (regime is None or c.regime == regime)]
        return float(np.mean(rates)) if rates else None

    failed = False
    full, passive = agg("full"), agg("passive")
    if full is not None and passive is not None and full < passive:
        logger.error("directional check failed: full %.3f < passive %.3f",
                     full, passive)
        failed = True
    multi, single = agg("full", "multi"), agg("full", "single")
    if multi is not None and single is not None and multi < single:
        logger.error("directional check failed: multi %.3f < single %.3f",
                     multi, single)
        failed = True
    return 1 if failed else 0
