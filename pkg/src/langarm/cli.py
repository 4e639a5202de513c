"""Thin command-line front for the library surfaces.

Each subcommand maps onto one library call; no logic lives here.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np


def _cmd_augment(args) -> int:
    from .augment import augment_trajectory
    from .teleop import load_episode, save_episode

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    count = 0
    for path in sorted(Path(args.in_dir).glob("*.jsonl")):
        episode = load_episode(path)
        for i, aug in enumerate(augment_trajectory(episode, n_aug=args.n, rng=rng)):
            save_episode(aug, out_dir / f"{path.stem}-aug{i}.jsonl")
            count += 1
    print(f"wrote {count} augmented episodes to {out_dir}")
    return 0


def _cmd_train(args) -> int:
    from .data import build_dataset
    from .training import TrainConfig, TrainResult, save_checkpoint, train

    transitions = build_dataset([args.data], include_sta=not args.passive,
                                few_shot_n=args.few_shot)
    config = TrainConfig(seed=args.seed, epochs=args.epochs,
                         batch_size=args.batch_size,
                         learning_rate=args.learning_rate)
    result = train(transitions, config)
    save_checkpoint(result, args.out)
    print(f"trained on {len(transitions)} transitions; "
          f"loss {result.loss_trace[0]:.4f} -> {result.loss_trace[-1]:.4f}; "
          f"checkpoint at {args.out}")
    return 0


def _cmd_rollout(args) -> int:
    from .actions import canonical_vocabulary
    from .bench import perturbed_world
    from .control import ControlConfig, PrimitiveCache, run_episode
    from .expert import make_correction_source
    from .training import load_checkpoint
    from .world import get_task, init_world

    params = load_checkpoint(args.ckpt).params
    vocab = canonical_vocabulary()
    task = get_task(args.task)
    cache = PrimitiveCache(vocab, params)
    advisor = None
    if args.guidance == "oracle":
        from .control import scripted_advisor

        advisor = lambda s, t, step: scripted_advisor(s, t, step, alpha=args.alpha)  # noqa: E731
    elif args.guidance == "endpoint":
        from .control import llm_advisor_client
        from .world import render

        advisor = lambda s, t, step: llm_advisor_client(  # noqa: E731
            render(s), t.instruction(), args.endpoint, step=step, alpha=args.alpha)
    correction = make_correction_source() if args.budget > 0 else None
    seeds = [int(s) for s in args.seeds.split(",")] if "," in args.seeds else \
        list(range(*[int(v) for v in args.seeds.split("..")])) if ".." in args.seeds \
        else [int(args.seeds)]
    traces = []
    wins = 0
    for seed in seeds:
        state = perturbed_world(task, seed) if args.perturbed else init_world(task, seed)
        cfg = ControlConfig(advisor=advisor, alpha=args.alpha,
                            intervention_budget=args.budget,
                            correction_source=correction)
        result = run_episode(params, state, task, vocab, cfg, cache=cache)
        wins += int(result.success)
        traces.append({
            "seed": seed, "success": result.success, "steps": result.steps,
            "interventions": result.interventions_used,
            "trace": [{"step": s.step, "primitive_id": s.primitive_id,
                       "probability": s.probability, "intervened": s.intervened}
                      for s in result.trace],
        })
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(traces, fh, indent=2)
    print(f"success {wins}/{len(seeds)} on {args.task}")
    return 0


def _cmd_quantize(args) -> int:
    from .data import build_dataset, distortion_sweep, write_distortion_csv

    transitions = build_dataset([args.data])
    ks = [int(k) for k in args.k.split(",")]
    rows = distortion_sweep(transitions, ks, seed=args.seed)
    write_distortion_csv(rows, args.report)
    for k, mean_l1, _ in rows:
        print(f"k={k:<4d} mean L1 distortion {mean_l1:.6f}")
    return 0


def _cmd_serve(args) -> int:
    from .gateway import serve
    from .training import load_checkpoint

    params = load_checkpoint(args.ckpt).params if args.ckpt else None
    running = serve(port=args.port, params=params, episode_dir=args.episodes,
                    background=False)
    running.shutdown()
    return 0


def _cmd_benchmark(args) -> int:
    from .bench import run_benchmark_file

    return run_benchmark_file(args.config, csv_path=args.csv,
                              summary_path=args.summary)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(prog="langarm")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", help="augment recorded episodes")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_augment)

    p = sub.add_parser("train", help="train the dual encoder on episodes")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--learning-rate", type=float, default=0.5)
    p.add_argument("--few-shot", type=int, default=None)
    p.add_argument("--passive", action="store_true",
                   help="drop augmented transitions")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("rollout", help="run the trained policy closed-loop")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--task", default="pick")
    p.add_argument("--seeds", default="0..10",
                   help="single seed, comma list, or start..stop range")
    p.add_argument("--guidance", choices=("none", "oracle", "endpoint"),
                   default="none")
    p.add_argument("--endpoint", default=None)
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--budget", type=int, default=0)
    p.add_argument("--perturbed", action="store_true")
    p.add_argument("--out", default=None, help="JSON trace output path")
    p.set_defaults(fn=_cmd_rollout)

    p = sub.add_parser("quantize", help="per-axis k-means distortion sweep")
    p.add_argument("--data", required=True)
    p.add_argument("--k", default="8,16,32,64,128")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True, help="CSV output path")
    p.set_defaults(fn=_cmd_quantize)

    p = sub.add_parser("serve", help="run the interactive gateway")
    p.add_argument("--port", type=int, default=8173)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--episodes", default="./episodes")
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("benchmark", help="run a declarative benchmark config")
    p.add_argument("--config", required=True)
    p.add_argument("--csv", default=None)
    p.add_argument("--summary", default=None)
    p.set_defaults(fn=_cmd_benchmark)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
