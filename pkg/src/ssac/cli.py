"""Command line: ``ssac train | eval | check``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .checks import GRADIENT_TOLERANCE, gradient_suite, invariance_check
from .config import RunConfig, load_config, parse_config, parse_overrides
from .learner import evaluate, train
from .metrics import MetricsWriter, write_probe
from .nn import ConfigurationError, TrainingError
from .safety import check_feasibility

log = logging.getLogger("ssac")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_TRAINING = 0, 1, 2, 3, 4


def _load(args) -> RunConfig:
    overrides = parse_overrides(args.overrides)
    config = load_config(args.config, overrides) if args.config else parse_config("", "<defaults>", overrides)
    if getattr(args, "seed", None) is not None:
        config = config.with_seed(args.seed)
    return config


def _feasibility(config: RunConfig, n_states=None, grid=None):
    rng = np.random.default_rng(config.run.seed + 7919)
    return check_feasibility(
        config.env, config.safety_index, n_states or config.run.feasibility_states,
        grid or config.run.feasibility_grid, rng,
    )


def cmd_train(args) -> int:
    config = _load(args)
    out = Path(args.out or config.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = _feasibility(config)
    print(f"feasibility: {report.summary()}")
    if not report.feasible and not args.allow_infeasible:
        print("error: safety index parameters leave states with an empty control safe set; "
              "aborting (use --allow-infeasible to override)", file=sys.stderr)
        return EXIT_INFEASIBLE
    (out / "config.ini").write_text(config.to_text())
    rng = np.random.default_rng(config.run.seed)
    eval_rng = np.random.default_rng(config.run.seed + 1)
    eval_file = None
    if config.run.eval_interval:
        eval_file = open(out / "eval.csv", "w")
        eval_file.write("iteration,mean_return,violation_steps,episodes\n")

    with MetricsWriter(out / "metrics.csv") as writer:
        def on_iteration(row, agent):
            writer.write(row)
            if config.run.checkpoint_interval and row.iteration % config.run.checkpoint_interval == 0:
                save_checkpoint(out / f"checkpoint_{row.iteration:06d}.npz", agent, config, rng)
            if eval_file and row.iteration % config.run.eval_interval == 0:
                reps = evaluate(agent, config.env, config.safety_index, config.run.eval_episodes, eval_rng)
                eval_file.write(
                    f"{row.iteration},{float(np.mean([r.episode_return for r in reps]))!r},"
                    f"{sum(r.violation_steps for r in reps)},{len(reps)}\n"
                )
                eval_file.flush()

        try:
            agent, rows = train(config.env, config.learner, config.safety_index, rng, on_iteration)
        except TrainingError as exc:
            snap = getattr(exc, "snapshot", None)
            if snap is not None:
                save_checkpoint(out / "diagnostic.npz", snap, config, rng, {"error": str(exc)})
            print(f"error: training aborted at iteration {getattr(exc, 'iteration', '?')}: {exc}", file=sys.stderr)
            return EXIT_TRAINING
        finally:
            if eval_file:
                eval_file.close()
    save_checkpoint(out / "final.npz", agent, config, rng)
    last = rows[-1]
    print(f"done: {len(rows)} iterations, {last.env_steps} env steps, cost_rate={last.cost_rate:.6f}, "
          f"cumulative_cost={last.cumulative_cost:g}; wrote {out / 'metrics.csv'} and {out / 'final.npz'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if not args.checkpoint:
        print("error: eval needs --checkpoint", file=sys.stderr)
        return EXIT_CONFIG
    agent, config, meta = load_checkpoint(args.checkpoint)
    if args.config:
        other = _load(args)
        if (other.env.obs_dim, other.env.n_hazards) != (config.env.obs_dim, config.env.n_hazards):
            raise ConfigurationError(
                f"{args.config}: environment has {other.env.n_hazards} hazards, "
                f"checkpoint was trained with {config.env.n_hazards}"
            )
        config = other
    seed = args.seed if args.seed is not None else config.run.seed
    reps = evaluate(agent, config.env, config.safety_index, args.episodes, np.random.default_rng(seed + 1), args.deterministic)
    report = {
        "episodes": len(reps),
        "deterministic": bool(args.deterministic),
        "mean_return": float(np.mean([r.episode_return for r in reps])) if reps else float("nan"),
        "mean_length": float(np.mean([r.steps for r in reps])) if reps else float("nan"),
        "total_violation_steps": int(sum(r.violation_steps for r in reps)),
        "episodes_with_violation": int(sum(r.violation_steps > 0 for r in reps)),
        "max_phi": max((max(r.probe.phi_max) for r in reps), default=float("nan")),
    }
    print(json.dumps(report, indent=2))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval_report.json").write_text(json.dumps(report, indent=2) + "\n")
        if args.probe:
            for i, r in enumerate(reps):
                write_probe(out / f"probe_{i:03d}.csv", r.probe)
    elif args.probe:
        print("warning: --probe needs --out DIR; probes not written", file=sys.stderr)
    return EXIT_OK


def cmd_check(args) -> int:
    what = args.what
    if what == "gradients":
        seeds = range(args.seeds)
        worst = gradient_suite(seeds)
        ok = all(err < GRADIENT_TOLERANCE for err in worst.values())
        for name, err in worst.items():
            print(f"{'PASS' if err < GRADIENT_TOLERANCE else 'FAIL'} {name:<10} max_rel_err={err:.3e}")
        return EXIT_OK if ok else EXIT_FAIL
    if what == "feasibility":
        config = _load(args)
        report = _feasibility(config, args.states, args.grid)
        print(f"{'PASS' if report.feasible else 'FAIL'} feasibility {report.summary()}")
        if report.worst_state is not None:
            print(f"worst state: position={report.worst_state.position.tolist()} "
                  f"velocity={report.worst_state.velocity.tolist()}")
        return EXIT_OK if report.feasible else EXIT_FAIL
    if what == "invariance":
        if not args.checkpoint:
            print("error: invariance check needs --checkpoint", file=sys.stderr)
            return EXIT_CONFIG
        agent, config, _ = load_checkpoint(args.checkpoint)
        seed = args.seed if args.seed is not None else config.run.seed
        rep = invariance_check(agent, config.env, config.safety_index, args.states, np.random.default_rng(seed + 2))
        print(f"{'PASS' if rep.passed else 'FAIL'} invariance start_states={rep.start_states} "
              f"escapes={rep.escapes} steps={rep.total_steps} max_phi0={rep.max_phi0:.4f}")
        for p, v in rep.escaped_from:
            print(f"escape from position={p} velocity={v}")
        return EXIT_OK if rep.passed else EXIT_FAIL
    raise AssertionError(what)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssac", description="Safe set actor-critic on a 2D navigation task.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("overrides", nargs="*", help="dotted overrides, e.g. learner.m_pi=3")

    p = sub.add_parser("train", help="train an agent and write metrics.csv and checkpoints")
    common(p)
    p.add_argument("--out", help="output directory (default: run.out_dir)")
    p.add_argument("--allow-infeasible", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--probe", action="store_true", help="write per-episode probe CSVs into --out")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check", help="run a verification check")
    p.add_argument("what", choices=["gradients", "feasibility", "invariance"])
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--states", type=int, default=None)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    # Overrides may follow options, which argparse leaves unmatched.
    args, extra = parser.parse_known_args(argv)
    bad = [e for e in extra if e.startswith("-") or "=" not in e]
    if bad:
        parser.error(f"unrecognized arguments: {' '.join(bad)}")
    args.overrides = list(args.overrides) + extra
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "check" and args.what == "invariance" and args.states is None:
        args.states = 100
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
