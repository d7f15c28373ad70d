"""Batch entry point: run episodes, sweep experiment grids, fit
inequity-aversion coefficients, and verify logs by replay.

Exit codes: 0 success, 2 config error, 3 runtime invariant violation,
4 replay mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from itertools import product

from . import iafit, reports
from .config import ConfigError, EpisodeConfig, split_seed
from .engine import run_episode
from .logio import EpisodeLog
from .policies import (AlwaysTeachPolicy, FlatTaxPlanner, NoOpPolicy,
                       RandomPolicy, RandomTaxPlanner,
                       RoundRobinRankingPlanner, SoftmaxLearner)
from .replay import ReplayMismatch, verify

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_REPLAY = 4

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

AGENT_POLICIES = ("random", "noop", "teach", "softmax")
PLANNER_POLICIES = ("flat", "random", "roundrobin")


def build_agent_policies(name: str, config: EpisodeConfig):
    if name == "random":
        return [RandomPolicy() for _ in range(config.n_agents)]
    if name == "noop":
        return [NoOpPolicy() for _ in range(config.n_agents)]
    if name == "teach":
        return [AlwaysTeachPolicy() for _ in range(config.n_agents)]
    if name == "softmax":
        return [SoftmaxLearner() for _ in range(config.n_agents)]
    raise ConfigError(f"unknown agent policy {name!r}; choose from {AGENT_POLICIES}")


def build_planner_policy(name: str, rate: float, config: EpisodeConfig):
    if name == "flat":
        ranking = (0, 1, 2, 3) if config.system == "full_utilitarian" else None
        return FlatTaxPlanner(rate, ranking)
    if name == "random":
        return RandomTaxPlanner()
    if name == "roundrobin":
        return RoundRobinRankingPlanner(rate)
    raise ConfigError(f"unknown planner policy {name!r}; choose from {PLANNER_POLICIES}")


def load_config(args) -> EpisodeConfig:
    if args.config:
        cfg = EpisodeConfig.from_toml(args.config)
    else:
        cfg = EpisodeConfig()
    overrides = {}
    for key in ("variant", "system", "objective", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if overrides:
        data = cfg.to_dict()
        data.update(overrides)
        data["bracket_cutoffs"] = tuple(data["bracket_cutoffs"])
        data["initial_rates"] = tuple(data["initial_rates"])
        cfg = EpisodeConfig.from_dict(data)
    return cfg


# -- subcommands ---------------------------------------------------------------

def cmd_run(args) -> int:
    config = load_config(args)
    agent_policies = build_agent_policies(args.policy, config)
    planner = build_planner_policy(args.planner, args.planner_rate, config)
    log = run_episode(config, agent_policies, planner)
    written = reports.write_run_outputs(log, args.out, plots=args.plots)
    print(f"run complete: seed={config.seed} digest={config.digest()} "
          f"final_alignment={log.summary['final_alignment']}")
    for path in written:
        print(f"  wrote {path}")
    return EXIT_OK


def _sweep_worker(task):
    index, cfg_data, policy, planner_name, planner_rate, outdir, plots = task
    try:
        config = EpisodeConfig.from_dict(cfg_data)
        agents = build_agent_policies(policy, config)
        planner = build_planner_policy(planner_name, planner_rate, config)
        log = run_episode(config, agents, planner)
        reports.write_run_outputs(log, outdir, plots=plots)
        digest = reports.run_digest(log, config.variant, config.system, config.objective)
        return index, digest, None
    except Exception as exc:  # isolate per-run failures
        return index, None, f"{type(exc).__name__}: {exc}"


def cmd_sweep(args) -> int:
    try:
        with open(args.manifest, "rb") as fh:
            manifest = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"manifest not found: {args.manifest}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{args.manifest}: {exc}")

    variants = manifest.get("variants", [])
    systems = manifest.get("systems", [])
    objectives = manifest.get("objectives", [])
    seeds = manifest.get("seeds", [])
    master = manifest.get("master_seed", 0)
    policy = manifest.get("policy", "random")
    planner_name = manifest.get("planner", "flat")
    planner_rate = manifest.get("planner_rate", 0.1)
    base = manifest.get("config", {})

    grid = list(product(variants, systems, objectives, seeds))
    if not grid:
        print("warning: empty sweep grid, nothing to run")
        return EXIT_OK

    os.makedirs(args.out, exist_ok=True)
    tasks, entries = [], []
    for index, (variant, system, objective, seed_idx) in enumerate(grid):
        cfg_data = EpisodeConfig().to_dict()
        cfg_data.update(base)
        cfg_data.update({"variant": variant, "system": system,
                         "objective": objective,
                         "seed": split_seed(master, index)})
        config = EpisodeConfig.from_dict(cfg_data)  # validate up front
        name = f"run_{index:03d}_{variant}_{system}_{objective}_s{seed_idx}"
        outdir = os.path.join(args.out, name)
        tasks.append((index, config.to_dict(), policy, planner_name,
                      planner_rate, outdir, args.plots))
        entries.append({"index": index, "name": name, "variant": variant,
                        "system": system, "objective": objective,
                        "seed": config.seed, "config_digest": config.digest()})

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_worker, tasks))
    else:
        results = [_sweep_worker(task) for task in tasks]
    results.sort(key=lambda r: r[0])

    digests, failures = [], []
    for index, digest, error in results:
        if error is not None:
            failures.append((index, error))
            print(f"run {index} FAILED: {error}", file=sys.stderr)
        else:
            digests.append(digest)

    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump({"experiment": manifest.get("experiment", "sweep"),
                   "master_seed": master, "runs": entries,
                   "failures": [i for i, _ in failures]},
                  fh, indent=2, sort_keys=True)
    reports.write_dict_csv(os.path.join(args.out, "summary.csv"),
                           reports.pooled_summary(digests))
    reports.write_dict_csv(os.path.join(args.out, "correlations.csv"),
                           reports.correlation_report(digests))
    if args.plots and digests:
        reports.plot_correlations(digests, os.path.join(args.out, "correlations.png"))
    print(f"sweep complete: {len(digests)} runs ok, {len(failures)} failed")
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_fit(args) -> int:
    path = args.input
    if not os.path.exists(path):
        raise ConfigError(f"input not found: {path}")
    try:
        if path.endswith(".csv"):
            rewards = iafit.read_reward_csv(path)
        else:
            log = EpisodeLog.read(path)
            rewards = [[step["rewards"][i] for step in log.steps]
                       for i in range(len(log.steps[0]["rewards"]))]
    except ValueError as exc:
        raise ConfigError(str(exc))
    results = iafit.fit_all(rewards, gamma=args.gamma, lam=args.lam,
                            window=args.window, stride=args.stride)
    os.makedirs(args.out, exist_ok=True)
    out_csv = os.path.join(args.out, "fits.csv")
    iafit.write_fit_csv(out_csv, results)
    print(f"wrote {out_csv}")
    if args.plots:
        out_png = os.path.join(args.out, "fits.png")
        reports.plot_fits(results, out_png)
        print(f"wrote {out_png}")
    for res in results:
        flag = "" if res.identifiable else " (unidentifiable)"
        win = f" window={res.window}" if res.window else ""
        print(f"agent {res.agent}: alpha={res.alpha} beta={res.beta} "
              f"residual={res.residual:.6g}{flag}{win}")
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        log = EpisodeLog.read(args.log)
    except (ValueError, FileNotFoundError) as exc:
        raise ConfigError(str(exc))
    try:
        checked = verify(log)
    except ReplayMismatch as exc:
        print(f"replay mismatch: {exc}", file=sys.stderr)
        return EXIT_REPLAY
    print(f"replay ok: {checked} steps verified")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gtbsim")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one episode and write reports")
    run.add_argument("--config", help="TOML config file (defaults otherwise)")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", required=True)
    run.add_argument("--variant", choices=("communication", "teaching"))
    run.add_argument("--system", choices=("full_libertarian",
                                          "semi_libertarian_utilitarian",
                                          "full_utilitarian"))
    run.add_argument("--objective", choices=("inverse_income", "eq_times_prod"))
    run.add_argument("--policy", default="random", choices=AGENT_POLICIES)
    run.add_argument("--planner", default="flat", choices=PLANNER_POLICIES)
    run.add_argument("--planner-rate", type=float, default=0.1)
    run.add_argument("--no-plots", dest="plots", action="store_false")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a variant x system x objective grid")
    sweep.add_argument("manifest", help="TOML sweep manifest")
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.add_argument("--no-plots", dest="plots", action="store_false")
    sweep.set_defaults(func=cmd_sweep)

    fit = sub.add_parser("fit", help="fit inequity-aversion coefficients")
    fit.add_argument("--input", required=True,
                     help="episode.jsonl or (t, agent_id, reward) CSV")
    fit.add_argument("--out", required=True)
    fit.add_argument("--gamma", type=float, default=0.99)
    fit.add_argument("--lambda", dest="lam", type=float, default=0.5)
    fit.add_argument("--window", type=int)
    fit.add_argument("--stride", type=int)
    fit.add_argument("--no-plots", dest="plots", action="store_false")
    fit.set_defaults(func=cmd_fit)

    replay = sub.add_parser("replay", help="verify a log against re-derived values")
    replay.add_argument("log", help="episode.jsonl to verify")
    replay.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReplayMismatch as exc:
        print(f"replay mismatch: {exc}", file=sys.stderr)
        return EXIT_REPLAY
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
