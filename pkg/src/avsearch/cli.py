"""Command-line front end: scenario generation, single runs, benchmarks,
degradation sweeps, and the planner-vs-oracle self check."""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys

from .docking import NoVantagePointError, UnreachableError
from .generator import DIFFICULTIES, GenerationError, generate_scenario, spec_for
from .harness import (
    DEFAULT_RATIOS,
    EPISODE_COLUMNS,
    POLICIES,
    SUMMARY_COLUMNS,
    SWEEP_COLUMNS,
    EpisodeConfig,
    RunMatrix,
    World,
    format_summary,
    run_bench,
    run_episode,
    solver_vs_oracle,
    sweep_degradation,
    write_csv,
)
from .perception import DetectorProfile
from .pomcp import PomdpConfig
from .scenario import ScenarioError, save_scenario
from .toys import toy_suite
from .world import DomainError


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master random seed")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--config", default=None, help="JSON file with flag defaults")


def _add_detector(p: argparse.ArgumentParser) -> None:
    p.add_argument("--miss-rate", type=float, default=0.0)
    p.add_argument("--fp-rate", type=float, default=0.0)
    p.add_argument("--loc-noise", type=float, default=0.0)


def _add_solver(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-sim", type=int, default=4096, help="simulations per planning step")
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--ucb-c", type=float, default=100.0)
    p.add_argument("--max-depth", type=int, default=60)
    p.add_argument("--particles", type=int, default=128)
    p.add_argument("--engine", choices=("native", "python"), default="native")


def build_parser() -> tuple[argparse.ArgumentParser, list[argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="avsearch",
        description="Active object search on grid maps: online Monte-Carlo "
        "planning, visual docking, baselines and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = []

    g = sub.add_parser("gen", help="generate scenario files")
    g.add_argument("--difficulty", choices=DIFFICULTIES, default="medium")
    g.add_argument("--count", type=int, default=1, help="number of maps")
    g.add_argument("--width", type=int, default=None)
    g.add_argument("--height", type=int, default=None)
    g.add_argument("--rooms", type=int, default=None)
    g.add_argument("--candidates", type=int, default=None)
    g.add_argument("--objects", type=int, default=None)
    g.add_argument("--starts", type=int, default=None)
    g.add_argument("--headings", type=int, default=None)
    g.add_argument("--min-start-distance", type=int, default=None)
    _add_common(g)
    g.set_defaults(func=cmd_gen)
    subparsers.append(g)

    r = sub.add_parser("run", help="run one episode and print the result")
    r.add_argument("--scenario", required=True)
    r.add_argument("--policy", choices=POLICIES, default="pomp")
    r.add_argument("--start", default=None, help="start pose name (default: first)")
    r.add_argument("--target", type=int, default=None, help="target object id")
    r.add_argument("-v", "--verbose", action="store_true", help="per-step trace")
    _add_detector(r)
    _add_solver(r)
    _add_common(r)
    r.set_defaults(func=cmd_run)
    subparsers.append(r)

    b = sub.add_parser("bench", help="run the episode matrix, write CSVs")
    b.add_argument("--scenarios", nargs="*", default=None, help="scenario files")
    b.add_argument("--dir", default=None, help="directory of .scn files")
    b.add_argument("--policies", default="pomp,partial-pomp,random")
    b.add_argument("--targets", type=int, default=0, help="first N targets (0 = all)")
    b.add_argument("--starts", type=int, default=0, help="first N starts (0 = all)")
    b.add_argument("--reps", type=int, default=1, help="seeds per (target, start)")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--timing", action="store_true", help="report per-step planning time")
    _add_detector(b)
    _add_solver(b)
    _add_common(b)
    b.set_defaults(func=cmd_bench)
    subparsers.append(b)

    s = sub.add_parser("sweep", help="detector degradation sweep, write CSV")
    s.add_argument("--scenarios", nargs="*", default=None)
    s.add_argument("--dir", default=None)
    s.add_argument("--axis", choices=("miss", "fp"), required=True)
    s.add_argument("--ratios", default=",".join(str(r) for r in DEFAULT_RATIOS))
    s.add_argument("--policies", default="pomp")
    s.add_argument("--targets", type=int, default=0)
    s.add_argument("--starts", type=int, default=0)
    s.add_argument("--reps", type=int, default=1)
    _add_solver(s)
    _add_common(s)
    s.set_defaults(func=cmd_sweep)
    subparsers.append(s)

    o = sub.add_parser("oracle-check", help="planner vs exact expectimax on the toy suite")
    o.add_argument("--trials", type=int, default=100)
    o.add_argument("--n-sim", type=int, default=100_000)
    o.add_argument("--threshold", type=float, default=0.95)
    o.add_argument("--engine", choices=("native", "python"), default="native")
    _add_common(o)
    o.set_defaults(func=cmd_oracle_check)
    subparsers.append(o)

    return parser, subparsers


def cmd_gen(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    overrides = {
        k: getattr(args, k)
        for k in ("width", "height", "rooms", "candidates", "objects",
                  "starts", "headings", "min_start_distance")
        if getattr(args, k) is not None
    }
    for i in range(args.count):
        spec = spec_for(args.difficulty, seed=args.seed + i, **overrides)
        sc = generate_scenario(spec)
        path = os.path.join(args.out, f"{args.difficulty}_{args.seed + i:03d}.scn")
        save_scenario(sc, path)
        print(path)
    return 0


def _episode_config(args, policy=None, target=None, start=None, seed=None) -> EpisodeConfig:
    return EpisodeConfig(
        policy=policy if policy is not None else args.policy,
        target=target if target is not None else 0,
        start=start if start is not None else "s00",
        seed=seed if seed is not None else args.seed,
        profile=DetectorProfile(
            getattr(args, "miss_rate", 0.0),
            getattr(args, "fp_rate", 0.0),
            getattr(args, "loc_noise", 0.0),
        ),
        solver=PomdpConfig(
            gamma=args.gamma, n_sim=args.n_sim, ucb_c=args.ucb_c,
            max_depth=args.max_depth, min_particles=args.particles, seed=args.seed,
        ),
        engine=args.engine,
    )


def cmd_run(args) -> int:
    world = World.from_file(args.scenario)
    start = args.start or next(iter(world.scenario.starts))
    target = args.target if args.target is not None else world.scenario.layout.target_index
    cfg = _episode_config(args, target=target, start=start)
    res = run_episode(cfg, world)
    if args.verbose:
        for i, pid in enumerate(res.trajectory):
            pose = world.graph.poses[pid]
            phase = "explore" if i <= res.exploration_length else "dock"
            print(f"step {i:4d} {phase:8s} pose=({pose.x},{pose.y},{pose.theta})")
    print(
        f"policy={cfg.policy} target={target} start={start} seed={cfg.seed} "
        f"success={res.success} path_length={res.path_length} "
        f"exploration_length={res.exploration_length} failure={res.failure_kind}"
    )
    return 0


def _load_worlds(args) -> list[World]:
    paths = list(args.scenarios or [])
    if args.dir:
        paths.extend(sorted(glob.glob(os.path.join(args.dir, "*.scn"))))
    if not paths:
        raise ScenarioError("no scenarios given (use --scenarios or --dir)")
    return [World.from_file(p) for p in paths]


def _matrix(args, world_sample: World | None = None) -> RunMatrix:
    targets = tuple(range(args.targets)) if args.targets else ()
    starts = ()
    if args.starts and world_sample is not None:
        starts = tuple(list(world_sample.scenario.starts)[: args.starts])
    elif args.starts:
        starts = tuple(f"s{i:02d}" for i in range(args.starts))
    return RunMatrix(targets=targets, starts=starts, reps=args.reps)


def cmd_bench(args) -> int:
    worlds = _load_worlds(args)
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    base = _episode_config(args, policy=policies[0])
    bench = run_bench(
        worlds, policies, _matrix(args), master_seed=args.seed, base=base, jobs=args.jobs
    )
    os.makedirs(args.out, exist_ok=True)
    epi_path = os.path.join(args.out, "episodes.csv")
    sum_path = os.path.join(args.out, "summary.csv")
    write_csv(epi_path, EPISODE_COLUMNS, bench.rows)
    write_csv(sum_path, SUMMARY_COLUMNS, bench.summaries)
    for s in bench.summaries:
        if s["scenario"] == "ALL":
            from .harness import MetricsSummary

            ms = MetricsSummary(s["sr"], s["apl"], s["asppl_mean"], s["asppl_std"], s["episodes"])
            print(f"{s['policy']:14s} {format_summary(ms)}  ({s['episodes']} episodes)")
    if args.timing:
        med = bench.median_plan_seconds()
        if med is not None:
            print(f"median planning step: {med * 1000:.1f} ms over {len(bench.plan_seconds)} steps")
    print(f"wrote {epi_path} and {sum_path}")
    return 0


def cmd_sweep(args) -> int:
    worlds = _load_worlds(args)
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    ratios = tuple(float(r) for r in args.ratios.split(","))
    base = _episode_config(args, policy=policies[0])
    rows = sweep_degradation(
        worlds, args.axis, ratios, _matrix(args), master_seed=args.seed,
        base=base, policies=policies,
    )
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"sweep_{args.axis}.csv")
    write_csv(path, SWEEP_COLUMNS, rows)
    for row in rows:
        apl = f"{row['apl']:.1f}" if row["apl"] is not None else "-"
        print(f"{row['axis']} ratio={row['ratio']:.1f} policy={row['policy']} "
              f"sr={row['sr']:.3f} apl={apl}")
    print(f"wrote {path}")
    return 0


def cmd_oracle_check(args) -> int:
    failed = False
    for toy in toy_suite():
        check = solver_vs_oracle(
            toy, trials=args.trials, n_sim=args.n_sim,
            master_seed=args.seed, engine=args.engine,
        )
        ok = check.optimal_rate >= args.threshold and check.value_rate >= args.threshold
        failed |= not ok
        print(
            f"{'PASS' if ok else 'FAIL'} {toy.name:18s} "
            f"optimal {check.optimal_rate:.2f} value-ok {check.value_rate:.2f} "
            f"oracle V*={check.oracle_value:.3f} actions={sorted(check.optimal_actions)}"
        )
    return 1 if failed else 0


def main(argv=None) -> int:
    parser, subparsers = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--config" in argv:
        cfg_path = argv[argv.index("--config") + 1]
        with open(cfg_path, "r", encoding="utf-8") as f:
            defaults = json.load(f)
        for sp in subparsers:
            sp.set_defaults(**defaults)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        ScenarioError, DomainError, GenerationError,
        NoVantagePointError, UnreachableError, OSError, ValueError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def cli_dispatch(argv) -> int:
    """argv (without the program name) -> exit code; usage errors are 2."""
    try:
        return main(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
