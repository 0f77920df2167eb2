"""Episode orchestration and evaluation: exploration-then-docking episodes
for the planner and the baseline policies, success/path-length metrics,
degradation sweeps, and CSV emission."""

from __future__ import annotations

import csv
import random
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _native, docking, pomcp
from .docking import (
    NoVantagePointError,
    UnreachableError,
    ground_truth_destinations,
    make_plan,
)
from .perception import (
    NO_DETECTION,
    DetectorNoise,
    DetectorProfile,
    fp_view_rate_for,
    observe,
    planner_observation,
)
from .pomcp import Belief, PomdpConfig, SearchNode, plan, prune_tree, update_belief
from .scenario import Scenario, load_scenario
from .world import (
    Action,
    AvsModel,
    CandidateSet,
    ObjectLayout,
    build_pose_graph,
    build_visibility_matrix,
    legal_actions,
)

POMP = "pomp"
PARTIAL_POMP = "partial-pomp"
RANDOM_WALK = "random"
POLICIES = (POMP, PARTIAL_POMP, RANDOM_WALK)

FAIL_NONE = "none"
FAIL_MOVE_BUDGET = "move_budget"
FAIL_NO_VANTAGE = "no_vantage_point"
FAIL_UNREACHABLE = "unreachable"


class World:
    """A scenario compiled for planning: pose graph, candidate set and the
    precomputed visibility matrix. Immutable; shareable across episodes."""

    def __init__(self, scenario: Scenario, name: str = "scenario"):
        self.scenario = scenario
        self.name = name
        self.grid = scenario.grid
        self.graph = build_pose_graph(scenario.grid, scenario.headings)
        self.candidates = CandidateSet(scenario.grid)
        self.vis = build_visibility_matrix(
            scenario.grid, self.graph, self.candidates, scenario.vis
        )
        self.vis_u8 = self.vis.astype(np.uint8)
        self.rewards = scenario.rewards
        self._dest_cache: dict = {}
        self._dist_cache: dict = {}

    @classmethod
    def from_file(cls, path) -> "World":
        import os

        return cls(load_scenario(path), name=os.path.splitext(os.path.basename(path))[0])

    def model(self, target_index: int) -> AvsModel:
        placements = self.scenario.layout.placements
        scenery = tuple(c for i, c in enumerate(placements) if i != target_index)
        return AvsModel(
            self.graph, self.vis, self.candidates, self.rewards,
            scenery=scenery, target_index=target_index,
        )

    def layout_for(self, target_index: int) -> ObjectLayout:
        return ObjectLayout(self.scenario.layout.placements, target_index)

    def destinations(self, cell: int, d_success: float) -> set[int]:
        key = (cell, d_success)
        if key not in self._dest_cache:
            self._dest_cache[key] = ground_truth_destinations(
                self.graph, self.vis, self.candidates, cell, d_success
            )
        return self._dest_cache[key]

    def oracle_length(self, start_pid: int, cell: int, d_success: float) -> float:
        """Shortest pose-graph distance from the start to the nearest valid
        destination for `cell`."""
        if start_pid not in self._dist_cache:
            self._dist_cache[start_pid] = docking._distances_from(self.graph, start_pid)
        dist = self._dist_cache[start_pid]
        dests = self.destinations(cell, d_success)
        if not dests:
            return float("inf")
        return float(min(dist[d] for d in dests))


# default planner settings for search episodes; the exploration constant is
# sized against the spread of discounted returns (step costs and revisit
# penalties accumulate), not just the find bonus
DEFAULT_SOLVER = PomdpConfig(min_particles=128, ucb_c=100.0)


@dataclass(frozen=True)
class EpisodeConfig:
    """One episode of the run matrix."""

    policy: str = POMP
    target: int = 0
    start: str = "s00"
    seed: int = 0
    profile: DetectorProfile = DetectorProfile()
    solver: PomdpConfig = DEFAULT_SOLVER
    engine: str = "native"  # "native" | "python"
    d_success: float = 2.0
    dest_metric: str = "euclidean"

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.engine not in ("native", "python"):
            raise ValueError(f"engine must be native or python, got {self.engine!r}")


@dataclass(frozen=True)
class EpisodeResult:
    success: bool
    path_length: int
    exploration_length: int
    trajectory: tuple[int, ...]
    failure_kind: str
    # wall-clock planning times; excluded from equality so identical seeds
    # compare identical
    plan_seconds: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        assert self.path_length == len(self.trajectory) - 1
        assert not (self.success and self.failure_kind != FAIL_NONE)


# ---------------------------------------------------------------------------
# Exploration policies


class _PompNative:
    """Planner policy backed by the compiled kernel; the belief is an array
    of candidate-cell particles (the hidden state is the target placement)."""

    def __init__(self, world: World, target: int, cfg: PomdpConfig, rng, start_pid: int):
        self.world = world
        self.cfg = cfg
        self.rng = rng
        placements = world.scenario.layout.placements
        scenery = set(c for i, c in enumerate(placements) if i != target)
        self.support = np.array(
            [c for c in range(len(world.candidates)) if c not in scenery],
            dtype=np.int32,
        )
        # condition the prior on the silent first glance from the start pose
        col = world.vis[start_pid]
        pool = self.support[~col[self.support]]
        if len(pool) == 0:
            pool = self.support
        self.particles = np.resize(pool, cfg.min_particles)

    def next_action(self, pid: int, visited: set[int], steps: int) -> Action:
        visited_arr = np.zeros(len(self.world.graph), dtype=np.uint8)
        visited_arr[list(visited)] = 1
        seed = int(self.rng.integers(1, 2**31 - 1))
        action, _, _ = _native.plan_avs(
            self.world.graph.neighbors, self.world.vis_u8, self.particles,
            pid, steps, visited_arr, self.world.rewards, self.cfg, seed,
        )
        return Action(action)

    def record(self, new_pid: int, action: Action, obs: int) -> None:
        col = self.world.vis[new_pid]
        survivors = self.particles[col[self.particles] == bool(obs)]
        need = self.cfg.min_particles
        if len(survivors) >= need:
            if len(survivors) > need:
                survivors = self.rng.choice(survivors, size=need, replace=False)
            self.particles = survivors.astype(np.int32)
        elif len(survivors) > 0:
            extra = self.rng.choice(survivors, size=need - len(survivors), replace=True)
            self.particles = np.concatenate([survivors, extra]).astype(np.int32)
        else:
            pool = self.support[col[self.support] == bool(obs)]
            if len(pool) == 0:
                pool = self.support
            self.particles = self.rng.choice(pool, size=need, replace=True).astype(np.int32)


class _PompPython:
    """Planner policy on the pure-Python engine: full POMCP protocol with
    tree reuse across steps."""

    def __init__(self, world: World, target: int, cfg: PomdpConfig, seed: int, start_pid: int):
        self.model = world.model(target)
        self.cfg = cfg
        self.rng = random.Random(seed)
        self.root = SearchNode()
        col = world.vis[start_pid]
        pool = [c for c in self.model.prior_cells if not col[c]]
        if not pool:
            pool = list(self.model.prior_cells)
        cells = [pool[i % len(pool)] for i in range(cfg.min_particles)]
        self.belief = Belief([self.model.make_state(start_pid, c) for c in cells])

    def next_action(self, pid: int, visited: set[int], steps: int) -> Action:
        return Action(plan(self.belief, self.model, self.cfg, root=self.root, rng=self.rng))

    def record(self, new_pid: int, action: Action, obs: int) -> None:
        self.belief = update_belief(
            self.belief, action, obs, self.model, self.cfg, self.rng
        )
        self.root = prune_tree(self.root, action, obs)


class _RandomWalk:
    def __init__(self, world: World, rng):
        self.graph = world.graph
        self.rng = rng

    def next_action(self, pid: int, visited: set[int], steps: int) -> Action:
        return random_walk_policy(pid, self.graph, self.rng)

    def record(self, new_pid: int, action: Action, obs: int) -> None:
        pass


def random_walk_policy(pose_id: int, graph, rng) -> Action:
    """Uniform choice among the feasible actions."""
    acts = legal_actions(pose_id, graph)
    return acts[int(rng.random() * len(acts))]


# ---------------------------------------------------------------------------
# Episode loop


def run_episode(cfg: EpisodeConfig, world: World) -> EpisodeResult:
    """One full search episode: explore until the detector fires or the move
    budget runs out, then dock on the estimated cell (re-planning on fresh
    detections unless the policy disables it). Deterministic given cfg.seed."""
    sc = world.scenario
    if cfg.start not in sc.starts:
        raise ValueError(f"unknown start pose {cfg.start!r}")
    if not (0 <= cfg.target < len(sc.layout.placements)):
        raise ValueError(f"target id {cfg.target} outside layout")
    graph = world.graph
    rcfg = world.rewards
    layout = world.layout_for(cfg.target)
    true_cell = layout.target_cell

    seed_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    solver_rng = np.random.default_rng(seed_seq[0])
    noise = DetectorNoise(
        cfg.profile,
        seed=int(np.random.default_rng(seed_seq[1]).integers(2**31 - 1)),
        fp_view_rate=fp_view_rate_for(world.vis, layout, cfg.profile.fp_rate),
    )
    policy_seed = int(np.random.default_rng(seed_seq[2]).integers(1, 2**31 - 1))

    if cfg.policy in (POMP, PARTIAL_POMP):
        start_pid = graph.index[sc.starts[cfg.start]]
        if cfg.engine == "native":
            policy = _PompNative(world, cfg.target, cfg.solver, solver_rng, start_pid)
        else:
            policy = _PompPython(world, cfg.target, cfg.solver, policy_seed, start_pid)
    else:
        policy = _RandomWalk(world, np.random.default_rng(seed_seq[0]))

    pid = graph.index[sc.starts[cfg.start]]
    visited = {pid}
    trajectory = [pid]
    steps = 0
    plan_times: list[float] = []

    det = observe(world.grid, pid, layout, world.vis, world.candidates, noise)
    while not det.detected:
        if steps >= rcfg.move_budget:
            return EpisodeResult(False, len(trajectory) - 1, steps,
                                 tuple(trajectory), FAIL_MOVE_BUDGET,
                                 tuple(plan_times))
        t0 = time.perf_counter()
        action = policy.next_action(pid, visited, steps)
        if cfg.policy in (POMP, PARTIAL_POMP):
            plan_times.append(time.perf_counter() - t0)
        nxt = graph.successor(pid, action)
        if nxt < 0:
            raise RuntimeError(f"policy chose infeasible action {action!r}")
        pid = nxt
        visited.add(pid)
        steps += 1
        trajectory.append(pid)
        det = observe(world.grid, pid, layout, world.vis, world.candidates, noise)
        policy.record(pid, action, planner_observation(det))
    exploration_length = steps

    # docking phase
    try:
        dplan = make_plan(graph, world.vis, world.candidates, pid,
                          det.estimated_cell, cfg.dest_metric)
    except NoVantagePointError:
        return EpisodeResult(False, len(trajectory) - 1, exploration_length,
                             tuple(trajectory), FAIL_NO_VANTAGE, tuple(plan_times))
    except UnreachableError:
        return EpisodeResult(False, len(trajectory) - 1, exploration_length,
                             tuple(trajectory), FAIL_UNREACHABLE, tuple(plan_times))
    fresh = NO_DETECTION
    docking_steps = 0
    failure = FAIL_NONE
    while not dplan.complete:
        if docking_steps >= rcfg.move_budget:
            failure = FAIL_MOVE_BUDGET
            break
        try:
            action, dplan = docking.approach_step(
                dplan, fresh, graph, world.vis, world.candidates, cfg.dest_metric
            )
        except NoVantagePointError:
            failure = FAIL_NO_VANTAGE
            break
        except UnreachableError:
            failure = FAIL_UNREACHABLE
            break
        if action is None:
            break
        pid = graph.successor(pid, action)
        trajectory.append(pid)
        docking_steps += 1
        if cfg.policy == PARTIAL_POMP:
            fresh = NO_DETECTION
        else:
            fresh = observe(world.grid, pid, layout, world.vis, world.candidates, noise)

    success = failure == FAIL_NONE and pid in world.destinations(true_cell, cfg.d_success)
    return EpisodeResult(success, len(trajectory) - 1, exploration_length,
                         tuple(trajectory), failure, tuple(plan_times))


# ---------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class MetricsSummary:
    sr: float
    apl: float | None
    asppl_mean: float | None
    asppl_std: float | None
    episodes: int


def compute_metrics(
    results: Sequence[EpisodeResult], oracle_lengths: Sequence[float]
) -> MetricsSummary:
    """SR over all episodes; APL and the shortest-to-actual path ratio
    (clamped to 1) over successful ones. `oracle_lengths[i]` is the shortest
    possible path for episode i."""
    if not results:
        raise ValueError("no episodes to aggregate")
    if len(results) != len(oracle_lengths):
        raise ValueError("results and oracle lengths must align")
    n = len(results)
    wins = [(r, o) for r, o in zip(results, oracle_lengths) if r.success]
    sr = len(wins) / n
    if not wins:
        return MetricsSummary(sr, None, None, None, n)
    apl = sum(r.path_length for r, _ in wins) / len(wins)
    ratios = [
        1.0 if r.path_length <= o else o / r.path_length for r, o in wins
    ]
    mean = sum(ratios) / len(ratios)
    std = statistics.pstdev(ratios) if len(ratios) > 1 else 0.0
    return MetricsSummary(sr, apl, mean, std, n)


def format_summary(ms: MetricsSummary) -> str:
    """Table-style row: SR / APL / ASPPL (std)."""
    if ms.apl is None:
        return f"{ms.sr:.2f} / - / - (-)"
    return f"{ms.sr:.2f} / {ms.apl:.1f} / {ms.asppl_mean:.2f} ({ms.asppl_std:.2f})"


# ---------------------------------------------------------------------------
# Run matrix and sweeps


@dataclass(frozen=True)
class RunMatrix:
    """Which episodes a benchmark runs per world: every target x start x
    seed repetition."""

    targets: tuple[int, ...] = ()
    starts: tuple[str, ...] = ()
    reps: int = 1

    def for_world(self, world: World) -> "RunMatrix":
        targets = self.targets or tuple(range(len(world.scenario.layout.placements)))
        starts = self.starts or tuple(world.scenario.starts)
        return RunMatrix(targets, starts, self.reps)


def episode_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence((master_seed, index)).generate_state(1)[0])


@dataclass
class BenchResult:
    rows: list[dict]
    summaries: list[dict]
    plan_seconds: list[float]

    def median_plan_seconds(self) -> float | None:
        if not self.plan_seconds:
            return None
        return float(statistics.median(self.plan_seconds))


def _episode_jobs(
    worlds: Sequence[World],
    policies: Sequence[str],
    matrix: RunMatrix,
    master_seed: int,
    base: EpisodeConfig,
) -> list[tuple[int, World, EpisodeConfig]]:
    jobs = []
    index = 0
    for world in worlds:
        m = matrix.for_world(world)
        for policy in policies:
            for target in m.targets:
                for start in m.starts:
                    for _ in range(m.reps):
                        cfg = EpisodeConfig(
                            policy=policy, target=target, start=start,
                            seed=episode_seed(master_seed, index),
                            profile=base.profile, solver=base.solver,
                            engine=base.engine, d_success=base.d_success,
                            dest_metric=base.dest_metric,
                        )
                        jobs.append((index, world, cfg))
                        index += 1
    return jobs


def run_bench(
    worlds: Sequence[World],
    policies: Sequence[str],
    matrix: RunMatrix,
    master_seed: int = 0,
    base: EpisodeConfig | None = None,
    jobs: int = 1,
) -> BenchResult:
    """Run the full episode matrix and aggregate per (world, policy) plus an
    'ALL' row per policy. Deterministic in master_seed regardless of jobs."""
    base = base or EpisodeConfig()
    work = _episode_jobs(worlds, policies, matrix, master_seed, base)
    results: list[tuple[World, EpisodeConfig, EpisodeResult]] = [None] * len(work)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        # one task per world so workers compile the visibility matrix once
        by_world: dict[int, list[tuple[int, EpisodeConfig]]] = {}
        for i, world, cfg in work:
            by_world.setdefault(id(world), []).append((i, cfg))
        lookup = {id(world): world for _, world, _ in work}
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {}
            for wid, entries in by_world.items():
                world = lookup[wid]
                futs[pool.submit(
                    _run_chunk, world.scenario, world.name, [c for _, c in entries]
                )] = (world, entries)
            for fut, (world, entries) in futs.items():
                for (i, cfg), res in zip(entries, fut.result()):
                    results[i] = (world, cfg, res)
    else:
        for i, world, cfg in work:
            results[i] = (world, cfg, run_episode(cfg, world))

    rows = []
    plan_secs: list[float] = []
    grouped: dict[tuple[str, str], list[tuple[EpisodeResult, float]]] = {}
    for world, cfg, res in results:
        oracle = world.oracle_length(
            world.graph.index[world.scenario.starts[cfg.start]],
            world.layout_for(cfg.target).target_cell,
            cfg.d_success,
        )
        rows.append({
            "scenario": world.name,
            "policy": cfg.policy,
            "target": cfg.target,
            "start": cfg.start,
            "seed": cfg.seed,
            "success": int(res.success),
            "path_length": res.path_length,
            "exploration_length": res.exploration_length,
            "failure_kind": res.failure_kind,
        })
        plan_secs.extend(res.plan_seconds)
        grouped.setdefault((world.name, cfg.policy), []).append((res, oracle))
        grouped.setdefault(("ALL", cfg.policy), []).append((res, oracle))

    summaries = []
    for (scenario, policy), pairs in grouped.items():
        ms = compute_metrics([r for r, _ in pairs], [o for _, o in pairs])
        summaries.append({
            "scenario": scenario,
            "policy": policy,
            "episodes": ms.episodes,
            "sr": ms.sr,
            "apl": ms.apl,
            "asppl_mean": ms.asppl_mean,
            "asppl_std": ms.asppl_std,
        })
    summaries.sort(key=lambda s: (s["scenario"] != "ALL", s["scenario"], s["policy"]))
    return BenchResult(rows, summaries, plan_secs)


def _run_chunk(scenario: Scenario, name: str, cfgs: list[EpisodeConfig]) -> list[EpisodeResult]:
    # worker-side World rebuild: scenarios pickle cheaply, compiled worlds do not
    world = World(scenario, name)
    return [run_episode(cfg, world) for cfg in cfgs]


DEFAULT_RATIOS = (0.0, 0.2, 0.4, 0.6, 0.8)
MISS_AXIS = "miss"
FP_AXIS = "fp"


def sweep_degradation(
    worlds: Sequence[World],
    axis: str,
    ratios: Iterable[float] = DEFAULT_RATIOS,
    matrix: RunMatrix = RunMatrix(),
    master_seed: int = 0,
    base: EpisodeConfig | None = None,
    policies: Sequence[str] = (POMP,),
) -> list[dict]:
    """SR/APL per detector-degradation ratio along one axis (the other axis
    stays clean). Returns sweep rows in ratio order."""
    if axis not in (MISS_AXIS, FP_AXIS):
        raise ValueError(f"axis must be {MISS_AXIS!r} or {FP_AXIS!r}")
    base = base or EpisodeConfig()
    out = []
    for ratio in ratios:
        if not (0.0 <= ratio <= 1.0):
            raise ValueError(f"ratio {ratio} outside [0, 1]")
        profile = (
            DetectorProfile(miss_rate=ratio, fp_rate=0.0)
            if axis == MISS_AXIS
            else DetectorProfile(miss_rate=0.0, fp_rate=ratio)
        )
        cfg = EpisodeConfig(
            policy=base.policy, profile=profile, solver=base.solver,
            engine=base.engine, d_success=base.d_success,
            dest_metric=base.dest_metric,
        )
        for policy in policies:
            bench = run_bench(
                worlds, [policy], matrix,
                master_seed=episode_seed(master_seed, int(round(ratio * 1000))),
                base=cfg,
            )
            overall = next(s for s in bench.summaries if s["scenario"] == "ALL")
            out.append({
                "axis": axis,
                "ratio": ratio,
                "policy": policy,
                "sr": overall["sr"],
                "apl": overall["apl"],
                "asppl_mean": overall["asppl_mean"],
                "asppl_std": overall["asppl_std"],
            })
    return out


# ---------------------------------------------------------------------------
# Planner-vs-oracle check (the exact expectimax backup is the reference)


@dataclass(frozen=True)
class OracleCheck:
    name: str
    oracle_value: float
    optimal_actions: frozenset[int]
    optimal_rate: float
    value_rate: float


def solver_vs_oracle(
    toy,
    trials: int = 100,
    n_sim: int = 100_000,
    master_seed: int = 0,
    engine: str = "native",
    n_particles: int = 1000,
    value_tol: float = 0.05,
) -> OracleCheck:
    """Repeated plans from the initial belief against the exact expectimax
    value: the fraction of trials picking an optimal action and the fraction
    whose root value estimate lands within `value_tol` (relative)."""
    from .oracle import expectimax_oracle

    value, optimal = expectimax_oracle(
        toy, toy.initial_belief_pairs(), toy.horizon, toy.gamma
    )
    particles = toy.exact_particles(n_particles)
    cfg = PomdpConfig(
        gamma=toy.gamma, n_sim=n_sim, max_depth=toy.horizon, min_particles=1
    )
    scale = max(abs(value), 1e-9)
    opt_hits = 0
    val_hits = 0
    for t in range(trials):
        seed = episode_seed(master_seed, t)
        if engine == "native":
            action, _, qs = _native.plan_tabular(toy, particles, cfg, seed)
            q = float(qs[action])
        else:
            rng = random.Random(seed)
            root = SearchNode()
            action = plan(Belief(list(particles)), toy, cfg, root=root, rng=rng)
            q = root.children[action].value
        opt_hits += action in optimal
        val_hits += abs(q - value) <= value_tol * scale
    return OracleCheck(
        toy.name, value, frozenset(optimal), opt_hits / trials, val_hits / trials
    )


# ---------------------------------------------------------------------------
# CSV emission

EPISODE_COLUMNS = (
    "scenario", "policy", "target", "start", "seed",
    "success", "path_length", "exploration_length", "failure_kind",
)
SUMMARY_COLUMNS = ("scenario", "policy", "episodes", "sr", "apl", "asppl_mean", "asppl_std")
SWEEP_COLUMNS = ("axis", "ratio", "policy", "sr", "apl", "asppl_mean", "asppl_std")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_csv(path, columns: Sequence[str], rows: Iterable[dict]) -> None:
    """Fixed column order, UTF-8, LF endings; float formatting is stable so
    identical runs produce identical bytes."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])
