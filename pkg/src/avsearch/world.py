"""Grid world for active visual search: occupancy grid, discrete pose graph,
visibility model, and the search POMDP dynamics (transition / observation /
reward with revisit memory)."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Iterator, Sequence

import numpy as np

from .pomcp import GenerativeModel


class DomainError(ValueError):
    """Violation of a grid-world contract (bad map, infeasible action, ...)."""


class Cell(IntEnum):
    """Cell taxonomy: occlusions block sight and movement, empty cells are
    traversable, candidate cells may hold an object (visible but not
    traversable)."""

    OCCLUSION = 0
    EMPTY = 1
    CANDIDATE = 2


CELL_CHARS = {Cell.OCCLUSION: "#", Cell.EMPTY: ".", Cell.CANDIDATE: "C"}
CHAR_CELLS = {c: k for k, c in CELL_CHARS.items()}


class Action(IntEnum):
    """The four primitive moves; the order is the canonical action index."""

    FORWARD = 0
    BACKWARD = 1
    ROTATE_CW = 2
    ROTATE_CCW = 3


ACTIONS = (Action.FORWARD, Action.BACKWARD, Action.ROTATE_CW, Action.ROTATE_CCW)


@dataclass(frozen=True)
class GridMap:
    """Occupancy grid. `cells` is a (height, width) array of Cell values;
    `cell_size` is metadata (metres per cell) and does not affect geometry."""

    width: int
    height: int
    cells: np.ndarray
    cell_size: float = 1.0

    def __post_init__(self):
        if self.cells.shape != (self.height, self.width):
            raise DomainError(
                f"cell array shape {self.cells.shape} != ({self.height}, {self.width})"
            )
        if not (self.cells == Cell.EMPTY).any():
            raise DomainError("map has no empty cell")

    def cell(self, x: int, y: int) -> Cell:
        return Cell(self.cells[y, x])

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def is_empty(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and self.cells[y, x] == Cell.EMPTY

    def candidate_cells(self) -> list[tuple[int, int]]:
        """Candidate cells in row-major order; their rank is the candidate index."""
        ys, xs = np.nonzero(self.cells == Cell.CANDIDATE)
        return [(int(x), int(y)) for y, x in sorted(zip(ys, xs))]

    @classmethod
    def from_rows(cls, rows: Sequence[str], cell_size: float = 1.0) -> "GridMap":
        """Build from text rows of '#', '.', 'C' characters."""
        height = len(rows)
        if height == 0:
            raise DomainError("empty grid")
        width = len(rows[0])
        cells = np.zeros((height, width), dtype=np.int8)
        for y, row in enumerate(rows):
            if len(row) != width:
                raise DomainError(f"grid row {y} has length {len(row)}, expected {width}")
            for x, ch in enumerate(row):
                if ch not in CHAR_CELLS:
                    raise DomainError(f"unknown cell character {ch!r} at ({x}, {y})")
                cells[y, x] = CHAR_CELLS[ch]
        return cls(width=width, height=height, cells=cells, cell_size=cell_size)

    def to_rows(self) -> list[str]:
        return [
            "".join(CELL_CHARS[Cell(self.cells[y, x])] for x in range(self.width))
            for y in range(self.height)
        ]


@dataclass(frozen=True, order=True)
class Pose:
    """Agent pose: grid cell plus an orientation index in {0, ..., D-1}."""

    x: int
    y: int
    theta: int


def heading_angle(theta: int, headings: int) -> float:
    """Orientation index to angle in radians (index 0 points along +x)."""
    return 2.0 * math.pi * theta / headings


def heading_step(theta: int, headings: int) -> tuple[int, int]:
    """Unit cell step for one forward move along `theta` (rounded to the
    nearest of the 8 neighbours; exact for 4 and 8 headings)."""
    a = heading_angle(theta, headings)
    return int(math.floor(math.cos(a) + 0.5)), int(math.floor(math.sin(a) + 0.5))


class PoseGraph:
    """All valid poses (empty cell x heading) with one edge per feasible
    action. `neighbors[pose_id, action]` is the successor pose id or -1."""

    def __init__(self, grid: GridMap, headings: int):
        if headings < 2:
            raise DomainError("need at least 2 headings")
        self.grid = grid
        self.headings = headings
        empties = [
            (x, y)
            for y in range(grid.height)
            for x in range(grid.width)
            if grid.cells[y, x] == Cell.EMPTY
        ]
        if not empties:
            raise DomainError("map has no empty cell")
        self.poses: list[Pose] = [
            Pose(x, y, t) for (x, y) in empties for t in range(headings)
        ]
        self.index: dict[Pose, int] = {p: i for i, p in enumerate(self.poses)}
        n = len(self.poses)
        self.neighbors = np.full((n, len(ACTIONS)), -1, dtype=np.int32)
        for i, p in enumerate(self.poses):
            dx, dy = heading_step(p.theta, headings)
            fwd = Pose(p.x + dx, p.y + dy, p.theta)
            back = Pose(p.x - dx, p.y - dy, p.theta)
            if fwd in self.index:
                self.neighbors[i, Action.FORWARD] = self.index[fwd]
            if back in self.index:
                self.neighbors[i, Action.BACKWARD] = self.index[back]
            self.neighbors[i, Action.ROTATE_CW] = self.index[
                Pose(p.x, p.y, (p.theta + 1) % headings)
            ]
            self.neighbors[i, Action.ROTATE_CCW] = self.index[
                Pose(p.x, p.y, (p.theta - 1) % headings)
            ]
        # cell centre coordinates per pose, for distance computations
        self.xy = np.array([(p.x, p.y) for p in self.poses], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.poses)

    def successor(self, pose_id: int, action: Action) -> int:
        return int(self.neighbors[pose_id, action])

    def edges(self) -> Iterator[tuple[int, Action, int]]:
        for i in range(len(self.poses)):
            for a in ACTIONS:
                j = self.neighbors[i, a]
                if j >= 0:
                    yield i, a, int(j)


def build_pose_graph(grid: GridMap, headings: int) -> PoseGraph:
    return PoseGraph(grid, headings)


def legal_actions(pose_id: int, graph: PoseGraph) -> list[Action]:
    """Feasible actions from a pose, in canonical order. Never empty:
    rotations are always feasible."""
    return [a for a in ACTIONS if graph.neighbors[pose_id, a] >= 0]


# ---------------------------------------------------------------------------
# Visibility


@dataclass(frozen=True)
class VisConfig:
    """Sensor model: total field of view in degrees and range in cells."""

    fov: float = 90.0
    max_range: float = 6.0

    def __post_init__(self):
        if not (0.0 < self.fov <= 360.0):
            raise DomainError(f"fov must be in (0, 360], got {self.fov}")
        if self.max_range < 1:
            raise DomainError(f"max_range must be >= 1, got {self.max_range}")


def ray_cells(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer cells strictly between (x0,y0) and (x1,y1) along the straight
    segment joining the cell centres (uniform sampling, half-up rounding)."""
    n = max(abs(x1 - x0), abs(y1 - y0))
    out = []
    for i in range(1, n):
        t = i / n
        x = int(math.floor(x0 + (x1 - x0) * t + 0.5))
        y = int(math.floor(y0 + (y1 - y0) * t + 0.5))
        if (x, y) != (x0, y0) and (x, y) != (x1, y1):
            out.append((x, y))
    return out


_ANGLE_EPS = 1e-9


def visibility(
    grid: GridMap, pose: Pose, cell: tuple[int, int], cfg: VisConfig, headings: int
) -> bool:
    """True iff `cell` is within sensor range, inside the field-of-view cone
    of `pose`, and the line of sight crosses no occlusion cell."""
    cx, cy = cell
    dx, dy = cx - pose.x, cy - pose.y
    if math.hypot(dx, dy) > cfg.max_range + _ANGLE_EPS:
        return False
    if dx != 0 or dy != 0:
        bearing = math.atan2(dy, dx)
        delta = bearing - heading_angle(pose.theta, headings)
        delta = (delta + math.pi) % (2.0 * math.pi) - math.pi
        if abs(delta) > math.radians(cfg.fov) / 2.0 + _ANGLE_EPS:
            return False
    for (x, y) in ray_cells(pose.x, pose.y, cx, cy):
        if grid.cells[y, x] == Cell.OCCLUSION:
            return False
    return True


class CandidateSet:
    """The ordered candidate cells; index i refers to `cells[i]`."""

    def __init__(self, grid: GridMap):
        self.cells: list[tuple[int, int]] = grid.candidate_cells()
        self.index: dict[tuple[int, int], int] = {c: i for i, c in enumerate(self.cells)}

    def __len__(self) -> int:
        return len(self.cells)


def build_visibility_matrix(
    grid: GridMap, graph: PoseGraph, candidates: CandidateSet, cfg: VisConfig
) -> np.ndarray:
    """Boolean (n_poses, n_candidates) matrix; entry (i, j) is the visibility
    of candidate cell j from pose i. Range and field-of-view tests run
    vectorised; rays are only traced for the survivors."""
    n, k = len(graph), len(candidates)
    out = np.zeros((n, k), dtype=bool)
    if k == 0:
        return out
    cand = np.array(candidates.cells, dtype=np.float64)
    thetas = np.array([p.theta for p in graph.poses])
    angles = 2.0 * np.pi * thetas / graph.headings
    half_fov = math.radians(cfg.fov) / 2.0
    d = cand[None, :, :] - graph.xy[:, None, :]  # (n, k, 2)
    dist = np.hypot(d[:, :, 0], d[:, :, 1])
    bearing = np.arctan2(d[:, :, 1], d[:, :, 0])
    delta = (bearing - angles[:, None] + np.pi) % (2.0 * np.pi) - np.pi
    feasible = (dist <= cfg.max_range + _ANGLE_EPS) & (
        np.abs(delta) <= half_fov + _ANGLE_EPS
    )
    for i, j in zip(*np.nonzero(feasible)):
        p = graph.poses[i]
        blocked = False
        for (x, y) in ray_cells(p.x, p.y, *candidates.cells[j]):
            if grid.cells[y, x] == Cell.OCCLUSION:
                blocked = True
                break
        out[i, j] = not blocked
    return out


# ---------------------------------------------------------------------------
# Search POMDP


@dataclass(frozen=True)
class ObjectLayout:
    """Hidden object arrangement: candidate index per object, plus which
    object is the search target. Objects occupy distinct cells."""

    placements: tuple[int, ...]
    target_index: int = 0

    def __post_init__(self):
        if not self.placements:
            raise DomainError("layout needs at least one object")
        if len(set(self.placements)) != len(self.placements):
            raise DomainError(f"objects must occupy distinct cells: {self.placements}")
        if not (0 <= self.target_index < len(self.placements)):
            raise DomainError(f"target index {self.target_index} out of range")

    @property
    def target_cell(self) -> int:
        return self.placements[self.target_index]

    def distractor_cells(self) -> tuple[int, ...]:
        return tuple(
            c for i, c in enumerate(self.placements) if i != self.target_index
        )

    def with_target_at(self, cell: int) -> "ObjectLayout":
        new = list(self.placements)
        new[self.target_index] = cell
        return ObjectLayout(tuple(new), self.target_index)


def sample_layout(
    candidates: CandidateSet, m: int, rng: np.random.Generator, target_index: int = 0
) -> ObjectLayout:
    """Uniformly sample m distinct candidate indices as an object layout."""
    k = len(candidates)
    if not (1 <= m <= k):
        raise DomainError(f"need 1 <= m <= {k} objects, got {m}")
    picks = rng.choice(k, size=m, replace=False)
    return ObjectLayout(tuple(int(i) for i in picks), target_index)


@dataclass(frozen=True)
class RewardConfig:
    """Reward scheme: finding bonus, per-move cost, revisit penalty, and the
    exploration move budget."""

    r_find: float = 100.0
    r_step: float = -1.0
    r_revisit: float = -25.0
    move_budget: int = 200

    def __post_init__(self):
        if not (self.r_revisit < self.r_step < 0.0 < self.r_find):
            raise DomainError(
                f"need r_revisit < r_step < 0 < r_find, got "
                f"({self.r_revisit}, {self.r_step}, {self.r_find})"
            )
        if self.move_budget < 1:
            raise DomainError("move_budget must be >= 1")

    @property
    def bounds(self) -> tuple[float, float]:
        return (self.r_step + self.r_revisit, self.r_find)


# terminal markers on AvsState.done
LIVE, FOUND, EXHAUSTED = 0, 1, 2


@dataclass(frozen=True)
class AvsState:
    """Full search state: agent pose (graph id), object layout, the memory of
    visited pose ids, moves taken, and a terminal marker."""

    pose_id: int
    layout: ObjectLayout
    visited: frozenset[int]
    steps_taken: int = 0
    done: int = LIVE


def initial_state(graph: PoseGraph, start: Pose, layout: ObjectLayout) -> AvsState:
    pid = graph.index.get(start)
    if pid is None:
        raise DomainError(f"start pose {start} is not a valid pose")
    return AvsState(pid, layout, frozenset((pid,)))


def avs_step(
    state: AvsState,
    action: Action,
    graph: PoseGraph,
    vis: np.ndarray,
    rcfg: RewardConfig,
) -> tuple[AvsState, int, float, bool]:
    """One environment step. Observation is 1 iff the target is visible from
    the new pose; finding ends the episode with `r_find`, otherwise a step
    cost applies (plus the revisit penalty on previously visited poses) and
    the episode fails once the move budget is spent."""
    nxt = graph.successor(state.pose_id, action)
    if nxt < 0:
        raise DomainError(f"action {action!r} infeasible from pose {state.pose_id}")
    steps = state.steps_taken + 1
    if vis[nxt, state.layout.target_cell]:
        new = replace(
            state,
            pose_id=nxt,
            visited=state.visited | {nxt},
            steps_taken=steps,
            done=FOUND,
        )
        return new, 1, rcfg.r_find, True
    reward = rcfg.r_step + (rcfg.r_revisit if nxt in state.visited else 0.0)
    done = EXHAUSTED if steps >= rcfg.move_budget else LIVE
    new = replace(
        state,
        pose_id=nxt,
        visited=state.visited | {nxt},
        steps_taken=steps,
        done=done,
    )
    return new, 0, reward, done != LIVE


class AvsModel(GenerativeModel):
    """Generative-model adapter exposing the search POMDP to the planner.
    The hidden component of a particle is the target placement; distractor
    placements are treated as known scenery and excluded from the prior."""

    def __init__(
        self,
        graph: PoseGraph,
        vis: np.ndarray,
        candidates: CandidateSet,
        rcfg: RewardConfig,
        scenery: tuple[int, ...] = (),
        target_index: int = 0,
    ):
        self.graph = graph
        self.vis = vis
        self.candidates = candidates
        self.rcfg = rcfg
        self.target_index = target_index
        self.scenery = scenery
        self.prior_cells = tuple(
            c for c in range(len(candidates)) if c not in scenery
        )
        if not self.prior_cells:
            raise DomainError("no candidate cell left for the target")

    def step(self, state, action, rng):
        nxt, obs, reward, done = avs_step(state, action, self.graph, self.vis, self.rcfg)
        return nxt, obs, reward, done

    def legal_actions(self, state):
        return legal_actions(state.pose_id, self.graph)

    def is_terminal(self, state) -> bool:
        return state.done != LIVE

    @property
    def reward_bounds(self) -> tuple[float, float]:
        return self.rcfg.bounds

    def make_state(self, pose_id: int, target_cell: int, visited=None, steps=0) -> AvsState:
        layout = ObjectLayout(
            tuple(
                target_cell if i == self.target_index else c
                for i, c in enumerate(self._template())
            ),
            self.target_index,
        )
        vset = frozenset(visited) if visited is not None else frozenset((pose_id,))
        return AvsState(pose_id, layout, vset, steps)

    def _template(self) -> tuple[int, ...]:
        # placements with a hole at the target slot, filled by make_state
        slots = list(self.scenery)
        slots.insert(self.target_index, -1)
        return tuple(slots)

    def initial_belief_cells(self) -> tuple[int, ...]:
        return self.prior_cells

    # distribution-level access for exact backups (dynamics are
    # deterministic given the hidden placement)
    def transition_dist(self, state, action):
        nxt, _, reward, _ = avs_step(state, action, self.graph, self.vis, self.rcfg)
        return [(1.0, nxt, reward)]

    def observation_dist(self, next_state, action):
        seen = bool(self.vis[next_state.pose_id, next_state.layout.target_cell])
        return [(1.0, 1 if seen else 0)]

    def reinvigorate(self, particle: AvsState, action, observation, rng) -> AvsState:
        """Fresh particle whose target placement is consistent with the
        observation from the post-action pose, falling back to the plain
        prior when no consistent cell exists."""
        nxt = self.graph.successor(particle.pose_id, action)
        if nxt < 0:
            raise DomainError("reinvigoration with infeasible action")
        visible = self.vis[nxt]
        if observation == 1:
            pool = [c for c in self.prior_cells if visible[c]]
        else:
            pool = [c for c in self.prior_cells if not visible[c]]
        if not pool:
            pool = list(self.prior_cells)
        cell = pool[int(rng.random() * len(pool))]
        pre = replace(particle, layout=particle.layout.with_target_at(cell))
        nxt_state, _, _, _ = avs_step(pre, action, self.graph, self.vis, self.rcfg)
        return nxt_state
