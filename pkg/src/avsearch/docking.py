"""Approach phase: pick the destination pose for an estimated target cell,
plan the shortest pose-graph route to it, and re-plan whenever a fresh
detection arrives on the way."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .perception import Detection
from .world import ACTIONS, Action, CandidateSet, PoseGraph


class NoVantagePointError(RuntimeError):
    """No pose in the graph sees the requested cell."""


class UnreachableError(RuntimeError):
    """No pose-graph route between the requested poses."""


@dataclass
class DockingPlan:
    """Route state: estimated target cell, chosen destination pose id, and
    the remaining pose-id path (head = current pose)."""

    destination: int
    path: list[int]
    target_estimate: int

    @property
    def complete(self) -> bool:
        return len(self.path) <= 1


def destination_pose(
    graph: PoseGraph,
    vis: np.ndarray,
    candidates: CandidateSet,
    target_cell: int,
    metric: str = "euclidean",
    from_pose: int | None = None,
) -> int:
    """Pose id of the closest target-seeing pose.

    Distance is Euclidean from the pose's cell to the target cell
    (metric="path" uses pose-graph distance from `from_pose` instead). Ties
    break on the smallest bearing deviation from a head-on view, then on the
    lowest pose id.
    """
    seeing = np.nonzero(vis[:, target_cell])[0]
    if len(seeing) == 0:
        raise NoVantagePointError(f"no pose sees candidate cell {target_cell}")
    cx, cy = candidates.cells[target_cell]
    if metric == "path":
        if from_pose is None:
            raise ValueError("path metric needs from_pose")
        dist = _distances_from(graph, from_pose)
        key_dist = [dist[p] for p in seeing]
    elif metric == "euclidean":
        key_dist = [
            math.hypot(graph.poses[p].x - cx, graph.poses[p].y - cy) for p in seeing
        ]
    else:
        raise ValueError(f"unknown metric {metric!r}")
    best, best_key = None, None
    for pid, d in zip(seeing, key_dist):
        pose = graph.poses[pid]
        bearing = math.atan2(cy - pose.y, cx - pose.x)
        dev = bearing - 2.0 * math.pi * pose.theta / graph.headings
        dev = abs((dev + math.pi) % (2.0 * math.pi) - math.pi)
        key = (d, dev, int(pid))
        if best_key is None or key < best_key:
            best, best_key = int(pid), key
    return best


def _distances_from(graph: PoseGraph, source) -> np.ndarray:
    """Dijkstra over the pose graph (unit weights); ties settle lowest id
    first. `source` may be one pose id or an iterable of them."""
    n = len(graph)
    dist = np.full(n, np.inf)
    sources = [source] if np.isscalar(source) else sorted(int(s) for s in source)
    heap = []
    for s in sources:
        dist[s] = 0.0
        heap.append((0.0, int(s)))
    heapq.heapify(heap)
    settled = np.zeros(n, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if settled[u]:
            continue
        settled[u] = True
        for a in ACTIONS:
            v = graph.neighbors[u, a]
            if v >= 0 and d + 1.0 < dist[v]:
                dist[v] = d + 1.0
                heapq.heappush(heap, (d + 1.0, int(v)))
    return dist


def shortest_path(graph: PoseGraph, start: int, goal: int) -> list[int]:
    """Minimal pose-id path from `start` to `goal` (every action costs 1).

    The path is reconstructed forward, always taking the lowest-id successor
    that still lies on a shortest route, so it is deterministic.
    """
    dist = _distances_from(graph, goal)
    if not np.isfinite(dist[start]):
        raise UnreachableError(f"pose {goal} unreachable from {start}")
    path = [start]
    cur = start
    while cur != goal:
        nxt_best = None
        for a in ACTIONS:
            v = graph.neighbors[cur, a]
            if v >= 0 and dist[v] == dist[cur] - 1.0:
                if nxt_best is None or v < nxt_best:
                    nxt_best = int(v)
        path.append(nxt_best)
        cur = nxt_best
    return path


def path_action(graph: PoseGraph, src: int, dst: int) -> Action:
    """The action realising the edge src -> dst."""
    for a in ACTIONS:
        if graph.neighbors[src, a] == dst:
            return a
    raise ValueError(f"poses {src} -> {dst} are not connected by one action")


def make_plan(
    graph: PoseGraph,
    vis: np.ndarray,
    candidates: CandidateSet,
    current_pose: int,
    target_cell: int,
    metric: str = "euclidean",
) -> DockingPlan:
    dest = destination_pose(
        graph, vis, candidates, target_cell, metric=metric, from_pose=current_pose
    )
    return DockingPlan(dest, shortest_path(graph, current_pose, dest), target_cell)


def approach_step(
    plan: DockingPlan,
    fresh: Detection,
    graph: PoseGraph,
    vis: np.ndarray,
    candidates: CandidateSet,
    metric: str = "euclidean",
) -> tuple[Action | None, DockingPlan]:
    """Advance the approach by one action.

    A fresh detection rebuilds the target estimate, destination and path
    from the current pose; otherwise the precomputed path is followed. The
    returned action is None when the (re)planned path is already complete.
    """
    if not plan.path:
        raise ValueError("docking plan has an empty path")
    current = plan.path[0]
    if fresh.detected:
        plan = make_plan(graph, vis, candidates, current, fresh.estimated_cell, metric)
    if plan.complete:
        return None, plan
    action = path_action(graph, plan.path[0], plan.path[1])
    return action, DockingPlan(plan.destination, plan.path[1:], plan.target_estimate)


def ground_truth_destinations(
    graph: PoseGraph,
    vis: np.ndarray,
    candidates: CandidateSet,
    true_target_cell: int,
    d_success: float = 2.0,
) -> set[int]:
    """Evaluation-only success set: poses that see the true target cell from
    within `d_success` cells."""
    cx, cy = candidates.cells[true_target_cell]
    out = set()
    for pid in np.nonzero(vis[:, true_target_cell])[0]:
        pose = graph.poses[pid]
        if math.hypot(pose.x - cx, pose.y - cy) <= d_success + 1e-9:
            out.add(int(pid))
    return out
