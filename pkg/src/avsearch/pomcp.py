"""Online POMDP planning with partially observable Monte-Carlo tree search:
UCT descent over action/observation histories, random rollouts below the
tree frontier, and an unweighted particle belief with rejection updates."""

from __future__ import annotations

import math
import random
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Hashable, Sequence

Observation = Hashable
State = Any


class BeliefEmptyError(ValueError):
    """Planning or updating was attempted on a belief with no particles."""


@dataclass(frozen=True)
class PomdpConfig:
    """Planner knobs.

    `ucb_c = None` defers to half the model's reward range at plan time.
    `value_cutoff` stops simulating once gamma**depth falls below it
    (relative to the reward scale), so deep tails with no value impact are
    skipped.
    """

    gamma: float = 0.95
    n_sim: int = 4096
    ucb_c: float | None = None
    max_depth: int = 60
    min_particles: int = 1
    seed: int = 0
    value_cutoff: float = 0.01

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.n_sim < 1:
            raise ValueError("n_sim must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_particles < 1:
            raise ValueError("min_particles must be >= 1")
        if self.ucb_c is not None and self.ucb_c < 0:
            raise ValueError("ucb_c must be >= 0")

    def depth_limit(self) -> int:
        """Effective simulation depth: max_depth clipped by the discount
        cutoff (smallest d with gamma**d < value_cutoff)."""
        if self.value_cutoff <= 0.0:
            return self.max_depth
        if self.gamma == 0.0:
            return 1
        d = math.ceil(math.log(self.value_cutoff) / math.log(self.gamma))
        return min(self.max_depth, max(1, d))


class GenerativeModel(ABC):
    """Black-box POMDP simulator contract.

    Actions are integers; observations come from a finite hashable set.
    `step` must be deterministic given the rng stream it is handed.
    """

    @abstractmethod
    def step(self, state, action: int, rng) -> tuple[State, Observation, float, bool]:
        """Sample (next_state, observation, reward, terminal)."""

    @abstractmethod
    def legal_actions(self, state) -> Sequence[int]:
        """Feasible actions in `state`; never empty for non-terminal states."""

    @abstractmethod
    def is_terminal(self, state) -> bool: ...

    @property
    def reward_bounds(self) -> tuple[float, float]:
        """(r_min, r_max) over all (state, action); used for UCB scaling."""
        return (-1.0, 1.0)

    def reinvigorate(self, particle, action: int, observation, rng) -> State:
        """Fresh hidden state for particle recovery, preferably consistent
        with `observation` after `action`. Domains that can deplete their
        belief must override this."""
        raise NotImplementedError(f"{type(self).__name__} cannot reinvigorate")


class SearchNode:
    """Node of the search tree. History nodes key children by action; the
    action-level children key theirs by observation. `value` is the running
    mean of the discounted returns backed up through the node."""

    __slots__ = ("visit_count", "value", "children")

    def __init__(self):
        self.visit_count: int = 0
        self.value: float = 0.0
        self.children: dict = {}

    def child(self, key) -> "SearchNode | None":
        return self.children.get(key)

    def __repr__(self):
        return f"SearchNode(N={self.visit_count}, Q={self.value:.3f}, |ch|={len(self.children)})"


@dataclass
class Belief:
    """Unweighted particle multiset over hidden states."""

    particles: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.particles)

    def sample(self, rng) -> State:
        if not self.particles:
            raise BeliefEmptyError("belief has no particles")
        return self.particles[int(rng.random() * len(self.particles))]


def ucb1_select(node: SearchNode, ucb_c: float) -> int:
    """Action maximising Q + c*sqrt(ln N(node) / N(a)). Unvisited actions are
    taken first, lowest index first; value ties also break to the lowest
    index."""
    log_n = math.log(max(node.visit_count, 1))
    best_action, best_value = None, -math.inf
    for action, edge in node.children.items():
        if edge.visit_count == 0:
            return action
        value = edge.value + ucb_c * math.sqrt(log_n / edge.visit_count)
        if value > best_value:
            best_action, best_value = action, value
    return best_action


def rollout(state, depth: int, model: GenerativeModel, cfg: PomdpConfig, rng) -> float:
    """Discounted return of a uniformly random playout from `state`."""
    limit = cfg.depth_limit()
    total, disc = 0.0, 1.0
    while depth < limit and not model.is_terminal(state):
        actions = model.legal_actions(state)
        action = actions[int(rng.random() * len(actions))]
        state, _, reward, done = model.step(state, action, rng)
        total += disc * reward
        disc *= cfg.gamma
        depth += 1
        if done:
            break
    return total


def simulate(
    state,
    node: SearchNode,
    depth: int,
    model: GenerativeModel,
    cfg: PomdpConfig,
    rng,
    ucb_c: float | None = None,
) -> float:
    """One UCT simulation from `state` rooted at `node`. Expands at most one
    new node, estimates the frontier with a rollout, and backs the mean
    return up every action edge on the path."""
    node.visit_count += 1
    if model.is_terminal(state) or depth >= cfg.depth_limit():
        return 0.0
    if not node.children:
        for action in model.legal_actions(state):
            node.children[action] = SearchNode()
        return rollout(state, depth, model, cfg, rng)
    c = ucb_c if ucb_c is not None else _resolve_ucb_c(model, cfg)
    action = ucb1_select(node, c)
    next_state, obs, reward, done = model.step(state, action, rng)
    edge = node.children[action]
    if done:
        future = 0.0
    else:
        child = edge.children.get(obs)
        if child is None:
            child = SearchNode()
            edge.children[obs] = child
        future = simulate(next_state, child, depth + 1, model, cfg, rng, c)
    ret = reward + cfg.gamma * future
    edge.visit_count += 1
    edge.value += (ret - edge.value) / edge.visit_count
    return ret


def _resolve_ucb_c(model: GenerativeModel, cfg: PomdpConfig) -> float:
    if cfg.ucb_c is not None:
        return cfg.ucb_c
    lo, hi = model.reward_bounds
    return 0.5 * (hi - lo)


def plan(
    belief: Belief,
    model: GenerativeModel,
    cfg: PomdpConfig,
    root: SearchNode | None = None,
    rng=None,
) -> int:
    """Run cfg.n_sim simulations from particles drawn uniformly out of
    `belief` and return the root action with the highest visit count (ties
    break to the lowest action index). Pass `root` to keep the tree for
    reuse across steps."""
    if len(belief) == 0:
        raise BeliefEmptyError("cannot plan on an empty belief")
    if rng is None:
        rng = random.Random(cfg.seed)
    if root is None:
        root = SearchNode()
    c = _resolve_ucb_c(model, cfg)
    for _ in range(cfg.n_sim):
        simulate(belief.sample(rng), root, 0, model, cfg, rng, c)
    best_action, best_visits = None, -1
    for action, edge in root.children.items():
        if edge.visit_count > best_visits:
            best_action, best_visits = action, edge.visit_count
    if best_action is None:
        # every sampled particle was terminal; fall back to a legal action
        state = belief.particles[0]
        return model.legal_actions(state)[0]
    return best_action


def root_value(root: SearchNode, action: int) -> float:
    """Mean return estimate of `action` at the root."""
    return root.children[action].value


def update_belief(
    belief: Belief,
    action: int,
    real_observation,
    model: GenerativeModel,
    cfg: PomdpConfig,
    rng=None,
) -> Belief:
    """Rejection-filter the belief through (action, observation).

    Every old particle is stepped once (capped at 10 * min_particles
    attempts) and its successor kept iff the simulated observation matches
    the real one, so a consistent particle is never lost to sampling noise.
    The survivor set is then resampled up, or reinvigorated from the domain
    prior when empty, to exactly min_particles particles.
    """
    if len(belief) == 0:
        raise BeliefEmptyError("cannot update an empty belief")
    if rng is None:
        rng = random.Random(cfg.seed)
    cap = 10 * cfg.min_particles
    survivors = []
    for particle in belief.particles[:cap]:
        nxt, obs, _, _ = model.step(particle, action, rng)
        if obs == real_observation:
            survivors.append(nxt)
    out: list = []
    if survivors:
        if len(survivors) > cfg.min_particles:
            out = _subsample(survivors, cfg.min_particles, rng)
        else:
            out = list(survivors)
            while len(out) < cfg.min_particles:
                out.append(survivors[int(rng.random() * len(survivors))])
    else:
        anchor = belief.particles
        while len(out) < cfg.min_particles:
            source = anchor[int(rng.random() * len(anchor))]
            out.append(model.reinvigorate(source, action, real_observation, rng))
    return Belief(out)


def _subsample(items: list, k: int, rng) -> list:
    """k items without replacement; partial Fisher-Yates so any rng with a
    .random() method works."""
    pool = list(items)
    for i in range(k):
        j = i + int(rng.random() * (len(pool) - i))
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]


def prune_tree(root: SearchNode, taken_action: int, received_observation) -> SearchNode:
    """Root of the subtree reached via (action, observation); a fresh empty
    node when that branch was never simulated. Statistics are preserved."""
    edge = root.children.get(taken_action)
    if edge is not None:
        child = edge.children.get(received_observation)
        if child is not None:
            return child
    return SearchNode()
