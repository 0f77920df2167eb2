"""Exact finite-horizon expectimax over the belief MDP.

Independent reference for the Monte-Carlo planner: exhaustively backs up
expected discounted values over all action/observation branches, so it is
only usable on tiny problems (the leaf budget is guarded).
"""

from __future__ import annotations

from typing import Hashable, Protocol, Sequence

LEAF_BUDGET = 10_000_000


class OracleTooLargeError(RuntimeError):
    """The action/observation tree would exceed the enumeration budget."""


class EnumerableModel(Protocol):
    """Distribution-level POMDP access needed for exact backups."""

    def legal_actions(self, state) -> Sequence[int]: ...

    def is_terminal(self, state) -> bool: ...

    def transition_dist(self, state, action) -> Sequence[tuple[float, Hashable, float]]:
        """(probability, next_state, reward) branches for (state, action)."""
        ...

    def observation_dist(self, next_state, action) -> Sequence[tuple[float, Hashable]]:
        """(probability, observation) branches emitted on landing in next_state."""
        ...


def expectimax_oracle(
    model: EnumerableModel,
    belief: Sequence[tuple[Hashable, float]],
    horizon: int,
    gamma: float = 0.95,
) -> tuple[float, set[int]]:
    """Optimal expected discounted value of `belief` over `horizon` steps and
    the set of root actions achieving it (ties within 1e-9).

    `belief` is (state, probability) pairs. Terminal states contribute zero.
    Raises OracleTooLargeError when the branch count is unenumerable.
    """
    live = [(s, p) for s, p in belief if p > 0.0 and not model.is_terminal(s)]
    if horizon == 0 or not live:
        actions = set()
        for s, _ in belief:
            actions.update(model.legal_actions(s))
        return 0.0, actions

    n_actions = max(len(model.legal_actions(s)) for s, _ in live)
    n_obs = max(len(model.observation_dist(s, a)) for s, _ in live
                for a in model.legal_actions(s))
    if (n_actions * max(n_obs, 1)) ** horizon > LEAF_BUDGET:
        raise OracleTooLargeError(
            f"{n_actions} actions x {n_obs} observations over horizon {horizon} "
            f"exceeds the {LEAF_BUDGET} leaf budget"
        )

    memo: dict = {}

    def backup(b: tuple, h: int) -> tuple[float, tuple[int, ...]]:
        if h == 0 or not b:
            return 0.0, ()
        key = (tuple((s, round(p, 12)) for s, p in b), h)
        hit = memo.get(key)
        if hit is not None:
            return hit
        actions = set(model.legal_actions(b[0][0]))
        for s, _ in b[1:]:
            actions &= set(model.legal_actions(s))
        best_q, best_actions = -float("inf"), []
        for action in sorted(actions):
            immediate = 0.0
            joint: dict = {}  # observation -> {next_state: mass}
            for s, p in b:
                for tp, s2, r in model.transition_dist(s, action):
                    if tp == 0.0:
                        continue
                    immediate += p * tp * r
                    if model.is_terminal(s2):
                        continue  # absorbed mass has no future value
                    for op, z in model.observation_dist(s2, action):
                        if op == 0.0:
                            continue
                        branch = joint.setdefault(z, {})
                        branch[s2] = branch.get(s2, 0.0) + p * tp * op
            future = 0.0
            for z, branch in joint.items():
                mass = sum(branch.values())
                if mass <= 0.0:
                    continue
                nb = tuple((s2, m / mass) for s2, m in branch.items())
                v, _ = backup(nb, h - 1)
                future += mass * v
            q = immediate + gamma * future
            if q > best_q + 1e-9:
                best_q, best_actions = q, [action]
            elif q >= best_q - 1e-9:
                best_actions.append(action)
        result = (best_q, tuple(best_actions))
        memo[key] = result
        return result

    total = sum(p for _, p in live)
    norm = tuple((s, p / total) for s, p in live)
    value, acts = backup(norm, horizon)
    # value is per unit of live mass; terminal mass contributes zero
    return value * total, set(acts)
