"""Small tabular POMDPs used to validate the planner against the exact
expectimax oracle. Each instance stays within 4 states, 3 actions and 2
observations so exhaustive backups to horizon 6 are cheap."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pomcp import GenerativeModel


@dataclass
class TabularPomdp(GenerativeModel):
    """Dense tabular POMDP.

    T[s, a, s'] transition probabilities, O[s', a, z] observation
    probabilities of landing in s', R[s, a] expected immediate reward,
    `terminal` absorbing flags, `b0` initial belief.
    """

    name: str
    T: np.ndarray
    O: np.ndarray
    R: np.ndarray
    terminal: np.ndarray
    b0: np.ndarray
    horizon: int = 6
    gamma: float = 0.95
    _t_cum: np.ndarray = field(init=False, repr=False)
    _o_cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        S, A, Z = self.O.shape
        assert self.T.shape == (S, A, S) and self.R.shape == (S, A)
        live = ~self.terminal.astype(bool)
        assert np.allclose(self.T[live].sum(axis=2), 1.0)
        assert np.allclose(self.O.sum(axis=2), 1.0)
        assert np.isclose(self.b0.sum(), 1.0)
        self._t_cum = np.cumsum(self.T, axis=2)
        self._o_cum = np.cumsum(self.O, axis=2)

    @property
    def n_states(self) -> int:
        return self.T.shape[0]

    @property
    def n_actions(self) -> int:
        return self.T.shape[1]

    @property
    def n_obs(self) -> int:
        return self.O.shape[2]

    # --- generative interface -------------------------------------------
    def step(self, state, action, rng):
        u = rng.random()
        row = self._t_cum[state, action]
        nxt = 0
        while row[nxt] < u:
            nxt += 1
        u = rng.random()
        row = self._o_cum[nxt, action]
        obs = 0
        while row[obs] < u:
            obs += 1
        return nxt, obs, float(self.R[state, action]), bool(self.terminal[nxt])

    def legal_actions(self, state):
        return range(self.n_actions)

    def is_terminal(self, state) -> bool:
        return bool(self.terminal[state])

    @property
    def reward_bounds(self):
        return float(self.R.min()), float(self.R.max())

    def reinvigorate(self, particle, action, observation, rng):
        last = None
        for _ in range(32):
            s = self._sample_b0(rng)
            nxt, obs, _, _ = self.step(s, action, rng)
            last = nxt
            if obs == observation:
                return nxt
        return last

    def _sample_b0(self, rng) -> int:
        u = rng.random()
        acc = 0.0
        for s, p in enumerate(self.b0):
            acc += p
            if u < acc:
                return s
        return self.n_states - 1

    # --- exact-backup interface ------------------------------------------
    def transition_dist(self, state, action):
        r = float(self.R[state, action])
        return [
            (float(p), s2, r) for s2, p in enumerate(self.T[state, action]) if p > 0.0
        ]

    def observation_dist(self, next_state, action):
        return [
            (float(p), z) for z, p in enumerate(self.O[next_state, action]) if p > 0.0
        ]

    # --- helpers -----------------------------------------------------------
    def initial_belief_pairs(self) -> list[tuple[int, float]]:
        return [(s, float(p)) for s, p in enumerate(self.b0) if p > 0.0]

    def exact_particles(self, n: int) -> list[int]:
        """Particle multiset matching b0 as closely as counting allows."""
        counts = np.floor(self.b0 * n).astype(int)
        order = np.argsort(-(self.b0 * n - counts))
        for s in order[: n - counts.sum()]:
            counts[s] += 1
        out: list[int] = []
        for s, c in enumerate(counts):
            out.extend([s] * int(c))
        return out


def tiger(listen_accuracy: float = 0.9) -> TabularPomdp:
    """Two doors, one hazard. Listening is cheap and noisy; opening ends the
    episode with a penalty or a prize."""
    S, A, Z = 3, 3, 2  # states: hazard-left, hazard-right, done
    T = np.zeros((S, A, S))
    T[0, 0, 0] = T[1, 0, 1] = 1.0  # listen keeps the world
    T[:, 1, 2] = T[:, 2, 2] = 1.0  # opening absorbs
    O = np.full((S, A, Z), 0.5)
    O[0, 0] = [listen_accuracy, 1.0 - listen_accuracy]
    O[1, 0] = [1.0 - listen_accuracy, listen_accuracy]
    R = np.array([
        [-1.0, -25.0, 40.0],
        [-1.0, 40.0, -25.0],
        [0.0, 0.0, 0.0],
    ])
    terminal = np.array([0, 0, 1], dtype=np.uint8)
    b0 = np.array([0.5, 0.5, 0.0])
    return TabularPomdp("tiger", T, O, R, terminal, b0, horizon=4)


def two_cell_search() -> TabularPomdp:
    """Deterministic search over two cells with an asymmetric prior; checking
    the right cell pays off and terminates."""
    S, A, Z = 3, 2, 2  # target-in-A, target-in-B, done
    T = np.zeros((S, A, S))
    T[0, 0, 2] = 1.0
    T[0, 1, 0] = 1.0
    T[1, 0, 1] = 1.0
    T[1, 1, 2] = 1.0
    O = np.zeros((S, A, Z))
    O[0, :, 0] = O[1, :, 0] = 1.0
    O[2, :, 1] = 1.0
    R = np.array([[20.0, -1.0], [-1.0, 20.0], [0.0, 0.0]])
    terminal = np.array([0, 0, 1], dtype=np.uint8)
    b0 = np.array([0.7, 0.3, 0.0])
    return TabularPomdp("two_cell_search", T, O, R, terminal, b0, horizon=4)


def noisy_search(hit_rate: float = 0.8) -> TabularPomdp:
    """Two-cell search where inspecting the correct cell only succeeds with
    probability `hit_rate`, so repeated looks may be needed."""
    S, A, Z = 3, 2, 2
    T = np.zeros((S, A, S))
    T[0, 0, 2] = hit_rate
    T[0, 0, 0] = 1.0 - hit_rate
    T[0, 1, 0] = 1.0
    T[1, 1, 2] = hit_rate
    T[1, 1, 1] = 1.0 - hit_rate
    T[1, 0, 1] = 1.0
    O = np.zeros((S, A, Z))
    O[0, :, 0] = O[1, :, 0] = 1.0
    O[2, :, 1] = 1.0
    miss = -1.0
    R = np.array([
        [hit_rate * 20.0 + (1 - hit_rate) * miss, miss],
        [miss, hit_rate * 20.0 + (1 - hit_rate) * miss],
        [0.0, 0.0],
    ])
    terminal = np.array([0, 0, 1], dtype=np.uint8)
    b0 = np.array([0.6, 0.4, 0.0])
    return TabularPomdp("noisy_search", T, O, R, terminal, b0, horizon=6)


def drifting_target(drift: float = 0.2) -> TabularPomdp:
    """Two-cell search against a target that hops to the other cell with
    probability `drift` after every failed look."""
    S, A, Z = 3, 2, 2
    T = np.zeros((S, A, S))
    T[0, 0, 2] = 1.0
    T[1, 1, 2] = 1.0
    T[0, 1] = [1.0 - drift, drift, 0.0]
    T[1, 0] = [drift, 1.0 - drift, 0.0]
    O = np.zeros((S, A, Z))
    O[0, :, 0] = O[1, :, 0] = 1.0
    O[2, :, 1] = 1.0
    R = np.array([[20.0, -1.0], [-1.0, 20.0], [0.0, 0.0]])
    terminal = np.array([0, 0, 1], dtype=np.uint8)
    b0 = np.array([0.85, 0.15, 0.0])
    return TabularPomdp("drifting_target", T, O, R, terminal, b0, horizon=5)


def three_cell_search() -> TabularPomdp:
    """Sequential search over three cells with a skewed prior; each failed
    look rules that cell out, so look order is what matters."""
    S, A, Z = 4, 3, 2  # target in A/B/C, done
    T = np.zeros((S, A, S))
    for cell in range(3):
        for a in range(3):
            if a == cell:
                T[cell, a, 3] = 1.0
            else:
                T[cell, a, cell] = 1.0
    O = np.zeros((S, A, Z))
    O[0, :, 0] = O[1, :, 0] = O[2, :, 0] = 1.0
    O[3, :, 1] = 1.0
    R = np.full((S, A), -1.0)
    R[3, :] = 0.0
    for cell in range(3):
        R[cell, cell] = 20.0
    terminal = np.array([0, 0, 0, 1], dtype=np.uint8)
    b0 = np.array([0.5, 0.3, 0.2, 0.0])
    return TabularPomdp("three_cell_search", T, O, R, terminal, b0, horizon=5)


def toy_suite() -> list[TabularPomdp]:
    """The shipped oracle-check suite."""
    return [
        tiger(),
        two_cell_search(),
        noisy_search(),
        drifting_target(),
        three_cell_search(),
    ]
