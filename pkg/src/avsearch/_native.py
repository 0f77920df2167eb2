"""Compiled planning kernels.

Flat-array mirrors of the tree search in `pomcp`: one kernel for dense
tabular POMDPs, one specialised to the grid-search domain. The algorithm is
identical to the pure-Python engine (UCT descent, single-node expansion,
uniform rollouts, mean backups); the tree lives in preallocated arrays and
each kernel owns its seeded RNG stream, so results are reproducible per
engine but not bit-identical across engines.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# actions: 0 forward, 1 backward, 2 rotate cw, 3 rotate ccw (matches world.Action)
N_AVS_ACTIONS = 4
N_AVS_OBS = 2


@njit(cache=True)
def _plan_tabular(
    t_cum, o_cum, rewards, terminal, particles,
    n_sim, gamma, ucb_c, depth_limit, seed,
):
    n_states, n_actions, n_obs = o_cum.shape
    np.random.seed(seed)
    cap = n_sim + 2
    node_n = np.zeros(cap, dtype=np.int64)
    edge_n = np.zeros((cap, n_actions), dtype=np.int64)
    edge_q = np.zeros((cap, n_actions), dtype=np.float64)
    child = np.full((cap, n_actions, n_obs), -1, dtype=np.int32)
    expanded = np.zeros(cap, dtype=np.uint8)
    n_nodes = 1

    path_nodes = np.empty(depth_limit + 1, dtype=np.int32)
    path_acts = np.empty(depth_limit + 1, dtype=np.int32)
    path_rews = np.empty(depth_limit + 1, dtype=np.float64)
    n_particles = len(particles)

    for _ in range(n_sim):
        s = particles[int(np.random.random() * n_particles)]
        node = 0
        depth = 0
        plen = 0
        tail = 0.0
        while True:
            node_n[node] += 1
            if terminal[s] == 1 or depth >= depth_limit:
                break
            if expanded[node] == 0:
                expanded[node] = 1
                # uniform random playout from the frontier
                acc = 0.0
                disc = 1.0
                d = depth
                sr = s
                while d < depth_limit and terminal[sr] == 0:
                    a = int(np.random.random() * n_actions)
                    acc += disc * rewards[sr, a]
                    u = np.random.random()
                    s2 = 0
                    while t_cum[sr, a, s2] < u:
                        s2 += 1
                    sr = s2
                    disc *= gamma
                    d += 1
                tail = acc
                break
            log_n = np.log(node_n[node])
            best_a = -1
            best_v = -np.inf
            for a in range(n_actions):
                na = edge_n[node, a]
                if na == 0:
                    best_a = a
                    break
                v = edge_q[node, a] + ucb_c * np.sqrt(log_n / na)
                if v > best_v:
                    best_v = v
                    best_a = a
            a = best_a
            r = rewards[s, a]
            u = np.random.random()
            s2 = 0
            while t_cum[s, a, s2] < u:
                s2 += 1
            u = np.random.random()
            z = 0
            while o_cum[s2, a, z] < u:
                z += 1
            path_nodes[plen] = node
            path_acts[plen] = a
            path_rews[plen] = r
            plen += 1
            if terminal[s2] == 1:
                s = s2
                depth += 1
                # no child materialised past a terminal step
                tail = 0.0
                break
            c = child[node, a, z]
            if c < 0:
                c = n_nodes
                n_nodes += 1
                child[node, a, z] = c
            node = c
            s = s2
            depth += 1
        ret = tail
        for i in range(plen - 1, -1, -1):
            ret = path_rews[i] + gamma * ret
            nd = path_nodes[i]
            ac = path_acts[i]
            edge_n[nd, ac] += 1
            edge_q[nd, ac] += (ret - edge_q[nd, ac]) / edge_n[nd, ac]

    best_a = 0
    best_n = np.int64(-1)
    for a in range(n_actions):
        if edge_n[0, a] > best_n:
            best_n = edge_n[0, a]
            best_a = a
    return best_a, edge_n[0].copy(), edge_q[0].copy()


@njit(cache=True)
def _avs_rollout(
    nbr, vis, pose, target, visited, steps,
    depth, depth_limit, gamma, r_find, r_step, r_revisit, move_budget,
):
    acc = 0.0
    disc = 1.0
    while depth < depth_limit:
        n_legal = 0
        for a in range(N_AVS_ACTIONS):
            if nbr[pose, a] >= 0:
                n_legal += 1
        pick = int(np.random.random() * n_legal)
        a = 0
        for cand in range(N_AVS_ACTIONS):
            if nbr[pose, cand] >= 0:
                if pick == 0:
                    a = cand
                    break
                pick -= 1
        nxt = nbr[pose, a]
        steps += 1
        if vis[nxt, target] == 1:
            acc += disc * r_find
            break
        r = r_step
        if visited[nxt] == 1:
            r += r_revisit
        acc += disc * r
        visited[nxt] = 1
        pose = nxt
        disc *= gamma
        depth += 1
        if steps >= move_budget:
            break
    return acc


@njit(cache=True)
def _plan_avs(
    nbr, vis, particles, pose0, steps0, visited0,
    r_find, r_step, r_revisit, move_budget,
    n_sim, gamma, ucb_c, depth_limit, seed,
):
    np.random.seed(seed)
    n_poses = nbr.shape[0]
    cap = n_sim + 2
    node_n = np.zeros(cap, dtype=np.int64)
    edge_n = np.zeros((cap, N_AVS_ACTIONS), dtype=np.int64)
    edge_q = np.zeros((cap, N_AVS_ACTIONS), dtype=np.float64)
    child = np.full((cap, N_AVS_ACTIONS, N_AVS_OBS), -1, dtype=np.int32)
    expanded = np.zeros(cap, dtype=np.uint8)
    n_nodes = 1

    path_nodes = np.empty(depth_limit + 1, dtype=np.int32)
    path_acts = np.empty(depth_limit + 1, dtype=np.int32)
    path_rews = np.empty(depth_limit + 1, dtype=np.float64)
    visited = np.empty(n_poses, dtype=np.uint8)
    n_particles = len(particles)

    for _ in range(n_sim):
        target = particles[int(np.random.random() * n_particles)]
        pose = pose0
        steps = steps0
        for i in range(n_poses):
            visited[i] = visited0[i]
        node = 0
        depth = 0
        plen = 0
        tail = 0.0
        done = False
        while True:
            node_n[node] += 1
            if done or depth >= depth_limit:
                break
            if expanded[node] == 0:
                expanded[node] = 1
                tail = _avs_rollout(
                    nbr, vis, pose, target, visited, steps,
                    depth, depth_limit, gamma,
                    r_find, r_step, r_revisit, move_budget,
                )
                break
            log_n = np.log(node_n[node])
            best_a = -1
            best_v = -np.inf
            for a in range(N_AVS_ACTIONS):
                if nbr[pose, a] < 0:
                    continue
                na = edge_n[node, a]
                if na == 0:
                    best_a = a
                    break
                v = edge_q[node, a] + ucb_c * np.sqrt(log_n / na)
                if v > best_v:
                    best_v = v
                    best_a = a
            a = best_a
            nxt = nbr[pose, a]
            steps += 1
            if vis[nxt, target] == 1:
                r = r_find
                obs = 1
                done = True
            else:
                r = r_step
                if visited[nxt] == 1:
                    r += r_revisit
                obs = 0
                done = steps >= move_budget
            visited[nxt] = 1
            path_nodes[plen] = node
            path_acts[plen] = a
            path_rews[plen] = r
            plen += 1
            pose = nxt
            depth += 1
            if done:
                break
            c = child[node, a, obs]
            if c < 0:
                c = n_nodes
                n_nodes += 1
                child[node, a, obs] = c
            node = c
        ret = tail
        for i in range(plen - 1, -1, -1):
            ret = path_rews[i] + gamma * ret
            nd = path_nodes[i]
            ac = path_acts[i]
            edge_n[nd, ac] += 1
            edge_q[nd, ac] += (ret - edge_q[nd, ac]) / edge_n[nd, ac]

    best_a = 0
    best_n = np.int64(-1)
    for a in range(N_AVS_ACTIONS):
        if nbr[pose0, a] < 0:
            continue
        if edge_n[0, a] > best_n:
            best_n = edge_n[0, a]
            best_a = a
    return best_a, edge_n[0].copy(), edge_q[0].copy()


def plan_tabular(model, particles, cfg, seed: int):
    """Plan on a TabularPomdp with the compiled kernel.

    Returns (action, root visit counts, root mean values).
    """
    ucb_c = cfg.ucb_c
    if ucb_c is None:
        lo, hi = model.reward_bounds
        ucb_c = 0.5 * (hi - lo)
    parts = np.asarray(particles, dtype=np.int32)
    return _plan_tabular(
        model._t_cum, model._o_cum, model.R.astype(np.float64),
        model.terminal.astype(np.uint8), parts,
        cfg.n_sim, cfg.gamma, ucb_c, cfg.depth_limit(), seed,
    )


def plan_avs(
    nbr, vis, particles, pose0, steps0, visited0, rcfg, cfg, seed: int
):
    """Plan one grid-search step with the compiled kernel."""
    ucb_c = cfg.ucb_c if cfg.ucb_c is not None else 0.5 * rcfg.r_find
    return _plan_avs(
        nbr, vis, np.asarray(particles, dtype=np.int32),
        pose0, steps0, visited0,
        rcfg.r_find, rcfg.r_step, rcfg.r_revisit, rcfg.move_budget,
        cfg.n_sim, cfg.gamma, ucb_c, cfg.depth_limit(), seed,
    )
