"""Grid-world domain tests: pose graph construction, visibility with an
independent ray-marching oracle, search dynamics, and layout sampling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avsearch.pomcp import Belief, PomdpConfig, update_belief
from avsearch.world import (
    ACTIONS,
    Action,
    AvsModel,
    CandidateSet,
    Cell,
    DomainError,
    GridMap,
    ObjectLayout,
    Pose,
    RewardConfig,
    VisConfig,
    avs_step,
    build_pose_graph,
    build_visibility_matrix,
    heading_step,
    initial_state,
    legal_actions,
    sample_layout,
    visibility,
)


def grid(*rows):
    return GridMap.from_rows(rows)


class TestGridMap:
    def test_row_parsing_round_trip(self):
        g = grid("###", "#.C", "###")
        assert g.to_rows() == ["###", "#.C", "###"]
        assert g.cell(1, 1) == Cell.EMPTY
        assert g.cell(2, 1) == Cell.CANDIDATE

    def test_unknown_character_rejected(self):
        with pytest.raises(DomainError):
            grid(".x.")

    def test_ragged_rows_rejected(self):
        with pytest.raises(DomainError):
            grid("...", "..")

    def test_no_empty_cell_rejected(self):
        with pytest.raises(DomainError):
            grid("#C#")

    def test_candidate_cells_row_major(self):
        g = grid("C.C", "..C")
        assert g.candidate_cells() == [(0, 0), (2, 0), (2, 1)]


class TestPoseGraph:
    def test_single_cell_map(self):
        g = grid(".")
        graph = build_pose_graph(g, 4)
        assert len(graph) == 4
        rotations = sum(
            1 for _, a, _ in graph.edges() if a in (Action.ROTATE_CW, Action.ROTATE_CCW)
        )
        translations = sum(
            1 for _, a, _ in graph.edges() if a in (Action.FORWARD, Action.BACKWARD)
        )
        assert rotations == 8
        assert translations == 0

    def test_open_corridor_matches_enumeration_oracle(self):
        # independent rule: a translation edge exists iff the destination
        # cell is empty and in bounds
        g = grid("...")
        graph = build_pose_graph(g, 4)
        assert len(graph) == 12
        for pid, pose in enumerate(graph.poses):
            dx, dy = heading_step(pose.theta, 4)
            for action, step in ((Action.FORWARD, 1), (Action.BACKWARD, -1)):
                dest = (pose.x + step * dx, pose.y + step * dy)
                expected = g.is_empty(*dest)
                assert (graph.neighbors[pid, action] >= 0) == expected, (pose, action)
            assert graph.neighbors[pid, Action.ROTATE_CW] >= 0
            assert graph.neighbors[pid, Action.ROTATE_CCW] >= 0

    def test_occlusion_blocks_translation(self):
        g = grid(".#.")
        graph = build_pose_graph(g, 4)
        east = graph.index[Pose(0, 0, 0)]
        assert graph.neighbors[east, Action.FORWARD] == -1

    def test_no_empty_cells_error(self):
        # a map without empty cells cannot even be constructed
        with pytest.raises(DomainError):
            grid("C#")

    @given(theta=st.integers(0, 7), x=st.integers(1, 3), y=st.integers(1, 3))
    def test_rotation_closure(self, theta, x, y):
        g = grid(".....", ".....", ".....", ".....", ".....")
        graph = build_pose_graph(g, 8)
        pid = graph.index[Pose(x, y, theta)]
        cur = pid
        for _ in range(8):
            cur = graph.successor(cur, Action.ROTATE_CW)
        assert cur == pid

    @given(theta=st.integers(0, 7), x=st.integers(0, 4), y=st.integers(0, 4))
    def test_forward_backward_inversion(self, theta, x, y):
        g = grid(".....", ".....", ".....", ".....", ".....")
        graph = build_pose_graph(g, 8)
        pid = graph.index[Pose(x, y, theta)]
        fwd = graph.successor(pid, Action.FORWARD)
        if fwd >= 0:
            back = graph.successor(fwd, Action.BACKWARD)
            assert back == pid


def dense_ray_blocked(g, x0, y0, x1, y1, step=0.01):
    """Independent occlusion oracle: march the segment at fine resolution."""
    length = math.hypot(x1 - x0, y1 - y0)
    n = max(1, int(length / step))
    for i in range(1, n):
        t = i / n
        x = int(math.floor(x0 + (x1 - x0) * t + 0.5))
        y = int(math.floor(y0 + (y1 - y0) * t + 0.5))
        if (x, y) in ((x0, y0), (x1, y1)):
            continue
        if g.cells[y, x] == Cell.OCCLUSION:
            return True
    return False


class TestVisibility:
    CFG = VisConfig(fov=90.0, max_range=6.0)

    def test_candidate_directly_ahead(self):
        g = grid(".C")
        assert visibility(g, Pose(0, 0, 0), (1, 0), self.CFG, 4)

    def test_candidate_behind_is_outside_cone(self):
        g = grid(".C")
        assert not visibility(g, Pose(0, 0, 2), (1, 0), self.CFG, 4)

    def test_out_of_range(self):
        g = grid(".......C")
        assert not visibility(g, Pose(0, 0, 0), (7, 0), VisConfig(fov=90, max_range=6), 4)

    def test_occlusion_blocks_and_oracle_agrees(self):
        g = grid("..#C")
        pose = Pose(0, 0, 0)
        assert not visibility(g, pose, (3, 0), self.CFG, 4)
        assert dense_ray_blocked(g, 0, 0, 3, 0)
        open_g = grid("...C")
        assert visibility(open_g, pose, (3, 0), self.CFG, 4)
        assert not dense_ray_blocked(open_g, 0, 0, 3, 0)

    @given(data=st.data())
    @settings(max_examples=60, deadline=None)
    def test_ray_matches_dense_oracle_on_straight_and_diagonal(self, data):
        # straight and 45-degree rays: the discrete trace and the dense
        # march visit the same cells, so occlusion answers agree
        size = 6
        rows = ["." * size for _ in range(size)]
        g = GridMap.from_rows(rows)
        cells = np.array(g.cells)
        x0, y0 = data.draw(st.tuples(st.integers(0, 5), st.integers(0, 5)))
        direction = data.draw(st.sampled_from([(1, 0), (0, 1), (1, 1), (1, -1)]))
        length = data.draw(st.integers(2, 4))
        x1, y1 = x0 + direction[0] * length, y0 + direction[1] * length
        if not (0 <= x1 < size and 0 <= y1 < size):
            return
        bx = data.draw(st.integers(1, length - 1))
        cells[y0 + direction[1] * bx, x0 + direction[0] * bx] = Cell.OCCLUSION
        blocked_g = GridMap(size, size, cells)
        from avsearch.world import ray_cells

        hit = any(
            blocked_g.cells[y, x] == Cell.OCCLUSION for x, y in ray_cells(x0, y0, x1, y1)
        )
        assert hit == dense_ray_blocked(blocked_g, x0, y0, x1, y1)
        assert hit  # the blocker sits exactly on the segment

    def test_occlusion_monotonicity(self):
        g = grid(".....", ".....", "....C")
        graph = build_pose_graph(g, 8)
        cfg = VisConfig(fov=120, max_range=6)
        base = {
            (p.x, p.y, p.theta): visibility(g, p, (4, 2), cfg, 8) for p in graph.poses
        }
        for (bx, by) in [(1, 1), (2, 1), (3, 1), (2, 0)]:
            cells = np.array(g.cells)
            cells[by, bx] = Cell.OCCLUSION
            blocked = GridMap(5, 3, cells)
            for p in graph.poses:
                if (p.x, p.y) == (bx, by):
                    continue
                if not base[(p.x, p.y, p.theta)]:
                    assert not visibility(blocked, p, (4, 2), cfg, 8)


class TestVisibilityMatrix:
    def test_all_beyond_range_is_false(self):
        g = grid("C........C")
        graph = build_pose_graph(g, 4)
        cands = CandidateSet(g)
        vis = build_visibility_matrix(g, graph, cands, VisConfig(fov=360, max_range=1.0))
        # nearest candidate is 1 cell from the adjacent empty cells only
        far = [graph.index[Pose(4, 0, t)] for t in range(4)]
        assert not vis[far].any()

    def test_matches_per_pair_visibility(self):
        g = grid("C....", ".#...", "...C.")
        graph = build_pose_graph(g, 8)
        cands = CandidateSet(g)
        cfg = VisConfig(fov=90, max_range=4)
        vis = build_visibility_matrix(g, graph, cands, cfg)
        for pid, pose in enumerate(graph.poses):
            for j, cell in enumerate(cands.cells):
                assert vis[pid, j] == visibility(g, pose, cell, cfg, 8), (pose, cell)

    def test_corridor_facing_poses_only(self):
        g = grid("C...")
        graph = build_pose_graph(g, 4)
        cands = CandidateSet(g)
        vis = build_visibility_matrix(g, graph, cands, VisConfig(fov=90, max_range=3))
        seeing = {graph.poses[i] for i in np.nonzero(vis[:, 0])[0]}
        assert seeing == {Pose(1, 0, 2), Pose(2, 0, 2), Pose(3, 0, 2)}

    def test_rebuild_bit_identical(self):
        g = grid("C....", ".#...", "...C.")
        graph = build_pose_graph(g, 8)
        cands = CandidateSet(g)
        cfg = VisConfig(fov=90, max_range=4)
        a = build_visibility_matrix(g, graph, cands, cfg)
        b = build_visibility_matrix(g, graph, cands, cfg)
        assert (a == b).all()


def corridor_world():
    """C...C corridor: empties x=1..3, candidates at both ends."""
    g = grid("C...C")
    graph = build_pose_graph(g, 4)
    cands = CandidateSet(g)
    vis = build_visibility_matrix(g, graph, cands, VisConfig(fov=90, max_range=3))
    return g, graph, cands, vis


class TestAvsStep:
    RCFG = RewardConfig(r_find=100, r_step=-1, r_revisit=-25, move_budget=50)

    def test_step_onto_seeing_pose_terminates(self):
        g, graph, cands, vis = corridor_world()
        layout = ObjectLayout((1,), 0)  # target in the east candidate
        state = initial_state(graph, Pose(2, 0, 0), layout)
        nxt, obs, reward, done = avs_step(state, Action.FORWARD, graph, vis, self.RCFG)
        assert (obs, reward, done) == (1, 100.0, True)
        assert nxt.done != 0

    def test_fresh_pose_pays_step_cost(self):
        g, graph, cands, vis = corridor_world()
        layout = ObjectLayout((0,), 0)  # west target, face east so no view
        state = initial_state(graph, Pose(2, 0, 0), layout)
        nxt, obs, reward, done = avs_step(state, Action.FORWARD, graph, vis, self.RCFG)
        assert (obs, reward, done) == (0, -1.0, False)

    def test_revisit_penalty_added(self):
        g, graph, cands, vis = corridor_world()
        layout = ObjectLayout((0,), 0)
        state = initial_state(graph, Pose(2, 0, 0), layout)
        state, *_ = avs_step(state, Action.FORWARD, graph, vis, self.RCFG)
        _, obs, reward, done = avs_step(state, Action.BACKWARD, graph, vis, self.RCFG)
        assert (obs, reward, done) == (0, -26.0, False)

    def test_infeasible_action_rejected(self):
        g, graph, cands, vis = corridor_world()
        layout = ObjectLayout((0,), 0)
        state = initial_state(graph, Pose(3, 0, 0), layout)
        with pytest.raises(DomainError):
            avs_step(state, Action.FORWARD, graph, vis, self.RCFG)

    def test_budget_exhaustion_fails(self):
        g, graph, cands, vis = corridor_world()
        layout = ObjectLayout((0,), 0)
        rcfg = RewardConfig(move_budget=1)
        state = initial_state(graph, Pose(2, 0, 0), layout)
        nxt, obs, reward, done = avs_step(state, Action.FORWARD, graph, vis, rcfg)
        assert done and obs == 0 and nxt.done == 2

    def test_observation_matches_visibility_exhaustively(self):
        # every (pose, action, target): emitted bit equals the matrix entry
        g, graph, cands, vis = corridor_world()
        for target in range(len(cands)):
            layout = ObjectLayout((target,), 0)
            for pid in range(len(graph)):
                state = initial_state(graph, graph.poses[pid], layout)
                for action in legal_actions(pid, graph):
                    nxt, obs, _, _ = avs_step(state, action, graph, vis, self.RCFG)
                    assert obs == int(vis[nxt.pose_id, target])

    def test_undiscounted_return_bounded_by_find_reward(self):
        import random as pyrandom

        g, graph, cands, vis = corridor_world()
        layout = ObjectLayout((1,), 0)
        rng = pyrandom.Random(4)
        for _ in range(50):
            state = initial_state(graph, Pose(2, 0, 1), layout)
            total = 0.0
            while True:
                acts = legal_actions(state.pose_id, graph)
                state, obs, r, done = avs_step(
                    state, acts[rng.randrange(len(acts))], graph, vis, self.RCFG
                )
                total += r
                if done:
                    break
            assert total <= self.RCFG.r_find


class TestLegalActions:
    def test_interior_cell_all_four(self):
        g = grid("...", "...", "...")
        graph = build_pose_graph(g, 4)
        assert legal_actions(graph.index[Pose(1, 1, 0)], graph) == list(ACTIONS)

    def test_facing_wall_drops_forward(self):
        g = grid("...")
        graph = build_pose_graph(g, 4)
        acts = legal_actions(graph.index[Pose(2, 0, 0)], graph)
        assert acts == [Action.BACKWARD, Action.ROTATE_CW, Action.ROTATE_CCW]

    def test_single_cell_rotations_only(self):
        g = grid(".")
        graph = build_pose_graph(g, 4)
        acts = legal_actions(0, graph)
        assert acts == [Action.ROTATE_CW, Action.ROTATE_CCW]


class TestSampleLayout:
    def test_full_permutation(self):
        g = grid("CCC.")
        cands = CandidateSet(g)
        layout = sample_layout(cands, 3, np.random.default_rng(0))
        assert sorted(layout.placements) == [0, 1, 2]

    def test_uniform_frequencies(self):
        g = grid("CCCCC.")
        cands = CandidateSet(g)
        rng = np.random.default_rng(123)
        counts = [0] * 5
        for _ in range(10_000):
            counts[sample_layout(cands, 1, rng).placements[0]] += 1
        for c in counts:
            assert abs(c - 2000) <= 150

    @pytest.mark.parametrize("m", [0, 6])
    def test_bad_object_count_rejected(self, m):
        g = grid("CCCCC.")
        with pytest.raises(DomainError):
            sample_layout(CandidateSet(g), m, np.random.default_rng(0))

    def test_duplicate_placements_rejected(self):
        with pytest.raises(DomainError):
            ObjectLayout((1, 1), 0)


class TestAvsModelBelief:
    def make_model(self):
        g, graph, cands, vis = corridor_world()
        return g, graph, cands, vis, AvsModel(graph, vis, cands, RewardConfig(move_budget=50))

    def test_seen_observation_reinvigorates_from_visible_cells(self):
        import random as pyrandom

        g, graph, cands, vis, model = self.make_model()
        cfg = PomdpConfig(n_sim=1, min_particles=16)
        # all particles put the target west, agent steps east and reports 1
        start = initial_state(graph, Pose(1, 0, 0), ObjectLayout((0,), 0))
        belief = Belief([start] * 16)
        out = update_belief(belief, Action.FORWARD, 1, model, cfg, pyrandom.Random(0))
        new_pose = graph.successor(start.pose_id, Action.FORWARD)
        for particle in out.particles:
            assert vis[new_pose, particle.layout.target_cell]

    def test_noise_free_support_matches_exclusion_oracle(self):
        import random as pyrandom

        g, graph, cands, vis, model = self.make_model()
        cfg = PomdpConfig(n_sim=1, min_particles=12)
        rng = pyrandom.Random(9)
        true_layout = ObjectLayout((0,), 0)
        env = initial_state(graph, Pose(2, 0, 1), true_layout)
        belief = Belief(
            [model.make_state(env.pose_id, c) for c in model.prior_cells] * 6
        )
        excluded = set()
        for _ in range(6):
            acts = legal_actions(env.pose_id, graph)
            action = acts[rng.randrange(len(acts))]
            env, obs, _, done = avs_step(env, action, graph, vis, model.rcfg)
            if done:
                break
            if obs == 0:
                excluded |= {c for c in range(len(cands)) if vis[env.pose_id, c]}
            belief = update_belief(belief, action, obs, model, cfg, rng)
            support = {p.layout.target_cell for p in belief.particles}
            assert support <= set(model.prior_cells) - excluded

    def test_reward_bounds_exposed(self):
        *_, model = self.make_model()
        assert model.reward_bounds == (-26.0, 100.0)
