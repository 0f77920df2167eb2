"""Detector simulator tests: clean-profile equivalence with ground truth,
rate calibration across episode seeds, per-episode consistency of the
corruption field, and miss-rate coupling monotonicity."""

import numpy as np
import pytest

from avsearch.perception import (
    PERFECT,
    Detection,
    DetectorNoise,
    DetectorProfile,
    observe,
    planner_observation,
)
from avsearch.world import (
    CandidateSet,
    GridMap,
    ObjectLayout,
    VisConfig,
    build_pose_graph,
    build_visibility_matrix,
)


@pytest.fixture(scope="module")
def setup():
    g = GridMap.from_rows(["C...C", ".....", "..C.."])
    graph = build_pose_graph(g, 8)
    cands = CandidateSet(g)
    vis = build_visibility_matrix(g, graph, cands, VisConfig(fov=120, max_range=4))
    return g, graph, cands, vis


def find_pose(graph, vis, cell, seeing=True):
    for pid in range(len(graph)):
        if bool(vis[pid, cell]) == seeing:
            return pid
    raise AssertionError("no such pose")


class TestProfiles:
    def test_rates_validated(self):
        with pytest.raises(ValueError):
            DetectorProfile(miss_rate=1.5)
        with pytest.raises(ValueError):
            DetectorProfile(fp_rate=-0.1)
        with pytest.raises(ValueError):
            DetectorProfile(localization_noise=-1)

    def test_detection_shape_validated(self):
        with pytest.raises(ValueError):
            Detection(True, None)
        with pytest.raises(ValueError):
            Detection(False, 3)


class TestObserve:
    def test_perfect_profile_reproduces_visibility(self, setup):
        g, graph, cands, vis = setup
        layout = ObjectLayout((0, 2), 0)
        noise = DetectorNoise(PERFECT, seed=0)
        for pid in range(len(graph)):
            det = observe(g, pid, layout, vis, cands, noise)
            assert det.detected == bool(vis[pid, 0])
            if det.detected:
                assert det.estimated_cell == 0
                assert det.source == "true_target"

    def test_certain_miss_never_detects_target(self, setup):
        g, graph, cands, vis = setup
        layout = ObjectLayout((0,), 0)
        pid = find_pose(graph, vis, 0, seeing=True)
        for seed in range(20):
            noise = DetectorNoise(DetectorProfile(miss_rate=1.0), seed=seed)
            assert not observe(g, pid, layout, vis, cands, noise).detected

    def test_false_positive_frequency_across_episodes(self, setup):
        # target hidden, one distractor visible, fp = 0.4: detection
        # frequency over 10000 episode seeds is 0.40 +- 0.02
        g, graph, cands, vis = setup
        layout = ObjectLayout((0, 2), 0)
        pid = next(p for p in range(len(graph)) if not vis[p, 0] and vis[p, 2])
        profile = DetectorProfile(fp_rate=0.4)
        hits = sum(
            observe(g, pid, layout, vis, cands, DetectorNoise(profile, seed)).detected
            for seed in range(10_000)
        )
        assert abs(hits / 10_000 - 0.40) <= 0.02

    def test_miss_frequency_across_episodes(self, setup):
        g, graph, cands, vis = setup
        layout = ObjectLayout((0,), 0)
        pid = find_pose(graph, vis, 0, seeing=True)
        profile = DetectorProfile(miss_rate=0.3)
        hits = sum(
            observe(g, pid, layout, vis, cands, DetectorNoise(profile, seed)).detected
            for seed in range(10_000)
        )
        assert abs(hits / 10_000 - 0.70) <= 0.02

    def test_corruption_fixed_within_episode(self, setup):
        # repeated glances from one pose in one episode are identical
        g, graph, cands, vis = setup
        layout = ObjectLayout((0, 2), 0)
        profile = DetectorProfile(miss_rate=0.5, fp_rate=0.5)
        for seed in range(30):
            noise = DetectorNoise(profile, seed=seed)
            for pid in range(0, len(graph), 7):
                first = observe(g, pid, layout, vis, cands, noise)
                for _ in range(3):
                    assert observe(g, pid, layout, vis, cands, noise) == first

    def test_false_positive_names_visible_distractor(self, setup):
        g, graph, cands, vis = setup
        layout = ObjectLayout((0, 2, 1), 0)
        noise = DetectorNoise(DetectorProfile(fp_rate=1.0), seed=9)
        for pid in range(len(graph)):
            if vis[pid, 0]:
                continue
            det = observe(g, pid, layout, vis, cands, noise)
            if det.detected:
                assert det.source == "false_positive"
                assert det.estimated_cell in (1, 2)
                assert vis[pid, det.estimated_cell]
                # lowest-index relabeled distractor in object order
                firsts = [c for c in (2, 1) if vis[pid, c]]
                assert det.estimated_cell == firsts[0]

    def test_nothing_visible_never_detects(self, setup):
        g, graph, cands, vis = setup
        layout = ObjectLayout((0, 2), 0)
        pid = next(p for p in range(len(graph)) if not vis[p, 0] and not vis[p, 2])
        noise = DetectorNoise(DetectorProfile(miss_rate=0.0, fp_rate=1.0), seed=1)
        assert not observe(g, pid, layout, vis, cands, noise).detected

    def test_miss_rate_monotone_under_coupling(self, setup):
        # shared corruption seed: raising the miss rate only flips views off
        g, graph, cands, vis = setup
        layout = ObjectLayout((0,), 0)
        pid = find_pose(graph, vis, 0, seeing=True)
        for seed in range(200):
            detected = [
                observe(
                    g, pid, layout, vis, cands,
                    DetectorNoise(DetectorProfile(miss_rate=rate), seed=seed),
                ).detected
                for rate in (0.2, 0.5, 0.9)
            ]
            assert detected == sorted(detected, reverse=True)

    def test_localization_noise_stays_on_candidates(self, setup):
        g, graph, cands, vis = setup
        layout = ObjectLayout((2,), 0)
        pid = find_pose(graph, vis, 2, seeing=True)
        noise = DetectorNoise(DetectorProfile(localization_noise=10.0), seed=5)
        seen = set()
        for _ in range(200):
            det = observe(g, pid, layout, vis, cands, noise)
            assert det.detected
            seen.add(det.estimated_cell)
        assert seen <= set(range(len(cands)))
        assert len(seen) > 1  # radius 10 covers every candidate here


class TestPlannerObservation:
    def test_bit_values(self):
        assert planner_observation(Detection(True, 3, "true_target")) == 1
        assert planner_observation(Detection(True, 2, "false_positive")) == 1
        assert planner_observation(Detection(False)) == 0
