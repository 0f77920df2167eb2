"""Parametric stand-in for the object detector: converts ground-truth
visibility into corrupted detections and yields the estimated target cell
used by docking.

Corruption is fixed per episode, mirroring an annotation set corrupted once
per run: each (pose, object) view is independently excluded (missing
detection) or relabeled as the target (false positive) with the configured
rates, and repeated glances from the same pose give the same answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .world import CandidateSet, GridMap, ObjectLayout

_MISS_TAG, _FP_TAG = 0, 1


@dataclass(frozen=True)
class DetectorProfile:
    """miss_rate: fraction of target views excluded.
    fp_rate: fraction of distractor views relabeled as the target.
    localization_noise: max cell radius of the reported-cell error."""

    miss_rate: float = 0.0
    fp_rate: float = 0.0
    localization_noise: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.miss_rate <= 1.0 and 0.0 <= self.fp_rate <= 1.0):
            raise ValueError(
                f"rates must be in [0, 1], got miss={self.miss_rate} fp={self.fp_rate}"
            )
        if self.localization_noise < 0.0:
            raise ValueError("localization_noise must be >= 0")


PERFECT = DetectorProfile()


@dataclass(frozen=True)
class Detection:
    """One glance's outcome; `estimated_cell` is a candidate index, present
    iff `detected`."""

    detected: bool
    estimated_cell: int | None = None
    source: str | None = None  # "true_target" | "false_positive"

    def __post_init__(self):
        if self.detected != (self.estimated_cell is not None):
            raise ValueError("estimated_cell must be present iff detected")


NO_DETECTION = Detection(False)


class DetectorNoise:
    """Episode-fixed corruption field plus the per-glance localisation
    stream. The per-view coins are threshold tests on hashed uniforms, so
    raising a rate can only flip views from clean to corrupted.

    `fp_view_rate` is the per-view relabel probability. It defaults to the
    profile's fp_rate; pass the normalised value when the rate is meant as
    a fraction of the target's view budget spread over the distractor views
    (see `fp_view_rate_for`).
    """

    def __init__(self, profile: DetectorProfile, seed: int = 0,
                 fp_view_rate: float | None = None):
        self.profile = profile
        self.seed = int(seed)
        self.fp_view_rate = profile.fp_rate if fp_view_rate is None else fp_view_rate
        self.rng = np.random.default_rng(np.random.SeedSequence((self.seed, 2)))
        self._coins: dict[tuple, float] = {}

    def _uniform(self, key: tuple) -> float:
        u = self._coins.get(key)
        if u is None:
            word = np.random.SeedSequence((self.seed,) + key).generate_state(1)[0]
            u = float(word) / 2.0**32
            self._coins[key] = u
        return u

    def misses_target(self, pose_id: int) -> bool:
        return self._uniform((_MISS_TAG, int(pose_id))) < self.profile.miss_rate

    def mislabels(self, pose_id: int, object_index: int) -> bool:
        return (
            self._uniform((_FP_TAG, int(pose_id), int(object_index)))
            < self.fp_view_rate
        )


def fp_view_rate_for(vis: np.ndarray, layout: ObjectLayout, fp_rate: float) -> float:
    """Per-view relabel probability so the expected number of relabeled
    distractor views is `fp_rate` times the target's view count (the rate is
    a fraction of the target's annotation budget, not of every view)."""
    if fp_rate <= 0.0:
        return 0.0
    target_views = int(vis[:, layout.target_cell].sum())
    distractor_views = int(sum(vis[:, c].sum() for c in layout.distractor_cells()))
    if distractor_views == 0:
        return 0.0
    return min(1.0, fp_rate * target_views / distractor_views)


def observe(
    grid: GridMap,
    pose_id: int,
    layout: ObjectLayout,
    vis: np.ndarray,
    candidates: CandidateSet,
    noise: DetectorNoise,
) -> Detection:
    """Simulate one detector glance from `pose_id`.

    A visible target is reported unless this pose's view of it is excluded;
    its cell is perturbed within localization_noise (clamped to a candidate
    cell). Otherwise the lowest-index visible distractor whose view is
    relabeled is mistaken for the target.
    """
    row = vis[pose_id]
    target = layout.target_cell
    if row[target] and not noise.misses_target(pose_id):
        cell = target
        if noise.profile.localization_noise > 0.0:
            cell = _perturb(target, candidates, noise.profile.localization_noise, noise.rng)
        return Detection(True, cell, "true_target")
    for obj_index, cell in enumerate(layout.placements):
        if obj_index == layout.target_index or not row[cell]:
            continue
        if noise.mislabels(pose_id, obj_index):
            return Detection(True, cell, "false_positive")
    return NO_DETECTION


def _perturb(cell: int, candidates: CandidateSet, radius: float, rng) -> int:
    cx, cy = candidates.cells[cell]
    near = [
        i
        for i, (x, y) in enumerate(candidates.cells)
        if math.hypot(x - cx, y - cy) <= radius
    ]
    return near[int(rng.random() * len(near))]


def planner_observation(detection: Detection) -> int:
    """The single bit the belief update consumes; the planner cannot tell a
    false positive from the real target."""
    return 1 if detection.detected else 0
