"""Bundled synthetic scenarios.

Three schematic worlds exercise the planner's trade-off: an L-shaped
feature wall south of the direct corridor, two feature clusters on opposite
sides of it, and a sparse detour wall for the receding-horizon validation.
Geometry is deterministic (fixed jitter seeds), and every world leaves the
direct start-goal corridor featureless beyond the reliable sensing range
for most of its length, so energy-only planning flies blind there.
"""

from __future__ import annotations

import numpy as np

from pep.core import Bounds, FeatureMap, GoalRegion, PlannerParams, UavState

__all__ = ["SCENARIO_NAMES", "ALPHA_PRESETS", "build_scenario", "is_bundled"]

SCENARIO_NAMES = ("scenario1", "scenario2", "validation")

# Perception-weight presets: energy-only baseline, the balanced planner,
# and the high-perception-quality baseline.
ALPHA_PRESETS = {"direct": 0.0, "proposed": 4.0, "hpq": 1000.0}


def _polyline_features(waypoints, spacing: float, jitter: float, rng) -> np.ndarray:
    """Feature points along a polyline at roughly even spacing with jitter."""
    pts = []
    wp = np.asarray(waypoints, dtype=float)
    for a, b in zip(wp[:-1], wp[1:]):
        seg = b - a
        length = float(np.hypot(*seg))
        n = max(2, int(round(length / spacing)) + 1)
        for u in np.linspace(0.0, 1.0, n, endpoint=False):
            pts.append(a + u * seg)
    pts.append(wp[-1])
    pts = np.asarray(pts)
    return pts + rng.normal(0.0, jitter, size=pts.shape)


def _cluster_features(center, radius: float, n: int, rng) -> np.ndarray:
    """Feature blob: n points uniform in a disc."""
    r = radius * np.sqrt(rng.random(n))
    th = 2.0 * np.pi * rng.random(n)
    return np.column_stack([center[0] + r * np.cos(th), center[1] + r * np.sin(th)])


def _clip_to(bounds: Bounds, pts: np.ndarray) -> np.ndarray:
    pts = pts.copy()
    pts[:, 0] = np.clip(pts[:, 0], bounds.xmin, bounds.xmax)
    pts[:, 1] = np.clip(pts[:, 1], bounds.ymin, bounds.ymax)
    return pts


def _scenario1() -> tuple[FeatureMap, UavState, GoalRegion, PlannerParams]:
    """L-shaped feature wall with its corner pointing away from the corridor.

    The direct start-goal line stays beyond sensing range of every
    feature, so an energy-only plan flies blind. Cutting across the mouth
    of the L is lit by both arms; tracing the arms down to the corner is a
    real detour, which distinguishes a mild perception weight from a
    dominant one.
    """
    rng = np.random.default_rng(11)
    bounds = Bounds(0.0, 160.0, -60.0, 60.0)
    wall = _polyline_features(
        [(40.0, -15.0), (90.0, -50.0), (125.0, -16.0)],
        spacing=2.0, jitter=0.4, rng=rng,
    )
    fmap = FeatureMap(features=_clip_to(bounds, wall), obstacles=np.zeros((0, 3)), bounds=bounds)
    start = UavState(x=8.0, y=40.0, v=1.0)
    goal = GoalRegion(cx=152.0, cy=40.0, radius=6.0)
    params = PlannerParams(max_samples=600, rng_seed=0)
    return fmap, start, goal, params


def _scenario2() -> tuple[FeatureMap, UavState, GoalRegion, PlannerParams]:
    """Two feature clusters on opposite sides of the corridor, both dark
    from the direct line."""
    rng = np.random.default_rng(22)
    bounds = Bounds(0.0, 160.0, -62.0, 62.0)
    blobs = np.vstack([
        _cluster_features((55.0, 50.0), radius=8.0, n=60, rng=rng),
        _cluster_features((105.0, -50.0), radius=8.0, n=60, rng=rng),
    ])
    fmap = FeatureMap(features=_clip_to(bounds, blobs), obstacles=np.zeros((0, 3)), bounds=bounds)
    start = UavState(x=8.0, y=0.0, v=1.0)
    goal = GoalRegion(cx=152.0, cy=0.0, radius=6.0)
    params = PlannerParams(max_samples=600, rng_seed=0)
    return fmap, start, goal, params


def _validation() -> tuple[FeatureMap, UavState, GoalRegion, PlannerParams]:
    """Sparse wall along a southern detour; the direct corridor goes dark.

    The wall starts inside sensing range of the start so the receding
    horizon loop can discover it scan by scan.
    """
    rng = np.random.default_rng(33)
    bounds = Bounds(0.0, 140.0, -60.0, 45.0)
    wall = _polyline_features(
        [(15.0, -16.0), (35.0, -38.0), (60.0, -55.0), (90.0, -55.0),
         (115.0, -38.0), (128.0, -16.0)],
        spacing=2.5, jitter=0.4, rng=rng,
    )
    fmap = FeatureMap(features=_clip_to(bounds, wall), obstacles=np.zeros((0, 3)), bounds=bounds)
    start = UavState(x=8.0, y=5.0, v=1.0)
    goal = GoalRegion(cx=132.0, cy=5.0, radius=6.0)
    params = PlannerParams(max_samples=250, rng_seed=0)
    return fmap, start, goal, params


_BUILDERS = {"scenario1": _scenario1, "scenario2": _scenario2, "validation": _validation}


def is_bundled(name: str) -> bool:
    return name in _BUILDERS


def build_scenario(name: str) -> tuple[FeatureMap, UavState, GoalRegion, PlannerParams]:
    """Deterministically construct a bundled scenario by name."""
    if name not in _BUILDERS:
        raise KeyError(f"unknown scenario {name!r}; bundled: {SCENARIO_NAMES}")
    return _BUILDERS[name]()
