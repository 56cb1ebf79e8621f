"""Core domain types, planner parameters, and scenario file I/O.

Everything here is an immutable value type: instances can be shared across
threads and processes without synchronization. Coordinates are meters in a
fixed world frame; speeds are horizontal ground speeds in m/s.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "ValidationError",
    "ScenarioParseError",
    "UavState",
    "PlannerParams",
    "Bounds",
    "FeatureMap",
    "GoalRegion",
    "TrajectorySegment",
    "Trajectory",
    "arc_length",
    "load_scenario",
    "save_scenario",
    "scenario_to_dict",
]


class ValidationError(ValueError):
    """A domain invariant is violated; the message names the offending field."""


class ScenarioParseError(ValueError):
    """A scenario file is malformed (bad JSON, missing or mistyped keys)."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class UavState:
    """Planning state of the UAV.

    Attributes
    ----------
    x, y : float
        Center-of-gravity position, meters.
    v : float
        Horizontal speed along the path tangent, m/s. Non-negative.
    theta_r, theta_p : float
        Gimbal roll/pitch, radians. Carried for completeness; the gimbal
        counter-rotates automatically, so planning never reads them.
    t : float
        Seconds since trajectory start.
    """

    x: float
    y: float
    v: float
    theta_r: float = 0.0
    theta_p: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        if self.v < 0:
            raise ValidationError(f"state.v must be >= 0, got {self.v}")

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


# Defaults for the weights, grid geometry, velocity bounds, normalization
# power and acceleration limit follow the reference planning configuration;
# the remaining knobs (sampling budget, step sizes, grid resolution of the
# velocity search, FIM floor) are artifact choices.
@dataclass(frozen=True)
class PlannerParams:
    """Tuning knobs for the planner and both cost models."""

    alpha_p: float = 4.0          # perception weight
    alpha_e: float = 1.0          # energy weight
    r_max: float = 41.0           # CGG outer radius, m (reliable LiDAR range)
    r_min: float = 5.0            # CGG inner radius, m (obstacle standoff)
    n_r: int = 6                  # radial grid count
    n_theta: int = 12             # angular grid count
    v_max: float = 10.0           # m/s
    v_min: float = 1.0            # m/s
    p_max: float = 600.0          # normalization power, W
    a_max: float = 1.0            # m/s^2
    max_samples: int = 400        # sampling threshold for termination
    goal_bias: float = 0.05       # probability of sampling inside the goal
    near_radius_gamma: float = 90.0  # RRT* ball constant, m
    step_len: float = 20.0        # extension step, m (long enough for full
                                  # velocity ramps between tree nodes)
    dt: float = 0.1               # cost-integration timestep, s
    n_vel_candidates: int = 10    # velocity grid size for per-segment search
    epsilon_fim: float = 1e-3     # floor for the FIM metric in 1/s(I)
    rng_seed: int = 0

    def __post_init__(self):
        checks = [
            (self.r_min < self.r_max, "r_min must be < r_max"),
            (self.n_r >= 1, "n_r must be >= 1"),
            (self.n_theta >= 3, "n_theta must be >= 3"),
            (self.v_min > 0, "v_min must be > 0"),
            (self.v_min < self.v_max, "v_min must be < v_max"),
            (self.p_max > 0, "p_max must be > 0"),
            (self.a_max > 0, "a_max must be > 0"),
            (self.dt > 0, "dt must be > 0"),
            (self.epsilon_fim > 0, "epsilon_fim must be > 0"),
            (0.0 <= self.goal_bias <= 1.0, "goal_bias must be in [0, 1]"),
            (self.max_samples >= 1, "max_samples must be >= 1"),
            (self.step_len > 0, "step_len must be > 0"),
            (self.n_vel_candidates >= 1, "n_vel_candidates must be >= 1"),
            (self.near_radius_gamma > 0, "near_radius_gamma must be > 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValidationError(f"params.{msg}")

    def velocity_candidates(self) -> np.ndarray:
        """Evenly spaced cruise-velocity candidates over [v_min, v_max]."""
        if self.n_vel_candidates == 1:
            return np.array([self.v_max])
        return np.linspace(self.v_min, self.v_max, self.n_vel_candidates)


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned planning rectangle, meters."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValidationError("bounds must satisfy xmin < xmax and ymin < ymax")

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax


@dataclass(frozen=True)
class FeatureMap:
    """The planner's world: SLAM feature points plus optional obstacle discs.

    ``features`` is an (N, 2) array of feature positions, ``obstacles`` an
    (M, 3) array of ``(cx, cy, radius)`` discs. Both arrays are read-only.
    """

    features: np.ndarray
    obstacles: np.ndarray
    bounds: Bounds

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float).reshape(-1, 2)
        obs = np.asarray(self.obstacles, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "features", _readonly(feats))
        object.__setattr__(self, "obstacles", _readonly(obs))
        if feats.size and not (
            np.all(feats[:, 0] >= self.bounds.xmin)
            and np.all(feats[:, 0] <= self.bounds.xmax)
            and np.all(feats[:, 1] >= self.bounds.ymin)
            and np.all(feats[:, 1] <= self.bounds.ymax)
        ):
            raise ValidationError("features must lie within bounds")
        if obs.size and np.any(obs[:, 2] <= 0):
            raise ValidationError("obstacles radius must be > 0")

    @property
    def n_features(self) -> int:
        return self.features.shape[0]

    def point_in_obstacle(self, x: float, y: float) -> bool:
        if self.obstacles.size == 0:
            return False
        d2 = (self.obstacles[:, 0] - x) ** 2 + (self.obstacles[:, 1] - y) ** 2
        return bool(np.any(d2 <= self.obstacles[:, 2] ** 2))

    def points_in_obstacle(self, x: np.ndarray, y: np.ndarray) -> bool:
        """True if any of the given points lies inside an obstacle disc."""
        if self.obstacles.size == 0:
            return False
        dx = x[:, None] - self.obstacles[None, :, 0]
        dy = y[:, None] - self.obstacles[None, :, 1]
        return bool(np.any(dx * dx + dy * dy <= self.obstacles[None, :, 2] ** 2))


@dataclass(frozen=True)
class GoalRegion:
    """Disc-shaped goal region."""

    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValidationError("goal.radius must be > 0")

    def contains(self, x: float, y: float) -> bool:
        return (x - self.cx) ** 2 + (y - self.cy) ** 2 <= self.radius**2


@dataclass(frozen=True)
class TrajectorySegment:
    """One spline-smoothed, velocity-profiled piece of a tree trajectory.

    State samples are stored as parallel arrays ``t, x, y, v`` (``t`` is
    relative to the segment start and strictly increasing with step ``dt``;
    the final step may be shorter). ``cost = alpha_p * c_p + alpha_e * c_e``
    and ``cum_cost`` accumulates cost from the tree root through this
    segment.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    parent_tip_index: int
    c_p: float
    c_e: float
    cost: float
    cum_cost: float
    arc_length: float
    quality: float = 0.0  # summed FIM metric along the segment
    duration: float = 0.0

    def __post_init__(self):
        for name in ("t", "x", "y", "v"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        n = self.t.shape[0]
        if n == 0:
            raise ValidationError("segment.states must be non-empty")
        if n != self.x.shape[0] or n != self.y.shape[0] or n != self.v.shape[0]:
            raise ValidationError("segment state arrays must share one length")
        if n > 1 and not np.all(np.diff(self.t) > 0):
            raise ValidationError("segment timestamps must be strictly increasing")

    @property
    def n_states(self) -> int:
        return self.t.shape[0]

    @property
    def states(self) -> tuple[UavState, ...]:
        return tuple(
            UavState(x=float(self.x[i]), y=float(self.y[i]), v=float(self.v[i]), t=float(self.t[i]))
            for i in range(self.n_states)
        )

    @property
    def tip_state(self) -> UavState:
        i = self.n_states - 1
        return UavState(x=float(self.x[i]), y=float(self.y[i]), v=float(self.v[i]), t=float(self.t[i]))


@dataclass(frozen=True)
class Trajectory:
    """Root-to-goal chain of segments with the summary metrics."""

    segments: tuple[TrajectorySegment, ...]
    total_energy: float       # joules, c_e * p_max summed over segments
    total_perception: float   # summed FIM metric (perception quality)
    duration: float           # seconds
    n_samples_used: int = 0   # planner samples drawn before extraction

    def state_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Concatenated (t, x, y, v) with global time and joint states deduped."""
        ts, xs, ys, vs = [], [], [], []
        offset = 0.0
        for k, seg in enumerate(self.segments):
            sl = slice(None) if k == 0 else slice(1, None)
            ts.append(seg.t[sl] + offset)
            xs.append(seg.x[sl])
            ys.append(seg.y[sl])
            vs.append(seg.v[sl])
            offset += float(seg.t[-1])
        return (np.concatenate(ts), np.concatenate(xs), np.concatenate(ys), np.concatenate(vs))

    @property
    def final_state(self) -> UavState:
        return self.segments[-1].tip_state

    @property
    def length(self) -> float:
        return float(sum(seg.arc_length for seg in self.segments))


def arc_length(points: Sequence[Sequence[float]] | np.ndarray) -> float:
    """Total Euclidean length of a polyline of (x, y) points.

    Raises
    ------
    ValidationError
        If fewer than 2 points are given.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValidationError("arc_length requires at least 2 (x, y) points")
    return float(np.sum(np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))))


# --------------------------------------------------------------------------
# Scenario files
# --------------------------------------------------------------------------

_PARAM_NAMES = {f.name for f in fields(PlannerParams)}


def _require(d: dict, key: str, ctx: str):
    if key not in d:
        raise ScenarioParseError(f"missing key '{ctx}{key}'")
    return d[key]


def load_scenario(path: str | Path) -> tuple[FeatureMap, UavState, GoalRegion, PlannerParams]:
    """Load and validate a scenario JSON file.

    Schema: ``features: [[x,y],...]``, ``obstacles: [[cx,cy,r],...]``
    (optional), ``start: {x,y,v}`` (``v`` optional, defaults to ``v_min``),
    ``goal: {cx,cy,radius}``, ``bounds: {xmin,xmax,ymin,ymax}``, and
    ``params: {...}`` where absent parameters take their defaults.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ScenarioParseError(f"cannot parse scenario file {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ScenarioParseError("scenario root must be a JSON object")
    return scenario_from_dict(raw)


def scenario_from_dict(raw: dict) -> tuple[FeatureMap, UavState, GoalRegion, PlannerParams]:
    params_raw = raw.get("params", {})
    unknown = set(params_raw) - _PARAM_NAMES
    if unknown:
        raise ScenarioParseError(f"unknown params keys: {sorted(unknown)}")
    params = PlannerParams(**params_raw)

    bounds_raw = _require(raw, "bounds", "")
    bounds = Bounds(
        xmin=float(_require(bounds_raw, "xmin", "bounds.")),
        xmax=float(_require(bounds_raw, "xmax", "bounds.")),
        ymin=float(_require(bounds_raw, "ymin", "bounds.")),
        ymax=float(_require(bounds_raw, "ymax", "bounds.")),
    )
    fmap = FeatureMap(
        features=np.asarray(_require(raw, "features", ""), dtype=float).reshape(-1, 2),
        obstacles=np.asarray(raw.get("obstacles", []), dtype=float).reshape(-1, 3),
        bounds=bounds,
    )
    start_raw = _require(raw, "start", "")
    start = UavState(
        x=float(_require(start_raw, "x", "start.")),
        y=float(_require(start_raw, "y", "start.")),
        v=float(start_raw.get("v", params.v_min)),
    )
    goal_raw = _require(raw, "goal", "")
    goal = GoalRegion(
        cx=float(_require(goal_raw, "cx", "goal.")),
        cy=float(_require(goal_raw, "cy", "goal.")),
        radius=float(_require(goal_raw, "radius", "goal.")),
    )
    if not bounds.contains(start.x, start.y):
        raise ValidationError("start must lie within bounds")
    return fmap, start, goal, params


def scenario_to_dict(
    fmap: FeatureMap, start: UavState, goal: GoalRegion, params: PlannerParams
) -> dict:
    return {
        "features": [[float(x), float(y)] for x, y in fmap.features],
        "obstacles": [[float(a), float(b), float(c)] for a, b, c in fmap.obstacles],
        "start": {"x": start.x, "y": start.y, "v": start.v},
        "goal": {"cx": goal.cx, "cy": goal.cy, "radius": goal.radius},
        "bounds": {
            "xmin": fmap.bounds.xmin,
            "xmax": fmap.bounds.xmax,
            "ymin": fmap.bounds.ymin,
            "ymax": fmap.bounds.ymax,
        },
        "params": {f.name: getattr(params, f.name) for f in fields(PlannerParams)},
    }


def save_scenario(
    path: str | Path,
    fmap: FeatureMap,
    start: UavState,
    goal: GoalRegion,
    params: PlannerParams,
) -> None:
    """Write a scenario JSON file that `load_scenario` reproduces bit-exactly."""
    Path(path).write_text(json.dumps(scenario_to_dict(fmap, start, goal, params), indent=2))
