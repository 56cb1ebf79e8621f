"""Cubic-spline path smoothing with arc-length parameterization.

Tree node positions act as control points for natural cubic splines x(u),
y(u) over a chord-length knot parameter. An arc-length table (5-node
Gauss-Legendre per span, bisection inverse) lets the velocity profile walk
the curve by distance, which keeps state sampling and the two-phase
ramp-then-cruise profile consistent with the energy model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from pep.core import UavState, ValidationError
from pep.energy import RampTooLongError, ramp_distance

__all__ = ["SmoothPath", "smooth", "sample_states", "sample_profile", "profile_kinematics"]

_GL_NODES, _GL_WEIGHTS = leggauss(5)


@dataclass(frozen=True)
class SmoothPath:
    """Interpolating C2 curve through control points with a length table.

    ``knots`` are the chord-length parameter values of the control points,
    ``knot_lengths`` the cumulative arc length at each knot, and the
    curve itself is a vector-valued cubic ``spline(u) -> (x, y)``.
    """

    spline: CubicSpline
    knots: np.ndarray
    knot_lengths: np.ndarray
    control_points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_dspline", self.spline.derivative())

    @property
    def total_length(self) -> float:
        return float(self.knot_lengths[-1])

    def point(self, u):
        return self.spline(u)

    def derivative(self, u):
        """Curve tangent (dx/du, dy/du)."""
        return self._dspline(u)

    def _speed(self, u: np.ndarray) -> np.ndarray:
        d = self._dspline(u)
        return np.hypot(d[..., 0], d[..., 1])

    def _partial_length(self, u_lo: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Gauss-Legendre arc length from ``u_lo`` to ``u``, elementwise."""
        half = 0.5 * (u - u_lo)
        nodes = u_lo[:, None] + half[:, None] * (_GL_NODES[None, :] + 1.0)
        speeds = self._speed(nodes.ravel()).reshape(nodes.shape)
        return half * (speeds @ _GL_WEIGHTS)

    def length_at(self, u) -> np.ndarray:
        """Arc length s(u) from the first control point."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        u = np.clip(u, self.knots[0], self.knots[-1])
        j = np.clip(np.searchsorted(self.knots, u, side="right") - 1, 0, len(self.knots) - 2)
        return self.knot_lengths[j] + self._partial_length(self.knots[j], u)

    def u_at_length(self, s) -> np.ndarray:
        """Inverse of the length table by bisection (s clamped to [0, L])."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        s = np.clip(s, 0.0, self.total_length)
        j = np.clip(np.searchsorted(self.knot_lengths, s, side="right") - 1, 0, len(self.knots) - 2)
        lo = self.knots[j].copy()
        hi = self.knots[j + 1].copy()
        u0 = self.knots[j]
        target = s - self.knot_lengths[j]
        # Fixed iteration count: each element converges independently, so
        # results do not depend on how targets are batched.
        for _ in range(42):
            mid = 0.5 * (lo + hi)
            below = self._partial_length(u0, mid) < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        u = 0.5 * (lo + hi)
        # Pin the exact ends so endpoint states land on the control points.
        u[s <= 0.0] = self.knots[0]
        u[s >= self.total_length] = self.knots[-1]
        return u

    def point_at_length(self, s) -> np.ndarray:
        return self.spline(self.u_at_length(s))

    def tangent_at_length(self, s) -> np.ndarray:
        """Unit tangent at arc length ``s``."""
        d = self._dspline(self.u_at_length(s))
        n = np.hypot(d[..., 0], d[..., 1])
        return d / np.clip(n, 1e-300, None)[..., None]


def smooth(control_points) -> SmoothPath:
    """Natural cubic splines through the control points (chord-length knots).

    Two control points degenerate to the straight segment. Consecutive
    duplicate points are rejected.
    """
    pts = np.asarray(control_points, dtype=float).reshape(-1, 2)
    if pts.shape[0] < 2:
        raise ValidationError("smooth requires >= 2 control points")
    chords = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    if np.any(chords == 0.0):
        raise ValidationError("consecutive control points must be distinct")
    knots = np.concatenate([[0.0], np.cumsum(chords)])
    spline = CubicSpline(knots, pts, bc_type="natural")

    # Cumulative per-span Gauss-Legendre arc lengths.
    dspline = spline.derivative()
    half = 0.5 * np.diff(knots)
    nodes = knots[:-1, None] + half[:, None] * (_GL_NODES[None, :] + 1.0)
    d = dspline(nodes.ravel())
    speeds = np.hypot(d[:, 0], d[:, 1]).reshape(nodes.shape)
    spans = half * (speeds @ _GL_WEIGHTS)

    return SmoothPath(
        spline=spline,
        knots=knots,
        knot_lengths=np.concatenate([[0.0], np.cumsum(spans)]),
        control_points=pts,
    )


def _profile_times(total_time: float, dt: float) -> np.ndarray:
    n_full = int(math.floor(total_time / dt + 1e-9))
    t = np.arange(n_full + 1) * dt
    if total_time - t[-1] > 1e-9:
        t = np.append(t, total_time)
    else:
        t[-1] = total_time
    return t


def profile_kinematics(
    v_cur: float, v_tmp: float, a_max: float, dt: float, length: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form (t, arc s, v) samples of the ramp-then-cruise profile.

    Raises
    ------
    RampTooLongError
        If the ramp distance exceeds ``length``.
    """
    d_ramp = ramp_distance(v_cur, v_tmp, a_max)
    if d_ramp > length * (1.0 + 1e-12) + 1e-12:
        raise RampTooLongError(
            f"ramp {v_cur}->{v_tmp} m/s needs {d_ramp:.3f} m of {length:.3f} m"
        )
    d_ramp = min(d_ramp, length)
    t_ramp = abs(v_tmp - v_cur) / a_max
    total_time = t_ramp + (length - d_ramp) / v_tmp
    accel = math.copysign(a_max, v_tmp - v_cur) if v_tmp != v_cur else 0.0

    t = _profile_times(total_time, dt)
    in_ramp = t < t_ramp
    s = np.where(
        in_ramp,
        v_cur * t + 0.5 * accel * t**2,
        d_ramp + v_tmp * (t - t_ramp),
    )
    v = np.where(in_ramp, v_cur + accel * t, v_tmp)
    s = np.minimum(s, length)
    s[-1] = length
    return t, s, v


def sample_profile(
    path: SmoothPath,
    v_cur: float,
    v_tmp: float,
    a_max: float,
    dt: float,
    s_start: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sample (t, x, y, v) arrays along the ramp-then-cruise profile.

    The walk starts at arc length ``s_start`` (a knot of the smoothing
    window in planner use) and ends exactly at the path end. Times step by
    ``dt`` with a shorter final step.

    Raises
    ------
    RampTooLongError
        If the ramp distance exceeds the available arc length.
    """
    length = path.total_length - s_start
    if length <= 0:
        raise ValidationError("s_start must leave positive arc length")
    t, s, v = profile_kinematics(v_cur, v_tmp, a_max, dt, length)
    pos = path.point_at_length(s_start + s)
    return t, pos[:, 0], pos[:, 1], v


def sample_states(
    path: SmoothPath,
    v_profile: tuple[float, float, float],
    dt: float,
    s_start: float = 0.0,
) -> list[UavState]:
    """`sample_profile` packaged as UavState objects (t relative to entry)."""
    v_cur, v_tmp, a_max = v_profile
    t, x, y, v = sample_profile(path, v_cur, v_tmp, a_max, dt, s_start)
    return [
        UavState(x=float(x[i]), y=float(y[i]), v=float(v[i]), t=float(t[i]))
        for i in range(len(t))
    ]
