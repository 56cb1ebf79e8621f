"""Perception quality from Fisher information on a circular grid graph.

Feature points within an annulus around the UAV are downsampled onto a
polar occupancy grid (the circular grid graph, CGG); each occupied cell
contributes one pseudo range measurement at the centroid of its features.
The Fisher information of those measurements over the state (x, y, V) is
summed per state and collapsed to a scalar localizability metric; the
perception cost of a segment integrates the reciprocal of that metric over
time, so poorly observable stretches are expensive.

Measurement noise is heteroscedastic: both its bias and spread depend on
speed, and the spread also grows with range. The information matrix of a
Gaussian with parameter-dependent mean m and spread s is

    I = (dm)^T (dm) / s^2 + (ds^2)^T (ds^2) / (2 s^4)

whose second term equals 2 (ds)^T (ds) / s^2; that term is what makes
speed observable and slow flight informative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pep.core import FeatureMap, PlannerParams, UavState, ValidationError
from pep.uncertainty import (
    DistanceUncertaintyModel,
    MotionUncertaintyModel,
    noise_derivatives,
    sensor_noise,
)

__all__ = [
    "CircularGridGraph",
    "FisherInfo",
    "build_cgg",
    "range_observation",
    "fim_for_grid",
    "fim_at_state",
    "fim_metric",
    "segment_perception_cost",
    "perception_cost_arrays",
    "fim_metric_at",
]

METRIC_KINDS = ("min_eigenvalue", "min_eigenvalue_full", "determinant")

try:  # compiled fast path for the planner's inner loop
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


@dataclass(frozen=True)
class CircularGridGraph:
    """Polar occupancy grid centered on the UAV.

    ``cells`` is the (n_r, n_theta) boolean occupancy; ``cell_indices`` the
    (K, 2) radial/angular indices of the K occupied cells and ``reps`` their
    (K, 2) pseudo-measurement points (feature centroids).
    """

    center: tuple[float, float]
    r_min: float
    r_max: float
    n_r: int
    n_theta: int
    cells: np.ndarray
    cell_indices: np.ndarray
    reps: np.ndarray

    @property
    def n_true(self) -> int:
        return self.reps.shape[0]


@dataclass(frozen=True)
class FisherInfo:
    """Symmetric PSD 3x3 information matrix over (x, y, V)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValidationError(f"FIM must be 3x3, got {m.shape}")
        if not np.allclose(m, m.T, atol=1e-12, rtol=0.0):
            raise ValidationError("FIM must be symmetric within 1e-12")
        object.__setattr__(self, "matrix", 0.5 * (m + m.T))


def build_cgg(fmap: FeatureMap, center: tuple[float, float], params: PlannerParams) -> CircularGridGraph:
    """Bin features into the annular sectors around ``center``.

    A cell is occupied iff at least one feature falls inside it; features
    closer than ``r_min`` or at ``r_max`` and beyond set nothing. The
    representative point of an occupied cell is the centroid of its
    features.
    """
    cx, cy = float(center[0]), float(center[1])
    n_r, n_theta = params.n_r, params.n_theta
    cells = np.zeros((n_r, n_theta), dtype=bool)
    feats = fmap.features
    if feats.shape[0] == 0:
        return CircularGridGraph(
            center=(cx, cy), r_min=params.r_min, r_max=params.r_max,
            n_r=n_r, n_theta=n_theta, cells=cells,
            cell_indices=np.zeros((0, 2), dtype=int), reps=np.zeros((0, 2)),
        )

    dx = feats[:, 0] - cx
    dy = feats[:, 1] - cy
    r = np.hypot(dx, dy)
    keep = (r >= params.r_min) & (r < params.r_max)
    if not np.any(keep):
        return CircularGridGraph(
            center=(cx, cy), r_min=params.r_min, r_max=params.r_max,
            n_r=n_r, n_theta=n_theta, cells=cells,
            cell_indices=np.zeros((0, 2), dtype=int), reps=np.zeros((0, 2)),
        )

    dr = (params.r_max - params.r_min) / n_r
    dtheta = 2.0 * math.pi / n_theta
    theta = np.mod(np.arctan2(dy[keep], dx[keep]), 2.0 * math.pi)
    ri = np.minimum(((r[keep] - params.r_min) / dr).astype(int), n_r - 1)
    ti = np.minimum((theta / dtheta).astype(int), n_theta - 1)
    flat = ri * n_theta + ti

    uniq, inv = np.unique(flat, return_inverse=True)
    sums_x = np.bincount(inv, weights=feats[keep, 0])
    sums_y = np.bincount(inv, weights=feats[keep, 1])
    counts = np.bincount(inv).astype(float)
    reps = np.column_stack([sums_x / counts, sums_y / counts])

    idx = np.column_stack([uniq // n_theta, uniq % n_theta])
    cells[idx[:, 0], idx[:, 1]] = True
    return CircularGridGraph(
        center=(cx, cy), r_min=params.r_min, r_max=params.r_max,
        n_r=n_r, n_theta=n_theta, cells=cells, cell_indices=idx, reps=reps,
    )


def range_observation(state_pos, grid_rep) -> tuple[float, np.ndarray]:
    """Range to the pseudo-measurement point and its position Jacobian.

    Returns ``(d, dd/d(x, y))`` with the Jacobian pointing away from the
    representative point (moving toward it shortens the range).
    """
    px, py = float(state_pos[0]), float(state_pos[1])
    gx, gy = float(grid_rep[0]), float(grid_rep[1])
    d = math.hypot(gx - px, gy - py)
    if d == 0.0:
        raise ValidationError("degenerate range: state and grid point coincide")
    return d, np.array([(px - gx) / d, (py - gy) / d])


def fim_for_grid(
    state: UavState,
    grid_rep,
    model_m: MotionUncertaintyModel,
    model_d: DistanceUncertaintyModel,
) -> FisherInfo:
    """Information from one pseudo range measurement, over (x, y, V).

    The mean row is ``[dh/dx, dh/dy, dmu/dV]``; the spread row chains the
    range partial through the distance term. See the module docstring for
    the two-term closed form.
    """
    d, jac = range_observation((state.x, state.y), grid_rep)
    noise = sensor_noise(model_m, model_d, state.v, d)
    dmu_dv, dsig_dv, dsig_dd = noise_derivatives(model_m, model_d, state.v, d)
    sig2 = noise.sigma_sens**2
    j1 = np.array([jac[0], jac[1], dmu_dv])
    j2 = np.array([dsig_dd * jac[0], dsig_dd * jac[1], dsig_dv])
    m = np.outer(j1, j1) / sig2 + 2.0 * np.outer(j2, j2) / sig2
    return FisherInfo(matrix=m)


def _fim_matrix_at(
    x: float,
    y: float,
    v: float,
    fmap: FeatureMap,
    model_m: MotionUncertaintyModel,
    model_d: DistanceUncertaintyModel,
    params: PlannerParams,
    sigma_m: float | None = None,
    dsig_m: float | None = None,
    dmu_dv: float | None = None,
) -> np.ndarray:
    """Summed 3x3 FIM over the occupied CGG cells, vectorized over cells.

    The speed-dependent model evaluations can be passed in to amortize
    them across the states of a segment.
    """
    cgg = build_cgg(fmap, (x, y), params)
    if cgg.n_true == 0:
        return np.zeros((3, 3))
    if sigma_m is None:
        sigma_m = float(model_m.std_fn(v))
        dsig_m = float(model_m.std_deriv(v))
        dmu_dv = float(model_m.mean_deriv(v))

    delta = np.column_stack([x - cgg.reps[:, 0], y - cgg.reps[:, 1]])
    d = np.hypot(delta[:, 0], delta[:, 1])
    jac = delta / d[:, None]

    sigma_d = model_d.sigma_d_fn(d)
    sig2 = sigma_d**2 + sigma_m**2
    sig = np.sqrt(sig2)
    dsig_dd = sigma_d * model_d.sigma_d_deriv(d) / sig
    dsig_dv = sigma_m * dsig_m / sig

    j1 = np.column_stack([jac, np.full(d.shape, dmu_dv)])
    j2 = np.column_stack([dsig_dd[:, None] * jac, dsig_dv])
    w = 1.0 / sig2
    m = np.einsum("k,ki,kj->ij", w, j1, j1) + np.einsum("k,ki,kj->ij", 2.0 * w, j2, j2)
    return 0.5 * (m + m.T)


def fim_at_state(
    state: UavState,
    fmap: FeatureMap,
    model_m: MotionUncertaintyModel,
    model_d: DistanceUncertaintyModel,
    params: PlannerParams,
) -> FisherInfo:
    """Sum of per-cell FIMs at the state's position (zero if no cells)."""
    return FisherInfo(matrix=_fim_matrix_at(state.x, state.y, state.v, fmap, model_m, model_d, params))


def _min_eig_2x2(a: float, b: float, c: float) -> float:
    return 0.5 * (a + c) - math.hypot(0.5 * (a - c), b)


def fim_metric(info: FisherInfo | np.ndarray, kind: str = "min_eigenvalue") -> float:
    """Collapse an information matrix to a non-negative scalar.

    ``min_eigenvalue`` (default) takes the smallest eigenvalue of the 2x2
    position block, the localizability of (x, y); ``min_eigenvalue_full``
    and ``determinant`` operate on the full 3x3 matrix.
    """
    m = info.matrix if isinstance(info, FisherInfo) else np.asarray(info, dtype=float)
    if kind == "min_eigenvalue":
        val = _min_eig_2x2(m[0, 0], m[0, 1], m[1, 1])
    elif kind == "min_eigenvalue_full":
        val = float(np.linalg.eigvalsh(m)[0])
    elif kind == "determinant":
        val = float(np.linalg.det(m))
    else:
        raise ValidationError(f"unknown FIM metric kind {kind!r}")
    return max(val, 0.0)


def fim_metric_at(
    x: float,
    y: float,
    v: float,
    fmap: FeatureMap,
    model_m: MotionUncertaintyModel,
    model_d: DistanceUncertaintyModel,
    params: PlannerParams,
    kind: str = "min_eigenvalue",
) -> float:
    """Metric of the summed FIM at an arbitrary position/speed (field probe)."""
    return fim_metric(_fim_matrix_at(x, y, v, fmap, model_m, model_d, params), kind)


if _HAVE_NUMBA:

    @numba.njit(cache=True, fastmath=False)
    def _metrics_kernel(
        xs, ys, sigma_m,
        fx, fy, r_min, r_max, n_r, n_theta, k_d, out,
    ):  # pragma: no cover - exercised via perception_cost_arrays
        """Position-block min-eigenvalue of the summed FIM per state.

        Same math as the numpy path: bin features into the annular grid,
        take per-cell feature centroids, accumulate the two information
        terms (the speed rows never touch the position block), then close
        the 2x2 eigenvalue in closed form. Cells accumulate in ascending
        flat-index order.
        """
        two_pi = 2.0 * math.pi
        dr = (r_max - r_min) / n_r
        dth = two_pi / n_theta
        n_cells = n_r * n_theta
        sx = np.zeros(n_cells)
        sy = np.zeros(n_cells)
        cnt = np.zeros(n_cells)
        for i in range(xs.shape[0]):
            cx = xs[i]
            cy = ys[i]
            for c in range(n_cells):
                sx[c] = 0.0
                sy[c] = 0.0
                cnt[c] = 0.0
            for k in range(fx.shape[0]):
                dx = fx[k] - cx
                dy = fy[k] - cy
                r = math.hypot(dx, dy)
                if r < r_min or r >= r_max:
                    continue
                th = math.atan2(dy, dx)
                if th < 0.0:
                    th += two_pi
                ri = int((r - r_min) / dr)
                if ri > n_r - 1:
                    ri = n_r - 1
                ti = int(th / dth)
                if ti > n_theta - 1:
                    ti = n_theta - 1
                c = ri * n_theta + ti
                sx[c] += fx[k]
                sy[c] += fy[k]
                cnt[c] += 1.0
            a = 0.0  # position block entries of the summed FIM
            b = 0.0
            cc = 0.0
            sm = sigma_m[i]
            for c in range(n_cells):
                if cnt[c] == 0.0:
                    continue
                gx = sx[c] / cnt[c]
                gy = sy[c] / cnt[c]
                ddx = cx - gx
                ddy = cy - gy
                d = math.hypot(ddx, ddy)
                ux = ddx / d
                uy = ddy / d
                sd = k_d * d
                sig2 = sd * sd + sm * sm
                dsig_dd = sd * k_d / math.sqrt(sig2)
                w1 = 1.0 / sig2
                w2 = 2.0 / sig2 * dsig_dd * dsig_dd
                a += (w1 + w2) * ux * ux
                b += (w1 + w2) * ux * uy
                cc += (w1 + w2) * uy * uy
            half = 0.5 * (a + cc)
            diff = 0.5 * (a - cc)
            lam = half - math.hypot(diff, b)
            out[i] = lam if lam > 0.0 else 0.0


def perception_cost_arrays(
    x: np.ndarray,
    y: np.ndarray,
    v: np.ndarray,
    dt: float,
    fmap: FeatureMap,
    model_m: MotionUncertaintyModel,
    model_d: DistanceUncertaintyModel,
    params: PlannerParams,
    kind: str = "min_eigenvalue",
    return_metrics: bool = False,
):
    """Segment perception cost over sampled states.

    ``c_p`` sums ``dt / max(s(I), epsilon_fim)`` across states (every state
    weighs one integration step) and ``quality`` sums the raw metric, the
    summed-eigenvalue figure reported for whole trajectories.
    """
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    sigma_m = np.ascontiguousarray(model_m.std_fn(v), dtype=float)

    n = len(x)
    metrics = np.empty(n)
    if _HAVE_NUMBA and kind == "min_eigenvalue":
        _metrics_kernel(
            x, y, sigma_m,
            np.ascontiguousarray(fmap.features[:, 0]),
            np.ascontiguousarray(fmap.features[:, 1]),
            params.r_min, params.r_max, params.n_r, params.n_theta,
            model_d.k_d, metrics,
        )
    else:
        dsig_m = np.asarray(model_m.std_deriv(v), dtype=float)
        dmu_dv = np.asarray(model_m.mean_deriv(v), dtype=float)
        for i in range(n):
            m = _fim_matrix_at(
                float(x[i]), float(y[i]), float(v[i]), fmap, model_m, model_d, params,
                sigma_m=float(sigma_m[i]), dsig_m=float(dsig_m[i]), dmu_dv=float(dmu_dv[i]),
            )
            metrics[i] = fim_metric(m, kind)
    c_p = float(np.sum(dt / np.maximum(metrics, params.epsilon_fim)))
    quality = float(np.sum(metrics))
    if return_metrics:
        return c_p, quality, metrics
    return c_p, quality


def segment_perception_cost(
    states: list[UavState],
    fmap: FeatureMap,
    model_m: MotionUncertaintyModel,
    model_d: DistanceUncertaintyModel,
    params: PlannerParams,
    kind: str = "min_eigenvalue",
) -> tuple[float, float]:
    """`perception_cost_arrays` over a list of states sampled at ``dt``."""
    x = np.array([s.x for s in states])
    y = np.array([s.y for s in states])
    v = np.array([s.v for s in states])
    return perception_cost_arrays(x, y, v, params.dt, fmap, model_m, model_d, params, kind)
