"""Heteroscedastic LiDAR measurement-uncertainty models.

The range-measurement noise is split into a motion part, whose bias
``mu_m(v)`` and spread ``sigma_m(v)`` grow with the UAV's horizontal speed,
and a distance part ``sigma_d(d)`` that grows with the measured range. The
composed noise is ``mu_sens = mu_m`` (the distance bias is calibrated away)
and ``sigma_sens^2 = sigma_d^2 + sigma_m^2``.

The motion model is learned from (speed, residual) samples with a two-stage
kernel-ridge fit: the mean first, then the log of squared mean-residuals for
the input-dependent variance. Both curves are projected to be non-decreasing
in speed and re-smoothed with a shape-preserving cubic, which keeps them
cheap to evaluate and analytically differentiable inside the planner.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import isotonic_regression

from pep.core import ValidationError

__all__ = [
    "REFERENCE_SPEEDS",
    "reference_mu",
    "reference_sigma",
    "UncertaintySample",
    "MotionUncertaintyModel",
    "DistanceUncertaintyModel",
    "SensorNoise",
    "generate_reference_dataset",
    "fit_motion_model",
    "sensor_noise",
    "noise_derivatives",
    "save_dataset_csv",
    "load_dataset_csv",
    "save_motion_model",
    "load_motion_model",
]

# Reference ground-truth residual law used by the synthetic dataset
# generator (stand-in for a high-fidelity flight simulator). Both the bias
# and the spread grow with speed. Versioned: tests use it as an oracle.
REFERENCE_LAW_VERSION = 1
REFERENCE_SPEEDS = (0.1, 2.0, 4.0, 6.0, 8.0, 10.0)
_MU_COEFF = 0.004       # m per (m/s)^2
_SIGMA_OFFSET = 0.01    # m
_SIGMA_SLOPE = 0.006    # m per (m/s)

# E[log e^2] = log sigma^2 - (digamma(1/2) + log 2) for Gaussian e.
_LOG_CHI2_BIAS = 1.2703628454614782

_DEFAULT_K_D = 0.001    # distance spread fraction, m per m


def reference_mu(v):
    """Ground-truth residual bias of the synthetic generator, meters."""
    v = np.asarray(v, dtype=float)
    return _MU_COEFF * v**2


def reference_sigma(v):
    """Ground-truth residual spread of the synthetic generator, meters."""
    v = np.asarray(v, dtype=float)
    return _SIGMA_OFFSET + _SIGMA_SLOPE * v


@dataclass(frozen=True)
class UncertaintySample:
    """One (commanded speed, range residual) measurement."""

    v: float
    residual: float

    def __post_init__(self):
        if self.v < 0:
            raise ValidationError(f"sample.v must be >= 0, got {self.v}")


@dataclass(frozen=True)
class _MonotoneCurve:
    """Non-decreasing C1 curve on [lo, hi], clamped outside the domain."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "_pchip", PchipInterpolator(self.grid, self.values))
        object.__setattr__(self, "_dpchip", self._pchip.derivative())

    @property
    def lo(self) -> float:
        return float(self.grid[0])

    @property
    def hi(self) -> float:
        return float(self.grid[-1])

    def __call__(self, v):
        return self._pchip(np.clip(v, self.lo, self.hi))

    def deriv(self, v):
        """Derivative of the clamped curve (zero outside the domain)."""
        v = np.asarray(v, dtype=float)
        inside = (v >= self.lo) & (v <= self.hi)
        return np.where(inside, self._dpchip(np.clip(v, self.lo, self.hi)), 0.0)


@dataclass(frozen=True)
class MotionUncertaintyModel:
    """Fitted speed-dependent residual bias and spread.

    ``mean_curve`` and ``std_curve`` are monotone non-decreasing on the
    training speed range and evaluation clamps speeds to that range.
    ``fit_report`` carries held-out calibration statistics, including the
    fraction of held-out residuals inside the +-1 sigma band.
    """

    mean_curve: _MonotoneCurve
    std_curve: _MonotoneCurve
    train_domain: tuple[float, float]
    fit_report: dict
    kernel_lengthscale: float
    ridge: float

    def mean_fn(self, v):
        return self.mean_curve(v)

    def std_fn(self, v):
        return self.std_curve(v)

    def mean_deriv(self, v):
        return self.mean_curve.deriv(v)

    def std_deriv(self, v):
        return self.std_curve.deriv(v)


@dataclass(frozen=True)
class DistanceUncertaintyModel:
    """Range-dependent spread ``sigma_d(d) = k_d * d``; the bias is zero.

    A linear stand-in for the experimental long-range error curve; the bias
    term is always zero because it is removed by sensor calibration.
    """

    k_d: float = _DEFAULT_K_D

    def __post_init__(self):
        if self.k_d < 0:
            raise ValidationError(f"distance model k_d must be >= 0, got {self.k_d}")

    @property
    def mu_d(self) -> float:
        return 0.0

    def sigma_d_fn(self, d):
        return self.k_d * np.asarray(d, dtype=float)

    def sigma_d_deriv(self, d):
        d = np.asarray(d, dtype=float)
        return np.full_like(d, self.k_d)


@dataclass(frozen=True)
class SensorNoise:
    """Composed measurement noise at one (speed, range) operating point."""

    mu_sens: float
    sigma_sens: float

    def __post_init__(self):
        if self.sigma_sens <= 0:
            raise ValidationError("sigma_sens must be > 0")


def generate_reference_dataset(
    n_per_speed: int, speeds=REFERENCE_SPEEDS, seed: int = 0
) -> list[UncertaintySample]:
    """Draw synthetic (speed, residual) samples from the reference law.

    Residuals at speed ``v`` are N(reference_mu(v), reference_sigma(v)^2).
    Deterministic for a fixed seed.
    """
    if len(speeds) == 0:
        raise ValidationError("speeds must be non-empty")
    if n_per_speed < 2:
        raise ValidationError("n_per_speed must be >= 2")
    rng = np.random.default_rng(seed)
    out = []
    for v in speeds:
        res = rng.normal(reference_mu(v), reference_sigma(v), size=n_per_speed)
        out.extend(UncertaintySample(v=float(v), residual=float(r)) for r in res)
    return out


def _krr_fit(v: np.ndarray, y: np.ndarray, w: np.ndarray, lengthscale: float, ridge: float):
    """Weighted RBF kernel-ridge fit on distinct inputs.

    Minimizes ``sum_i w_i (y_i - f(v_i))^2 + ridge * ||f||^2`` over the RKHS.
    Targets are centered on their weighted mean so constant data is
    reproduced exactly. Returns a callable predictor.
    """
    ybar = float(np.average(y, weights=w))
    yc = y - ybar
    K = np.exp(-((v[:, None] - v[None, :]) ** 2) / (2.0 * lengthscale**2))
    alpha = np.linalg.solve(K + ridge * np.diag(1.0 / w), yc)

    def predict(vq: np.ndarray) -> np.ndarray:
        kq = np.exp(-((np.asarray(vq, dtype=float)[:, None] - v[None, :]) ** 2) / (2.0 * lengthscale**2))
        return kq @ alpha + ybar

    return predict


def _group_stats(vs: np.ndarray, ys: np.ndarray):
    """Per-distinct-speed means and counts, speeds ascending."""
    order = np.argsort(vs, kind="stable")
    vs, ys = vs[order], ys[order]
    uniq, start = np.unique(vs, return_index=True)
    counts = np.diff(np.append(start, vs.size))
    sums = np.add.reduceat(ys, start)
    return uniq, sums / counts, counts.astype(float)


def _two_stage_fit(vs: np.ndarray, rs: np.ndarray, lengthscale: float, ridge: float, n_grid: int = 201):
    """Mean curve then variance curve, both monotone-projected on a grid."""
    v_lo, v_hi = float(vs.min()), float(vs.max())
    grid = np.linspace(v_lo, v_hi, n_grid)

    gv, gmean, gcount = _group_stats(vs, rs)
    mean_pred = _krr_fit(gv, gmean, gcount, lengthscale, ridge)

    # Stage 2: spread of the stage-1 residuals, fitted in log space with the
    # chi-square bias correction, floored to stay strictly positive.
    resid = rs - mean_pred(vs)
    log_sq = np.log(resid**2 + 1e-12)
    lv, lmean, lcount = _group_stats(vs, log_sq)
    log_pred = _krr_fit(lv, lmean, lcount, lengthscale, ridge)

    mean_grid = isotonic_regression(mean_pred(grid)).x
    sigma_grid = np.exp(0.5 * (log_pred(grid) + _LOG_CHI2_BIAS))
    sigma_grid = np.maximum(isotonic_regression(sigma_grid).x, 1e-9)

    return (
        _MonotoneCurve(grid, mean_grid),
        _MonotoneCurve(grid, sigma_grid),
        (v_lo, v_hi),
    )


def fit_motion_model(data: list[UncertaintySample]) -> MotionUncertaintyModel:
    """Fit the speed-dependent bias/spread model from residual samples.

    Requires at least two distinct speeds and ten samples. The returned
    model is fitted on all samples; the held-out coverage in ``fit_report``
    comes from an internal 80/20 stride split refitted on the training part.
    """
    vs = np.array([s.v for s in data], dtype=float)
    rs = np.array([s.residual for s in data], dtype=float)
    if np.unique(vs).size < 2:
        raise ValidationError("insufficient speed diversity: need >= 2 distinct speeds")
    if vs.size < 10:
        raise ValidationError(f"need >= 10 samples to fit, got {vs.size}")

    lengthscale = (vs.max() - vs.min()) / 4.0
    ridge = 1e-3

    # Deterministic stride split for the calibration report.
    hold = np.zeros(vs.size, dtype=bool)
    hold[4::5] = True
    if np.unique(vs[~hold]).size >= 2:
        m_curve, s_curve, _ = _two_stage_fit(vs[~hold], rs[~hold], lengthscale, ridge)
        lo = np.clip(vs[hold], m_curve.lo, m_curve.hi)
        pred_mu = m_curve(lo)
        pred_sd = s_curve(lo)
        inside = np.abs(rs[hold] - pred_mu) <= pred_sd
        coverage = float(np.mean(inside)) if inside.size else float("nan")
        n_holdout = int(np.sum(hold))
    else:
        coverage, n_holdout = float("nan"), 0

    mean_curve, std_curve, domain = _two_stage_fit(vs, rs, lengthscale, ridge)
    report = {
        "n_samples": int(vs.size),
        "n_holdout": n_holdout,
        "coverage_1sigma": coverage,
        "speeds": [float(u) for u in np.unique(vs)],
    }
    return MotionUncertaintyModel(
        mean_curve=mean_curve,
        std_curve=std_curve,
        train_domain=domain,
        fit_report=report,
        kernel_lengthscale=lengthscale,
        ridge=ridge,
    )


def sensor_noise(
    model_m: MotionUncertaintyModel,
    model_d: DistanceUncertaintyModel,
    v: float,
    d: float,
) -> SensorNoise:
    """Composed noise at speed ``v`` and range ``d`` (v clamped to the
    trained speed range)."""
    if v < 0 or d < 0:
        raise ValidationError("sensor_noise requires v >= 0 and d >= 0")
    mu = float(model_m.mean_fn(v))
    s_m = float(model_m.std_fn(v))
    s_d = float(model_d.sigma_d_fn(d))
    return SensorNoise(mu_sens=mu, sigma_sens=math.hypot(s_d, s_m))


def noise_derivatives(
    model_m: MotionUncertaintyModel,
    model_d: DistanceUncertaintyModel,
    v: float,
    d: float,
) -> tuple[float, float, float]:
    """Partials of the composed noise: (dmu/dv, dsigma/dv, dsigma/dd).

    The sigma partials chain through the quadrature sum, e.g.
    ``dsigma/dv = sigma_m * sigma_m'(v) / sigma_sens``. Outside the trained
    speed range the clamped curves are constant, so the v-partials vanish.
    """
    if v < 0 or d < 0:
        raise ValidationError("noise_derivatives requires v >= 0 and d >= 0")
    s_m = float(model_m.std_fn(v))
    s_d = float(model_d.sigma_d_fn(d))
    sig = math.hypot(s_d, s_m)
    dmu_dv = float(model_m.mean_deriv(v))
    dsig_dv = s_m * float(model_m.std_deriv(v)) / sig
    dsig_dd = s_d * float(model_d.sigma_d_deriv(d)) / sig
    return dmu_dv, dsig_dv, dsig_dd


# --------------------------------------------------------------------------
# File formats
# --------------------------------------------------------------------------

def save_dataset_csv(path: str | Path, data: list[UncertaintySample], seed: int | None = None) -> None:
    """Write `v,residual` rows with a header comment recording the generator law."""
    lines = [
        f"# reference law v{REFERENCE_LAW_VERSION}: mu(V) = {_MU_COEFF}*V^2, "
        f"sigma(V) = {_SIGMA_OFFSET} + {_SIGMA_SLOPE}*V (meters); seed = {seed}",
        "v,residual",
    ]
    lines.extend(f"{s.v!r},{s.residual!r}" for s in data)
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset_csv(path: str | Path) -> list[UncertaintySample]:
    out = []
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("v,"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ValidationError(f"bad dataset row at line {ln}: {line!r}")
        try:
            out.append(UncertaintySample(v=float(parts[0]), residual=float(parts[1])))
        except ValueError as e:
            raise ValidationError(f"bad dataset row at line {ln}: {e}") from e
    return out


def save_motion_model(path: str | Path, model: MotionUncertaintyModel) -> None:
    doc = {
        "kind": "motion_uncertainty",
        "kernel": {"type": "rbf", "lengthscale": model.kernel_lengthscale, "ridge": model.ridge},
        "grid": [float(u) for u in model.mean_curve.grid],
        "mean_values": [float(u) for u in model.mean_curve.values],
        "std_values": [float(u) for u in model.std_curve.values],
        "train_domain": [model.train_domain[0], model.train_domain[1]],
        "fit_report": model.fit_report,
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def load_motion_model(path: str | Path) -> MotionUncertaintyModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("kind") != "motion_uncertainty":
        raise ValidationError(f"not a motion-uncertainty model file: {path}")
    grid = np.array(doc["grid"], dtype=float)
    return MotionUncertaintyModel(
        mean_curve=_MonotoneCurve(grid, np.array(doc["mean_values"], dtype=float)),
        std_curve=_MonotoneCurve(grid, np.array(doc["std_values"], dtype=float)),
        train_domain=(float(doc["train_domain"][0]), float(doc["train_domain"][1])),
        fit_report=doc["fit_report"],
        kernel_lengthscale=float(doc["kernel"]["lengthscale"]),
        ridge=float(doc["kernel"]["ridge"]),
    )
