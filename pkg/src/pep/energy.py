"""Data-driven power-consumption models and the normalized segment energy cost.

Power is measured (synthetically here) at a handful of command velocities in
three flight modes: constant velocity, accelerating, and decelerating. The
per-mode curves are shape-preserving cubic interpolations of the per-speed
means; energy per unit distance is derived as ``p_const(v) / v``. A segment's
energy cost ramps between the inherited and the commanded velocity at the
acceleration limit, then cruises, and is normalized by ``p_max`` so costs
are comparable across segments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from pep.core import ValidationError

__all__ = [
    "POWER_SPEEDS",
    "reference_power",
    "PowerSample",
    "EnergyModel",
    "RampTooLongError",
    "generate_reference_power_dataset",
    "fit_energy_model",
    "segment_energy_cost",
    "save_power_dataset_csv",
    "load_power_dataset_csv",
    "save_energy_model",
    "load_energy_model",
]

MODES = ("constant", "accel", "decel")
POWER_SPEEDS = (1.0, 2.0, 4.0, 6.0, 8.0, 10.0)

# Reference constant-velocity power law, watts: U-shaped with the minimum
# near 3.2 m/s and hover-heavy at low speed. Acceleration costs a fixed
# factor more, deceleration a factor less. Versioned generator constants;
# tests use them as oracles.
POWER_LAW_VERSION = 1
_P0, _P1, _P2 = 220.0, -14.0, 2.2
_ACC_FACTOR = 1.25
_DEC_FACTOR = 0.90
_NOISE_STD_W = 5.0

_RAMP_QUAD_STEP = 0.05  # m/s, trapezoid step for the ramp integral


def reference_power(v, mode: str = "constant"):
    """Ground-truth power draw of the synthetic generator, watts."""
    v = np.asarray(v, dtype=float)
    p = _P0 + _P1 * v + _P2 * v**2
    if mode == "constant":
        return p
    if mode == "accel":
        return _ACC_FACTOR * p
    if mode == "decel":
        return _DEC_FACTOR * p
    raise ValidationError(f"unknown power mode {mode!r}")


@dataclass(frozen=True)
class PowerSample:
    """One (speed, flight mode, power) measurement."""

    v: float
    mode: str
    power: float

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.power <= 0:
            raise ValidationError(f"power must be > 0, got {self.power}")


class RampTooLongError(ValueError):
    """The velocity ramp cannot fit inside the segment; reject the candidate."""


@dataclass(frozen=True)
class _PowerCurve:
    """Positive shape-preserving interpolant of per-speed mean power."""

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "knots", np.asarray(self.knots, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "_pchip", PchipInterpolator(self.knots, self.values))

    def __call__(self, v):
        return self._pchip(np.clip(v, self.knots[0], self.knots[-1]))


@dataclass(frozen=True)
class EnergyModel:
    """Per-mode power curves plus the derived energy-per-distance curve."""

    p_const: _PowerCurve
    p_acc: _PowerCurve
    p_dec: _PowerCurve
    train_domain: tuple[float, float]

    def p_const_fn(self, v):
        return self.p_const(v)

    def p_acc_fn(self, v):
        return self.p_acc(v)

    def p_dec_fn(self, v):
        return self.p_dec(v)

    def e_per_dist_fn(self, v):
        """Joules per meter at constant speed ``v``: p_const(v) / v."""
        v = np.asarray(v, dtype=float)
        return self.p_const(v) / np.clip(v, 1e-12, None)


def generate_reference_power_dataset(
    seed: int = 0, n_per_speed: int = 50, speeds=POWER_SPEEDS
) -> list[PowerSample]:
    """Draw noisy power samples around the reference law for every mode.

    Deterministic for a fixed seed; samples are clipped above zero (at
    sigma = 5 W around a >= 180 W law the clip never engages).
    """
    rng = np.random.default_rng(seed)
    out = []
    for mode in MODES:
        for v in speeds:
            p = rng.normal(reference_power(v, mode), _NOISE_STD_W, size=n_per_speed)
            p = np.maximum(p, 1e-3)
            out.extend(PowerSample(v=float(v), mode=mode, power=float(x)) for x in p)
    return out


def fit_energy_model(data: list[PowerSample]) -> EnergyModel:
    """Interpolate per-speed mean power for each mode (no overshoot).

    Requires at least three distinct speeds in every mode.
    """
    curves = {}
    for mode in MODES:
        vs = np.array([s.v for s in data if s.mode == mode], dtype=float)
        ps = np.array([s.power for s in data if s.mode == mode], dtype=float)
        uniq = np.unique(vs)
        if uniq.size < 3:
            raise ValidationError(
                f"mode '{mode}' needs >= 3 distinct speeds, got {uniq.size}"
            )
        means = np.array([ps[vs == u].mean() for u in uniq])
        if np.any(means <= 0):
            raise ValidationError(f"mode '{mode}' mean power must be > 0")
        curves[mode] = _PowerCurve(uniq, means)
    domains = [(c.knots[0], c.knots[-1]) for c in curves.values()]
    lo = max(d[0] for d in domains)
    hi = min(d[1] for d in domains)
    return EnergyModel(
        p_const=curves["constant"],
        p_acc=curves["accel"],
        p_dec=curves["decel"],
        train_domain=(float(lo), float(hi)),
    )


def ramp_distance(v_cur: float, v_tmp: float, a_max: float) -> float:
    """Distance covered while ramping between the two speeds at ``a_max``."""
    return abs(v_tmp**2 - v_cur**2) / (2.0 * a_max)


def ramp_energy(model: EnergyModel, v_cur: float, v_tmp: float, a_max: float) -> float:
    """Joules spent on the constant-acceleration ramp (trapezoid over speed).

    With ``dv/dt = +-a_max``, ``dt = dv / a_max`` turns the time integral of
    power into a speed integral, evaluated on a grid no coarser than 0.05 m/s.
    """
    if v_tmp == v_cur:
        return 0.0
    curve = model.p_acc_fn if v_tmp > v_cur else model.p_dec_fn
    lo, hi = min(v_cur, v_tmp), max(v_cur, v_tmp)
    n = max(2, int(math.ceil((hi - lo) / _RAMP_QUAD_STEP)) + 1)
    vgrid = np.linspace(lo, hi, n)
    return float(np.trapezoid(curve(vgrid), vgrid) / a_max)


def segment_energy_cost(
    model: EnergyModel,
    v_cur: float,
    v_tmp: float,
    d: float,
    a_max: float,
    p_max: float,
) -> tuple[float, float]:
    """Normalized energy cost and duration of a ramp-then-cruise segment.

    ``c_e = (E_ramp + p_const(v_tmp) / v_tmp * d_cruise) / p_max`` where the
    ramp runs at ``a_max`` from ``v_cur`` to ``v_tmp`` and the remaining
    ``d_cruise = d - ramp_distance`` is flown at ``v_tmp``.

    Raises
    ------
    RampTooLongError
        If the ramp needs more distance than the segment provides.
    """
    if d <= 0:
        raise ValidationError(f"segment distance must be > 0, got {d}")
    if v_tmp <= 0 or v_cur < 0:
        raise ValidationError("velocities must be positive")
    d_ramp = ramp_distance(v_cur, v_tmp, a_max)
    if d_ramp > d:
        raise RampTooLongError(
            f"ramp {v_cur}->{v_tmp} m/s needs {d_ramp:.3f} m but segment is {d:.3f} m"
        )
    d_cruise = d - d_ramp
    e = ramp_energy(model, v_cur, v_tmp, a_max) + float(model.p_const_fn(v_tmp)) / v_tmp * d_cruise
    duration = abs(v_tmp - v_cur) / a_max + d_cruise / v_tmp
    return e / p_max, duration


# --------------------------------------------------------------------------
# File formats
# --------------------------------------------------------------------------

def save_power_dataset_csv(path: str | Path, data: list[PowerSample], seed: int | None = None) -> None:
    """Write `v,mode,power_w` rows with a header recording the generator law."""
    lines = [
        f"# reference law v{POWER_LAW_VERSION}: p_const(V) = {_P0} + {_P1}*V + {_P2}*V^2 W, "
        f"p_acc = {_ACC_FACTOR}*p_const, p_dec = {_DEC_FACTOR}*p_const, "
        f"noise sigma = {_NOISE_STD_W} W; seed = {seed}",
        "v,mode,power_w",
    ]
    lines.extend(f"{s.v!r},{s.mode},{s.power!r}" for s in data)
    Path(path).write_text("\n".join(lines) + "\n")


def load_power_dataset_csv(path: str | Path) -> list[PowerSample]:
    out = []
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("v,"):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ValidationError(f"bad power row at line {ln}: {line!r}")
        try:
            out.append(PowerSample(v=float(parts[0]), mode=parts[1], power=float(parts[2])))
        except ValueError as e:
            raise ValidationError(f"bad power row at line {ln}: {e}") from e
    return out


def save_energy_model(path: str | Path, model: EnergyModel) -> None:
    doc = {
        "kind": "energy",
        "train_domain": [model.train_domain[0], model.train_domain[1]],
        "modes": {
            name: {
                "knots": [float(u) for u in curve.knots],
                "values": [float(u) for u in curve.values],
            }
            for name, curve in (
                ("constant", model.p_const),
                ("accel", model.p_acc),
                ("decel", model.p_dec),
            )
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def load_energy_model(path: str | Path) -> EnergyModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("kind") != "energy":
        raise ValidationError(f"not an energy model file: {path}")

    def curve(name: str) -> _PowerCurve:
        m = doc["modes"][name]
        return _PowerCurve(np.array(m["knots"], dtype=float), np.array(m["values"], dtype=float))

    return EnergyModel(
        p_const=curve("constant"),
        p_acc=curve("accel"),
        p_dec=curve("decel"),
        train_domain=(float(doc["train_domain"][0]), float(doc["train_domain"][1])),
    )
