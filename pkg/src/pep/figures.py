"""Matplotlib renderings written next to the delimited outputs.

Every report path can emit a PNG alongside its CSV: fitted model curves over
their datasets, trajectories over the localizability field, sweep bars, and
drift traces. Rendering is headless (Agg) and file-only.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from pep.core import FeatureMap, GoalRegion, PlannerParams, Trajectory, UavState
from pep.energy import EnergyModel, PowerSample, reference_power
from pep.perception import fim_metric_at
from pep.planner import PlannerModels, ReplanOutcome
from pep.report import RunReport, alpha_label
from pep.uncertainty import MotionUncertaintyModel, UncertaintySample

__all__ = [
    "fig_uncertainty_fit",
    "fig_power_fit",
    "fig_trajectory",
    "fig_compare",
    "fig_replan",
]

FIELD_PROBE_SPEED = 5.0  # m/s used when painting the localizability field


def _save(fig, out: str | Path) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return out


def fig_uncertainty_fit(out: str | Path, data: list[UncertaintySample], model: MotionUncertaintyModel) -> Path:
    vs = np.array([s.v for s in data])
    rs = np.array([s.residual for s in data])
    grid = np.linspace(model.train_domain[0], model.train_domain[1], 300)
    mu = model.mean_fn(grid)
    sd = model.std_fn(grid)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(vs, rs, ".", ms=2, alpha=0.25, color="gray", label="residual samples")
    ax.plot(grid, mu, "-", color="tab:blue", label="fitted mean")
    ax.fill_between(grid, mu - sd, mu + sd, color="tab:blue", alpha=0.25, label="+-1 sigma")
    ax.set_xlabel("speed [m/s]")
    ax.set_ylabel("range residual [m]")
    cov = model.fit_report.get("coverage_1sigma")
    ax.set_title(f"motion uncertainty fit (held-out 1-sigma coverage {cov:.2f})" if cov == cov else "motion uncertainty fit")
    ax.legend(loc="upper left", fontsize=8)
    return _save(fig, out)


def fig_power_fit(out: str | Path, data: list[PowerSample], model: EnergyModel) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    colors = {"constant": "tab:blue", "accel": "tab:red", "decel": "tab:green"}
    grid = np.linspace(model.train_domain[0], model.train_domain[1], 200)
    for mode, color in colors.items():
        vs = np.array([s.v for s in data if s.mode == mode])
        ps = np.array([s.power for s in data if s.mode == mode])
        axes[0].plot(vs, ps, ".", ms=2, alpha=0.3, color=color)
        fn = {"constant": model.p_const_fn, "accel": model.p_acc_fn, "decel": model.p_dec_fn}[mode]
        axes[0].plot(grid, fn(grid), "-", color=color, label=mode)
    axes[0].set_xlabel("speed [m/s]")
    axes[0].set_ylabel("power [W]")
    axes[0].legend(fontsize=8)
    axes[1].plot(grid, model.e_per_dist_fn(grid), "-", color="tab:blue")
    axes[1].set_xlabel("speed [m/s]")
    axes[1].set_ylabel("energy per distance [J/m]")
    fig.suptitle("power model fit")
    return _save(fig, out)


def _field_grid(fmap: FeatureMap, models: PlannerModels, params: PlannerParams, n: int = 90):
    b = fmap.bounds
    xs = np.linspace(b.xmin, b.xmax, n)
    ys = np.linspace(b.ymin, b.ymax, max(2, int(n * (b.ymax - b.ymin) / (b.xmax - b.xmin))))
    field = np.empty((len(ys), len(xs)))
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            field[i, j] = fim_metric_at(
                float(x), float(y), FIELD_PROBE_SPEED, fmap,
                models.motion, models.distance, params,
            )
    return xs, ys, field


def fig_trajectory(
    out: str | Path,
    fmap: FeatureMap,
    start: UavState,
    goal: GoalRegion,
    trajectories: dict[str, Trajectory],
    models: PlannerModels,
    params: PlannerParams,
) -> Path:
    """Trajectories over the localizability field (probed at 5 m/s)."""
    xs, ys, field = _field_grid(fmap, models, params)
    fig, ax = plt.subplots(figsize=(8, 5.5))
    im = ax.pcolormesh(
        xs, ys, np.log10(np.maximum(field, 1e-4)),
        cmap="cool", shading="auto", alpha=0.8,
    )
    fig.colorbar(im, ax=ax, label="log10 s(I) at 5 m/s")
    if fmap.n_features:
        ax.plot(fmap.features[:, 0], fmap.features[:, 1], "k.", ms=3, label="features")
    for (cx, cy, r) in fmap.obstacles:
        ax.add_patch(plt.Circle((cx, cy), r, color="k", alpha=0.4))
    styles = ["-", "--", "-."]
    for k, (label, traj) in enumerate(trajectories.items()):
        _, x, y, v = traj.state_arrays()
        ax.plot(x, y, styles[k % 3], lw=1.8, label=label)
    ax.add_patch(plt.Circle((start.x, start.y), 2.0, color="white", ec="k", zorder=5))
    ax.add_patch(plt.Circle((goal.cx, goal.cy), goal.radius, color="black", alpha=0.6, zorder=5))
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    return _save(fig, out)


def fig_compare(out: str | Path, reports: list[RunReport]) -> Path:
    labels = [alpha_label(r.alpha_p) for r in reports]
    aggs = [r.aggregate() for r in reports]
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    xpos = np.arange(len(labels))
    for ax, key, title in (
        (axes[0], "energy_J", "energy [kJ]"),
        (axes[1], "quality", "perception quality [-]"),
    ):
        vals = np.array([a[f"{key}_mean"] for a in aggs])
        errs = np.array([a[f"{key}_std"] for a in aggs])
        scale = 1e3 if key == "energy_J" else 1.0
        ax.bar(xpos, vals / scale, yerr=errs / scale, capsize=4, color="tab:blue", alpha=0.8)
        ax.set_xticks(xpos, labels)
        ax.set_title(title)
    fig.suptitle(f"sweep on {reports[0].scenario_id}")
    return _save(fig, out)


def fig_replan(out: str | Path, outcomes: dict[str, list[tuple[int, ReplanOutcome]]], drift_limit: float) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    colors = {"direct": "tab:red", "proposed": "tab:blue", "hpq": "tab:green"}
    for label, runs in outcomes.items():
        color = colors.get(label, None)
        for seed, oc in runs:
            ax.plot(oc.trace[:, 0], oc.trace[:, 5], "-", color=color, alpha=0.7,
                    label=label if seed == runs[0][0] else None)
    ax.axhline(drift_limit, color="k", ls=":", label="drift limit")
    ax.set_xlabel("distance flown [m]")
    ax.set_ylabel("accumulated drift [m]")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    return _save(fig, out)
