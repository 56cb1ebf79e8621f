"""Result files: trajectory CSV/JSON, sweep reports, and replan traces.

All delimited outputs are deterministic for a given scenario and seed; JSON
summaries additionally carry a ``generated_at`` ISO-8601 timestamp, the one
field allowed to differ between identical runs.
"""

from __future__ import annotations

import datetime
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from pep.core import FeatureMap, GoalRegion, PlannerParams, Trajectory, UavState
from pep.perception import perception_cost_arrays
from pep.planner import (
    DriftModel,
    GoalUnreachableError,
    PlannerModels,
    ReplanOutcome,
    plan,
    replan_loop,
)
from pep.scenarios import ALPHA_PRESETS

__all__ = [
    "RunReport",
    "trajectory_tables",
    "write_trajectory",
    "run_sweep",
    "write_run_report",
    "run_replan_sweep",
    "write_replan_report",
    "alpha_label",
]


def _timestamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def alpha_label(alpha_p: float) -> str:
    for name, val in ALPHA_PRESETS.items():
        if alpha_p == val:
            return name
    return f"alpha_p={alpha_p:g}"


# --------------------------------------------------------------------------
# Trajectory output
# --------------------------------------------------------------------------

def trajectory_tables(
    traj: Trajectory, fmap: FeatureMap, models: PlannerModels, params: PlannerParams
) -> tuple[np.ndarray, np.ndarray]:
    """Per-state table (t, x, y, v, c_p_cum, c_e_cum) and (t, x, y, v, s_of_I).

    Cumulative perception cost uses the same per-state quadrature as the
    planner; cumulative energy integrates the mode power curve over time.
    """
    t, x, y, v = traj.state_arrays()
    _, _, metrics = perception_cost_arrays(
        x, y, v, params.dt, fmap, models.motion, models.distance, params, return_metrics=True
    )
    dts = np.diff(t, prepend=t[0])
    cp_cum = np.cumsum(dts / np.maximum(metrics, params.epsilon_fim))

    accel = np.gradient(v, t) if len(t) > 2 else np.zeros_like(v)
    p_inst = np.where(
        accel > 1e-9,
        models.energy.p_acc_fn(v),
        np.where(accel < -1e-9, models.energy.p_dec_fn(v), models.energy.p_const_fn(v)),
    )
    ce_steps = np.diff(t) * 0.5 * (p_inst[1:] + p_inst[:-1]) / params.p_max
    ce_cum = np.concatenate([[0.0], np.cumsum(ce_steps)])

    main = np.column_stack([t, x, y, v, cp_cum, ce_cum])
    fim_trace = np.column_stack([t, x, y, v, metrics])
    return main, fim_trace


def write_trajectory(
    out_dir: str | Path,
    traj: Trajectory,
    fmap: FeatureMap,
    models: PlannerModels,
    params: PlannerParams,
    stem: str = "trajectory",
) -> dict:
    """Write <stem>.csv, <stem>_fim.csv and <stem>_summary.json; returns the summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    main, fim_trace = trajectory_tables(traj, fmap, models, params)

    _write_csv(out_dir / f"{stem}.csv", "t,x,y,v,c_p_cum,c_e_cum", main)
    _write_csv(out_dir / f"{stem}_fim.csv", "t,x,y,v,s_of_I", fim_trace)

    summary = {
        "total_energy_J": traj.total_energy,
        "total_perception": traj.total_perception,
        "duration_s": traj.duration,
        "n_samples_used": traj.n_samples_used,
        "path_length_m": traj.length,
        "generated_at": _timestamp(),
    }
    (out_dir / f"{stem}_summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def _write_csv(path: Path, header: str, rows: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(float(u)) for u in row) + "\n")


# --------------------------------------------------------------------------
# Alpha sweeps (Table-style comparison)
# --------------------------------------------------------------------------

@dataclass
class RunReport:
    """Per-seed planning results for one (scenario, alpha) cell."""

    scenario_id: str
    alpha_p: float
    seeds: list[int]
    energy_J: list[float]
    quality: list[float]
    duration_s: list[float]
    success: list[bool]

    def aggregate(self) -> dict:
        """Mean and sample std over successful seeds; failures counted."""
        ok = np.array(self.success, dtype=bool)
        out = {"n_seeds": len(self.seeds), "n_failed": int(np.sum(~ok))}
        for name, vals in (("energy_J", self.energy_J), ("quality", self.quality),
                           ("duration_s", self.duration_s)):
            arr = np.array(vals, dtype=float)[ok]
            out[f"{name}_mean"] = float(np.mean(arr)) if arr.size else float("nan")
            out[f"{name}_std"] = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
        return out


def _plan_job(args) -> dict:
    """One (alpha, seed) planning run; top-level so it pickles."""
    fmap, start, goal, params, models, alpha, seed = args
    p = replace(params, alpha_p=alpha, rng_seed=seed)
    try:
        traj = plan(fmap, start, goal, p, models)
        return {
            "alpha_p": alpha, "seed": seed, "success": True,
            "energy_J": traj.total_energy, "quality": traj.total_perception,
            "duration_s": traj.duration,
        }
    except GoalUnreachableError:
        return {
            "alpha_p": alpha, "seed": seed, "success": False,
            "energy_J": float("nan"), "quality": float("nan"), "duration_s": float("nan"),
        }


def run_sweep(
    scenario_id: str,
    fmap: FeatureMap,
    start: UavState,
    goal: GoalRegion,
    params: PlannerParams,
    models: PlannerModels,
    alphas: list[float],
    n_seeds: int,
    max_workers: int | None = None,
) -> list[RunReport]:
    """Plan every (alpha, seed) pair, seeds in parallel across processes."""
    jobs = [
        (fmap, start, goal, params, models, alpha, seed)
        for alpha in alphas
        for seed in range(n_seeds)
    ]
    workers = max_workers or os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_plan_job, jobs, chunksize=1))
    else:
        rows = [_plan_job(j) for j in jobs]

    reports = []
    for alpha in alphas:
        sub = [r for r in rows if r["alpha_p"] == alpha]
        sub.sort(key=lambda r: r["seed"])
        reports.append(RunReport(
            scenario_id=scenario_id,
            alpha_p=alpha,
            seeds=[r["seed"] for r in sub],
            energy_J=[r["energy_J"] for r in sub],
            quality=[r["quality"] for r in sub],
            duration_s=[r["duration_s"] for r in sub],
            success=[r["success"] for r in sub],
        ))
    return reports


def write_run_report(out_dir: str | Path, reports: list[RunReport]) -> None:
    """Emit report.csv (per-seed), report.md (table shape) and report.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    lines = ["scenario,alpha_p,seed,success,energy_J,quality,duration_s"]
    for rep in reports:
        for i, seed in enumerate(rep.seeds):
            lines.append(
                f"{rep.scenario_id},{rep.alpha_p:g},{seed},{int(rep.success[i])},"
                f"{rep.energy_J[i]!r},{rep.quality[i]!r},{rep.duration_s[i]!r}"
            )
    (out_dir / "report.csv").write_text("\n".join(lines) + "\n")

    md = [
        f"# Planning comparison: {reports[0].scenario_id}",
        "",
        "| trajectory | energy [kJ] | perception quality [-] | failed seeds |",
        "|---|---|---|---|",
    ]
    for rep in reports:
        agg = rep.aggregate()
        md.append(
            f"| {alpha_label(rep.alpha_p)} "
            f"| {agg['energy_J_mean'] / 1e3:.2f} +- {agg['energy_J_std'] / 1e3:.2f} "
            f"| {agg['quality_mean']:.3g} +- {agg['quality_std']:.3g} "
            f"| {agg['n_failed']}/{agg['n_seeds']} |"
        )
    (out_dir / "report.md").write_text("\n".join(md) + "\n")

    doc = {
        "scenario": reports[0].scenario_id,
        "rows": [
            {"alpha_p": rep.alpha_p, "label": alpha_label(rep.alpha_p), **rep.aggregate()}
            for rep in reports
        ],
        "generated_at": _timestamp(),
    }
    (out_dir / "report.json").write_text(json.dumps(doc, indent=2))


# --------------------------------------------------------------------------
# Receding-horizon sweeps
# --------------------------------------------------------------------------

def _replan_job(args) -> tuple[int, ReplanOutcome]:
    fmap, start, goal, params, models, alpha, seed, horizon, drift = args
    p = replace(params, alpha_p=alpha, rng_seed=seed)
    return seed, replan_loop(fmap, start, goal, p, models, horizon=horizon, drift_model=drift)


def run_replan_sweep(
    fmap: FeatureMap,
    start: UavState,
    goal: GoalRegion,
    params: PlannerParams,
    models: PlannerModels,
    alpha_p: float,
    n_seeds: int,
    horizon: float = 30.0,
    drift_model: DriftModel = DriftModel(),
    max_workers: int | None = None,
) -> list[tuple[int, ReplanOutcome]]:
    jobs = [
        (fmap, start, goal, params, models, alpha_p, seed, horizon, drift_model)
        for seed in range(n_seeds)
    ]
    workers = max_workers or os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_replan_job, jobs, chunksize=1))
    else:
        out = [_replan_job(j) for j in jobs]
    out.sort(key=lambda kv: kv[0])
    return out


def write_replan_report(
    out_dir: str | Path,
    scenario_id: str,
    alpha_p: float,
    outcomes: list[tuple[int, ReplanOutcome]],
    drift_model: DriftModel,
) -> None:
    """Per-seed outcome CSV plus one drift-trace CSV per seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tag = alpha_label(alpha_p)

    lines = ["scenario,alpha_p,seed,success,reason,final_drift_m,distance_m"]
    for seed, oc in outcomes:
        lines.append(
            f"{scenario_id},{alpha_p:g},{seed},{int(oc.success)},{oc.reason},"
            f"{oc.drift!r},{oc.distance!r}"
        )
        _write_csv(
            out_dir / f"drift_{tag}_seed{seed}.csv",
            "dist,x,y,v,s_of_I,drift",
            oc.trace,
        )
    (out_dir / f"replan_{tag}.csv").write_text("\n".join(lines) + "\n")

    doc = {
        "scenario": scenario_id,
        "alpha_p": alpha_p,
        "drift_limit_m": drift_model.drift_limit,
        "k_drift": drift_model.k_drift,
        "n_success": sum(1 for _, oc in outcomes if oc.success),
        "n_seeds": len(outcomes),
        "generated_at": _timestamp(),
    }
    (out_dir / f"replan_{tag}.json").write_text(json.dumps(doc, indent=2))
