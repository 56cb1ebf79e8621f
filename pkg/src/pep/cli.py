"""Command-line front end.

Subcommands: ``gen-data`` (synthetic datasets), ``fit`` (model files),
``plan`` (one planning run), ``compare`` (alpha sweep report), ``replan``
(receding-horizon sweep). Outputs are CSV/JSON files plus PNG figures
rendered alongside them (suppress with ``--no-figures``).

Exit codes: 0 success, 1 validation error, 2 planning failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from pep import energy as en
from pep import uncertainty as unc
from pep.core import (
    ScenarioParseError,
    ValidationError,
    load_scenario,
)
from pep.planner import (
    DriftModel,
    GoalUnreachableError,
    PlannerModels,
    default_models,
    plan,
)
from pep.report import (
    run_replan_sweep,
    run_sweep,
    write_replan_report,
    write_run_report,
    write_trajectory,
)
from pep.scenarios import ALPHA_PRESETS, SCENARIO_NAMES, build_scenario, is_bundled

UNCERTAINTY_MODEL_FILE = "uncertainty_model.json"
ENERGY_MODEL_FILE = "energy_model.json"


def _resolve_scenario(spec: str):
    """A bundled scenario name or a path to a scenario JSON file."""
    if is_bundled(spec):
        return spec, build_scenario(spec)
    return Path(spec).stem, load_scenario(spec)


def _resolve_alpha(text: str) -> float:
    if text in ALPHA_PRESETS:
        return ALPHA_PRESETS[text]
    return float(text)


def _load_models(models_dir: str | None, seed: int) -> PlannerModels:
    """Model files from a directory, or reference fits when none is given."""
    if models_dir is None:
        return default_models(seed=0)
    d = Path(models_dir)
    motion = unc.load_motion_model(d / UNCERTAINTY_MODEL_FILE)
    emodel = en.load_energy_model(d / ENERGY_MODEL_FILE)
    return PlannerModels(motion=motion, distance=unc.DistanceUncertaintyModel(), energy=emodel)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.kind == "uncertainty":
        data = unc.generate_reference_dataset(args.n_per_speed, seed=args.seed)
        unc.save_dataset_csv(out, data, seed=args.seed)
    else:
        data = en.generate_reference_power_dataset(seed=args.seed, n_per_speed=args.n_per_speed)
        en.save_power_dataset_csv(out, data, seed=args.seed)
    print(f"wrote {len(data)} samples to {out}")
    return 0


def cmd_fit(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.kind == "uncertainty":
        data = unc.load_dataset_csv(args.data)
        model = unc.fit_motion_model(data)
        unc.save_motion_model(out, model)
        cov = model.fit_report.get("coverage_1sigma")
        print(f"fitted motion model on {len(data)} samples; held-out 1-sigma coverage {cov:.3f}")
        if not args.no_figures:
            from pep.figures import fig_uncertainty_fit

            fig_uncertainty_fit(out.with_suffix(".png"), data, model)
    else:
        data = en.load_power_dataset_csv(args.data)
        model = en.fit_energy_model(data)
        en.save_energy_model(out, model)
        print(f"fitted energy model on {len(data)} samples")
        if not args.no_figures:
            from pep.figures import fig_power_fit

            fig_power_fit(out.with_suffix(".png"), data, model)
    return 0


def cmd_plan(args) -> int:
    scenario_id, (fmap, start, goal, params) = _resolve_scenario(args.scenario)
    models = _load_models(args.models, args.seed)
    if args.alpha_p is not None:
        params = replace(params, alpha_p=_resolve_alpha(args.alpha_p))
    params = replace(params, rng_seed=args.seed)

    traj = plan(fmap, start, goal, params, models)
    summary = write_trajectory(args.out, traj, fmap, models, params)
    print(
        f"{scenario_id}: energy {summary['total_energy_J'] / 1e3:.2f} kJ, "
        f"quality {summary['total_perception']:.3g}, "
        f"duration {summary['duration_s']:.1f} s, "
        f"samples {summary['n_samples_used']}"
    )
    if not args.no_figures:
        from pep.figures import fig_trajectory

        label = f"alpha_p={params.alpha_p:g}"
        fig_trajectory(Path(args.out) / "trajectory.png", fmap, start, goal,
                       {label: traj}, models, params)
    return 0


def cmd_compare(args) -> int:
    scenario_id, (fmap, start, goal, params) = _resolve_scenario(args.scenario)
    models = _load_models(args.models, 0)
    alphas = [_resolve_alpha(a) for a in args.alphas.split(",")]
    params = replace(params, rng_seed=0)
    reports = run_sweep(
        scenario_id, fmap, start, goal, params, models, alphas, args.n_seeds,
        max_workers=args.workers,
    )
    write_run_report(args.out, reports)
    for rep in reports:
        agg = rep.aggregate()
        print(
            f"{rep.scenario_id} alpha_p={rep.alpha_p:g}: "
            f"energy {agg['energy_J_mean'] / 1e3:.2f} +- {agg['energy_J_std'] / 1e3:.2f} kJ, "
            f"quality {agg['quality_mean']:.3g} +- {agg['quality_std']:.3g}, "
            f"failed {agg['n_failed']}/{agg['n_seeds']}"
        )
    if not args.no_figures:
        from pep.figures import fig_compare

        fig_compare(Path(args.out) / "report.png", reports)
    return 0


def cmd_replan(args) -> int:
    scenario_id, (fmap, start, goal, params) = _resolve_scenario(args.scenario)
    models = _load_models(args.models, 0)
    alpha = _resolve_alpha(args.alpha_p) if args.alpha_p is not None else params.alpha_p
    drift = DriftModel(drift_limit=args.drift_limit)
    outcomes = run_replan_sweep(
        fmap, start, goal, params, models, alpha, args.n_seeds,
        horizon=args.horizon, drift_model=drift, max_workers=args.workers,
    )
    write_replan_report(args.out, scenario_id, alpha, outcomes, drift)
    n_ok = sum(1 for _, oc in outcomes if oc.success)
    for seed, oc in outcomes:
        print(f"seed {seed}: {'success' if oc.success else 'FAIL'} ({oc.reason}), "
              f"drift {oc.drift:.3g} m over {oc.distance:.1f} m")
    print(f"success rate {n_ok}/{len(outcomes)}")
    if not args.no_figures:
        from pep.figures import fig_replan
        from pep.report import alpha_label

        fig_replan(Path(args.out) / f"replan_{alpha_label(alpha)}.png",
                   {alpha_label(alpha): outcomes}, drift.drift_limit)
    return 0


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pep",
        description="Perception-and-energy-aware UAV trajectory planning.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    p.add_argument("kind", choices=["uncertainty", "power"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-per-speed", type=int, default=200)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("fit", help="fit a model from a dataset CSV")
    p.add_argument("kind", choices=["uncertainty", "power"])
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("plan", help="run the planner once")
    p.add_argument("--scenario", required=True,
                   help=f"bundled name {SCENARIO_NAMES} or scenario JSON path")
    p.add_argument("--models", help="directory with fitted model JSON files")
    p.add_argument("--alpha-p", help="number or preset (direct/proposed/hpq)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("compare", help="alpha sweep with a Table-style report")
    p.add_argument("--scenario", required=True)
    p.add_argument("--models")
    p.add_argument("--alphas", default="direct,proposed,hpq",
                   help="comma list of numbers or presets")
    p.add_argument("--n-seeds", type=int, default=20)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("replan", help="receding-horizon replanning sweep")
    p.add_argument("--scenario", required=True)
    p.add_argument("--models")
    p.add_argument("--alpha-p", help="number or preset (direct/proposed/hpq)")
    p.add_argument("--n-seeds", type=int, default=3)
    p.add_argument("--horizon", type=float, default=30.0)
    p.add_argument("--drift-limit", type=float, default=30.0)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_replan)
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValidationError, ScenarioParseError, KeyError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except GoalUnreachableError as e:
        print(f"planning failed: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
