"""Command-line surface: gen / train / sweep / verify.

Configuration is YAML with nested sections mirroring the library types;
every key has a documented default equal to the owning module's constant
and unknown keys are a hard error.  Exit codes: 0 ok, 2 configuration
error, 3 runtime error, 4 verification failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys

import numpy as np
import yaml

from . import cs_svm as svm_mod
from . import diagnostics as diag_mod
from . import experiments as exp_mod
from . import gd_trainer as gd_mod
from . import losses as loss_mod
from . import risk as risk_mod
from .data_gen import dump_dataset, gd_init_from_stream, sample_dataset, spec_hash
from .errors import ConfigError, VerificationFailure, VslabError
from .model_core import ProblemSpec

DEFAULT_SEED = 1
DEFAULT_OUT = "out"
DEFAULT_WORKERS = 1
WORKERS_ENV = "VSLAB_WORKERS"

DEFAULTS = {
    "seed": DEFAULT_SEED,
    "out": DEFAULT_OUT,
    "workers": DEFAULT_WORKERS,
    "problem": {
        # power-law style (used unless explicit mean vectors are given)
        "d": 2000,
        "r_plus": "fig2",          # d**0.6 / 4; or a positive number
        "r_ratio": 0.0,
        "n": 50,
        # mild imbalance keeps the verification instance inside the
        # all-support-vector regime that the oracle-equivalence gate needs
        "tau": 2.0,
        "xi": 0.0,
        # explicit style (all four or none)
        "d_core": None,
        "d_spur": None,
        "mu_core": None,
        "mu_spur": None,
        # explicit group sizes override the (n, tau) rounding rule
        "n_plus": None,
        "n_minus": None,
    },
    "loss": {
        "shape": loss_mod.EXPONENTIAL,
        "tuning": "vs",            # vs | la | ce
        "iota_scale": loss_mod.DEFAULT_IOTA_SCALE,
    },
    "gd": {
        "step_size": gd_mod.AUTO,
        "max_iters": gd_mod.DEFAULT_MAX_ITERS,
        "stop_direction_tol": gd_mod.DEFAULT_STOP_DIRECTION_TOL,
        "telemetry_stride": gd_mod.DEFAULT_TELEMETRY_STRIDE,
        "init_norm": 0.0,          # 0 -> zero init; >0 -> random vector of that norm
    },
    "svm": {
        "tol": svm_mod.DEFAULT_TOL,
        "max_passes": svm_mod.DEFAULT_MAX_PASSES,
    },
    "diagnostics": {
        "c1": diag_mod.DEFAULT_C1,
        "C": diag_mod.DEFAULT_C,
        "delta": diag_mod.DEFAULT_DELTA,
        "kkt_tol": diag_mod.DEFAULT_KKT_TOL,
        "margin_spread_tol": diag_mod.DEFAULT_MARGIN_SPREAD_TOL,
        "ratio_ceiling": diag_mod.DEFAULT_RATIO_CEILING,
    },
    "sweep": {
        "dims": list(exp_mod.FIG2_DIMS),
        "n": exp_mod.FIG2_N,
        "tau": exp_mod.FIG2_TAU,
        "tau_exponent": None,      # set to use tau = d**exponent instead
        "r_plus_exponent": exp_mod.FIG2_RPLUS_EXPONENT,
        "r_plus_scale": exp_mod.FIG2_RPLUS_SCALE,
        "r_ratio": 0.0,
        "losses": ["vs", "la"],
        "seeds": list(exp_mod.FIG2_SEEDS),
        "solver": exp_mod.SOLVER_CS_SVM,
        "mc_samples": exp_mod.DEFAULT_MC_SAMPLES,
        "xi": 0.0,
        "record_timing": False,
    },
}


def _merge(defaults, override, path=""):
    if override is None:
        return copy.deepcopy(defaults)
    if not isinstance(override, dict):
        raise ConfigError(f"section '{path or '<root>'}' must be a mapping")
    merged = copy.deepcopy(defaults)
    for key, value in override.items():
        if key not in defaults:
            raise ConfigError(f"unknown configuration key '{path}{key}'")
        if isinstance(defaults[key], dict):
            merged[key] = _merge(defaults[key], value, path=f"{path}{key}.")
        else:
            merged[key] = value
    return merged


def effective_config(config_path=None) -> dict:
    """Defaults merged with the optional YAML file (unknown keys rejected)."""
    if config_path is None:
        return copy.deepcopy(DEFAULTS)
    if not os.path.exists(config_path):
        raise ConfigError(f"config file not found: {config_path}")
    with open(config_path) as fh:
        try:
            user = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {config_path}: {exc}") from exc
    return _merge(DEFAULTS, user)


def _spec_from_config(problem: dict) -> ProblemSpec:
    explicit = [problem.get(k) is not None for k in ("d_core", "d_spur", "mu_core", "mu_spur")]
    if any(explicit):
        if not all(explicit):
            raise ConfigError(
                "explicit means need all of problem.d_core, d_spur, mu_core, mu_spur"
            )
        d_core, d_spur = int(problem["d_core"]), int(problem["d_spur"])
        mu_core = np.asarray(problem["mu_core"], dtype=np.float64)
        mu_spur = np.asarray(problem["mu_spur"], dtype=np.float64)
    else:
        d = int(problem["d"])
        d_core = (d + 1) // 2
        d_spur = d - d_core
        r_plus = problem["r_plus"]
        if r_plus == "fig2":
            r_plus = exp_mod.PowerLaw().value(d)
        r_plus = float(r_plus)
        if r_plus <= 0:
            raise ConfigError("problem.r_plus must be positive")
        r = float(problem["r_ratio"])
        mu_core = np.zeros(d_core)
        mu_spur = np.zeros(d_spur)
        mu_core[0] = np.sqrt(r_plus * (1.0 + r) / 2.0)
        mu_spur[0] = np.sqrt(r_plus * (1.0 - r) / 2.0)
    if problem["n_plus"] is not None or problem["n_minus"] is not None:
        if problem["n_plus"] is None or problem["n_minus"] is None:
            raise ConfigError("set both problem.n_plus and problem.n_minus or neither")
        n_plus, n_minus = int(problem["n_plus"]), int(problem["n_minus"])
    else:
        from .data_gen import split_counts

        n_plus, n_minus = split_counts(int(problem["n"]), float(problem["tau"]))
    try:
        return ProblemSpec(
            d_core=d_core, d_spur=d_spur, mu_core=mu_core, mu_spur=mu_spur,
            n_plus=n_plus, n_minus=n_minus,
            label_flip_rate=float(problem["xi"]),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid problem section: {exc}") from exc


def _loss_params(loss_cfg: dict, n_plus: int, n_minus: int):
    tuning = loss_cfg["tuning"]
    shape = loss_cfg["shape"]
    if tuning == "vs":
        return loss_mod.tune_vs_defaults(n_plus, n_minus, shape=shape)
    if tuning == "la":
        return loss_mod.tune_la(n_plus, n_minus, float(loss_cfg["iota_scale"]), shape=shape)
    if tuning == "ce":
        return loss_mod.neutral(shape)
    raise ConfigError(f"unknown loss.tuning {tuning!r} (expected vs, la, or ce)")


def cmd_gen(args) -> int:
    cfg = effective_config(args.config)
    seed = args.seed if args.seed is not None else cfg["seed"]
    out_dir = args.out or cfg["out"]
    spec = _spec_from_config(cfg["problem"])
    ds = sample_dataset(spec, seed)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "dataset.txt")
    dump_dataset(ds, path)
    print(f"wrote {path} (n={ds.n}, d={ds.d}, seed={seed}, spec_hash={spec_hash(spec)})")
    return 0


def cmd_train(args) -> int:
    cfg = effective_config(args.config)
    seed = args.seed if args.seed is not None else cfg["seed"]
    out_dir = args.out or cfg["out"]
    if args.loss:
        cfg["loss"]["tuning"] = args.loss
    spec = _spec_from_config(cfg["problem"])
    ds = sample_dataset(spec, seed)
    params = _loss_params(cfg["loss"], spec.n_plus, spec.n_minus)
    gd_cfg_raw = cfg["gd"]
    init = "zero"
    if float(gd_cfg_raw["init_norm"]) > 0.0:
        init = gd_init_from_stream(spec, seed, float(gd_cfg_raw["init_norm"])).w
    step = gd_cfg_raw["step_size"]
    gd_config = gd_mod.GdConfig(
        step_size=step if step == gd_mod.AUTO else float(step),
        max_iters=int(gd_cfg_raw["max_iters"]),
        stop_direction_tol=float(gd_cfg_raw["stop_direction_tol"]),
        telemetry_stride=int(gd_cfg_raw["telemetry_stride"]),
        init=init,
    )
    traj = gd_mod.run_gd(params, ds, gd_config)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "trajectory.csv")
    traj.to_csv(csv_path)
    report = risk_mod.worst_group_error(traj.final_w, ds.nu_plus, ds.nu_minus)
    print(f"trajectory: {csv_path}")
    print(f"{'iterations':>18}: {traj.iters_run} (converged={traj.converged})")
    for name, value in (
        ("corr_plus", report.corr_plus),
        ("corr_minus", report.corr_minus),
        ("err_plus", report.err_plus),
        ("err_minus", report.err_minus),
        ("wst_error", report.wst_error),
    ):
        print(f"{name:>18}: {value:.6g}")
    return 0


def _grid_from_config(sweep: dict) -> exp_mod.SweepGrid:
    if sweep["tau_exponent"] is not None:
        rule = exp_mod.TauRule("power", float(sweep["tau_exponent"]))
    else:
        rule = exp_mod.TauRule("fixed", float(sweep["tau"]))
    try:
        losses = tuple(exp_mod.LossConfig(name) for name in sweep["losses"])
        return exp_mod.SweepGrid(
            dims=tuple(int(d) for d in sweep["dims"]),
            n=int(sweep["n"]),
            tau_rule=rule,
            r_plus_rule=exp_mod.PowerLaw(
                float(sweep["r_plus_exponent"]), float(sweep["r_plus_scale"])
            ),
            r_ratio=float(sweep["r_ratio"]),
            losses=losses,
            seeds=tuple(int(s) for s in sweep["seeds"]),
            solver=sweep["solver"],
            mc_samples=int(sweep["mc_samples"]),
            xi=float(sweep["xi"]),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid sweep section: {exc}") from exc


def cmd_sweep(args) -> int:
    cfg = effective_config(args.config)
    out_dir = args.out or cfg["out"]
    workers = _resolve_workers(args)
    if args.preset:
        if args.preset != "fig2":
            raise ConfigError(f"unknown preset {args.preset!r}")
        variant = args.variant or "fixed"
        variant_map = {"fixed": ["fixed_tau"], "growing": ["growing_tau"],
                       "both": ["fixed_tau", "growing_tau"]}
        if variant not in variant_map:
            raise ConfigError(f"unknown variant {variant!r} (fixed, growing, both)")
        grids = [exp_mod.fig2_preset(v) for v in variant_map[variant]]
    else:
        grids = [_grid_from_config(cfg["sweep"])]
    if args.dry_run:
        for grid in grids:
            for d in sorted(grid.dims):
                spec = exp_mod.build_spec(grid, d)
                for loss in grid.losses:
                    print(
                        f"{grid.tau_rule.label} d={d} n={grid.n} "
                        f"n_plus={spec.n_plus} n_minus={spec.n_minus} "
                        f"loss={loss.name} seeds={list(grid.seeds)} "
                        f"solver={grid.solver} mc={grid.mc_samples} xi={grid.xi}"
                    )
        return 0
    os.makedirs(out_dir, exist_ok=True)
    all_rows = []
    for grid in grids:
        all_rows.extend(
            exp_mod.run_sweep(
                grid,
                out_path=None,
                workers=workers,
                record_timing=bool(cfg["sweep"]["record_timing"]),
            )
        )
    csv_path = os.path.join(out_dir, "sweep.csv")
    exp_mod.write_csv(all_rows, csv_path)
    data_path, script_path = exp_mod.emit_plot_script(all_rows, out_dir)
    print(f"wrote {csv_path}")
    print(f"wrote {data_path}")
    print(f"wrote {script_path}")
    return 0


def _resolve_workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from exc
    return DEFAULT_WORKERS


def _load_q_reference() -> tuple[np.ndarray, np.ndarray]:
    from importlib import resources

    with resources.files("vslab").joinpath("data/q_reference.json").open() as fh:
        table = json.load(fh)
    xs = np.array([float(v) for v in table["x"]])
    qs = np.array([float(v) for v in table["q"]])
    return xs, qs


def cmd_verify(args) -> int:
    cfg = effective_config(args.config)
    seed = args.seed if args.seed is not None else cfg["seed"]
    diag_cfg = diag_mod.DiagnosticsConfig(
        c1=float(cfg["diagnostics"]["c1"]),
        C=float(cfg["diagnostics"]["C"]),
        delta=float(cfg["diagnostics"]["delta"]),
        kkt_tol=float(cfg["diagnostics"]["kkt_tol"]),
        margin_spread_tol=float(cfg["diagnostics"]["margin_spread_tol"]),
        ratio_ceiling=float(cfg["diagnostics"]["ratio_ceiling"]),
    )
    report: dict = {"checks": {}, "diagnostics": {}}
    failures = []

    xs, qs = _load_q_reference()
    q_err = float(np.abs(risk_mod.q_function(xs) - qs).max())
    ok = q_err <= 1e-10
    report["checks"]["q_reference_grid"] = {"max_abs_error": q_err, "passed": ok}
    if not ok:
        failures.append("q_reference_grid")

    spec = _spec_from_config(cfg["problem"])
    ds = sample_dataset(spec, seed)
    params = _loss_params(cfg["loss"], spec.n_plus, spec.n_minus)

    witness = diag_mod.separability_witness(ds)
    report["checks"]["separability"] = {
        "min_margin": witness.min_margin,
        "lemma_scale": witness.lemma_scale,
        "passed": witness.separable,
    }
    if not witness.separable:
        failures.append("separability")

    sol = svm_mod.solve_cs_svm(
        ds, params.deltas,
        tol=float(cfg["svm"]["tol"]), max_passes=int(cfg["svm"]["max_passes"]),
    )
    kkt = svm_mod.kkt_report(ds, params.deltas, sol)
    kkt_ok = sol.kkt_max_violation <= diag_cfg.kkt_tol and all(
        v <= 1e-6 for v in kkt.values()
    )
    report["checks"]["svm_kkt"] = {
        "kkt_max_violation": sol.kkt_max_violation, **kkt, "passed": kkt_ok,
    }
    if not kkt_ok:
        failures.append("svm_kkt")

    interp = svm_mod.min_norm_interpolator(ds, params.deltas)
    rel = float(
        np.linalg.norm(interp.w - sol.w.w) / np.linalg.norm(sol.w.w)
    )
    oracle_ok = rel <= 1e-6
    report["checks"]["oracle_equivalence"] = {"relative_l2": rel, "passed": oracle_ok}
    if not oracle_ok:
        failures.append("oracle_equivalence")

    margin = diag_mod.margin_equality_check(
        ds, params.deltas, sol.w, diag_cfg.margin_spread_tol
    )
    report["checks"]["margin_equality"] = {
        "spread": margin.spread, "passed": margin.passed,
    }
    if not margin.passed:
        failures.append("margin_equality")

    good = diag_mod.good_event_check(ds, diag_cfg)
    report["diagnostics"]["good_event"] = {
        "overall": good.overall,
        "smallest_c1": good.smallest_c1,
        "per_inequality": {
            r.name: {"passed": r.passed, "worst_slack": r.worst_slack,
                     "required_c1": r.required_c1}
            for r in (good.norm_upper, good.norm_lower, good.same_group_mean,
                      good.cross_group_mean, good.pairwise)
        },
    }
    assumption = diag_mod.assumption_check(spec, cfg=diag_cfg)
    report["diagnostics"]["assumption_regime"] = {
        "a_sample_size": assumption.a_sample_size,
        "b_core_snr": assumption.b_core_snr,
        "c_linear_overparam": assumption.c_linear_overparam,
        "d_quadratic_overparam": assumption.d_quadratic_overparam,
        "largest_C": assumption.largest_C,
    }

    report["passed"] = not failures
    if args.json:
        print(json.dumps(report, indent=1, default=str))
    else:
        for name, check in report["checks"].items():
            state = "PASS" if check["passed"] else "FAIL"
            detail = ", ".join(
                f"{k}={v:.3e}" if isinstance(v, float) else f"{k}={v}"
                for k, v in check.items() if k != "passed"
            )
            print(f"[{state}] {name}: {detail}")
        ge = report["diagnostics"]["good_event"]
        print(
            f"[info] good_event: overall={ge['overall']} "
            f"smallest_c1={ge['smallest_c1']:.3g}"
        )
        ar = report["diagnostics"]["assumption_regime"]
        print(
            "[info] assumption_regime: "
            + " ".join(f"{k}={v}" for k, v in ar.items() if k != "largest_C")
            + f" largest_C={ar['largest_C']:.3g}"
        )
    if failures:
        raise VerificationFailure("failed checks: " + ", ".join(failures))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vslab",
        description="Worst-group error laboratory for group-adjusted losses "
        "on Gaussian mixtures with spurious features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("gen", cmd_gen), ("train", cmd_train), ("sweep", cmd_sweep),
        ("verify", cmd_verify),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="YAML configuration file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker processes (fallback: ${WORKERS_ENV})")
        p.add_argument("--json", action="store_true")
        p.add_argument("--dry-run", action="store_true")
        p.add_argument("--loss", choices=["vs", "la", "ce"], default=None)
        p.add_argument("--preset", default=None)
        p.add_argument("--variant", default=None,
                       choices=["fixed", "growing", "both"])
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except VerificationFailure as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return 4
    except VslabError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
