"""Parameter sweeps, the reproduction preset, seed averaging, plot output.

A sweep grid is expanded into (dimension, seed) points; each point draws
one dataset per seed, solves it once per loss configuration, and emits
rows with analytic (and optionally Monte Carlo) group errors plus solver
diagnostics.  Rows are written in a fixed order (d ascending, loss name,
seed ascending) regardless of the worker count, with seed-aggregated
mean/stderr rows after each block, so the CSV is byte-identical for any
degree of parallelism.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import cs_svm as svm_mod
from .data_gen import sample_dataset, split_counts
from .diagnostics import margin_equality_check
from .errors import NonSeparableError, SolverTimeoutError, VslabError
from .gd_trainer import GdConfig, run_gd
from .losses import EXPONENTIAL, DEFAULT_IOTA_SCALE, neutral, tune_la, tune_vs_defaults
from .model_core import ProblemSpec
from .risk import monte_carlo_error, worst_group_error

DEFAULT_MC_SAMPLES = 20_000
FIG2_DIMS = (256, 1024, 4096, 16384)
FIG2_N = 200
FIG2_TAU = 50.0
FIG2_TAU_EXPONENT = 0.3
FIG2_RPLUS_EXPONENT = 0.6
FIG2_RPLUS_SCALE = 0.25
FIG2_SEEDS = tuple(range(1, 11))

SOLVER_GD = "gd"
SOLVER_CS_SVM = "cs_svm"
SOLVER_BOTH = "both"

CSV_COLUMNS = (
    "d", "n", "n_plus", "n_minus", "tau_effective", "R_plus", "R_minus",
    "loss", "delta_plus", "delta_minus", "iota_plus", "iota_minus",
    "omega_plus", "omega_minus", "xi", "seed", "solver", "status",
    "corr_plus", "corr_minus", "err_plus", "err_minus", "wst_error",
    "mc_wst_error", "mc_radius", "margin_spread", "kkt_max_violation",
    "gd_iters", "gd_svm_cosine", "wall_ms",
)

_AGGREGATE_COLUMNS = (
    "corr_plus", "corr_minus", "err_plus", "err_minus", "wst_error",
    "mc_wst_error", "mc_radius", "margin_spread", "kkt_max_violation",
    "gd_iters", "gd_svm_cosine", "wall_ms",
)


@dataclass(frozen=True)
class TauRule:
    """Imbalance schedule: fixed value or tau = d**exponent."""

    kind: str                  # "fixed" | "power"
    value: float

    def __post_init__(self):
        if self.kind not in ("fixed", "power"):
            raise ValueError("tau rule kind must be 'fixed' or 'power'")
        if self.kind == "fixed" and self.value <= 0:
            raise ValueError("fixed tau must be positive")

    def tau(self, d: int) -> float:
        return self.value if self.kind == "fixed" else float(d) ** self.value

    @property
    def label(self) -> str:
        return "fixed_tau" if self.kind == "fixed" else "growing_tau"


@dataclass(frozen=True)
class PowerLaw:
    """Signal-energy schedule R_plus(d) = scale * d**exponent."""

    exponent: float = FIG2_RPLUS_EXPONENT
    scale: float = FIG2_RPLUS_SCALE

    def value(self, d: int) -> float:
        return self.scale * float(d) ** self.exponent


@dataclass(frozen=True)
class LossConfig:
    name: str                       # "vs" | "la" | "ce"
    shape: str = EXPONENTIAL
    iota_scale: float = DEFAULT_IOTA_SCALE   # used by "la" only

    def __post_init__(self):
        if self.name not in ("vs", "la", "ce"):
            raise ValueError("loss name must be one of vs, la, ce")

    def params(self, n_plus: int, n_minus: int):
        if self.name == "vs":
            return tune_vs_defaults(n_plus, n_minus, shape=self.shape)
        if self.name == "la":
            return tune_la(n_plus, n_minus, self.iota_scale, shape=self.shape)
        return neutral(self.shape)


@dataclass(frozen=True)
class SweepGrid:
    dims: tuple[int, ...]
    n: int
    tau_rule: TauRule
    r_plus_rule: PowerLaw = PowerLaw()
    r_ratio: float = 0.0
    losses: tuple[LossConfig, ...] = (LossConfig("vs"), LossConfig("la"))
    seeds: tuple[int, ...] = FIG2_SEEDS
    solver: str = SOLVER_CS_SVM
    mc_samples: int = DEFAULT_MC_SAMPLES
    xi: float = 0.0

    def __post_init__(self):
        if not self.dims:
            raise ValueError("grid needs at least one dimension")
        if any(d < 4 for d in self.dims):
            raise ValueError("all dimensions must be at least 4")
        if not self.losses:
            raise ValueError("grid needs at least one loss configuration")
        if not self.seeds:
            raise ValueError("grid needs at least one seed")
        if self.solver not in (SOLVER_GD, SOLVER_CS_SVM, SOLVER_BOTH):
            raise ValueError("solver must be gd, cs_svm, or both")
        if not -1.0 <= self.r_ratio <= 1.0:
            raise ValueError("r_ratio must lie in [-1, 1]")
        if self.mc_samples < 0:
            raise ValueError("mc_samples must be non-negative")


def fig2_preset(variant: str = "fixed_tau") -> SweepGrid:
    """Reproduction grid: d in {256,...,16384}, n=200, equal-energy means.

    The fixed variant pins tau at 50 (the figure caption's value; the body
    text's 30 is available by editing the rule), the growing variant uses
    tau = d^0.3.  Both use R_plus = d^0.6 / 4 split evenly between the
    core and spurious first coordinates, frequency-proportional deltas for
    the multiplicative tuning, and deltas=1 for the additive one.
    """
    if variant not in ("fixed_tau", "growing_tau"):
        raise ValueError("variant must be 'fixed_tau' or 'growing_tau'")
    rule = (
        TauRule("fixed", FIG2_TAU)
        if variant == "fixed_tau"
        else TauRule("power", FIG2_TAU_EXPONENT)
    )
    return SweepGrid(
        dims=FIG2_DIMS,
        n=FIG2_N,
        tau_rule=rule,
        r_plus_rule=PowerLaw(),
        r_ratio=0.0,
        losses=(LossConfig("vs"), LossConfig("la")),
        seeds=FIG2_SEEDS,
        solver=SOLVER_CS_SVM,
        mc_samples=DEFAULT_MC_SAMPLES,
    )


def build_spec(grid: SweepGrid, d: int) -> ProblemSpec:
    """Problem instance at one grid dimension.

    The total dimension splits evenly (core gets the ceiling); the target
    ratio r = R_minus/R_plus allocates |mu_c|^2 = R_plus(1+r)/2 and
    |mu_s|^2 = R_plus(1-r)/2 on the first coordinate of each block.
    """
    d_core = (d + 1) // 2
    d_spur = d - d_core
    r_plus = grid.r_plus_rule.value(d)
    mu_core = np.zeros(d_core)
    mu_spur = np.zeros(d_spur)
    mu_core[0] = np.sqrt(r_plus * (1.0 + grid.r_ratio) / 2.0)
    mu_spur[0] = np.sqrt(r_plus * (1.0 - grid.r_ratio) / 2.0)
    n_plus, n_minus = split_counts(grid.n, grid.tau_rule.tau(d))
    return ProblemSpec(
        d_core=d_core,
        d_spur=d_spur,
        mu_core=mu_core,
        mu_spur=mu_spur,
        n_plus=n_plus,
        n_minus=n_minus,
        label_flip_rate=grid.xi,
    )


@dataclass
class SweepRow:
    """One result row; attribute order mirrors the CSV schema."""

    d: int
    n: int
    n_plus: int
    n_minus: int
    tau_effective: float
    R_plus: float
    R_minus: float
    loss: str
    delta_plus: float
    delta_minus: float
    iota_plus: float
    iota_minus: float
    omega_plus: float
    omega_minus: float
    xi: float
    seed: object            # int, or "mean"/"stderr" on aggregate rows
    solver: str
    status: str
    corr_plus: float | None = None
    corr_minus: float | None = None
    err_plus: float | None = None
    err_minus: float | None = None
    wst_error: float | None = None
    mc_wst_error: float | None = None
    mc_radius: float | None = None
    margin_spread: float | None = None
    kkt_max_violation: float | None = None
    gd_iters: float | None = None
    gd_svm_cosine: float | None = None
    wall_ms: float | None = None
    variant: str = ""       # tau-rule label; not a CSV column

    def csv_values(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if np.isnan(v):
        return "nan"
    return f"{v:.17g}"


def write_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(v) for v in row.csv_values()) + "\n")


def _solve_point(grid: SweepGrid, spec: ProblemSpec, ds, loss_cfg: LossConfig,
                 seed: int, gd_config: GdConfig, record_timing: bool) -> list[SweepRow]:
    from .model_core import snr_summary

    snr = snr_summary(spec)
    params = loss_cfg.params(spec.n_plus, spec.n_minus)
    base = dict(
        d=spec.d, n=spec.n, n_plus=spec.n_plus, n_minus=spec.n_minus,
        tau_effective=spec.n_plus / spec.n_minus,
        R_plus=snr.R_plus, R_minus=snr.R_minus,
        loss=loss_cfg.name,
        delta_plus=params.delta_plus, delta_minus=params.delta_minus,
        iota_plus=params.iota_plus, iota_minus=params.iota_minus,
        omega_plus=params.omega_plus, omega_minus=params.omega_minus,
        xi=grid.xi, seed=seed, variant=grid.tau_rule.label,
    )
    rows: list[SweepRow] = []

    solutions = {}
    statuses = {}
    t0 = time.perf_counter()
    if grid.solver in (SOLVER_CS_SVM, SOLVER_BOTH):
        try:
            solutions["cs_svm"] = svm_mod.solve_cs_svm(ds, params.deltas)
            statuses["cs_svm"] = "ok"
        except NonSeparableError:
            statuses["cs_svm"] = "non_separable"
        except SolverTimeoutError:
            statuses["cs_svm"] = "timeout"
    if grid.solver in (SOLVER_GD, SOLVER_BOTH):
        try:
            solutions["gd"] = run_gd(params, ds, gd_config)
            statuses["gd"] = "ok"
        except VslabError as exc:
            statuses["gd"] = f"error:{type(exc).__name__}"
    wall_ms = (time.perf_counter() - t0) * 1e3 if record_timing else None

    for solver_name in sorted(statuses):
        row = SweepRow(**base, solver=solver_name, status=statuses[solver_name])
        row.wall_ms = wall_ms
        sol = solutions.get(solver_name)
        if sol is None:
            rows.append(row)
            continue
        if solver_name == "cs_svm":
            w = sol.w
            row.kkt_max_violation = sol.kkt_max_violation
        else:
            w = sol.final_w
            row.gd_iters = sol.iters_run
            svm_sol = solutions.get("cs_svm")
            if svm_sol is not None:
                num = float(w.w @ svm_sol.w.w)
                row.gd_svm_cosine = num / (w.norm * svm_sol.w.norm)
        report = worst_group_error(w, ds.nu_plus, ds.nu_minus)
        row.corr_plus = report.corr_plus
        row.corr_minus = report.corr_minus
        row.err_plus = report.err_plus
        row.err_minus = report.err_minus
        row.wst_error = report.wst_error
        row.margin_spread = margin_equality_check(
            ds, params.deltas, w, tol=np.inf
        ).spread
        if grid.mc_samples > 0:
            mc = monte_carlo_error(w, spec, grid.mc_samples, seed)
            if mc.err_plus >= mc.err_minus:
                row.mc_wst_error, row.mc_radius = mc.err_plus, mc.radius_plus
            else:
                row.mc_wst_error, row.mc_radius = mc.err_minus, mc.radius_minus
        rows.append(row)
    return rows


def _run_cell(args) -> list[SweepRow]:
    """One (dimension, seed) task: draw the dataset once, solve per loss."""
    grid, d, seed, gd_config, record_timing = args
    spec = build_spec(grid, d)
    ds = sample_dataset(spec, seed)
    rows = []
    for loss_cfg in grid.losses:
        rows.extend(_solve_point(grid, spec, ds, loss_cfg, seed, gd_config, record_timing))
    return rows


def _sort_key(row: SweepRow):
    return (row.d, row.loss, row.seed, row.solver)


def _aggregate_block(block: list[SweepRow]) -> list[SweepRow]:
    """mean and stderr rows over the seeds of one (d, loss, solver) block."""
    out = []
    template = block[0]
    ok = [r for r in block if r.status == "ok"]
    for kind in ("mean", "stderr"):
        agg = SweepRow(
            **{
                c: getattr(template, c)
                for c in CSV_COLUMNS
                if c not in ("seed", "status", *_AGGREGATE_COLUMNS)
            },
            seed=kind,
            status="ok" if len(ok) == len(block) else f"ok:{len(ok)}/{len(block)}",
            variant=template.variant,
        )
        for col in _AGGREGATE_COLUMNS:
            values = [getattr(r, col) for r in ok if getattr(r, col) is not None]
            if not values:
                continue
            arr = np.asarray(values, dtype=np.float64)
            if kind == "mean":
                setattr(agg, col, float(arr.mean()))
            else:
                sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
                setattr(agg, col, sd / np.sqrt(arr.size))
        out.append(agg)
    return out


def run_sweep(
    grid: SweepGrid,
    out_path=None,
    workers: int = 1,
    gd_config: GdConfig = GdConfig(),
    record_timing: bool = False,
) -> list[SweepRow]:
    """Execute the grid and return per-seed rows plus aggregates.

    Grid cells run concurrently up to ``workers``; every cell owns its
    RNG streams, and rows are merged and sorted by key afterwards, so the
    output is independent of the execution order.  ``wall_ms`` stays
    empty unless ``record_timing`` is set: per-row timings would break
    the byte-identical-output contract.
    """
    tasks = [
        (grid, d, seed, gd_config, record_timing)
        for d in sorted(grid.dims)
        for seed in sorted(grid.seeds)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    per_seed = sorted((row for rows in results for row in rows), key=_sort_key)

    final: list[SweepRow] = []
    blocks: dict[tuple, list[SweepRow]] = {}
    for row in per_seed:
        blocks.setdefault((row.d, row.loss), []).append(row)
    for (_, _), block in sorted(blocks.items()):
        final.extend(block)
        solvers = sorted({r.solver for r in block})
        for solver_name in solvers:
            final.extend(_aggregate_block([r for r in block if r.solver == solver_name]))
    if out_path is not None:
        write_csv(final, out_path)
    return final


_PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Render worst-group error vs dimension from the aggregated sweep data.

Solid lines: fixed imbalance ratio; dashed: ratio growing with dimension;
one color per loss.  Reads {data_name} from its own directory.
\"\"\"
import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = list(csv.DictReader(open(os.path.join(here, "{data_name}"))))
styles = {{"fixed_tau": "-", "growing_tau": "--"}}
colors = {{"vs": "tab:blue", "la": "tab:red", "ce": "tab:green"}}

fig, ax = plt.subplots(figsize=(6, 4))
for variant in sorted({{r["variant"] for r in rows}}):
    for loss in sorted({{r["loss"] for r in rows}}):
        pts = [r for r in rows if r["variant"] == variant and r["loss"] == loss]
        if not pts:
            continue
        pts.sort(key=lambda r: int(r["d"]))
        ds = [int(r["d"]) for r in pts]
        means = [float(r["wst_mean"]) for r in pts]
        errs = [float(r["wst_stderr"]) for r in pts]
        ax.errorbar(ds, means, yerr=errs, linestyle=styles.get(variant, "-"),
                    color=colors.get(loss, None), marker="o", capsize=3,
                    label=f"{{loss}} ({{variant}})")
ax.set_xscale("log", base=2)
ax.set_xlabel("dimension d")
ax.set_ylabel("worst-group error")
ax.set_ylim(bottom=0)
ax.legend()
fig.tight_layout()
out = os.path.join(here, "{plot_name}")
fig.savefig(out, dpi=150)
print(out)
"""


def emit_plot_script(rows: list[SweepRow], out_dir) -> tuple[str, str]:
    """Write aggregated plot data and a self-contained matplotlib script.

    Output bytes are deterministic for identical input rows; the script
    references the data file relative to its own location.
    """
    import os

    if not rows:
        raise ValueError("no rows to plot")
    os.makedirs(out_dir, exist_ok=True)
    data_name = "fig2_plot_data.csv"
    script_name = "fig2_plot.py"
    plot_name = "fig2_plot.png"
    means = {}
    for row in rows:
        if row.seed == "mean" and row.wst_error is not None:
            means[(row.variant, row.loss, row.d)] = row.wst_error
    stderrs = {}
    for row in rows:
        if row.seed == "stderr" and row.wst_error is not None:
            stderrs[(row.variant, row.loss, row.d)] = row.wst_error
    data_path = os.path.join(out_dir, data_name)
    with open(data_path, "w") as fh:
        fh.write("variant,loss,d,wst_mean,wst_stderr\n")
        for key in sorted(means):
            variant, loss, d = key
            fh.write(
                f"{variant},{loss},{d},{means[key]:.17g},"
                f"{stderrs.get(key, 0.0):.17g}\n"
            )
    script_path = os.path.join(out_dir, script_name)
    with open(script_path, "w") as fh:
        fh.write(_PLOT_SCRIPT.format(data_name=data_name, plot_name=plot_name))
    return data_path, script_path
