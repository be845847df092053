"""Full-batch gradient descent with proof-aligned trajectory telemetry.

The update is w <- w + eta * sum_i l'_i z_i with the per-sample negative
derivatives l'_i carried in the log domain: the applied step uses a
shared scale factor s_t = max_i log l'_i, i.e.
eta * e^{s_t} * sum_i e^{log l'_i - s_t} z_i, which is algebraically the
raw update (no normalized-gradient variant), but never underflows as a
whole even when individual derivatives do.

``run_gd`` tracks iterates in the span of the data: with w = w0 + Z^T c
the margins satisfy m = Z w0 + G c for the Gram matrix G = Z Z^T, so one
step costs O(n^2) instead of O(n d).  This is an exact reparameterization
of the same recursion; the returned classifier is materialized as
w0 + Z^T c at full precision.  Stopping is on direction convergence
(1 - cos between consecutive telemetry strides below tolerance for a
window of consecutive strides), since the object of interest is the
limiting direction w / |w|.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DivergenceError
from .losses import (
    EXPONENTIAL,
    VsLossParams,
    grad_summary_from_margins,
    log_loss_value_arrays,
    log_neg_derivative_arrays,
    logsumexp,
)
from .model_core import Classifier

AUTO = "auto"
DEFAULT_MAX_ITERS = 500_000
DEFAULT_STOP_DIRECTION_TOL = 1e-9
DEFAULT_TELEMETRY_STRIDE = 1_000
STOP_WINDOW = 10              # consecutive strides below tolerance
INIT_BALL_C0 = 1.0            # warn when |w0| exceeds INIT_BALL_C0/sqrt(d)
_LOSS_INCREASE_SLACK = 1e-9   # float jitter allowance on log-loss monotonicity


@dataclass(frozen=True)
class GdConfig:
    step_size: Union[str, float] = AUTO
    max_iters: int = DEFAULT_MAX_ITERS
    stop_direction_tol: float = DEFAULT_STOP_DIRECTION_TOL
    init: Union[str, np.ndarray] = "zero"
    telemetry_stride: int = DEFAULT_TELEMETRY_STRIDE
    record_per_sample: bool = True

    def __post_init__(self):
        if isinstance(self.step_size, str):
            if self.step_size != AUTO:
                raise ValueError("step_size must be 'auto' or a positive float")
        elif self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.stop_direction_tol <= 0:
            raise ValueError("stop_direction_tol must be positive")


@dataclass(frozen=True)
class TelemetryRecord:
    t: int
    norm_w: float
    rho_plus: float
    rho_minus: float
    log_loss: float
    log_lp_plus: float
    log_lp_minus: float
    max_norm_ratio: float
    min_scaled_margin: float
    max_scaled_margin: float


@dataclass(frozen=True)
class Trajectory:
    records: tuple[TelemetryRecord, ...]
    final_w: Classifier
    converged: bool
    iters_run: int
    group_tags: np.ndarray
    per_sample_log_lp: tuple[np.ndarray, ...] | None = None

    CSV_COLUMNS = (
        "t,norm_w,rho_plus,rho_minus,log_loss,log_Lp_plus,log_Lp_minus,"
        "max_norm_ratio,min_scaled_margin,max_scaled_margin"
    )

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.CSV_COLUMNS + "\n")
            for r in self.records:
                fields = (
                    r.norm_w, r.rho_plus, r.rho_minus, r.log_loss,
                    r.log_lp_plus, r.log_lp_minus, r.max_norm_ratio,
                    r.min_scaled_margin, r.max_scaled_margin,
                )
                fh.write(f"{r.t}," + ",".join(f"{v:.17g}" for v in fields) + "\n")


def auto_step_size(ds) -> float:
    """Conservative step size log(2) / (16 d n).

    The analysis wants eta <= log(2)/(8 c1 d n) for an absolute constant
    c1 >= 1; the extra factor 2 stands in for the unnamed constant.
    """
    if ds.n < 1:
        raise ValueError("empty dataset")
    return float(np.log(2.0) / (16.0 * ds.d * ds.n))


def gd_step(params: VsLossParams, ds, w, eta: float) -> Classifier:
    """One explicit update w + eta * sum_i l'_i z_i (shared log-scale factor)."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    wv = w.w if isinstance(w, Classifier) else np.asarray(w, dtype=np.float64)
    if wv.shape[0] != ds.d:
        raise ValueError("dimension mismatch between classifier and dataset")
    delta, omega, iota = params.per_sample(ds.b_array)
    margins = ds.z_matrix @ wv
    log_lp = log_neg_derivative_arrays(delta, omega, iota, margins, params.shape)
    s = log_lp.max()
    p = np.exp(log_lp - s)
    with np.errstate(over="ignore", invalid="ignore"):
        w_new = wv + (eta * np.exp(s)) * (ds.z_matrix.T @ p)
    if not np.isfinite(w_new).all():
        raise DivergenceError(
            "gradient step produced a non-finite iterate; reduce the step size"
        )
    return Classifier(w_new)


def _initial_w(cfg: GdConfig, d: int) -> np.ndarray:
    if isinstance(cfg.init, str):
        if cfg.init != "zero":
            raise ValueError("init must be 'zero' or an explicit vector")
        return np.zeros(d)
    w0 = np.asarray(cfg.init, dtype=np.float64)
    if w0.shape != (d,):
        raise ValueError(f"init vector has shape {w0.shape}, expected ({d},)")
    bound = INIT_BALL_C0 / np.sqrt(d)
    if np.linalg.norm(w0) > bound:
        warnings.warn(
            f"initialization norm {np.linalg.norm(w0):.3e} exceeds the "
            f"O(1/sqrt(d)) ball ({bound:.3e}); derivative-ratio control is "
            "not guaranteed from this start",
            RuntimeWarning,
        )
    return w0.copy()


def run_gd(params: VsLossParams, ds, cfg: GdConfig) -> Trajectory:
    """Iterate GD until direction convergence or the iteration budget.

    Telemetry is recorded at t=0, every ``telemetry_stride`` steps, and at
    the final iterate.  When the step size is auto, the recorded log-loss
    sequence is asserted non-increasing; at a user-supplied step size,
    more than three consecutive increases raise DivergenceError.
    """
    n, d = ds.n, ds.d
    eta = auto_step_size(ds) if cfg.step_size == AUTO else float(cfg.step_size)
    auto = cfg.step_size == AUTO

    z = ds.z_matrix
    b_arr = ds.b_array
    delta, omega, iota = params.per_sample(b_arr)
    log_delta = np.log(delta)
    gram = z @ z.T
    w0 = _initial_w(cfg, d)
    w0_sq = float(w0 @ w0)
    m0 = z @ w0 if w0_sq > 0.0 else np.zeros(n)
    znu_plus = z @ ds.nu_plus
    znu_minus = z @ ds.nu_minus
    rho0_plus = float(w0 @ ds.nu_plus)
    rho0_minus = float(w0 @ ds.nu_minus)

    coeffs = np.zeros(n)
    margins = m0.copy()

    records: list[TelemetryRecord] = []
    per_sample: list[np.ndarray] = []

    def telemetry(t: int) -> np.ndarray:
        """Record one telemetry row; returns refreshed margins."""
        m = m0 + gram @ coeffs
        gsum = grad_summary_from_margins(params, b_arr, m)
        with np.errstate(over="ignore", invalid="ignore"):
            norm_sq = w0_sq + 2.0 * float(coeffs @ m0) + float(
                coeffs @ (gram @ coeffs)
            )
            norm = float(np.sqrt(max(norm_sq, 0.0)))
            log_loss = logsumexp(
                log_loss_value_arrays(delta, omega, iota, m, params.shape)
            )
            g = gsum.log_lp + log_delta
            ratio = float(np.exp(g.max() - g.min()))
        if norm > 0.0:
            sm = delta * m / norm
            sm_min, sm_max = float(sm.min()), float(sm.max())
        else:
            sm_min = sm_max = float("nan")
        records.append(
            TelemetryRecord(
                t=t,
                norm_w=norm,
                rho_plus=rho0_plus + float(coeffs @ znu_plus),
                rho_minus=rho0_minus + float(coeffs @ znu_minus),
                log_loss=log_loss,
                log_lp_plus=gsum.log_lp_plus,
                log_lp_minus=gsum.log_lp_minus,
                max_norm_ratio=ratio,
                min_scaled_margin=sm_min,
                max_scaled_margin=sm_max,
            )
        )
        if cfg.record_per_sample:
            per_sample.append(gsum.log_lp.copy())
        return m

    exponential = params.shape == EXPONENTIAL
    log_dw = np.log(delta) + np.log(omega)

    margins = telemetry(0)
    prev_coeffs = coeffs.copy()
    prev_log_loss = records[0].log_loss
    loss_increase_streak = 0
    below_tol_streak = 0
    converged = False
    t = 0

    while t < cfg.max_iters:
        u = iota - delta * margins
        if exponential:
            log_lp = log_dw + u
        else:
            log_lp = log_dw + np.where(
                u >= 0, -np.log1p(np.exp(-np.abs(u))), u - np.log1p(np.exp(-np.abs(u)))
            )
        s = log_lp.max()
        p = np.exp(log_lp - s)
        with np.errstate(over="ignore"):
            scale = eta * np.exp(s)
        if not np.isfinite(scale):
            raise DivergenceError(
                f"update scale diverged at iteration {t}; reduce the step size",
                iteration=t,
            )
        coeffs += scale * p
        margins += scale * (gram @ p)
        t += 1

        at_stride = t % cfg.telemetry_stride == 0
        if at_stride or t == cfg.max_iters:
            margins = telemetry(t)
            rec = records[-1]
            if not np.isfinite(rec.norm_w) or not np.isfinite(rec.log_loss):
                raise DivergenceError(
                    f"trajectory became non-finite at iteration {t}; "
                    "reduce the step size",
                    iteration=t,
                )
            if rec.log_loss > prev_log_loss + _LOSS_INCREASE_SLACK:
                if auto:
                    raise AssertionError(
                        f"loss increased under the auto step size at t={t}: "
                        f"{prev_log_loss} -> {rec.log_loss}"
                    )
                loss_increase_streak += 1
                if loss_increase_streak > 3:
                    raise DivergenceError(
                        f"loss increased for more than 3 consecutive telemetry "
                        f"points at iteration {t}; reduce the step size",
                        iteration=t,
                    )
            else:
                loss_increase_streak = 0
            prev_log_loss = rec.log_loss

            # direction change between consecutive telemetry strides
            cur_sq = w0_sq + 2.0 * float(coeffs @ m0) + float(coeffs @ (gram @ coeffs))
            prev_gc = gram @ prev_coeffs
            prev_sq = w0_sq + 2.0 * float(prev_coeffs @ m0) + float(
                prev_coeffs @ prev_gc
            )
            if cur_sq > 0.0 and prev_sq > 0.0:
                inner = (
                    w0_sq
                    + float((coeffs + prev_coeffs) @ m0)
                    + float(coeffs @ prev_gc)
                )
                cos = inner / np.sqrt(cur_sq * prev_sq)
                if 1.0 - cos < cfg.stop_direction_tol:
                    below_tol_streak += 1
                    if below_tol_streak >= STOP_WINDOW:
                        converged = True
                else:
                    below_tol_streak = 0
            prev_coeffs = coeffs.copy()
            if converged:
                break

    final_w = Classifier(w0 + z.T @ coeffs)
    return Trajectory(
        records=tuple(records),
        final_w=final_w,
        converged=converged,
        iters_run=t,
        group_tags=b_arr.copy(),
        per_sample_log_lp=tuple(per_sample) if cfg.record_per_sample else None,
    )
