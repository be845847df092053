"""Exact terminal-direction oracle: the cost-sensitive hard-margin SVM.

Solves  min |w|_2  s.t.  delta_{b_i} <z_i, w> >= 1  for all i
by cyclic dual coordinate ascent on the scaled features
zt_i = delta_{b_i} z_i (no intercept), with KKT certification.  In the
heavily overparameterized regime every training point is a support
vector, in which case the solution coincides with the minimum-norm
interpolator of the targets 1/delta_{b_i}; that interpolator doubles as
an independent fast path and cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NonSeparableError, RankDeficiencyError, SolverTimeoutError
from .model_core import Classifier

DEFAULT_TOL = 1e-10
DEFAULT_MAX_PASSES = 100_000
DEFAULT_ACTIVE_TOL = 1e-6
DEFAULT_COND_THRESHOLD = 1e12
DUAL_CEILING_PER_SAMPLE = 1e12

SOLVER_DUAL_CD = "dual_cd"
SOLVER_MIN_NORM = "min_norm"


@dataclass(frozen=True)
class SvmSolution:
    w: Classifier
    alpha: np.ndarray               # dual variables, >= 0
    kkt_max_violation: float
    active_set: np.ndarray          # constraint tight within active_tol
    solver_used: str
    passes: int                     # coordinate sweeps performed (0 for min_norm)


def _delta_vector(deltas, b_array: np.ndarray) -> np.ndarray:
    """Per-sample multiplicative adjustments from a (plus, minus) pair."""
    if hasattr(deltas, "deltas"):
        deltas = deltas.deltas
    dp, dm = float(deltas[0]), float(deltas[1])
    if dp <= 0 or dm <= 0:
        raise ValueError("per-group adjustments must be positive")
    return np.where(b_array == 1, dp, dm)


def _kkt_violation(alpha: np.ndarray, margins: np.ndarray) -> float:
    """Max projected-gradient violation of the hard-margin dual."""
    viol = np.where(alpha > 0.0, np.abs(1.0 - margins), np.maximum(0.0, 1.0 - margins))
    return float(viol.max())


def solve_cs_svm(
    ds,
    deltas,
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    fast_path: bool = False,
    active_tol: float = DEFAULT_ACTIVE_TOL,
) -> SvmSolution:
    """Hard-margin solution of the cost-sensitive program.

    Dual coordinate ascent with a cached Gram matrix; terminates when the
    max KKT violation drops to ``tol``.  With ``fast_path=True`` the
    minimum-norm interpolator is tried first and returned when it
    certifies (all dual variables non-negative), which is exactly the
    all-support-vector case.  Infeasible data is detected by a ceiling on
    the dual variables (the hard-margin dual is unbounded iff the primal
    is infeasible).
    """
    if ds.n < 1:
        raise ValueError("empty dataset")
    dvec = _delta_vector(deltas, ds.b_array)
    zt = ds.z_matrix * dvec[:, None]
    gram = zt @ zt.T
    n = ds.n

    if fast_path:
        sol = _try_min_norm_solution(ds, zt, gram, dvec, tol, active_tol)
        if sol is not None:
            return sol

    diag = np.ascontiguousarray(np.diag(gram))
    if (diag <= 0.0).any():
        raise RankDeficiencyError("a scaled sample has zero norm")
    alpha = np.zeros(n)
    margins = np.zeros(n)
    ceiling = DUAL_CEILING_PER_SAMPLE * n
    passes = 0
    while passes < max_passes:
        passes += 1
        for i in range(n):
            a_new = alpha[i] + (1.0 - margins[i]) / diag[i]
            if a_new < 0.0:
                a_new = 0.0
            step = a_new - alpha[i]
            if step != 0.0:
                alpha[i] = a_new
                margins += step * gram[i]
        if alpha.max() > ceiling:
            raise NonSeparableError(
                "dual variables exceeded the divergence ceiling; "
                "data is not linearly separable under these margins"
            )
        violation = _kkt_violation(alpha, margins)
        if violation <= tol:
            w = Classifier(zt.T @ alpha)
            return SvmSolution(
                w=w,
                alpha=alpha,
                kkt_max_violation=violation,
                active_set=np.abs(margins - 1.0) <= active_tol,
                solver_used=SOLVER_DUAL_CD,
                passes=passes,
            )
    best = SvmSolution(
        w=Classifier(zt.T @ alpha),
        alpha=alpha,
        kkt_max_violation=_kkt_violation(alpha, margins),
        active_set=np.abs(margins - 1.0) <= active_tol,
        solver_used=SOLVER_DUAL_CD,
        passes=passes,
    )
    raise SolverTimeoutError(
        f"no convergence to tol={tol} within {max_passes} passes "
        f"(violation {best.kkt_max_violation:.3e})",
        best=best,
    )


def _try_min_norm_solution(ds, zt, gram, dvec, tol, active_tol):
    """Certify the min-norm interpolator as the SVM solution, or return None."""
    try:
        cho = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError:
        return None
    alpha = scipy.linalg.cho_solve(cho, np.ones(ds.n), check_finite=False)
    if alpha.min() < 0.0:
        return None
    margins = gram @ alpha
    violation = _kkt_violation(alpha, margins)
    if violation > tol:
        return None
    return SvmSolution(
        w=Classifier(zt.T @ alpha),
        alpha=alpha,
        kkt_max_violation=violation,
        active_set=np.abs(margins - 1.0) <= active_tol,
        solver_used=SOLVER_MIN_NORM,
        passes=0,
    )


def min_norm_interpolator(
    ds, deltas, cond_threshold: float = DEFAULT_COND_THRESHOLD
) -> Classifier:
    """Minimum-norm w with <z_i, w> = 1/delta_{b_i} for every sample.

    Solves through a Cholesky factorization of the Gram matrix; a
    condition estimate above ``cond_threshold`` (or a failed
    factorization) raises RankDeficiencyError.
    """
    dvec = _delta_vector(deltas, ds.b_array)
    z = ds.z_matrix
    gram = z @ z.T
    targets = 1.0 / dvec
    try:
        cho = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise RankDeficiencyError(f"Gram matrix is not positive definite: {exc}") from exc
    cond = np.linalg.cond(gram)
    if cond > cond_threshold:
        raise RankDeficiencyError(
            f"Gram condition estimate {cond:.3e} exceeds threshold {cond_threshold:.1e}"
        )
    coeffs = scipy.linalg.cho_solve(cho, targets, check_finite=False)
    w = z.T @ coeffs
    residual = np.abs(gram @ coeffs - targets) / np.abs(targets)
    if residual.max() > 1e-8:
        raise RankDeficiencyError(
            f"interpolation residual {residual.max():.3e} exceeds 1e-8 relative"
        )
    return Classifier(w)


def scaled_margins(ds, deltas, w) -> np.ndarray:
    """delta_{b_i} <z_i, w/|w|> for every sample."""
    wv = w.w if isinstance(w, Classifier) else np.asarray(w, dtype=np.float64)
    norm = np.linalg.norm(wv)
    if norm == 0.0:
        raise ValueError("scaled margins undefined for the zero classifier")
    dvec = _delta_vector(deltas, ds.b_array)
    return dvec * (ds.z_matrix @ (wv / norm))


def kkt_report(ds, deltas, sol: SvmSolution) -> dict:
    """Recomputed KKT residuals of a solution (certification surface).

    stationarity: |w - sum alpha_i zt_i|;  primal: max(0, 1 - margins);
    dual: min alpha;  complementary slackness: max alpha_i |margin_i - 1|.
    """
    dvec = _delta_vector(deltas, ds.b_array)
    zt = ds.z_matrix * dvec[:, None]
    margins = zt @ sol.w.w
    stationarity = float(np.linalg.norm(sol.w.w - zt.T @ sol.alpha))
    return {
        "stationarity": stationarity,
        "primal_infeasibility": float(np.maximum(0.0, 1.0 - margins).max()),
        "dual_infeasibility": float(max(0.0, -sol.alpha.min())),
        "complementary_slackness": float((sol.alpha * np.abs(margins - 1.0)).max()),
    }
