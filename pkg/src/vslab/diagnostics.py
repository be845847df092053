"""Structural checks on realized data and trajectories.

The analysis behind this package proceeds on a high-probability "good
event" over the draw of the training set (norm and alignment inequalities
with an existential constant c1), under a problem-regime assumption with
another existential constant C.  Those constants are unnamed, so each
check reports the smallest constant that would pass alongside pass/fail
flags at the user-supplied constants; experiments are never gated on
them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cs_svm import scaled_margins
from .model_core import Classifier, ProblemSpec, snr_summary

DEFAULT_C1 = 3.0
DEFAULT_C = 10.0
DEFAULT_DELTA = 0.05
DEFAULT_KKT_TOL = 1e-8
DEFAULT_MARGIN_SPREAD_TOL = 1e-6
DEFAULT_RATIO_CEILING = 10.0


@dataclass(frozen=True)
class DiagnosticsConfig:
    c1: float = DEFAULT_C1
    C: float = DEFAULT_C
    delta: float = DEFAULT_DELTA
    kkt_tol: float = DEFAULT_KKT_TOL
    margin_spread_tol: float = DEFAULT_MARGIN_SPREAD_TOL
    ratio_ceiling: float = DEFAULT_RATIO_CEILING

    def __post_init__(self):
        if self.c1 < 1.0:
            raise ValueError("c1 must be at least 1")
        if self.C <= 0 or self.kkt_tol <= 0 or self.margin_spread_tol <= 0:
            raise ValueError("constants must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class InequalityReport:
    """One good-event inequality over all samples (or pairs).

    ``worst_slack`` is the tightest margin by which the inequality holds
    (negative when violated); ``required_c1`` is the smallest constant
    making every instance pass, or None where the inequality has no
    constant.
    """

    name: str
    passed: bool
    worst_slack: float
    required_c1: float | None
    count: int


@dataclass(frozen=True)
class GoodEventReport:
    norm_upper: InequalityReport
    norm_lower: InequalityReport
    same_group_mean: InequalityReport
    cross_group_mean: InequalityReport
    pairwise: InequalityReport
    overall: bool
    smallest_c1: float  # inf when the (constant-free) mean inequality fails


def good_event_check(ds, cfg: DiagnosticsConfig = DiagnosticsConfig()) -> GoodEventReport:
    """Evaluate the good-event inequalities on a realized dataset.

    Group membership uses the stored tags; on flipped datasets the event
    is expected to fail (the inequalities describe clean draws).
    """
    z = ds.z_matrix
    b = ds.b_array
    n, d = ds.n, ds.d
    snr = snr_summary(ds.spec)
    r_plus, r_minus = snr.R_plus, snr.R_minus
    log_term = np.sqrt(np.log(n / cfg.delta))
    nu = {1: ds.nu_plus, -1: ds.nu_minus}

    norms_sq = np.einsum("ij,ij->i", z, z)
    # |z|^2 <= c1 d  and  |z|^2 >= d / c1
    req_upper = norms_sq.max() / d
    req_lower = d / norms_sq.min()
    norm_upper = InequalityReport(
        name="norm_upper",
        passed=bool(req_upper <= cfg.c1),
        worst_slack=float(cfg.c1 * d - norms_sq.max()),
        required_c1=float(max(1.0, req_upper)),
        count=n,
    )
    norm_lower = InequalityReport(
        name="norm_lower",
        passed=bool(req_lower <= cfg.c1),
        worst_slack=float(norms_sq.min() - d / cfg.c1),
        required_c1=float(max(1.0, req_lower)),
        count=n,
    )

    # same-group mean alignment: |z_i . nu_b - R_plus| <= R_plus / 2
    same_dev = np.empty(n)
    cross_dev = np.empty(n)
    for grp in (1, -1):
        sel = b == grp
        if sel.any():
            same_dev[sel] = np.abs(z[sel] @ nu[grp] - r_plus)
            cross_dev[sel] = np.abs(z[sel] @ nu[-grp] - r_minus)
    same_group = InequalityReport(
        name="same_group_mean",
        passed=bool(same_dev.max() <= r_plus / 2.0),
        worst_slack=float(r_plus / 2.0 - same_dev.max()),
        required_c1=None,
        count=n,
    )
    cross_scale = np.sqrt(r_plus) * log_term
    cross_group = InequalityReport(
        name="cross_group_mean",
        passed=bool(cross_dev.max() <= cfg.c1 * cross_scale),
        worst_slack=float(cfg.c1 * cross_scale - cross_dev.max()),
        required_c1=float(max(1.0, cross_dev.max() / cross_scale)),
        count=n,
    )

    # pairwise: |z_i . z_j - R_(same/cross)| <= c1 sqrt(d) sqrt(log(n/delta))
    pair_scale = np.sqrt(d) * log_term
    if n > 1:
        gram = z @ z.T
        same_pair = np.equal.outer(b, b)
        ref = np.where(same_pair, r_plus, r_minus)
        dev = np.abs(gram - ref)
        iu = np.triu_indices(n, k=1)
        pair_dev = dev[iu].max()
        pair_count = len(iu[0])
        pairwise = InequalityReport(
            name="pairwise",
            passed=bool(pair_dev <= cfg.c1 * pair_scale),
            worst_slack=float(cfg.c1 * pair_scale - pair_dev),
            required_c1=float(max(1.0, pair_dev / pair_scale)),
            count=pair_count,
        )
    else:
        pairwise = InequalityReport(
            name="pairwise", passed=True, worst_slack=float("inf"),
            required_c1=1.0, count=0,
        )

    parts = (norm_upper, norm_lower, same_group, cross_group, pairwise)
    overall = all(p.passed for p in parts)
    smallest = max(p.required_c1 for p in parts if p.required_c1 is not None)
    if not same_group.passed:
        smallest = float("inf")
    return GoodEventReport(
        norm_upper=norm_upper,
        norm_lower=norm_lower,
        same_group_mean=same_group,
        cross_group_mean=cross_group,
        pairwise=pairwise,
        overall=overall,
        smallest_c1=float(smallest),
    )


@dataclass(frozen=True)
class AssumptionReport:
    """Overparameterization-regime conditions at the configured constant C.

    Condition (d) is known to fail for the reproduction presets at any
    C >= 1; it is reported, never used as a gate.
    """

    a_sample_size: bool        # n >= C log(1/delta)
    b_core_snr: bool           # |mu_c|^2 >= C log(n/delta)
    c_linear_overparam: bool   # d >= C R_plus n
    d_quadratic_overparam: bool  # d >= C n^2 log(n/delta)
    largest_C: float


def assumption_check(
    spec: ProblemSpec, d: int | None = None,
    cfg: DiagnosticsConfig = DiagnosticsConfig(),
) -> AssumptionReport:
    if d is None:
        d = spec.d
    n = spec.n
    snr = snr_summary(spec)
    core_sq = float(spec.mu_core @ spec.mu_core)
    log_inv = np.log(1.0 / cfg.delta)
    log_nd = np.log(n / cfg.delta)
    ratios = (
        n / log_inv if log_inv > 0 else float("inf"),
        core_sq / log_nd,
        d / (snr.R_plus * n),
        d / (n * n * log_nd),
    )
    return AssumptionReport(
        a_sample_size=bool(n >= cfg.C * log_inv),
        b_core_snr=bool(core_sq >= cfg.C * log_nd),
        c_linear_overparam=bool(d >= cfg.C * snr.R_plus * n),
        d_quadratic_overparam=bool(d >= cfg.C * n * n * log_nd),
        largest_C=float(min(ratios)),
    )


@dataclass(frozen=True)
class WitnessReport:
    w_tilde: Classifier
    min_margin: float        # min_i <w_tilde/|w_tilde|, z_i>
    separable: bool
    lemma_scale: float       # sqrt(d/n), for comparison with the lemma's bound


def separability_witness(ds) -> WitnessReport:
    """Core-block witness w~ = sum_i [z_{i,core}; 0] and its margins."""
    d_core = ds.spec.d_core
    core = ds.z_matrix[:, :d_core]
    w_core = core.sum(axis=0)
    w_tilde = np.concatenate([w_core, np.zeros(ds.d - d_core)])
    norm = np.linalg.norm(w_tilde)
    if norm == 0.0:
        return WitnessReport(
            w_tilde=Classifier(w_tilde),
            min_margin=float("-inf"),
            separable=False,
            lemma_scale=float(np.sqrt(ds.d / ds.n)),
        )
    margins = ds.z_matrix @ (w_tilde / norm)
    return WitnessReport(
        w_tilde=Classifier(w_tilde),
        min_margin=float(margins.min()),
        separable=bool(margins.min() > 0.0),
        lemma_scale=float(np.sqrt(ds.d / ds.n)),
    )


@dataclass(frozen=True)
class RatioPoint:
    t: int
    normalized: float      # max over i,j of (l'_i / l'_j) * (delta_i / delta_j)
    unnormalized: float    # max over i,j of l'_i / l'_j


def ratio_monitor(traj, deltas) -> list[RatioPoint]:
    """Derivative-ratio time series from a trajectory's per-sample stream.

    Computed in the log domain: the normalized value is
    exp(max_i(log l'_i + log delta_i) - min_j(log l'_j + log delta_j)); it
    is invariant to rescaling all derivatives by a common factor.
    """
    if traj.per_sample_log_lp is None:
        raise ValueError("trajectory was recorded without per-sample telemetry")
    if hasattr(deltas, "deltas"):
        deltas = deltas.deltas
    dvec = np.where(traj.group_tags == 1, float(deltas[0]), float(deltas[1]))
    log_delta = np.log(dvec)
    out = []
    for rec, log_lp in zip(traj.records, traj.per_sample_log_lp):
        g = log_lp + log_delta
        out.append(
            RatioPoint(
                t=rec.t,
                normalized=float(np.exp(g.max() - g.min())),
                unnormalized=float(np.exp(log_lp.max() - log_lp.min())),
            )
        )
    return out


def ratio_series_to_csv(points: list[RatioPoint], path) -> None:
    with open(path, "w") as fh:
        fh.write("t,normalized_ratio,unnormalized_ratio\n")
        for p in points:
            fh.write(f"{p.t},{p.normalized:.17g},{p.unnormalized:.17g}\n")


@dataclass(frozen=True)
class MarginEqualityReport:
    spread: float
    passed: bool


def margin_equality_check(ds, deltas, w, tol: float) -> MarginEqualityReport:
    """Relative spread (max-min)/mean of the scaled margins of w."""
    sm = scaled_margins(ds, deltas, w)
    mean = sm.mean()
    if mean == 0.0:
        return MarginEqualityReport(spread=float("inf"), passed=False)
    spread = float((sm.max() - sm.min()) / mean)
    return MarginEqualityReport(spread=spread, passed=bool(abs(spread) <= tol))


def largest_comparison_constant(log_lp_plus: float, log_lp_minus: float,
                                r_ratio_minus_c1_over_C: float, b: int) -> float:
    """Empirical largest c0 with c0 L' <= L'_b / 2 + (R-/R+ - c1/C) L'_{-b}.

    Evaluated per telemetry point from the recorded group sums; reported
    as telemetry, not asserted (the constant is existential).
    """
    lp_b = np.exp(log_lp_plus if b == 1 else log_lp_minus)
    lp_nb = np.exp(log_lp_minus if b == 1 else log_lp_plus)
    total = lp_b + lp_nb
    if total == 0.0:
        return float("nan")
    return float((0.5 * lp_b + r_ratio_minus_c1_over_C * lp_nb) / total)
