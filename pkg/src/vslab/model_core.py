"""Generative-model data types and pure geometric helpers.

The data model is a two-group Gaussian mixture over signed samples
``z = y * x``.  Features split into a core block (mean ``mu_core``,
determined by the label) and a spurious block (mean ``mu_spur``,
determined by an attribute that may disagree with the label).  The group
tag ``b = y * a`` is +1 when attribute and label agree (majority) and -1
when they disagree (minority).  The effective group means of ``z`` are

    nu_plus  = [mu_core ;  mu_spur]
    nu_minus = [mu_core ; -mu_spur]

with total signal energy ``R_plus = |mu_core|^2 + |mu_spur|^2`` and
differential energy ``R_minus = |mu_core|^2 - |mu_spur|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np

from .errors import DegenerateModelError

FIXED_COUNTS = "fixed_counts"


@dataclass(frozen=True)
class ProbabilisticMode:
    """Label/attribute priors for probabilistic sampling.

    ``pi_plus`` is P(y=+1); ``p_agree_plus`` is P(a=+1 | y=+1) and
    ``p_agree_minus`` is P(a=-1 | y=-1), i.e. the per-label probability
    that the attribute agrees with the label (group b=+1).
    """

    pi_plus: float = 0.5
    p_agree_plus: float = 0.9
    p_agree_minus: float = 0.9

    def __post_init__(self):
        for name in ("pi_plus", "p_agree_plus", "p_agree_minus"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


SamplingMode = Union[str, ProbabilisticMode]


@dataclass(frozen=True)
class ProblemSpec:
    """Full generative description of one mixture instance.

    In ``fixed_counts`` mode (the default) the realized group sizes are
    exactly ``n_plus`` / ``n_minus``.  In probabilistic mode those fields
    only fix the total sample count ``n`` and the priors of
    ``sampling_mode`` govern group membership.
    """

    d_core: int
    d_spur: int
    mu_core: np.ndarray
    mu_spur: np.ndarray
    n_plus: int
    n_minus: int
    label_flip_rate: float = 0.0
    sampling_mode: SamplingMode = FIXED_COUNTS

    def __post_init__(self):
        if self.d_core < 1 or self.d_spur < 1:
            raise ValueError("block dimensions must satisfy d_core >= 1 and d_spur >= 1")
        mu_core = np.ascontiguousarray(np.asarray(self.mu_core, dtype=np.float64))
        mu_spur = np.ascontiguousarray(np.asarray(self.mu_spur, dtype=np.float64))
        object.__setattr__(self, "mu_core", mu_core)
        object.__setattr__(self, "mu_spur", mu_spur)
        if mu_core.shape != (self.d_core,):
            raise ValueError(
                f"mu_core has shape {mu_core.shape}, expected ({self.d_core},)"
            )
        if mu_spur.shape != (self.d_spur,):
            raise ValueError(
                f"mu_spur has shape {mu_spur.shape}, expected ({self.d_spur},)"
            )
        if not (np.isfinite(mu_core).all() and np.isfinite(mu_spur).all()):
            raise ValueError("mean vectors must be finite")
        if self.n_plus < 0 or self.n_minus < 0:
            raise ValueError("group sizes must be non-negative")
        if self.n_plus + self.n_minus < 1:
            raise ValueError("need at least one sample: n_plus + n_minus >= 1")
        if not 0.0 <= self.label_flip_rate <= 1.0:
            raise ValueError("label_flip_rate must lie in [0, 1]")
        if isinstance(self.sampling_mode, str) and self.sampling_mode != FIXED_COUNTS:
            raise ValueError(
                f"sampling_mode must be '{FIXED_COUNTS}' or a ProbabilisticMode, "
                f"got {self.sampling_mode!r}"
            )

    @property
    def d(self) -> int:
        return self.d_core + self.d_spur

    @property
    def n(self) -> int:
        return self.n_plus + self.n_minus

    @property
    def tau(self) -> float:
        """Imbalance ratio n_plus / n_minus; defined only for n_minus > 0."""
        if self.n_minus == 0:
            raise ValueError("imbalance ratio undefined for n_minus == 0")
        return self.n_plus / self.n_minus


@dataclass(frozen=True)
class Sample:
    """One signed training or test point z = y * x with its group tags.

    ``b == y * a`` holds for the clean label; after a label flip the
    stored ``y`` is negated, ``b`` is recomputed from the stored ``y``,
    and ``flipped`` marks the corruption.
    """

    z: np.ndarray
    b: int
    y: int
    a: int
    flipped: bool = False

    def __post_init__(self):
        if self.b not in (-1, 1) or self.y not in (-1, 1) or self.a not in (-1, 1):
            raise ValueError("b, y, a must each be -1 or +1")
        if self.b != self.y * self.a:
            raise ValueError("group tag must satisfy b == y * a for the stored label")

    @property
    def clean_b(self) -> int:
        """Group tag of the uncorrupted sample."""
        return -self.b if self.flipped else self.b


@dataclass(frozen=True)
class Classifier:
    """Linear classifier f(x) = <w, x>."""

    w: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.w, dtype=np.float64))
        object.__setattr__(self, "w", w)
        if w.ndim != 1:
            raise ValueError("w must be a vector")
        if not np.isfinite(w).all():
            raise ValueError("w must have finite entries")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.w))


class SnrSummary(NamedTuple):
    R_plus: float
    R_minus: float
    ratio: float


def build_nu(spec: ProblemSpec) -> tuple[np.ndarray, np.ndarray]:
    """Effective group means of z: nu_plus = [mu_c; mu_s], nu_minus = [mu_c; -mu_s]."""
    nu_plus = np.concatenate([spec.mu_core, spec.mu_spur])
    nu_minus = np.concatenate([spec.mu_core, -spec.mu_spur])
    return nu_plus, nu_minus


def group_of(y: int, a: int) -> int:
    """Group tag b = y * a; +1 when attribute agrees with label, -1 otherwise."""
    if y not in (-1, 1) or a not in (-1, 1):
        raise ValueError("y and a must each be -1 or +1")
    return y * a


def snr_summary(spec: ProblemSpec) -> SnrSummary:
    """Total and differential signal energy (R_plus, R_minus, R_minus/R_plus)."""
    core = float(spec.mu_core @ spec.mu_core)
    spur = float(spec.mu_spur @ spec.mu_spur)
    r_plus = core + spur
    r_minus = core - spur
    if r_plus <= 0.0:
        raise DegenerateModelError("both mean vectors are zero: R_plus = 0")
    return SnrSummary(r_plus, r_minus, r_minus / r_plus)
