"""Seed-reproducible sampling from the mixture model.

Reproducibility contract: every normal draw is produced by inverting the
standard-normal CDF on 53-bit uniforms from a counter-based Philox
generator keyed by ``(seed, stream_id)``.  The stream id of a training
sample is its index in the group-ordered layout, so any subset of samples
can be generated independently (and in parallel) with bit-identical
results.  Label flips draw from a dedicated stream, so runs that differ
only in the flip rate share identical feature noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import hashlib
import json

import numpy as np
from scipy.special import ndtri

from .errors import MemoryBoundError
from .model_core import (
    FIXED_COUNTS,
    Classifier,
    ProbabilisticMode,
    ProblemSpec,
    Sample,
    build_nu,
)

# Dedicated stream ids, disjoint from per-sample feature streams (0..n-1).
FLIP_STREAM = 1 << 62
LABEL_STREAM = (1 << 62) + 1      # probabilistic-mode label/attribute draws
TEST_STREAM_PLUS = 1 << 61        # Monte Carlo test points, group b=+1
TEST_STREAM_MINUS = (1 << 61) + 1

DEFAULT_MAX_ELEMENTS = 100_000_000  # n*d cap, ~800 MB of float64

_INV_2_53 = 2.0 ** -53


@dataclass(frozen=True)
class RngStream:
    """Counter-based generator for one reproducible stream of draws.

    Identical ``(seed, stream_id)`` pairs give identical sequences across
    runs and platforms for a fixed numpy/scipy build.  A stream is cheap
    to construct; callers should key streams by deterministic ids rather
    than share one stream across tasks.
    """

    seed: int
    stream_id: int = 0

    def _generator(self) -> np.random.Generator:
        key = np.array(
            [self.seed & 0xFFFFFFFFFFFFFFFF, self.stream_id & 0xFFFFFFFFFFFFFFFF],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))

    def uniform(self, shape) -> np.ndarray:
        """Uniforms strictly inside (0, 1) at 53-bit resolution."""
        gen = self._generator()
        bits = gen.integers(0, 1 << 53, size=shape, dtype=np.uint64)
        return (bits.astype(np.float64) + 0.5) * _INV_2_53

    def normal(self, shape) -> np.ndarray:
        """Standard normals via inverse-CDF on the uniform stream."""
        return ndtri(self.uniform(shape))


@dataclass(frozen=True)
class Dataset:
    """Realized training set with its generating spec and seed."""

    samples: tuple[Sample, ...]
    nu_plus: np.ndarray
    nu_minus: np.ndarray
    spec: ProblemSpec
    seed: int

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def d(self) -> int:
        return self.samples[0].z.shape[0]

    @cached_property
    def z_matrix(self) -> np.ndarray:
        return np.vstack([s.z for s in self.samples])

    @cached_property
    def b_array(self) -> np.ndarray:
        return np.array([s.b for s in self.samples], dtype=np.int64)

    @cached_property
    def y_array(self) -> np.ndarray:
        return np.array([s.y for s in self.samples], dtype=np.int64)

    @cached_property
    def a_array(self) -> np.ndarray:
        return np.array([s.a for s in self.samples], dtype=np.int64)

    @cached_property
    def flipped_array(self) -> np.ndarray:
        return np.array([s.flipped for s in self.samples], dtype=bool)

    @cached_property
    def clean_b_array(self) -> np.ndarray:
        return np.array([s.clean_b for s in self.samples], dtype=np.int64)

    def group_counts(self) -> tuple[int, int]:
        """Sizes of the stored (possibly flipped) groups (n_plus, n_minus)."""
        n_plus = int((self.b_array == 1).sum())
        return n_plus, self.n - n_plus


def split_counts(n: int, tau: float) -> tuple[int, int]:
    """Group sizes from a total count and imbalance ratio.

    Uses n_minus = max(1, floor(n/(tau+1) + 0.5)); round-half-up keeps the
    rule platform-stable.  The effective ratio n_plus/n_minus is what all
    outputs report.
    """
    if n < 2:
        raise ValueError("need n >= 2 to split into two groups")
    if tau <= 0:
        raise ValueError("imbalance ratio must be positive")
    n_minus = max(1, int(np.floor(n / (tau + 1.0) + 0.5)))
    n_minus = min(n_minus, n - 1)
    return n - n_minus, n_minus


def _group_layout(spec: ProblemSpec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample (y, a) before any label noise, majority group first."""
    if isinstance(spec.sampling_mode, ProbabilisticMode):
        mode = spec.sampling_mode
        u = RngStream(seed, LABEL_STREAM).uniform((spec.n, 2))
        y = np.where(u[:, 0] < mode.pi_plus, 1, -1)
        p_agree = np.where(y == 1, mode.p_agree_plus, mode.p_agree_minus)
        b = np.where(u[:, 1] < p_agree, 1, -1)
        a = y * b
        # keep the deterministic layout: all b=+1 first
        order = np.argsort(-b, kind="stable")
        return y[order], a[order]
    # fixed counts: alternate labels within each group; z = y*x makes the
    # choice immaterial downstream
    y_plus = np.array([1, -1] * spec.n_plus)[: spec.n_plus]
    y_minus = np.array([1, -1] * spec.n_minus)[: spec.n_minus]
    y = np.concatenate([y_plus, y_minus]).astype(np.int64)
    a = np.concatenate([y_plus, -y_minus]).astype(np.int64)
    return y, a


def sample_dataset(
    spec: ProblemSpec, seed: int, max_elements: int = DEFAULT_MAX_ELEMENTS
) -> Dataset:
    """Draw a full training set; deterministic given (spec, seed).

    Samples are laid out group-major (all b=+1 first) before any noise
    flips; sample i's feature noise comes from stream id i.  When
    ``spec.label_flip_rate > 0`` the flips are applied afterwards from the
    dedicated flip stream.
    """
    n, d = spec.n, spec.d
    if n == 0:
        raise ValueError("cannot sample an empty dataset")
    if n * d > max_elements:
        raise MemoryBoundError(
            f"n*d = {n * d} exceeds the configured cap of {max_elements}"
        )
    nu_plus, nu_minus = build_nu(spec)
    y, a = _group_layout(spec, seed)
    samples = []
    for i in range(n):
        b = int(y[i] * a[i])
        nu = nu_plus if b == 1 else nu_minus
        q = RngStream(seed, i).normal(d)
        samples.append(Sample(z=nu + q, b=b, y=int(y[i]), a=int(a[i])))
    ds = Dataset(
        samples=tuple(samples), nu_plus=nu_plus, nu_minus=nu_minus, spec=spec, seed=seed
    )
    if spec.label_flip_rate > 0.0:
        ds = flip_labels(ds, spec.label_flip_rate, seed)
    return ds


def flip_labels(ds: Dataset, xi: float, seed: int) -> Dataset:
    """Independently negate each training label with probability xi.

    A flip negates the stored y (hence z = y*x), recomputes b from the
    stored y, and sets the flipped flag.  Draws come from the dedicated
    flip stream keyed by ``seed``, independent of all feature noise.
    """
    if not 0.0 <= xi <= 1.0:
        raise ValueError("flip probability must lie in [0, 1]")
    if xi == 0.0:
        return ds
    u = RngStream(seed, FLIP_STREAM).uniform(ds.n)
    flips = u < xi
    samples = []
    for s, f in zip(ds.samples, flips):
        if not f:
            samples.append(s)
            continue
        y_new = -s.y
        samples.append(
            Sample(z=-s.z, b=y_new * s.a, y=y_new, a=s.a, flipped=not s.flipped)
        )
    return Dataset(
        samples=tuple(samples),
        nu_plus=ds.nu_plus,
        nu_minus=ds.nu_minus,
        spec=ds.spec,
        seed=ds.seed,
    )


def sample_test_point(spec: ProblemSpec, b: int, rng: RngStream) -> Sample:
    """One clean test draw z = nu_b + q conditioned on group b.

    The attribute is hidden at test time; the stored (y, a) use the
    convention y=+1, a=b, which realizes the requested group.
    """
    if b not in (-1, 1):
        raise ValueError("b must be -1 or +1")
    nu_plus, nu_minus = build_nu(spec)
    nu = nu_plus if b == 1 else nu_minus
    return Sample(z=nu + rng.normal(spec.d), b=b, y=1, a=b)


def iter_test_noise(spec: ProblemSpec, b: int, seed: int, m: int, chunk_rows: int = 0):
    """Yield standard-normal (rows, d) blocks from the group-b test stream.

    The underlying bit stream is consumed sequentially, so the
    concatenation of blocks is independent of the chunk size; chunking
    only bounds peak memory.
    """
    if b not in (-1, 1):
        raise ValueError("b must be -1 or +1")
    d = spec.d
    if chunk_rows <= 0:
        chunk_rows = max(1, 4_000_000 // d)
    stream = RngStream(seed, TEST_STREAM_PLUS if b == 1 else TEST_STREAM_MINUS)
    gen = stream._generator()
    done = 0
    while done < m:
        rows = min(chunk_rows, m - done)
        bits = gen.integers(0, 1 << 53, size=(rows, d), dtype=np.uint64)
        yield ndtri((bits.astype(np.float64) + 0.5) * _INV_2_53)
        done += rows


def test_noise_matrix(spec: ProblemSpec, b: int, seed: int, m: int) -> np.ndarray:
    """m standard-normal rows from the group-b test stream (Monte Carlo plumbing)."""
    return np.vstack(list(iter_test_noise(spec, b, seed, m)))


def spec_hash(spec: ProblemSpec) -> str:
    """Stable 16-hex-digit digest of the full generative description."""
    mode = spec.sampling_mode
    payload = {
        "d_core": spec.d_core,
        "d_spur": spec.d_spur,
        "mu_core": [repr(float(v)) for v in spec.mu_core],
        "mu_spur": [repr(float(v)) for v in spec.mu_spur],
        "n_plus": spec.n_plus,
        "n_minus": spec.n_minus,
        "label_flip_rate": repr(float(spec.label_flip_rate)),
        "sampling_mode": (
            mode
            if isinstance(mode, str)
            else [repr(mode.pi_plus), repr(mode.p_agree_plus), repr(mode.p_agree_minus)]
        ),
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def dump_dataset(ds: Dataset, path) -> None:
    """Write the dataset as delimited text.

    One comment header line carries (n, d, seed, spec hash); each row is
    ``y a b flipped z_1 ... z_d`` with floats at 17 significant digits.
    """
    with open(path, "w") as fh:
        fh.write(
            f"# n={ds.n} d={ds.d} seed={ds.seed} spec_hash={spec_hash(ds.spec)}\n"
        )
        for s in ds.samples:
            head = f"{s.y} {s.a} {s.b} {int(s.flipped)}"
            body = " ".join(f"{v:.17g}" for v in s.z)
            fh.write(f"{head} {body}\n")


def gd_init_from_stream(spec: ProblemSpec, seed: int, scale: float) -> Classifier:
    """Random initial classifier of norm ``scale`` (helper for init studies)."""
    v = RngStream(seed, (1 << 62) + 2).normal(spec.d)
    nrm = float(np.linalg.norm(v))
    return Classifier(v * (scale / nrm) if nrm > 0 else v)
