import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vslab.data_gen import Dataset, sample_dataset
from vslab.model_core import ProblemSpec, Sample, build_nu


def make_spec(d_core=2, d_spur=2, mu_core=(1.0, 0.0), mu_spur=(0.5, 0.0),
              n_plus=6, n_minus=2, xi=0.0) -> ProblemSpec:
    return ProblemSpec(
        d_core=d_core, d_spur=d_spur,
        mu_core=np.asarray(mu_core, dtype=float),
        mu_spur=np.asarray(mu_spur, dtype=float),
        n_plus=n_plus, n_minus=n_minus, label_flip_rate=xi,
    )


def manual_dataset(spec: ProblemSpec, z_rows, b_tags, seed=0) -> Dataset:
    """Dataset with hand-picked signed samples (bypasses the sampler)."""
    nu_plus, nu_minus = build_nu(spec)
    samples = tuple(
        Sample(z=np.asarray(z, dtype=float), b=int(b), y=1, a=int(b))
        for z, b in zip(z_rows, b_tags)
    )
    return Dataset(samples=samples, nu_plus=nu_plus, nu_minus=nu_minus,
                   spec=spec, seed=seed)


@pytest.fixture
def small_dataset():
    spec = make_spec(d_core=20, d_spur=20, mu_core=(2.0,) + (0.0,) * 19,
                     mu_spur=(1.0,) + (0.0,) * 19, n_plus=6, n_minus=2)
    return sample_dataset(spec, seed=7)
