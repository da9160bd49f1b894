import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import rhomap as rm

settings.register_profile(
    "ci", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=50
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def noiseless_spec():
    return rm.PhantomSpec(
        noise_sigma=0.0,
        bias_amplitude=0.0,
        pd_contrast_gain={"air": 1.0, "muscle": 1.0, "bone": 1.0, "cartilage": 1.0},
    )


@pytest.fixture(scope="session")
def noiseless_bundle(noiseless_spec):
    return rm.generate_phantom(noiseless_spec, 0)


@pytest.fixture(scope="session")
def noisy_bundle():
    return rm.generate_phantom(rm.PhantomSpec(), 0)


def random_volume(rng, dims=(6, 5, 3), lo=0.0, hi=10.0):
    return rm.Volume3D(dims, (1.0, 1.0, 1.0), rng.uniform(lo, hi, size=dims))
