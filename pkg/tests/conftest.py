import numpy as np
import pytest

from cwlaser import params


@pytest.fixture(scope="session")
def fig1():
    """Two-section reference device (DFB + passive), eta=0.3, phi=0."""
    return params.fig1_like()


@pytest.fixture(scope="session")
def fig1_critical():
    """Frozen reference values for the critical point of the fig1 device.

    Established by the continuation search and cross-checked against the
    time-domain modal fit; used as regression anchors.
    """
    return {
        "n": np.array([1.0286005742440363, 1.0]),
        "omega": -4.660558838991335,
        "xi": 0.05267618355961705,
    }


def simple_section(**kw):
    """Single section with nontrivial but tame coefficients."""
    defaults = dict(length=1.0, kappa=1.5, d=0.4 + 0.1j, alpha_h=2.0,
                    gain_slope=1.2, rho=params.Affine(0.3, 0.05),
                    gamma=params.Affine(50.0, 2.0),
                    omega_r=params.Affine(-5.0, 1.0),
                    current=5e-3, lifetime=100.0)
    defaults.update(kw)
    return params.SectionParams(**defaults)
