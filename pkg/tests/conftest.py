import numpy as np
import pytest
from click.testing import CliRunner

from g2moduli import create_app
from g2moduli.controllers import families
from g2moduli.models.cone import HarmonicPair


@pytest.fixture
def app():
    """Creates the command group with a quiet logger"""
    return create_app({'LOG_LEVEL': 'WARNING', 'SEED': 0})


@pytest.fixture
def runner():
    """CLI runner for tests"""
    return CliRunner()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope='session')
def equatorial():
    """Equatorial 2-sphere at 32x16"""
    return families.equatorial_link(32, 16)


@pytest.fixture(scope='session')
def sl_torus():
    return families.sl_torus_fixture(16, 16)


@pytest.fixture(scope='session')
def traced_curve():
    """Closed orbit on the first resonant oval, twisted by pi"""
    a, seed = families.find_generic_seed(0)
    return families.trace_torus_cone(a, seed)


@pytest.fixture(scope='session')
def torus_link(traced_curve):
    return families.build_torus_link(traced_curve, 16, 48)


@pytest.fixture(scope='session')
def nuv_mesh(traced_curve):
    """N(1, 0) over the default r-ladder"""
    return families.build_nuv(traced_curve, HarmonicPair.constant(1.0, 0.0), 24, 24)
