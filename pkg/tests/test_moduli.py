import numpy as np
import pytest

from g2moduli.controllers.conops import assemble_dbar, assemble_laplacian
from g2moduli.controllers.families import sl_torus_fixture
from g2moduli.controllers.moduli import (
    critical_rates,
    expected_dimension,
    index_jump,
    index_value,
    sl_critical_rates,
    sl_expected_dimension,
    sl_report,
    sl_roots,
)
from g2moduli.controllers.spectral import solve_spectrum
from g2moduli.infra.errors import (
    AsymmetryWarning, NegativeEigenvalueError, NonGenericRateError, OddMultiplicityError, RateRangeError,
)
from g2moduli.models.spectrum import Cluster, Spectrum


def _spectrum(clusters, kind='dbar', window=(-3.0, 3.0), tol=1e-6):
    values = np.concatenate([np.full(d, beta) for beta, d in clusters]) if clusters else np.zeros(0)
    return Spectrum(values, [Cluster(beta, d) for beta, d in clusters], tol, kind, window=window)


@pytest.fixture
def rates():
    """mu = -3, -2, -1, 0, 1 with d = 8, 4, 2, 4, 8"""
    return critical_rates(_spectrum([(-2.0, 8), (-1.0, 4), (0.0, 2), (1.0, 4), (2.0, 8)]))


@pytest.fixture(scope='module')
def sphere_rates(equatorial):
    spectrum = solve_spectrum(assemble_dbar(equatorial), window=(-2.5, 2.5), seed=0)
    return critical_rates(spectrum)


def test_rates_are_shifted(rates):
    """Test of mu = beta - 1"""
    assert [(r.mu, r.d) for r in rates.rates] == [(-3.0, 8), (-2.0, 4), (-1.0, 2), (0.0, 4), (1.0, 8)]
    assert rates.trusted_interval == (-4.0, 2.0)
    assert not rates.warnings


def test_empty_spectrum():
    """Test of an empty spectrum"""
    empty = critical_rates(_spectrum([]))
    assert empty.rates == []
    assert expected_dimension(empty, 0.5).expected_dim == 0


def test_asymmetry_warning():
    """Test of the symmetry check about -1"""
    with pytest.warns(AsymmetryWarning):
        lopsided = critical_rates(_spectrum([(-1.0, 2), (1.0, 4)]))
    assert lopsided.warnings


@pytest.mark.parametrize('lam, value', [
    (-0.5, 1),
    (0.5, 5),
    (-1.5, -1),
    (-2.5, -5),
    (-3.5, -13),
])
def test_expected_dimension(rates, lam, value):
    """Test of the index continuation on both sides of -1"""
    report = expected_dimension(rates, lam)
    assert report.expected_dim == value
    assert report.d_minus_one == 2
    assert isinstance(report.expected_dim, int)


def test_labels(rates):
    """Test of the report labels"""
    assert expected_dimension(rates, 0.5).label == 'expected dimension'
    assert expected_dimension(rates, -1.5).label == 'virtual dimension (upper bound context)'


def test_below_minus_two_is_negative(rates):
    """Test of the sign of the index below -2"""
    assert expected_dimension(rates, -2.5).expected_dim < 0


@pytest.mark.parametrize('eps', [0.25, 0.5, 1.5, 2.5])
def test_antisymmetry(rates, eps):
    """Test of the index at -1 - eps against -1 + eps"""
    assert index_value(rates, -1 - eps) == -index_value(rates, -1 + eps)


def test_non_generic_rate(rates):
    """Test of rates too close to a critical rate"""
    with pytest.raises(NonGenericRateError) as info:
        expected_dimension(rates, 1e-5)
    assert info.value.exit_code == 2


def test_rate_range(rates):
    """Test of rates at or above 1 and outside the computed window"""
    with pytest.raises(RateRangeError):
        expected_dimension(rates, 1.0)
    with pytest.raises(RateRangeError):
        expected_dimension(rates, -4.5)


def test_odd_multiplicity_at_minus_one():
    """Test of the evenness requirement on d(-1)"""
    rates = critical_rates(_spectrum([(0.0, 3)]))
    with pytest.raises(OddMultiplicityError):
        expected_dimension(rates, 0.5)


def test_index_jump(rates):
    """Test of jumps against differences of the expected dimension"""
    assert index_jump(rates, 0.3, 0.3) == 0
    assert index_jump(rates, -0.5, 0.5) == 4
    for lo, hi in ((-0.5, 0.5), (-0.9, 0.9), (0.2, 0.7)):
        jump = index_jump(rates, lo, hi)
        assert jump == expected_dimension(rates, hi).expected_dim - expected_dimension(rates, lo).expected_dim
    with pytest.raises(NonGenericRateError):
        index_jump(rates, -0.5, 0.0)
    with pytest.raises(NonGenericRateError):
        index_jump(rates, 0.0, 0.0)
    with pytest.raises(RateRangeError):
        index_jump(rates, 0.5, -0.5)


def test_index_table(rates):
    """Test of the index on every interval"""
    table = expected_dimension(rates, 0.5).index_table
    assert [row['index'] for row in table] == [-13, -5, -1, 1, 5, 13]
    indices = [row['index'] for row in table]
    assert indices == sorted(indices)
    assert table[0]['interval'] == [-4.0, -3.0]


def test_report_json(rates):
    """Test of the report fields"""
    data = expected_dimension(rates, 0.5).to_dict()
    assert data['lambda'] == 0.5
    assert data['expected_dim'] == 5
    assert data['trusted_interval'] == [-4.0, 2.0]
    assert {'mu': 0.0, 'd': 4} in data['critical_rates']
    assert data['warnings'] == []


def test_sphere_rates(sphere_rates):
    """Test of the translation rate of the equatorial sphere"""
    assert sphere_rates.multiplicity(0.0) == 4
    assert sphere_rates.multiplicity(-2.0) == sphere_rates.multiplicity(0.0)


def test_sphere_dimensions(sphere_rates):
    """Test of the dimensions of the equatorial sphere"""
    assert index_jump(sphere_rates, -0.5, 0.5) >= 4
    assert expected_dimension(sphere_rates, 0.5).expected_dim >= 1
    assert expected_dimension(sphere_rates, -0.5).expected_dim == sphere_rates.multiplicity(-1.0) // 2


@pytest.mark.parametrize('e, roots', [
    (0.0, (-1.0, -2.0)),
    (2.0, (0.0, -3.0)),
    (6.0, (1.0, -4.0)),
])
def test_sl_roots(e, roots):
    """Test of the roots of (mu + 1)(mu + 2) = e"""
    np.testing.assert_allclose(sl_roots(e), roots, atol=1e-15)


@pytest.fixture
def sphere_laplacian():
    """Round sphere harmonics 0, 2, 6"""
    return _spectrum([(0.0, 1), (2.0, 3), (6.0, 5)], kind='laplacian', window=(-0.5, 6.5))


def test_sl_critical_rates(sphere_laplacian):
    """Test of the rates of the round sphere Laplacian"""
    rates = sl_critical_rates(sphere_laplacian)
    assert [(r.mu, r.d) for r in rates.rates] == [(-4.0, 5), (-3.0, 3), (-2.0, 1), (-1.0, 1), (0.0, 3), (1.0, 5)]
    assert not rates.between(-1.0, 0.0)


def test_sl_negative_eigenvalue():
    """Test of the sign check on Laplacian eigenvalues"""
    with pytest.raises(NegativeEigenvalueError):
        sl_critical_rates(_spectrum([(-0.5, 1)], kind='laplacian'))


@pytest.mark.parametrize('betti, lam, value', [
    ((1, 0, 1), -1.5, 1),
    ((1, 2, 7), -1.2, 7),
    ((1, 1, 1), -0.5, 0),
    ((1, 0, 1), -0.5, -1),
])
def test_sl_expected_dimension(sphere_laplacian, betti, lam, value):
    """Test of both special Lagrangian regimes"""
    assert sl_expected_dimension(sl_report(sphere_laplacian, betti), lam) == value


@pytest.mark.parametrize('lam', [0.0, 0.5, -2.0, -2.5])
def test_sl_rate_range(sphere_laplacian, lam):
    """Test of rates outside (-2, 0)"""
    with pytest.raises(RateRangeError):
        sl_expected_dimension(sl_report(sphere_laplacian, (1, 0, 1)), lam)


def test_sl_report(sphere_laplacian):
    """Test of the dimension table"""
    data = sl_report(sphere_laplacian, (1, 0, 1)).to_dict()
    assert data['betti'] == {'b0': 1, 'b1': 0, 'b2': 1}
    assert data['dimensions'] == [
        {'interval': [-2.0, -1.0], 'dimension': 1},
        {'interval': [-1.0, 0.0], 'dimension': -1},
    ]


def test_sl_torus_dimension():
    """Test of the Legendrian torus just above -1"""
    spectrum = solve_spectrum(assemble_laplacian(sl_torus_fixture(32, 32)), window=(-0.5, 2.5))
    slr = sl_report(spectrum, (1, 2, 1))
    assert slr.rates.multiplicity(0.0) == 6
    assert sl_expected_dimension(slr, -0.5) == 1
    assert sl_expected_dimension(slr, -1.5) == 1
