from dataclasses import replace

import numpy as np
import pytest

from g2moduli.controllers import families, verify
from g2moduli.controllers.g2core import basis
from g2moduli.controllers.verify import (
    ac_rate_fit,
    axis_derivative,
    chi_residual,
    dirac_n_apply,
    fd_derivatives,
    field_norm,
    linearization_check,
    normal_project,
    project_to_cone,
    random_normal_field,
    symbol_apply,
)
from g2moduli.infra.config import Config
from g2moduli.infra.errors import ConfigError, DegenerateTripleError, EmbeddingError
from g2moduli.models.cone import HarmonicPair, TangentTriple


@pytest.fixture(scope='module')
def plane():
    return families.plane_mesh((1, 2, 3), 16, 8)


def test_plane_is_associative(plane):
    """Test of the calibration residual of the plane spanned by e1, e2, e3"""
    chi = chi_residual(plane)
    assert chi.max_chi < 1e-12
    assert chi.min_phi == pytest.approx(1.0)
    assert chi.associative


def test_normalized_gram_det_per_node():
    """Test of the per-node Gram determinant of a grid of tangent triples"""
    vectors = np.zeros((4, 5, 3, 7))
    vectors[..., 0, 0] = 2.0
    vectors[..., 1, 1] = 3.0
    vectors[..., 2, 0] = 1.0
    vectors[..., 2, 2] = 1.0
    vectors[0, 0, 2] = vectors[0, 0, 0]
    det = TangentTriple(vectors).normalized_gram_det()
    assert det.shape == (4, 5)
    assert det[0, 0] == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(det.ravel()[1:], 0.5)


def test_plane_fd_tangents(plane):
    """Test of the residual with difference-quotient tangents"""
    chi = chi_residual(plane, analytic=False)
    assert chi.max_chi < 1e-12
    assert chi.associative


def test_coassociative_plane():
    """Test of the plane spanned by e1, e2, e4"""
    chi = chi_residual(families.plane_mesh((1, 2, 4), 16, 8))
    assert chi.max_chi == pytest.approx(1.0)
    assert abs(chi.min_phi) < 1e-12
    assert not chi.associative


def test_degenerate_triples(plane):
    """Test of linearly dependent tangents"""
    tangents = plane.tangents.copy()
    tangents[..., 2, :] = tangents[..., 1, :]
    with pytest.raises(DegenerateTripleError):
        chi_residual(replace(plane, tangents=tangents))


def test_nuv_is_associative(nuv_mesh):
    """Test of the calibration residual of N(1, 0)"""
    chi = chi_residual(nuv_mesh)
    assert chi.max_chi < 1e-5
    assert chi.associative
    assert len(chi.worst_node) == 3


def test_dirac_kills_translations(plane):
    """Test of the Dirac operator on a constant normal field of a plane"""
    v = np.broadcast_to(basis(5), plane.psi.shape).copy()
    assert field_norm(plane, dirac_n_apply(plane, v, plane.tangents)) < 1e-10
    assert field_norm(plane, symbol_apply(plane, v)) < 1e-10


def test_dirac_is_linear(nuv_mesh):
    """Test of linearity of the 3-fold Dirac operator"""
    u = random_normal_field(nuv_mesh, seed=1)
    w = random_normal_field(nuv_mesh, seed=2)
    combined = dirac_n_apply(nuv_mesh, 2.0 * u - w)
    separate = 2.0 * dirac_n_apply(nuv_mesh, u) - dirac_n_apply(nuv_mesh, w)
    np.testing.assert_allclose(combined, separate, atol=1e-10 * np.abs(separate).max())


def test_periodic_axis_derivative_is_spectral():
    """Test of the Fourier derivative on a periodic axis and the second-order one otherwise"""
    s = 2 * np.pi * np.arange(16) / 16
    values = np.stack([np.sin(3 * s), np.cos(s)], axis=1)
    derivative = axis_derivative(values, 0, s[1], periodic=True)
    np.testing.assert_allclose(derivative, np.stack([3 * np.cos(3 * s), -np.sin(s)], axis=1), atol=1e-12)
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(axis_derivative(x ** 2, 0, x[1], periodic=False), 2 * x, atol=1e-12)


def test_random_field_is_normal(nuv_mesh):
    """Test of the normal projection of random fields"""
    v = random_normal_field(nuv_mesh, seed=0)
    tangents = fd_derivatives(nuv_mesh, nuv_mesh.psi)
    along = np.einsum('...ai,...i->...a', tangents, v)
    assert np.abs(along).max() < 1e-8 * np.abs(tangents).max() * np.abs(v).max()
    np.testing.assert_allclose(normal_project(tangents, v), v, atol=1e-12 * np.abs(v).max())


def test_linearization_is_first_order(nuv_mesh):
    """Test of the error of the deformation quotient under halving t"""
    field = random_normal_field(nuv_mesh, seed=0)
    report = linearization_check(nuv_mesh, 1e-2 * field / np.max(np.abs(field)))
    assert report['t'] == [1e-2, 5e-3, 2.5e-3]
    assert len(report['ratios']) == 2
    for ratio in report['ratios']:
        assert 0.4 < ratio < 0.6
    assert report['dirac_norm'] > 0


def test_linearization_of_zero(nuv_mesh):
    """Test of the deformation quotient for v = 0"""
    report = linearization_check(nuv_mesh, np.zeros_like(nuv_mesh.psi))
    assert report['error'] == [0.0, 0.0, 0.0]
    assert report['dirac_norm'] == 0.0


def test_linearization_collapse(plane):
    """Test of a displacement that folds the tangent triples"""
    with pytest.raises(EmbeddingError):
        linearization_check(plane, -100.0 * plane.psi)


def test_nuv_rate(nuv_mesh):
    """Test of the decay rate of N(1, 0) towards its cone"""
    fit = ac_rate_fit(nuv_mesh)
    assert fit.status == 'fitted'
    assert fit.lambda_hat == pytest.approx(nuv_mesh.claimed_rate, abs=0.15)
    assert len(fit.sup_distance) == len(nuv_mesh.r)
    assert np.all(np.diff(fit.sup_distance) < 0)


def test_cone_has_no_rate(traced_curve):
    """Test of the fit on an exact cone"""
    fit = ac_rate_fit(families.cone_mesh(traced_curve, 12, 12))
    assert fit.lambda_hat is None
    assert fit.status == 'distance below floor, rate undefined'


def test_translated_plane_rate():
    """Test of the constant distance of a translated plane"""
    mesh = families.plane_mesh((1, 2, 3), 16, 8, offset=basis(4))
    fit = ac_rate_fit(mesh)
    assert fit.lambda_hat == pytest.approx(0.0, abs=0.05)
    np.testing.assert_allclose(fit.sup_distance, 1.0, atol=1e-9)


def test_rate_fit_needs_a_decade(traced_curve):
    """Test of the r-ladder span check"""
    mesh = families.build_nuv(traced_curve, HarmonicPair.constant(1.0, 0.0), 12, 12, rladder='5:40:4')
    with pytest.raises(ConfigError):
        ac_rate_fit(mesh)


def test_rate_fit_pool_is_capped_by_threads(monkeypatch):
    """Test of the THREADS cap on the r-level projection pool"""
    sizes = []

    class RecordingPool(verify.ThreadPoolExecutor):
        def __init__(self, max_workers=None, **kwargs):
            sizes.append(max_workers)
            super().__init__(max_workers=max_workers, **kwargs)

    monkeypatch.setattr(verify, 'ThreadPoolExecutor', RecordingPool)
    monkeypatch.setattr(Config, 'THREADS', 3)
    fit = ac_rate_fit(families.plane_mesh((1, 2, 3), 16, 8, offset=basis(4)))
    assert sizes == [3]
    np.testing.assert_allclose(fit.sup_distance, 1.0, atol=1e-9)
    monkeypatch.setattr(Config, 'THREADS', 0)
    ac_rate_fit(families.plane_mesh((1, 2, 3), 16, 8, offset=basis(4)))
    assert sizes == [3, 1]


def test_project_to_cone():
    """Test of the nearest-point projection from perturbed starting values"""
    chart = families.PlaneChart((1, 2, 3))
    s = np.linspace(0.1, 6.0, 9)
    t = np.linspace(-1.2, 1.2, 9)
    x, _, _ = chart.link_point(s, t)
    points = 7.0 * x
    nearest, iterations = project_to_cone(chart, points, s + 0.05, t - 0.05)
    np.testing.assert_allclose(nearest, points, atol=1e-9)
    assert iterations >= 1
