import numpy as np
import pytest
import scipy.sparse as sp

from g2moduli.controllers.conops import J_BLOCK, assemble_dbar, assemble_laplacian
from g2moduli.controllers.families import equatorial_link
from g2moduli.controllers.g2core import basis
from g2moduli.controllers.link import project_normal
from g2moduli.controllers.spectral import (
    cluster_eigenvalues,
    default_tolerance,
    j_pairing_defect,
    parse_window,
    roughness,
    save_spectrum,
    smooth_basis,
    solve_many,
    solve_spectrum,
    symmetrize_pairs,
)
from g2moduli.infra.config import Config
from g2moduli.infra.errors import ConfigError, SpectrumConvergenceError, SpuriousComplexWarning
from g2moduli.infra.io import read_csv, read_json
from g2moduli.models.operator import DiscreteOperator
from g2moduli.models.spectrum import Cluster


def _diagonal(values, kind='J'):
    n = len(values)
    return DiscreteOperator(kind, sp.diags(np.asarray(values, dtype=float)).tocsr(), np.ones(n), 1)


@pytest.fixture(scope='module')
def sphere_dbar(equatorial):
    return assemble_dbar(equatorial)


@pytest.fixture(scope='module')
def sphere_spectrum(sphere_dbar):
    return solve_spectrum(sphere_dbar, window=(-2.5, 2.5), seed=0, keep_fields=True)


def test_cluster_examples():
    """Test of greedy gap clustering"""
    assert cluster_eigenvalues([0.999, 1.001, 2.0], 0.01) == [Cluster(1.0, 2), Cluster(2.0, 1)]
    assert cluster_eigenvalues([], 0.1) == []
    assert cluster_eigenvalues([0.0, 1e-9, -1e-9], 1e-6) == [Cluster(0.0, 3)]


def test_cluster_is_permutation_stable(rng):
    """Test of clustering under shuffled input"""
    values = np.concatenate([np.full(3, 1.0), np.full(2, -0.5), [4.0]]) + 1e-8 * rng.standard_normal(6)
    first = cluster_eigenvalues(values, 1e-4)
    second = cluster_eigenvalues(rng.permutation(values), 1e-4)
    assert [c.multiplicity for c in first] == [c.multiplicity for c in second] == [2, 3, 1]
    np.testing.assert_allclose([c.center for c in first], [c.center for c in second], atol=1e-15)


def test_cluster_needs_positive_tolerance():
    """Test of the tolerance check"""
    with pytest.raises(ConfigError):
        cluster_eigenvalues([1.0], 0.0)


def test_symmetrize_pairs():
    """Test of pairing beta with -beta"""
    values, unpaired = symmetrize_pairs(np.array([-1.01, 0.99, 3.0]), 0.05)
    np.testing.assert_allclose(values, [-1.0, 1.0, 3.0])
    assert unpaired == 1


def test_symmetrize_zero_pairs():
    """Test of pairing near zero"""
    values, unpaired = symmetrize_pairs(np.array([1e-9, -3e-9]), 1e-6)
    assert unpaired == 0
    assert values[0] == -values[1]


def test_parse_window():
    """Test of window parsing"""
    assert parse_window('-3:3') == (-3.0, 3.0)
    with pytest.raises(ConfigError):
        parse_window('3:-3')
    with pytest.raises(ConfigError):
        parse_window('wide')


def test_diagonal_spectrum():
    """Test of a diagonal matrix"""
    spectrum = solve_spectrum(_diagonal([1.0, 1.0, 2.0]), window=(0.0, 3.0), tol=1e-6)
    assert spectrum.clusters == [Cluster(1.0, 2), Cluster(2.0, 1)]
    assert spectrum.total_multiplicity == len(spectrum.eigenvalues) == 3
    assert spectrum.method == 'dense'


def test_window_and_count():
    """Test of eigenvalue selection by window and by count"""
    op = _diagonal([-4.0, -1.0, 0.5, 2.0, 7.0])
    assert list(solve_spectrum(op, window=(-2.0, 3.0), tol=1e-6).eigenvalues) == [-1.0, 0.5, 2.0]
    assert list(solve_spectrum(op, count=2, tol=1e-6).eigenvalues) == [-1.0, 0.5]


def test_spurious_complex_pair():
    """Test of the warning on eigenvalues far from the real axis"""
    rotation = sp.csr_matrix(np.array([[0.0, -1.0], [1.0, 0.0]]))
    op = DiscreteOperator('J', rotation, np.ones(2), 1)
    with pytest.warns(SpuriousComplexWarning):
        spectrum = solve_spectrum(op, window=(-1.0, 1.0), tol=1e-6)
    assert spectrum.warnings
    assert spectrum.diagnostics['max_imag'] == pytest.approx(1.0)


def test_empty_operator_window():
    """Test of a window with nothing in it"""
    spectrum = solve_spectrum(_diagonal([5.0, 6.0]), window=(-1.0, 1.0), tol=1e-6)
    assert spectrum.clusters == []
    assert spectrum.to_dict()['clusters'] == []


def test_not_square():
    """Test of the shape check"""
    op = DiscreteOperator('J', sp.csr_matrix(np.ones((2, 3))), np.ones(2), 1)
    with pytest.raises(ConfigError):
        solve_spectrum(op, window=(-1.0, 1.0), tol=1e-6)


def test_sphere_translation_cluster():
    """Test of the beta = 1 cluster of the equatorial sphere at 48x24"""
    sphere_spectrum = solve_spectrum(assemble_dbar(equatorial_link(48, 24)), window=(0.5, 1.5), seed=0)
    assert sphere_spectrum.multiplicity_near(1.0) >= 4
    assert sphere_spectrum.operator_kind == 'dbar'


def test_sphere_spectrum_is_symmetric(sphere_spectrum):
    """Test of the beta -> -beta symmetry of the cluster list"""
    tol = sphere_spectrum.tol
    for cluster in sphere_spectrum.clusters:
        if abs(cluster.center) < 2.5 - 2 * tol:
            assert sphere_spectrum.multiplicity_near(-cluster.center) == cluster.multiplicity


def test_zero_cluster_is_even(sphere_spectrum):
    """Test of the parity of the zero cluster"""
    assert sphere_spectrum.multiplicity_near(0.0) % 2 == 0


def test_sphere_spectrum_matches_harmonics(sphere_spectrum):
    """Test of the sphere clusters at beta = +-(k + 1)"""
    values = sphere_spectrum.eigenvalues
    for beta, multiplicity in ((1.0, 4), (2.0, 8)):
        for sign in (1, -1):
            assert np.sum(np.abs(values - sign * beta) < 0.25) == multiplicity


def test_j_pairing(sphere_spectrum, sphere_dbar):
    """Test of the Rayleigh quotient of J applied to eigenfields"""
    assert j_pairing_defect(sphere_spectrum, sphere_dbar) < 10 * sphere_spectrum.tol


def test_j_pairing_needs_fields(sphere_dbar):
    """Test of the eigenfield requirement"""
    spectrum = solve_spectrum(sphere_dbar, window=(0.5, 1.5), seed=0)
    with pytest.raises(ConfigError):
        j_pairing_defect(spectrum, sphere_dbar)


def test_default_tolerance(sphere_dbar):
    """Test of the tolerance derived from the anticommutation defect"""
    tol = default_tolerance(sphere_dbar)
    defect = sphere_dbar.diagnostics['anticommutation_defect']
    assert tol == min(max(Config.CLUSTER_TOL_FLOOR, 10 * defect), Config.CLUSTER_TOL_MAX)


def test_rotated_charts_agree():
    """Test of dbar eigenvalues on two charts of the same sphere"""
    spectra = [solve_spectrum(assemble_dbar(equatorial_link(32, 16, chart=c)), window=(0.5, 1.5), seed=0)
               for c in (0, 1)]
    assert spectra[0].multiplicity_near(1.0) == spectra[1].multiplicity_near(1.0) >= 4


def test_solve_is_deterministic(sphere_dbar):
    """Test of repeated solves"""
    first = solve_spectrum(sphere_dbar, window=(-1.5, 1.5), seed=3)
    second = solve_spectrum(sphere_dbar, window=(-1.5, 1.5), seed=3)
    np.testing.assert_array_equal(first.eigenvalues, second.eigenvalues)


def test_grid_refinement_is_cauchy():
    """Test of the beta = 2 cluster under grid refinement"""
    centers = []
    for n in (16, 32):
        spectrum = solve_spectrum(assemble_dbar(equatorial_link(2 * n, n)), window=(1.5, 2.5), seed=0)
        centers.append(float(np.mean(spectrum.eigenvalues)))
    assert abs(centers[0] - centers[1]) < 0.1


def test_arnoldi_path(monkeypatch):
    """Test of the shift-invert path against the dense one"""
    op = assemble_laplacian(equatorial_link(32, 16))
    dense = solve_spectrum(op, window=(-0.5, 2.5))
    monkeypatch.setattr(Config, 'DENSE_MAX_DOF', 10)
    arnoldi = solve_spectrum(op, window=(-0.5, 2.5))
    assert arnoldi.method == 'arnoldi'
    np.testing.assert_allclose(arnoldi.eigenvalues, dense.eigenvalues, atol=1e-8)


def test_solve_many(equatorial, sl_torus):
    """Test of concurrent solves"""
    ops = [assemble_laplacian(equatorial), assemble_laplacian(sl_torus)]
    spectra = solve_many(ops, window=(-0.5, 1.0))
    assert [s.operator_kind for s in spectra] == ['laplacian', 'laplacian']
    assert all(s.multiplicity_near(0.0) == 1 for s in spectra)


def test_save_spectrum(tmp_path):
    """Test of the CSV and JSON outputs"""
    spectrum = solve_spectrum(_diagonal([1.0, 1.0, 2.0]), window=(0.0, 3.0), tol=1e-6)
    csv_path, json_path = save_spectrum(spectrum, str(tmp_path / 'spectrum.csv'), str(tmp_path / 'spectrum.json'))
    _, columns, rows = read_csv(csv_path)
    assert list(columns) == ['beta', 'multiplicity']
    np.testing.assert_allclose(rows, [[1.0, 2.0], [2.0, 1.0]])
    data = read_json(json_path)
    assert data['clusters'] == [{'beta': 1.0, 'multiplicity': 2}, {'beta': 2.0, 'multiplicity': 1}]


def _checkerboard(link, w):
    i, j = np.meshgrid(np.arange(link.grid.n_s), np.arange(link.grid.n_t), indexing='ij')
    sign = np.where((i + j).ravel() % 2, -1.0, 1.0)
    return (w.reshape(-1, 4) * sign[:, None]).ravel()


def test_roughness_separates_grid_scale_fields(equatorial, sphere_dbar):
    """Test of the roughness of a translation field and its checkerboard"""
    smooth = sphere_dbar.to_coords(project_normal(equatorial, basis(4)).values)
    rough = roughness(sphere_dbar, np.column_stack([smooth, _checkerboard(equatorial, smooth)]))
    assert rough[0] < 0.05
    assert rough[1] > 0.5


def test_smooth_basis_drops_the_checkerboard(equatorial, sphere_dbar):
    """Test of the smooth part of a span with and without J averaging"""
    smooth = sphere_dbar.to_coords(project_normal(equatorial, basis(4)).values)
    checker = _checkerboard(equatorial, smooth)
    kept = smooth_basis(sphere_dbar, np.column_stack([smooth + checker, smooth - checker]))
    assert kept.shape[1] == 1
    cosine = abs(kept[:, 0] @ smooth) / (np.linalg.norm(kept[:, 0]) * np.linalg.norm(smooth))
    assert cosine == pytest.approx(1.0, abs=1e-10)

    j = sp.block_diag([J_BLOCK] * equatorial.n_nodes, format='csr')
    span = np.column_stack([smooth, j @ smooth, checker, j @ checker])
    assert smooth_basis(sphere_dbar, span, j).shape[1] == 2


def test_first_order_clusters_report_filtered_vectors(sphere_spectrum):
    """Test of the cluster bookkeeping after the smoothness filter"""
    assert sphere_spectrum.diagnostics['filtered_grid_scale'] >= 0
    for cluster in sphere_spectrum.clusters:
        assert cluster.multiplicity > 0
    assert sphere_spectrum.total_multiplicity == len(sphere_spectrum.eigenvalues)


def test_dbar_shift_sweep_matches_dense(monkeypatch):
    """Test of the shift-invert sweep on dbar against the dense solve"""
    op = assemble_dbar(equatorial_link(16, 8))
    dense = solve_spectrum(op, window=(-2.5, 2.5), seed=0)
    monkeypatch.setattr(Config, 'DENSE_MAX_DOF', 10)
    monkeypatch.setattr(Config, 'ARNOLDI_COUNT', 24)
    swept = solve_spectrum(op, window=(-2.5, 2.5), seed=0)
    assert swept.method == 'arnoldi'
    assert swept.diagnostics['shifts'] >= 2
    assert [c.multiplicity for c in swept.clusters] == [c.multiplicity for c in dense.clusters]
    np.testing.assert_allclose([c.center for c in swept.clusters], [c.center for c in dense.clusters], atol=1e-8)


def test_shift_sweep_covers_the_window(monkeypatch):
    """Test of a window much wider than one shift-invert solve"""
    values = 0.5 * np.arange(-12.0, 13.0)
    monkeypatch.setattr(Config, 'DENSE_MAX_DOF', 5)
    monkeypatch.setattr(Config, 'ARNOLDI_COUNT', 6)
    spectrum = solve_spectrum(_diagonal(values), window=(-4.0, 4.0), tol=1e-6)
    assert spectrum.diagnostics['shifts'] >= 3
    np.testing.assert_allclose(spectrum.eigenvalues, values[np.abs(values) <= 4.0], atol=1e-10)


def test_shift_sweep_budget(monkeypatch):
    """Test of the error when the shift budget runs out"""
    monkeypatch.setattr(Config, 'DENSE_MAX_DOF', 5)
    monkeypatch.setattr(Config, 'ARNOLDI_COUNT', 6)
    monkeypatch.setattr(Config, 'ARNOLDI_MAX_SHIFTS', 1)
    with pytest.raises(SpectrumConvergenceError):
        solve_spectrum(_diagonal(0.5 * np.arange(-12.0, 13.0)), window=(-4.0, 4.0), tol=1e-6)
