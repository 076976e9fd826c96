import warnings

import numpy as np
import pytest

from g2moduli.controllers.families import equatorial_link, great_sphere, great_sphere_link, sl_torus_fixture
from g2moduli.controllers.g2core import basis, cross
from g2moduli.controllers.link import (
    build_link,
    j_apply,
    link_from_positions,
    load_link,
    normality_defect,
    project_normal,
    pseudoholomorphy_residual,
    save_link,
    tangent_rotation,
)
from g2moduli.infra.errors import DegenerateMetricError, GridDimensionError, LinkInputError, NormalityWarning
from g2moduli.models.link import Grid, NormalSection, sphere_grid, torus_grid


def test_equatorial_area():
    """Test of the area of the equatorial sphere"""
    link = equatorial_link(64, 32)
    assert abs(link.total_area() - 4 * np.pi) / (4 * np.pi) < 1e-3
    np.testing.assert_allclose(np.linalg.norm(link.position, axis=1), 1.0, atol=1e-12)


def test_area_converges_at_second_order():
    """Test of the area error under grid refinement"""
    coarse = abs(equatorial_link(16, 8).total_area() - 4 * np.pi)
    fine = abs(equatorial_link(32, 16).total_area() - 4 * np.pi)
    assert coarse / fine > 3.5


def test_sl_torus_metric_is_constant():
    """Test of the flatness of the Legendrian torus"""
    link = sl_torus_fixture(16, 16)
    assert np.max(np.abs(link.metric - link.metric[0])) < 1e-10
    np.testing.assert_allclose(link.metric[0], np.array([[2.0, 1.0], [1.0, 2.0]]) / 3, atol=1e-14)


def test_undersized_grid():
    """Test of the grid dimension check"""
    with pytest.raises(GridDimensionError):
        equatorial_link(4, 4)


def test_odd_sphere_longitudes():
    """Test of the even-longitude requirement on sphere grids"""
    with pytest.raises(GridDimensionError):
        equatorial_link(15, 8)


def test_positions_off_the_sphere():
    """Test of the unit-norm check on ingest"""
    grid = torus_grid(8, 8)
    with pytest.raises(LinkInputError):
        link_from_positions(np.full((64, 7), 0.5), grid)


def test_small_deviation_is_renormalized():
    """Test of renormalization of nearly unit positions"""
    link = sl_torus_fixture(8, 8)
    moved = link_from_positions(link.position * (1 + 1e-10), link.grid)
    np.testing.assert_allclose(np.linalg.norm(moved.position, axis=1), 1.0, atol=1e-15)


def test_degenerate_metric():
    """Test of the immersion floor"""
    grid = torus_grid(8, 8)
    with pytest.raises(DegenerateMetricError):
        link_from_positions(np.tile(basis(1), (64, 1)), grid)


@pytest.mark.parametrize('factory, bound', [
    (lambda: equatorial_link(32, 16), 1e-10),
    (lambda: sl_torus_fixture(16, 16), 1e-8),
])
def test_pseudoholomorphic_links(factory, bound):
    """Test of the pseudoholomorphy residual of associative cone links"""
    assert pseudoholomorphy_residual(factory()) < bound


def test_non_associative_sphere():
    """Test of the residual of the great sphere in <e1, e2, e4>"""
    assert pseudoholomorphy_residual(great_sphere_link((1, 2, 4), 32, 16)) >= 0.5


def test_finite_difference_residual_refines():
    """Test of second-order convergence of the residual with difference tangents.

    The longitude is reparametrized non-uniformly, so chords are not parallel
    to the tangents and the residual stays clear of round-off.
    """
    sphere = great_sphere(basis(1), basis(2), basis(3))
    residuals = []
    for n_s, n_t in ((16, 8), (32, 16)):
        grid = sphere_grid(n_s, n_t)
        s, t = grid.coordinates()
        position, _, _ = sphere(s + 0.3 * np.sin(s), t)
        residuals.append(pseudoholomorphy_residual(link_from_positions(position, grid)))
    assert residuals[1] > 1e-8
    assert residuals[0] / residuals[1] >= 3


def test_project_normal_examples(equatorial):
    """Test of normal projection of constant, radial and tangent fields"""
    e4 = project_normal(equatorial, basis(4))
    np.testing.assert_allclose(e4.values, np.tile(basis(4), (equatorial.n_nodes, 1)), atol=1e-14)
    assert np.max(np.abs(project_normal(equatorial, equatorial.position).values)) < 1e-14
    assert np.max(np.abs(project_normal(equatorial, equatorial.tangents[:, 0]).values)) < 1e-14


def test_project_normal_is_idempotent(equatorial, rng):
    """Test of idempotence of the normal projection"""
    once = project_normal(equatorial, rng.standard_normal((equatorial.n_nodes, 7)))
    twice = project_normal(equatorial, once.values)
    np.testing.assert_allclose(twice.values, once.values, atol=1e-14)


def test_j_at_a_node():
    """Test of J e4 at the node e3 of a rotated equatorial chart"""
    link = equatorial_link(32, 17, chart=1)
    node = link.grid.node(8, 8)
    np.testing.assert_allclose(link.position[node], basis(3), atol=1e-15)
    jv = j_apply(link, project_normal(link, basis(4)))
    np.testing.assert_allclose(jv.values[node], -basis(7), atol=1e-14)


def test_j_squares_to_minus_one(sl_torus, rng):
    """Test of J(Jv) = -v on normal sections"""
    v = project_normal(sl_torus, rng.standard_normal((sl_torus.n_nodes, 7)))
    jv = j_apply(sl_torus, v)
    np.testing.assert_allclose(j_apply(sl_torus, jv).values, -v.values, atol=1e-12)
    assert normality_defect(sl_torus, jv) < 1e-8
    zero = j_apply(sl_torus, NormalSection(np.zeros_like(v.values), sl_torus))
    assert not zero.values.any()


def test_j_warns_off_pseudoholomorphic_links(rng):
    """Test of the normality warning on a non-associative link"""
    link = great_sphere_link((1, 2, 4), 16, 8)
    v = project_normal(link, rng.standard_normal((link.n_nodes, 7)))
    with pytest.warns(NormalityWarning):
        j_apply(link, v)


def test_tangent_rotation_matches_j(equatorial):
    """Test of the tangent rotation against J on a pseudoholomorphic link"""
    u = np.tile([1.0, 0.0], (equatorial.n_nodes, 1))
    rotated = tangent_rotation(equatorial, u)
    ambient = np.einsum('na,nai->ni', rotated, equatorial.tangents)
    np.testing.assert_allclose(ambient, cross(equatorial.position, equatorial.tangents[:, 0]), atol=1e-12)


def test_save_and_load(tmp_path, sl_torus):
    """Test of the link node table"""
    path = save_link(sl_torus, str(tmp_path / 'link.csv'))
    loaded = load_link(path)
    assert loaded.grid == sl_torus.grid
    np.testing.assert_array_equal(loaded.position, sl_torus.position)
    assert not loaded.analytic_tangents


def test_load_rejects_other_tables(tmp_path):
    """Test of column validation on load"""
    path = tmp_path / 'bad.csv'
    path.write_text('a,b\n1,2\n')
    with pytest.raises(LinkInputError):
        load_link(str(path))


def test_build_link_without_tangents():
    """Test of difference tangents for position-only parametrizations"""
    def parametrization(s, t):
        return np.stack([np.cos(t) * np.cos(s), np.cos(t) * np.sin(s), np.sin(t)] + [0 * s] * 4, axis=-1)

    link = build_link(parametrization, sphere_grid(32, 16))
    assert not link.analytic_tangents
    assert pseudoholomorphy_residual(link) < 0.05


def test_grid_neighbours_cross_the_pole():
    """Test of the across-pole neighbours of a sphere grid"""
    grid = sphere_grid(8, 8)
    fwd, bwd = grid.neighbours(1)
    assert fwd[grid.node(0, 7)] == grid.node(4, 7)
    assert bwd[grid.node(1, 0)] == grid.node(5, 0)
    strip = Grid(8, 8, 'strip')
    fwd, bwd = strip.neighbours(1)
    assert fwd[strip.node(0, 7)] == -1 and bwd[strip.node(0, 0)] == -1
