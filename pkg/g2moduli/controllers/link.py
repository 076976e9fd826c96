"""Link surfaces in S^6 and their induced geometry."""
import logging
import warnings
from typing import Callable, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from ..infra.config import Config
from ..infra.errors import DegenerateMetricError, GridDimensionError, LinkInputError, NormalityWarning
from ..infra.io import read_csv, write_csv
from ..infra.metrics import measure_time
from ..models.link import Grid, LinkSurface, NormalSection
from .g2core import cross, phi_eval

logger = logging.getLogger(__name__)

LINK_COLUMNS = ('s', 't', 'x1', 'x2', 'x3', 'x4', 'x5', 'x6', 'x7')

Parametrization = Callable[
    [NDArray[np.float64], NDArray[np.float64]],
    Union[NDArray[np.float64], Tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]],
]

# Positions closer to the unit sphere than this are ingested untouched
RENORMALIZE_THRESHOLD = 1e-14


def check_grid(grid: Grid) -> None:
    if grid.n_s < Config.MIN_GRID or grid.n_t < Config.MIN_GRID:
        raise GridDimensionError(
            f'Grid {grid.n_s}x{grid.n_t} is below the minimum of {Config.MIN_GRID} per axis',
            {'n_s': grid.n_s, 'n_t': grid.n_t, 'min': Config.MIN_GRID},
        )
    if grid.topology == 'sphere' and grid.n_s % 2:
        raise GridDimensionError('Sphere grids need an even number of longitudes', {'n_s': grid.n_s})


@measure_time('build_link')
def build_link(parametrization: Parametrization, grid: Grid, name: str = 'link', metadata=None) -> LinkSurface:
    """Samples a parametrization on a grid.

    The parametrization maps flattened (s, t) arrays to positions, or to a
    tuple (positions, dX/ds, dX/dt) when analytic tangents are known.
    """
    check_grid(grid)
    S, T = grid.coordinates()
    sample = parametrization(S, T)
    if isinstance(sample, tuple):
        position, xs, xt = (np.asarray(a, dtype=float) for a in sample)
        tangents = np.stack([xs, xt], axis=1)
    else:
        position, tangents = np.asarray(sample, dtype=float), None
    return link_from_positions(position, grid, tangents, name=name, metadata=metadata)


def link_from_positions(position: NDArray[np.float64], grid: Grid,
                        tangents: Optional[NDArray[np.float64]] = None,
                        name: str = 'link', metadata=None) -> LinkSurface:
    check_grid(grid)
    position = np.array(position, dtype=float).reshape(grid.size, 7)
    norms = np.linalg.norm(position, axis=1)
    deviation = float(np.max(np.abs(norms - 1.0)))
    if deviation > Config.UNIT_TOL:
        raise LinkInputError(
            f'Positions deviate from the unit sphere by {deviation:.3g}',
            {'max_deviation': deviation, 'tolerance': Config.UNIT_TOL},
        )
    if deviation > RENORMALIZE_THRESHOLD:
        position = position / norms[:, None]

    analytic = tangents is not None
    if not analytic:
        tangents = np.stack(
            [grid.difference_matrix(0) @ position, grid.difference_matrix(1) @ position], axis=1
        )
    tangents = np.asarray(tangents, dtype=float).reshape(grid.size, 2, 7)

    metric = np.einsum('nai,nbi->nab', tangents, tangents)
    det = np.linalg.det(metric)
    if np.min(det) < Config.IMMERSION_FLOOR:
        worst = int(np.argmin(det))
        raise DegenerateMetricError(
            'Metric determinant below the immersion floor',
            {'node': worst, 'det': float(det[worst]), 'floor': Config.IMMERSION_FLOOR},
        )

    frame_basis, _ = np.linalg.qr(np.concatenate([position[:, :, None], np.swapaxes(tangents, 1, 2)], axis=2))
    link = LinkSurface(
        grid=grid,
        position=position,
        tangents=tangents,
        metric=metric,
        area_element=np.sqrt(det),
        frame_basis=frame_basis,
        analytic_tangents=analytic,
        name=name,
        metadata=dict(metadata or {}),
    )
    logger.debug('built link %s on %dx%d %s grid', name, grid.n_s, grid.n_t, grid.topology)
    return link


def pseudoholomorphy_residual(link: LinkSurface) -> float:
    """max |omega(T1, T2) / sqrt(det h) - 1| with omega(u, v) = g(x cross u, v)"""
    omega = phi_eval(link.position, link.tangents[:, 0], link.tangents[:, 1])
    return float(np.max(np.abs(omega / link.area_element - 1.0)))


def residual_tolerance(link: LinkSurface) -> float:
    """Residual a link may carry and still count as pseudoholomorphic"""
    if link.analytic_tangents:
        return Config.PSEUDOHOLOMORPHIC_TOL
    return max(Config.PSEUDOHOLOMORPHIC_TOL, max(link.spacing) ** 2)


def project_normal(link: LinkSurface, ambient) -> NormalSection:
    values = np.asarray(ambient, dtype=float)
    if values.ndim == 1:
        values = np.broadcast_to(values, link.position.shape)
    q = link.frame_basis
    values = values - np.einsum('nia,na->ni', q, np.einsum('nia,ni->na', q, values))
    return NormalSection(values, link)


def normality_defect(link: LinkSurface, v: NormalSection) -> float:
    """Largest component of v along span(X, X_s, X_t), relative to max |v|"""
    scale = np.max(np.linalg.norm(v.values, axis=1))
    if scale == 0:
        return 0.0
    along = np.einsum('nia,ni->na', link.frame_basis, v.values)
    return float(np.max(np.abs(along)) / scale)


def j_apply(link: LinkSurface, v: NormalSection, tol: Optional[float] = None) -> NormalSection:
    """(Jv)(x) = x cross v(x)"""
    out = NormalSection(cross(link.position, v.values), link)
    tol = residual_tolerance(link) if tol is None else tol
    defect = normality_defect(link, out)
    if defect > tol:
        warnings.warn(
            f'J moved a normal section off the normal bundle (defect {defect:.3g})',
            NormalityWarning,
            stacklevel=2,
        )
    return out


def tangent_rotation(link: LinkSurface, u: NDArray[np.float64]) -> NDArray[np.float64]:
    """Rotation by +90 degrees in the oriented tangent plane.

    u holds tangent coordinates (N, 2) in the basis (X_s, X_t); the result is
    in the same basis.
    """
    hu = np.einsum('nab,nb->na', link.metric, u)
    rotated = np.stack([-hu[:, 1], hu[:, 0]], axis=1)
    return rotated / link.area_element[:, None]


def save_link(link: LinkSurface, path: str) -> str:
    S, T = link.grid.coordinates()
    metadata = {'name': link.name, 'grid': link.grid.to_dict(), **link.metadata}
    return write_csv(path, LINK_COLUMNS, np.column_stack([S, T, link.position]), metadata)


def load_link(path: str) -> LinkSurface:
    """Reads a link node table; tangents are rebuilt by finite differences"""
    metadata, columns, rows = read_csv(path)
    if tuple(columns) != LINK_COLUMNS:
        raise LinkInputError(f'Unexpected link columns in {path}', {'columns': list(columns)})
    if 'grid' not in metadata:
        raise LinkInputError(f'Link table {path} carries no grid header')
    grid = Grid.from_dict(metadata.pop('grid'))
    if rows.shape[0] != grid.size:
        raise LinkInputError(
            f'Link table has {rows.shape[0]} nodes, grid expects {grid.size}',
            {'rows': rows.shape[0], 'expected': grid.size},
        )
    name = metadata.pop('name', 'link')
    return link_from_positions(rows[:, 2:], grid, name=name, metadata=metadata)
