"""Link operators: zeta contraction, the Dirac operator, dbar and the Laplacian.

Derivatives of normal-valued objects are taken on their ambient R^7 values
and projected back to the normal bundle; the per-node frames only serve as
a linear-algebra basis for the assembled matrices.
"""
import logging
from typing import Optional

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from ..infra.config import Config
from ..infra.errors import NonPseudoholomorphicError
from ..infra.io import write_csv
from ..infra.metrics import measure_time
from ..models.link import LinkSurface, NormalSection, OneFormSection
from ..models.operator import DiscreteOperator
from .g2core import chi_eval, chi_middle_matrix, cross, cross_matrix
from .link import project_normal, pseudoholomorphy_residual, residual_tolerance

logger = logging.getLogger(__name__)

FIBER_DIM = 4
# Frame representation of J: n2 = J n1, n4 = J n3
J_BLOCK = np.array([
    [0.0, -1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, -1.0],
    [0.0, 0.0, 1.0, 0.0],
])


def require_pseudoholomorphic(link: LinkSurface) -> float:
    residual = pseudoholomorphy_residual(link)
    tol = residual_tolerance(link)
    if residual > tol:
        raise NonPseudoholomorphicError(
            f'Link {link.name} is not pseudoholomorphic (residual {residual:.3g} > {tol:.3g})',
            {'residual': residual, 'tolerance': tol},
        )
    return residual


def zeta_contract(link: LinkSurface, v: NormalSection) -> OneFormSection:
    """(v . zeta)(u) = chi(x, v, u) on the tangent basis, projected to the normal bundle"""
    values = np.stack(
        [project_normal(link, chi_eval(link.position, v.values, link.tangents[:, a])).values for a in (0, 1)],
        axis=1,
    )
    return OneFormSection(values, link)


def dirac_sigma_apply(link: LinkSurface, v: NormalSection, check: bool = True) -> NormalSection:
    """Dirac operator of the link on a normal section.

    The exterior derivative of v.zeta is taken by Fourier differentiation
    of its ambient values, projected, and divided by the area element. The
    zero-order term x cross v makes the operator anticommute with J.
    """
    if check:
        require_pseudoholomorphic(link)
    alpha = zeta_contract(link, v).values
    grid = link.grid
    curl = grid.spectral_difference_matrix(0) @ alpha[:, 1] - grid.spectral_difference_matrix(1) @ alpha[:, 0]
    out = curl / link.area_element[:, None] + cross(link.position, v.values)
    return project_normal(link, out)


def _orthonormalize(x: NDArray[np.float64], basis) -> NDArray[np.float64]:
    for b in basis:
        x = x - np.einsum('ni,ni->n', x, b)[:, None] * b
    return x / np.linalg.norm(x, axis=1)[:, None]


def normal_frames(link: LinkSurface) -> NDArray[np.float64]:
    """Orthonormal frames (n1, J n1, n3, J n3) of the normal spaces, (N, 7, 4)"""
    proj = link.projector()
    nodes = np.arange(link.n_nodes)
    sigma = link.position

    k1 = np.argmax(np.einsum('nii->ni', proj), axis=1)
    n1 = _orthonormalize(proj[nodes, :, k1], [])
    n2 = _orthonormalize(np.einsum('nij,nj->ni', proj, cross(sigma, n1)), [n1])

    residual = proj - np.einsum('ni,nj->nij', n1, n1) - np.einsum('ni,nj->nij', n2, n2)
    k3 = np.argmax(np.einsum('nii->ni', residual), axis=1)
    n3 = _orthonormalize(residual[nodes, :, k3], [n1, n2])
    n4 = _orthonormalize(np.einsum('nij,nj->ni', proj, cross(sigma, n3)), [n1, n2, n3])
    return np.stack([n1, n2, n3, n4], axis=2)


def _block_matrix(n_nodes: int, rows, cols, blocks) -> sp.csr_matrix:
    r = (FIBER_DIM * rows)[:, None, None] + np.arange(FIBER_DIM)[None, :, None]
    c = (FIBER_DIM * cols)[:, None, None] + np.arange(FIBER_DIM)[None, None, :]
    size = FIBER_DIM * n_nodes
    r, c = np.broadcast_arrays(r, c)
    return sp.coo_matrix((blocks.ravel(), (r.ravel(), c.ravel())), shape=(size, size)).tocsr()


def _normal_mass(link: LinkSurface) -> NDArray[np.float64]:
    return np.repeat(link.cell_area, FIBER_DIM)


def symmetric_stiffness(matrix: sp.csr_matrix, mass: NDArray[np.float64],
                        j: Optional[sp.csr_matrix] = None) -> sp.csr_matrix:
    """M A_s for the mass-self-adjoint part A_s of A.

    With j given, A is first replaced by (A + J A J) / 2, its part that
    anticommutes with J; M commutes with J, so A_s keeps that property.
    """
    if j is not None:
        matrix = 0.5 * (matrix + j @ matrix @ j)
    k = sp.diags(mass) @ matrix
    return (0.5 * (k + k.T)).tocsr()


@measure_time('assemble_dirac')
def assemble_dirac_sigma(link: LinkSurface, frames: Optional[NDArray[np.float64]] = None,
                         check: bool = True) -> DiscreteOperator:
    if check:
        require_pseudoholomorphic(link)
    frames = normal_frames(link) if frames is None else frames
    proj = link.projector()
    sigma = link.position
    area = link.area_element

    # M_a[k] maps frame coordinates at node k to the projected ambient alpha_a
    m = [
        np.einsum('nij,njk,nkb->nib', proj, chi_middle_matrix(sigma, link.tangents[:, a]), frames)
        for a in (0, 1)
    ]
    rows, cols, blocks = [], [], []
    for axis, alpha, sign in ((0, 1, 1.0), (1, 0, -1.0)):
        d = link.grid.spectral_difference_matrix(axis).tocoo()
        scale = sign * d.data / area[d.row]
        rows.append(d.row)
        cols.append(d.col)
        blocks.append(scale[:, None, None] * np.einsum('nja,njb->nab', frames[d.row], m[alpha][d.col]))

    nodes = np.arange(link.n_nodes)
    rows.append(nodes)
    cols.append(nodes)
    blocks.append(np.einsum('nja,njk,nkb->nab', frames, cross_matrix(sigma), frames))

    matrix = _block_matrix(link.n_nodes, np.concatenate(rows), np.concatenate(cols), np.concatenate(blocks))
    mass = _normal_mass(link)
    return DiscreteOperator('dirac_sigma', matrix, mass, FIBER_DIM, link=link, frames=frames,
                            stiffness=symmetric_stiffness(matrix, mass))


def assemble_j(link: LinkSurface, frames: Optional[NDArray[np.float64]] = None) -> DiscreteOperator:
    frames = normal_frames(link) if frames is None else frames
    matrix = sp.block_diag([J_BLOCK] * link.n_nodes, format='csr')
    return DiscreteOperator('J', matrix, _normal_mass(link), FIBER_DIM, link=link, frames=frames)


@measure_time('assemble_dbar')
def assemble_dbar(link: LinkSurface, check: bool = True) -> DiscreteOperator:
    """dbar = J D as a sparse matrix over normal-frame coordinates.

    matrix is the collocation operator used by apply; stiffness holds its
    J-anticommuting, mass-self-adjoint part for the eigensolvers.
    """
    frames = normal_frames(link)
    dirac = assemble_dirac_sigma(link, frames, check=check)
    j = assemble_j(link, frames)
    matrix = (j.matrix @ dirac.matrix).tocsr()
    op = DiscreteOperator('dbar', matrix, dirac.mass, FIBER_DIM, link=link, frames=frames,
                          stiffness=symmetric_stiffness(matrix, dirac.mass, j.matrix))
    op.diagnostics['pseudoholomorphy_residual'] = pseudoholomorphy_residual(link)
    logger.info('assembled dbar on %s: %d dof, %d nonzeros', link.name, op.shape[0], op.matrix.nnz)
    return op


def smooth_random_sections(link: LinkSurface, count: int, seed: int = 0) -> NDArray[np.float64]:
    """Normal projections of random affine ambient fields b + A x, (count, N, 7)"""
    rng = np.random.default_rng(seed)
    out = np.empty((count, link.n_nodes, 7))
    for k in range(count):
        a = rng.standard_normal((7, 7))
        b = rng.standard_normal(7)
        out[k] = project_normal(link, link.position @ a.T + b).values
    return out


def anticommutation_defect(dbar: DiscreteOperator, samples: int = 100, seed: int = 0) -> float:
    """max ||(dbar J + J dbar) w|| / ||w|| over smooth random sections"""
    j = sp.block_diag([J_BLOCK] * (dbar.shape[0] // FIBER_DIM), format='csr')
    worst = 0.0
    for ambient in smooth_random_sections(dbar.link, samples, seed):
        w = dbar.to_coords(ambient)
        anti = dbar.matrix @ (j @ w) + j @ (dbar.matrix @ w)
        worst = max(worst, np.sqrt(dbar.inner(anti, anti) / dbar.inner(w, w)))
    dbar.diagnostics['anticommutation_defect'] = worst
    return worst


def dbar_symbol_apply(link: LinkSurface, v: NormalSection) -> NormalSection:
    """First-order part e1 x grad_2 - e2 x grad_1 in an oriented orthonormal tangent frame"""
    grid = link.grid
    grads = np.stack([grid.spectral_difference_matrix(axis) @ v.values for axis in (0, 1)], axis=1)
    e1 = link.tangents[:, 0] / np.linalg.norm(link.tangents[:, 0], axis=1)[:, None]
    e2 = cross(link.position, e1)
    hinv = link.metric_inverse

    def directional(e):
        # Coordinates of e in the basis (X_s, X_t)
        c = np.einsum('nab,nbi,ni->na', hinv, link.tangents, e)
        return project_normal(link, np.einsum('na,nai->ni', c, grads)).values

    out = cross(e1, directional(e2)) - cross(e2, directional(e1))
    return project_normal(link, out)


@measure_time('assemble_laplacian')
def assemble_laplacian(link: LinkSurface) -> DiscreteOperator:
    """Divergence-form Laplace-Beltrami operator, L = M^-1 K.

    K is assembled symmetric: edge fluxes with half-point coefficients for
    the diagonal metric terms (no flux across the poles of a sphere) and
    centred differences for the mixed term.
    """
    grid = link.grid
    hinv = link.metric_inverse
    mass = link.cell_area
    h_s, h_t = grid.spacing
    n = grid.size
    nodes = np.arange(n)

    rows, cols, vals = [], [], []
    for axis, weight in ((0, h_t / h_s), (1, h_s / h_t)):
        coeff = link.area_element * hinv[:, axis, axis]
        fwd, _ = grid.neighbours(axis)
        ok = fwd >= 0
        if axis == 1 and grid.topology == 'sphere':
            ok &= (nodes % grid.n_t) != grid.n_t - 1
        i, j = nodes[ok], fwd[ok]
        c = 0.5 * (coeff[i] + coeff[j]) * weight
        rows += [i, j, i, j]
        cols += [i, j, j, i]
        vals += [c, c, -c, -c]
    k = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()

    d_s, d_t = grid.difference_matrix(0), grid.difference_matrix(1)
    w = sp.diags(mass * hinv[:, 0, 1])
    mixed = d_s.T @ w @ d_t
    k = (k + mixed + mixed.T).tocsr()
    k = 0.5 * (k + k.T)

    lap = sp.diags(1.0 / mass) @ k
    lap = lap.tolil()
    lap.setdiag(0.0)
    lap = lap.tocsr()
    lap = lap - sp.diags(np.asarray(lap.sum(axis=1)).ravel())
    return DiscreteOperator('laplacian', lap.tocsr(), mass, 1, link=link, stiffness=k.tocsr())


def export_triplets(op: DiscreteOperator, path: str) -> str:
    """Writes the matrix as (row, col, value) triplets"""
    coo = op.matrix.tocoo()
    metadata = {'kind': op.kind, 'shape': list(op.shape), 'fiber_dim': op.fiber_dim, 'ordering': op.ordering}
    return write_csv(path, ('row', 'col', 'value'), np.column_stack([coo.row, coo.col, coo.data]), metadata)
