from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

TOPOLOGIES = ('torus', 'sphere', 'strip')


def fourier_derivative(n: int, h: float) -> NDArray[np.float64]:
    """Dense derivative matrix of the trigonometric interpolant on n periodic nodes"""
    k = 2 * np.pi * np.fft.fftfreq(n, d=h)
    if n % 2 == 0:
        k[n // 2] = 0.0
    return np.real(np.fft.ifft(1j * k[:, None] * np.fft.fft(np.eye(n), axis=0), axis=0))


@dataclass(frozen=True)
class Grid:
    """Rectangular (s, t) parameter lattice.

    Nodes are flattened s-major: node = i_s * n_t + i_t. Periodic axes are
    sampled at s0 + i*h, bounded axes at cell centres t0 + (j + 1/2)*h. On a
    sphere the t axis runs pole to pole and its stencils continue across the
    pole onto the meridian at s + pi.
    """
    n_s: int
    n_t: int
    topology: str = 'torus'
    s_range: Tuple[float, float] = (0.0, 2 * np.pi)
    t_range: Tuple[float, float] = (0.0, 2 * np.pi)

    @property
    def size(self) -> int:
        return self.n_s * self.n_t

    @property
    def periodic_t(self) -> bool:
        return self.topology == 'torus'

    @property
    def h_s(self) -> float:
        return (self.s_range[1] - self.s_range[0]) / self.n_s

    @property
    def h_t(self) -> float:
        return (self.t_range[1] - self.t_range[0]) / self.n_t

    @property
    def spacing(self) -> Tuple[float, float]:
        return self.h_s, self.h_t

    def axes(self) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        s = self.s_range[0] + self.h_s * np.arange(self.n_s)
        offset = 0.0 if self.periodic_t else 0.5
        t = self.t_range[0] + self.h_t * (np.arange(self.n_t) + offset)
        return s, t

    def coordinates(self) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Flattened (s, t) of every node"""
        s, t = self.axes()
        S, T = np.meshgrid(s, t, indexing='ij')
        return S.ravel(), T.ravel()

    def node(self, i_s, i_t):
        return np.asarray(i_s) * self.n_t + np.asarray(i_t)

    def neighbours(self, axis: int) -> Tuple[NDArray[np.int64], NDArray[np.int64]]:
        """Forward/backward neighbour of every node along an axis, -1 where none"""
        i_s, i_t = np.divmod(np.arange(self.size), self.n_t)
        if axis == 0:
            return self.node((i_s + 1) % self.n_s, i_t), self.node((i_s - 1) % self.n_s, i_t)
        fwd = self.node(i_s, i_t + 1)
        bwd = self.node(i_s, i_t - 1)
        if self.topology == 'torus':
            return self.node(i_s, (i_t + 1) % self.n_t), self.node(i_s, (i_t - 1) % self.n_t)
        top, bottom = i_t == self.n_t - 1, i_t == 0
        if self.topology == 'sphere':
            antipodal = (i_s + self.n_s // 2) % self.n_s
            fwd = np.where(top, self.node(antipodal, i_t), fwd)
            bwd = np.where(bottom, self.node(antipodal, i_t), bwd)
        else:
            fwd = np.where(top, -1, fwd)
            bwd = np.where(bottom, -1, bwd)
        return fwd, bwd

    def difference_matrix(self, axis: int) -> sp.csr_matrix:
        """Second-order first-derivative matrix along an axis"""
        h = self.h_s if axis == 0 else self.h_t
        fwd, bwd = self.neighbours(axis)
        nodes = np.arange(self.size)
        rows, cols, vals = [], [], []
        inner = (fwd >= 0) & (bwd >= 0)
        rows += [nodes[inner], nodes[inner]]
        cols += [fwd[inner], bwd[inner]]
        vals += [np.full(inner.sum(), 0.5 / h), np.full(inner.sum(), -0.5 / h)]
        # One-sided three-point stencils at the ends of a bounded axis
        start = bwd < 0
        if start.any():
            n1 = fwd[start]
            n2 = fwd[n1]
            rows += [nodes[start]] * 3
            cols += [nodes[start], n1, n2]
            vals += [np.full(start.sum(), c / h) for c in (-1.5, 2.0, -0.5)]
        end = fwd < 0
        if end.any():
            n1 = bwd[end]
            n2 = bwd[n1]
            rows += [nodes[end]] * 3
            cols += [nodes[end], n1, n2]
            vals += [np.full(end.sum(), c / h) for c in (1.5, -2.0, 0.5)]
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.size, self.size),
        )

    def spectral_difference_matrix(self, axis: int) -> sp.csr_matrix:
        """Fourier first-derivative matrix along an axis.

        Periodic axes use the trigonometric interpolant on their own nodes.
        On a sphere the meridian through s and the one through s + pi form
        one great circle of 2 n_t equispaced nodes, which carries the t
        derivative across both poles. Strip ends keep difference_matrix.
        """
        if axis == 0:
            d = fourier_derivative(self.n_s, self.h_s)
            return sp.kron(d, sp.identity(self.n_t), format='csr')
        if self.topology == 'torus':
            return sp.kron(sp.identity(self.n_s), fourier_derivative(self.n_t, self.h_t), format='csr')
        if self.topology != 'sphere':
            return self.difference_matrix(axis)
        circle = fourier_derivative(2 * self.n_t, self.h_t)
        near = circle[:self.n_t, :self.n_t]
        # doubled-circle node n_t + k is node n_t - 1 - k of the antipodal meridian
        far = circle[:self.n_t, self.n_t:][:, ::-1]
        antipodal = sp.csr_matrix(np.roll(np.eye(self.n_s), self.n_s // 2, axis=1))
        return (sp.kron(sp.identity(self.n_s), near) + sp.kron(antipodal, far)).tocsr()

    def second_difference_matrix(self, axis: int) -> sp.csr_matrix:
        """Undivided (1, -2, 1) differences; zero rows at the ends of a bounded axis"""
        fwd, bwd = self.neighbours(axis)
        nodes = np.arange(self.size)
        inner = (fwd >= 0) & (bwd >= 0)
        rows = np.concatenate([nodes[inner]] * 3)
        cols = np.concatenate([fwd[inner], nodes[inner], bwd[inner]])
        vals = np.concatenate([np.ones(inner.sum()), np.full(inner.sum(), -2.0), np.ones(inner.sum())])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.size, self.size))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_s': self.n_s,
            'n_t': self.n_t,
            'topology': self.topology,
            's_range': list(self.s_range),
            't_range': list(self.t_range),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Grid':
        return cls(
            n_s=int(data['n_s']),
            n_t=int(data['n_t']),
            topology=data.get('topology', 'torus'),
            s_range=tuple(data.get('s_range', (0.0, 2 * np.pi))),
            t_range=tuple(data.get('t_range', (0.0, 2 * np.pi))),
        )


def sphere_grid(n_s: int, n_t: int) -> Grid:
    """Longitude/latitude lattice with the poles excluded"""
    return Grid(n_s, n_t, 'sphere', (0.0, 2 * np.pi), (-np.pi / 2, np.pi / 2))


def torus_grid(n_s: int, n_t: int, period_t: float = 2 * np.pi) -> Grid:
    return Grid(n_s, n_t, 'torus', (0.0, 2 * np.pi), (0.0, period_t))


@dataclass
class LinkSurface:
    """Immersed surface in S^6 sampled on a Grid.

    Ambient arrays are (N, 7); tangents are (N, 2, 7) holding dX/ds, dX/dt.
    normal_basis is an orthonormal basis of span(X, X_s, X_t) per node.
    """
    grid: Grid
    position: NDArray[np.float64]
    tangents: NDArray[np.float64]
    metric: NDArray[np.float64]
    area_element: NDArray[np.float64]
    frame_basis: NDArray[np.float64]
    analytic_tangents: bool = False
    name: str = 'link'
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.grid.size

    @property
    def spacing(self) -> Tuple[float, float]:
        return self.grid.spacing

    @property
    def metric_inverse(self) -> NDArray[np.float64]:
        return np.linalg.inv(self.metric)

    @property
    def cell_area(self) -> NDArray[np.float64]:
        """Quadrature weight of every node"""
        return self.area_element * self.grid.h_s * self.grid.h_t

    def total_area(self) -> float:
        return float(self.cell_area.sum())

    def projector(self) -> NDArray[np.float64]:
        """Orthogonal projectors onto the normal spaces, (N, 7, 7)"""
        q = self.frame_basis
        return np.eye(7) - np.einsum('nia,nja->nij', q, q)


@dataclass
class NormalSection:
    """Ambient 7-vector per node of a LinkSurface or mesh"""
    values: NDArray[np.float64]
    domain: Any = None

    def __add__(self, other: 'NormalSection') -> 'NormalSection':
        return NormalSection(self.values + other.values, self.domain)

    def __mul__(self, c: float) -> 'NormalSection':
        return NormalSection(c * self.values, self.domain)

    __rmul__ = __mul__

    def norm(self, weights: Optional[NDArray[np.float64]] = None) -> float:
        sq = np.einsum('...i,...i->...', self.values, self.values)
        if weights is None:
            return float(np.sqrt(sq.sum()))
        return float(np.sqrt((weights * sq).sum()))


@dataclass
class OneFormSection:
    """Normal-valued 1-form evaluated on the tangent basis: (N, 2, 7)"""
    values: NDArray[np.float64]
    domain: Any = None
