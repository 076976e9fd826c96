"""Pointwise checks on parametrized 3-folds.

Calibration residuals, the Dirac operator of a 3-fold applied by mesh
differences, the linearization test of the deformation map and the
decay-rate fit against the asymptotic cone.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from ..infra.config import Config
from ..infra.errors import ConfigError, DegenerateTripleError, EmbeddingError, ProjectionError
from ..infra.metrics import measure_time
from ..models.cone import ACThreefoldMesh, TangentTriple
from .g2core import chi_eval, cross, phi_eval

logger = logging.getLogger(__name__)

DEFAULT_T_LADDER = (1e-2, 5e-3, 2.5e-3)


def axis_derivative(values: NDArray[np.float64], axis: int, h: float, periodic: bool) -> NDArray[np.float64]:
    """Derivative along a mesh axis: Fourier on a periodic axis, second order otherwise"""
    if periodic:
        n = values.shape[axis]
        k = 2 * np.pi * np.fft.fftfreq(n, d=h)
        if n % 2 == 0:
            k[n // 2] = 0.0
        shape = [1] * values.ndim
        shape[axis] = n
        return np.real(np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(values, axis=axis), axis=axis))
    return np.gradient(values, h, axis=axis, edge_order=2)


def fd_derivatives(mesh: ACThreefoldMesh, values: NDArray[np.float64]) -> NDArray[np.float64]:
    """Derivatives of a node field (n_r, n_s, n_t, 7) along (rho, s, t), stacked on axis -2"""
    h = mesh.spacing
    periodic = (False, True, mesh.periodic_t)
    return np.stack([axis_derivative(values, a, h[a], periodic[a]) for a in range(3)], axis=-2)


def mesh_tangents(mesh: ACThreefoldMesh, analytic: bool = True) -> NDArray[np.float64]:
    if analytic and mesh.tangents is not None:
        return mesh.tangents
    return fd_derivatives(mesh, mesh.psi)


def normal_project(tangents: NDArray[np.float64], values: NDArray[np.float64]) -> NDArray[np.float64]:
    """Removes the components of values along span(tangents)"""
    q, _ = np.linalg.qr(np.swapaxes(tangents, -1, -2))
    return values - np.einsum('...ia,...a->...i', q, np.einsum('...ia,...i->...a', q, values))


def _check_triples(triple: TangentTriple) -> NDArray[np.float64]:
    ratio = triple.normalized_gram_det()
    if np.min(ratio) < Config.TRIPLE_FLOOR:
        worst = np.unravel_index(np.argmin(ratio), ratio.shape)
        raise DegenerateTripleError(
            'Tangent vectors are linearly dependent',
            {'node': [int(i) for i in worst], 'normalized_gram_det': float(ratio[worst])},
        )
    return triple.volume()


@dataclass
class ChiResidual:
    max_chi: float
    min_phi: float
    worst_node: List[int]

    @property
    def associative(self) -> bool:
        return self.min_phi > 0

    def to_dict(self) -> Dict[str, Any]:
        return {'max_chi': self.max_chi, 'min_phi': self.min_phi, 'worst_node': self.worst_node}


@measure_time('chi_residual')
def chi_residual(mesh: ACThreefoldMesh, analytic: bool = True) -> ChiResidual:
    """max |chi(T)| / vol(T) and min phi(T) / vol(T) over the mesh"""
    tangents = mesh_tangents(mesh, analytic)
    vol = _check_triples(TangentTriple(tangents))
    t1, t2, t3 = tangents[..., 0, :], tangents[..., 1, :], tangents[..., 2, :]
    chi = np.linalg.norm(chi_eval(t1, t2, t3), axis=-1) / vol
    phi = phi_eval(t1, t2, t3) / vol
    if not analytic or mesh.tangents is None:
        inner = mesh.interior_mask()
        chi, phi = np.where(inner, chi, 0.0), np.where(inner, phi, np.inf)
    worst = np.unravel_index(np.argmax(chi), chi.shape)
    return ChiResidual(float(chi.max()), float(phi.min()), [int(i) for i in worst])


def dirac_n_apply(mesh: ACThreefoldMesh, v: NDArray[np.float64],
                  tangents: Optional[NDArray[np.float64]] = None) -> NDArray[np.float64]:
    """Dirac operator of the 3-fold on a normal field.

    With T_a = d_a psi and V_a = d_a v from axis_derivative, the exterior
    derivative of v.chi evaluated on (T_1, T_2, T_3) reduces to
    chi(V_1, T_2, T_3) + chi(T_1, V_2, T_3) + chi(T_1, T_2, V_3); it is
    projected and divided by vol(T). Nodes outside interior_mask use
    one-sided stencils.
    """
    t = fd_derivatives(mesh, mesh.psi) if tangents is None else tangents
    dv = fd_derivatives(mesh, v)
    t1, t2, t3 = t[..., 0, :], t[..., 1, :], t[..., 2, :]
    d1, d2, d3 = dv[..., 0, :], dv[..., 1, :], dv[..., 2, :]
    out = chi_eval(d1, t2, t3) + chi_eval(t1, d2, t3) + chi_eval(t1, t2, d3)
    vol = _check_triples(TangentTriple(t))
    return normal_project(t, out) / vol[..., None]


def symbol_apply(mesh: ACThreefoldMesh, v: NDArray[np.float64]) -> NDArray[np.float64]:
    """e1 x grad_1 v + e2 x grad_2 v + e3 x grad_3 v in an oriented orthonormal frame"""
    t = fd_derivatives(mesh, mesh.psi)
    dv = fd_derivatives(mesh, v)
    q, r = np.linalg.qr(np.swapaxes(t, -1, -2))
    signs = np.sign(np.einsum('...aa->...a', r))
    q = q * signs[..., None, :]
    r = r * signs[..., :, None]
    # e_i = sum_a T_a (R^-1)_{ai}
    coeff = np.linalg.inv(r)
    grads = np.einsum('...ai,...aj->...ij', coeff, dv)
    out = sum(cross(q[..., :, i], grads[..., i, :]) for i in range(3))
    return normal_project(t, out)


def field_norm(mesh: ACThreefoldMesh, values: NDArray[np.float64]) -> float:
    """Euclidean norm over interior nodes"""
    return float(np.linalg.norm(values[mesh.interior_mask()]))


def random_normal_field(mesh: ACThreefoldMesh, seed: int = 0, tangents=None) -> NDArray[np.float64]:
    """Normal projection of b + A psi/|psi| for random A, b"""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((7, 7))
    b = rng.standard_normal(7)
    unit = mesh.psi / np.linalg.norm(mesh.psi, axis=-1, keepdims=True)
    t = fd_derivatives(mesh, mesh.psi) if tangents is None else tangents
    return normal_project(t, unit @ a.T + b)


@measure_time('linearization_check')
def linearization_check(mesh: ACThreefoldMesh, v: NDArray[np.float64],
                        t_ladder: Sequence[float] = DEFAULT_T_LADDER) -> Dict[str, Any]:
    """Finite-difference quotients of the deformation map against the Dirac operator.

    F(tv) evaluates chi on the tangent triples of psi + t v and pulls the
    result back with the base projection and volume; e(t) is the relative
    distance of (F(tv) - F(0)) / t from D v.
    """
    tangents = fd_derivatives(mesh, mesh.psi)
    dv = fd_derivatives(mesh, v)
    base = TangentTriple(tangents)
    vol = _check_triples(base)
    inner = mesh.interior_mask()

    def deformation(step):
        moved = tangents + step * dv
        return normal_project(tangents, chi_eval(moved[..., 0, :], moved[..., 1, :], moved[..., 2, :])) / vol[..., None]

    dirac = dirac_n_apply(mesh, v, tangents)
    scale = np.linalg.norm(dirac[inner])
    f0 = deformation(0.0)
    errors = []
    for step in t_ladder:
        shrink = TangentTriple(tangents + step * dv).volume() / vol
        if np.min(shrink[inner]) < 0.5:
            raise EmbeddingError(
                f'Displacement t={step:g} collapses tangent triples',
                {'t': step, 'min_volume_ratio': float(np.min(shrink[inner]))},
            )
        quotient = (deformation(step) - f0) / step
        gap = np.linalg.norm((quotient - dirac)[inner])
        errors.append(0.0 if gap == 0 else float(gap / scale))
    ratios = [b / a if a else 0.0 for a, b in zip(errors[:-1], errors[1:])]
    return {
        't': list(t_ladder),
        'error': errors,
        'ratios': ratios,
        'f0_norm': float(np.linalg.norm(f0[inner])),
        'dirac_norm': float(scale),
    }


@dataclass
class RateFit:
    r: NDArray[np.float64]
    sup_distance: NDArray[np.float64]
    lambda_hat: Optional[float]
    residual: float
    status: str
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'lambda_hat': self.lambda_hat,
            'status': self.status,
            'fit_residual': self.residual,
            'r': self.r,
            'sup_distance': self.sup_distance,
            'diagnostics': self.diagnostics,
        }


def project_to_cone(chart, points: NDArray[np.float64], s0: NDArray[np.float64], t0: NDArray[np.float64]):
    """Nearest cone points r' sigma(s, t): Gauss-Newton on <P, sigma(s, t)>"""
    s, t = s0.copy(), t0.copy()
    for iteration in range(Config.PROJECTION_MAX_ITER):
        sigma, sigma_s, sigma_t = chart.link_point(s, t)
        c = np.einsum('ni,ni->n', points, sigma)
        g = np.stack([np.einsum('ni,ni->n', points, sigma_s), np.einsum('ni,ni->n', points, sigma_t)], axis=1)
        basis = np.stack([sigma_s, sigma_t], axis=1)
        h = np.einsum('nai,nbi->nab', basis, basis)
        delta = np.linalg.solve(h, g[..., None])[..., 0] / c[:, None]
        s, t = s + delta[:, 0], t + delta[:, 1]
        if np.max(np.abs(delta)) < Config.PROJECTION_TOL:
            sigma, _, _ = chart.link_point(s, t)
            c = np.einsum('ni,ni->n', points, sigma)
            return c[:, None] * sigma, iteration + 1
    raise ProjectionError(
        'Nearest-point projection onto the cone did not converge',
        {'max_update': float(np.max(np.abs(delta))), 'iterations': Config.PROJECTION_MAX_ITER},
    )


@measure_time('ac_rate_fit')
def ac_rate_fit(mesh: ACThreefoldMesh, chart=None) -> RateFit:
    """Slope of log sup |psi - iota| against log r over the r-ladder.

    r-levels are projected onto the cone on a pool of THREADS workers.
    """
    chart = mesh.chart if chart is None else chart
    r = mesh.r
    if len(r) < 2 or np.log10(r[-1] / r[0]) < 1:
        raise ConfigError('The r-ladder must span at least one decade',
                          {'r_min': float(r[0]), 'r_max': float(r[-1])})
    n_r, n_s, n_t = mesh.shape
    S, T = np.meshgrid(mesh.s, mesh.t, indexing='ij')

    def level(k):
        points = mesh.psi[k].reshape(-1, 7)
        nearest, its = project_to_cone(chart, points, S.ravel(), T.ravel())
        return np.max(np.linalg.norm(points - nearest, axis=1)), its

    with ThreadPoolExecutor(max_workers=max(1, Config.THREADS)) as pool:
        levels = list(pool.map(level, range(n_r)))
    sups = np.array([sup for sup, _ in levels])
    iterations = max(its for _, its in levels)

    diagnostics = {'projection_iterations': iterations, 'floor': Config.DISTANCE_FLOOR}
    if np.all(sups / r < Config.DISTANCE_FLOOR):
        logger.info('mesh %s lies on its cone to rounding', mesh.name)
        return RateFit(r, sups, None, 0.0, 'distance below floor, rate undefined', diagnostics)
    slope, intercept = np.polyfit(np.log(r), np.log(sups), 1)
    residual = float(np.sqrt(np.mean((np.log(sups) - (slope * np.log(r) + intercept)) ** 2)))
    logger.info('rate fit on %s: %.4f (residual %.2e)', mesh.name, slope, residual)
    return RateFit(r, sups, float(slope), residual, 'fitted', diagnostics)
