"""Eigenvalues and multiplicity clusters of assembled link operators.

Operators with a symmetric stiffness are solved as the generalized problem
K w = beta M w, densely for small problems and otherwise by shift-invert
Lanczos solves swept across the window. Eigenvalues stay in the operator's
own coordinates (beta = mu + 1 for dbar).
"""
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.typing import NDArray

from ..infra.config import Config
from ..infra.errors import ConfigError, PairingWarning, SpectrumConvergenceError, SpuriousComplexWarning
from ..infra.io import write_csv, write_json
from ..infra.metrics import measure_time
from ..models.operator import DiscreteOperator
from ..models.spectrum import Cluster, Spectrum
from .conops import J_BLOCK, anticommutation_defect

logger = logging.getLogger(__name__)

SPECTRUM_COLUMNS = ('beta', 'multiplicity')
# Keeps shifts off exactly representable eigenvalues such as integer beta
SHIFT_OFFSET = 1e-3 / np.sqrt(2)


def cluster_groups(values: Iterable[float], tol: float) -> List[NDArray[np.int64]]:
    """Indices of values grouped by sorted gaps; a gap larger than tol starts a new group"""
    if tol <= 0:
        raise ConfigError('Cluster tolerance must be positive', {'tol': tol})
    values = np.asarray(list(values), dtype=float)
    if not len(values):
        return []
    order = np.argsort(values, kind='stable')
    breaks = np.where(np.diff(values[order]) > tol)[0] + 1
    return np.split(order, breaks)


def cluster_eigenvalues(values: Iterable[float], tol: float) -> List[Cluster]:
    """Greedy sorted-gap clustering; a gap larger than tol starts a new cluster"""
    values = np.asarray(list(values), dtype=float)
    return [Cluster(float(np.mean(values[g])), len(g)) for g in cluster_groups(values, tol)]


def symmetrize_pairs(values: NDArray[np.float64], tol: float) -> Tuple[NDArray[np.float64], int]:
    """Replaces each (beta, ~-beta) pair by (+b, -b) with b their mean modulus.

    Values are paired in order of increasing |beta| with the nearest unmatched
    value within tol of -beta. Returns the new values and the number of
    values left without a partner.
    """
    values = np.array(values, dtype=float)
    order = np.argsort(np.abs(values), kind='stable')
    matched = np.zeros(len(values), dtype=bool)
    unpaired = 0
    for i in order:
        if matched[i]:
            continue
        candidates = np.where(~matched & (np.arange(len(values)) != i))[0]
        if len(candidates):
            j = candidates[np.argmin(np.abs(values[candidates] + values[i]))]
            if abs(values[j] + values[i]) <= tol:
                b = 0.5 * (abs(values[i]) + abs(values[j]))
                values[i], values[j] = np.copysign(b, values[i]), np.copysign(b, values[j])
                if values[i] == values[j]:
                    values[i], values[j] = b, -b
                matched[i] = matched[j] = True
                continue
        matched[i] = True
        unpaired += 1
    return values, unpaired


def _second_differences(op: DiscreteOperator, vectors: NDArray[np.float64]):
    """Ambient values (N*7, k) of coordinate columns and their (1,-2,1) differences over both axes, / 4"""
    grid = op.link.grid
    k = vectors.shape[1]
    if op.fiber_dim > 1:
        ambient = np.einsum('nia,nak->nik', op.frames, vectors.reshape(grid.size, op.fiber_dim, k))
        ambient = ambient.reshape(grid.size, -1)
    else:
        ambient = vectors
    diffs = [(grid.second_difference_matrix(axis) @ ambient).reshape(-1, k) for axis in (0, 1)]
    return ambient.reshape(-1, k), np.concatenate(diffs) / 4


def roughness(op: DiscreteOperator, vectors: NDArray[np.float64]) -> NDArray[np.float64]:
    """Grid-scale oscillation of each column, 0 smooth to about 1 checkerboard.

    Measured on ambient values as |(1,-2,1) differences over both axes| / (4 |v|).
    """
    ambient, diffs = _second_differences(op, np.real(vectors))
    norm = np.linalg.norm(ambient, axis=0)
    return np.divide(np.linalg.norm(diffs, axis=0), norm, out=np.zeros_like(norm), where=norm > 0)


def smooth_basis(op: DiscreteOperator, vectors: NDArray[np.float64],
                 j: Optional[sp.csr_matrix] = None) -> NDArray[np.float64]:
    """Columns spanning the part of span(vectors) whose roughness stays under ROUGHNESS_MAX.

    The roughness quadratic form is diagonalized on the whole span, so a
    cluster keeps exactly the dimension of its smooth part. With j the form
    is averaged over v and J v; J-related eigenspaces then keep equal smooth
    dimensions and a J-invariant eigenspace keeps an even one.
    """
    ambient, diffs = _second_differences(op, vectors)
    form = diffs.T @ diffs
    if j is not None:
        _, turned = _second_differences(op, j @ vectors)
        form = 0.5 * (form + turned.T @ turned)
    level, coeff = la.eigh(form, ambient.T @ ambient)
    smooth = np.sqrt(np.clip(level, 0.0, None)) <= Config.ROUGHNESS_MAX
    return vectors @ coeff[:, smooth]


def default_tolerance(op: DiscreteOperator, seed: int = 0) -> float:
    """Cluster tolerance tied to the measured discretization quality"""
    if op.kind == 'dbar':
        defect = op.diagnostics.get('anticommutation_defect')
        if defect is None:
            defect = anticommutation_defect(op, Config.DEFECT_SAMPLES, seed)
        return min(max(Config.CLUSTER_TOL_FLOOR, 10 * defect), Config.CLUSTER_TOL_MAX)
    if op.kind == 'laplacian':
        return max(Config.CLUSTER_TOL_FLOOR, max(op.link.spacing) ** 2)
    return Config.CLUSTER_TOL_FLOOR


def parse_window(text: str) -> Tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(':'))
    except ValueError:
        raise ConfigError(f'Window must read lo:hi, got {text!r}')
    if not lo < hi:
        raise ConfigError(f'Empty window {text!r}', {'lo': lo, 'hi': hi})
    return lo, hi


def _dense_eigs(op: DiscreteOperator, vectors: bool):
    if op.stiffness is not None:
        return la.eigh(op.stiffness.toarray(), np.diag(op.mass))
    if vectors:
        return la.eig(op.matrix.toarray())
    return la.eigvals(op.matrix.toarray()), None


def _shift_invert(op: DiscreteOperator, shift: float, count: int, seed: int):
    """The count eigenpairs nearest shift"""
    n = op.shape[0]
    count = min(count, n - 2)
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        if op.stiffness is not None:
            return spla.eigsh(op.stiffness.tocsc(), k=count, M=sp.diags(op.mass).tocsc(), sigma=shift,
                              which='LM', v0=v0, maxiter=Config.ARNOLDI_MAXITER)
        a = op.matrix.tocsc()
        lu = spla.splu((a - shift * sp.identity(n, format='csc')).tocsc())
        inverse = spla.LinearOperator(dtype=float, shape=a.shape, matvec=lu.solve)
        vals, vecs = spla.eigs(inverse, k=count, which='LM', v0=v0, maxiter=Config.ARNOLDI_MAXITER)
    except spla.ArpackNoConvergence as e:
        raise SpectrumConvergenceError(
            'Shift-invert Arnoldi did not converge',
            {'converged': len(e.eigenvalues), 'requested': count, 'maxiter': Config.ARNOLDI_MAXITER,
             'shift': shift},
        )
    return 1.0 / vals + shift, vecs


def _cut_above(values: NDArray[np.float64], floor: float, tol: float) -> Optional[float]:
    """Midpoint of the highest gap wider than tol between sorted values above floor"""
    above = np.sort(values[values > floor])
    gaps = np.where(np.diff(above) > tol)[0]
    if not len(gaps):
        return None
    i = gaps[-1]
    return 0.5 * (above[i] + above[i + 1])


def _sweep_window(op: DiscreteOperator, lo: float, hi: float, count: int, tol: float, seed: int):
    """Eigenpairs with lo < beta <= hi from shift-invert solves moving upward.

    A solve at shift c returns the count values nearest c, so every value
    within their largest distance R of c is known except possibly the
    outermost cluster. Each solve hands over at a gap wider than tol, which
    keeps clusters whole, and the next shift sits at that gap.
    """
    values, vectors = [], []
    covered, shift = lo, lo + SHIFT_OFFSET
    for solve in range(Config.ARNOLDI_MAX_SHIFTS):
        vals, vecs = _shift_invert(op, shift, count, seed)
        vals = vals.real
        dist = np.abs(vals - shift)
        reach = dist.max()
        if shift - reach > covered:
            raise SpectrumConvergenceError(
                'Shift-invert solves left part of the window uncovered',
                {'shift': shift, 'reach': float(reach), 'covered': covered, 'count': count},
            )
        if shift + reach - tol > hi:
            take = (vals > covered) & (vals <= hi)
            values.append(vals[take])
            vectors.append(vecs[:, take])
            return np.concatenate(values), np.concatenate(vectors, axis=1), solve + 1
        cut = _cut_above(vals, covered, tol)
        if cut is None:
            raise SpectrumConvergenceError(
                'One cluster fills a shift-invert solve; raise G2MODULI_ARNOLDI_COUNT',
                {'shift': shift, 'count': count},
            )
        take = (vals > covered) & (vals <= cut)
        values.append(vals[take])
        vectors.append(vecs[:, take])
        covered, shift = cut, cut + SHIFT_OFFSET
    raise SpectrumConvergenceError(
        'Window not covered within the shift budget',
        {'window': [lo, hi], 'covered': covered, 'shifts': Config.ARNOLDI_MAX_SHIFTS},
    )


def _as_real(vecs: NDArray) -> NDArray[np.float64]:
    return vecs if np.isrealobj(vecs) else _real_fields(vecs)


@measure_time('solve_spectrum')
def solve_spectrum(op: DiscreteOperator, window: Optional[Tuple[float, float]] = None,
                   count: Optional[int] = None, tol: Optional[float] = None,
                   seed: Optional[int] = None, keep_fields: bool = False) -> Spectrum:
    """Eigenvalues with real part in the window (or the count nearest zero), clustered.

    Values are collected on the window widened by tol and a cluster is kept
    when its centre lies in the window, so edge clusters stay whole. For
    first-order link operators each cluster keeps the dimension of the
    smooth part of its eigenspace.
    """
    if op.shape[0] != op.shape[1]:
        raise ConfigError('Operator matrix is not square', {'shape': list(op.shape)})
    seed = Config.SEED if seed is None else seed
    if window is None and count is None:
        window = parse_window(Config.WINDOW)
    tol = default_tolerance(op, seed) if tol is None else tol
    if tol <= 0:
        raise ConfigError('Tolerance must be positive', {'tol': tol})

    first_order = op.fiber_dim > 1 and op.link is not None and op.frames is not None
    need_vectors = keep_fields or first_order
    n = op.shape[0]
    diagnostics = {'dof': n}
    if n <= Config.DENSE_MAX_DOF:
        method = 'dense'
        vals, vecs = _dense_eigs(op, need_vectors)
    elif window is None:
        method = 'arnoldi'
        vals, vecs = _shift_invert(op, SHIFT_OFFSET, max(count, Config.ARNOLDI_COUNT), seed)
        diagnostics['shifts'] = 1
    else:
        method = 'arnoldi'
        vals, vecs, diagnostics['shifts'] = _sweep_window(op, window[0] - tol, window[1] + tol,
                                                          Config.ARNOLDI_COUNT, tol, seed)

    if window is not None:
        keep = (vals.real >= window[0] - tol) & (vals.real <= window[1] + tol)
    else:
        keep = np.zeros(len(vals), dtype=bool)
        keep[np.argsort(np.abs(vals))[:count]] = True
    vals = vals[keep]
    vecs = vecs[:, keep] if vecs is not None else None
    diagnostics['computed'] = int(keep.sum())

    notes: List[str] = []
    imag = np.abs(vals.imag)
    diagnostics['max_imag'] = float(imag.max()) if len(imag) else 0.0
    spurious = int((imag > tol).sum())
    if spurious:
        message = f'{spurious} eigenvalues keep imaginary parts above {tol:.3g}'
        warnings.warn(message, SpuriousComplexWarning, stacklevel=2)
        notes.append(message)

    order = np.argsort(vals.real, kind='stable')
    beta = vals.real[order]
    if vecs is not None:
        vecs = vecs[:, order]
    if op.kind == 'dbar':
        beta, unpaired = symmetrize_pairs(beta, tol)
        inside = np.ones(len(beta), dtype=bool)
        if window is not None:
            # Partners of values near the window edge may fall outside it
            inside = (-beta >= window[0] + tol) & (-beta <= window[1] - tol)
        _, unpaired_inside = symmetrize_pairs(beta[inside], tol)
        diagnostics['unpaired'] = unpaired_inside
        if unpaired_inside:
            message = f'{unpaired_inside} eigenvalues found no partner at -beta within {tol:.3g}'
            warnings.warn(message, PairingWarning, stacklevel=2)
            notes.append(message)

    groups = cluster_groups(beta, tol)
    if window is not None:
        groups = [g for g in groups if window[0] <= np.mean(beta[g]) <= window[1]]
    j = sp.block_diag([J_BLOCK] * (n // 4), format='csr') if op.kind == 'dbar' else None
    clusters: List[Cluster] = []
    values: List[NDArray[np.float64]] = []
    fields: Optional[List[NDArray[np.float64]]] = [] if keep_fields and vecs is not None else None
    dropped = 0
    for g in groups:
        center = float(np.mean(beta[g]))
        if first_order and vecs is not None:
            basis = smooth_basis(op, _as_real(vecs[:, g]), j)
            dropped += len(g) - basis.shape[1]
            if not basis.shape[1]:
                continue
            values.append(np.full(basis.shape[1], center))
        else:
            basis = None if vecs is None else _as_real(vecs[:, g])
            values.append(beta[g])
        clusters.append(Cluster(center, len(values[-1])))
        if fields is not None:
            fields.append(_real_fields(basis))
    if first_order:
        diagnostics['filtered_grid_scale'] = dropped
    beta = np.concatenate(values) if values else np.empty(0)

    spectrum = Spectrum(
        eigenvalues=beta,
        clusters=clusters,
        tol=tol,
        operator_kind=op.kind,
        window=window,
        method=method,
        eigenfields=fields,
        diagnostics={**op.diagnostics, **diagnostics},
        warnings=notes,
    )
    logger.info('%s spectrum (%s): %d eigenvalues in %d clusters, tol %.3g',
                op.kind, method, len(beta), len(clusters), tol)
    return spectrum


def _real_fields(vecs: NDArray[np.complex128]) -> NDArray[np.float64]:
    """Real representatives of (real-eigenvalue) eigenvectors, one per column"""
    out = np.empty(vecs.shape)
    for k in range(vecs.shape[1]):
        w = vecs[:, k]
        # Rotate the phase so the real part carries the vector
        w = w * np.exp(-1j * np.angle(w[np.argmax(np.abs(w))]))
        out[:, k] = w.real / np.linalg.norm(w.real)
    return out


def j_pairing_defect(spectrum: Spectrum, op: DiscreteOperator) -> float:
    """max |R(J w) + beta| over stored eigenfields w, R the Rayleigh quotient of op"""
    if spectrum.eigenfields is None:
        raise ConfigError('Spectrum was solved without eigenfields')
    j = sp.block_diag([J_BLOCK] * (op.shape[0] // 4), format='csr')
    worst = 0.0
    for cluster, fields in zip(spectrum.clusters, spectrum.eigenfields):
        for w in fields.T:
            jw = j @ w
            quotient = op.inner(jw, op.matrix @ jw) / op.inner(jw, jw)
            worst = max(worst, abs(quotient + cluster.center))
    return worst


def solve_many(ops: Sequence[DiscreteOperator], **kwargs) -> List[Spectrum]:
    """Independent solves on a worker pool capped by THREADS"""
    with ThreadPoolExecutor(max_workers=max(1, Config.THREADS)) as pool:
        return list(pool.map(lambda op: solve_spectrum(op, **kwargs), ops))


def save_spectrum(spectrum: Spectrum, csv_path: str, json_path: Optional[str] = None) -> List[str]:
    rows = np.array([[c.center, c.multiplicity] for c in spectrum.clusters]).reshape(-1, 2)
    paths = [write_csv(csv_path, SPECTRUM_COLUMNS, rows)]
    if json_path:
        paths.append(write_json(json_path, spectrum))
    return paths
