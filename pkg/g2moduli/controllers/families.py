"""Concrete associative geometries.

Links: the equatorial 2-sphere, great spheres through any three basis
vectors and the flat Legendrian torus. Cones: U(1)-invariant torus cones
over closed orbits of the pseudoholomorphic flow on a level torus of four
conserved quantities. 3-folds: planes and the asymptotically conical
family N(u, v) built over a traced cone.

Ambient coordinates are ordered (x1, Re z1, Im z1, Re z2, Im z2, Re z3,
Im z3), so that R^7 = R + C^3.
"""
import logging
import warnings
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import DOP853, solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.stats import norm, qmc

from ..infra.config import Config
from ..infra.errors import (
    ConfigError,
    NewtonDivergenceError,
    NonClosureWarning,
    OpenCurveError,
    RankDeficiencyError,
)
from ..infra.io import read_csv, write_csv
from ..infra.metrics import measure_time
from ..models.cone import ACThreefoldMesh, DilationField, HarmonicPair, TorusConeCurve
from ..models.link import LinkSurface, NormalSection, sphere_grid, torus_grid
from .g2core import basis, cross
from .link import build_link, project_normal
from .verify import mesh_tangents, normal_project

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ('t', 'x1', 'z1', 're_z2', 'im_z2', 're_z3', 'im_z3')
MESH_COLUMNS = ('r', 's', 't', 'x1', 'x2', 'x3', 'x4', 'x5', 'x6', 'x7')

# Cyclic relabellings of the associative plane <e1, e2, e3>
EQUATORIAL_CHARTS = ((1, 2, 3), (2, 3, 1), (3, 1, 2))

# Sphere, a1, a3, a4; on the sphere a2 follows from them
INDEPENDENT_ROWS = [0, 1, 3, 4]
# (k, m): orbits closing after m ovals with w turned by k pi
RESONANCES = ((5, 3), (8, 5))
# Distance from the seed an orbit travels before closure is tested
LEAVE_RADIUS = 0.1
LEVEL_TOL = 1e-6
OVAL_TIME_MAX = 1e3
CR_TOL = 1e-8


def parse_rladder(text: Optional[str] = None) -> NDArray[np.float64]:
    """'R1:R2:n' -> n equally spaced values of log r on [log R1, log R2]"""
    text = Config.RLADDER if text is None else text
    try:
        r1, r2, count = text.split(':')
        r1, r2, count = float(r1), float(r2), int(count)
    except ValueError:
        raise ConfigError(f'Malformed r-ladder {text!r}, expected R1:R2:n', {'rladder': text})
    if r1 <= 0 or r2 <= r1 or count < 2:
        raise ConfigError('The r-ladder needs 0 < R1 < R2 and at least two levels',
                          {'r1': r1, 'r2': r2, 'n': count})
    return np.linspace(np.log(r1), np.log(r2), count)


# Links

def great_sphere(b1, b2, b3):
    """Unit sphere of span(b1, b2, b3), with t the latitude"""
    b1, b2, b3 = (np.asarray(b, dtype=float) for b in (b1, b2, b3))

    def parametrization(s, t):
        cs, ss = np.cos(s)[..., None], np.sin(s)[..., None]
        ct, st = np.cos(t)[..., None], np.sin(t)[..., None]
        x = ct * cs * b1 + ct * ss * b2 + st * b3
        xs = -ct * ss * b1 + ct * cs * b2
        xt = -st * cs * b1 - st * ss * b2 + ct * b3
        return x, xs, xt

    return parametrization


def great_sphere_link(indices: Sequence[int] = (1, 2, 3), n_s: int = 48, n_t: int = 24,
                      name: Optional[str] = None) -> LinkSurface:
    b1, b2, b3 = (basis(i) for i in indices)
    label = name or 'sphere<{}>'.format(','.join(f'e{i}' for i in indices))
    return build_link(great_sphere(b1, b2, b3), sphere_grid(n_s, n_t), name=label,
                      metadata={'span': list(indices)})


def equatorial_link(n_s: int = 48, n_t: int = 24, chart: int = 0) -> LinkSurface:
    """Link of the associative plane <e1, e2, e3>.

    chart picks one of the cyclic relabellings of the basis, which moves the
    poles of the latitude grid.
    """
    return great_sphere_link(EQUATORIAL_CHARTS[chart], n_s, n_t, name='equatorial')


def sl_torus_fixture(n_s: int = 64, n_t: int = 64) -> LinkSurface:
    """Flat Legendrian torus (e^{it}, e^{is}, e^{-i(s+t)}) / sqrt(3) in S^5"""
    def parametrization(s, t):
        zero = np.zeros_like(s)
        c = 1 / np.sqrt(3)
        x = c * np.stack([zero, np.cos(t), np.sin(t), np.cos(s), np.sin(s), np.cos(s + t), -np.sin(s + t)], axis=-1)
        xs = c * np.stack([zero, zero, zero, -np.sin(s), np.cos(s), -np.sin(s + t), -np.cos(s + t)], axis=-1)
        xt = c * np.stack([zero, -np.sin(t), np.cos(t), zero, zero, -np.sin(s + t), -np.cos(s + t)], axis=-1)
        return x, xs, xt

    return build_link(parametrization, torus_grid(n_s, n_t), name='sl_torus')


def translation_fields(link: LinkSurface) -> Tuple[NormalSection, ...]:
    """Normal projections of the constant fields e1 ... e7"""
    return tuple(project_normal(link, basis(i)) for i in range(1, 8))


# U(1)-invariant torus cones

def ambient_point(y: NDArray[np.float64]) -> NDArray[np.float64]:
    """(x1, z1, Re z2, Im z2, Re z3, Im z3) with z1 real -> R^7"""
    y = np.asarray(y, dtype=float)
    zero = np.zeros(y.shape[:-1] + (1,))
    return np.concatenate([y[..., :2], zero, y[..., 2:]], axis=-1)


def _split(x):
    return x[..., 0], x[..., 1] + 1j * x[..., 2], x[..., 3] + 1j * x[..., 4], x[..., 5] + 1j * x[..., 6]


def _join(x1, z1, z2, z3):
    x1, z1, z2, z3 = np.broadcast_arrays(x1, z1, z2, z3)
    return np.stack([np.real(x1), z1.real, z1.imag, z2.real, z2.imag, z3.real, z3.imag], axis=-1)


def u1_rotate(x: NDArray[np.float64], s) -> NDArray[np.float64]:
    """(x1, z1, z2, z3) -> (x1, e^{2is} z1, e^{-is} z2, e^{-is} z3)"""
    x1, z1, z2, z3 = _split(np.asarray(x, dtype=float))
    phase = np.exp(1j * np.asarray(s, dtype=float))
    return _join(x1, phase ** 2 * z1, z2 / phase, z3 / phase)


def u1_generator(x: NDArray[np.float64]) -> NDArray[np.float64]:
    """Infinitesimal U(1) action at x"""
    x1, z1, z2, z3 = _split(np.asarray(x, dtype=float))
    return _join(np.zeros_like(x1), 2j * z1, -1j * z2, -1j * z3)


def torus_invariants(y: NDArray[np.float64]) -> NDArray[np.float64]:
    """(Re z1z2z3, |z1|(x1^2+|z1|^2-1), Re z1(z2^2-z3^2), Im z1(z2^2+z3^2))"""
    x1, p, a, b, c, d = np.moveaxis(np.asarray(y, dtype=float), -1, 0)
    return np.stack([
        p * (a * c - b * d),
        np.abs(p) * (x1 ** 2 + p ** 2 - 1),
        p * (a ** 2 - b ** 2 - c ** 2 + d ** 2),
        2 * p * (a * b + c * d),
    ], axis=-1)


def torus_constraints(y: NDArray[np.float64], a: NDArray[np.float64]) -> NDArray[np.float64]:
    y = np.asarray(y, dtype=float)
    sphere = np.einsum('...i,...i->...', y, y) - 1.0
    return np.concatenate([sphere[..., None], torus_invariants(y) - a], axis=-1)


def torus_jacobian(y: NDArray[np.float64]) -> NDArray[np.float64]:
    x1, p, a, b, c, d = np.moveaxis(np.asarray(y, dtype=float), -1, 0)
    zero = np.zeros_like(x1)
    rows = [
        2 * np.stack([x1, p, a, b, c, d], axis=-1),
        np.stack([zero, a * c - b * d, p * c, -p * d, p * a, -p * b], axis=-1),
        np.stack([2 * np.abs(p) * x1, np.sign(p) * (x1 ** 2 + 3 * p ** 2 - 1), zero, zero, zero, zero], axis=-1),
        np.stack([zero, a ** 2 - b ** 2 - c ** 2 + d ** 2, 2 * p * a, -2 * p * b, -2 * p * c, 2 * p * d], axis=-1),
        np.stack([zero, 2 * (a * b + c * d), 2 * p * b, 2 * p * a, 2 * p * d, 2 * p * c], axis=-1),
    ]
    return np.stack(rows, axis=-2)


def slice_point(x: NDArray[np.float64]) -> NDArray[np.float64]:
    """R^7 -> (x1, z1, Re z2, Im z2, Re z3, Im z3), dropping Im z1"""
    return np.delete(np.asarray(x, dtype=float), 2, axis=-1)


def pseudoholomorphic_field(y: NDArray[np.float64]) -> NDArray[np.float64]:
    """x cross K(x) in slice coordinates, K the U(1) generator.

    With z1 = p real this reads x1' = 3p^2 + x1^2 - 1, p' = -2 x1 p,
    z2' = x1 z2 - 3ip conj(z3), z3' = x1 z3 + 3ip conj(z2); the flow keeps
    z1 real and conserves the four invariants.
    """
    x = ambient_point(y)
    return slice_point(cross(x, u1_generator(x)))


def _flow_rhs(t, y):
    return pseudoholomorphic_field(y)


def half_turn(y: NDArray[np.float64], twist: float = np.pi) -> NDArray[np.float64]:
    """U(1) rotation by twist of slice points; twist is a multiple of pi"""
    y = np.array(y, dtype=float)
    if int(round(twist / np.pi)) % 2:
        y[..., 2:] *= -1
    return y


def rank_ratio(y: NDArray[np.float64]) -> float:
    """sigma_4 / sigma_1 of the independent constraint rows; the level sets are 2-tori"""
    sv = np.linalg.svd(torus_jacobian(y)[..., INDEPENDENT_ROWS, :], compute_uv=False)
    return float(sv[3] / sv[0])


def _oval_rhs(t, state):
    x1, p, _ = state
    return [3 * p ** 2 + x1 ** 2 - 1, -2 * x1 * p, 3 * p]


def _upward(t, state):
    return state[0]


_upward.terminal = True
_upward.direction = 1


def oval_turning(p0: float) -> Tuple[float, float]:
    """Period and Hopf turning angle of the (x1, z1) oval through (0, p0).

    Along an oval w = (z2, z3) turns by exp(theta M) with theta' = 3p and
    M w = (-i conj(z3), i conj(z2)). The oval is symmetric under
    (x1, t) -> (-x1, -t), so both numbers are twice those of the half oval
    ending at the upward crossing of x1 = 0.
    """
    if not 0 < p0 < 1 / np.sqrt(3):
        raise ConfigError('Oval seeds need 0 < z1 < 1/sqrt(3) at x1 = 0', {'p0': p0})
    sol = solve_ivp(_oval_rhs, (0.0, OVAL_TIME_MAX), [0.0, p0, 0.0], method='DOP853',
                    events=_upward, rtol=Config.FLOW_RTOL, atol=Config.FLOW_RTOL)
    if not len(sol.t_events[0]):
        raise NewtonDivergenceError('Oval did not return to x1 = 0', {'p0': p0, 'time': OVAL_TIME_MAX})
    return 2 * float(sol.t_events[0][0]), 2 * float(sol.y_events[0][0][2])


def resonant_oval(k: int, m: int) -> Optional[float]:
    """The p0 whose oval turns w by k pi / m, so the orbit closes after m ovals"""
    target = k * np.pi / m
    p = np.linspace(0.56, 0.02, 28)
    turning = np.array([oval_turning(p0)[1] for p0 in p]) - target
    crossing = np.where(np.sign(turning[:-1]) != np.sign(turning[1:]))[0]
    if not len(crossing):
        return None
    i = crossing[0]
    return float(brentq(lambda p0: oval_turning(p0)[1] - target, p[i + 1], p[i], xtol=1e-14))


class TorusConeTracer:
    """Traces the pseudoholomorphic flow through a point of the level set of a.

    The level set of the sphere and the four invariants is a 2-torus, an
    (x1, z1) oval times a circle of w directions, and the flow of
    x cross K(x) is linear on it. The orbit closes, possibly up to the U(1)
    rotation by pi, when the turning angle of an oval is a rational
    multiple of pi.

    Options override the curve-tracing block of Config: newton_tol,
    newton_max_iter, step (first step), step_min, step_max, max_steps (solver
    steps), closure_tol, rank_tol and rtol.
    """

    def __init__(self, a, **options):
        self.a = np.asarray(a, dtype=float)
        if self.a.shape != (4,):
            raise ConfigError('The torus cone needs four constants a1..a4', {'a': self.a.tolist()})
        self.newton_tol = options.get('newton_tol', Config.NEWTON_TOL)
        self.newton_max_iter = options.get('newton_max_iter', Config.NEWTON_MAX_ITER)
        self.step = options.get('step', Config.STEP_INITIAL)
        self.step_min = options.get('step_min', Config.STEP_MIN)
        self.step_max = options.get('step_max', Config.STEP_MAX)
        self.max_steps = options.get('max_steps', Config.MAX_STEPS)
        self.closure_tol = options.get('closure_tol', Config.CLOSURE_TOL)
        self.rank_tol = options.get('rank_tol', Config.RANK_TOL)
        self.rtol = options.get('rtol', Config.FLOW_RTOL)
        self.diagnostics = {'accepted_steps': 0, 'newton_iterations': 0}
        self._check_level()

    def _check_level(self):
        """On the sphere a2 = -sqrt(4 a1^2 + a3^2 + a4^2); a2 is snapped to that value"""
        a1, a2, a3, a4 = self.a
        attained = -np.sqrt(4 * a1 ** 2 + a3 ** 2 + a4 ** 2)
        if abs(a2 - attained) > LEVEL_TOL:
            raise ConfigError(
                'Constants a are not attained on the unit sphere',
                {'a': self.a.tolist(), 'a2_attained': float(attained)},
            )
        self.a[1] = attained

    def residual(self, y):
        return torus_constraints(y, self.a)

    def correct(self, y):
        """Minimum-norm Newton onto the level set"""
        y = np.array(y, dtype=float)
        size = np.inf
        for iteration in range(self.newton_max_iter):
            g = self.residual(y)[INDEPENDENT_ROWS]
            size = float(np.max(np.abs(g)))
            if size < self.newton_tol:
                self.diagnostics['newton_iterations'] += iteration
                return y, iteration
            if not np.isfinite(size):
                break
            try:
                y = y - np.linalg.lstsq(torus_jacobian(y)[INDEPENDENT_ROWS], g, rcond=None)[0]
            except np.linalg.LinAlgError:
                break
        raise NewtonDivergenceError(
            'Newton correction did not reach the constraint variety',
            {'residual': size, 'max_iter': self.newton_max_iter},
        )

    def check_rank(self, y):
        sv = np.linalg.svd(torus_jacobian(y)[INDEPENDENT_ROWS], compute_uv=False)
        if sv[3] / sv[0] < self.rank_tol:
            raise RankDeficiencyError(
                'Constraint Jacobian is rank deficient',
                {'singular_values': sv.tolist(), 'point': np.asarray(y).tolist(), 'a': self.a.tolist()},
            )

    def _closure(self, dense, t_old, t_new, targets):
        """(time, twist, defect) when the step passes the hyperplane of a target close enough"""
        for twist, target, normal in targets:
            def height(t):
                return normal @ (dense(t) - target)
            if not height(t_old) < 0 <= height(t_new):
                continue
            hit = brentq(height, t_old, t_new, xtol=1e-15)
            defect = float(np.linalg.norm(dense(hit) - target))
            if defect < self.closure_tol:
                return hit, twist, defect
        return None

    def trace(self, seed) -> TorusConeCurve:
        y0, _ = self.correct(np.asarray(seed, dtype=float))
        self.check_rank(y0)
        targets = []
        for twist in (0.0, np.pi):
            target = half_turn(y0, twist)
            field = pseudoholomorphic_field(target)
            targets.append((twist, target, field / np.linalg.norm(field)))
        solver = DOP853(_flow_rhs, 0.0, y0, np.inf, max_step=self.step_max, first_step=self.step,
                        rtol=self.rtol, atol=self.rtol)
        times, points = [0.0], [y0]
        left = False
        for _ in range(self.max_steps):
            solver.step()
            if solver.status == 'failed' or solver.step_size < self.step_min:
                raise NewtonDivergenceError(
                    'Flow step fell below the minimum',
                    {'step': solver.step_size, 'step_min': self.step_min, 'samples': len(points)},
                )
            self.diagnostics['accepted_steps'] += 1
            if left:
                closure = self._closure(solver.dense_output(), solver.t_old, solver.t, targets)
                if closure is not None:
                    period, twist, defect = closure
                    target = half_turn(y0, twist)
                    return self._curve(points + [target], times + [period], True, defect, period, twist,
                                       solver.nfev)
            left = left or np.linalg.norm(solver.y - y0) > LEAVE_RADIUS
            times.append(solver.t)
            points.append(self.correct(solver.y)[0])
        return self._curve(points, times, False, float(np.linalg.norm(points[-1] - y0)), None, 0.0,
                           solver.nfev)

    def _curve(self, points, times, closed, defect, period, twist, nfev) -> TorusConeCurve:
        samples = np.array(points)
        diagnostics = dict(self.diagnostics)
        diagnostics['max_residual'] = float(np.max(np.abs(self.residual(samples))))
        diagnostics['step_max'] = self.step_max
        diagnostics['rhs_evaluations'] = nfev
        return TorusConeCurve(
            a=self.a.copy(),
            samples=samples,
            t=np.array(times),
            closed=closed,
            closure_defect=defect,
            period=period,
            twist=twist,
            diagnostics=diagnostics,
        )


@measure_time('trace_torus_cone')
def trace_torus_cone(a, seed, **options) -> TorusConeCurve:
    """Traces the orbit of the Newton-corrected seed until it closes.

    An open result is retried once with twice the step budget before a
    NonClosureWarning is issued.
    """
    curve = TorusConeTracer(a, **options).trace(seed)
    if not curve.closed:
        retry = dict(options)
        retry['max_steps'] = 2 * options.get('max_steps', Config.MAX_STEPS)
        logger.info('orbit for a=%s did not close, retrying with %d steps', curve.a, retry['max_steps'])
        curve = TorusConeTracer(a, **retry).trace(seed)
    if not curve.closed:
        warnings.warn(
            f'Constraint curve did not close (defect {curve.closure_defect:.3g})',
            NonClosureWarning,
            stacklevel=2,
        )
    else:
        logger.info('traced closed curve: %d samples, period %.6f, twist %.3f, defect %.2e',
                    curve.n_samples, curve.period, curve.twist, curve.closure_defect)
    return curve


def _sphere_samples(seed: Optional[int]) -> NDArray[np.float64]:
    """128 scrambled Sobol points pushed onto the unit sphere of R^6"""
    sampler = qmc.Sobol(d=6, scramble=True, seed=Config.SEED if seed is None else seed)
    points = norm.ppf(np.clip(sampler.random_base2(m=7), 1e-12, 1 - 1e-12))
    return points / np.linalg.norm(points, axis=1, keepdims=True)


def find_generic_seed(seed: Optional[int] = None, rank_tol: Optional[float] = None,
                      resonances: Sequence[Tuple[int, int]] = RESONANCES) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Constants a and a point on their level set whose orbit closes.

    The point sits at x1 = 0 on a resonant oval; the w direction is the
    first Sobol point on S^5 giving a full-rank Jacobian. Its own
    invariants are returned as a.
    """
    rank_tol = Config.RANK_TOL if rank_tol is None else rank_tol
    for k, m in resonances:
        p0 = resonant_oval(k, m)
        if p0 is None:
            continue
        for sample in _sphere_samples(seed):
            direction = sample[2:] / np.linalg.norm(sample[2:])
            y = np.concatenate([[0.0, p0], np.sqrt(1 - p0 ** 2) * direction])
            if rank_ratio(y) < 1e3 * rank_tol:
                continue
            logger.debug('seed on the (%d, %d) resonant oval, z1 = %.12f', k, m, p0)
            return torus_invariants(y), y
    raise RankDeficiencyError('No full-rank resonant seed among the sampled points',
                              {'seed': seed, 'resonances': [list(r) for r in resonances]})


def find_seed_point(a, seed: Optional[int] = None, **options) -> NDArray[np.float64]:
    """A full-rank point on the level set of a, Newton-corrected from Sobol points"""
    tracer = TorusConeTracer(a, **options)
    for y in _sphere_samples(seed):
        y = y.copy()
        y[1] = abs(y[1])
        try:
            y, _ = tracer.correct(y)
            tracer.check_rank(y)
        except (NewtonDivergenceError, RankDeficiencyError):
            continue
        return y
    raise NewtonDivergenceError(
        'No sampled point converged onto a full-rank part of the level set',
        {'a': tracer.a.tolist(), 'seed': seed},
    )


def _curve_flow(curve: TorusConeCurve):
    if curve._flow is None:
        curve._flow = solve_ivp(_flow_rhs, (0.0, curve.period), curve.samples[0], method='DOP853',
                                max_step=Config.STEP_MAX, rtol=Config.FLOW_RTOL, atol=Config.FLOW_RTOL,
                                dense_output=True).sol
    return curve._flow


def evaluate_curve(curve: TorusConeCurve, t) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Points and flow derivatives of a closed curve at flow times t.

    Times past the period continue through the U(1) rotation by the twist.
    """
    if not curve.closed:
        raise OpenCurveError('Curve evaluation needs a closed curve', {'closure_defect': curve.closure_defect})
    t = np.asarray(t, dtype=float)
    flat = t.ravel()
    turns = np.floor(flat / curve.period)
    y = _curve_flow(curve)(np.clip(flat - turns * curve.period, 0.0, curve.period)).T
    flip = np.mod(np.round(turns * curve.twist / np.pi), 2) == 1
    y[flip, 2:] *= -1
    return y.reshape(t.shape + (6,)), pseudoholomorphic_field(y).reshape(t.shape + (6,))


class TorusConeChart:
    """Link of the cone over the U(1)-orbit of a closed constraint curve.

    X(s, t) = U(1)_{s + twist t / period} y(t) closes up in t.
    """

    def __init__(self, curve: TorusConeCurve):
        if not curve.closed:
            raise OpenCurveError('The torus link needs a closed curve',
                                 {'closure_defect': curve.closure_defect})
        self.curve = curve

    @property
    def period(self) -> float:
        return self.curve.period

    @property
    def twist(self) -> float:
        return self.curve.twist

    def angle(self, s, t):
        return s + self.twist / self.period * t

    def link_point(self, s, t):
        s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
        y, dy = evaluate_curve(self.curve, t)
        angle = self.angle(s, t)
        x = u1_rotate(ambient_point(y), angle)
        xs = u1_generator(x)
        return x, xs, u1_rotate(ambient_point(dy), angle) + self.twist / self.period * xs


class PlaneChart:
    """Link of the plane spanned by three basis vectors"""

    def __init__(self, indices: Sequence[int] = (1, 2, 3)):
        self.indices = tuple(indices)
        self._sphere = great_sphere(*(basis(i) for i in self.indices))

    def link_point(self, s, t):
        s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
        return self._sphere(s, t)


@measure_time('build_torus_link')
def build_torus_link(curve: TorusConeCurve, n_s: int = 16, n_t: int = 48) -> LinkSurface:
    chart = TorusConeChart(curve)
    return build_link(
        chart.link_point,
        torus_grid(n_s, n_t, chart.period),
        name='torus_cone',
        metadata={'a': chart.curve.a.tolist(), 'period': chart.period, 'twist': chart.twist},
    )


# Asymptotically conical 3-folds

def cauchy_riemann_residual(hp: HarmonicPair, s, t) -> float:
    """max |u_s - v_t| + max |u_t + v_s|"""
    _, _, u_s, u_t, v_s, v_t = hp(s, t)
    return float(np.max(np.abs(u_s - v_t)) + np.max(np.abs(u_t + v_s)))


def conformal_shift(chart: TorusConeChart, t) -> Tuple[NDArray[np.float64], ...]:
    """Conformal coordinates (s + f(t), g(t)) on the torus link.

    With X_t = a X_s + b J X_s, f and g are the integrals of a and b; both
    are U(1)-invariant. Returns f, g, a, b at t.
    """
    nodes = chart.curve.t
    x, xs, xt = chart.link_point(np.zeros_like(nodes), nodes)
    length = np.einsum('ni,ni->n', xs, xs)
    a = np.einsum('ni,ni->n', xt, xs) / length
    b = np.einsum('ni,ni->n', xt, cross(x, xs)) / length
    # the closing node repeats the first to round-off
    a[-1], b[-1] = a[0], b[0]
    fa = CubicSpline(nodes, a, bc_type='periodic')
    fb = CubicSpline(nodes, b, bc_type='periodic')
    t = np.asarray(t, dtype=float)
    return fa.antiderivative()(t), fb.antiderivative()(t), fa(t), fb(t)


def _harmonic_data(chart: TorusConeChart, hp: HarmonicPair, s, t):
    """u, v and their (s, t) derivatives on the link"""
    if hp.is_constant:
        u, v, *_ = hp(s, t)
        zero = np.zeros_like(u)
        return u, v, zero, zero, zero, zero
    f, g, fa, fb = conformal_shift(chart, t)
    u, v, u_x, u_y, v_x, v_y = hp(s + f, g)
    return u, v, u_x, u_x * fa + u_y * fb, v_x, v_x * fa + v_y * fb


def _nuv_components(r, s, x1, z1, z2, z3, u, v):
    e2, em = np.exp(2j * s), np.exp(-1j * s)
    q = 2 * np.abs(z1) ** 2 - np.abs(z2) ** 2 - np.abs(z3) ** 2
    return (
        r * x1 + v * q,
        e2 * (r + 2j * u - 2 * v * x1) * z1,
        em * ((r - 1j * u + v * x1) * z2 - 3j * v * np.conj(z3 * z1)),
        em * ((r - 1j * u + v * x1) * z3 + 3j * v * np.conj(z1 * z2)),
    )


def _nuv_differential(r, s, x1, z1, z2, z3, u, v, comps, dr=0.0, ds=0.0, dx1=0.0,
                      dz1=0.0, dz2=0.0, dz3=0.0, du=0.0, dv=0.0):
    """Directional derivative of the N(u, v) components"""
    c0, c1, c2, c3 = comps
    e2, em = np.exp(2j * s), np.exp(-1j * s)
    q = 2 * np.abs(z1) ** 2 - np.abs(z2) ** 2 - np.abs(z3) ** 2
    dq = 4 * np.real(np.conj(z1) * dz1) - 2 * np.real(np.conj(z2) * dz2) - 2 * np.real(np.conj(z3) * dz3)
    weight = r - 1j * u + v * x1
    dweight = dr - 1j * du + dv * x1 + v * dx1
    return (
        dr * x1 + r * dx1 + dv * q + v * dq,
        e2 * ((dr + 2j * du - 2 * dv * x1 - 2 * v * dx1) * z1 + (r + 2j * u - 2 * v * x1) * dz1) + 2j * ds * c1,
        em * (dweight * z2 + weight * dz2 - 3j * dv * np.conj(z3 * z1)
              - 3j * v * np.conj(dz3 * z1 + z3 * dz1)) - 1j * ds * c2,
        em * (dweight * z3 + weight * dz3 + 3j * dv * np.conj(z1 * z2)
              + 3j * v * np.conj(dz1 * z2 + z1 * dz2)) - 1j * ds * c3,
    )


def nuv_point(chart: TorusConeChart, hp: HarmonicPair, rho, s, t) -> NDArray[np.float64]:
    """N(u, v) at broadcast (log r, s, t)"""
    rho, s, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (rho, s, t)))
    y, _ = evaluate_curve(chart.curve, t)
    x1, z1, z2, z3 = _split(ambient_point(y))
    u, v, *_ = _harmonic_data(chart, hp, s, t)
    return _join(*_nuv_components(np.exp(rho), chart.angle(s, t), x1, z1, z2, z3, u, v))


def _nuv_fields(chart: TorusConeChart, hp: HarmonicPair, rho, s, t):
    """Positions (n_r, n_s, n_t, 7) and analytic tangents along (rho, s, t)"""
    R = np.exp(rho)[:, None, None]
    S, T = np.meshgrid(s, t, indexing='ij')
    y, dy = evaluate_curve(chart.curve, t)
    x1, z1, z2, z3 = (c[None, None, :] for c in _split(ambient_point(y)))
    dx1, dz1, dz2, dz3 = (c[None, None, :] for c in _split(ambient_point(dy)))
    u, v, u_s, u_t, v_s, v_t = (c[None] for c in _harmonic_data(chart, hp, S, T))
    angle = chart.angle(S, T)[None]
    point = (R, angle, x1, z1, z2, z3, u, v)
    comps = _nuv_components(*point)
    shape = (len(rho), len(s), len(t), 7)
    tangents = [
        _nuv_differential(*point, comps, dr=R),
        _nuv_differential(*point, comps, ds=1.0, du=u_s, dv=v_s),
        _nuv_differential(*point, comps, ds=chart.twist / chart.period, dx1=dx1, dz1=dz1, dz2=dz2, dz3=dz3,
                          du=u_t, dv=v_t),
    ]
    psi = np.broadcast_to(_join(*comps), shape)
    return psi.copy(), np.stack([np.broadcast_to(_join(*d), shape) for d in tangents], axis=-2)


def _fd_tangents(chart: TorusConeChart, hp: HarmonicPair, rho, s, t, step: float):
    P, S, T = np.meshgrid(rho, s, t, indexing='ij')
    shifts = np.eye(3) * step
    return np.stack([
        (nuv_point(chart, hp, P + e[0], S + e[1], T + e[2]) - nuv_point(chart, hp, P - e[0], S - e[1], T - e[2])) / (2 * step)
        for e in shifts
    ], axis=-2)


@measure_time('build_nuv')
def build_nuv(curve: TorusConeCurve, hp: HarmonicPair, n_s: int = 32, n_t: int = 32,
              rladder: Optional[str] = None, tangents: str = 'analytic') -> ACThreefoldMesh:
    """Samples N(u, v) over the r-ladder and an (s, t) torus grid.

    tangents='fd' differentiates the parametrization with central steps of
    Config.FD_STEP instead of using the closed-form differentials.
    """
    if tangents not in ('analytic', 'fd'):
        raise ConfigError(f'Unknown tangent mode {tangents!r}', {'tangents': tangents})
    chart = TorusConeChart(curve)
    rho = parse_rladder(rladder)
    s, t = torus_grid(n_s, n_t, chart.period).axes()
    S, T = np.meshgrid(s, t, indexing='ij')
    residual = cauchy_riemann_residual(hp, S, T)
    if residual > CR_TOL:
        raise ConfigError(f'Pair {hp.label} violates Cauchy-Riemann ({residual:.3g})',
                          {'pair': hp.label, 'residual': residual})
    psi, analytic = _nuv_fields(chart, hp, rho, s, t)
    if tangents == 'fd':
        analytic = _fd_tangents(chart, hp, rho, s, t, Config.FD_STEP)
    ratio = np.linalg.norm(psi, axis=-1) / np.exp(rho)[:, None, None]
    return ACThreefoldMesh(
        rho=rho,
        s=s,
        t=t,
        psi=psi,
        chart=chart,
        periodic_t=True,
        tangents=analytic,
        claimed_rate=-1.0,
        name=f'nuv[{hp.label}]',
        metadata={
            'a': chart.curve.a.tolist(),
            'pair': hp.label,
            'tangents': tangents,
            'radius_ratio': [float(ratio.min()), float(ratio.max())],
        },
    )


def _conical_mesh(chart, rho, s, t, periodic_t: bool, name: str, offset=None, metadata=None) -> ACThreefoldMesh:
    S, T = np.meshgrid(s, t, indexing='ij')
    x, xs, xt = chart.link_point(S, T)
    R = np.exp(rho)[:, None, None, None]
    psi = R * x[None]
    if offset is not None:
        psi = psi + np.asarray(offset, dtype=float)
    tangents = R[..., None] * np.stack([x, xs, xt], axis=-2)[None]
    return ACThreefoldMesh(
        rho=rho,
        s=s,
        t=t,
        psi=psi,
        chart=chart,
        periodic_t=periodic_t,
        tangents=tangents,
        claimed_rate=None if offset is None else 0.0,
        name=name,
        metadata=dict(metadata or {}),
    )


def cone_mesh(curve: TorusConeCurve, n_s: int = 32, n_t: int = 32, rladder: Optional[str] = None) -> ACThreefoldMesh:
    """The torus cone r * sigma(s, t) itself"""
    chart = TorusConeChart(curve)
    s, t = torus_grid(n_s, n_t, chart.period).axes()
    return _conical_mesh(chart, parse_rladder(rladder), s, t, True, 'torus_cone',
                         metadata={'a': chart.curve.a.tolist()})


def plane_mesh(indices: Sequence[int] = (1, 2, 3), n_s: int = 32, n_t: int = 16,
               rladder: Optional[str] = None, offset=None) -> ACThreefoldMesh:
    """The 3-plane spanned by basis vectors, optionally translated by offset"""
    chart = PlaneChart(indices)
    s, t = sphere_grid(n_s, n_t).axes()
    label = 'plane<{}>'.format(','.join(f'e{i}' for i in indices))
    return _conical_mesh(chart, parse_rladder(rladder), s, t, False, label, offset,
                         metadata={'span': list(indices), 'offset': None if offset is None else list(offset)})


def dilation_field(mesh: ACThreefoldMesh) -> DilationField:
    """Normal projection of the position vector at every node"""
    return DilationField(normal_project(mesh_tangents(mesh), mesh.psi), mesh)


# Serialization

def save_curve(curve: TorusConeCurve, path: str) -> str:
    return write_csv(path, CURVE_COLUMNS, np.column_stack([curve.t, curve.samples]), curve.to_dict())


def load_curve(path: str) -> TorusConeCurve:
    metadata, columns, rows = read_csv(path)
    if tuple(columns) != CURVE_COLUMNS or 'a' not in metadata:
        raise ConfigError(f'{path} is not a constraint-curve table', {'columns': list(columns)})
    return TorusConeCurve(
        a=np.asarray(metadata['a'], dtype=float),
        samples=rows[:, 1:],
        t=rows[:, 0],
        closed=bool(metadata.get('closed')),
        closure_defect=float(metadata.get('closure_defect') or 0.0),
        period=metadata.get('period'),
        twist=float(metadata.get('twist') or 0.0),
        diagnostics=metadata.get('diagnostics', {}),
    )


def save_mesh(mesh: ACThreefoldMesh, path: str) -> str:
    R, S, T = np.meshgrid(mesh.r, mesh.s, mesh.t, indexing='ij')
    rows = np.column_stack([R.ravel(), S.ravel(), T.ravel(), mesh.psi.reshape(-1, 7)])
    metadata = {'name': mesh.name, 'shape': list(mesh.shape), 'claimed_rate': mesh.claimed_rate, **mesh.metadata}
    return write_csv(path, MESH_COLUMNS, rows, metadata)
