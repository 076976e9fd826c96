from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

# (u, v, u_s, u_t, v_s, v_t) at conformal coordinates
HarmonicValues = Tuple[NDArray[np.float64], ...]


@dataclass
class TorusConeCurve:
    """Traced solution curve of the U(1)-invariant T^2-cone constraints.

    samples are (x1, z1, Re z2, Im z2, Re z3, Im z3) with z1 real, listed
    at the flow times in t. A closed curve ends at t = period on its first
    sample rotated by twist (0 or pi) under the U(1) action.
    """
    a: NDArray[np.float64]
    samples: NDArray[np.float64]
    t: NDArray[np.float64]
    closed: bool
    closure_defect: float
    period: Optional[float] = None
    twist: float = 0.0
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    _flow: Any = field(default=None, repr=False, compare=False)

    @property
    def n_samples(self) -> int:
        return len(self.t)

    def components(self, y: Optional[NDArray[np.float64]] = None):
        """(x1, z1, z2, z3) as real/complex arrays"""
        y = self.samples if y is None else y
        return y[..., 0], y[..., 1], y[..., 2] + 1j * y[..., 3], y[..., 4] + 1j * y[..., 5]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'a': self.a,
            'closed': self.closed,
            'closure_defect': self.closure_defect,
            'period': self.period,
            'twist': self.twist,
            'n_samples': self.n_samples,
            'diagnostics': self.diagnostics,
        }


@dataclass(frozen=True)
class HarmonicPair:
    """Real functions u, v on the (s, t) plane satisfying Cauchy-Riemann.

    evaluator maps conformal coordinates (s, t) to (u, v, u_s, u_t, v_s, v_t).
    """
    evaluator: Callable[[NDArray[np.float64], NDArray[np.float64]], HarmonicValues]
    label: str
    is_constant: bool = False

    def __call__(self, s, t) -> HarmonicValues:
        return self.evaluator(np.asarray(s, dtype=float), np.asarray(t, dtype=float))

    @classmethod
    def constant(cls, u: float, v: float) -> 'HarmonicPair':
        def evaluator(s, t):
            zero = np.zeros(np.broadcast(s, t).shape)
            return zero + u, zero + v, zero, zero, zero, zero
        return cls(evaluator, f'constant({u:g}, {v:g})', True)

    @classmethod
    def from_holomorphic(cls, f: Callable, fprime: Callable, label: str = 'holomorphic') -> 'HarmonicPair':
        """u + iv = f(s + it)"""
        def evaluator(s, t):
            z = s + 1j * t
            w, dw = f(z), fprime(z)
            return w.real, w.imag, dw.real, -dw.imag, dw.imag, dw.real
        return cls(evaluator, label, False)


@dataclass
class ACThreefoldMesh:
    """Parametrized 3-fold sampled over (rho = log r, s, t).

    psi is (n_r, n_s, n_t, 7); tangents, when known analytically, are
    (n_r, n_s, n_t, 3, 7) along (rho, s, t). chart gives the asymptotic cone.
    """
    rho: NDArray[np.float64]
    s: NDArray[np.float64]
    t: NDArray[np.float64]
    psi: NDArray[np.float64]
    chart: Any
    periodic_t: bool
    tangents: Optional[NDArray[np.float64]] = None
    claimed_rate: Optional[float] = None
    name: str = 'mesh'
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def r(self) -> NDArray[np.float64]:
        return np.exp(self.rho)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.psi.shape[:3]

    @property
    def spacing(self) -> Tuple[float, float, float]:
        return (
            float(self.rho[1] - self.rho[0]) if len(self.rho) > 1 else 1.0,
            float(self.s[1] - self.s[0]),
            float(self.t[1] - self.t[0]),
        )

    def interior_mask(self) -> NDArray[np.bool_]:
        """Nodes whose stencils are all centred"""
        mask = np.ones(self.shape, dtype=bool)
        mask[0], mask[-1] = False, False
        if not self.periodic_t:
            mask[:, :, 0], mask[:, :, -1] = False, False
        return mask

    def scaled(self, factor: float) -> 'ACThreefoldMesh':
        """The dilated mesh factor * psi, sampled at factor * r"""
        return ACThreefoldMesh(
            rho=self.rho + np.log(factor),
            s=self.s,
            t=self.t,
            psi=factor * self.psi,
            chart=self.chart,
            periodic_t=self.periodic_t,
            tangents=None if self.tangents is None else factor * self.tangents,
            claimed_rate=self.claimed_rate,
            name=f'{self.name}*{factor:g}',
            metadata=dict(self.metadata),
        )


@dataclass
class TangentTriple:
    """Tangent vectors (..., 3, 7) at mesh nodes"""
    vectors: NDArray[np.float64]

    def gram(self) -> NDArray[np.float64]:
        return np.einsum('...ai,...bi->...ab', self.vectors, self.vectors)

    def volume(self) -> NDArray[np.float64]:
        return np.sqrt(np.clip(np.linalg.det(self.gram()), 0.0, None))

    def normalized_gram_det(self) -> NDArray[np.float64]:
        """det of the Gram matrix over the product of squared lengths, in [0, 1]"""
        lengths = np.einsum('...ai,...ai->...a', self.vectors, self.vectors).prod(axis=-1)
        return np.linalg.det(self.gram()) / lengths


@dataclass
class DilationField:
    """Normal projection of the Euler field x -> x on a mesh"""
    values: NDArray[np.float64]
    mesh: ACThreefoldMesh

    def norm(self) -> float:
        return float(np.linalg.norm(self.values[self.mesh.interior_mask()]))
