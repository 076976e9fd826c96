from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .spectrum import Spectrum


@dataclass(frozen=True)
class CriticalRate:
    mu: float
    d: int

    def to_dict(self) -> Dict[str, Any]:
        return {'mu': self.mu, 'd': self.d}


@dataclass
class CriticalRateSet:
    """Critical rates with multiplicities, symmetric about center"""
    rates: List[CriticalRate]
    tol: float
    center: float = -1.0
    trusted_interval: Optional[Tuple[float, float]] = None
    source: Optional[Spectrum] = None
    warnings: List[str] = field(default_factory=list)

    def multiplicity(self, mu: float) -> int:
        return sum(r.d for r in self.rates if abs(r.mu - mu) <= self.tol)

    def between(self, lo: float, hi: float) -> List[CriticalRate]:
        """Rates strictly inside (lo, hi), beyond tol of either end"""
        return [r for r in self.rates if lo + self.tol < r.mu < hi - self.tol]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'center': self.center,
            'tol': self.tol,
            'trusted_interval': list(self.trusted_interval) if self.trusted_interval else None,
            'critical_rates': [r.to_dict() for r in self.rates],
            'warnings': list(self.warnings),
        }


@dataclass
class ModuliReport:
    lambda_: float
    expected_dim: int
    label: str
    d_minus_one: int
    epsilon_gap: float
    index_table: List[Dict[str, Any]]
    rates: CriticalRateSet
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'lambda': self.lambda_,
            'expected_dim': self.expected_dim,
            'label': self.label,
            'd_minus_one': self.d_minus_one,
            'epsilon_gap': self.epsilon_gap,
            'critical_rates': [r.to_dict() for r in self.rates.rates],
            'trusted_interval': list(self.rates.trusted_interval) if self.rates.trusted_interval else None,
            'index_table': self.index_table,
            'warnings': list(self.warnings) + list(self.rates.warnings),
        }


@dataclass
class SLReport:
    """Special Lagrangian comparison data of a Legendrian link"""
    laplacian: Spectrum
    rates: CriticalRateSet
    betti: Tuple[int, int, int]
    dimensions: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        b0, b1, b2 = self.betti
        return {
            'betti': {'b0': b0, 'b1': b1, 'b2': b2},
            'sl_rates': [r.to_dict() for r in self.rates.rates],
            'trusted_interval': list(self.rates.trusted_interval) if self.rates.trusted_interval else None,
            'dimensions': self.dimensions,
            'laplacian_clusters': [c.to_dict() for c in self.laplacian.clusters],
        }
