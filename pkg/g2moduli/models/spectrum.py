from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray


@dataclass(frozen=True)
class Cluster:
    center: float
    multiplicity: int

    def to_dict(self) -> Dict[str, Any]:
        return {'beta': self.center, 'multiplicity': self.multiplicity}


@dataclass
class Spectrum:
    """Clustered eigenvalues of a DiscreteOperator, in beta coordinates"""
    eigenvalues: NDArray[np.float64]
    clusters: List[Cluster]
    tol: float
    operator_kind: str
    window: Optional[Tuple[float, float]] = None
    method: str = 'dense'
    eigenfields: Optional[List[NDArray[np.float64]]] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    @property
    def total_multiplicity(self) -> int:
        return sum(c.multiplicity for c in self.clusters)

    def multiplicity_near(self, beta: float, tol: Optional[float] = None) -> int:
        tol = self.tol if tol is None else tol
        return sum(c.multiplicity for c in self.clusters if abs(c.center - beta) <= tol)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'operator_kind': self.operator_kind,
            'method': self.method,
            'window': list(self.window) if self.window is not None else None,
            'tol': self.tol,
            'eigenvalues': self.eigenvalues,
            'clusters': [c.to_dict() for c in self.clusters],
            'diagnostics': self.diagnostics,
            'warnings': list(self.warnings),
        }
