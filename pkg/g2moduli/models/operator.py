from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

OPERATOR_KINDS = ('dbar', 'dirac_sigma', 'laplacian', 'J')


@dataclass
class DiscreteOperator:
    """Assembled link operator.

    Degree of freedom fiber_dim*i + a is coordinate a of node i in the node's
    normal frame (frames[i, :, a]); scalar operators have fiber_dim 1.
    """
    kind: str
    matrix: sp.csr_matrix
    mass: NDArray[np.float64]
    fiber_dim: int
    link: Any = None
    frames: Optional[NDArray[np.float64]] = None
    stiffness: Optional[sp.csr_matrix] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def ordering(self) -> str:
        if self.fiber_dim == 1:
            return 'node'
        return f'node-major, {self.fiber_dim} frame coordinates per node'

    def apply(self, coords: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.matrix @ coords

    def inner(self, a: NDArray[np.float64], b: NDArray[np.float64]) -> float:
        """Mass-weighted L2 inner product of coordinate vectors"""
        return float(np.sum(self.mass * a * b))

    def to_coords(self, ambient: NDArray[np.float64]) -> NDArray[np.float64]:
        """Frame coordinates of an ambient normal field (N, 7)"""
        return np.einsum('nia,ni->na', self.frames, ambient).ravel()

    def to_ambient(self, coords: NDArray[np.float64]) -> NDArray[np.float64]:
        w = np.asarray(coords).reshape(-1, self.fiber_dim)
        return np.einsum('nia,na->ni', self.frames, w)
