"""Exception and warning types shared by the pipeline.

Every error carries the process exit status the batch runner reports for it.
"""
from typing import Any, Dict, Optional


class G2ModuliError(Exception):
    """Base error"""
    exit_code = 3
    kind = 'numerical_failure'

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable error object"""
        return {
            'kind': self.kind,
            'message': self.message,
            'exit_code': self.exit_code,
            'details': self.details,
        }


class ConfigError(G2ModuliError):
    exit_code = 1
    kind = 'config_error'


class GridDimensionError(ConfigError):
    kind = 'grid_dimension'


class LinkInputError(ConfigError):
    kind = 'link_input'


class RateRangeError(ConfigError):
    kind = 'rate_range'


class NonGenericRateError(G2ModuliError):
    exit_code = 2
    kind = 'non_generic_rate'


class DegenerateMetricError(G2ModuliError):
    kind = 'degenerate_metric'


class NonPseudoholomorphicError(G2ModuliError):
    kind = 'non_pseudoholomorphic'


class SpectrumConvergenceError(G2ModuliError):
    kind = 'spectrum_convergence'


class OddMultiplicityError(G2ModuliError):
    kind = 'odd_multiplicity'


class NegativeEigenvalueError(G2ModuliError):
    kind = 'negative_eigenvalue'


class RankDeficiencyError(G2ModuliError):
    kind = 'rank_deficiency'


class NewtonDivergenceError(G2ModuliError):
    kind = 'newton_divergence'


class OpenCurveError(G2ModuliError):
    kind = 'open_curve'


class DegenerateTripleError(G2ModuliError):
    kind = 'degenerate_triple'


class EmbeddingError(G2ModuliError):
    kind = 'embedding_failure'


class ProjectionError(G2ModuliError):
    kind = 'projection_non_convergence'


class G2ModuliWarning(UserWarning):
    pass


class NormalityWarning(G2ModuliWarning):
    pass


class SpuriousComplexWarning(G2ModuliWarning):
    pass


class AsymmetryWarning(G2ModuliWarning):
    pass


class NonClosureWarning(G2ModuliWarning):
    pass


class PairingWarning(G2ModuliWarning):
    pass


class AssumedTopologyWarning(G2ModuliWarning):
    pass
