"""Critical rates, index bookkeeping and expected moduli dimensions."""
import logging
import math
import warnings
from typing import List, Sequence, Tuple

from ..infra.config import Config
from ..infra.errors import (
    AsymmetryWarning, NegativeEigenvalueError, NonGenericRateError, OddMultiplicityError, RateRangeError,
)
from ..models.moduli import CriticalRate, CriticalRateSet, ModuliReport, SLReport
from ..models.spectrum import Spectrum

logger = logging.getLogger(__name__)

DBAR_CENTER = -1.0
SL_CENTER = -1.5


def genericity_gap(rates: CriticalRateSet) -> float:
    """Ten cluster tolerances, capped at GENERIC_GAP_MAX"""
    return max(min(10 * rates.tol, Config.GENERIC_GAP_MAX), Config.GENERIC_GAP_FLOOR)


def _check_symmetry(rates: CriticalRateSet) -> None:
    c, tol = rates.center, rates.tol
    lo, hi = rates.trusted_interval or (-math.inf, math.inf)
    for r in rates.rates:
        partner = 2 * c - r.mu
        if abs(r.mu - c) <= tol or not lo + tol < partner < hi - tol:
            continue
        if rates.multiplicity(partner) != r.d:
            message = (f'rate {r.mu:.6g} (d={r.d}) has partner multiplicity '
                       f'{rates.multiplicity(partner)} at {partner:.6g}')
            warnings.warn(message, AsymmetryWarning, stacklevel=3)
            rates.warnings.append(message)


def critical_rates(spectrum: Spectrum) -> CriticalRateSet:
    """mu = beta - 1 for every dbar cluster"""
    rates = [CriticalRate(c.center - 1.0, c.multiplicity) for c in spectrum.clusters]
    trusted = None
    if spectrum.window is not None:
        trusted = (spectrum.window[0] - 1.0, spectrum.window[1] - 1.0)
    elif rates:
        trusted = (rates[0].mu, rates[-1].mu)
    out = CriticalRateSet(rates, spectrum.tol, DBAR_CENTER, trusted, spectrum)
    _check_symmetry(out)
    return out


def _require_generic(rates: CriticalRateSet, lam: float) -> float:
    gap = min((abs(r.mu - lam) for r in rates.rates), default=math.inf)
    if gap <= genericity_gap(rates):
        raise NonGenericRateError(
            f'Rate {lam} lies within {genericity_gap(rates):.3g} of a critical rate',
            {'lambda': lam, 'distance': gap, 'required_gap': genericity_gap(rates)},
        )
    return gap


def _require_trusted(rates: CriticalRateSet, lam: float) -> None:
    if rates.trusted_interval is None:
        return
    lo, hi = rates.trusted_interval
    if not lo < lam < hi:
        raise RateRangeError(
            f'Rate {lam} lies outside the computed window ({lo:.6g}, {hi:.6g})',
            {'lambda': lam, 'trusted_interval': [lo, hi]},
        )


def d_minus_one(rates: CriticalRateSet) -> int:
    d = rates.multiplicity(DBAR_CENTER)
    if d % 2:
        raise OddMultiplicityError(
            f'Multiplicity at -1 is odd ({d}); the spectrum is under-resolved',
            {'d_minus_one': d},
        )
    return d


def index_value(rates: CriticalRateSet, lam: float) -> int:
    """Index of the Dirac operator at rate lam, normalized by ind(-1 +- eps) = +-d(-1)/2"""
    half = d_minus_one(rates) // 2
    c = DBAR_CENTER
    if lam > c:
        return half + sum(r.d for r in rates.between(c, lam))
    return -half - sum(r.d for r in rates.between(lam, c))


def index_table(rates: CriticalRateSet) -> List[dict]:
    """Index on every interval between consecutive critical rates"""
    lo, hi = rates.trusted_interval or (
        (rates.rates[0].mu - 1, rates.rates[-1].mu + 1) if rates.rates else (-2.0, 0.0)
    )
    cuts = [lo] + [r.mu for r in rates.rates if lo < r.mu < hi] + [hi]
    table = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a <= 2 * rates.tol:
            continue
        table.append({'interval': [a, b], 'index': index_value(rates, 0.5 * (a + b))})
    return table


def expected_dimension(rates: CriticalRateSet, lam: float) -> ModuliReport:
    if lam >= 1:
        raise RateRangeError(f'Rate must be below 1, got {lam}', {'lambda': lam})
    _require_trusted(rates, lam)
    gap = _require_generic(rates, lam)
    d = d_minus_one(rates)
    value = index_value(rates, lam)
    label = 'expected dimension' if lam > DBAR_CENTER else 'virtual dimension (upper bound context)'
    report = ModuliReport(
        lambda_=lam,
        expected_dim=value,
        label=label,
        d_minus_one=d,
        epsilon_gap=gap,
        index_table=index_table(rates),
        rates=rates,
    )
    logger.info('%s at lambda=%g: %d', label, lam, value)
    return report


def index_jump(rates: CriticalRateSet, lam: float, lam_prime: float) -> int:
    """Sum of d(mu) over critical rates in (lam, lam_prime)"""
    if lam > lam_prime:
        raise RateRangeError('index_jump expects lam <= lam_prime', {'lambda': lam, 'lambda_prime': lam_prime})
    _require_generic(rates, lam)
    _require_generic(rates, lam_prime)
    if lam == lam_prime:
        return 0
    return sum(r.d for r in rates.rates if lam < r.mu < lam_prime)


def sl_roots(e: float) -> Tuple[float, float]:
    """Both roots of (mu + 1)(mu + 2) = e"""
    root = math.sqrt(1 + 4 * e)
    return (-3 + root) / 2, (-3 - root) / 2


def sl_critical_rates(laplacian: Spectrum) -> CriticalRateSet:
    rates: List[CriticalRate] = []
    tol = laplacian.tol
    for c in laplacian.clusters:
        if c.center < -tol:
            raise NegativeEigenvalueError(
                f'Laplacian eigenvalue {c.center:.6g} is negative',
                {'eigenvalue': c.center, 'tol': tol},
            )
        for mu in sl_roots(max(c.center, 0.0)):
            rates.append(CriticalRate(mu, c.multiplicity))

    # e = 0 sends both roots to -1 and -2 exactly; merge coincident roots
    rates.sort(key=lambda r: r.mu)
    merged: List[CriticalRate] = []
    for r in rates:
        if merged and abs(r.mu - merged[-1].mu) <= tol:
            merged[-1] = CriticalRate(merged[-1].mu, merged[-1].d + r.d)
        else:
            merged.append(r)

    trusted = None
    if laplacian.window is not None:
        top = max(laplacian.window[1], 0.0)
        upper, lower = sl_roots(top)
        trusted = (lower, upper)
    return CriticalRateSet(merged, tol, SL_CENTER, trusted, laplacian)


def sl_expected_dimension(slr: SLReport, lam: float) -> int:
    b0, b1, b2 = slr.betti
    if -2 < lam < -1:
        return b2
    if -1 < lam < 0:
        _require_generic(slr.rates, lam)
        return b1 - b0 + sum(r.d for r in slr.rates.between(-1.0, lam))
    raise RateRangeError(f'Special Lagrangian dimensions need lambda in (-2, -1) or (-1, 0), got {lam}',
                         {'lambda': lam})


def sl_report(laplacian: Spectrum, betti: Sequence[int]) -> SLReport:
    rates = sl_critical_rates(laplacian)
    slr = SLReport(laplacian, rates, tuple(int(b) for b in betti))
    cuts = [-1.0] + [r.mu for r in rates.between(-1.0, 0.0)] + [0.0]
    slr.dimensions.append({'interval': [-2.0, -1.0], 'dimension': slr.betti[2]})
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a <= 2 * genericity_gap(rates):
            continue
        slr.dimensions.append({'interval': [a, b], 'dimension': sl_expected_dimension(slr, 0.5 * (a + b))})
    return slr
