"""G2 multilinear algebra on R^7.

phi is fixed by its seven terms with dx_1...dx_7 positively oriented. Its
Hodge dual is computed by complement/sign enumeration and chi is read off
the relation g(chi(x, y, z), w) = *phi(x, y, z, w), so phi is the only input.
All evaluations accept arrays with arbitrary leading axes.
"""
import itertools
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from numpy.typing import NDArray

Vector7 = NDArray[np.float64]
Term = Tuple[int, Tuple[int, ...]]

PHI_TERMS: Tuple[Term, ...] = (
    (1, (1, 2, 3)),
    (1, (1, 4, 5)),
    (1, (1, 6, 7)),
    (1, (2, 4, 6)),
    (-1, (2, 5, 7)),
    (-1, (3, 4, 7)),
    (-1, (3, 5, 6)),
)

# Coordinate expansion of chi as it is usually tabulated, row by row
# (output basis vector -> signed dx triples). Kept only to be checked
# against the expansion regenerated from the defining relation.
TABULATED_CHI: Dict[int, Tuple[Term, ...]] = {
    1: ((-1, (3, 5, 7)), (1, (3, 4, 6)), (1, (2, 5, 6)), (1, (2, 4, 7))),
    2: ((-1, (3, 6, 7)), (-1, (3, 4, 5)), (-1, (1, 5, 6)), (-1, (1, 4, 7))),
    3: ((1, (2, 6, 7)), (1, (2, 4, 5)), (1, (1, 5, 7)), (-1, (1, 4, 6))),
    4: ((1, (5, 6, 7)), (-1, (2, 3, 5)), (1, (1, 3, 6)), (1, (1, 2, 7))),
    5: ((1, (4, 6, 7)), (1, (2, 3, 4)), (-1, (1, 3, 7)), (1, (1, 2, 6))),
    6: ((-1, (4, 5, 7)), (-1, (2, 3, 7)), (-1, (1, 3, 4)), (-1, (1, 2, 5))),
    7: ((1, (4, 5, 6)), (1, (2, 3, 6)), (1, (1, 3, 5)), (-1, (1, 2, 4))),
}


def permutation_sign(seq) -> int:
    """Sign of the permutation sorting seq (0 if it has repeats)"""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    inversions = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return -1 if inversions % 2 else 1


def hodge_dual_terms(terms: Tuple[Term, ...], dim: int = 7) -> Tuple[Term, ...]:
    """Hodge dual of a form given as signed sorted index sets"""
    full = set(range(1, dim + 1))
    dual = []
    for coeff, idx in terms:
        comp = tuple(sorted(full - set(idx)))
        dual.append((coeff * permutation_sign(idx + comp), comp))
    return tuple(sorted(dual, key=lambda term: term[1]))


def antisymmetric_tensor(terms: Tuple[Term, ...], rank: int) -> NDArray[np.float64]:
    tensor = np.zeros((7,) * rank)
    for coeff, idx in terms:
        zero_based = [i - 1 for i in idx]
        for perm in itertools.permutations(range(rank)):
            tensor[tuple(zero_based[p] for p in perm)] = coeff * permutation_sign(perm)
    return tensor


@dataclass(frozen=True)
class CalibrationTables:
    """Dense coefficient tables, built once at import"""
    phi: NDArray[np.float64]
    star_phi: NDArray[np.float64]
    chi: NDArray[np.float64]
    star_phi_terms: Tuple[Term, ...]

    @classmethod
    def build(cls) -> 'CalibrationTables':
        star_terms = hodge_dual_terms(PHI_TERMS)
        star_phi = antisymmetric_tensor(star_terms, 4)
        # chi[i, j, k, l] = g(chi(e_i, e_j, e_k), e_l)
        chi = star_phi.copy()
        for table in (star_phi, chi):
            table.setflags(write=False)
        phi = antisymmetric_tensor(PHI_TERMS, 3)
        phi.setflags(write=False)
        return cls(phi=phi, star_phi=star_phi, chi=chi, star_phi_terms=star_terms)


TABLES = CalibrationTables.build()


def basis(i: int) -> Vector7:
    """Standard basis vector e_i, 1-based"""
    e = np.zeros(7)
    e[i - 1] = 1.0
    return e


def phi_eval(x, y, z) -> NDArray[np.float64]:
    return np.einsum('ijk,...i,...j,...k->...', TABLES.phi, x, y, z)


def star_phi_eval(x, y, z, w) -> NDArray[np.float64]:
    return np.einsum('ijkl,...i,...j,...k,...l->...', TABLES.star_phi, x, y, z, w)


def cross(x, y) -> Vector7:
    """x cross y, defined by g(x cross y, z) = phi(x, y, z)"""
    return np.einsum('ijk,...i,...j->...k', TABLES.phi, x, y)


def chi_eval(x, y, z) -> Vector7:
    return np.einsum('ijkl,...i,...j,...k->...l', TABLES.chi, x, y, z)


def cross_matrix(x) -> NDArray[np.float64]:
    """Matrices of u -> x cross u"""
    return np.einsum('ijk,...i->...kj', TABLES.phi, x)


def chi_middle_matrix(x, z) -> NDArray[np.float64]:
    """Matrices of y -> chi(x, y, z)"""
    return np.einsum('ijkl,...i,...k->...lj', TABLES.chi, x, z)


def regenerated_chi_table() -> Dict[int, Dict[Tuple[int, int, int], int]]:
    """Coordinate expansion of chi rebuilt from the defining relation"""
    table: Dict[int, Dict[Tuple[int, int, int], int]] = {row: {} for row in range(1, 8)}
    for idx in itertools.combinations(range(1, 8), 3):
        for row in range(1, 8):
            coeff = int(TABLES.chi[idx[0] - 1, idx[1] - 1, idx[2] - 1, row - 1])
            if coeff:
                table[row][idx] = coeff
    return table


@dataclass(frozen=True)
class ChiTableDiscrepancy:
    row: int
    triple: Tuple[int, int, int]
    tabulated: int
    regenerated: int

    def to_dict(self):
        return {
            'row': self.row,
            'triple': list(self.triple),
            'tabulated': self.tabulated,
            'regenerated': self.regenerated,
        }


def chi_table_diff(tabulated: Dict[int, Tuple[Term, ...]] = TABULATED_CHI) -> List[ChiTableDiscrepancy]:
    """Term-by-term comparison of a tabulated chi expansion with the regenerated one"""
    regenerated = regenerated_chi_table()
    diffs = []
    for row in range(1, 8):
        printed = {tuple(idx): coeff for coeff, idx in tabulated.get(row, ())}
        for triple in sorted(set(printed) | set(regenerated[row])):
            a = printed.get(triple, 0)
            b = regenerated[row].get(triple, 0)
            if a != b:
                diffs.append(ChiTableDiscrepancy(row, triple, a, b))
    return diffs
