import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from constants import DEFAULT_MOMENT_EPS, FLOAT_FORMAT
from distributions import make_rng
from matrix_core import Matrix, ColumnProfile, InequalityViolation, as_array

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ['k', 'nonzero_fraction', 'predicted_p_k']


@dataclass(frozen=True, eq=False)
class DyadicDecomposition:
    """
    Magnitude bands of a matrix: level0 holds |a| ∈ [0, 1], level k holds
    2^-k·a on |a| ∈ (2^(k-1), 2^k] for k = 1..k0.
    """
    level0: Matrix
    levels: List[Tuple[int, Matrix]]
    k0: int
    eps: float
    level_sparsity: np.ndarray
    exponent: float
    entry_bound: float

    def predicted_sparsity(self) -> np.ndarray:
        ks = np.arange(1, self.k0 + 1, dtype=np.float64)
        return 2.0 ** (-self.exponent * (ks - 1.0))


@dataclass(frozen=True)
class RowColBounds:
    max_abs_entry: float
    max_row_norm: float
    max_col_weighted_norm: float
    implied_k: float
    entries_bounded: bool


# ============================================================================
# SYMMETRIZATION AND GAUSSIANIZATION
# ============================================================================

def random_signs(shape, seed: int) -> np.ndarray:
    return 2.0 * make_rng(seed).integers(0, 2, size=shape).astype(np.float64) - 1.0


def symmetrize(a: Matrix, a_prime: Matrix, signs_seed: int) -> Matrix:
    """ε_ij·(a_ij - a'_ij) with independent random signs"""
    if a.shape != a_prime.shape:
        raise ValueError(f"Symmetrization needs equal shapes, got {a.shape} and {a_prime.shape}")
    return Matrix(random_signs(a.shape, signs_seed) * (a.data - a_prime.data))


def gaussianize(a: Matrix, gauss_seed: int) -> Matrix:
    g = make_rng(gauss_seed).standard_normal(a.shape)
    return Matrix(g * a.data)


# ============================================================================
# TRUNCATION AND DYADIC LEVELS
# ============================================================================

def truncate(a: Matrix, lo: float, hi: float = math.inf, include_lo: bool = False) -> Matrix:
    """
    Keep entries with |a_ij| in (lo, hi], or [lo, hi] when include_lo is set;
    zero the rest.
    """
    if lo < 0:
        raise ValueError(f"Band start must be non-negative, got {lo}")
    if not lo < hi:
        raise ValueError(f"Empty band: lo={lo} is not below hi={hi}")
    mag = np.abs(a.data)
    keep = (mag >= lo if include_lo else mag > lo) & (mag <= hi)
    return Matrix(np.where(keep, a.data, 0.0))


def implied_scale(a: Matrix, exponent: float) -> float:
    """The M solving max|a_ij| = (M·n / log 2N)^(1/exponent), for an N x n matrix"""
    N, n = a.shape
    return float(np.max(np.abs(a.data))) ** exponent * math.log(2 * N) / n


def almost_square_scale(a: Matrix, eps: float = DEFAULT_MOMENT_EPS, exponent: Optional[float] = None) -> float:
    return implied_scale(a, 2.0 + eps / 4.0 if exponent is None else exponent)


def _cutoff_level(bound: float) -> int:
    """Largest k0 >= 0 with 2^(k0-1) <= bound"""
    if bound < 0.5:
        return 0
    k0 = max(0, int(math.floor(math.log2(bound))) + 1)
    while 2.0 ** (k0 - 1) > bound:
        k0 -= 1
    while 2.0 ** k0 <= bound:
        k0 += 1
    return k0


def dyadic_decompose(a: Matrix, m_scale: float, eps: float, exponent: Optional[float] = None) -> DyadicDecomposition:
    """
    Split a (N x n) by entry magnitude. Entries must satisfy
    |a_ij| ≤ (M·n/log 2N)^(1/exponent), exponent defaulting to 2 + eps.
    """
    if m_scale < 1:
        raise ValueError(f"Scale M must be at least 1, got {m_scale}")
    if not (0 < eps < 1):
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    exponent = 2.0 + eps if exponent is None else float(exponent)
    N, n = a.shape
    bound = (m_scale * n / math.log(2 * N)) ** (1.0 / exponent)

    mag = np.abs(a.data)
    if mag.max() > bound:
        i, j = (int(v) for v in np.unravel_index(int(np.argmax(mag)), mag.shape))
        raise InequalityViolation("|a_ij| <= (Mn/log 2N)^(1/exponent)",
                                  f"entry ({i}, {j}) = {a.data[i, j]!r} exceeds {bound!r}")

    k0 = _cutoff_level(bound)
    level0 = truncate(a, 0.0, 1.0, include_lo=True)
    levels = []
    sparsity = []
    for k in range(1, k0 + 1):
        band = truncate(a, 2.0 ** (k - 1), 2.0 ** k)
        level = Matrix(band.data * 2.0 ** -k)
        levels.append((k, level))
        sparsity.append(np.count_nonzero(level.data) / level.data.size)

    logger.debug(f"Dyadic decomposition of {N}x{n}: entry bound {bound:.6g}, k0 = {k0}")
    return DyadicDecomposition(level0, levels, k0, eps, np.array(sparsity, dtype=np.float64), exponent, bound)


def reconstruct(decomposition: DyadicDecomposition) -> Matrix:
    total = decomposition.level0.data.copy()
    for k, level in decomposition.levels:
        total += 2.0 ** k * level.data
    return Matrix(total)


def decomposition_summary(decomposition: DyadicDecomposition) -> pd.DataFrame:
    return pd.DataFrame({
        'k': np.arange(1, decomposition.k0 + 1),
        'nonzero_fraction': decomposition.level_sparsity,
        'predicted_p_k': decomposition.predicted_sparsity(),
    }, columns=SUMMARY_COLUMNS)


def save_summary(decomposition: DyadicDecomposition, path) -> None:
    decomposition_summary(decomposition).to_csv(path, index=False, float_format=FLOAT_FORMAT)


# ============================================================================
# ROW AND COLUMN CONDITIONS
# ============================================================================

def row_col_bounds(a: Matrix, b_profile: ColumnProfile, p: float) -> RowColBounds:
    """
    Row norms of A (N x n) and its B-weighted column norms
    (Σ_i a_ij²‖B_i‖²)^(1/2), each normalized by √(np + log 2N) and
    √(np + log 2n) respectively; implied_k is the larger ratio.
    The entry bound |a_ij| ≤ 1 is reported as a separate flag.
    """
    if not (0 < p <= 1):
        raise ValueError(f"p must lie in (0, 1], got {p}")
    arr = as_array(a)
    N, n = arr.shape
    if b_profile.norms.size != N:
        raise ValueError(f"B has {b_profile.norms.size} columns but A has {N} rows")

    sq = arr ** 2
    max_entry = float(np.abs(arr).max())
    max_row = float(np.sqrt(sq.sum(axis=1).max()))
    max_col = float(np.sqrt((sq * (b_profile.norms ** 2)[:, None]).sum(axis=0).max()))
    implied = max(max_row / math.sqrt(n * p + math.log(2 * N)),
                  max_col / math.sqrt(n * p + math.log(2 * n)))
    return RowColBounds(max_entry, max_row, max_col, implied, max_entry <= 1.0)
