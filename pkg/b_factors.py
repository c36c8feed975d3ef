import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple

import numpy as np

from constants import OPERATOR_NORM_SLACK, DEFAULT_C0_EPS
from distributions import make_rng
from matrix_core import Matrix, InequalityViolation, column_norms, column_profile, ColumnProfile
from spectral import operator_norm

logger = logging.getLogger(__name__)

B_KINDS = ('identity', 'orthogonal_projection', 'row_selection',
           'diagonal_column_norms', 'scaled_random_orthonormal_rows')


@dataclass(frozen=True)
class BFactorSpec:
    """Recipe for a deterministic n x N factor with ‖B‖ ≤ 1"""
    kind: str
    n: int
    N: int
    params: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in B_KINDS:
            raise ValueError(f"Unknown B factor kind '{self.kind}'. Valid kinds: {', '.join(B_KINDS)}")
        if self.n < 1 or self.N < 1:
            raise ValueError(f"B factor dimensions must be positive, got {self.n}x{self.N}")
        object.__setattr__(self, 'params', dict(self.params or {}))
        if self.kind in ('orthogonal_projection', 'row_selection', 'scaled_random_orthonormal_rows') \
                and self.n > self.N:
            raise ValueError(f"{self.kind} needs n <= N, got n={self.n}, N={self.N}")
        if self.kind == 'orthogonal_projection':
            rank = self.rank
            if not (0 <= rank <= self.n):
                raise ValueError(f"Projection rank must lie in [0, {self.n}], got {rank}")
        if self.kind == 'scaled_random_orthonormal_rows':
            scale = float(self.params.get('scale', 1.0))
            if not (0.0 <= scale <= 1.0):
                raise ValueError(f"Row scale must lie in [0, 1], got {scale}")
        if self.kind == 'diagonal_column_norms':
            if 'norms' not in self.params and 'value' not in self.params:
                raise ValueError("diagonal_column_norms requires 'norms' (list of N values) or 'value'")
            if 'norms' in self.params and len(self.params['norms']) != self.N:
                raise ValueError(f"Expected {self.N} prescribed column norms, got {len(self.params['norms'])}")

    @property
    def rank(self) -> int:
        return int(self.params.get('rank', self.n))

    def prescribed_norms(self) -> np.ndarray:
        if 'norms' in self.params:
            return np.asarray(self.params['norms'], dtype=np.float64)
        return np.full(self.N, float(self.params['value']))

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'n': self.n, 'N': self.N, 'params': dict(self.params)}

    @classmethod
    def from_dict(cls, data: dict) -> 'BFactorSpec':
        try:
            return cls(kind=data['kind'], n=int(data['n']), N=int(data['N']),
                       params=dict(data.get('params', {})))
        except KeyError as exc:
            raise ValueError(f"B factor JSON is missing field {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def with_dims(self, n: int, N: int) -> 'BFactorSpec':
        return BFactorSpec(self.kind, n, N, self.params)


class ColumnSplit(NamedTuple):
    large: np.ndarray
    small: np.ndarray
    threshold: float
    bound: float


# ============================================================================
# CONSTRUCTORS
# ============================================================================

def _orthonormal_rows(rows: int, cols: int, rng) -> np.ndarray:
    """rows x cols with orthonormal rows, from QR of a Gaussian matrix"""
    if rows == 0:
        return np.zeros((0, cols))
    g = rng.standard_normal((cols, rows))
    q, r = np.linalg.qr(g)
    # fix column signs so the result does not depend on LAPACK conventions
    q = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
    return q.T


def _balanced_rows(norms: np.ndarray, n: int) -> np.ndarray:
    """Assign columns to rows, largest squared norm first into the lightest row"""
    loads = np.zeros(n)
    assignment = np.empty(norms.size, dtype=np.int64)
    for j in np.argsort(-norms ** 2, kind='stable'):
        row = int(np.argmin(loads))
        assignment[j] = row
        loads[row] += norms[j] ** 2
    return assignment


def _rotated_rows(norms: np.ndarray, n: int) -> np.ndarray:
    """
    n x N factor with orthogonal rows of squared norm at most 1 and the given
    column norms. Starts from the spectrum (1, ..., 1, r, 0, ...) with the
    same total as norms² and rotates pairs of columns until each holds its
    target, largest target first. Requires norms ≤ 1 and Σ norms² ≤ n.
    """
    N = norms.size
    targets = norms ** 2
    total = float(targets.sum())
    if total >= n:
        spectrum = np.full(n, total / n)
    else:
        full = int(math.floor(total))
        spectrum = np.concatenate([np.ones(full), [total - full]])[:min(n, N)]

    work = np.zeros((n, N))
    work[np.arange(spectrum.size), np.arange(spectrum.size)] = np.sqrt(spectrum)
    loads = np.zeros(N)
    loads[:spectrum.size] = spectrum

    # unfixed columns stay mutually orthogonal and sorted by load, descending
    free = list(range(N))
    b = np.zeros((n, N))
    for col in np.argsort(-targets, kind='stable'):
        t = targets[col]
        tol = 1e-12 * max(1.0, t)
        below = [q for q, k in enumerate(free) if loads[k] <= t + tol]
        q = below[0] if below else len(free) - 1
        if q == 0:
            fixed = free.pop(0)
        else:
            i, j = free[q - 1], free[q]
            gap = loads[i] - loads[j]
            c2 = 1.0 if gap <= tol else min(1.0, max(0.0, (t - loads[j]) / gap))
            c, s = math.sqrt(c2), math.sqrt(1.0 - c2)
            work[:, i], work[:, j] = c * work[:, i] + s * work[:, j], c * work[:, j] - s * work[:, i]
            loads[j] = loads[i] + loads[j] - t
            loads[i] = t
            fixed = free.pop(q - 1)
        b[:, col] = work[:, fixed]
    return b


def _diagonal_column_norms(spec: BFactorSpec) -> np.ndarray:
    norms = spec.prescribed_norms()
    if np.any(norms < 0):
        raise ValueError(f"Column norms must be non-negative, got {float(norms.min())} at column "
                         f"{int(np.argmin(norms))}")
    if norms.size and norms.max() > 1.0:
        worst = int(np.argmax(norms))
        raise InequalityViolation("max_i |B_i|_2 <= |B| <= 1",
                                  f"prescribed norm {norms[worst]!r} of column {worst} exceeds 1")
    total = float(np.sum(norms ** 2))
    if total > spec.n * (1 + OPERATOR_NORM_SLACK):
        raise InequalityViolation("sum_i |B_i|^2 = |B|_HS^2 <= n",
                                  f"prescribed squared norms sum to {total!r} > n = {spec.n}")

    rows = _balanced_rows(norms, spec.n)
    b = np.zeros((spec.n, spec.N))
    b[rows, np.arange(spec.N)] = norms
    # rows have disjoint supports, so ‖B‖² is the largest row load
    load = float(np.max(np.sum(b ** 2, axis=1)))
    if load > 1.0 + OPERATOR_NORM_SLACK:
        logger.debug(f"Row packing overfills a row ({load:.6g}), rotating columns instead")
        b = _rotated_rows(norms, spec.n)
    return b


def build_b(spec: BFactorSpec, seed: int = 0) -> Matrix:
    """
    Realize a factor B from its recipe. Deterministic given seed; the
    realized ‖B‖ is checked against 1 + OPERATOR_NORM_SLACK.
    """
    rng = make_rng(seed)
    n, N = spec.n, spec.N

    if spec.kind == 'identity':
        b = np.eye(n, N)
    elif spec.kind == 'orthogonal_projection':
        b = np.zeros((n, N))
        b[:spec.rank] = _orthonormal_rows(spec.rank, N, rng)
    elif spec.kind == 'row_selection':
        picked = np.sort(rng.choice(N, size=n, replace=False))
        b = np.zeros((n, N))
        b[np.arange(n), picked] = 1.0
    elif spec.kind == 'diagonal_column_norms':
        b = _diagonal_column_norms(spec)
    else:
        b = float(spec.params.get('scale', 1.0)) * _orthonormal_rows(n, N, rng)

    result = Matrix(b)
    norm = operator_norm(result, seed=seed)
    if norm > 1.0 + OPERATOR_NORM_SLACK:
        raise InequalityViolation("|B| <= 1", f"realized {spec.kind} factor has norm {norm!r}")
    if spec.kind == 'diagonal_column_norms':
        drift = np.abs(column_norms(result) - spec.prescribed_norms())
        if drift.max() > 1e-12:
            raise InequalityViolation("|B_i|_2 = prescribed",
                                      f"column {int(np.argmax(drift))} drifted by {drift.max():.3e}")
    logger.debug(f"Built {spec.kind} B {n}x{N}, ‖B‖ = {norm:.12g}")
    return result


def b_profile(b: Matrix, seed: int = 0) -> ColumnProfile:
    return column_profile(b, operator_norm(b, seed=seed))


# ============================================================================
# COLUMN SPLIT
# ============================================================================

def column_norm_threshold(n: int, eps: float, scale: float) -> float:
    """scale · log^(-1/2 - 1/eps)(2n)"""
    if not (0 < eps < 1):
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return scale * math.log(2 * n) ** -(0.5 + 1.0 / eps)


def column_split(b: Matrix, eps: float, c0_eps: float = DEFAULT_C0_EPS) -> ColumnSplit:
    """
    Split the columns of b into large ones (‖B_i‖ above c0_eps·log^(-K)(2n),
    K = 1/2 + 1/eps) and the rest. Markov on Σ‖B_i‖² ≤ n bounds the count
    of large columns by c0_eps^(-2)·n·log^(2K)(2n).
    """
    if c0_eps <= 0:
        raise ValueError(f"c0_eps must be positive, got {c0_eps}")
    n = b.rows
    k_exp = 0.5 + 1.0 / eps
    threshold = column_norm_threshold(n, eps, c0_eps)
    bound = c0_eps ** -2 * n * math.log(2 * n) ** (2 * k_exp)

    norms = column_norms(b)
    large = np.flatnonzero(norms > threshold)
    small = np.flatnonzero(norms <= threshold)
    if large.size > bound:
        logger.warning(f"Column split: |I| = {large.size} exceeds Markov bound {bound:.6g}; is ‖B‖ <= 1?")
    logger.debug(f"Column split at {threshold:.6g}: {large.size} large, {small.size} small")
    return ColumnSplit(large, small, threshold, bound)


def restrict_columns(b: Matrix, columns: List[int]) -> Matrix:
    """B_I as an n x |I| matrix; an empty selection yields a single zero column"""
    idx = np.asarray(columns, dtype=np.int64)
    if idx.size == 0:
        return Matrix.zeros(b.rows, 1)
    return Matrix(b.data[:, idx])
