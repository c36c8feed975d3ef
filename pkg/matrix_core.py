import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from constants import HS_RELATIVE_TOL, FLOAT_FORMAT

logger = logging.getLogger(__name__)


class InequalityViolation(ValueError):
    """Raised when a structural inequality of the theory fails on concrete data."""

    def __init__(self, inequality: str, message: str):
        super().__init__(f"{inequality}: {message}")
        self.inequality = inequality


@dataclass(frozen=True, eq=False)
class Matrix:
    """Dense real matrix with 64-bit entries, immutable after construction"""
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, order='C', copy=True)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"Matrix needs a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            bad = np.argwhere(~np.isfinite(arr))[0]
            raise ValueError(f"Non-finite entry {arr[tuple(bad)]} at position {tuple(int(i) for i in bad)}")
        arr.setflags(write=False)
        object.__setattr__(self, 'data', arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    @property
    def entries(self) -> np.ndarray:
        """Row-major flat view of the entries"""
        return self.data.ravel()

    @property
    def T(self) -> 'Matrix':
        return Matrix(self.data.T)

    @classmethod
    def identity(cls, n: int) -> 'Matrix':
        return cls(np.eye(n))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> 'Matrix':
        return cls(np.zeros((rows, cols)))

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def as_array(m: Union['Matrix', np.ndarray]) -> np.ndarray:
    return m.data if isinstance(m, Matrix) else np.asarray(m, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class ColumnProfile:
    norms: np.ndarray
    hs_norm: float
    operator_norm_upper: float

    @property
    def max_norm(self) -> float:
        return float(self.norms.max()) if self.norms.size else 0.0


# ============================================================================
# ARITHMETIC
# ============================================================================

def multiply(a: Matrix, b: Matrix) -> Matrix:
    if a.cols != b.rows:
        raise ValueError(f"Dimension mismatch: {a.rows}x{a.cols} times {b.rows}x{b.cols}")
    return Matrix(a.data @ b.data)


def hilbert_schmidt_norm(m: Matrix) -> float:
    return float(np.sqrt(np.sum(as_array(m) ** 2)))


def column_norms(m: Matrix) -> np.ndarray:
    return np.sqrt(np.sum(as_array(m) ** 2, axis=0))


def gram(m: Matrix) -> Matrix:
    """mᵀm, symmetrized so rounding cannot break symmetry"""
    arr = as_array(m)
    g = arr.T @ arr
    return Matrix(0.5 * (g + g.T))


def column_profile(m: Matrix, operator_norm: float) -> ColumnProfile:
    """
    Column norms B_i, ‖B‖_HS and the caller's bound on ‖B‖.

    Checks Σ‖B_i‖² = ‖B‖_HS² and max_i ‖B_i‖ ≤ ‖B‖ (Eq B HS).
    """
    if operator_norm < 0:
        raise ValueError(f"Operator norm bound must be non-negative, got {operator_norm}")
    norms = column_norms(m)
    hs = hilbert_schmidt_norm(m)
    squared = float(np.sum(norms ** 2))
    if abs(hs ** 2 - squared) > HS_RELATIVE_TOL * max(hs ** 2, 1e-300):
        raise InequalityViolation("sum_i |B_i|^2 = |B|_HS^2",
                                  f"HS² {hs ** 2!r} differs from column sum {squared!r}")
    largest = float(norms.max())
    if largest > operator_norm * (1 + HS_RELATIVE_TOL) + 1e-15:
        worst = int(np.argmax(norms))
        raise InequalityViolation("max_i |B_i|_2 <= |B|",
                                  f"column {worst} has norm {largest!r} > operator bound {operator_norm!r}")
    return ColumnProfile(norms=norms, hs_norm=hs, operator_norm_upper=float(operator_norm))


# ============================================================================
# PLAIN-TEXT FORMAT
# ============================================================================

def format_matrix(m: Matrix) -> str:
    lines = [f"{m.rows} {m.cols}"]
    for row in m.data:
        lines.append(' '.join(FLOAT_FORMAT % v for v in row))
    return '\n'.join(lines) + '\n'


def parse_matrix(text: str) -> Matrix:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("Empty matrix text")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"Header must be 'rows cols', got {lines[0]!r}")
    rows, cols = int(header[0]), int(header[1])
    body = lines[1:]
    if len(body) != rows:
        raise ValueError(f"Expected {rows} rows, found {len(body)}")
    values = []
    for i, line in enumerate(body):
        row = [float(tok) for tok in line.split()]
        if len(row) != cols:
            raise ValueError(f"Row {i} has {len(row)} entries, expected {cols}")
        values.append(row)
    return Matrix(np.array(values))


def save_matrix(m: Matrix, path) -> None:
    Path(path).write_text(format_matrix(m))
    logger.debug(f"Wrote {m.rows}x{m.cols} matrix to {path}")


def load_matrix(path) -> Matrix:
    return parse_matrix(Path(path).read_text())
