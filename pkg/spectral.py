import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from constants import (POWER_TOL, POWER_MAX_ITER, POWER_ROUNDOFF, FULL_SVD_GUARD, JACOBI_OFFDIAG_TOL,
                       JACOBI_MAX_SWEEPS, UNIT_NORM_TOL)
from distributions import derive_seed, make_rng
from matrix_core import Matrix, as_array

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpectralResult:
    value: float
    iterations: int
    converged: bool
    residual: float


class NetBounds(NamedTuple):
    lower: float
    upper: float


# ============================================================================
# POWER ITERATION
# ============================================================================

def _power_run(arr: np.ndarray, tol: float, max_iter: int, seed: int) -> SpectralResult:
    """
    One power-iteration run on the Gram operator arrᵀarr. The quotient
    increments shrink geometrically, so the remaining error is estimated
    as change·rate/(1 - rate) with rate the ratio of the last two changes.
    """
    rng = make_rng(seed)
    x = rng.standard_normal(arr.shape[1])
    x /= np.linalg.norm(x)

    lam_old = None
    change_old = None
    residual = math.inf
    for it in range(1, max_iter + 1):
        y = arr @ x
        lam = float(y @ y)
        z = arr.T @ y
        z_norm = float(np.linalg.norm(z))
        if z_norm == 0.0:
            # start vector fell into the null space
            x = rng.standard_normal(arr.shape[1])
            x /= np.linalg.norm(x)
            lam_old = change_old = None
            continue
        if lam_old is not None:
            change = abs(lam - lam_old) / lam
            rate = change / change_old if change_old else math.inf
            tail = change * rate / (1.0 - rate) if rate < 1.0 else math.inf
            residual = change + tail if math.isfinite(tail) else change
            if change < POWER_ROUNDOFF or (change < tol and tail < tol):
                return SpectralResult(math.sqrt(lam), it, True, residual)
            change_old = change
        lam_old = lam
        x = z / z_norm
    return SpectralResult(math.sqrt(lam_old or 0.0), max_iter, False, residual)


def spectral_norm(m: Matrix, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER,
                  seed: int = 0) -> SpectralResult:
    """
    Largest singular value by power iteration on the Gram operator.

    The Rayleigh quotient ‖m x‖² of a unit x never exceeds ‖m‖², so the
    returned value is a lower bound up to round-off. Converged means both
    the relative change of the quotient over one sweep and the estimated
    remaining error fell below tol. Nearly tied top singular values slow
    the iteration down; such runs hit max_iter and come back flagged.
    A non-converged run is repeated once from a second seed; the larger
    estimate is returned.
    """
    if tol <= 0:
        raise ValueError(f"Tolerance must be positive, got {tol}")
    arr = as_array(m)
    if not np.any(arr):
        return SpectralResult(0.0, 1, True, 0.0)
    # iterate in the smaller dimension
    work = arr if arr.shape[1] <= arr.shape[0] else arr.T

    result = _power_run(work, tol, max_iter, seed)
    if not result.converged:
        logger.warning(f"Power iteration did not converge in {max_iter} iterations "
                       f"(residual {result.residual:.3e}); restarting from a second seed")
        retry = _power_run(work, tol, max_iter, derive_seed(seed, 1))
        result = retry if retry.value > result.value else result
        if not result.converged:
            logger.warning(f"Power iteration flagged non-converged, value {result.value:.12g}")
    logger.debug(f"spectral_norm {arr.shape}: {result.value:.12g} after {result.iterations} iterations")
    return result


def operator_norm(m: Matrix, seed: int = 0) -> float:
    return spectral_norm(m, seed=seed).value


# ============================================================================
# CYCLIC JACOBI
# ============================================================================

def jacobi_eigenvalues(g: np.ndarray, tol: float = JACOBI_OFFDIAG_TOL,
                       max_sweeps: int = JACOBI_MAX_SWEEPS) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations"""
    a = np.array(g, dtype=np.float64, copy=True)
    n = a.shape[0]
    total = float(np.linalg.norm(a))
    if n == 1 or total == 0.0:
        return np.diag(a).copy()
    skip = 1e-14 * total / n

    for sweep in range(1, max_sweeps + 1):
        off = float(np.sqrt(max(np.sum(a ** 2) - np.sum(np.diag(a) ** 2), 0.0)))
        if off <= tol * total:
            logger.debug(f"Jacobi converged after {sweep - 1} sweeps (off {off:.3e})")
            return np.diag(a).copy()
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0

    off = float(np.sqrt(max(np.sum(a ** 2) - np.sum(np.diag(a) ** 2), 0.0)))
    if off > tol * total:
        raise RuntimeError(f"Jacobi did not reach off-diagonal mass {tol:.1e}·‖G‖ "
                           f"in {max_sweeps} sweeps (off {off:.3e}, ‖G‖ {total:.3e})")
    return np.diag(a).copy()


def singular_values_full(m: Matrix) -> np.ndarray:
    """All singular values, descending, from the Gram matrix of the smaller side"""
    arr = as_array(m)
    small = min(arr.shape)
    if small > FULL_SVD_GUARD:
        raise ValueError(f"Full solver limited to min(rows, cols) <= {FULL_SVD_GUARD}, got {arr.shape}")
    g = arr.T @ arr if arr.shape[0] >= arr.shape[1] else arr @ arr.T
    g = 0.5 * (g + g.T)
    eigenvalues = jacobi_eigenvalues(g)
    values = np.sqrt(np.clip(eigenvalues, 0.0, None))
    return np.sort(values)[::-1]


def smallest_singular_value(m: Matrix) -> float:
    arr = as_array(m)
    if arr.shape[0] < arr.shape[1]:
        raise ValueError(f"s_min needs rows >= cols, got {arr.shape[0]}x{arr.shape[1]}")
    return float(singular_values_full(m)[-1])


# ============================================================================
# NETS AND SIMPLE LOWER BOUNDS
# ============================================================================

def net_norm_bounds(m: Matrix, eps: float, net) -> NetBounds:
    """
    Norm bracket from an eps-net of the sphere: sup over the net of ‖m x‖
    and that value divided by (1 - eps).
    """
    if not (0 < eps < 1):
        raise ValueError(f"Net radius eps must lie in (0, 1), got {eps}")
    arr = as_array(m)
    points = np.asarray(net, dtype=np.float64)
    if points.ndim == 1:
        if points.size % arr.shape[1]:
            raise ValueError(f"Flat net of {points.size} values does not split into vectors of "
                             f"dimension {arr.shape[1]}")
        points = points.reshape(-1, arr.shape[1])
    if points.ndim != 2 or points.shape[1] != arr.shape[1]:
        raise ValueError(f"Net of shape {points.shape} does not match a matrix with {arr.shape[1]} columns")
    lengths = np.linalg.norm(points, axis=1)
    bad = np.flatnonzero(np.abs(lengths - 1.0) > UNIT_NORM_TOL)
    if bad.size:
        raise ValueError(f"Net vector {int(bad[0])} has norm {lengths[bad[0]]!r}, expected 1")
    images = np.linalg.norm(points @ arr.T, axis=1)
    lower = float(images.max())
    return NetBounds(lower, lower / (1.0 - eps))


def row_col_lower_bound(m: Matrix) -> float:
    """max over rows and columns of their Euclidean norms; never exceeds ‖m‖"""
    arr = as_array(m)
    return float(max(np.linalg.norm(arr, axis=0).max(), np.linalg.norm(arr, axis=1).max()))
