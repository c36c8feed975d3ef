import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, NamedTuple, Sequence

import numpy as np
import pandas as pd
from scipy.special import gammaln

from constants import (DEFAULT_C0_GAUSS, DEFAULT_C_MOMENTS, CONDITIONAL_EXP_CONSTANT, FLOAT_FORMAT,
                       STREAM_GAUSS, STREAM_SIGNS, STREAM_VECTOR, STREAM_A)
from distributions import make_rng, derive_seed
from matrix_core import Matrix
from spectral import spectral_norm

logger = logging.getLogger(__name__)

TABULATION_COLUMNS = ['t', 'bound', 'empirical', 'trials']


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True)
class TailBound:
    """A tail bound t ↦ P(deviation > t), clamped to [0, 1]"""
    bound_fn: Callable[[np.ndarray], np.ndarray]
    constants: Dict[str, float] = field(default_factory=dict)
    source: str = ''

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=np.float64)
        if np.any(t_arr < 0):
            raise ValueError(f"Tail bounds are evaluated at t >= 0, got {t}")
        values = np.clip(self.bound_fn(t_arr), 0.0, 1.0)
        return float(values) if values.ndim == 0 else values


@dataclass(frozen=True, eq=False)
class EmpiricalTail:
    samples: np.ndarray

    @classmethod
    def from_samples(cls, samples) -> 'EmpiricalTail':
        values = np.sort(np.asarray(samples, dtype=np.float64).ravel())
        if values.size == 0:
            raise ValueError("Empirical tail needs at least one sample")
        return cls(values)

    @property
    def count(self) -> int:
        return int(self.samples.size)

    def exceedance(self, t):
        """#{samples > t} / count"""
        above = self.count - np.searchsorted(self.samples, t, side='right')
        fraction = above / self.count
        return float(fraction) if np.ndim(fraction) == 0 else fraction


class TruncationCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


class ConditioningCheck(NamedTuple):
    conditional_mean: float
    overall_mean: float
    standard_error: float
    holds: bool


# ============================================================================
# CLOSED-FORM BOUNDS
# ============================================================================

def bennett_h(u):
    u = np.asarray(u, dtype=np.float64)
    return (1.0 + u) * np.log1p(u) - u


def bennett_tail(sigma_sq: float) -> TailBound:
    if sigma_sq <= 0:
        raise ValueError(f"Variance must be positive, got {sigma_sq}")
    return TailBound(lambda t: np.exp(-sigma_sq * bennett_h(t / sigma_sq)),
                     {'sigma_sq': sigma_sq}, 'bennett')


def chebyshev_tail(sigma_sq: float) -> TailBound:
    if sigma_sq <= 0:
        raise ValueError(f"Variance must be positive, got {sigma_sq}")

    def fn(t):
        with np.errstate(divide='ignore'):
            return np.where(t > 0, sigma_sq / np.maximum(t, 1e-300) ** 2, 1.0)
    return TailBound(fn, {'sigma_sq': sigma_sq}, 'chebyshev')


def gaussian_lipschitz_tail(lip: float, c0: float = DEFAULT_C0_GAUSS) -> TailBound:
    if lip <= 0:
        raise ValueError(f"Lipschitz constant must be positive, got {lip}")
    if not (0 < c0 < 1):
        raise ValueError(f"c0 must lie in (0, 1), got {c0}")
    return TailBound(lambda t: np.exp(-c0 * t ** 2 / lip ** 2),
                     {'lip': lip, 'c0': c0}, 'gaussian_concentration')


def exponential_sum_tail(d, c0: float = DEFAULT_C0_GAUSS) -> TailBound:
    """
    Bound on P(√(Σ d_i² g_i²) > ‖d‖₂ + t). The constants record the
    center ‖d‖₂ the deviation is measured from.
    """
    d = np.asarray(d, dtype=np.float64).ravel()
    sup = float(np.max(np.abs(d), initial=0.0))
    if sup == 0.0:
        raise ValueError("exponential_sum_tail needs a nonzero coefficient vector")
    tail = gaussian_lipschitz_tail(sup, c0)
    return TailBound(tail.bound_fn, {'center': float(np.linalg.norm(d)), 'sup': sup, 'c0': c0},
                     'exponential_deviation')


def talagrand_tail(k_bound: float) -> TailBound:
    """P(|f - E f| > s) ≤ 4·exp(-(s/K)²/4) for convex 1-Lipschitz f of variables bounded by K"""
    if k_bound <= 0:
        raise ValueError(f"Bound K must be positive, got {k_bound}")
    return TailBound(lambda s: 4.0 * np.exp(-(s / k_bound) ** 2 / 4.0), {'K': k_bound}, 'talagrand')


def small_aij_tail(scale: float) -> TailBound:
    """Excess of ‖BA‖ over C·√(Mn), in absolute units; scale = √(Mn)"""
    if scale <= 0:
        raise ValueError(f"Scale √(Mn) must be positive, got {scale}")
    return TailBound(lambda s: 4.0 * np.exp(-(s / scale) ** 2 / 4.0), {'scale': scale}, 'small_aij_tail')


def moments_to_tail(m_param: float, c: float = DEFAULT_C_MOMENTS) -> TailBound:
    if m_param < 1:
        raise ValueError(f"m must be at least 1, got {m_param}")
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    return TailBound(lambda t: 2.0 * m_param * np.exp(-c * t ** 2), {'m': m_param, 'c': c}, 'moments_to_tails')


def _tensor_sum(u: np.ndarray, weights=None) -> Matrix:
    w = np.ones(u.shape[0]) if weights is None else weights
    return Matrix((u * w[:, None]).T @ u)


def rudelson_bound(u, p: float, big_c: float) -> float:
    """C(√p + √log m) · max‖u_i‖ · ‖Σ u_i⊗u_i‖^(1/2), m the ambient dimension"""
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    if u.shape[0] == 0 or u.size == 0:
        raise ValueError("rudelson_bound needs a non-empty vector family")
    if p < 1:
        raise ValueError(f"Moment order p must be at least 1, got {p}")
    m = u.shape[1]
    spread = math.sqrt(spectral_norm(_tensor_sum(u)).value)
    largest = float(np.linalg.norm(u, axis=1).max())
    return big_c * (math.sqrt(p) + math.sqrt(math.log(m))) * largest * spread


def sign_tensor_norms(u, draws: int, seed: int) -> np.ndarray:
    """‖Σ ε_i u_i⊗u_i‖ over independent sign draws"""
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    rng = make_rng(seed)
    signs = 2.0 * rng.integers(0, 2, size=(draws, u.shape[0])).astype(np.float64) - 1.0
    # symmetric sums: the norm is the largest |eigenvalue|, and ±λ pairs stall power iteration
    return np.array([np.abs(np.linalg.eigvalsh(_tensor_sum(u, eps).data)).max() for eps in signs])


def truncation_bound(samples, m_cut: float, p: float) -> TruncationCheck:
    """Empirical E X·1{X ≥ M} against E X^p / M^(p-1)"""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if np.any(x < 0):
        raise ValueError("truncation_bound needs non-negative samples")
    if p < 1:
        raise ValueError(f"p must be at least 1, got {p}")
    if m_cut <= 0:
        raise ValueError(f"Cutoff must be positive, got {m_cut}")
    lhs = float(np.mean(np.where(x >= m_cut, x, 0.0)))
    rhs = float(np.mean(x ** p) / m_cut ** (p - 1))
    return TruncationCheck(lhs, rhs, lhs <= rhs * (1 + 1e-12))


def conditional_exp_bound(k_scale: float, l_scale: float) -> float:
    """E X ≤ K·√L·(1 + 2(√2 + 1)) under E(X²|Y ≤ t) ≤ K²t and P(Y > Lt) ≤ t^-2"""
    if k_scale <= 0 or l_scale <= 0:
        raise ValueError(f"K and L must be positive, got K={k_scale}, L={l_scale}")
    return k_scale * math.sqrt(l_scale) * CONDITIONAL_EXP_CONSTANT


def conditioning_check(samples, cutoff: float) -> ConditioningCheck:
    """E(X | X ≤ K) against E X, with 3 standard errors of slack"""
    x = np.asarray(samples, dtype=np.float64).ravel()
    kept = x[x <= cutoff]
    if kept.size == 0:
        raise ValueError(f"No samples at or below cutoff {cutoff}")
    overall = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    conditional = float(kept.mean())
    return ConditioningCheck(conditional, overall, se, conditional <= overall + 3.0 * se)


# ============================================================================
# TABULATION AND AUDITS
# ============================================================================

def tabulate(bound: TailBound, empirical: EmpiricalTail, ts: Iterable[float]) -> pd.DataFrame:
    ts = np.asarray(list(ts), dtype=np.float64)
    return pd.DataFrame({
        't': ts,
        'bound': np.atleast_1d(bound(ts)),
        'empirical': np.atleast_1d(empirical.exceedance(ts)),
        'trials': empirical.count,
    }, columns=TABULATION_COLUMNS)


def audit_domination(bound: TailBound, empirical: EmpiricalTail, ts: Iterable[float]) -> pd.DataFrame:
    """Tabulation plus the verdict empirical ≤ bound + 3·√(bound/trials)"""
    df = tabulate(bound, empirical, ts)
    df['slack'] = 3.0 * np.sqrt(df['bound'] / df['trials'])
    df['dominated'] = df['empirical'] <= df['bound'] + df['slack']
    failed = df.loc[~df['dominated'], 't'].tolist()
    if failed:
        logger.warning(f"{bound.source}: empirical tail above bound at t = {failed}")
    return df


def save_tabulation(df: pd.DataFrame, path) -> None:
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote tail tabulation ({len(df)} rows) to {Path(path)}")


def _expected_gaussian_norm(dim: int) -> float:
    return math.sqrt(2.0) * math.exp(gammaln((dim + 1) / 2.0) - gammaln(dim / 2.0))


def run_concentration_audit(trials: int, seed: int, ts: Sequence[float] = (1.0, 2.0, 3.0),
                            c0: float = DEFAULT_C0_GAUSS) -> pd.DataFrame:
    """
    The four canonical domination audits on `trials` samples each:
      bennett       sum of 10 sparse signs with p = 0.1 (σ² = 1)
      gaussian      ‖g‖₂ - E‖g‖₂ in R^10, a 1-Lipschitz functional
      exp_sum       √(Σ d_i² g_i²) - ‖d‖₂ with d = linspace(0.2, 1, 10)
      talagrand     |‖x‖₂ - mean| for x uniform on [-1, 1]^20 (K = 1)
    """
    if trials < 1:
        raise ValueError(f"Need at least one trial, got {trials}")
    frames = []

    rng = make_rng(derive_seed(seed, STREAM_SIGNS))
    signs = 2.0 * rng.integers(0, 2, size=(trials, 10)) - 1.0
    mask = rng.random((trials, 10)) < 0.1
    s = np.sum(np.where(mask, signs, 0.0), axis=1)
    frames.append(('bennett', audit_domination(bennett_tail(1.0), EmpiricalTail.from_samples(s), ts)))

    g = make_rng(derive_seed(seed, STREAM_GAUSS)).standard_normal((trials, 10))
    dev = np.linalg.norm(g, axis=1) - _expected_gaussian_norm(10)
    frames.append(('gaussian', audit_domination(gaussian_lipschitz_tail(1.0, c0),
                                                EmpiricalTail.from_samples(dev), ts)))

    d = np.linspace(0.2, 1.0, 10)
    g = make_rng(derive_seed(seed, STREAM_VECTOR)).standard_normal((trials, 10))
    dev = np.sqrt(np.sum((d * g) ** 2, axis=1)) - np.linalg.norm(d)
    frames.append(('exp_sum', audit_domination(exponential_sum_tail(d, c0), EmpiricalTail.from_samples(dev), ts)))

    x = make_rng(derive_seed(seed, STREAM_A)).uniform(-1.0, 1.0, size=(trials, 20))
    f = np.linalg.norm(x, axis=1)
    dev = np.abs(f - f.mean())
    frames.append(('talagrand', audit_domination(talagrand_tail(1.0), EmpiricalTail.from_samples(dev), ts)))

    out = pd.concat([df.assign(audit=name) for name, df in frames], ignore_index=True)
    out = out[['audit'] + [c for c in out.columns if c != 'audit']]
    logger.info(f"Concentration audit: {int(out['dominated'].sum())}/{len(out)} rows dominated "
                f"over {trials} trials")
    return out
