import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
from numpy.random import PCG64, Generator, SeedSequence
from scipy.special import gamma as gamma_fn

from constants import DEFAULT_MOMENT_EPS
from matrix_core import Matrix

logger = logging.getLogger(__name__)

KINDS = ('gaussian', 'rademacher', 'sparse_sign', 'symmetric_pareto', 'student_t', 'bounded_uniform')
NORMALIZATIONS = ('none', 'unit_variance', 'unit_moment')

# Parameters each kind requires, with their defaults
KIND_PARAMS = {
    'gaussian': {},
    'rademacher': {},
    'sparse_sign': {'p': None},
    'symmetric_pareto': {'alpha': None, 'scale': 1.0},
    'student_t': {'nu': None},
    'bounded_uniform': {'half_width': 1.0},
}


# ============================================================================
# RNG
# ============================================================================

def derive_seed(base_seed: int, index: int) -> int:
    """
    Mix (base_seed, index) into a 64-bit stream seed.

    The mixing function is numpy's SeedSequence hash of the pair; the first
    64-bit word of its generated state is the derived seed.
    """
    ss = SeedSequence([int(base_seed) & 0xFFFFFFFFFFFFFFFF, int(index) & 0xFFFFFFFFFFFFFFFF])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> Generator:
    return Generator(PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True)
class EntryDistribution:
    """One i.i.d. entry law, symmetric by construction"""
    kind: str
    params: Dict[str, float] = field(default_factory=dict)
    normalization: str = 'none'

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"Unknown distribution kind '{self.kind}'. Valid kinds: {', '.join(KINDS)}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"Unknown normalization '{self.normalization}'. "
                             f"Valid modes: {', '.join(NORMALIZATIONS)}")
        merged = dict(KIND_PARAMS[self.kind])
        merged.update(self.params or {})
        for name, value in merged.items():
            if value is None:
                raise ValueError(f"Distribution '{self.kind}' requires parameter '{name}'")
        object.__setattr__(self, 'params', merged)
        self._validate()

    def _validate(self):
        p = self.params
        if self.kind == 'sparse_sign' and not (0 < p['p'] <= 1):
            raise ValueError(f"SparseSign sparsity must lie in (0, 1], got {p['p']}")
        if self.kind == 'symmetric_pareto':
            if p['alpha'] <= 2:
                raise ValueError(f"SymmetricPareto tail exponent must exceed 2, got {p['alpha']}")
            if p['scale'] <= 0:
                raise ValueError(f"SymmetricPareto scale must be positive, got {p['scale']}")
        if self.kind == 'student_t' and p['nu'] <= 2:
            raise ValueError(f"Student t degrees of freedom must exceed 2, got {p['nu']}")
        if self.kind == 'bounded_uniform' and p['half_width'] <= 0:
            raise ValueError(f"BoundedUniform half-width must be positive, got {p['half_width']}")
        if 'eps' in p and not (0 < p['eps'] < 1):
            raise ValueError(f"Moment exponent eps must lie in (0, 1), got {p['eps']}")

    @property
    def eps(self) -> float:
        return float(self.params.get('eps', DEFAULT_MOMENT_EPS))

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'params': dict(self.params), 'normalization': self.normalization}

    @classmethod
    def from_dict(cls, data: dict) -> 'EntryDistribution':
        try:
            return cls(kind=data['kind'], params=dict(data.get('params', {})),
                       normalization=data.get('normalization', 'none'))
        except KeyError as exc:
            raise ValueError(f"Distribution JSON is missing field {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> 'EntryDistribution':
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class MomentProfile:
    variance: float
    fourth_moment: float
    four_plus_eps_moment: float
    eps: float
    bound: float

    def __post_init__(self):
        if math.isfinite(self.fourth_moment) and self.variance > math.sqrt(self.fourth_moment) * (1 + 1e-12):
            raise ValueError(f"Lyapunov ordering violated: variance {self.variance} "
                             f"> sqrt(fourth moment) {math.sqrt(self.fourth_moment)}")
        if math.isfinite(self.bound) and not (math.isfinite(self.variance) and math.isfinite(self.fourth_moment)
                                              and math.isfinite(self.four_plus_eps_moment)):
            raise ValueError("Bounded law must have finite moments")


# ============================================================================
# CLOSED-FORM MOMENTS
# ============================================================================

def _raw_absolute_moment(d: EntryDistribution, order: float) -> float:
    """E|X|^order of the unscaled law; math.inf where the integral diverges"""
    p = d.params
    if d.kind == 'gaussian':
        return 2 ** (order / 2) * gamma_fn((order + 1) / 2) / math.sqrt(math.pi)
    if d.kind == 'rademacher':
        return 1.0
    if d.kind == 'sparse_sign':
        return float(p['p'])
    if d.kind == 'symmetric_pareto':
        alpha, scale = p['alpha'], p['scale']
        if order >= alpha:
            return math.inf
        return alpha * scale ** order / (alpha - order)
    if d.kind == 'student_t':
        nu = p['nu']
        if order >= nu:
            return math.inf
        return (nu ** (order / 2) * gamma_fn((order + 1) / 2) * gamma_fn((nu - order) / 2)
                / (math.sqrt(math.pi) * gamma_fn(nu / 2)))
    if d.kind == 'bounded_uniform':
        return p['half_width'] ** order / (order + 1)
    raise ValueError(f"Unsupported distribution kind '{d.kind}'")


def _raw_bound(d: EntryDistribution) -> float:
    if d.kind in ('rademacher', 'sparse_sign'):
        return 1.0
    if d.kind == 'bounded_uniform':
        return float(d.params['half_width'])
    return math.inf


def normalization_scale(d: EntryDistribution) -> float:
    """Factor applied to raw samples for the configured normalization mode"""
    if d.normalization == 'none':
        return 1.0
    if d.normalization == 'unit_variance':
        var = _raw_absolute_moment(d, 2.0)
        return 1.0 / math.sqrt(var)
    order = 4.0 + d.eps
    moment = _raw_absolute_moment(d, order)
    if not math.isfinite(moment):
        raise ValueError(f"Cannot normalize '{d.kind}' {d.params} to unit ({order})-th moment: "
                         f"the moment is infinite")
    return moment ** (-1.0 / order)


def absolute_moment(d: EntryDistribution, order: float) -> float:
    if order <= 0:
        raise ValueError(f"Moment order must be positive, got {order}")
    raw = _raw_absolute_moment(d, order)
    if not math.isfinite(raw):
        return math.inf
    return raw * normalization_scale(d) ** order


def theoretical_profile(d: EntryDistribution) -> MomentProfile:
    """Exact moments of the normalized law, math.inf where divergent"""
    scale = normalization_scale(d)
    bound = _raw_bound(d) * scale
    return MomentProfile(
        variance=absolute_moment(d, 2.0),
        fourth_moment=absolute_moment(d, 4.0),
        four_plus_eps_moment=absolute_moment(d, 4.0 + d.eps),
        eps=d.eps,
        bound=bound,
    )


# ============================================================================
# SAMPLING
# ============================================================================

def _draw_raw(d: EntryDistribution, rng: Generator, shape) -> np.ndarray:
    p = d.params
    if d.kind == 'gaussian':
        return rng.standard_normal(shape)
    if d.kind == 'rademacher':
        return 2.0 * rng.integers(0, 2, size=shape).astype(np.float64) - 1.0
    if d.kind == 'sparse_sign':
        signs = 2.0 * rng.integers(0, 2, size=shape).astype(np.float64) - 1.0
        mask = rng.random(shape) < p['p']
        return np.where(mask, signs, 0.0)
    if d.kind == 'symmetric_pareto':
        # inverse CDF: P(|X| > x) = (scale/x)^alpha for x ≥ scale
        u = 1.0 - rng.random(shape)
        magnitude = p['scale'] * u ** (-1.0 / p['alpha'])
        signs = 2.0 * rng.integers(0, 2, size=shape).astype(np.float64) - 1.0
        return signs * magnitude
    if d.kind == 'student_t':
        return rng.standard_t(p['nu'], size=shape)
    if d.kind == 'bounded_uniform':
        return rng.uniform(-p['half_width'], p['half_width'], size=shape)
    raise ValueError(f"Unsupported distribution kind '{d.kind}'")


def sample_array(d: EntryDistribution, rows: int, cols: int, seed: int) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ValueError(f"Sample dimensions must be positive, got {rows}x{cols}")
    rng = make_rng(seed)
    values = _draw_raw(d, rng, (rows, cols))
    scale = normalization_scale(d)
    return values if scale == 1.0 else values * scale


def sample_matrix(d: EntryDistribution, rows: int, cols: int, seed: int) -> Matrix:
    return Matrix(sample_array(d, rows, cols, seed))


def empirical_moment(d: EntryDistribution, order: float, trials: int, seed: int) -> float:
    """Monte Carlo mean of |X|^order over `trials` draws"""
    if trials < 1:
        raise ValueError(f"Need at least one trial, got {trials}")
    samples = sample_array(d, 1, trials, seed).ravel()
    return float(np.mean(np.abs(samples) ** order))


def describe(d: EntryDistribution) -> str:
    params = ', '.join(f"{k}={v}" for k, v in sorted(d.params.items()))
    return f"{d.kind}({params}) [{d.normalization}]"
