import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from constants import (STREAM_A, STREAM_B, STREAM_POWER, STREAM_SIGNS, STREAM_GAUSS, STREAM_VECTOR,
                       FACTOR_SEED_OFFSET, REPORT_COLUMNS, FLOAT_FORMAT, QUANTILE_GRID,
                       DEFAULT_C0_EPS, DEFAULT_C0_GAUSS)
from b_factors import BFactorSpec, build_b, b_profile, column_split, column_norm_threshold, restrict_columns
from concentration import (EmpiricalTail, audit_domination, gaussian_lipschitz_tail, rudelson_bound,
                           sign_tensor_norms)
from distributions import (EntryDistribution, theoretical_profile, sample_matrix, derive_seed, make_rng,
                           describe)
from matrix_core import Matrix, InequalityViolation, multiply, hilbert_schmidt_norm, column_norms
from proof_pipeline import dyadic_decompose, implied_scale, almost_square_scale, row_col_bounds
from spectral import spectral_norm, operator_norm, smallest_singular_value

logger = logging.getLogger(__name__)

Dims = Tuple[int, int, int]


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True)
class ExperimentConfig:
    """
    One Monte Carlo experiment. dims holds (m, n, N) triples: B is m x N,
    A is N x n, W = BA is m x n. b_factor's own n and N are replaced per
    triple.
    """
    experiment: str
    dims: List[Dims]
    distribution: EntryDistribution
    b_factor: BFactorSpec
    trials: int = 20
    base_seed: int = 0
    params: Dict = field(default_factory=dict)
    ceiling: Optional[float] = None
    quantile: float = 1.0

    def __post_init__(self):
        dims = [tuple(int(v) for v in d) for d in self.dims]
        if not dims:
            raise ValueError("Experiment needs at least one (m, n, N) triple")
        for d in dims:
            if len(d) != 3 or min(d) < 1:
                raise ValueError(f"Dimensions must be positive (m, n, N) triples, got {d}")
        object.__setattr__(self, 'dims', dims)
        object.__setattr__(self, 'params', dict(self.params or {}))
        if self.trials < 1:
            raise ValueError(f"Need at least one trial, got {self.trials}")
        if not (0 < self.quantile <= 1):
            raise ValueError(f"Quantile must lie in (0, 1], got {self.quantile}")
        if self.ceiling is not None and self.ceiling <= 0:
            raise ValueError(f"Ceiling must be positive, got {self.ceiling}")

    @property
    def eps(self) -> float:
        return float(self.params.get('eps', self.distribution.eps))

    def to_dict(self) -> dict:
        return {
            'experiment': self.experiment,
            'dims': [list(d) for d in self.dims],
            'distribution': self.distribution.to_dict(),
            'b_factor': self.b_factor.to_dict(),
            'trials': self.trials,
            'base_seed': self.base_seed,
            'params': dict(self.params),
            'ceiling': self.ceiling,
            'quantile': self.quantile,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'ExperimentConfig':
        try:
            dims = [tuple(d) for d in data['dims']]
            b_data = dict(data['b_factor'])
            if dims and len(dims[0]) == 3:
                b_data.setdefault('n', dims[0][0])
                b_data.setdefault('N', dims[0][2])
            return cls(
                experiment=data['experiment'],
                dims=dims,
                distribution=EntryDistribution.from_dict(data['distribution']),
                b_factor=BFactorSpec.from_dict(b_data),
                trials=int(data.get('trials', 20)),
                base_seed=int(data.get('base_seed', 0)),
                params=dict(data.get('params', {})),
                ceiling=data.get('ceiling'),
                quantile=float(data.get('quantile', 1.0)),
            )
        except KeyError as exc:
            raise ValueError(f"Experiment config is missing field {exc}") from exc


@dataclass(frozen=True)
class TrialRecord:
    experiment: str
    m: int
    n: int
    N: int
    trial: int
    seed: int
    measured: float
    normalizer: float
    ratio: float

    def __post_init__(self):
        if not self.normalizer > 0:
            raise ValueError(f"Trial {self.trial}: normalizer must be positive, got {self.normalizer}")
        if self.ratio != self.measured / self.normalizer:
            raise ValueError(f"Trial {self.trial}: ratio {self.ratio!r} is not measured/normalizer")


@dataclass
class ExperimentReport:
    experiment: str
    records: List[TrialRecord]
    fitted_constant: float
    quantile: float
    ceiling: Optional[float] = None
    checks: Dict[str, bool] = field(default_factory=dict)
    extras: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        within = self.ceiling is None or self.fitted_constant <= self.ceiling
        return within and all(self.checks.values())

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.records])

    @property
    def mean_ratio(self) -> float:
        return float(self.ratios.mean())

    @property
    def ratio_standard_error(self) -> float:
        r = self.ratios
        return float(r.std(ddof=1) / math.sqrt(r.size)) if r.size > 1 else 0.0


class TrialTask(NamedTuple):
    group: int
    dims_index: int
    m: int
    n: int
    N: int
    trial: int
    seed: int


# ============================================================================
# HARNESS
# ============================================================================

def fit_constant(records: Sequence, quantile: float = 1.0) -> float:
    """Nearest-rank quantile of the ratios: the ceil(q·count)-th smallest"""
    ratios = np.sort(np.array([getattr(r, 'ratio', r) for r in records], dtype=np.float64))
    if ratios.size == 0:
        raise ValueError("Cannot fit a constant to an empty record set")
    if not (0 < quantile <= 1):
        raise ValueError(f"Quantile must lie in (0, 1], got {quantile}")
    rank = max(1, int(math.ceil(quantile * ratios.size - 1e-12)))
    return float(ratios[rank - 1])


def make_record(cfg: ExperimentConfig, task: TrialTask, measured: float, normalizer: float) -> TrialRecord:
    measured = float(measured)
    normalizer = float(normalizer)
    return TrialRecord(cfg.experiment, task.m, task.n, task.N, task.trial, task.seed,
                       measured, normalizer, measured / normalizer)


def trial_tasks(cfg: ExperimentConfig, groups: int = 1) -> List[TrialTask]:
    """Trials in (group, dims, trial) order; trial indices run globally"""
    tasks = []
    index = 0
    for g in range(groups):
        for d, (m, n, N) in enumerate(cfg.dims):
            for _ in range(cfg.trials):
                tasks.append(TrialTask(g, d, m, n, N, index, derive_seed(cfg.base_seed, index)))
                index += 1
    return tasks


def fixed_seed(cfg: ExperimentConfig, dims_index: int, stream: int) -> int:
    return derive_seed(derive_seed(cfg.base_seed, FACTOR_SEED_OFFSET + dims_index), stream)


def run_trials(tasks: List[TrialTask], fn: Callable, workers: int = 1) -> list:
    """Results in task order, whatever the completion order"""
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _factors(cfg: ExperimentConfig, spec_for: Optional[Callable] = None) -> List[Matrix]:
    factors = []
    for d, (m, n, N) in enumerate(cfg.dims):
        spec = spec_for(d, m, n, N) if spec_for else cfg.b_factor.with_dims(m, N)
        factors.append(build_b(spec, seed=fixed_seed(cfg, d, STREAM_B)))
    return factors


def _sample_product(dist: EntryDistribution, b: Matrix, task: TrialTask) -> Tuple[Matrix, Matrix]:
    a = sample_matrix(dist, task.N, task.n, derive_seed(task.seed, STREAM_A))
    return a, multiply(b, a)


def _norm(w: Matrix, task: TrialTask) -> float:
    return spectral_norm(w, seed=derive_seed(task.seed, STREAM_POWER)).value


def _dims_key(m: int, n: int, N: int) -> str:
    return f"{m}x{n}x{N}"


def _fitted_by(records: List[TrialRecord], keys: List, quantile: float) -> Dict:
    grouped: Dict = {}
    for key, rec in zip(keys, records):
        grouped.setdefault(key, []).append(rec)
    return {key: fit_constant(recs, quantile) for key, recs in grouped.items()}


def _spread(values) -> float:
    values = [v for v in values if v > 0]
    return max(values) / min(values) if values else 1.0


def _finish(cfg: ExperimentConfig, records: List[TrialRecord], checks: Optional[Dict] = None,
            extras: Optional[Dict] = None) -> ExperimentReport:
    fitted = fit_constant(records, cfg.quantile)
    report = ExperimentReport(cfg.experiment, records, fitted, cfg.quantile, cfg.ceiling,
                              {k: bool(v) for k, v in (checks or {}).items()}, extras or {})
    logger.info(f"{cfg.experiment}: {len(records)} trials, fitted C = {fitted:.6g} "
                f"(q={cfg.quantile}), mean ratio {report.mean_ratio:.6g} ± {report.ratio_standard_error:.2g}")
    failed = [name for name, ok in report.checks.items() if not ok]
    if failed:
        logger.warning(f"{cfg.experiment}: failed checks {failed}")
    if cfg.ceiling is not None and fitted > cfg.ceiling:
        logger.warning(f"{cfg.experiment}: fitted C {fitted:.6g} above ceiling {cfg.ceiling}")
    return report


def _require_finite(cfg: ExperimentConfig, moment: str, hint: str):
    profile = theoretical_profile(cfg.distribution)
    value = getattr(profile, moment)
    if not math.isfinite(value):
        raise ValueError(f"{cfg.experiment}: {describe(cfg.distribution)} has infinite {moment}; {hint}")
    if value > 1.0 + 1e-12:
        logger.warning(f"{cfg.experiment}: {moment} of {describe(cfg.distribution)} is {value:.6g} > 1")
    return profile


# ============================================================================
# NORM BOUNDS
# ============================================================================

def run_main_bound(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """‖BA‖ against √n + √m; also against ‖B‖√n + ‖B‖_HS"""
    _require_finite(cfg, 'four_plus_eps_moment', "use the sharpness experiment for heavy tails")
    factors = _factors(cfg)
    strong = [operator_norm(b) * math.sqrt(n) + hilbert_schmidt_norm(b)
              for b, (m, n, N) in zip(factors, cfg.dims)]

    def trial(task: TrialTask):
        _, w = _sample_product(cfg.distribution, factors[task.dims_index], task)
        measured = _norm(w, task)
        record = make_record(cfg, task, measured, math.sqrt(task.n) + math.sqrt(task.m))
        scale = strong[task.dims_index]
        return record, (measured / scale if scale > 0 else 0.0)

    results = run_trials(trial_tasks(cfg), trial, workers)
    records = [r for r, _ in results]
    strong_ratios = [s for _, s in results]
    extras = {
        'strong_fitted': fit_constant(strong_ratios, cfg.quantile),
        'fitted_by_dims': _fitted_by(records, [_dims_key(r.m, r.n, r.N) for r in records], cfg.quantile),
    }
    return _finish(cfg, records, extras=extras)


def run_log_bound(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """‖BA‖ against √(n log 2n), plus ‖W‖² against n + log(2m)·max_j ‖X_j‖²"""
    _require_finite(cfg, 'fourth_moment', "the logarithmic bound needs a finite fourth moment")
    factors = _factors(cfg)

    def trial(task: TrialTask):
        _, w = _sample_product(cfg.distribution, factors[task.dims_index], task)
        measured = _norm(w, task)
        record = make_record(cfg, task, measured, math.sqrt(task.n * math.log(2 * task.n)))
        widest = float(np.max(column_norms(w) ** 2))
        return record, measured ** 2 / (task.n + math.log(2 * task.m) * widest)

    results = run_trials(trial_tasks(cfg), trial, workers)
    records = [r for r, _ in results]
    tensor = [t for _, t in results]
    extras = {
        'tensor_sum_fitted': fit_constant(tensor, cfg.quantile),
        'fitted_by_dims': _fitted_by(records, [_dims_key(r.m, r.n, r.N) for r in records], cfg.quantile),
    }
    return _finish(cfg, records, extras=extras)


def run_covariance(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Largest eigenvalue of WWᵀ/n against 1 + m/n"""
    _require_finite(cfg, 'four_plus_eps_moment', "use the sharpness experiment for heavy tails")
    factors = _factors(cfg)

    def trial(task: TrialTask):
        _, w = _sample_product(cfg.distribution, factors[task.dims_index], task)
        return make_record(cfg, task, _norm(w, task) ** 2 / task.n, 1.0 + task.m / task.n)

    return _finish(cfg, run_trials(trial_tasks(cfg), trial, workers))


def run_small_columns(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """
    B with every column norm at most M·log^(-1/2-1/eps)(2m); ‖BA‖
    against M^(1/2)·√n. With params.at_threshold the columns sit exactly
    on the threshold.
    """
    if cfg.b_factor.kind != 'diagonal_column_norms':
        raise ValueError(f"{cfg.experiment}: needs a diagonal_column_norms factor, got '{cfg.b_factor.kind}'")
    _require_finite(cfg, 'four_plus_eps_moment', "use the sharpness experiment for heavy tails")
    scale = float(cfg.params.get('M', 1.0))
    if scale < 1:
        raise ValueError(f"{cfg.experiment}: M must be at least 1, got {scale}")
    eps = cfg.eps
    thresholds = [column_norm_threshold(m, eps, scale) for m, n, N in cfg.dims]

    def spec_for(d, m, n, N):
        if cfg.params.get('at_threshold', False):
            return BFactorSpec('diagonal_column_norms', m, N, {'value': thresholds[d]})
        return cfg.b_factor.with_dims(m, N)

    factors = _factors(cfg, spec_for)
    for b, limit in zip(factors, thresholds):
        norms = column_norms(b)
        if norms.max() > limit * (1 + 1e-12):
            worst = int(np.argmax(norms))
            raise InequalityViolation("|B_i|_2 <= M log^(-1/2-1/eps)(2n)",
                                      f"column {worst} has norm {norms[worst]!r} > {limit!r}")

    def trial(task: TrialTask):
        _, w = _sample_product(cfg.distribution, factors[task.dims_index], task)
        return make_record(cfg, task, _norm(w, task), math.sqrt(scale) * math.sqrt(task.n))

    extras = {'thresholds': {_dims_key(*d): t for d, t in zip(cfg.dims, thresholds)}}
    return _finish(cfg, run_trials(trial_tasks(cfg), trial, workers), extras=extras)


def run_controlled_columns(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """
    Entries ±a with probability 1/a² (so E a² = 1, |a| ≤ a), column norms
    of B equal to b; ‖BA‖ against (1 + a·b^(1/2)·log^(1/4)(2n))·√n over
    the (a, b) grid in params.grid.
    """
    grid = [tuple(float(v) for v in pair) for pair in cfg.params.get('grid', [])]
    if not grid:
        raise ValueError(f"{cfg.experiment}: params.grid must list (a, b) pairs")
    for a_max, b_max in grid:
        if a_max < 1 or not (0 < b_max <= 1):
            raise ValueError(f"{cfg.experiment}: need a >= 1 and b in (0, 1], got ({a_max}, {b_max})")

    factors = {}
    for g, (_, b_max) in enumerate(grid):
        for d, (m, n, N) in enumerate(cfg.dims):
            spec = BFactorSpec('diagonal_column_norms', m, N, {'value': b_max})
            factors[g, d] = build_b(spec, seed=fixed_seed(cfg, d, STREAM_B))
    laws = [EntryDistribution('sparse_sign', {'p': 1.0 / a_max ** 2}) for a_max, _ in grid]

    def trial(task: TrialTask):
        a_max, b_max = grid[task.group]
        a = sample_matrix(laws[task.group], task.N, task.n, derive_seed(task.seed, STREAM_A))
        w = multiply(factors[task.group, task.dims_index], Matrix(a_max * a.data))
        normalizer = (1.0 + a_max * math.sqrt(b_max) * math.log(2 * task.n) ** 0.25) * math.sqrt(task.n)
        return make_record(cfg, task, _norm(w, task), normalizer)

    tasks = trial_tasks(cfg, groups=len(grid))
    records = run_trials(tasks, trial, workers)
    by_grid = _fitted_by(records, [f"a={grid[t.group][0]:g},b={grid[t.group][1]:g}" for t in tasks], cfg.quantile)
    stability = _spread(by_grid.values())
    factor = float(cfg.params.get('stability_factor', 2.0))
    return _finish(cfg, records, {'stable_over_grid': stability <= factor},
                   {'fitted_by_grid': by_grid, 'stability': stability})


def run_column_split(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """‖B_I A_I‖ + ‖B_Iᶜ A_Iᶜ‖ against √n, with |I| against its Markov bound"""
    _require_finite(cfg, 'four_plus_eps_moment', "use the sharpness experiment for heavy tails")
    eps = cfg.eps
    c0_eps = float(cfg.params.get('c0_eps', DEFAULT_C0_EPS))
    factors = _factors(cfg)
    splits = [column_split(b, eps, c0_eps) for b in factors]
    parts = [(restrict_columns(b, s.large), restrict_columns(b, s.small)) for b, s in zip(factors, splits)]

    def piece(b_part: Matrix, a: Matrix, rows: np.ndarray, task: TrialTask) -> float:
        if rows.size == 0:
            return 0.0
        return _norm(multiply(b_part, Matrix(a.data[rows])), task)

    def trial(task: TrialTask):
        split = splits[task.dims_index]
        b_large, b_small = parts[task.dims_index]
        a, w = _sample_product(cfg.distribution, factors[task.dims_index], task)
        total = piece(b_large, a, split.large, task) + piece(b_small, a, split.small, task)
        whole = _norm(w, task)
        return make_record(cfg, task, total, math.sqrt(task.n)), whole <= total * (1 + 1e-8) + 1e-12

    results = run_trials(trial_tasks(cfg), trial, workers)
    checks = {
        'large_count_below_bound': all(s.large.size < s.bound for s in splits),
        'triangle_inequality': all(ok for _, ok in results),
    }
    extras = {'split': {_dims_key(*d): {'large': int(s.large.size), 'bound': s.bound, 'threshold': s.threshold}
                        for d, s in zip(cfg.dims, splits)}}
    return _finish(cfg, [r for r, _ in results], checks, extras)


# ============================================================================
# SMALL ENTRIES AND ALMOST SQUARE MATRICES
# ============================================================================

def run_small_aij(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """
    ‖BA‖ against √(Mn) with M the smallest scale admitting the largest
    entry, M ≥ max(1, log(2N)/n). Reports dyadic level sparsity against
    2^(-(2+eps)(k-1)).
    """
    eps = cfg.eps
    exponent = 2.0 + eps
    factors = _factors(cfg)

    def trial(task: TrialTask):
        a, w = _sample_product(cfg.distribution, factors[task.dims_index], task)
        scale = max(1.0, implied_scale(a, exponent), math.log(2 * task.N) / task.n) * (1 + 1e-12)
        dec = dyadic_decompose(a, scale, eps, exponent)
        return make_record(cfg, task, _norm(w, task), math.sqrt(scale * task.n)), scale, dec.level_sparsity

    results = run_trials(trial_tasks(cfg), trial, workers)
    records = [r for r, _, _ in results]
    deepest = max(len(sparsity) for _, _, sparsity in results)
    # a level beyond a trial's cutoff holds no entries
    fractions = np.zeros((len(results), deepest))
    for row, (_, _, sparsity) in enumerate(results):
        fractions[row, :len(sparsity)] = sparsity
    weights = np.array([r.n * r.N for r in records], dtype=np.float64)

    sparsity_ok = True
    summary = {}
    for k in range(1, deepest + 1):
        predicted = 2.0 ** (-exponent * (k - 1))
        slack = 3.0 * math.sqrt(predicted / weights.sum())
        mean = float(np.average(fractions[:, k - 1], weights=weights))
        summary[k] = {'mean_fraction': mean, 'predicted_p_k': predicted}
        sparsity_ok &= mean <= predicted + slack
    extras = {'mean_M': float(np.mean([s for _, s, _ in results])), 'levels': summary}
    return _finish(cfg, records, {'level_sparsity_decay': sparsity_ok}, extras)


def run_almost_square(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """N ≤ n^(1+eps/10); ‖BA‖ against √n, with the random M of the reduction"""
    _require_finite(cfg, 'four_plus_eps_moment', "use the sharpness experiment for heavy tails")
    eps = cfg.eps
    for m, n, N in cfg.dims:
        if N > n ** (1.0 + eps / 10.0):
            raise ValueError(f"{cfg.experiment}: N={N} exceeds n^(1+eps/10) = {n ** (1.0 + eps / 10.0):.6g}")
    factors = _factors(cfg)

    def trial(task: TrialTask):
        a, w = _sample_product(cfg.distribution, factors[task.dims_index], task)
        return make_record(cfg, task, _norm(w, task), math.sqrt(task.n)), almost_square_scale(a, eps)

    results = run_trials(trial_tasks(cfg), trial, workers)
    scales = np.array([s for _, s in results])
    return _finish(cfg, [r for r, _ in results],
                   extras={'mean_M': float(scales.mean()), 'max_M': float(scales.max())})


def run_universal_deviation(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """
    Fixed coefficients a_ij drawn once per triple, fresh Gaussian
    multipliers per trial, fixed unit x: ‖B(g∘a)x‖ against K·√(np + log 2n)
    with K implied by the row and column conditions; the excess is
    audited against exp(-c0 t²).
    """
    p = float(cfg.params.get('p', 1.0))
    c0 = float(cfg.params.get('c0', DEFAULT_C0_GAUSS))
    ts = [float(t) for t in cfg.params.get('ts', [0.5, 1.0, 2.0, 3.0])]
    factors = _factors(cfg)

    coefficients, vectors, scales = [], [], []
    for d, (m, n, N) in enumerate(cfg.dims):
        a = sample_matrix(cfg.distribution, N, n, fixed_seed(cfg, d, STREAM_A))
        bounds = row_col_bounds(a, b_profile(factors[d]), p)
        if not bounds.entries_bounded:
            logger.warning(f"{cfg.experiment}: coefficients exceed 1 in magnitude (max {bounds.max_abs_entry:.4g})")
        if bounds.implied_k == 0:
            raise ValueError(f"{cfg.experiment}: coefficient matrix for {_dims_key(m, n, N)} is zero")
        x = make_rng(fixed_seed(cfg, d, STREAM_VECTOR)).standard_normal(n)
        coefficients.append(a)
        vectors.append(x / np.linalg.norm(x))
        scales.append(bounds.implied_k * math.sqrt(n * p + math.log(2 * n)))

    def trial(task: TrialTask):
        d = task.dims_index
        g = make_rng(derive_seed(task.seed, STREAM_GAUSS)).standard_normal((task.N, task.n))
        image = factors[d].data @ ((g * coefficients[d].data) @ vectors[d])
        return make_record(cfg, task, float(np.linalg.norm(image)), scales[d])

    records = run_trials(trial_tasks(cfg), trial, workers)
    excess = np.array([r.measured - r.normalizer for r in records])
    table = audit_domination(gaussian_lipschitz_tail(1.0, c0), EmpiricalTail.from_samples(excess), ts)
    report_mean = float(np.mean([r.ratio for r in records]))
    se = float(np.std([r.ratio for r in records], ddof=1) / math.sqrt(len(records))) if len(records) > 1 else 0.0
    checks = {'tail_dominated': bool(table['dominated'].all()), 'mean_below_bound': report_mean <= 1.0 + 3.0 * se}
    extras = {'tail': table.to_dict(orient='records'), 'normalizers': list(scales)}
    return _finish(cfg, records, checks, extras)


def run_sparse_norm(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """‖BA‖ for sparse sign entries against log^(3/2)(e/p)·√(np + log 2N), per p in params.p_grid"""
    if cfg.distribution.kind != 'sparse_sign':
        raise ValueError(f"{cfg.experiment}: needs a sparse_sign distribution, got '{cfg.distribution.kind}'")
    grid = [float(p) for p in cfg.params.get('p_grid', [cfg.distribution.params['p']])]
    laws = [EntryDistribution('sparse_sign', {'p': p}) for p in grid]
    factors = _factors(cfg)

    def trial(task: TrialTask):
        p = grid[task.group]
        _, w = _sample_product(laws[task.group], factors[task.dims_index], task)
        measured = _norm(w, task)
        normalizer = math.log(math.e / p) ** 1.5 * math.sqrt(task.n * p + math.log(2 * task.N))
        widest = float(column_norms(w).max())
        return make_record(cfg, task, measured, normalizer), measured >= widest * (1 - 1e-8)

    tasks = trial_tasks(cfg, groups=len(grid))
    results = run_trials(tasks, trial, workers)
    records = [r for r, _ in results]
    by_p = _fitted_by(records, [grid[t.group] for t in tasks], cfg.quantile)
    uniformity = _spread(by_p.values())
    factor = float(cfg.params.get('uniform_factor', 3.0))
    checks = {'uniform_over_p': uniformity <= factor, 'norm_dominates_columns': all(ok for _, ok in results)}
    return _finish(cfg, records, checks, {'fitted_by_p': by_p, 'uniformity': uniformity})


# ============================================================================
# SMALLEST SINGULAR VALUE AND SHARPNESS
# ============================================================================

def quantile_curve(ratios, grid: Sequence[float] = QUANTILE_GRID) -> Dict[float, float]:
    return {q: fit_constant(list(ratios), q) for q in grid}


def run_smin(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """
    s_min of a tall m x n matrix against √m - √(n-1). params.threshold t
    and params.delta require P(ratio ≤ t) ≤ delta.
    """
    if cfg.distribution.normalization != 'unit_variance':
        raise ValueError(f"{cfg.experiment}: needs unit_variance normalization, "
                         f"got '{cfg.distribution.normalization}'")
    for m, n, N in cfg.dims:
        if m < n:
            raise ValueError(f"{cfg.experiment}: s_min needs m >= n, got m={m}, n={n}")

    probe = np.eye(cfg.dims[0][0], cfg.dims[0][1])
    if abs(smallest_singular_value(Matrix(probe)) - 1.0) > 1e-12:
        raise RuntimeError("s_min solver failed the orthonormal-column sanity check")

    def trial(task: TrialTask):
        a = sample_matrix(cfg.distribution, task.m, task.n, derive_seed(task.seed, STREAM_A))
        normalizer = math.sqrt(task.m) - math.sqrt(task.n - 1)
        return make_record(cfg, task, smallest_singular_value(a), normalizer)

    records = run_trials(trial_tasks(cfg), trial, workers)
    ratios = np.array([r.ratio for r in records])
    threshold = float(cfg.params.get('threshold', 0.1))
    below = float(np.mean(ratios <= threshold))
    checks = {}
    if 'delta' in cfg.params:
        checks['lower_tail'] = below <= float(cfg.params['delta'])
    extras = {'quantiles': quantile_curve(ratios), 'threshold': threshold, 'below_fraction': below,
              'median': fit_constant(records, 0.5)}
    return _finish(cfg, records, checks, extras)


def run_sharpness(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """
    Median of ‖BA‖/(√n + √m) per triple. Heavy tails must grow strictly
    along the grid; with params.control the medians must stay flat within
    params.flat_tolerance (default 10%).
    """
    control = bool(cfg.params.get('control', False))
    profile = theoretical_profile(cfg.distribution)
    if not control and math.isfinite(profile.fourth_moment):
        raise ValueError(f"{cfg.experiment}: {describe(cfg.distribution)} has a finite fourth moment; "
                         f"set params.control for a control run")
    factors = _factors(cfg)

    def trial(task: TrialTask):
        _, w = _sample_product(cfg.distribution, factors[task.dims_index], task)
        return make_record(cfg, task, _norm(w, task), math.sqrt(task.n) + math.sqrt(task.m))

    tasks = trial_tasks(cfg)
    records = run_trials(tasks, trial, workers)
    medians = []
    for d in range(len(cfg.dims)):
        medians.append(float(np.median([r.ratio for r, t in zip(records, tasks) if t.dims_index == d])))
    increasing = all(b > a for a, b in zip(medians, medians[1:]))
    flatness = _spread(medians) - 1.0
    if control:
        checks = {'flat': flatness <= float(cfg.params.get('flat_tolerance', 0.10))}
    else:
        checks = {'increasing': increasing}
    extras = {'medians': {_dims_key(*d): v for d, v in zip(cfg.dims, medians)},
              'increasing': increasing, 'flatness': flatness}
    return _finish(cfg, records, checks, extras)


# ============================================================================
# AUDITS
# ============================================================================

def _vector_family(family: str, m: int, count: int, seed: int) -> np.ndarray:
    rng = make_rng(seed)
    if family == 'orthonormal':
        q, r = np.linalg.qr(rng.standard_normal((m, m)))
        return (q * np.sign(np.diag(r))).T
    if family == 'gaussian':
        return rng.standard_normal((count, m)) / math.sqrt(m)
    raise ValueError(f"Unknown vector family '{family}'. Valid families: gaussian, orthonormal")


def run_rudelson_audit(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """
    (E‖Σ ε_i u_i⊗u_i‖^p)^(1/p) over sign draws against
    (√p + √log m)·max‖u_i‖·‖Σ u_i⊗u_i‖^(1/2); the ratio is the fitted C.
    Vectors live in R^m; the family holds N of them (m for orthonormal).
    """
    family = cfg.params.get('family', 'gaussian')
    draws = int(cfg.params.get('draws', 2000))
    p = float(cfg.params.get('p', 2.0))
    if draws < 1 or p < 1:
        raise ValueError(f"{cfg.experiment}: need draws >= 1 and p >= 1, got {draws}, {p}")

    def trial(task: TrialTask):
        u = _vector_family(family, task.m, task.N, derive_seed(task.seed, STREAM_VECTOR))
        norms = sign_tensor_norms(u, draws, derive_seed(task.seed, STREAM_SIGNS))
        moment = float(np.mean(norms ** p)) ** (1.0 / p)
        return make_record(cfg, task, moment, rudelson_bound(u, p, 1.0))

    records = run_trials(trial_tasks(cfg), trial, workers)
    by_m = _fitted_by(records, [r.m for r in records], cfg.quantile)
    stability = _spread(by_m.values())
    factor = float(cfg.params.get('stability_factor', 2.0))
    return _finish(cfg, records, {'stable_in_m': stability <= factor},
                   {'fitted_by_m': by_m, 'stability': stability})


def run_variance_audit(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """
    Columns X_j of W = BA: E‖X‖² against m, Var‖X‖² against 3m, and
    max_j ‖X_j‖² per trial against m (the ambient dimension of X).
    """
    _require_finite(cfg, 'fourth_moment', "the variance audit needs a finite fourth moment")
    factors = _factors(cfg)

    def trial(task: TrialTask):
        _, w = _sample_product(cfg.distribution, factors[task.dims_index], task)
        squares = column_norms(w) ** 2
        return make_record(cfg, task, float(squares.max()), float(task.m)), squares

    tasks = trial_tasks(cfg)
    results = run_trials(tasks, trial, workers)
    records = [r for r, _ in results]
    checks, extras = {}, {}
    for d, (m, n, N) in enumerate(cfg.dims):
        pooled = np.concatenate([sq for (r, sq), t in zip(results, tasks) if t.dims_index == d])
        mean = float(pooled.mean())
        var = float(pooled.var(ddof=1)) if pooled.size > 1 else 0.0
        se_mean = float(pooled.std(ddof=1) / math.sqrt(pooled.size)) if pooled.size > 1 else 0.0
        centered = (pooled - mean) ** 2
        se_var = float(centered.std(ddof=1) / math.sqrt(pooled.size)) if pooled.size > 1 else 0.0
        key = _dims_key(m, n, N)
        extras[key] = {'mean': mean, 'variance': var, 'se_mean': se_mean, 'se_variance': se_var,
                       'mean_max': float(np.mean([r.measured for r in records if (r.m, r.n, r.N) == (m, n, N)]))}
        checks[f'mean_{key}'] = mean <= m + 3.0 * se_mean
        checks[f'variance_{key}'] = var <= 3.0 * m + 3.0 * se_var
    return _finish(cfg, records, checks, extras)


# ============================================================================
# DISPATCH AND CSV
# ============================================================================

RUNNERS: Dict[str, Callable[[ExperimentConfig, int], ExperimentReport]] = {
    'main_bound': run_main_bound,
    'log_bound': run_log_bound,
    'covariance': run_covariance,
    'small_columns': run_small_columns,
    'controlled_columns': run_controlled_columns,
    'column_split': run_column_split,
    'small_aij': run_small_aij,
    'almost_square': run_almost_square,
    'universal_deviation': run_universal_deviation,
    'sparse_norm': run_sparse_norm,
    'smin': run_smin,
    'sharpness': run_sharpness,
    'rudelson_audit': run_rudelson_audit,
    'variance_audit': run_variance_audit,
}


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    runner = RUNNERS.get(cfg.experiment)
    if runner is None:
        raise ValueError(f"Unknown experiment '{cfg.experiment}'. Valid experiments: {', '.join(RUNNERS)}")
    logger.info(f"Running {cfg.experiment}: dims {cfg.dims}, {cfg.trials} trials, "
                f"{describe(cfg.distribution)}, B {cfg.b_factor.kind}, seed {cfg.base_seed}")
    return runner(cfg, workers)


def report_frame(report: ExperimentReport) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in report.records], columns=REPORT_COLUMNS)


def save_report(report: ExperimentReport, path) -> None:
    report_frame(report).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {len(report.records)} records to {path}")


def load_records(path) -> List[TrialRecord]:
    df = pd.read_csv(path, dtype={'experiment': str, 'seed': str}, float_precision='round_trip')
    missing = [c for c in REPORT_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"Report {path} lacks columns {missing}")
    return [TrialRecord(row.experiment, int(row.m), int(row.n), int(row.N), int(row.trial), int(row.seed),
                        float(row.measured), float(row.normalizer), float(row.ratio))
            for row in df.itertuples(index=False)]
