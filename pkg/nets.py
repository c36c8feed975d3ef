import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, NamedTuple

import numpy as np
from scipy.special import comb

from constants import (SPHERE_NET_MAX_DIM, LEVEL_NET_MAX_COUNT, UNIT_NORM_TOL, NET_CLOUD_SIZE,
                       NET_CLOUD_SIZE_HIGH_DIM, NET_RADIUS_FACTOR, NET_AUDIT_POINTS, NET_AUDIT_CHUNK,
                       DEFAULT_C_SPARSE)
from distributions import make_rng, derive_seed
from matrix_core import Matrix, save_matrix

logger = logging.getLogger(__name__)

VECTOR_CLASS_KINDS = ('sparse_ball', 'spread_ball', 'level_net')


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True, eq=False)
class SphereNet:
    dimension: int
    eps: float
    points: np.ndarray

    def __post_init__(self):
        lengths = np.linalg.norm(self.points, axis=1)
        bad = np.flatnonzero(np.abs(lengths - 1.0) > UNIT_NORM_TOL)
        if bad.size:
            raise ValueError(f"Net point {int(bad[0])} has norm {lengths[bad[0]]!r}")

    @property
    def cardinality(self) -> int:
        return int(self.points.shape[0])

    @property
    def cardinality_bound(self) -> float:
        return (1.0 + 2.0 / self.eps) ** self.dimension


@dataclass(frozen=True)
class VectorClass:
    """
    One of the special vector sets of the sparse/spread decomposition.

    sparse_ball needs params p (and optionally c), spread_ball needs M,
    level_net needs k and M.
    """
    kind: str
    n: int
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in VECTOR_CLASS_KINDS:
            raise ValueError(f"Unknown vector class '{self.kind}'. Valid kinds: {', '.join(VECTOR_CLASS_KINDS)}")
        required = {'sparse_ball': ('p',), 'spread_ball': ('M',), 'level_net': ('k', 'M')}[self.kind]
        missing = [name for name in required if name not in self.params]
        if missing:
            raise ValueError(f"Vector class '{self.kind}' requires parameter(s) {', '.join(missing)}")

    @property
    def sparsity(self) -> int:
        if self.kind == 'sparse_ball':
            return sparse_budget(self.n, self.params['p'], self.params.get('c', DEFAULT_C_SPARSE))
        if self.kind == 'level_net':
            return min(level_support(self.n, self.params['k']), self.n)
        return self.n

    @property
    def sup_bound(self) -> float:
        if self.kind == 'spread_ball':
            return spread_threshold(self.n, self.params['M'])
        if self.kind == 'level_net':
            return level_height(self.n, self.params['k'])
        return 1.0


class VectorSplit(NamedTuple):
    sparse: np.ndarray
    spread: np.ndarray
    threshold: float


@dataclass(frozen=True, eq=False)
class LevelNet:
    vectors: np.ndarray
    n: int
    k: float
    height: float
    support: int
    constant: float

    @property
    def cardinality(self) -> int:
        return int(self.vectors.shape[0])


# ============================================================================
# SCALES
# ============================================================================

def sparse_budget(n: int, p: float, c: float = DEFAULT_C_SPARSE) -> int:
    """⌊c·n·p / log(e/p)⌋"""
    if not (0 < p <= 1):
        raise ValueError(f"Sparsity p must lie in (0, 1], got {p}")
    return int(math.floor(c * n * p / math.log(math.e / p)))


def spread_threshold(n: int, M: float) -> float:
    if M <= 0:
        raise ValueError(f"Spread scale M must be positive, got {M}")
    return M / math.sqrt(n)


def default_split_scale(p: float, c: float = DEFAULT_C_SPARSE) -> float:
    """The M for which n/M² equals the sparse budget before rounding"""
    if not (0 < p <= 1):
        raise ValueError(f"Sparsity p must lie in (0, 1], got {p}")
    return math.sqrt(math.log(math.e / p) / (c * p))


def level_height(n: int, k: float) -> float:
    return 2.0 ** k / math.sqrt(n)


def level_support(n: int, k: float) -> int:
    # ⌊h_k^-2⌋ = ⌊n/4^k⌋; the slack keeps exact squares such as k = 1/2 from rounding down
    return int(math.floor(n / 4.0 ** k * (1.0 + 1e-12)))


def is_member(x, vc: VectorClass) -> bool:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != vc.n or np.linalg.norm(x) > 1.0 + UNIT_NORM_TOL:
        return False
    support = int(np.count_nonzero(x))
    if vc.kind == 'sparse_ball':
        return support <= vc.sparsity
    if vc.kind == 'spread_ball':
        return bool(np.max(np.abs(x), initial=0.0) <= vc.sup_bound)
    nonzero = np.abs(x[x != 0])
    return support <= vc.sparsity and bool(np.allclose(nonzero, vc.sup_bound, rtol=1e-12, atol=0.0))


# ============================================================================
# SPHERE NETS
# ============================================================================

def _unit_cloud(n: int, size: int, seed: int) -> np.ndarray:
    g = make_rng(seed).standard_normal((size, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _min_distances(points: np.ndarray, net: np.ndarray) -> np.ndarray:
    # ‖a - b‖² = 2 - 2⟨a, b⟩ on the sphere; points go in blocks to bound memory
    best = np.empty(points.shape[0])
    for start in range(0, points.shape[0], NET_AUDIT_CHUNK):
        block = points[start:start + NET_AUDIT_CHUNK]
        best[start:start + block.shape[0]] = np.clip(block @ net.T, -1.0, 1.0).max(axis=1)
    return np.sqrt(np.maximum(2.0 - 2.0 * best, 0.0))

def coverage_radius(net: SphereNet, trials: int = NET_AUDIT_POINTS, seed: int = 0) -> float:
    """Largest distance from `trials` random unit vectors to the net"""
    probes = _unit_cloud(net.dimension, trials, seed)
    return float(_min_distances(probes, net.points).max())


def build_sphere_net(n: int, eps: float, seed: int = 0) -> SphereNet:
    """
    ε-net of the unit sphere in R^n by greedy farthest-point selection
    over a random cloud, then Monte Carlo repair: audit points left
    uncovered join the net until an audit round comes back clean.
    """
    if not (0 < eps < 1):
        raise ValueError(f"Net radius eps must lie in (0, 1), got {eps}")
    if n < 1 or n > SPHERE_NET_MAX_DIM:
        raise ValueError(f"Sphere net construction limited to 1 <= n <= {SPHERE_NET_MAX_DIM}, got {n}")

    if n == 1:
        return SphereNet(1, eps, np.array([[1.0], [-1.0]]))

    size = NET_CLOUD_SIZE if n <= 4 else NET_CLOUD_SIZE_HIGH_DIM
    cloud = _unit_cloud(n, size, derive_seed(seed, 0))
    radius = NET_RADIUS_FACTOR * eps

    chosen = [0]
    dist = np.linalg.norm(cloud - cloud[0], axis=1)
    while True:
        far = int(np.argmax(dist))
        if dist[far] <= radius:
            break
        chosen.append(far)
        dist = np.minimum(dist, np.linalg.norm(cloud - cloud[far], axis=1))
    points = cloud[chosen]
    logger.debug(f"Greedy net in R^{n}: {len(chosen)} points at radius {radius:.3g}")

    for round_index in range(1, 6):
        probes = _unit_cloud(n, NET_AUDIT_POINTS, derive_seed(seed, round_index))
        missed = probes[_min_distances(probes, points) > eps]
        if missed.size == 0:
            break
        logger.debug(f"Net repair round {round_index}: adding {len(missed)} uncovered points")
        # add misses one by one so added points stay eps-separated
        for x in missed:
            if _min_distances(x[None, :], points)[0] > eps:
                points = np.vstack([points, x])

    points = points / np.linalg.norm(points, axis=1, keepdims=True)
    net = SphereNet(n, eps, points)
    if net.cardinality > net.cardinality_bound:
        raise ValueError(f"Net of {net.cardinality} points exceeds (1 + 2/eps)^n = {net.cardinality_bound:.6g}")
    logger.info(f"Sphere net: n={n}, eps={eps}, {net.cardinality} points (bound {net.cardinality_bound:.6g})")
    return net


# ============================================================================
# LEVEL NETS AND VECTOR SPLITS
# ============================================================================

def level_net_count(n: int, m: int) -> int:
    return int(sum(comb(n, l, exact=True) * 2 ** l for l in range(1, min(m, n) + 1)))


def enumerate_level_net(n: int, k: float, M: float) -> LevelNet:
    """
    All vectors whose nonzero coordinates equal ±h_k = ±2^k/√n with at
    most ⌊h_k^-2⌋ of them. The reported constant is C in
    |N_k| = exp(C·m·log M).
    """
    if n < 1:
        raise ValueError(f"Dimension must be positive, got {n}")
    if M < 1:
        raise ValueError(f"Spread scale M must be at least 1, got {M}")
    if 2.0 ** k > M * (1.0 + 1e-12):
        raise ValueError(f"Level k={k} has 2^k = {2.0 ** k:.6g} above M = {M}")
    h = level_height(n, k)
    m = level_support(n, k)
    if m < 1:
        raise ValueError(f"Level height {h:.6g} exceeds 1; no nonzero vector fits in the unit ball")

    count = level_net_count(n, m)
    if count > LEVEL_NET_MAX_COUNT:
        raise ValueError(f"Level net would hold {count} vectors, enumeration limited to {LEVEL_NET_MAX_COUNT}")

    vectors = np.zeros((count, n))
    row = 0
    for size in range(1, min(m, n) + 1):
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=size)))
        for support in itertools.combinations(range(n), size):
            block = slice(row, row + signs.shape[0])
            vectors[block, list(support)] = h * signs
            row += signs.shape[0]

    constant = math.log(count) / (m * math.log(M)) if M > 1 else math.inf
    logger.debug(f"Level net n={n}, k={k}: {count} vectors, support {m}, C = {constant:.4g}")
    return LevelNet(vectors, n, float(k), h, m, constant)


def classify_vector(x, M: float) -> VectorSplit:
    """
    Split x into its large coordinates (|x_j| > M/√n) and the rest.
    The two parts have disjoint supports, so their sum is x exactly.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    threshold = spread_threshold(x.size, M)
    norm = float(np.linalg.norm(x))
    if norm > 1.0 + UNIT_NORM_TOL:
        raise ValueError(f"classify_vector needs ‖x‖ <= 1, got {norm!r}")
    large = np.abs(x) > threshold
    return VectorSplit(np.where(large, x, 0.0), np.where(large, 0.0, x), threshold)


def save_net(points, path) -> None:
    """One vector per row in the matrix text format"""
    if isinstance(points, (SphereNet, LevelNet)):
        points = points.points if isinstance(points, SphereNet) else points.vectors
    save_matrix(Matrix(points), path)
