import copy
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional

from experiments import ExperimentConfig

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid experiment configuration"""


class ExperimentCatalog:
    """What each experiment measures, the statement it checks and its defaults"""

    EXPERIMENTS = {
        'main_bound': {
            'description': '‖BA‖ for ‖B‖ ≤ 1 and entries with (4+eps)-th moment at most 1',
            'statement': 'E‖BA‖ ≤ C(eps)(√n + √m), and ≤ C(eps)(‖B‖√n + ‖B‖_HS)',
            'normalizer': '√n + √m',
            'required_params': [],
            'ceiling': 3.0,
            'quantile': 1.0,
        },
        'log_bound': {
            'description': 'Norm bound up to a logarithm under a fourth moment',
            'statement': 'E‖BA‖ ≤ C√(n log 2n)',
            'normalizer': '√(n log 2n)',
            'required_params': [],
            'ceiling': None,
            'quantile': 1.0,
        },
        'covariance': {
            'description': 'Largest eigenvalue of the sample covariance WWᵀ/n',
            'statement': 'λ_max(WWᵀ/n) ≤ C(eps)(1 + m/n)',
            'normalizer': '1 + m/n',
            'required_params': [],
            'ceiling': None,
            'quantile': 1.0,
        },
        'small_columns': {
            'description': 'Factors whose columns are small in norm',
            'statement': '‖B_i‖ ≤ M log^(-1/2-1/eps)(2n) gives E‖BA‖ ≤ C M^(1/2) √n',
            'normalizer': 'M^(1/2)·√n',
            'required_params': [],
            'ceiling': None,
            'quantile': 1.0,
        },
        'controlled_columns': {
            'description': 'Bounded entries |a_ij| ≤ a with column norms ‖B_i‖ ≤ b',
            'statement': 'E‖BA‖ ≤ C(1 + a b^(1/2) log^(1/4)(2n))√n',
            'normalizer': '(1 + a·b^(1/2)·log^(1/4)(2n))·√n',
            'required_params': ['grid'],
            'ceiling': None,
            'quantile': 1.0,
        },
        'column_split': {
            'description': 'Large/small column split of B used for the general bound',
            'statement': '‖BA‖ ≤ ‖B_I A_I‖ + ‖B_Iᶜ A_Iᶜ‖ with |I| ≤ C0^-2 n log^(2K)(2n)',
            'normalizer': '√n',
            'required_params': [],
            'ceiling': None,
            'quantile': 1.0,
        },
        'small_aij': {
            'description': 'Entries bounded by (Mn/log 2N)^(1/(2+eps))',
            'statement': 'E‖BA‖ ≤ C(eps)√(Mn)',
            'normalizer': '√(Mn)',
            'required_params': [],
            'ceiling': None,
            'quantile': 1.0,
        },
        'almost_square': {
            'description': 'Almost square A with N ≤ n^(1+eps/10)',
            'statement': 'E‖BA‖ ≤ C(eps)√n',
            'normalizer': '√n',
            'required_params': [],
            'ceiling': None,
            'quantile': 1.0,
        },
        'universal_deviation': {
            'description': 'Deviation of ‖BAx‖ for Gaussian multipliers of fixed coefficients',
            'statement': 'P(‖BAx‖ > K√(np + log 2n) + t) ≤ exp(-c0 t²)',
            'normalizer': 'K·√(np + log 2n)',
            'required_params': [],
            'ceiling': None,
            'quantile': 1.0,
        },
        'sparse_norm': {
            'description': 'Sparse sign matrices over a grid of densities p',
            'statement': 'E‖BA‖ ≤ C log^(3/2)(e/p) √(np + log 2N)',
            'normalizer': 'log^(3/2)(e/p)·√(np + log 2N)',
            'required_params': ['p_grid'],
            'ceiling': None,
            'quantile': 1.0,
        },
        'smin': {
            'description': 'Smallest singular value of a tall unit-variance matrix',
            'statement': 'P(s_min(A) ≤ t(√m - √(n-1))) ≤ delta',
            'normalizer': '√m - √(n-1)',
            'required_params': [],
            'ceiling': None,
            'quantile': 0.5,
        },
        'sharpness': {
            'description': 'Growth of the normalized norm under an infinite fourth moment',
            'statement': 'limsup ‖W‖/(√n + √m) = ∞ without a fourth moment',
            'normalizer': '√n + √m',
            'required_params': [],
            'ceiling': None,
            'quantile': 0.5,
        },
        'rudelson_audit': {
            'description': 'Moments of sign-randomized sums of rank-one tensors',
            'statement': '(E‖Σ ε_i u_i⊗u_i‖^p)^(1/p) ≤ C(√p + √log m) max‖u_i‖ ‖Σ u_i⊗u_i‖^(1/2)',
            'normalizer': '(√p + √log m)·max‖u_i‖·‖Σ u_i⊗u_i‖^(1/2)',
            'required_params': [],
            'ceiling': 4.0,
            'quantile': 1.0,
        },
        'variance_audit': {
            'description': 'Squared column norms of W = BA',
            'statement': 'E‖X‖² ≤ n, Var‖X‖² ≤ 3n, E max_j ‖X_j‖² ≤ Cn',
            'normalizer': 'm',
            'required_params': [],
            'ceiling': None,
            'quantile': 1.0,
        },
    }

    @classmethod
    def get_all_experiments(cls) -> List[str]:
        return list(cls.EXPERIMENTS)

    @classmethod
    def get_entry(cls, name: str) -> Dict:
        if name not in cls.EXPERIMENTS:
            raise ConfigError(f"Unknown experiment '{name}'. Valid experiments: {', '.join(cls.EXPERIMENTS)}")
        return cls.EXPERIMENTS[name]

    @classmethod
    def get_description(cls, name: str) -> str:
        entry = cls.get_entry(name)
        return f"{entry['description']}: {entry['statement']}"

    @classmethod
    def required_params(cls, name: str) -> List[str]:
        return list(cls.get_entry(name)['required_params'])

    @classmethod
    def default_ceiling(cls, name: str) -> Optional[float]:
        return cls.get_entry(name)['ceiling']


class ConfigManager:
    """Load, merge, validate and save experiment configurations"""

    DEFAULT_CONFIG = {
        "experiment": "main_bound",
        "dims": [[100, 100, 100]],
        "distribution": {"kind": "gaussian", "params": {}, "normalization": "unit_moment"},
        "b_factor": {"kind": "identity", "params": {}},
        "trials": 20,
        "base_seed": 0,
        "params": {},
        "ceiling": None,
        "quantile": None,
    }

    @classmethod
    def get_default_config(cls) -> Dict:
        return copy.deepcopy(cls.DEFAULT_CONFIG)

    @classmethod
    def merge(cls, data: Dict) -> Dict:
        """User fields over the defaults; ceiling and quantile fall back to the catalog"""
        unknown = sorted(set(data) - set(cls.DEFAULT_CONFIG))
        if unknown:
            raise ConfigError(f"Unknown config field(s): {', '.join(unknown)}")
        merged = cls.get_default_config()
        merged.update(copy.deepcopy(data))
        entry = ExperimentCatalog.get_entry(merged['experiment'])
        if 'ceiling' not in data:
            merged['ceiling'] = entry['ceiling']
        if merged.get('quantile') is None:
            merged['quantile'] = entry['quantile']
        return merged

    @classmethod
    def validate(cls, data: Dict) -> ExperimentConfig:
        merged = cls.merge(data)
        missing = [p for p in ExperimentCatalog.required_params(merged['experiment'])
                   if p not in merged['params']]
        if missing:
            raise ConfigError(f"Experiment '{merged['experiment']}' requires params: {', '.join(missing)}")
        try:
            return ExperimentConfig.from_dict(merged)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load_config(cls, path) -> ExperimentConfig:
        config_path = Path(path)
        try:
            with open(config_path, 'r') as f:
                data = json.load(f)
        except FileNotFoundError as exc:
            raise ConfigError(f"Config file not found: {config_path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"Config file {config_path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {config_path} must hold a JSON object")
        config = cls.validate(data)
        logger.debug(f"Loaded config {config_path}: {config.experiment}, {len(config.dims)} dims")
        return config

    @classmethod
    def save_config(cls, config: ExperimentConfig, path) -> None:
        with open(path, 'w') as f:
            json.dump(config.to_dict(), f, indent=2)
