"""Training configuration for deepform.

The configuration file is flat ``key = value`` text whose keys are exactly the
field names of :class:`TrainConfig`.
"""

from dataclasses import dataclass, fields, replace
from enum import Enum
import hashlib
import logging
import os
from pathlib import Path
import types
from typing import Any, Iterable, Mapping, get_args

from deepform.errors import ConfigError

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "DEEPFORM_SEED"


class OptimizerType(Enum):
    """Parameter update rules."""
    SGD = "sgd"
    ADAM = "adam"


class NceDenominator(Enum):
    """Which similarities form the InfoNCE denominator."""
    WITH_POSITIVE = "with_positive"
    NEGATIVES_ONLY = "negatives_only"


class Activation(Enum):
    """Nonlinearity after the hidden autoencoder layers."""
    TANH = "tanh"
    LINEAR = "linear"


class AlignSampling(Enum):
    """How the dense reconstruction terms are evaluated."""
    SAMPLED = "sampled"
    EXACT = "exact"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run."""
    lr: float = 1e-5
    epochs: int = 200
    hops: int = 2
    d: int = 64
    h1: int = 256
    h2: int = 128
    activation: Activation = Activation.TANH
    k_max: int = 128
    stochastic_k: bool = True
    fixed_k: int = 0
    k_resample_every: int = 1
    margin: float = 1.0
    tau: float = 0.5
    n_neg: int = 5
    nce_denominator: NceDenominator = NceDenominator.WITH_POSITIVE
    w_gcn_z: float = 1.0
    w_gcn_a: float = 1.0
    w_ae: float = 1.0
    w_align: float = 1.0
    w_cluster: float = 1.0
    w_contrast: float = 1.0
    w_triplet: float = 1.0
    w_nce: float = 1.0
    align_sampling: AlignSampling = AlignSampling.SAMPLED
    graph_top_k: int = 50
    kmeans_max_iter: int = 100
    kmeans_tol: float = 1e-6
    optimizer: OptimizerType = OptimizerType.SGD
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_nan_retries: int = 3
    checkpoint_every: int = 0
    # None means not set here; resolve_seed then falls back to DEEPFORM_SEED
    seed: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """Raise ConfigError when a value is outside its allowed range."""
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.hops < 0:
            raise ConfigError(f"hops must be >= 0, got {self.hops}")
        for name in ("d", "h1", "h2", "k_resample_every", "kmeans_max_iter", "n_neg"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.k_max < 2:
            raise ConfigError(f"k_max must be >= 2, got {self.k_max}")
        if self.fixed_k and self.fixed_k < 2:
            raise ConfigError(f"fixed_k must be 0 or >= 2, got {self.fixed_k}")
        if not self.margin > 0:
            raise ConfigError(f"margin must be > 0, got {self.margin}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        for name in self.weight_names():
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.graph_top_k < 0 or self.checkpoint_every < 0 or self.max_nan_retries < 0:
            raise ConfigError("graph_top_k, checkpoint_every and max_nan_retries must be >= 0")
        if self.seed is not None and self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")

    @staticmethod
    def weight_names() -> tuple[str, ...]:
        return ("w_gcn_z", "w_gcn_a", "w_ae", "w_align",
                "w_cluster", "w_contrast", "w_triplet", "w_nce")

    def to_dict(self) -> dict[str, Any]:
        """Plain-value dictionary, enums rendered by value."""
        result = {}
        for f in fields(self):
            value = getattr(self, f.name)
            result[f.name] = value.value if isinstance(value, Enum) else value
        return result

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'TrainConfig':
        """Build a config from (possibly string) values; unknown keys are fatal."""
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"Unknown config keys: {unknown}")
        kwargs = {name: _convert(known[name].type, name, value) for name, value in data.items()}
        return cls(**kwargs)

    def with_overrides(self, overrides: Mapping[str, Any]) -> 'TrainConfig':
        """Return a copy with some fields replaced (flags win over the file)."""
        if not overrides:
            return self
        merged = self.to_dict()
        merged.update(overrides)
        return TrainConfig.from_dict(merged)

    def render(self) -> str:
        """Canonical ``key = value`` text, one field per line."""
        return "".join(f"{key} = {_render_value(value)}\n" for key, value in self.to_dict().items())

    def config_hash(self) -> str:
        """SHA-256 of the canonical rendering."""
        return hashlib.sha256(self.render().encode("utf-8")).hexdigest()

    @property
    def effective_fixed_k(self) -> int:
        return self.fixed_k or self.k_max

    @property
    def run_seed(self) -> int:
        return 0 if self.seed is None else self.seed


def _render_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


_TYPE_NAMES = {
    "float": float, "int": int, "bool": bool,
    "Activation": Activation, "NceDenominator": NceDenominator,
    "AlignSampling": AlignSampling, "OptimizerType": OptimizerType,
}


def _convert(field_type: Any, name: str, value: Any) -> Any:
    if isinstance(field_type, types.UnionType) and type(None) in get_args(field_type):
        if value is None or str(value).strip().lower() in ("", "none"):
            return None
        field_type = next(arg for arg in get_args(field_type) if arg is not type(None))
    target = _TYPE_NAMES.get(field_type, field_type) if isinstance(field_type, str) else field_type
    try:
        if target is bool:
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("true", "1", "yes", "on"):
                return True
            if text in ("false", "0", "no", "off"):
                return False
            raise ValueError(value)
        if target is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(str(value).strip()) if isinstance(value, str) else int(value)
        if target is float:
            return float(value)
        if isinstance(target, type) and issubclass(target, Enum):
            return value if isinstance(value, target) else target(str(value).strip().lower())
    except ValueError as e:
        raise ConfigError(f"Invalid value for {name}: {value!r}") from e
    return value


def parse_config_text(text: str, source: str = "<text>") -> dict[str, str]:
    """Parse flat ``key = value`` lines into a raw dictionary."""
    values: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{number}: empty key")
        values[key] = value
    return values


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> TrainConfig:
    """Load a TrainConfig from an optional file plus overrides.

    Raises:
        ConfigError: If the file is missing, has unknown keys or invalid values
    """
    raw: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        raw.update(parse_config_text(path.read_text(encoding="utf-8"), source=str(path)))
        logger.debug(f"Loaded {len(raw)} config keys from {path}")
    raw.update(overrides or {})
    return TrainConfig.from_dict(raw)


def parse_overrides(pairs: Iterable[str] | None) -> dict[str, str]:
    """Turn repeated ``--set key=value`` arguments into a dictionary."""
    result: dict[str, str] = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"Override must be key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        result[key.strip()] = value.strip()
    return result


def resolve_seed(flag_seed: int | None, config: TrainConfig | None = None) -> int:
    """Seed precedence: flag, then config, then the DEEPFORM_SEED variable, then 0."""
    if flag_seed is not None:
        return flag_seed
    if config is not None and config.seed is not None:
        return config.seed
    env_value = os.environ.get(SEED_ENV_VAR)
    if env_value:
        try:
            return int(env_value)
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env_value!r}") from e
    return 0


def with_seed(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=seed)
