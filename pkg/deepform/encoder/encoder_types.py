"""
Parameter and activation containers for the graph and autoencoder paths.
"""

from dataclasses import dataclass, field, fields
from typing import Dict, Iterator, Optional

import numpy as np
import scipy.sparse as sp

# Declaration order used by checkpoints and gradient reports
TENSOR_NAMES = ("Z", "W1", "b1", "W2", "b2", "W3", "b3", "V1", "c1", "V2", "c2", "V3", "c3")


@dataclass
class ModelParams:
    """
    Learnable state: the user embedding table and the autoencoder weights.

    Encoder maps |I| -> h1 -> h2 -> d, the decoder mirrors it d -> h2 -> h1 -> |I|.
    The same container is used for gradients.
    """
    Z: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    V1: np.ndarray
    c1: np.ndarray
    V2: np.ndarray
    c2: np.ndarray
    V3: np.ndarray
    c3: np.ndarray

    @classmethod
    def initialize(cls, n_users: int, n_items: int, d: int, h1: int, h2: int,
                   rng: np.random.Generator) -> 'ModelParams':
        """
        Z uniform in [-0.1/sqrt(d), 0.1/sqrt(d)], weights normal scaled by
        1/sqrt(fan_in), biases zero. Stored as float32.
        """
        bound = 0.1 / np.sqrt(d)
        z = rng.uniform(-bound, bound, size=(n_users, d))

        def weight(fan_in: int, fan_out: int) -> np.ndarray:
            return rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)

        params = cls(
            Z=z,
            W1=weight(n_items, h1), b1=np.zeros(h1),
            W2=weight(h1, h2), b2=np.zeros(h2),
            W3=weight(h2, d), b3=np.zeros(d),
            V1=weight(d, h2), c1=np.zeros(h2),
            V2=weight(h2, h1), c2=np.zeros(h1),
            V3=weight(h1, n_items), c3=np.zeros(n_items),
        )
        return params.astype(np.float32)

    @classmethod
    def from_tensors(cls, tensors: Dict[str, np.ndarray]) -> 'ModelParams':
        missing = [name for name in TENSOR_NAMES if name not in tensors]
        if missing:
            raise KeyError(f"Missing parameter tensors: {missing}")
        return cls(**{name: tensors[name] for name in TENSOR_NAMES})

    def tensors(self) -> Dict[str, np.ndarray]:
        """Name to array, in declaration order."""
        return {name: getattr(self, name) for name in TENSOR_NAMES}

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self.tensors().items())

    def astype(self, dtype) -> 'ModelParams':
        return ModelParams(**{name: np.asarray(value, dtype=dtype).copy() for name, value in self.items()})

    def copy(self) -> 'ModelParams':
        return ModelParams(**{name: value.copy() for name, value in self.items()})

    def zeros_like(self) -> 'ModelParams':
        return ModelParams(**{name: np.zeros_like(value, dtype=np.float64) for name, value in self.items()})

    def add(self, other: 'ModelParams', scale: float = 1.0) -> 'ModelParams':
        """Return self + scale * other."""
        return ModelParams(**{name: value + scale * getattr(other, name) for name, value in self.items()})

    def scaled(self, scale: float) -> 'ModelParams':
        return ModelParams(**{name: scale * value for name, value in self.items()})

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(np.square(value, dtype=np.float64))) for _, value in self.items())))

    def is_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(value))) for _, value in self.items())

    def shapes(self) -> Dict[str, tuple]:
        return {name: tuple(value.shape) for name, value in self.items()}

    @property
    def n_users(self) -> int:
        return self.Z.shape[0]

    @property
    def n_items(self) -> int:
        return self.W1.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        """(d, h1, h2)"""
        return self.Z.shape[1], self.W1.shape[1], self.W2.shape[1]


@dataclass
class EntrySample:
    """
    Matrix positions on which the reconstruction terms are evaluated.

    ``a_*`` index the user graph, ``x_*`` the rating matrix; the targets are
    the observed values there (0 for sampled zero entries).
    """
    a_rows: np.ndarray
    a_cols: np.ndarray
    a_targets: np.ndarray
    x_rows: np.ndarray
    x_cols: np.ndarray
    x_targets: np.ndarray

    @property
    def n_graph(self) -> int:
        return len(self.a_rows)

    @property
    def n_ratings(self) -> int:
        return len(self.x_rows)


@dataclass
class EncoderOutput:
    """
    Result of one encoder forward pass.

    ``x_hat`` holds reconstructed ratings at the sampled rating entries, or the
    dense reconstruction when no sample was given. Hidden activations are kept
    for the backward pass.
    """
    z_gcn: np.ndarray
    z_hat: np.ndarray
    z_ae: np.ndarray
    x_hat: np.ndarray
    hidden: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def z_final(self) -> np.ndarray:
        return self.z_gcn + self.z_ae


@dataclass(frozen=True)
class AlignWeights:
    """Weights of the four reconstruction and alignment residuals."""
    gcn_z: float = 1.0
    gcn_a: float = 1.0
    ae: float = 1.0
    align: float = 1.0

    @classmethod
    def from_config(cls, config) -> 'AlignWeights':
        return cls(gcn_z=config.w_gcn_z, gcn_a=config.w_gcn_a, ae=config.w_ae, align=config.w_align)


@dataclass
class AlignTerms:
    """Weighted components of the alignment loss."""
    gcn_z: float = 0.0
    gcn_a: float = 0.0
    ae: float = 0.0
    align: float = 0.0

    @property
    def total(self) -> float:
        return self.gcn_z + self.gcn_a + self.ae + self.align

    def to_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class Upstream:
    """
    Gradients arriving at the encoder outputs, all optional.

    ``z`` is the direct gradient on the embedding table, ``z_hat`` the gradient
    on the back-propagated graph representation; ``x_hat`` is a sparse
    |U| x |I| matrix (or dense array) of gradients on the reconstruction.
    """
    z: Optional[np.ndarray] = None
    z_gcn: Optional[np.ndarray] = None
    z_hat: Optional[np.ndarray] = None
    z_ae: Optional[np.ndarray] = None
    x_hat: Optional[sp.spmatrix | np.ndarray] = None
