"""
Parameter update rules operating on named float arrays.
"""

from abc import ABC, abstractmethod
import logging
from typing import Any, Dict

import numpy as np

from deepform.models.state.config import OptimizerType, TrainConfig

logger = logging.getLogger(__name__)

Tensors = Dict[str, np.ndarray]


class Optimizer(ABC):
    """
    Base class for update rules.

    ``step`` returns new float64 tensors; storage precision is the caller's
    concern. Internal state round-trips through ``state_tensors``/``state_meta``.
    """

    @abstractmethod
    def step(self, tensors: Tensors, grads: Tensors, lr: float) -> Tensors:
        pass

    def state_tensors(self) -> Tensors:
        return {}

    def state_meta(self) -> Dict[str, Any]:
        return {}

    def load_state(self, tensors: Tensors, meta: Dict[str, Any]) -> None:
        pass

    def reset(self, name: str) -> None:
        """Forget any state kept for one tensor."""

    @staticmethod
    def from_config(config: TrainConfig) -> 'Optimizer':
        if config.optimizer is OptimizerType.ADAM:
            return Adam(config.adam_beta1, config.adam_beta2, config.adam_eps)
        return GradientDescent()

    def __repr__(self):
        return f"{self.__class__.__name__}()"


class GradientDescent(Optimizer):
    """Plain full-batch gradient descent."""

    def step(self, tensors: Tensors, grads: Tensors, lr: float) -> Tensors:
        return {name: np.asarray(value, dtype=np.float64) - lr * grads[name]
                for name, value in tensors.items()}


class Adam(Optimizer):
    """First/second moment estimates with bias correction."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Tensors = {}
        self.v: Tensors = {}

    def step(self, tensors: Tensors, grads: Tensors, lr: float) -> Tensors:
        self.t += 1
        updated = {}
        for name, value in tensors.items():
            grad = grads[name]
            m = self.m.get(name)
            v = self.v.get(name)
            if m is None or m.shape != grad.shape:
                # centroids change shape whenever K is resampled
                m = np.zeros_like(grad, dtype=np.float32)
                v = np.zeros_like(grad, dtype=np.float32)
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            # moments are kept in checkpoint precision so a resumed run matches
            m, v = m.astype(np.float32), v.astype(np.float32)
            self.m[name], self.v[name] = m, v
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            updated[name] = np.asarray(value, dtype=np.float64) - lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return updated

    def reset(self, name: str) -> None:
        self.m.pop(name, None)
        self.v.pop(name, None)

    def state_tensors(self) -> Tensors:
        state = {f"adam_m.{name}": value for name, value in self.m.items()}
        state.update({f"adam_v.{name}": value for name, value in self.v.items()})
        return state

    def state_meta(self) -> Dict[str, Any]:
        return {"adam_t": self.t}

    def load_state(self, tensors: Tensors, meta: Dict[str, Any]) -> None:
        self.t = int(meta.get("adam_t", 0))
        self.m = {name.split(".", 1)[1]: np.asarray(value, dtype=np.float32)
                  for name, value in tensors.items() if name.startswith("adam_m.")}
        self.v = {name.split(".", 1)[1]: np.asarray(value, dtype=np.float32)
                  for name, value in tensors.items() if name.startswith("adam_v.")}

    def __repr__(self):
        return f"Adam(beta1={self.beta1}, beta2={self.beta2}, eps={self.eps})"
