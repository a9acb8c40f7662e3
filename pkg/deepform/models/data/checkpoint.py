from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from deepform.encoder.encoder_types import TENSOR_NAMES, ModelParams

CENTROIDS_TENSOR = "mu"
ASSIGNMENT_TENSOR = "assign"


@dataclass
class Checkpoint:
    """
    Saved training state.

    ``extra`` holds the optional tensors stored after the parameters (centroids,
    hard assignment, optimizer moments); ``meta`` is the JSON trailer with the
    model settings and everything needed to resume.
    """
    params: ModelParams
    extra: Dict[str, np.ndarray] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def centroids(self) -> Optional[np.ndarray]:
        return self.extra.get(CENTROIDS_TENSOR)

    @property
    def hard_assign(self) -> Optional[np.ndarray]:
        assign = self.extra.get(ASSIGNMENT_TENSOR)
        return None if assign is None else assign.astype(np.int64)

    @property
    def epoch(self) -> int:
        return int(self.meta.get("epoch", 0))

    @property
    def config_dict(self) -> Dict[str, Any]:
        return dict(self.meta.get("config", {}))

    def tensors(self) -> Dict[str, np.ndarray]:
        """Parameters in declaration order followed by the extra tensors."""
        tensors = self.params.tensors()
        for name, value in self.extra.items():
            if name in TENSOR_NAMES:
                raise KeyError(f"extra tensor name {name!r} collides with a parameter")
            tensors[name] = value
        return tensors

    @classmethod
    def from_tensors(cls, tensors: Dict[str, np.ndarray], meta: Dict[str, Any]) -> 'Checkpoint':
        params = ModelParams.from_tensors(tensors)
        extra = {name: value for name, value in tensors.items() if name not in TENSOR_NAMES}
        return cls(params=params, extra=extra, meta=meta)
