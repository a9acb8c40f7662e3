"""
The composite training objective: alignment, clustering and contrastive terms.
"""

from dataclasses import dataclass, fields
import logging
from typing import Dict, Optional

import numpy as np
import scipy.sparse as sp

from deepform.cluster.cluster_engine import ClusterEngine
from deepform.contrastive.contrastive_engine import ContrastBatch, ContrastiveEngine
from deepform.encoder.encoder_engine import EncoderEngine
from deepform.encoder.encoder_types import AlignWeights, EncoderOutput, EntrySample, ModelParams
from deepform.graph.graph_engine import UserGraph
from deepform.models.state.config import TrainConfig

logger = logging.getLogger(__name__)


@dataclass
class LossBreakdown:
    """Weighted loss components; ``total`` is their sum."""
    align: float = 0.0
    cluster: float = 0.0
    triplet: float = 0.0
    nce: float = 0.0

    @property
    def total(self) -> float:
        return self.align + self.cluster + self.triplet + self.nce

    def to_dict(self) -> Dict[str, float]:
        values = {f"loss_{f.name}": getattr(self, f.name) for f in fields(self)}
        return {"loss_total": self.total, **values}


@dataclass
class ObjectiveInputs:
    """
    Everything held fixed while the objective is differentiated.

    ``p`` is the target distribution (no gradient flows through it); when it is
    None it is computed from the current soft assignments and then held fixed.
    ``centroids`` is optional; without it only the alignment term is active.
    """
    entries: EntrySample
    centroids: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None
    batch: Optional[ContrastBatch] = None


@dataclass
class ObjectiveResult:
    losses: LossBreakdown
    grads: ModelParams
    d_centroids: Optional[np.ndarray]
    output: EncoderOutput
    p: Optional[np.ndarray] = None

    def grad_norm(self) -> float:
        norm_sq = self.grads.global_norm() ** 2
        if self.d_centroids is not None:
            norm_sq += float(np.sum(self.d_centroids ** 2))
        return float(np.sqrt(norm_sq))


class DeepFormObjective:
    """
    Evaluates

        L = L_align + w_cluster * KL(P || Q)
            + w_contrast * (w_triplet * L_triplet + w_nce * L_nce)

    and its gradients with respect to every parameter tensor and the centroids.
    The clustering and contrastive terms act on Z_final = Z_gcn + Z_ae.
    """

    def __init__(self, x: sp.csr_matrix, graph: UserGraph, config: TrainConfig):
        self.x = sp.csr_matrix(x, dtype=np.float64)
        self.graph = graph
        self.config = config
        self.align_weights = AlignWeights.from_config(config)

    @property
    def cluster_weight(self) -> float:
        return self.config.w_cluster

    @property
    def triplet_weight(self) -> float:
        return self.config.w_contrast * self.config.w_triplet

    @property
    def nce_weight(self) -> float:
        return self.config.w_contrast * self.config.w_nce

    def forward(self, params: ModelParams, entries: EntrySample) -> EncoderOutput:
        return EncoderEngine.encoder_forward(
            self.graph.normalized, self.x, params, self.config.hops, self.config.activation, entries
        )

    def evaluate(self, params: ModelParams, inputs: ObjectiveInputs,
                 with_grad: bool = True) -> ObjectiveResult:
        """Loss components and (optionally) gradients for fixed inputs."""
        config = self.config
        output = self.forward(params, inputs.entries)
        align = EncoderEngine.align_loss(params.Z, output, inputs.entries, self.align_weights)
        losses = LossBreakdown(align=align.total)

        z_final = output.z_final
        d_final = np.zeros_like(z_final)
        d_centroids = None
        p = inputs.p
        if inputs.centroids is not None:
            d_centroids = np.zeros_like(inputs.centroids, dtype=np.float64)

            if self.cluster_weight > 0:
                if p is None:
                    p = ClusterEngine.target_distribution(ClusterEngine.soft_assign(z_final, inputs.centroids))
                kl, d_points, d_mu = ClusterEngine.cluster_loss_grad(z_final, inputs.centroids, p)
                losses.cluster = self.cluster_weight * kl
                d_final += self.cluster_weight * d_points
                d_centroids += self.cluster_weight * d_mu

            if inputs.batch is not None and not inputs.batch.is_empty():
                if self.triplet_weight > 0:
                    trip, d_points, d_mu = ContrastiveEngine.triplet_loss(
                        inputs.batch, z_final, inputs.centroids, config.margin
                    )
                    losses.triplet = self.triplet_weight * trip
                    d_final += self.triplet_weight * d_points
                    d_centroids += self.triplet_weight * d_mu
                if self.nce_weight > 0:
                    nce, d_points = ContrastiveEngine.infonce_loss(
                        inputs.batch, z_final, config.tau, config.nce_denominator
                    )
                    losses.nce = self.nce_weight * nce
                    d_final += self.nce_weight * d_points

        if not with_grad:
            return ObjectiveResult(losses=losses, grads=params.zeros_like(), d_centroids=d_centroids,
                                   output=output, p=p)

        upstream = EncoderEngine.align_upstream(params.Z, output, inputs.entries, params.n_items,
                                                self.align_weights)
        upstream.z_gcn = upstream.z_gcn + d_final
        upstream.z_ae = upstream.z_ae + d_final
        grads = EncoderEngine.backward(params, output, upstream, self.graph.normalized, self.x,
                                       config.hops, config.activation)
        return ObjectiveResult(losses=losses, grads=grads, d_centroids=d_centroids, output=output, p=p)

    def loss(self, params: ModelParams, inputs: ObjectiveInputs) -> float:
        return self.evaluate(params, inputs, with_grad=False).losses.total
