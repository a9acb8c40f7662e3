"""
Finite-difference verification of the analytic gradients.
"""

from dataclasses import dataclass
import logging
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.sparse as sp

from deepform.cluster.cluster_engine import ClusterEngine
from deepform.contrastive.contrastive_engine import ContrastBatch, ContrastiveEngine
from deepform.encoder.encoder_engine import EncoderEngine
from deepform.encoder.encoder_types import ModelParams
from deepform.errors import UsageError
from deepform.graph.graph_engine import GraphEngine, UserGraph
from deepform.models.data.checkpoint import CENTROIDS_TENSOR
from deepform.models.state.config import TrainConfig

from .objective import DeepFormObjective, ObjectiveInputs

logger = logging.getLogger(__name__)

MAX_USERS = 20
MAX_ITEMS = 16
MAX_DIM = 8

TERMS = ("align", "cluster", "triplet", "nce", "total")

_ALIGN_OFF = {"w_gcn_z": 0.0, "w_gcn_a": 0.0, "w_ae": 0.0, "w_align": 0.0}
_TERM_OVERRIDES: Dict[str, Dict[str, float]] = {
    "align": {"w_cluster": 0.0, "w_contrast": 0.0},
    "cluster": {**_ALIGN_OFF, "w_cluster": 1.0, "w_contrast": 0.0},
    "triplet": {**_ALIGN_OFF, "w_cluster": 0.0, "w_contrast": 1.0, "w_triplet": 1.0, "w_nce": 0.0},
    "nce": {**_ALIGN_OFF, "w_cluster": 0.0, "w_contrast": 1.0, "w_triplet": 0.0, "w_nce": 1.0},
    "total": {},
}

REPORT_COLUMNS = ["term", "tensor", "checked", "excluded", "max_abs_error", "max_rel_error", "passed"]


@dataclass
class GradCheckReport:
    """One row per (loss term, tensor) pair."""
    frame: pd.DataFrame
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.frame["passed"].all())

    @property
    def max_rel_error(self) -> float:
        return float(self.frame["max_rel_error"].max()) if len(self.frame) else 0.0

    def to_text(self) -> str:
        lines = []
        for row in self.frame.itertuples(index=False):
            status = "ok" if row.passed else "FAIL"
            lines.append(
                f"{row.term:<8} {row.tensor:<6} checked={row.checked:<3d} excluded={row.excluded:<3d} "
                f"max_rel_error={row.max_rel_error:.3e} {status}"
            )
        lines.append(f"{'PASSED' if self.passed else 'FAILED'} (tolerance {self.tolerance:g})")
        return "\n".join(lines)


def relative_error(analytic: float, numeric: float, floor: float = 1e-3) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def random_instance(
    n_users: int = 12,
    n_items: int = 10,
    config: TrainConfig | None = None,
    seed: int = 0,
    density: float = 0.4
) -> tuple[sp.csr_matrix, UserGraph, ModelParams]:
    """Row-normalized random ratings, their user graph and float64 parameters."""
    config = config or TrainConfig(d=6, h1=8, h2=7)
    rng = np.random.default_rng(seed)
    values = rng.uniform(1.0, 5.0, size=(n_users, n_items))
    mask = rng.random((n_users, n_items)) < density
    mask[np.arange(n_users), rng.integers(0, n_items, size=n_users)] = True
    dense = np.where(mask, values, 0.0)
    dense /= np.linalg.norm(dense, axis=1, keepdims=True)
    x = sp.csr_matrix(dense)
    graph = GraphEngine.build_user_graph(x, config.graph_top_k)
    params = ModelParams.initialize(n_users, n_items, config.d, config.h1, config.h2, rng)
    # larger Z so the clustering terms are not flat at the starting point
    params.Z = params.Z * 10.0
    return x, graph, params.astype(np.float64)


def _check_desk_scale(params: ModelParams) -> None:
    d, _, _ = params.dims
    if params.n_users > MAX_USERS or params.n_items > MAX_ITEMS or d > MAX_DIM:
        raise UsageError(
            f"gradient check is limited to {MAX_USERS} users, {MAX_ITEMS} items and d <= {MAX_DIM}; "
            f"got {params.n_users} users, {params.n_items} items, d = {d}"
        )


def _active_hinges(objective: DeepFormObjective, params: ModelParams, inputs: ObjectiveInputs) -> np.ndarray:
    batch = inputs.batch
    if batch is None or batch.n_triplets == 0 or inputs.centroids is None:
        return np.zeros(0, dtype=bool)
    z_final = objective.forward(params, inputs.entries).z_final
    mu = np.asarray(inputs.centroids, dtype=np.float64)[batch.triplet_clusters]
    dist_anchor = np.linalg.norm(z_final[batch.triplet_anchors] - mu, axis=1)
    dist_negative = np.linalg.norm(z_final[batch.triplet_negatives] - mu, axis=1)
    return dist_anchor - dist_negative + objective.config.margin > 0


def _perturbed(params: ModelParams, inputs: ObjectiveInputs, tensor: str, index: int,
               delta: float) -> tuple[ModelParams, ObjectiveInputs]:
    if tensor == CENTROIDS_TENSOR:
        centroids = np.array(inputs.centroids, dtype=np.float64)
        centroids.flat[index] += delta
        return params, ObjectiveInputs(entries=inputs.entries, centroids=centroids,
                                       p=inputs.p, batch=inputs.batch)
    moved = params.copy()
    getattr(moved, tensor).flat[index] += delta
    return moved, inputs


def _check_term(
    term: str,
    objective: DeepFormObjective,
    params: ModelParams,
    inputs: ObjectiveInputs,
    n_coords: int,
    eps: float,
    tolerance: float,
    rng: np.random.Generator
) -> list[dict]:
    result = objective.evaluate(params, inputs)
    analytic = result.grads.tensors()
    if inputs.centroids is not None:
        analytic[CENTROIDS_TENSOR] = result.d_centroids
    values = params.tensors()
    if inputs.centroids is not None:
        values[CENTROIDS_TENSOR] = np.asarray(inputs.centroids, dtype=np.float64)
    watch_kinks = objective.triplet_weight > 0 and inputs.batch is not None
    base_active = _active_hinges(objective, params, inputs) if watch_kinks else None

    rows = []
    for tensor, value in values.items():
        count = min(n_coords, value.size)
        coords = rng.choice(value.size, size=count, replace=False)
        abs_errors, rel_errors, excluded = [], [], 0
        for index in coords:
            step = eps * max(abs(float(value.flat[index])), 1.0)
            plus_params, plus_inputs = _perturbed(params, inputs, tensor, index, step)
            minus_params, minus_inputs = _perturbed(params, inputs, tensor, index, -step)
            if watch_kinks:
                if not (np.array_equal(_active_hinges(objective, plus_params, plus_inputs), base_active)
                        and np.array_equal(_active_hinges(objective, minus_params, minus_inputs), base_active)):
                    excluded += 1
                    continue
            numeric = (objective.loss(plus_params, plus_inputs)
                       - objective.loss(minus_params, minus_inputs)) / (2.0 * step)
            exact = float(analytic[tensor].flat[index])
            abs_errors.append(abs(exact - numeric))
            rel_errors.append(relative_error(exact, numeric))
        max_rel = max(rel_errors, default=0.0)
        rows.append({
            "term": term,
            "tensor": tensor,
            "checked": len(rel_errors),
            "excluded": excluded,
            "max_abs_error": max(abs_errors, default=0.0),
            "max_rel_error": max_rel,
            "passed": max_rel <= tolerance,
        })
    return rows


def grad_check(
    params: ModelParams,
    x: sp.spmatrix,
    graph: UserGraph,
    config: TrainConfig,
    k: int = 3,
    n_coords: int = 20,
    eps: float = 1e-4,
    tolerance: float = 1e-4,
    seed: int = 0,
    terms: Optional[Sequence[str]] = None
) -> GradCheckReport:
    """
    Compare analytic gradients with central differences for every loss term.

    The entry set, centroids, target distribution and contrastive batch are
    drawn once and held fixed. The step is ``eps * max(|theta|, 1)``;
    coordinates whose perturbation flips a triplet hinge are excluded.

    Raises:
        UsageError: If the instance exceeds desk scale or a term is unknown
    """
    _check_desk_scale(params)
    terms = tuple(terms or TERMS)
    unknown = [term for term in terms if term not in TERMS]
    if unknown:
        raise UsageError(f"Unknown loss terms {unknown}; choose from {TERMS}")

    params = params.astype(np.float64)
    rng = np.random.default_rng(seed)
    base = DeepFormObjective(x, graph, config)
    entries = EncoderEngine.sample_entries(graph.adjacency, x, rng, config.align_sampling)
    z_final = base.forward(params, entries).z_final
    k = min(k, params.n_users)
    clustering = ClusterEngine.kmeans(z_final, k, rng, config.kmeans_max_iter, config.kmeans_tol)
    centroids = clustering.centroids
    p = ClusterEngine.target_distribution(ClusterEngine.soft_assign(z_final, centroids))
    batch: ContrastBatch = ContrastiveEngine.sample_batch(clustering.labels, rng, config.n_neg)
    inputs = ObjectiveInputs(entries=entries, centroids=centroids, p=p, batch=batch)

    rows: list[dict] = []
    for term in terms:
        term_config = config.with_overrides(_TERM_OVERRIDES[term])
        objective = DeepFormObjective(x, graph, term_config)
        rows.extend(_check_term(term, objective, params, inputs, n_coords, eps, tolerance, rng))
        logger.debug(f"Checked term {term}")

    report = GradCheckReport(frame=pd.DataFrame(rows, columns=REPORT_COLUMNS), tolerance=tolerance)
    logger.info(f"Gradient check {'passed' if report.passed else 'failed'}, "
                f"max relative error {report.max_rel_error:.3e}")
    return report
