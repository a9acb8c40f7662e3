"""
Full-batch training loop for the composite objective.

Each epoch: optionally resample K and re-run K-Means on the current final
embedding, draw the reconstruction entry set and the contrastive batch,
evaluate the objective with all gradients, step the optimizer and check that
everything stayed finite.
"""

from dataclasses import dataclass, field
import logging
from pathlib import Path
import time
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from deepform.cluster.cluster_engine import ClusterEngine, ClusterState
from deepform.contrastive.contrastive_engine import ContrastiveEngine
from deepform.encoder.encoder_engine import EncoderEngine
from deepform.encoder.encoder_types import ModelParams
from deepform.errors import DataError, NumericError, ShapeMismatchError
from deepform.graph.graph_engine import UserGraph
from deepform.models.data.checkpoint import ASSIGNMENT_TENSOR, CENTROIDS_TENSOR, Checkpoint
from deepform.models.data.dataset import Dataset
from deepform.models.events.event_bus import EventBus
from deepform.models.events.event_types import TrainingEvents
from deepform.models.events.mixins import EventPublisherMixin, EventSubscriberMixin
from deepform.models.state.config import TrainConfig
from deepform.services.data_managers.checkpoint_manager import CheckpointManager

from .objective import DeepFormObjective, ObjectiveInputs
from .optimizers import Optimizer

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "k", "loss_total", "loss_align", "loss_cluster", "loss_triplet",
               "loss_nce", "grad_norm", "lr", "seconds"]


class TrainLog(EventSubscriberMixin):
    """
    One record per completed epoch.

    When constructed with an event bus the log fills itself from
    ``training.epoch_completed`` events. With ``path`` set every record is
    also appended to a comma-separated file with a fixed header.
    """

    def __init__(self, event_bus: EventBus | None = None, path: str | Path | None = None):
        EventSubscriberMixin.__init__(self, event_bus)
        self.records: List[Dict[str, Any]] = []
        self.path = Path(path) if path is not None else None
        self.subscribe_to_event(TrainingEvents.EPOCH_COMPLETED, self._on_epoch_completed)

    def _on_epoch_completed(self, event_data: Dict[str, Any]) -> None:
        self.append(event_data["record"])

    def append(self, record: Dict[str, Any]) -> None:
        """
        Raises:
            ValueError: If the epoch index does not increase
        """
        row = {column: record[column] for column in LOG_COLUMNS}
        if self.records and row["epoch"] <= self.records[-1]["epoch"]:
            raise ValueError(f"epoch {row['epoch']} does not follow {self.records[-1]['epoch']}")
        self.records.append(row)
        if self.path is not None:
            write_header = not self.path.exists() or self.path.stat().st_size == 0
            self.path.parent.mkdir(parents=True, exist_ok=True)
            pd.DataFrame([row], columns=LOG_COLUMNS).to_csv(
                self.path, mode="a", header=write_header, index=False
            )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records, columns=LOG_COLUMNS)

    @classmethod
    def read(cls, path: str | Path) -> pd.DataFrame:
        frame = pd.read_csv(path)
        missing = [column for column in LOG_COLUMNS if column not in frame.columns]
        if missing:
            raise DataError(f"{path} is not a training log, missing columns {missing}")
        return frame

    def __len__(self):
        return len(self.records)


@dataclass
class TrainResult:
    """Final state of a run; ``checkpoint`` is ready to be saved."""
    params: ModelParams
    centroids: Optional[np.ndarray]
    hard_assign: Optional[np.ndarray]
    log: TrainLog
    checkpoint: Checkpoint
    nan_retries: int = 0


@dataclass
class _TrainState:
    params: ModelParams
    cluster: Optional[ClusterState]
    epoch: int
    lr: float
    optimizer_tensors: Dict[str, np.ndarray] = field(default_factory=dict)
    optimizer_meta: Dict[str, Any] = field(default_factory=dict)
    rng_state: Dict[str, Any] = field(default_factory=dict)


class Trainer(EventPublisherMixin):
    """
    Optimizes the composite objective for ``config.epochs`` epochs.

    One generator seeded with ``config.seed`` drives initialization, K
    sampling, K-Means seeding, entry sampling and contrastive batches, so a run
    is reproducible given the seed and a single BLAS thread.
    """

    def __init__(
        self,
        config: TrainConfig,
        event_bus: EventBus | None = None,
        checkpoint_path: str | Path | None = None,
        checkpoint_manager: CheckpointManager | None = None,
        show_progress: bool = False
    ):
        self.event_bus = event_bus or EventBus()
        EventPublisherMixin.__init__(self, self.event_bus)
        self.config = config
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path is not None else None
        self.checkpoint_manager = checkpoint_manager or CheckpointManager()
        self.show_progress = show_progress
        self._last_failure: Dict[str, Any] = {}

    @property
    def uses_clusters(self) -> bool:
        return self.config.w_cluster > 0 or self.uses_contrast

    @property
    def uses_contrast(self) -> bool:
        config = self.config
        return config.w_contrast > 0 and (config.w_triplet > 0 or config.w_nce > 0)

    def train(
        self,
        dataset: Dataset,
        graph: UserGraph,
        resume_from: Checkpoint | None = None,
        log_path: str | Path | None = None
    ) -> TrainResult:
        """
        Run the epoch loop.

        Raises:
            ShapeMismatchError: If the graph, dataset or checkpoint disagree on sizes
            NumericError: If non-finite values persist after max_nan_retries recoveries
        """
        config = self.config
        if graph.n_users != dataset.n_users:
            raise ShapeMismatchError("user graph does not match dataset users",
                                     expected=(dataset.n_users,), actual=(graph.n_users,))
        if self.uses_clusters and dataset.n_users < 2:
            raise DataError("clustering terms need at least 2 users")

        log = TrainLog(self.event_bus, path=log_path)
        objective = DeepFormObjective(dataset.x_train, graph, config)
        optimizer = Optimizer.from_config(config)
        rng = np.random.default_rng(config.run_seed)

        if resume_from is not None:
            state = self._restore(resume_from, dataset, optimizer, rng)
            logger.info(f"Resuming from epoch {state.epoch} with lr {state.lr:g}")
        else:
            params = ModelParams.initialize(dataset.n_users, dataset.n_items, config.d,
                                            config.h1, config.h2, rng)
            state = _TrainState(params=params, cluster=None, epoch=0, lr=config.lr)

        self.publish_event(TrainingEvents.TRAINING_STARTED, {
            'n_users': dataset.n_users, 'n_items': dataset.n_items,
            'epochs': config.epochs, 'start_epoch': state.epoch,
        })
        logger.info(f"Training {config.epochs} epochs on {dataset} with {optimizer!r}")

        retries = 0
        snapshot = self._snapshot(state, optimizer, rng)
        progress = tqdm(total=config.epochs, initial=state.epoch, unit="epoch", desc="train",
                        disable=not self.show_progress)
        try:
            while state.epoch < config.epochs:
                epoch = state.epoch + 1
                started = time.perf_counter()
                record = self._run_epoch(epoch, state, objective, optimizer, rng, dataset, graph)
                if record is None:
                    retries += 1
                    self._recover(epoch, state, snapshot, optimizer, rng, retries)
                    continue

                record["seconds"] = time.perf_counter() - started
                state.epoch = epoch
                self.publish_event(TrainingEvents.EPOCH_COMPLETED, {'record': dict(record)})
                logger.info(
                    f"epoch {epoch}/{config.epochs} k={record['k']} loss={record['loss_total']:.6g} "
                    f"grad_norm={record['grad_norm']:.4g}"
                )
                progress.update(1)
                progress.set_postfix(loss=f"{record['loss_total']:.4g}", k=record["k"])
                snapshot = self._snapshot(state, optimizer, rng)

                if config.checkpoint_every and epoch % config.checkpoint_every == 0 and self.checkpoint_path:
                    self.checkpoint_manager.save_checkpoint(self._checkpoint(state, optimizer, rng, retries),
                                                            self.checkpoint_path)
                    self.publish_event(TrainingEvents.CHECKPOINT_SAVED,
                                       {'epoch': epoch, 'path': str(self.checkpoint_path)})
        finally:
            progress.close()
            log.unsubscribe_all()

        checkpoint = self._checkpoint(state, optimizer, rng, retries)
        self.publish_event(TrainingEvents.TRAINING_COMPLETED, {'epochs': state.epoch, 'nan_retries': retries})
        cluster = state.cluster
        return TrainResult(
            params=state.params,
            centroids=None if cluster is None else cluster.centroids,
            hard_assign=None if cluster is None else cluster.hard_assign,
            log=log,
            checkpoint=checkpoint,
            nan_retries=retries,
        )

    def _needs_resample(self, epoch: int, cluster: Optional[ClusterState]) -> bool:
        if not self.uses_clusters:
            return False
        return cluster is None or (epoch - 1) % self.config.k_resample_every == 0

    def _choose_k(self, n_users: int, rng: np.random.Generator) -> int:
        config = self.config
        if config.stochastic_k:
            return ClusterEngine.sample_k(min(config.k_max, n_users), rng)
        return min(config.effective_fixed_k, n_users)

    def _resample(self, epoch: int, state: _TrainState, optimizer: Optimizer, rng: np.random.Generator,
                  dataset: Dataset, graph: UserGraph) -> ClusterState:
        config = self.config
        k = self._choose_k(dataset.n_users, rng)
        z_final = EncoderEngine.final_embedding(graph.normalized, dataset.x_train, state.params,
                                                config.hops, config.activation)
        result = ClusterEngine.kmeans(z_final, k, rng, config.kmeans_max_iter, config.kmeans_tol)
        cluster = ClusterState.from_kmeans(result)
        cluster.centroids = cluster.centroids.astype(np.float32)
        optimizer.reset(CENTROIDS_TENSOR)
        logger.debug(f"epoch {epoch}: K={k}, K-Means inertia {result.inertia:.6g} after {result.n_iter} iterations")
        self.publish_event(TrainingEvents.K_RESAMPLED, {'epoch': epoch, 'k': k, 'inertia': result.inertia})
        return cluster

    def _run_epoch(self, epoch: int, state: _TrainState, objective: DeepFormObjective,
                   optimizer: Optimizer, rng: np.random.Generator,
                   dataset: Dataset, graph: UserGraph) -> Optional[Dict[str, Any]]:
        """Advance state by one epoch; returns None when a non-finite value appeared."""
        config = self.config
        if self._needs_resample(epoch, state.cluster):
            state.cluster = self._resample(epoch, state, optimizer, rng, dataset, graph)
        cluster = state.cluster

        entries = EncoderEngine.sample_entries(graph.adjacency, dataset.x_train, rng, config.align_sampling)
        batch = None
        if cluster is not None and self.uses_contrast:
            batch = ContrastiveEngine.sample_batch(cluster.hard_assign, rng, config.n_neg)
        inputs = ObjectiveInputs(entries=entries, centroids=None if cluster is None else cluster.centroids,
                                 batch=batch)
        result = objective.evaluate(state.params, inputs)
        losses = result.losses
        grad_norm = result.grad_norm()
        if not (np.isfinite(losses.total) and np.isfinite(grad_norm)):
            self._report_nan(epoch, state, losses.to_dict(), grad_norm)
            return None

        tensors = state.params.tensors()
        grads = result.grads.tensors()
        if cluster is not None:
            tensors[CENTROIDS_TENSOR] = cluster.centroids
            grads[CENTROIDS_TENSOR] = result.d_centroids
        updated = optimizer.step(tensors, grads, state.lr)
        centroids = updated.pop(CENTROIDS_TENSOR, None)
        params = ModelParams.from_tensors(updated).astype(np.float32)
        if not params.is_finite() or (centroids is not None and not np.all(np.isfinite(centroids))):
            self._report_nan(epoch, state, losses.to_dict(), grad_norm)
            return None

        state.params = params
        if cluster is not None:
            cluster.centroids = centroids.astype(np.float32)
            cluster.q = None
            cluster.p = result.p

        record = {"epoch": epoch, "k": 0 if cluster is None else cluster.k}
        record.update(losses.to_dict())
        record.update({"grad_norm": grad_norm, "lr": state.lr})
        return record

    def _report_nan(self, epoch: int, state: _TrainState, losses: Dict[str, float], grad_norm: float) -> None:
        logger.warning(f"Non-finite values at epoch {epoch} (lr {state.lr:g}): {losses}, grad_norm {grad_norm}")
        self.publish_event(TrainingEvents.NAN_DETECTED, {'epoch': epoch, 'lr': state.lr, 'losses': losses})
        self._last_failure = {"epoch": epoch, "lr": state.lr, "losses": losses, "grad_norm": grad_norm}

    def _recover(self, epoch: int, state: _TrainState, snapshot: _TrainState, optimizer: Optimizer,
                 rng: np.random.Generator, retries: int) -> None:
        """Restore the last finite state and halve the learning rate, or give up."""
        if retries > self.config.max_nan_retries:
            raise NumericError(self._diagnostic_dump(epoch, state, retries))
        lr = state.lr / 2.0
        state.params = snapshot.params.copy()
        state.cluster = None if snapshot.cluster is None else _copy_cluster(snapshot.cluster)
        state.epoch = snapshot.epoch
        state.lr = lr
        optimizer.load_state({k: v.copy() for k, v in snapshot.optimizer_tensors.items()},
                             dict(snapshot.optimizer_meta))
        rng.bit_generator.state = snapshot.rng_state
        logger.warning(f"Restored state after epoch {snapshot.epoch}, retry {retries} with lr {lr:g}")

    def _diagnostic_dump(self, epoch: int, state: _TrainState, retries: int) -> str:
        failure = self._last_failure
        norms = {name: float(np.linalg.norm(np.nan_to_num(value.astype(np.float64), nan=0.0,
                                                          posinf=0.0, neginf=0.0)))
                 for name, value in state.params.items()}
        bad = [name for name, value in state.params.items() if not np.all(np.isfinite(value))]
        lines = [
            f"Training diverged at epoch {epoch} after {retries - 1} recoveries",
            f"lr: {state.lr:g}",
            f"losses: {failure.get('losses')}",
            f"grad_norm: {failure.get('grad_norm')}",
            f"non-finite tensors: {bad or 'none'}",
            f"parameter norms: {norms}",
        ]
        dump = "\n".join(lines)
        logger.error(dump)
        return dump

    @staticmethod
    def _snapshot(state: _TrainState, optimizer: Optimizer, rng: np.random.Generator) -> _TrainState:
        return _TrainState(
            params=state.params.copy(),
            cluster=None if state.cluster is None else _copy_cluster(state.cluster),
            epoch=state.epoch,
            lr=state.lr,
            optimizer_tensors={k: v.copy() for k, v in optimizer.state_tensors().items()},
            optimizer_meta=dict(optimizer.state_meta()),
            rng_state=rng.bit_generator.state,
        )

    def _checkpoint(self, state: _TrainState, optimizer: Optimizer, rng: np.random.Generator,
                    retries: int) -> Checkpoint:
        config = self.config
        extra: Dict[str, np.ndarray] = {}
        if state.cluster is not None:
            extra[CENTROIDS_TENSOR] = state.cluster.centroids.astype(np.float32)
            extra[ASSIGNMENT_TENSOR] = state.cluster.hard_assign.astype(np.float32)
        extra.update(optimizer.state_tensors())
        d, h1, h2 = state.params.dims
        meta = {
            "epoch": state.epoch,
            "lr": state.lr,
            "k": 0 if state.cluster is None else state.cluster.k,
            "nan_retries": retries,
            "config": config.to_dict(),
            "config_hash": config.config_hash(),
            "model": {"n_users": state.params.n_users, "n_items": state.params.n_items,
                      "d": d, "h1": h1, "h2": h2, "hops": config.hops,
                      "activation": config.activation.value},
            "optimizer": config.optimizer.value,
            "rng_state": rng.bit_generator.state,
            **optimizer.state_meta(),
        }
        return Checkpoint(params=state.params.copy(), extra=extra, meta=meta)

    def _restore(self, checkpoint: Checkpoint, dataset: Dataset, optimizer: Optimizer,
                 rng: np.random.Generator) -> _TrainState:
        CheckpointManager.check_compatible(checkpoint, dataset)
        d, h1, h2 = checkpoint.params.dims
        if (d, h1, h2) != (self.config.d, self.config.h1, self.config.h2):
            raise ShapeMismatchError("checkpoint does not match configured (d, h1, h2)",
                                     expected=(self.config.d, self.config.h1, self.config.h2),
                                     actual=(d, h1, h2))
        cluster = None
        if checkpoint.centroids is not None and checkpoint.hard_assign is not None:
            centroids = checkpoint.centroids.astype(np.float32)
            cluster = ClusterState(k=centroids.shape[0], centroids=centroids,
                                   hard_assign=checkpoint.hard_assign)
        optimizer.load_state(
            {name: value for name, value in checkpoint.extra.items() if name.startswith("adam_")},
            checkpoint.meta,
        )
        if "rng_state" in checkpoint.meta:
            rng.bit_generator.state = checkpoint.meta["rng_state"]
        return _TrainState(
            params=checkpoint.params.astype(np.float32),
            cluster=cluster,
            epoch=checkpoint.epoch,
            lr=float(checkpoint.meta.get("lr", self.config.lr)),
        )


def _copy_cluster(cluster: ClusterState) -> ClusterState:
    return ClusterState(k=cluster.k, centroids=cluster.centroids.copy(),
                        hard_assign=cluster.hard_assign.copy(),
                        q=None if cluster.q is None else cluster.q.copy(),
                        p=None if cluster.p is None else cluster.p.copy())
