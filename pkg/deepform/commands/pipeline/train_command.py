import logging
from pathlib import Path
from typing import Optional

from deepform.commands.base_command import Command
from deepform.graph.graph_engine import GraphEngine
from deepform.models.state.config import TrainConfig
from deepform.models.state.run_context import RunContext
from deepform.training.trainer import Trainer, TrainResult

logger = logging.getLogger(__name__)


def log_path_for(checkpoint: Path) -> Path:
    return checkpoint.with_name(checkpoint.stem + "_trainlog.csv")


class TrainCommand(Command):
    """
    Train the model on a dataset cache and write the final checkpoint and the
    per-epoch training log.

    With ``resume`` the saved state is restored and the existing log is
    extended; otherwise a stale log at the same path is replaced.
    """

    name = "train"

    def __init__(
        self,
        context: RunContext,
        dataset_path: str | Path,
        config: TrainConfig,
        out_checkpoint: str | Path,
        resume: Optional[str | Path] = None,
        log_path: Optional[str | Path] = None
    ):
        super().__init__()
        self.context = context
        self.dataset_path = Path(dataset_path)
        self.config = config
        self.out_checkpoint = Path(out_checkpoint)
        self.resume = Path(resume) if resume is not None else None
        self.log_path = Path(log_path) if log_path is not None else log_path_for(self.out_checkpoint)
        self.config_hash = config.config_hash()
        self.seed = config.seed

    def execute(self) -> TrainResult:
        self._add_input(self.dataset_path)
        dataset = self.context.dataset_manager.load_dataset(self.dataset_path)
        resume_from = None
        if self.resume is not None:
            self._add_input(self.resume)
            resume_from = self.context.checkpoint_manager.load_checkpoint(self.resume)
        elif self.log_path.exists():
            logger.info(f"Replacing existing training log {self.log_path}")
            self.log_path.unlink()

        graph = GraphEngine.build_user_graph(dataset.x_train, self.config.graph_top_k or None)
        logger.debug(f"Neighbours per user:\n{GraphEngine.nnz_histogram(graph.adjacency).to_string(index=False)}")
        trainer = Trainer(self.config, event_bus=self.context.event_bus,
                          checkpoint_path=self.out_checkpoint,
                          checkpoint_manager=self.context.checkpoint_manager,
                          show_progress=self.context.show_progress)

        checkpoint_path = self._will_write(self.out_checkpoint)
        log_path = self._will_write(self.log_path)
        result = trainer.train(dataset, graph, resume_from=resume_from, log_path=log_path)
        self.context.checkpoint_manager.save_checkpoint(result.checkpoint, checkpoint_path)

        self.extra.update({"epochs": result.checkpoint.epoch, "nan_retries": result.nan_retries,
                           "final_loss": float(result.log.to_frame()["loss_total"].iloc[-1])
                           if len(result.log) else None})
        return result
