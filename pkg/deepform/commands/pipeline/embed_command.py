import logging
from pathlib import Path

import numpy as np

from deepform.commands.base_command import Command
from deepform.graph.graph_engine import GraphEngine
from deepform.groupform.formation_engine import FormationEngine
from deepform.models.state.run_context import RunContext

logger = logging.getLogger(__name__)


class EmbedCommand(Command):
    """Compute the final user embedding of a trained checkpoint."""

    name = "embed"

    def __init__(self, context: RunContext, checkpoint_path: str | Path, dataset_path: str | Path,
                 out: str | Path):
        super().__init__()
        self.context = context
        self.checkpoint_path = Path(checkpoint_path)
        self.dataset_path = Path(dataset_path)
        self.out = Path(out)

    def execute(self) -> np.ndarray:
        self._add_input(self.checkpoint_path)
        self._add_input(self.dataset_path)
        checkpoint = self.context.checkpoint_manager.load_checkpoint(self.checkpoint_path)
        dataset = self.context.dataset_manager.load_dataset(self.dataset_path)
        self.config_hash = checkpoint.meta.get("config_hash")
        self.seed = checkpoint.config_dict.get("seed")

        top_k = int(checkpoint.config_dict.get("graph_top_k", 50))
        graph = GraphEngine.build_user_graph(dataset.x_train, top_k or None)
        z_final = FormationEngine.embed(checkpoint, dataset, graph)
        self.context.embedding_manager.save_embeddings(z_final, self._will_write(self.out))
        self.extra.update({"users": int(z_final.shape[0]), "dim": int(z_final.shape[1])})
        return z_final
