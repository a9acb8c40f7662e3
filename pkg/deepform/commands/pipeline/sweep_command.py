import logging
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd

from deepform.commands.base_command import Command
from deepform.evaluation.pipeline import DEFAULT_K_LIST, sweep_k
from deepform.graph.graph_engine import DEFAULT_TOP_K, GraphEngine
from deepform.grouprec.aggregation import AggregationStrategy
from deepform.grouprec.preferences import PreferenceSource, build_preferences
from deepform.ingest.synthetic import labels_for
from deepform.models.state.run_context import RunContext

logger = logging.getLogger(__name__)

DEFAULT_SWEEP_K = (2, 4, 8, 16, 32, 64, 128)


class SweepCommand(Command):
    """
    Accuracy against the number of groups from one embedding. With a labels
    table the clustering agreement (ARI, NMI) is reported per K as well.
    """

    name = "sweep"

    def __init__(
        self,
        context: RunContext,
        embeddings_path: str | Path,
        dataset_path: str | Path,
        out: str | Path,
        k_values: Sequence[int] = DEFAULT_SWEEP_K,
        strategy: AggregationStrategy = AggregationStrategy.AVG,
        k_list: Sequence[int] = DEFAULT_K_LIST,
        source: PreferenceSource = PreferenceSource.USER_KNN,
        seed: int = 0,
        labels_path: Optional[str | Path] = None,
        label_level: int = 1,
        plot_path: Optional[str | Path] = None
    ):
        super().__init__()
        self.context = context
        self.embeddings_path = Path(embeddings_path)
        self.dataset_path = Path(dataset_path)
        self.out = Path(out)
        self.k_values = tuple(k_values)
        self.strategy = strategy
        self.k_list = tuple(k_list)
        self.source = source
        self.seed = seed
        self.labels_path = Path(labels_path) if labels_path is not None else None
        self.label_level = label_level
        self.plot_path = Path(plot_path) if plot_path is not None else None

    def execute(self) -> pd.DataFrame:
        self._add_input(self.embeddings_path)
        self._add_input(self.dataset_path)
        z_final = self.context.embedding_manager.load_embeddings(self.embeddings_path)
        dataset = self.context.dataset_manager.load_dataset(self.dataset_path)
        truth = None
        if self.labels_path is not None:
            self._add_input(self.labels_path)
            labels = self.context.report_manager.read_table(self.labels_path, dtype={"user_id": str})
            truth = labels_for(dataset.user_ids, labels, self.label_level)

        # K values beyond the user count cannot be formed
        k_values = [k for k in self.k_values if 2 <= k <= dataset.n_users]
        if len(k_values) < len(self.k_values):
            logger.warning(f"Skipping K values outside [2, {dataset.n_users}]")

        adjacency = None
        if self.source is PreferenceSource.USER_KNN:
            adjacency = GraphEngine.build_adjacency(dataset.x_train, DEFAULT_TOP_K)
        preferences = build_preferences(self.source, dataset.x_train, adjacency)
        frame = sweep_k(z_final, k_values, dataset, self.strategy, self.k_list, preferences,
                        self.seed, truth)

        self.context.report_manager.write_table(frame, self._will_write(self.out))
        if self.plot_path is not None:
            self.context.plot_manager.plot_sweep(frame, self._will_write(self.plot_path))
        self.extra.update({"strategy": self.strategy.value, "k_values": k_values})
        return frame
