import logging
from pathlib import Path
from typing import Sequence

from deepform.commands.base_command import Command
from deepform.evaluation.pipeline import (DEFAULT_K_LIST, DEFAULT_NEGATIVES, EvaluationMode, MetricsReport,
                                          evaluate_pipeline)
from deepform.graph.graph_engine import DEFAULT_TOP_K, GraphEngine
from deepform.groupform.formation_types import GroupAssignment
from deepform.grouprec.aggregation import AggregationStrategy
from deepform.grouprec.preferences import PreferenceSource, build_preferences
from deepform.models.state.run_context import RunContext

logger = logging.getLogger(__name__)


def text_path_for(out: Path) -> Path:
    return out.with_suffix(".txt")


class EvaluateCommand(Command):
    """
    Score a grouping against the held-out items: a CSV table with one row
    per k and a plain-text summary next to it.
    """

    name = "evaluate"

    def __init__(
        self,
        context: RunContext,
        groups_path: str | Path,
        dataset_path: str | Path,
        out: str | Path,
        strategy: AggregationStrategy = AggregationStrategy.AVG,
        k_list: Sequence[int] = DEFAULT_K_LIST,
        mode: EvaluationMode = EvaluationMode.FULL,
        n_negatives: int = DEFAULT_NEGATIVES,
        source: PreferenceSource = PreferenceSource.USER_KNN,
        seed: int = 0
    ):
        super().__init__()
        self.context = context
        self.groups_path = Path(groups_path)
        self.dataset_path = Path(dataset_path)
        self.out = Path(out)
        self.strategy = strategy
        self.k_list = tuple(k_list)
        self.mode = mode
        self.n_negatives = n_negatives
        self.source = source
        self.seed = seed

    def execute(self) -> MetricsReport:
        self._add_input(self.groups_path)
        self._add_input(self.dataset_path)
        dataset = self.context.dataset_manager.load_dataset(self.dataset_path)
        frame = self.context.report_manager.read_table(self.groups_path, dtype={"user_id": str})
        assignment = GroupAssignment.from_frame(frame, dataset.user_ids)

        adjacency = None
        if self.source is PreferenceSource.USER_KNN:
            adjacency = GraphEngine.build_adjacency(dataset.x_train, DEFAULT_TOP_K)
        preferences = build_preferences(self.source, dataset.x_train, adjacency)
        report = evaluate_pipeline(assignment, self.strategy, dataset, self.k_list, preferences,
                                   self.mode, self.n_negatives, self.seed)
        report.extra["preferences"] = self.source.value

        reports = self.context.report_manager
        reports.write_table(report.to_frame(), self._will_write(self.out))
        reports.write_text(report.to_text(), self._will_write(text_path_for(self.out)))
        self.extra.update(report.to_dict())
        return report
