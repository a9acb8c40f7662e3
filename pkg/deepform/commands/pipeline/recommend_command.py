import logging
from pathlib import Path
from typing import Optional

from deepform.commands.base_command import Command
from deepform.graph.graph_engine import DEFAULT_TOP_K, GraphEngine
from deepform.groupform.formation_types import GroupAssignment
from deepform.grouprec.aggregation import (AggregationStrategy, RankedList, recommend_for_groups,
                                           recommendations_frame)
from deepform.grouprec.preferences import PreferenceSource, build_preferences
from deepform.models.state.run_context import RunContext

logger = logging.getLogger(__name__)

DEFAULT_TOP_N = 20


class RecommendCommand(Command):
    """Write one ranked item list per group as ``group_id,rank,item_id,score``."""

    name = "recommend"

    def __init__(
        self,
        context: RunContext,
        groups_path: str | Path,
        dataset_path: str | Path,
        out: str | Path,
        strategy: AggregationStrategy = AggregationStrategy.AVG,
        top_n: Optional[int] = DEFAULT_TOP_N,
        source: PreferenceSource = PreferenceSource.USER_KNN
    ):
        super().__init__()
        self.context = context
        self.groups_path = Path(groups_path)
        self.dataset_path = Path(dataset_path)
        self.out = Path(out)
        self.strategy = strategy
        self.top_n = top_n
        self.source = source

    def execute(self) -> list[RankedList]:
        self._add_input(self.groups_path)
        self._add_input(self.dataset_path)
        dataset = self.context.dataset_manager.load_dataset(self.dataset_path)
        frame = self.context.report_manager.read_table(self.groups_path, dtype={"user_id": str})
        assignment = GroupAssignment.from_frame(frame, dataset.user_ids)

        adjacency = None
        if self.source is PreferenceSource.USER_KNN:
            adjacency = GraphEngine.build_adjacency(dataset.x_train, DEFAULT_TOP_K)
        preferences = build_preferences(self.source, dataset.x_train, adjacency)
        lists = recommend_for_groups(assignment, preferences, dataset.x_train, self.strategy, self.top_n)
        self.context.report_manager.write_table(recommendations_frame(lists, dataset.item_ids),
                                                self._will_write(self.out))
        self.extra.update({"strategy": self.strategy.value, "preferences": self.source.value,
                           "top_n": self.top_n, "groups": len(lists)})
        return lists
