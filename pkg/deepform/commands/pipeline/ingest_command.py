import logging
from pathlib import Path
from typing import Optional

from deepform.commands.base_command import Command
from deepform.ingest.ingest_engine import DEFAULT_MIN_INTERACTIONS, DEFAULT_SPLIT_RATIO, IngestEngine
from deepform.models.data.dataset import DatasetStats
from deepform.models.state.run_context import RunContext

logger = logging.getLogger(__name__)


def stats_path_for(out: Path) -> Path:
    return out.with_name(out.stem + "_stats.json")


class IngestCommand(Command):
    """Parse an interaction log and write the binary dataset cache plus its stats."""

    name = "ingest"

    def __init__(
        self,
        context: RunContext,
        input_path: str | Path,
        out: str | Path,
        min_interactions: int = DEFAULT_MIN_INTERACTIONS,
        split_ratio: float = DEFAULT_SPLIT_RATIO,
        seed: int = 0,
        delimiter: Optional[str] = None,
        max_users: Optional[int] = None
    ):
        super().__init__()
        self.context = context
        self.input_path = Path(input_path)
        self.out = Path(out)
        self.min_interactions = min_interactions
        self.split_ratio = split_ratio
        self.seed = seed
        self.delimiter = delimiter
        self.max_users = max_users

    def execute(self) -> DatasetStats:
        self._add_input(self.input_path)
        dataset = IngestEngine.build_dataset(self.input_path, self.delimiter, self.min_interactions,
                                             self.split_ratio, self.seed, self.max_users)
        self.context.dataset_manager.save_dataset(dataset, self._will_write(self.out))
        stats = dataset.stats
        self.context.report_manager.write_json(stats.to_dict(), self._will_write(stats_path_for(self.out)))
        self.extra.update({"min_interactions": self.min_interactions, "split_ratio": self.split_ratio,
                           **stats.to_dict()})
        logger.info(f"Ingested {dataset}")
        return stats
