import logging
from pathlib import Path
from typing import Sequence

from deepform.commands.base_command import Command
from deepform.ingest.ingest_engine import DEFAULT_SPLIT_RATIO, IngestEngine
from deepform.ingest.synthetic import generate_planted
from deepform.models.data.dataset import DatasetStats
from deepform.models.state.run_context import RunContext

logger = logging.getLogger(__name__)

INTERACTIONS_NAME = "interactions.tsv"
LABELS_NAME = "labels.csv"
DATASET_NAME = "dataset.dfrm"


class SynthCommand(Command):
    """
    Generate a planted-block dataset into a directory: the raw interaction
    log, the ground-truth labels and the split, normalized dataset cache.
    """

    name = "synth"

    def __init__(
        self,
        context: RunContext,
        out_dir: str | Path,
        n_users: int = 300,
        branching: Sequence[int] = (3,),
        n_items: int = 60,
        noise: float = 0.1,
        seed: int = 0,
        split_ratio: float = DEFAULT_SPLIT_RATIO
    ):
        super().__init__()
        self.context = context
        self.out_dir = Path(out_dir)
        self.n_users = n_users
        self.branching = tuple(branching)
        self.n_items = n_items
        self.noise = noise
        self.seed = seed
        self.split_ratio = split_ratio

    @property
    def dataset_path(self) -> Path:
        return self.out_dir / DATASET_NAME

    @property
    def labels_path(self) -> Path:
        return self.out_dir / LABELS_NAME

    def execute(self) -> DatasetStats:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        planted = generate_planted(self.n_users, self.branching, self.n_items, self.noise, self.seed)

        reports = self.context.report_manager
        interactions_path = self._will_write(self.out_dir / INTERACTIONS_NAME)
        reports.write_text(planted.interactions.to_csv(sep="\t", index=False, header=False,
                                                       lineterminator="\n"), interactions_path)
        reports.write_table(planted.labels, self._will_write(self.labels_path))

        dataset = IngestEngine.split_train_test(planted.interactions, self.split_ratio, self.seed)
        dataset = IngestEngine.normalize_ratings(dataset)
        dataset.metadata.update({"synthetic": True, "branching": list(self.branching), "noise": self.noise})
        self.context.dataset_manager.save_dataset(dataset, self._will_write(self.dataset_path))

        self.extra.update({"users": self.n_users, "items": self.n_items,
                           "branching": list(self.branching), "noise": self.noise})
        logger.info(f"Synthetic data written to {self.out_dir}: {dataset}")
        return dataset.stats
