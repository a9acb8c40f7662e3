from enum import Enum
import logging
from pathlib import Path
from typing import Optional

from deepform.commands.base_command import Command
from deepform.errors import UsageError
from deepform.groupform.formation_engine import DEFAULT_K, FormationEngine
from deepform.groupform.formation_types import GroupAssignment
from deepform.grouprec.baselines import (baseline_gmm_groups, baseline_kmeans_groups,
                                         baseline_similarity_groups)
from deepform.models.events.event_types import FormationEvents
from deepform.models.events.mixins import EventPublisherMixin
from deepform.models.state.run_context import RunContext

logger = logging.getLogger(__name__)


class FormationMethod(Enum):
    DEEPFORM = "deepform"
    KMEANS = "kmeans"
    GMM = "gmm"
    SIMILARITY = "similarity"


class FormCommand(Command, EventPublisherMixin):
    """
    Partition users into K groups and write ``user_id,group_id`` rows.

    The default method clusters a saved embedding; the baselines work on the
    rating matrix of a dataset cache instead.
    """

    name = "form"

    def __init__(
        self,
        context: RunContext,
        out: str | Path,
        k: int = DEFAULT_K,
        seed: int = 0,
        method: FormationMethod = FormationMethod.DEEPFORM,
        embeddings_path: Optional[str | Path] = None,
        dataset_path: Optional[str | Path] = None,
        max_group_size: Optional[int] = None
    ):
        Command.__init__(self)
        EventPublisherMixin.__init__(self, context.event_bus)
        self.context = context
        self.out = Path(out)
        self.k = k
        self.seed = seed
        self.method = method
        self.embeddings_path = Path(embeddings_path) if embeddings_path is not None else None
        self.dataset_path = Path(dataset_path) if dataset_path is not None else None
        self.max_group_size = max_group_size

    def execute(self) -> GroupAssignment:
        dataset = None
        if self.dataset_path is not None:
            self._add_input(self.dataset_path)
            dataset = self.context.dataset_manager.load_dataset(self.dataset_path)

        if self.method is FormationMethod.DEEPFORM:
            if self.embeddings_path is None:
                raise UsageError("--embeddings is required for the deepform method")
            self._add_input(self.embeddings_path)
            z_final = self.context.embedding_manager.load_embeddings(self.embeddings_path)
            assignment = FormationEngine.form_groups(z_final, self.k, self.seed,
                                                     max_group_size=self.max_group_size)
        else:
            if dataset is None:
                raise UsageError(f"--dataset is required for the {self.method.value} method")
            if self.max_group_size is not None:
                raise UsageError("--max-group-size only applies to the deepform method")
            if self.method is FormationMethod.KMEANS:
                assignment = baseline_kmeans_groups(dataset.x_train, self.k, self.seed)
            elif self.method is FormationMethod.GMM:
                assignment = baseline_gmm_groups(dataset.x_train, self.k, self.seed)
            else:
                assignment = baseline_similarity_groups(dataset.x_train, self.k, self.seed)

        user_ids = dataset.user_ids if dataset is not None else None
        self.context.report_manager.write_table(assignment.to_frame(user_ids), self._will_write(self.out))
        self.extra.update({"method": self.method.value, "k": self.k, "groups": assignment.n_groups,
                           "formation_ms": assignment.wall_time_ms})
        self.publish_event(FormationEvents.FORMATION_COMPLETED, {
            'k': self.k, 'groups': assignment.n_groups, 'wall_time_ms': assignment.wall_time_ms,
        })
        logger.info(f"Formed {assignment.n_groups} groups with {self.method.value} "
                    f"in {assignment.wall_time_ms:.2f} ms")
        return assignment
