import logging
from pathlib import Path
from typing import Optional

from deepform.commands.base_command import Command
from deepform.models.state.config import TrainConfig
from deepform.models.state.run_context import RunContext
from deepform.training.grad_check import GradCheckReport, grad_check, random_instance

logger = logging.getLogger(__name__)

# desk-scale model sizes used unless the config overrides them
DESK_OVERRIDES = {"d": 6, "h1": 8, "h2": 7}


class GradCheckCommand(Command):
    """Finite-difference check of every loss term on a small random instance."""

    name = "gradcheck"

    def __init__(
        self,
        context: RunContext,
        config: TrainConfig,
        out: Optional[str | Path] = None,
        n_users: int = 12,
        n_items: int = 10,
        k: int = 3,
        n_coords: int = 20,
        tolerance: float = 1e-4
    ):
        super().__init__()
        self.context = context
        self.config = config
        self.out = Path(out) if out is not None else None
        self.n_users = n_users
        self.n_items = n_items
        self.k = k
        self.n_coords = n_coords
        self.tolerance = tolerance
        self.config_hash = config.config_hash()
        self.seed = config.seed

    def execute(self) -> GradCheckReport:
        x, graph, params = random_instance(self.n_users, self.n_items, self.config, self.config.run_seed)
        report = grad_check(params, x, graph, self.config, k=self.k, n_coords=self.n_coords,
                            tolerance=self.tolerance, seed=self.config.run_seed)
        if self.out is not None:
            self.context.report_manager.write_table(report.frame, self._will_write(self.out))
        if not report.passed:
            logger.warning(f"Gradient check failed: max relative error {report.max_rel_error:.3e}")
        self.extra.update({"passed": report.passed, "max_rel_error": report.max_rel_error})
        return report
