import logging
from pathlib import Path
from typing import Optional, Sequence

from deepform.commands.base_command import Command
from deepform.groupform.formation_engine import DEFAULT_BENCH_K, FormationEngine
from deepform.groupform.formation_types import BenchResult
from deepform.models.state.run_context import RunContext

logger = logging.getLogger(__name__)


class BenchCommand(Command):
    """Time formation for a list of K on one embedding; optionally plot it."""

    name = "bench"

    def __init__(self, context: RunContext, embeddings_path: str | Path, out: str | Path,
                 k_list: Sequence[int] = DEFAULT_BENCH_K, seed: int = 0,
                 plot_path: Optional[str | Path] = None):
        super().__init__()
        self.context = context
        self.embeddings_path = Path(embeddings_path)
        self.out = Path(out)
        self.k_list = tuple(k_list)
        self.seed = seed
        self.plot_path = Path(plot_path) if plot_path is not None else None

    def execute(self) -> BenchResult:
        self._add_input(self.embeddings_path)
        z_final = self.context.embedding_manager.load_embeddings(self.embeddings_path)
        bench = FormationEngine.bench_formation(z_final, self.k_list, self.seed)
        self.context.report_manager.write_table(bench.frame, self._will_write(self.out))
        if self.plot_path is not None:
            self.context.plot_manager.plot_bench(bench, self._will_write(self.plot_path))
        self.extra.update(bench.summary())
        return bench
