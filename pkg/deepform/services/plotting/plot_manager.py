"""Figures for formation benchmarks and accuracy-vs-K sweeps."""

import logging
from pathlib import Path
from typing import Sequence

from matplotlib.axes import Axes
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
import numpy as np
import pandas as pd

from deepform.groupform.formation_types import BenchResult

logger = logging.getLogger(__name__)


class PlotManager:
    """Renders PNG figures without a display."""

    def __init__(self, figure_size: tuple[float, float] = (6.0, 4.0), dpi: int = 150):
        self.figure_size = figure_size
        self.dpi = dpi
        self._color_palette = ['#1f77b4', '#ff7f0e', '#2ca02c', '#d62728', '#9467bd', '#8c564b']

    def _new_axes(self) -> tuple[Figure, Axes]:
        figure = Figure(figsize=self.figure_size, dpi=self.dpi, facecolor='white')
        FigureCanvasAgg(figure)
        return figure, figure.add_subplot(111)

    def _save(self, figure: Figure, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        figure.tight_layout()
        figure.savefig(path, dpi=self.dpi, bbox_inches='tight')
        logger.info(f"Saved figure {path}")
        return path

    def plot_bench(self, bench: BenchResult, path: str | Path) -> Path:
        """Formation time against K with the fitted line."""
        figure, ax = self._new_axes()
        k = bench.frame["k"].to_numpy(dtype=float)
        ax.plot(k, bench.frame["seconds"] * 1000.0, 'o', color=self._color_palette[0], label='measured')
        grid = np.linspace(k.min(), k.max(), 50)
        ax.plot(grid, (bench.intercept + bench.slope * grid) * 1000.0, '-', color=self._color_palette[1],
                label=f'linear fit (R² = {bench.r_squared:.3f})')
        ax.set_xlabel('number of groups K')
        ax.set_ylabel('formation time (ms)')
        ax.set_title('Group formation time', fontsize=12, fontweight='bold')
        ax.grid(True, alpha=0.3)
        ax.legend()
        return self._save(figure, path)

    def plot_sweep(self, sweep: pd.DataFrame, path: str | Path,
                   metrics: Sequence[str] | None = None) -> Path:
        """One line per metric column against the number of groups."""
        metrics = list(metrics or [c for c in sweep.columns if c.startswith(("ndcg@", "hr@"))])
        figure, ax = self._new_axes()
        for index, metric in enumerate(metrics):
            ax.plot(sweep["groups"], sweep[metric], marker='o',
                    color=self._color_palette[index % len(self._color_palette)], label=metric)
        ax.set_xscale('log', base=2)
        ax.set_xlabel('number of groups K')
        ax.set_ylabel('metric value')
        ax.set_title('Accuracy against K', fontsize=12, fontweight='bold')
        ax.grid(True, alpha=0.3)
        ax.legend()
        return self._save(figure, path)
