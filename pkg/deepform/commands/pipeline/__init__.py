"""
One command per pipeline step.
"""

from .bench_command import BenchCommand
from .embed_command import EmbedCommand
from .evaluate_command import EvaluateCommand
from .form_command import FormationMethod, FormCommand
from .gradcheck_command import GradCheckCommand
from .ingest_command import IngestCommand
from .recommend_command import RecommendCommand
from .sweep_command import SweepCommand
from .synth_command import SynthCommand
from .train_command import TrainCommand

__all__ = [
    'BenchCommand',
    'EmbedCommand',
    'EvaluateCommand',
    'FormationMethod',
    'FormCommand',
    'GradCheckCommand',
    'IngestCommand',
    'RecommendCommand',
    'SweepCommand',
    'SynthCommand',
    'TrainCommand',
]
