"""
Evaluation of group recommendations.
"""

from .metrics import clustering_quality, hr_at_k, ndcg_at_k
from .pipeline import EvaluationMode, MetricsReport, evaluate_pipeline, sweep_k

__all__ = [
    'clustering_quality',
    'hr_at_k',
    'ndcg_at_k',
    'EvaluationMode',
    'MetricsReport',
    'evaluate_pipeline',
    'sweep_k',
]
