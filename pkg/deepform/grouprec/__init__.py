"""
Group recommendation: preference aggregation and baseline groupings.
"""

from .aggregation import AggregationStrategy, GroupRecommender, RankedList, recommend_for_groups
from .preferences import PreferenceSource, build_preferences

__all__ = [
    'AggregationStrategy',
    'GroupRecommender',
    'RankedList',
    'recommend_for_groups',
    'PreferenceSource',
    'build_preferences',
]
