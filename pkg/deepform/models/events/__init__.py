"""
Event system for deepform.

Components publish progress on a shared bus instead of calling each other.
"""

from .event_bus import EventBus
from .event_types import EventHierarchy, FormationEvents, PipelineEvents, TrainingEvents
from .mixins import EventPublisherMixin, EventSubscriberMixin

__all__ = [
    'EventBus',
    'EventHierarchy',
    'FormationEvents',
    'PipelineEvents',
    'TrainingEvents',
    'EventPublisherMixin',
    'EventSubscriberMixin',
]
