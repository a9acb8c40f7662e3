"""
Event type definitions for the deepform pipeline.

Specific events are emitted by the component doing the work; generic parent
events ("training.changed", "pipeline.changed") let listeners follow a whole
area without enumerating every event.
"""

from typing import Dict, List


class TrainingEvents:
    """Events published by the trainer."""
    TRAINING_STARTED = "training.started"
    EPOCH_COMPLETED = "training.epoch_completed"
    K_RESAMPLED = "training.k_resampled"
    NAN_DETECTED = "training.nan_detected"
    CHECKPOINT_SAVED = "training.checkpoint_saved"
    TRAINING_COMPLETED = "training.completed"
    TRAINING_CHANGED = "training.changed"


class FormationEvents:
    """Events published by inference-time group formation."""
    FORMATION_COMPLETED = "formation.completed"


class PipelineEvents:
    """Events published by the command executor."""
    COMMAND_STARTED = "pipeline.command_started"
    COMMAND_COMPLETED = "pipeline.command_completed"
    COMMAND_FAILED = "pipeline.command_failed"
    PIPELINE_CHANGED = "pipeline.changed"


class EventHierarchy:
    """Parent events by area: the first dotted component of an event name."""

    AREA_PARENTS: Dict[str, str] = {
        "training": TrainingEvents.TRAINING_CHANGED,
        "formation": PipelineEvents.PIPELINE_CHANGED,
        "pipeline": PipelineEvents.PIPELINE_CHANGED,
    }

    @classmethod
    def get_hierarchy(cls, event_type: str) -> List[str]:
        """Event types to deliver, most specific first."""
        parent = cls.AREA_PARENTS.get(event_type.split(".", 1)[0])
        if parent is None or parent == event_type:
            return [event_type]
        return [event_type, parent]
