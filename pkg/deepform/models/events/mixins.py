"""
Publisher and subscriber mixins: the trainer, the command executor and the
form command publish; the training log subscribes.
"""

from typing import Any, Dict, List, Tuple

from .event_bus import EventBus, EventCallback


class EventPublisherMixin:
    """Publishes through an optional bus; without a bus publishing is a no-op."""

    def __init__(self, event_bus: EventBus | None):
        self._event_bus: EventBus | None = event_bus

    def publish_event(self, event_type: str, data: Dict[str, Any] | None = None) -> None:
        if self._event_bus is not None:
            self._event_bus.emit(event_type, dict(data or {}, source_component=type(self).__name__))


class EventSubscriberMixin:
    """
    Remembers its subscriptions so ``unsubscribe_all`` can detach the
    component, e.g. a training log once its run has finished.
    """

    def __init__(self, event_bus: EventBus | None):
        self._event_bus: EventBus | None = event_bus
        self._subscriptions: List[Tuple[str, EventCallback]] = []

    def subscribe_to_event(self, event_type: str, handler: EventCallback) -> None:
        if self._event_bus is not None:
            self._event_bus.subscribe(event_type, handler)
            self._subscriptions.append((event_type, handler))

    def unsubscribe_all(self) -> None:
        if self._event_bus is not None:
            for event_type, handler in self._subscriptions:
                self._event_bus.unsubscribe(event_type, handler)
        self._subscriptions.clear()
