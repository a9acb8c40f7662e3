from collections import defaultdict
from fnmatch import fnmatchcase
import logging
from typing import Any, Callable, Dict, Iterator, List

from .event_types import EventHierarchy

logger = logging.getLogger(__name__)

EventCallback = Callable[[Dict[str, Any]], None]


class EventBus:
    """
    Synchronous event bus between pipeline components.

    The trainer publishes epoch records and the training log subscribes to
    them; commands report their start, completion and failure. Patterns use
    glob syntax ("training.*").
    """

    def __init__(self):
        self._subscribers: Dict[str, List[EventCallback]] = defaultdict(list)

    def subscribe(self, event_pattern: str, callback: EventCallback) -> None:
        self._subscribers[event_pattern].append(callback)

    def unsubscribe(self, event_pattern: str, callback: EventCallback) -> None:
        """Remove a subscription made with the same pattern and callback; unknown pairs are ignored."""
        callbacks = self._subscribers.get(event_pattern, [])
        if callback in callbacks:
            callbacks.remove(callback)

    def _callbacks_for(self, event_type: str) -> Iterator[EventCallback]:
        for pattern, callbacks in list(self._subscribers.items()):
            if pattern == event_type or ("*" in pattern and fnmatchcase(event_type, pattern)):
                yield from list(callbacks)

    def emit(self, event_type: str, data: Dict[str, Any] | None = None) -> None:
        """
        Deliver an event, then its parent event from EventHierarchy.

        Every delivery gets its own copy of ``data`` with ``event_type`` and
        ``original_event`` set. A failing callback is logged and does not stop
        delivery to the others.
        """
        for level in EventHierarchy.get_hierarchy(event_type):
            for callback in self._callbacks_for(level):
                event_data = dict(data or {}, event_type=level, original_event=event_type)
                try:
                    callback(event_data)
                except Exception:
                    logger.exception(f"Event callback {getattr(callback, '__qualname__', callback)} "
                                     f"failed on {level}")
