import logging
import time
from typing import Any, List, Optional

from deepform.models.data.manifest import RunManifest
from deepform.models.events.event_bus import EventBus
from deepform.models.events.event_types import PipelineEvents
from deepform.models.events.mixins import EventPublisherMixin
from deepform.services.data_managers.report_manager import ReportManager

from .base_command import Command

logger = logging.getLogger(__name__)


class CommandExecutor(EventPublisherMixin):
    """
    Runs pipeline commands, keeps their history and writes a run manifest
    next to the outputs of every successful command.

    A failing command is undone before the error propagates, so no partial
    output survives it.
    """

    def __init__(self, event_bus: EventBus | None = None, report_manager: ReportManager | None = None,
                 write_manifests: bool = True):
        EventPublisherMixin.__init__(self, event_bus)
        self.report_manager = report_manager or ReportManager()
        self.write_manifests = write_manifests
        self.history: List[Command] = []
        self.max_history = 10
        self.last_manifest: Optional[RunManifest] = None

    def execute_command(self, command: Command) -> Any:
        """
        Execute a command and return its result.

        Raises:
            Exception: Whatever the command raised, after undoing it
        """
        self.publish_event(PipelineEvents.COMMAND_STARTED, {'command': command.name})
        started = time.perf_counter()
        try:
            result = command.execute()
        except Exception as e:
            logger.error(f"Command '{command.name}' failed: {e}")
            command.undo()
            self.publish_event(PipelineEvents.COMMAND_FAILED, {'command': command.name, 'error': str(e)})
            raise
        elapsed = time.perf_counter() - started

        manifest = RunManifest(
            command=command.name,
            config_hash=command.config_hash,
            seed=command.seed,
            inputs=list(command.inputs),
            outputs=list(command.outputs),
            wall_time_seconds=elapsed,
            extra=dict(command.extra),
        )
        directory = command.manifest_directory()
        if self.write_manifests and directory is not None:
            self.report_manager.save_manifest(manifest, directory)
        self.last_manifest = manifest

        self.history.append(command)
        if len(self.history) > self.max_history:
            self.history.pop(0)
        logger.info(f"Command '{command.name}' finished in {elapsed:.2f}s")
        self.publish_event(PipelineEvents.COMMAND_COMPLETED, {
            'command': command.name,
            'seconds': elapsed,
            'outputs': list(command.outputs),
        })
        return result

    def undo(self) -> bool:
        """Remove the outputs of the most recent command."""
        if not self.history:
            return False
        command = self.history.pop()
        command.undo()
        return True

    def clear_history(self):
        self.history.clear()
