"""
Facade for the services shared by every command of one process.
"""
from deepform.commands.command_executor import CommandExecutor
from deepform.models.events.event_bus import EventBus
from deepform.services.data_managers.checkpoint_manager import CheckpointManager
from deepform.services.data_managers.dataset_cache_manager import DatasetCacheManager
from deepform.services.data_managers.embedding_manager import EmbeddingManager
from deepform.services.data_managers.report_manager import ReportManager
from deepform.services.plotting.plot_manager import PlotManager


class RunContext:
    def __init__(
        self,
        event_bus: EventBus | None = None,
        dataset_manager: DatasetCacheManager | None = None,
        checkpoint_manager: CheckpointManager | None = None,
        embedding_manager: EmbeddingManager | None = None,
        report_manager: ReportManager | None = None,
        command_executor: CommandExecutor | None = None,
        plot_manager: PlotManager | None = None,
        show_progress: bool = False
    ):
        self.event_bus = event_bus or EventBus()
        self.dataset_manager = dataset_manager or DatasetCacheManager()
        self.checkpoint_manager = checkpoint_manager or CheckpointManager()
        self.embedding_manager = embedding_manager or EmbeddingManager()
        self.report_manager = report_manager or ReportManager()
        self.plot_manager = plot_manager or PlotManager()
        self.command_executor = command_executor or CommandExecutor(self.event_bus, self.report_manager)
        self.show_progress = show_progress

    def get_event_bus(self) -> EventBus:
        return self.event_bus

    def get_command_executor(self) -> CommandExecutor:
        return self.command_executor

    def get_dataset_manager(self) -> DatasetCacheManager:
        return self.dataset_manager

    def get_checkpoint_manager(self) -> CheckpointManager:
        return self.checkpoint_manager

    def get_embedding_manager(self) -> EmbeddingManager:
        return self.embedding_manager

    def get_report_manager(self) -> ReportManager:
        return self.report_manager

    def get_plot_manager(self) -> PlotManager:
        return self.plot_manager
