import json

import pytest

from deepform.commands.base_command import Command
from deepform.commands.command_executor import CommandExecutor
from deepform.errors import DataError
from deepform.models.events.event_bus import EventBus
from deepform.models.events.event_types import PipelineEvents
from deepform.services.data_managers.report_manager import MANIFEST_NAME


class MockCommand(Command):
    """Writes one file, optionally failing afterwards."""

    name = "mock"

    def __init__(self, path, should_fail=False):
        super().__init__()
        self.path = path
        self.should_fail = should_fail
        self.seed = 3
        self.config_hash = "abc"

    def execute(self):
        self._add_input("input.tsv")
        self._will_write(self.path).write_text("partial", encoding="utf-8")
        if self.should_fail:
            raise DataError("bad input")
        self.extra["rows"] = 1
        return "done"


@pytest.fixture
def event_log():
    bus = EventBus()
    events = []
    bus.subscribe("pipeline.*", events.append)
    return bus, events


class TestCommandExecution:

    def test_execute_returns_result_and_records_history(self, tmp_path):
        executor = CommandExecutor()
        command = MockCommand(tmp_path / "out.txt")

        assert executor.execute_command(command) == "done"
        assert executor.history == [command]

    def test_manifest_written_next_to_outputs(self, tmp_path):
        executor = CommandExecutor()
        executor.execute_command(MockCommand(tmp_path / "out.txt"))

        manifest = json.loads((tmp_path / MANIFEST_NAME).read_text(encoding="utf-8"))
        assert manifest["command"] == "mock"
        assert manifest["seed"] == 3
        assert manifest["config_hash"] == "abc"
        assert manifest["inputs"] == ["input.tsv"]
        assert manifest["outputs"] == [str(tmp_path / "out.txt")]
        assert manifest["extra"] == {"rows": 1}
        assert "numpy" in manifest["versions"]
        assert executor.last_manifest.command == "mock"

    def test_manifests_can_be_disabled(self, tmp_path):
        CommandExecutor(write_manifests=False).execute_command(MockCommand(tmp_path / "out.txt"))
        assert not (tmp_path / MANIFEST_NAME).exists()

    def test_failure_undoes_and_reraises(self, tmp_path):
        executor = CommandExecutor()
        with pytest.raises(DataError):
            executor.execute_command(MockCommand(tmp_path / "out.txt", should_fail=True))

        assert not (tmp_path / "out.txt").exists()
        assert not (tmp_path / MANIFEST_NAME).exists()
        assert executor.history == []

    def test_events_published(self, tmp_path, event_log):
        bus, events = event_log
        executor = CommandExecutor(bus)
        executor.execute_command(MockCommand(tmp_path / "ok.txt"))
        with pytest.raises(DataError):
            executor.execute_command(MockCommand(tmp_path / "bad.txt", should_fail=True))

        specific = [e["event_type"] for e in events if e["event_type"] != PipelineEvents.PIPELINE_CHANGED]
        assert specific == [PipelineEvents.COMMAND_STARTED, PipelineEvents.COMMAND_COMPLETED,
                            PipelineEvents.COMMAND_STARTED, PipelineEvents.COMMAND_FAILED]
        failed = [e for e in events if e["event_type"] == PipelineEvents.COMMAND_FAILED][0]
        assert failed["error"] == "bad input"


class TestHistory:

    def test_undo_removes_outputs(self, tmp_path):
        executor = CommandExecutor(write_manifests=False)
        executor.execute_command(MockCommand(tmp_path / "out.txt"))

        assert executor.undo()
        assert not (tmp_path / "out.txt").exists()
        assert not executor.undo()

    def test_history_is_bounded(self, tmp_path):
        executor = CommandExecutor(write_manifests=False)
        for index in range(executor.max_history + 3):
            executor.execute_command(MockCommand(tmp_path / f"out{index}.txt"))
        assert len(executor.history) == executor.max_history

    def test_clear_history(self, tmp_path):
        executor = CommandExecutor(write_manifests=False)
        executor.execute_command(MockCommand(tmp_path / "out.txt"))
        executor.clear_history()
        assert executor.history == []
