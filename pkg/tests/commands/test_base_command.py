from abc import ABC

import pytest

from deepform.commands.base_command import Command


class WritingCommand(Command):
    """Writes the given text files."""

    name = "write"

    def __init__(self, paths):
        super().__init__()
        self.paths = paths

    def execute(self):
        for path in self.paths:
            self._will_write(path).write_text("x", encoding="utf-8")
        return len(self.paths)


class TestCommand:

    def test_command_is_abstract(self):
        assert issubclass(Command, ABC)
        with pytest.raises(TypeError):
            Command()
        assert Command.execute.__isabstractmethod__

    def test_repr(self):
        assert repr(WritingCommand([])) == "WritingCommand()"

    def test_outputs_and_manifest_directory(self, tmp_path):
        command = WritingCommand([tmp_path / "a.txt", tmp_path / "b.txt"])
        assert command.manifest_directory() is None
        assert command.execute() == 2
        assert command.outputs == [str(tmp_path / "a.txt"), str(tmp_path / "b.txt")]
        assert command.manifest_directory() == tmp_path

    def test_undo_removes_created_files_only(self, tmp_path):
        existing = tmp_path / "existing.txt"
        existing.write_text("keep", encoding="utf-8")
        command = WritingCommand([tmp_path / "new.txt", existing])
        command.execute()

        command.undo()

        assert not (tmp_path / "new.txt").exists()
        assert existing.exists()
        assert command.outputs == []

    def test_redo_executes_again(self, tmp_path):
        command = WritingCommand([tmp_path / "a.txt"])
        command.execute()
        command.undo()
        command.redo()
        assert (tmp_path / "a.txt").exists()
