from abc import ABC, abstractmethod
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)


class Command(ABC):
    """
    One pipeline step.

    ``execute`` does the work and returns a result object; ``undo`` removes
    whatever the step wrote. ``inputs``/``outputs`` feed the run manifest.
    """

    name: str = "command"

    def __init__(self):
        self.inputs: List[str] = []
        self.outputs: List[str] = []
        self.config_hash: Optional[str] = None
        self.seed: Optional[int] = None
        self.extra: Dict[str, Any] = {}
        self._created: List[Path] = []

    @abstractmethod
    def execute(self) -> Any:
        pass

    def undo(self) -> None:
        """Delete the files this command created."""
        for path in reversed(self._created):
            try:
                if path.exists():
                    path.unlink()
                    logger.debug(f"Removed partial output {path}")
            except OSError as e:
                logger.warning(f"Could not remove {path}: {e}")
        self._created.clear()
        self.outputs.clear()

    def redo(self) -> Any:
        return self.execute()

    def _add_input(self, path: str | Path) -> None:
        self.inputs.append(str(path))

    def _will_write(self, path: str | Path) -> Path:
        """Register an output; only files that did not exist yet are removed on undo."""
        path = Path(path)
        if not path.exists():
            self._created.append(path)
        self.outputs.append(str(path))
        return path

    def manifest_directory(self) -> Optional[Path]:
        """Directory of the first output; the manifest is written there."""
        return Path(self.outputs[0]).parent if self.outputs else None

    def __repr__(self):
        return f"{self.__class__.__name__}()"
