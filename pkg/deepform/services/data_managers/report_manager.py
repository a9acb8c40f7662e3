import json
import logging
from pathlib import Path
from typing import Any, Dict

import pandas as pd

from deepform.errors import DataError
from deepform.models.data.manifest import RunManifest

from .binary_io import atomic_write_text

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class ReportManager:
    """
    Service for the text outputs: comma-separated tables, plain reports and
    the run manifest.
    """

    def write_table(self, frame: pd.DataFrame, file_path: str | Path) -> Path:
        path = atomic_write_text(file_path, frame.to_csv(index=False, lineterminator="\n"))
        logger.debug(f"Wrote {len(frame)} rows to {path}")
        return path

    def read_table(self, file_path: str | Path, dtype: Dict[str, Any] | None = None) -> pd.DataFrame:
        """
        Raises:
            DataError: If the file is missing or not a readable table
        """
        try:
            return pd.read_csv(file_path, dtype=dtype)
        except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise DataError(f"Cannot read table {file_path}: {e}") from e

    def write_text(self, text: str, file_path: str | Path) -> Path:
        return atomic_write_text(file_path, text if text.endswith("\n") else text + "\n")

    def write_json(self, data: Dict[str, Any], file_path: str | Path) -> Path:
        return atomic_write_text(file_path, json.dumps(data, indent=2, sort_keys=True) + "\n")

    def save_manifest(self, manifest: RunManifest, directory: str | Path) -> Path:
        """Write manifest.json into the directory holding the outputs."""
        path = self.write_json(manifest.to_dict(), Path(directory) / MANIFEST_NAME)
        logger.info(f"Wrote manifest {path}")
        return path

    def load_manifest(self, file_path: str | Path) -> RunManifest:
        with open(file_path, 'r', encoding='utf-8') as f:
            return RunManifest.from_dict(json.load(f))
