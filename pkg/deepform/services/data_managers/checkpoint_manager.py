import json
import logging
from pathlib import Path

import numpy as np

from deepform.errors import DataError, ShapeMismatchError
from deepform.models.data.checkpoint import Checkpoint
from deepform.models.data.dataset import Dataset

from .binary_io import BinaryReader, BinaryWriter, atomic_write_bytes, read_payload

logger = logging.getLogger(__name__)

MAGIC = b"DFCK"
VERSION = 1


class CheckpointManager:
    """
    Service responsible for model checkpoints.

    Layout: magic "DFCK", u16 version, u32 tensor count, a shapes table of
    (u16-length name, u8 ndim, u64 dims), every tensor as little-endian f32 in
    declaration order, then a u32-length-prefixed JSON trailer.
    """

    def __init__(self):
        self.supported_extensions = ['.dfck', '.ckpt']

    def save_checkpoint(self, checkpoint: Checkpoint, file_path: str | Path) -> Path:
        """Write the checkpoint atomically."""
        tensors = checkpoint.tensors()
        writer = BinaryWriter().raw(MAGIC).scalar("H", VERSION).scalar("I", len(tensors))
        for name, value in tensors.items():
            writer.text(name, length_fmt="H").scalar("B", value.ndim)
            for dim in value.shape:
                writer.scalar("Q", dim)
        for value in tensors.values():
            writer.array(value, "f4")
        writer.text(json.dumps(checkpoint.meta, sort_keys=True))

        path = atomic_write_bytes(file_path, writer.to_bytes())
        logger.info(f"Saved checkpoint {path} (epoch {checkpoint.epoch})")
        return path

    def load_checkpoint(self, file_path: str | Path) -> Checkpoint:
        """
        Read a checkpoint.

        Raises:
            DataError: If the file is missing, truncated or malformed
        """
        reader = BinaryReader(read_payload(file_path), source=str(file_path))
        reader.magic(MAGIC)
        version = reader.scalar("H")
        if version != VERSION:
            raise DataError(f"{file_path}: unsupported checkpoint version {version}")
        count = reader.scalar("I")
        shapes: list[tuple[str, tuple[int, ...]]] = []
        for _ in range(count):
            name = reader.text(length_fmt="H")
            ndim = reader.scalar("B")
            shapes.append((name, tuple(reader.scalar("Q") for _ in range(ndim))))
        tensors = {}
        for name, shape in shapes:
            tensors[name] = reader.array("f4", int(np.prod(shape, dtype=np.int64))).reshape(shape)
        meta = json.loads(reader.text()) if reader.remaining else {}
        try:
            checkpoint = Checkpoint.from_tensors(tensors, meta)
        except KeyError as e:
            raise DataError(f"{file_path}: {e}") from e
        logger.info(f"Loaded checkpoint {file_path} (epoch {checkpoint.epoch})")
        return checkpoint

    @staticmethod
    def check_compatible(checkpoint: Checkpoint, dataset: Dataset) -> None:
        """
        Raises:
            ShapeMismatchError: If the checkpoint was trained for other dimensions
        """
        expected = (dataset.n_users, dataset.n_items)
        actual = (checkpoint.params.n_users, checkpoint.params.n_items)
        if expected != actual:
            raise ShapeMismatchError("checkpoint does not match dataset (users, items)",
                                     expected=expected, actual=actual)

    def validate_checkpoint_file(self, file_path: str | Path) -> bool:
        try:
            with open(file_path, "rb") as handle:
                return handle.read(4) == MAGIC
        except OSError:
            return False
