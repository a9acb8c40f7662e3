import logging
from pathlib import Path

import numpy as np

from deepform.errors import DataError

from .binary_io import BinaryReader, BinaryWriter, atomic_write_bytes, read_payload

logger = logging.getLogger(__name__)

MAGIC = b"DFEM"
VERSION = 1


class EmbeddingManager:
    """
    Service for the final user embedding file: magic "DFEM", u16 version,
    u32 |U|, u32 d, then |U| x d row-major little-endian f32.
    """

    def save_embeddings(self, embeddings: np.ndarray, file_path: str | Path) -> Path:
        embeddings = np.asarray(embeddings)
        if embeddings.ndim != 2:
            raise DataError(f"embeddings must be 2-D, got shape {embeddings.shape}")
        n_users, dim = embeddings.shape
        writer = BinaryWriter().raw(MAGIC).scalar("H", VERSION).scalar("I", n_users).scalar("I", dim)
        writer.array(embeddings, "f4")
        path = atomic_write_bytes(file_path, writer.to_bytes())
        logger.info(f"Saved {n_users}x{dim} embeddings to {path}")
        return path

    def load_embeddings(self, file_path: str | Path) -> np.ndarray:
        """
        Raises:
            DataError: If the file is missing, truncated or not an embedding file
        """
        reader = BinaryReader(read_payload(file_path), source=str(file_path))
        reader.magic(MAGIC)
        version = reader.scalar("H")
        if version != VERSION:
            raise DataError(f"{file_path}: unsupported embedding version {version}")
        n_users, dim = reader.scalar("I"), reader.scalar("I")
        embeddings = reader.array("f4", n_users * dim).reshape(n_users, dim)
        if reader.remaining:
            raise DataError(f"{file_path} has {reader.remaining} trailing bytes")
        return embeddings
