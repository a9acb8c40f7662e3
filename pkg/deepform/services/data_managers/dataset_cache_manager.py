import json
import logging
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from deepform.errors import DataError
from deepform.models.data.dataset import Dataset

from .binary_io import BinaryReader, BinaryWriter, atomic_write_bytes, read_payload

logger = logging.getLogger(__name__)

MAGIC = b"DFRM"
VERSION = 1


def _write_csr(writer: BinaryWriter, matrix: sp.csr_matrix) -> None:
    writer.array(matrix.indptr, "u8")
    writer.array(matrix.indices, "u4")
    writer.array(matrix.data, "f4")


def _read_csr(reader: BinaryReader, shape: tuple[int, int], nnz: int) -> sp.csr_matrix:
    indptr = reader.array("u8", shape[0] + 1).astype(np.int64)
    indices = reader.array("u4", nnz).astype(np.int32)
    data = reader.array("f4", nnz)
    if indptr[-1] != nnz or np.any(np.diff(indptr) < 0):
        raise DataError(f"{reader.source} has inconsistent row offsets")
    if nnz and indices.max() >= shape[1]:
        raise DataError(f"{reader.source} has a column index outside [0, {shape[1]})")
    return sp.csr_matrix((data, indices, indptr), shape=shape)


class DatasetCacheManager:
    """
    Service responsible for the binary dataset cache.

    Layout: magic "DFRM", u16 version, u32 |U|, u32 |I|, u64 train nnz, train
    CSR (u64 offsets, u32 columns, f32 values), user then item ids as
    u32-length-prefixed UTF-8, u64 test nnz and the test CSR in the same
    encoding, then a u32-length-prefixed JSON trailer with the metadata.
    """

    def __init__(self):
        self.supported_extensions = ['.dfrm', '.bin']

    def save_dataset(self, dataset: Dataset, file_path: str | Path) -> Path:
        """Write the dataset atomically; returns the path written."""
        x_train = sp.csr_matrix(dataset.x_train, dtype=np.float32)
        x_test = sp.csr_matrix(dataset.x_test, dtype=np.float32)
        x_train.sort_indices()
        x_test.sort_indices()

        writer = BinaryWriter().raw(MAGIC).scalar("H", VERSION)
        writer.scalar("I", dataset.n_users).scalar("I", dataset.n_items).scalar("Q", x_train.nnz)
        _write_csr(writer, x_train)
        for identifier in dataset.user_ids:
            writer.text(str(identifier))
        for identifier in dataset.item_ids:
            writer.text(str(identifier))
        writer.scalar("Q", x_test.nnz)
        _write_csr(writer, x_test)
        trailer = {"normalized": dataset.normalized, "metadata": dataset.metadata}
        writer.text(json.dumps(trailer, sort_keys=True, default=str))

        path = atomic_write_bytes(file_path, writer.to_bytes())
        logger.info(f"Saved dataset cache {path} ({dataset})")
        return path

    def load_dataset(self, file_path: str | Path) -> Dataset:
        """
        Read a dataset cache.

        Raises:
            DataError: If the file is missing, truncated or not a DFRM cache
        """
        reader = BinaryReader(read_payload(file_path), source=str(file_path))
        reader.magic(MAGIC)
        version = reader.scalar("H")
        if version != VERSION:
            raise DataError(f"{file_path}: unsupported cache version {version}")
        n_users, n_items, nnz = reader.scalar("I"), reader.scalar("I"), reader.scalar("Q")
        x_train = _read_csr(reader, (n_users, n_items), nnz)
        user_ids = np.array([reader.text() for _ in range(n_users)], dtype=object)
        item_ids = np.array([reader.text() for _ in range(n_items)], dtype=object)
        x_test = _read_csr(reader, (n_users, n_items), reader.scalar("Q"))
        trailer = json.loads(reader.text()) if reader.remaining else {}

        dataset = Dataset(user_ids=user_ids, item_ids=item_ids, x_train=x_train, x_test=x_test,
                          normalized=bool(trailer.get("normalized", False)),
                          metadata=dict(trailer.get("metadata", {})))
        logger.info(f"Loaded dataset cache {file_path} ({dataset})")
        return dataset

    def validate_dataset_file(self, file_path: str | Path) -> bool:
        """True if the file starts with the cache magic and a known version."""
        try:
            with open(file_path, "rb") as handle:
                head = handle.read(6)
            return head[:4] == MAGIC and int.from_bytes(head[4:6], "little") == VERSION
        except OSError:
            return False
