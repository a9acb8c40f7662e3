"""
User-user similarity graph built from the normalized rating matrix.
"""

from dataclasses import dataclass
import logging
from typing import Optional

import numpy as np
import pandas as pd
import scipy.sparse as sp

from deepform.errors import ShapeMismatchError

logger = logging.getLogger(__name__)

DEFAULT_TOP_K = 50


@dataclass
class UserGraph:
    """
    Similarity graph A (zero diagonal) and its normalized form with self-loops.

    ``degree`` is the degree vector of A + I.
    """
    adjacency: sp.csr_matrix
    normalized: sp.csr_matrix
    degree: np.ndarray

    @property
    def n_users(self) -> int:
        return self.adjacency.shape[0]


def _canonical(matrix: sp.spmatrix) -> sp.csr_matrix:
    """CSR with explicit zeros removed and ascending column indices."""
    csr = sp.csr_matrix(matrix, dtype=np.float64)
    csr.eliminate_zeros()
    csr.sort_indices()
    return csr


class GraphEngine:
    """
    Builds and applies the user graph.
    """

    @staticmethod
    def build_adjacency(x: sp.spmatrix, top_k: Optional[int] = DEFAULT_TOP_K) -> sp.csr_matrix:
        """
        Dot-product user similarity a_uv = max(x_u . x_v, 0), zero diagonal.

        Args:
            x: Row-normalized rating matrix (|U| x |I|)
            top_k: Keep each row's top_k largest entries, then symmetrize by the
                elementwise maximum. None or 0 keeps every entry.

        Returns:
            Symmetric nonnegative CSR matrix
        """
        x = sp.csr_matrix(x, dtype=np.float64)
        similarity = (x @ x.T).tocsr()
        similarity.setdiag(0.0)
        similarity.data = np.maximum(similarity.data, 0.0)
        similarity = _canonical(similarity)

        if top_k and top_k > 0:
            similarity = GraphEngine._keep_top_k(similarity, top_k)
            similarity = _canonical(similarity.maximum(similarity.T))

        logger.debug(f"Adjacency has {similarity.nnz} entries for {similarity.shape[0]} users")
        return similarity

    @staticmethod
    def _keep_top_k(matrix: sp.csr_matrix, top_k: int) -> sp.csr_matrix:
        """Per-row top_k by value; ties prefer the lower column index."""
        indptr, indices, data = matrix.indptr, matrix.indices, matrix.data
        keep = np.zeros(len(data), dtype=bool)
        for row in range(matrix.shape[0]):
            start, end = indptr[row], indptr[row + 1]
            if end - start <= top_k:
                keep[start:end] = True
                continue
            order = np.lexsort((indices[start:end], -data[start:end]))
            keep[start + order[:top_k]] = True
        rows = np.repeat(np.arange(matrix.shape[0]), np.diff(indptr))
        return sp.csr_matrix((data[keep], (rows[keep], indices[keep])), shape=matrix.shape)

    @staticmethod
    def normalize_adjacency(adjacency: sp.spmatrix) -> tuple[sp.csr_matrix, np.ndarray]:
        """
        Symmetric normalization with self-loops: D^-1/2 (A + I) D^-1/2.

        Returns:
            (normalized matrix, degree vector of A + I)
        """
        n = adjacency.shape[0]
        with_loops = sp.csr_matrix(adjacency, dtype=np.float64) + sp.identity(n, format="csr")
        degree = np.asarray(with_loops.sum(axis=1)).ravel()
        inv_sqrt = sp.diags(1.0 / np.sqrt(degree))
        normalized = _canonical(inv_sqrt @ with_loops @ inv_sqrt)
        return normalized, degree

    @staticmethod
    def build_user_graph(x: sp.spmatrix, top_k: Optional[int] = DEFAULT_TOP_K) -> UserGraph:
        """Adjacency plus normalized adjacency in one call."""
        adjacency = GraphEngine.build_adjacency(x, top_k)
        normalized, degree = GraphEngine.normalize_adjacency(adjacency)
        logger.info(
            f"User graph: {adjacency.shape[0]} users, {adjacency.nnz} edges, "
            f"mean degree {np.diff(adjacency.indptr).mean():.2f}"
        )
        return UserGraph(adjacency=adjacency, normalized=normalized, degree=degree)

    @staticmethod
    def spmv(a_norm: sp.csr_matrix, m: np.ndarray) -> np.ndarray:
        """
        Sparse-dense product with a fixed summation order per row.

        Raises:
            ShapeMismatchError: If the inner dimensions differ
        """
        m = np.asarray(m)
        if m.ndim == 1:
            m = m[:, None]
        if a_norm.shape[1] != m.shape[0]:
            raise ShapeMismatchError("spmv dimension mismatch", expected=(a_norm.shape[1],), actual=(m.shape[0],))
        if not a_norm.has_sorted_indices:
            a_norm = a_norm.copy()
            a_norm.sort_indices()
        return a_norm @ m

    @staticmethod
    def nnz_histogram(adjacency: sp.csr_matrix) -> pd.DataFrame:
        """Histogram of per-row neighbour counts."""
        counts = np.diff(sp.csr_matrix(adjacency).indptr)
        values, frequency = np.unique(counts, return_counts=True)
        return pd.DataFrame({"neighbours": values, "users": frequency})
