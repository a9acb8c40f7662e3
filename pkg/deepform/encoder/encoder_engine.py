"""
Forward and backward passes of the propagation-only graph encoder and the
rating autoencoder, plus the reconstruction/alignment loss.

All arithmetic runs in float64 regardless of the parameter storage type.
"""

import logging
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from deepform.errors import UsageError
from deepform.graph.graph_engine import GraphEngine
from deepform.models.state.config import Activation, AlignSampling

from .encoder_types import (
    AlignTerms, AlignWeights, EncoderOutput, EntrySample, ModelParams, Upstream
)

logger = logging.getLogger(__name__)


def _f64(array) -> np.ndarray:
    return np.asarray(array, dtype=np.float64)


def _rowdot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", a, b)


class EncoderEngine:
    """
    Graph propagation, autoencoder and the alignment objective.
    """

    @staticmethod
    def activate(values: np.ndarray, activation: Activation) -> np.ndarray:
        if activation is Activation.TANH:
            return np.tanh(values)
        return values

    @staticmethod
    def activation_slope(output: np.ndarray, activation: Activation) -> np.ndarray:
        """Derivative of the activation expressed through its output."""
        if activation is Activation.TANH:
            return 1.0 - output * output
        return np.ones_like(output)

    @staticmethod
    def propagate(a_norm: sp.csr_matrix, m: np.ndarray, hops: int) -> np.ndarray:
        """
        Mean of the propagated matrices Ã^l M for l = 0..hops.

        Raises:
            UsageError: If hops is negative
        """
        if hops < 0:
            raise UsageError(f"hops must be >= 0, got {hops}")
        current = _f64(m)
        total = current.copy()
        for _ in range(hops):
            current = GraphEngine.spmv(a_norm, current)
            total += current
        return total / (hops + 1)

    @staticmethod
    def gcn_forward(a_norm: sp.csr_matrix, z: np.ndarray, hops: int) -> tuple[np.ndarray, np.ndarray]:
        """
        Forward and backward graph representations.

        Returns:
            (z_gcn, z_hat) where z_hat propagates z_gcn once more
        """
        z_gcn = EncoderEngine.propagate(a_norm, z, hops)
        z_hat = EncoderEngine.propagate(a_norm, z_gcn, hops)
        return z_gcn, z_hat

    @staticmethod
    def encode(x: sp.spmatrix | np.ndarray, params: ModelParams,
               activation: Activation = Activation.TANH) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Encoder half of the autoencoder: (z_ae, hidden activations)."""
        act = EncoderEngine.activate
        x = sp.csr_matrix(x, dtype=np.float64) if sp.issparse(x) else _f64(x)
        h1 = act(x @ _f64(params.W1) + _f64(params.b1), activation)
        h2 = act(h1 @ _f64(params.W2) + _f64(params.b2), activation)
        z_ae = h2 @ _f64(params.W3) + _f64(params.b3)
        return z_ae, {"h1": h1, "h2": h2}

    @staticmethod
    def _ae_pass(
        x: sp.spmatrix | np.ndarray,
        params: ModelParams,
        activation: Activation,
        entries: Optional[EntrySample]
    ) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
        act = EncoderEngine.activate
        z_ae, hidden = EncoderEngine.encode(x, params, activation)
        g1 = act(z_ae @ _f64(params.V1) + _f64(params.c1), activation)
        g2 = act(g1 @ _f64(params.V2) + _f64(params.c2), activation)
        v3, c3 = _f64(params.V3), _f64(params.c3)
        if entries is None:
            x_hat = g2 @ v3 + c3
        else:
            x_hat = _rowdot(g2[entries.x_rows], v3.T[entries.x_cols]) + c3[entries.x_cols]
        hidden.update({"g1": g1, "g2": g2})
        return z_ae, x_hat, hidden

    @staticmethod
    def ae_forward(
        x: sp.spmatrix | np.ndarray,
        params: ModelParams,
        activation: Activation = Activation.TANH,
        entries: Optional[EntrySample] = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """
        Autoencoder code and reconstruction.

        Args:
            x: Row-normalized ratings (|U| x |I|)
            params: Model parameters
            activation: Hidden-layer nonlinearity
            entries: Rating positions to reconstruct; None gives the dense X_hat

        Returns:
            (z_ae, x_hat)
        """
        z_ae, x_hat, _ = EncoderEngine._ae_pass(x, params, activation, entries)
        return z_ae, x_hat

    @staticmethod
    def encoder_forward(
        a_norm: sp.csr_matrix,
        x: sp.spmatrix,
        params: ModelParams,
        hops: int,
        activation: Activation = Activation.TANH,
        entries: Optional[EntrySample] = None
    ) -> EncoderOutput:
        """Both encoder paths in one pass; z_final = z_gcn + z_ae."""
        z_gcn, z_hat = EncoderEngine.gcn_forward(a_norm, params.Z, hops)
        z_ae, x_hat, hidden = EncoderEngine._ae_pass(x, params, activation, entries)
        return EncoderOutput(z_gcn=z_gcn, z_hat=z_hat, z_ae=z_ae, x_hat=x_hat, hidden=hidden)

    @staticmethod
    def final_embedding(a_norm: sp.csr_matrix, x: sp.spmatrix, params: ModelParams, hops: int,
                        activation: Activation = Activation.TANH) -> np.ndarray:
        """Z_final = Z_gcn + Z_ae without evaluating the decoder."""
        z_gcn = EncoderEngine.propagate(a_norm, params.Z, hops)
        z_ae, _ = EncoderEngine.encode(x, params, activation)
        return z_gcn + z_ae

    @staticmethod
    def _sample_zero_positions(
        nonzero_linear: np.ndarray, n_rows: int, n_cols: int, count: int, rng: np.random.Generator
    ) -> np.ndarray:
        """Uniform draws (with replacement) of linear positions outside the nonzero set."""
        total = n_rows * n_cols
        n_zero = total - len(nonzero_linear)
        if count <= 0 or n_zero <= 0:
            return np.empty(0, dtype=np.int64)
        if n_zero <= count:
            return np.setdiff1d(np.arange(total, dtype=np.int64), nonzero_linear, assume_unique=True)

        chosen: list[np.ndarray] = []
        remaining = count
        while remaining > 0:
            draws = rng.integers(0, total, size=2 * remaining + 16, dtype=np.int64)
            draws = draws[~np.isin(draws, nonzero_linear, assume_unique=False)]
            chosen.append(draws[:remaining])
            remaining -= len(chosen[-1])
        return np.concatenate(chosen)

    @staticmethod
    def _matrix_entries(
        matrix: sp.spmatrix, mode: AlignSampling, rng: Optional[np.random.Generator]
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coo = sp.csr_matrix(matrix, dtype=np.float64)
        coo.sort_indices()
        coo = coo.tocoo()
        n_rows, n_cols = coo.shape
        if mode is AlignSampling.EXACT:
            dense = coo.toarray()
            rows, cols = np.divmod(np.arange(n_rows * n_cols, dtype=np.int64), n_cols)
            return rows, cols, dense.ravel()

        if rng is None:
            raise UsageError("sampled entry mode needs a random generator")
        nonzero_linear = np.sort(coo.row.astype(np.int64) * n_cols + coo.col)
        zeros = EncoderEngine._sample_zero_positions(nonzero_linear, n_rows, n_cols, coo.nnz, rng)
        zero_rows, zero_cols = np.divmod(zeros, n_cols)
        rows = np.concatenate([coo.row.astype(np.int64), zero_rows])
        cols = np.concatenate([coo.col.astype(np.int64), zero_cols])
        targets = np.concatenate([coo.data, np.zeros(len(zeros))])
        return rows, cols, targets

    @staticmethod
    def sample_entries(
        adjacency: sp.spmatrix,
        x: sp.spmatrix,
        rng: Optional[np.random.Generator] = None,
        mode: AlignSampling = AlignSampling.SAMPLED
    ) -> EntrySample:
        """
        Positions for the graph and rating reconstruction terms.

        In sampled mode every observed nonzero is kept and an equal number of
        zero positions is drawn uniformly; exact mode enumerates every entry.
        """
        a_rows, a_cols, a_targets = EncoderEngine._matrix_entries(adjacency, mode, rng)
        x_rows, x_cols, x_targets = EncoderEngine._matrix_entries(x, mode, rng)
        return EntrySample(a_rows=a_rows, a_cols=a_cols, a_targets=a_targets,
                           x_rows=x_rows, x_cols=x_cols, x_targets=x_targets)

    @staticmethod
    def align_loss(z: np.ndarray, output: EncoderOutput, entries: EntrySample,
                   weights: AlignWeights = AlignWeights()) -> AlignTerms:
        """
        Weighted residuals:

            w_gcn_z ||Z_hat - Z||^2 + w_gcn_a sum_E (sigmoid(g_u . g_v) - a_uv)^2
            + w_ae sum_F (X_hat - X)^2 + w_align ||Z_gcn - Z_ae||^2

        with g = Z_gcn and E, F the sampled graph and rating positions.
        """
        z = _f64(z)
        logits = _rowdot(output.z_gcn[entries.a_rows], output.z_gcn[entries.a_cols])
        graph_residual = expit(logits) - entries.a_targets
        rating_residual = output.x_hat - entries.x_targets
        return AlignTerms(
            gcn_z=weights.gcn_z * float(np.sum((output.z_hat - z) ** 2)),
            gcn_a=weights.gcn_a * float(np.sum(graph_residual ** 2)),
            ae=weights.ae * float(np.sum(rating_residual ** 2)),
            align=weights.align * float(np.sum((output.z_gcn - output.z_ae) ** 2)),
        )

    @staticmethod
    def align_upstream(z: np.ndarray, output: EncoderOutput, entries: EntrySample, n_items: int,
                       weights: AlignWeights = AlignWeights()) -> Upstream:
        """Gradients of align_loss with respect to the encoder outputs."""
        z = _f64(z)
        n_users = z.shape[0]
        g = output.z_gcn

        d_z_hat = 2.0 * weights.gcn_z * (output.z_hat - z)

        sig = expit(_rowdot(g[entries.a_rows], g[entries.a_cols]))
        coef = 2.0 * weights.gcn_a * (sig - entries.a_targets) * sig * (1.0 - sig)
        pair = sp.csr_matrix((coef, (entries.a_rows, entries.a_cols)), shape=(n_users, n_users))
        residual_align = g - output.z_ae
        d_gcn = pair @ g + pair.T @ g + 2.0 * weights.align * residual_align

        d_x_hat = EncoderEngine.rating_gradient(
            entries, 2.0 * weights.ae * (output.x_hat - entries.x_targets), (n_users, n_items)
        )
        return Upstream(z=-d_z_hat, z_gcn=d_gcn, z_hat=d_z_hat,
                        z_ae=-2.0 * weights.align * residual_align, x_hat=d_x_hat)

    @staticmethod
    def rating_gradient(entries: EntrySample, values: np.ndarray, shape: tuple[int, int]) -> sp.csr_matrix:
        """Scatter per-entry gradients into a sparse |U| x |I| matrix (duplicates summed)."""
        return sp.csr_matrix((values, (entries.x_rows, entries.x_cols)), shape=shape)

    @staticmethod
    def backward(
        params: ModelParams,
        output: EncoderOutput,
        upstream: Upstream,
        a_norm: sp.csr_matrix,
        x: sp.spmatrix,
        hops: int,
        activation: Activation = Activation.TANH
    ) -> ModelParams:
        """
        Chain gradients on the encoder outputs into every parameter tensor.

        Returns:
            ModelParams holding float64 gradients
        """
        slope = EncoderEngine.activation_slope
        grads = params.zeros_like()

        d_gcn = np.zeros_like(output.z_gcn) if upstream.z_gcn is None else _f64(upstream.z_gcn).copy()
        if upstream.z_hat is not None:
            # Ã is symmetric, so propagation is its own adjoint
            d_gcn += EncoderEngine.propagate(a_norm, upstream.z_hat, hops)
        grads.Z = EncoderEngine.propagate(a_norm, d_gcn, hops)
        if upstream.z is not None:
            grads.Z += _f64(upstream.z)

        hidden = output.hidden
        d_ae = np.zeros_like(output.z_ae) if upstream.z_ae is None else _f64(upstream.z_ae).copy()

        if upstream.x_hat is not None:
            d_x = upstream.x_hat if sp.issparse(upstream.x_hat) else _f64(upstream.x_hat)
            g2, g1 = hidden["g2"], hidden["g1"]
            grads.V3 = np.asarray(d_x.T @ g2).T
            grads.c3 = np.asarray(d_x.sum(axis=0)).ravel()
            d_pre = np.asarray(d_x @ _f64(params.V3).T) * slope(g2, activation)
            grads.V2 = g1.T @ d_pre
            grads.c2 = d_pre.sum(axis=0)
            d_pre = (d_pre @ _f64(params.V2).T) * slope(g1, activation)
            grads.V1 = output.z_ae.T @ d_pre
            grads.c1 = d_pre.sum(axis=0)
            d_ae += d_pre @ _f64(params.V1).T

        h2, h1 = hidden["h2"], hidden["h1"]
        grads.W3 = h2.T @ d_ae
        grads.b3 = d_ae.sum(axis=0)
        d_pre = (d_ae @ _f64(params.W3).T) * slope(h2, activation)
        grads.W2 = h1.T @ d_pre
        grads.b2 = d_pre.sum(axis=0)
        d_pre = (d_pre @ _f64(params.W2).T) * slope(h1, activation)
        x = sp.csr_matrix(x, dtype=np.float64) if sp.issparse(x) else _f64(x)
        grads.W1 = np.asarray(x.T @ d_pre)
        grads.b1 = d_pre.sum(axis=0)
        return grads

    @staticmethod
    def align_grad(
        params: ModelParams,
        output: EncoderOutput,
        entries: EntrySample,
        a_norm: sp.csr_matrix,
        x: sp.spmatrix,
        hops: int,
        activation: Activation = Activation.TANH,
        weights: AlignWeights = AlignWeights()
    ) -> ModelParams:
        """Analytic gradient of align_loss with respect to every parameter."""
        upstream = EncoderEngine.align_upstream(params.Z, output, entries, params.n_items, weights)
        return EncoderEngine.backward(params, output, upstream, a_norm, x, hops, activation)
