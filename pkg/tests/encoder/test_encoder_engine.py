import numpy as np
import pytest
import scipy.sparse as sp

from deepform.encoder.encoder_engine import EncoderEngine
from deepform.encoder.encoder_types import AlignWeights, ModelParams
from deepform.errors import UsageError
from deepform.graph.graph_engine import GraphEngine
from deepform.models.state.config import Activation, AlignSampling


@pytest.fixture
def instance(rng):
    dense = rng.random((10, 20)) * (rng.random((10, 20)) < 0.2)
    dense[np.arange(10), rng.integers(0, 20, 10)] = 1.0
    dense /= np.linalg.norm(dense, axis=1, keepdims=True)
    x = sp.csr_matrix(dense)
    graph = GraphEngine.build_user_graph(x, top_k=None)
    params = ModelParams.initialize(10, 20, 3, 5, 4, rng).astype(np.float64)
    return x, graph, params


def align_total(params, x, graph, entries, hops, activation, weights=AlignWeights()):
    output = EncoderEngine.encoder_forward(graph.normalized, x, params, hops, activation, entries)
    return EncoderEngine.align_loss(params.Z, output, entries, weights).total


class TestPropagation:

    def test_zero_hops_is_identity(self, instance):
        _, graph, params = instance
        np.testing.assert_allclose(EncoderEngine.propagate(graph.normalized, params.Z, 0), params.Z)

    def test_matches_dense_power_mean(self, instance):
        _, graph, params = instance
        a = graph.normalized.toarray()
        expected = (params.Z + a @ params.Z + a @ a @ params.Z) / 3.0
        np.testing.assert_allclose(EncoderEngine.propagate(graph.normalized, params.Z, 2), expected, atol=1e-12)

    def test_identity_graph_keeps_embedding(self, rng):
        z = rng.standard_normal((5, 2))
        np.testing.assert_allclose(EncoderEngine.propagate(sp.identity(5, format="csr"), z, 3), z)

    def test_path_graph_by_hand(self):
        a = sp.csr_matrix(np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]))
        z = np.array([[1.0], [0.0], [0.0]])
        # A z = (0, 1, 0), A^2 z = (1, 0, 1)
        np.testing.assert_allclose(EncoderEngine.propagate(a, z, 2), [[2 / 3], [1 / 3], [1 / 3]])

    def test_propagation_is_linear(self, instance, rng):
        _, graph, params = instance
        other = rng.standard_normal(params.Z.shape)
        combined = EncoderEngine.gcn_forward(graph.normalized, 2.0 * params.Z - 3.0 * other, 2)[0]
        expected = (2.0 * EncoderEngine.gcn_forward(graph.normalized, params.Z, 2)[0]
                    - 3.0 * EncoderEngine.gcn_forward(graph.normalized, other, 2)[0])
        np.testing.assert_allclose(combined, expected, atol=1e-12)

    def test_negative_hops(self, instance):
        _, graph, params = instance
        with pytest.raises(UsageError):
            EncoderEngine.propagate(graph.normalized, params.Z, -1)

    def test_backward_representation_propagates_again(self, instance):
        _, graph, params = instance
        z_gcn, z_hat = EncoderEngine.gcn_forward(graph.normalized, params.Z, 2)
        np.testing.assert_allclose(z_hat, EncoderEngine.propagate(graph.normalized, z_gcn, 2))


class TestAutoencoder:

    def test_linear_encoder_is_affine_chain(self, instance):
        x, _, params = instance
        z_ae, _ = EncoderEngine.encode(x, params, Activation.LINEAR)
        expected = ((x.toarray() @ params.W1 + params.b1) @ params.W2 + params.b2) @ params.W3 + params.b3
        np.testing.assert_allclose(z_ae, expected, atol=1e-12)

    def test_sampled_reconstruction_matches_dense(self, instance, rng):
        x, graph, params = instance
        entries = EncoderEngine.sample_entries(graph.adjacency, x, rng)
        _, dense = EncoderEngine.ae_forward(x, params)
        _, sampled = EncoderEngine.ae_forward(x, params, entries=entries)
        np.testing.assert_allclose(sampled, dense[entries.x_rows, entries.x_cols], atol=1e-12)

    def test_final_embedding_is_sum_of_paths(self, instance):
        x, graph, params = instance
        output = EncoderEngine.encoder_forward(graph.normalized, x, params, 2)
        np.testing.assert_allclose(EncoderEngine.final_embedding(graph.normalized, x, params, 2),
                                   output.z_final, atol=1e-12)


class TestSampleEntries:

    def test_sampled_mode_keeps_nonzeros_and_balances_zeros(self, instance, rng):
        x, graph, _ = instance
        entries = EncoderEngine.sample_entries(graph.adjacency, x, rng)
        assert entries.n_ratings == 2 * x.nnz
        dense = x.toarray()
        observed = entries.x_targets != 0
        assert observed.sum() == x.nnz
        np.testing.assert_allclose(entries.x_targets[observed], dense[entries.x_rows[observed],
                                                                      entries.x_cols[observed]])
        assert np.all(dense[entries.x_rows[~observed], entries.x_cols[~observed]] == 0)

    def test_exact_mode_enumerates_every_position(self, instance):
        x, graph, _ = instance
        entries = EncoderEngine.sample_entries(graph.adjacency, x, mode=AlignSampling.EXACT)
        assert entries.n_ratings == 10 * 20
        assert entries.n_graph == 10 * 10

    def test_sampled_mode_needs_generator(self, instance):
        x, graph, _ = instance
        with pytest.raises(UsageError):
            EncoderEngine.sample_entries(graph.adjacency, x, None, AlignSampling.SAMPLED)

    def test_sampling_is_seeded(self, instance):
        x, graph, _ = instance
        first = EncoderEngine.sample_entries(graph.adjacency, x, np.random.default_rng(5))
        second = EncoderEngine.sample_entries(graph.adjacency, x, np.random.default_rng(5))
        np.testing.assert_array_equal(first.x_rows, second.x_rows)
        np.testing.assert_array_equal(first.a_cols, second.a_cols)


class TestAlignLoss:

    def test_exact_loss_matches_dense_oracle(self, instance):
        x, graph, params = instance
        entries = EncoderEngine.sample_entries(graph.adjacency, x, mode=AlignSampling.EXACT)
        output = EncoderEngine.encoder_forward(graph.normalized, x, params, 2, Activation.TANH, entries)
        terms = EncoderEngine.align_loss(params.Z, output, entries)

        dense_output = EncoderEngine.encoder_forward(graph.normalized, x, params, 2)
        g = dense_output.z_gcn
        a_hat = 1.0 / (1.0 + np.exp(-(g @ g.T)))
        assert terms.gcn_z == pytest.approx(np.sum((dense_output.z_hat - params.Z) ** 2))
        assert terms.gcn_a == pytest.approx(np.sum((a_hat - graph.adjacency.toarray()) ** 2))
        assert terms.ae == pytest.approx(np.sum((dense_output.x_hat - x.toarray()) ** 2))
        assert terms.align == pytest.approx(np.sum((g - dense_output.z_ae) ** 2))

    def test_weights_scale_terms(self, instance, rng):
        x, graph, params = instance
        entries = EncoderEngine.sample_entries(graph.adjacency, x, rng)
        output = EncoderEngine.encoder_forward(graph.normalized, x, params, 2, Activation.TANH, entries)
        base = EncoderEngine.align_loss(params.Z, output, entries)
        scaled = EncoderEngine.align_loss(params.Z, output, entries, AlignWeights(2.0, 0.0, 1.0, 0.5))
        assert scaled.gcn_z == pytest.approx(2.0 * base.gcn_z)
        assert scaled.gcn_a == 0.0
        assert scaled.align == pytest.approx(0.5 * base.align)

    @pytest.mark.parametrize("activation", [Activation.TANH, Activation.LINEAR])
    def test_gradient_matches_central_differences(self, instance, rng, activation):
        x, graph, params = instance
        entries = EncoderEngine.sample_entries(graph.adjacency, x, rng)
        output = EncoderEngine.encoder_forward(graph.normalized, x, params, 2, activation, entries)
        grads = EncoderEngine.align_grad(params, output, entries, graph.normalized, x, 2, activation)

        for name in ("Z", "W1", "b2", "V3", "c1"):
            tensor = getattr(params, name)
            for index in rng.choice(tensor.size, size=min(4, tensor.size), replace=False):
                flat = tensor.reshape(-1)
                original = flat[index]
                step = 1e-6 * max(abs(original), 1.0)
                flat[index] = original + step
                upper = align_total(params, x, graph, entries, 2, activation)
                flat[index] = original - step
                lower = align_total(params, x, graph, entries, 2, activation)
                flat[index] = original
                numeric = (upper - lower) / (2 * step)
                analytic = getattr(grads, name).reshape(-1)[index]
                assert abs(analytic - numeric) <= 1e-4 * max(abs(analytic), abs(numeric), 1e-3)
