import numpy as np
import pytest

import oracles
from vek.dataio import FeatureDataset, Instance
from vek.errors import GradientUnsupported, MaskUnsupported
from vek.numerics import LinearProbModel, softmax
from vek.xdiag import (
    ConstantAdapter,
    LinearBagAdapter,
    ModelAdapter,
    TokenInstance,
    generate_saliency,
    random_init_adapter,
    saliency_gradient,
    saliency_occlusion,
    saliency_shapley_sampling,
)
from vek.xdiag.adapters import adapter_from_json, adapter_to_json, train_bag_adapter

VOCAB = tuple(f"w{i}" for i in range(6))


@pytest.fixture
def adapter():
    return random_init_adapter(VOCAB, 3, seed=0, scale=1.5)


def coalition_value(adapter, instance, cls):
    def value(present):
        keep = np.zeros(len(instance.tokens), dtype=bool)
        keep[list(present)] = True
        masked = adapter.mask_tokens(instance, np.flatnonzero(~keep))
        return adapter.predict_distribution(masked)[cls]

    return value


class NoMask:
    def predict_distribution(self, instance):
        return np.array([1.0])

    def activation_summary(self, instance):
        return np.zeros(1)


class TestAdapter:
    def test_protocol(self, adapter):
        assert isinstance(adapter, ModelAdapter)
        assert not isinstance(NoMask(), ModelAdapter)

    def test_distribution_sums_to_one(self, adapter):
        inst = TokenInstance("a", ("w0", "w1", "w1", "oov"))
        assert adapter.predict_distribution(inst).sum() == pytest.approx(1.0, abs=1e-9)

    def test_masking_idempotent(self, adapter):
        inst = TokenInstance("a", ("w0", "w1", "w2"))
        once = adapter.mask_tokens(inst, [1])
        assert adapter.mask_tokens(once, [1]) == once
        np.testing.assert_array_equal(adapter.counts(once), [1, 0, 1])

    def test_batch_matches_single(self, adapter):
        inst = TokenInstance("a", ("w0", "w3", "w5"))
        keep = np.array([[True, False, True], [False, False, False]])
        batch = adapter.predict_batch(inst, keep)
        np.testing.assert_allclose(batch[0], adapter.predict_distribution(adapter.mask_tokens(inst, [1])))
        np.testing.assert_allclose(batch[1], softmax(adapter.model.bias))

    def test_json_round_trip(self, adapter):
        again = adapter_from_json(adapter_to_json(adapter))
        np.testing.assert_array_equal(again.model.weights, adapter.model.weights)
        assert again.vocab == adapter.vocab

    def test_train_bag_adapter(self):
        data = FeatureDataset(
            tuple(Instance(f"d{i}", tokens=("good",) * (i % 3 + 1) if i % 2 else ("bad",), label=i % 2) for i in range(20))
        )
        trained = train_bag_adapter(data)
        for inst in data:
            assert np.argmax(trained.predict_distribution(TokenInstance.from_instance(inst))) == inst.label


class TestOcclusion:
    def test_constant_adapter_zero(self):
        inst = TokenInstance("a", ("x", "y"))
        np.testing.assert_array_equal(saliency_occlusion(ConstantAdapter([0.3, 0.7]), inst, 1), [0, 0])

    def test_single_token_analytic(self, adapter):
        inst = TokenInstance("a", ("w2",))
        full = softmax(adapter.model.weights[:, 2] + adapter.model.bias)[0]
        empty = softmax(adapter.model.bias)[0]
        np.testing.assert_allclose(saliency_occlusion(adapter, inst, 0), [full - empty], atol=1e-15)

    def test_shape(self, adapter):
        assert saliency_occlusion(adapter, TokenInstance("a", ("w0",) * 7), 2).shape == (7,)

    def test_requires_masking(self):
        with pytest.raises(MaskUnsupported):
            saliency_occlusion(NoMask(), TokenInstance("a", ("x",)), 0)


class TestGradient:
    def test_logit_gradient_is_class_weight(self, adapter):
        inst = TokenInstance("a", ("w1", "w4"))
        scores = saliency_gradient(adapter, inst, 2)
        np.testing.assert_allclose(scores, adapter.model.weights[2, [1, 4]])

    @pytest.mark.parametrize("target", ["logit", "prob"])
    def test_finite_differences(self, adapter, target):
        inst = TokenInstance("a", ("w0", "w3", "w3", "w5"))
        base = adapter.features(inst)

        def f(x):
            z = adapter.model.weights @ x + adapter.model.bias
            return z[1] if target == "logit" else softmax(z)[1]

        numeric = oracles.central_difference(f, base)
        analytic = adapter.input_gradient(inst, 1, target)
        rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8)
        assert rel.max() <= 1e-4

    def test_inputx_zero_count(self, adapter):
        inst = adapter.mask_tokens(TokenInstance("a", ("w0", "w1")), [0])
        scores = saliency_gradient(adapter, inst, 0, inputx=True)
        assert scores[0] == 0.0
        assert scores[1] == pytest.approx(adapter.model.weights[0, 1])

    def test_l2_of_embedding_blocks(self):
        emb = np.random.default_rng(1).normal(size=(len(VOCAB), 3))
        model = LinearProbModel(np.random.default_rng(2).normal(size=(2, 3)), np.zeros(2))
        dense = LinearBagAdapter(model, VOCAB, embeddings=emb)
        inst = TokenInstance("a", ("w0", "w2"))
        np.testing.assert_allclose(saliency_gradient(dense, inst, 1, aggregation="l2"), [np.linalg.norm(model.weights[1])] * 2)
        np.testing.assert_allclose(
            saliency_gradient(dense, inst, 1, inputx=True), [np.mean(model.weights[1] * emb[0]), np.mean(model.weights[1] * emb[2])]
        )

    def test_unsupported(self):
        with pytest.raises(GradientUnsupported):
            saliency_gradient(ConstantAdapter([1.0]), TokenInstance("a", ("x",)), 0)


class TestShapley:
    @pytest.mark.parametrize("length", [1, 3, 6, 8])
    def test_matches_exact_enumeration(self, adapter, length):
        rng = np.random.default_rng(length)
        inst = TokenInstance("a", tuple(rng.choice(VOCAB, size=length)))
        exact = oracles.exact_shapley(coalition_value(adapter, inst, 0), length)
        sampled = saliency_shapley_sampling(adapter, inst, 0, num_samples=2000, seed=3)
        assert np.abs(sampled - exact).max() <= 0.02

    def test_efficiency(self, adapter):
        inst = TokenInstance("a", ("w0", "w1", "w2", "w3", "w4"))
        scores = saliency_shapley_sampling(adapter, inst, 1, num_samples=50, seed=0)
        value = coalition_value(adapter, inst, 1)
        # every permutation telescopes, so efficiency holds exactly
        assert scores.sum() == pytest.approx(value(range(5)) - value(()), abs=1e-12)

    def test_additive_model_matches_occlusion(self):
        # a constant-sum "model" whose output is linear in the kept tokens
        class Additive:
            contrib = np.array([0.1, -0.05, 0.2, 0.0])

            def mask_tokens(self, instance, indices):
                return TokenInstance(instance.id, instance.tokens, instance.masked | frozenset(indices))

            def predict_distribution(self, instance):
                keep = np.ones(len(instance.tokens))
                keep[list(instance.masked)] = 0
                p = 0.4 + keep @ self.contrib
                return np.array([1 - p, p])

            def activation_summary(self, instance):
                return np.zeros(1)

        inst = TokenInstance("a", ("a", "b", "c", "d"))
        shap = saliency_shapley_sampling(Additive(), inst, 1, num_samples=30)
        np.testing.assert_allclose(shap, Additive.contrib, atol=1e-12)
        np.testing.assert_allclose(saliency_occlusion(Additive(), inst, 1), Additive.contrib, atol=1e-12)

    def test_zero_count_token(self, adapter):
        inst = adapter.mask_tokens(TokenInstance("a", ("w0", "w1", "w2")), [1])
        assert saliency_shapley_sampling(adapter, inst, 0, num_samples=40)[1] == 0.0

    def test_deterministic(self, adapter):
        inst = TokenInstance("a", ("w0", "w1", "w2"))
        np.testing.assert_array_equal(
            saliency_shapley_sampling(adapter, inst, 0, seed=5), saliency_shapley_sampling(adapter, inst, 0, seed=5)
        )

    def test_bad_samples(self, adapter):
        with pytest.raises(ValueError):
            saliency_shapley_sampling(adapter, TokenInstance("a", ("w0",)), 0, num_samples=0)


def test_generate_saliency_covers_all_classes(adapter):
    data = FeatureDataset(tuple(Instance(f"d{i}", tokens=VOCAB[: i + 1]) for i in range(4)))
    for method in ("occlusion", "gradient", "inputx_gradient", "shapley", "random"):
        tensor = generate_saliency(adapter, data, method, num_samples=5) if method == "shapley" else generate_saliency(adapter, data, method)
        assert len(tensor) == 4 * 3
        assert tensor.get("d2", 1).shape == (3,)
    with pytest.raises(ValueError):
        generate_saliency(adapter, data, "lime")
