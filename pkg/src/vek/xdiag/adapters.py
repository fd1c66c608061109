"""Model adapters queried by the saliency generators and diagnostics.

An adapter is any object with

* ``predict_distribution(instance) -> ndarray`` (sums to 1),
* ``activation_summary(instance) -> ndarray`` (fixed length per adapter),
* ``mask_tokens(instance, indices) -> instance`` (idempotent).

:class:`LinearBagAdapter` is the built-in realisation: a bag-of-tokens
:class:`~vek.numerics.LinearProbModel` where masking a token removes its
occurrence from the count vector.
"""

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from ..errors import DimensionError
from ..numerics import LinearProbModel, TrainConfig, softmax, train_linear_prob


@dataclass(frozen=True)
class TokenInstance:
    id: str
    tokens: tuple
    masked: frozenset = frozenset()

    def __len__(self):
        return len(self.tokens)

    @classmethod
    def from_instance(cls, inst):
        if inst.tokens is None:
            raise DimensionError(f"instance {inst.id!r} has no tokens")
        return cls(inst.id, tuple(inst.tokens))


@runtime_checkable
class ModelAdapter(Protocol):
    def predict_distribution(self, instance): ...

    def activation_summary(self, instance): ...

    def mask_tokens(self, instance, indices): ...


class LinearBagAdapter:
    """Bag-of-tokens linear softmax model.

    The input vector is ``x = sum_j c_j * E[token_j]`` over unmasked
    positions ``j`` with ``c_j = 1``. ``E`` defaults to the identity, giving
    plain token counts; pass ``embeddings`` (vocab x m) for dense inputs.
    Out-of-vocabulary tokens contribute nothing.
    """

    def __init__(self, model, vocab, embeddings=None, name="linear"):
        self.model = model
        self.vocab = tuple(vocab)
        self.index = {tok: i for i, tok in enumerate(self.vocab)}
        self.embeddings = None if embeddings is None else np.asarray(embeddings, dtype=np.float64)
        width = len(self.vocab) if self.embeddings is None else self.embeddings.shape[1]
        if self.embeddings is not None and self.embeddings.shape[0] != len(self.vocab):
            raise DimensionError("one embedding row per vocabulary entry is required")
        if model.num_features != width:
            raise DimensionError(f"model expects {model.num_features} features, inputs have {width}")
        self.name = name

    @property
    def num_classes(self):
        return self.model.num_classes

    @property
    def input_width(self):
        return self.model.num_features

    def token_rows(self, instance):
        """Per-position input rows ``E[token_j]`` (zeros when out of vocabulary)."""
        rows = np.zeros((len(instance.tokens), self.input_width))
        for j, tok in enumerate(instance.tokens):
            v = self.index.get(tok)
            if v is None:
                continue
            if self.embeddings is None:
                rows[j, v] = 1.0
            else:
                rows[j] = self.embeddings[v]
        return rows

    def counts(self, instance):
        c = np.ones(len(instance.tokens))
        if instance.masked:
            c[list(instance.masked)] = 0.0
        return c

    def features(self, instance):
        return self.counts(instance) @ self.token_rows(instance)

    def logits(self, instance):
        return self.model.weights @ self.features(instance) + self.model.bias

    def predict_distribution(self, instance):
        return softmax(self.logits(instance))

    def predict_batch(self, instance, keep):
        """Distributions for many coalitions of one instance.

        ``keep`` is a boolean (rows x tokens) matrix; already-masked tokens
        stay masked regardless.
        """
        keep = np.asarray(keep, dtype=np.float64) * self.counts(instance)
        x = keep @ self.token_rows(instance)
        return softmax(x @ self.model.weights.T + self.model.bias)

    def activation_summary(self, instance):
        return self.logits(instance)

    def mask_tokens(self, instance, indices):
        indices = frozenset(int(i) for i in indices)
        if any(not 0 <= i < len(instance.tokens) for i in indices):
            raise IndexError(f"mask index out of range for {len(instance.tokens)} tokens")
        return TokenInstance(instance.id, instance.tokens, instance.masked | indices)

    def input_gradient(self, instance, cls, target="logit"):
        """Gradient of the class logit or probability w.r.t. the input vector."""
        w = self.model.weights
        if target == "logit":
            return w[cls].copy()
        if target == "prob":
            p = self.predict_distribution(instance)
            return p[cls] * (w[cls] - p @ w)
        raise ValueError(f"target must be 'logit' or 'prob', got {target!r}")

    def token_gradients(self, instance, cls, target="logit"):
        """``(block_value, block_gradient)`` per token position.

        With count inputs a block is the scalar count of that occurrence;
        with embeddings it is the occurrence's embedding contribution.
        """
        grad = self.input_gradient(instance, cls, target)
        counts = self.counts(instance)
        rows = self.token_rows(instance)
        out = []
        for j, tok in enumerate(instance.tokens):
            v = self.index.get(tok)
            if self.embeddings is None:
                g = np.array([0.0 if v is None else grad[v]])
                value = np.array([counts[j] if v is not None else 0.0])
            else:
                g = grad.copy() if v is not None else np.zeros_like(grad)
                value = counts[j] * rows[j]
            out.append((value, g))
        return out


def build_vocab(dataset):
    return tuple(sorted({tok for inst in dataset for tok in (inst.tokens or ())}))


def count_matrix(dataset, vocab):
    index = {tok: i for i, tok in enumerate(vocab)}
    x = np.zeros((len(dataset), len(vocab)))
    for r, inst in enumerate(dataset):
        for tok in inst.tokens or ():
            if tok in index:
                x[r, index[tok]] += 1.0
    return x


def train_bag_adapter(dataset, config=TrainConfig(), vocab=None, name="trained"):
    """Fit a :class:`LinearBagAdapter` on a labelled token dataset."""
    vocab = build_vocab(dataset) if vocab is None else tuple(vocab)
    x = count_matrix(dataset, vocab)
    y = dataset.labels()
    if np.any(y < 0):
        raise DimensionError("every training instance needs a label")
    num_classes = dataset.num_classes or max(2, int(y.max()) + 1)
    model = train_linear_prob(x, y, config=config, num_classes=num_classes)
    return LinearBagAdapter(model, vocab, name=name)


def random_init_adapter(vocab, num_classes, seed, scale=1.0, name=None):
    """Adapter with Gaussian random weights, standing in for an untrained model."""
    rng = np.random.default_rng(seed)
    model = LinearProbModel(
        weights=rng.normal(0.0, scale, size=(num_classes, len(vocab))),
        bias=np.zeros(num_classes),
    )
    return LinearBagAdapter(model, vocab, name=name or f"random-{seed}")


class ConstantAdapter:
    """Adapter that ignores its input; useful as a degenerate reference."""

    def __init__(self, distribution, activation=None):
        self.distribution = np.asarray(distribution, dtype=np.float64)
        self.activation = np.zeros(1) if activation is None else np.asarray(activation, dtype=np.float64)

    def predict_distribution(self, instance):
        return self.distribution.copy()

    def activation_summary(self, instance):
        return self.activation.copy()

    def mask_tokens(self, instance, indices):
        return TokenInstance(instance.id, instance.tokens, instance.masked | frozenset(indices))


def adapter_to_json(adapter):
    """Plain-JSON form of a count-input :class:`LinearBagAdapter`."""
    if adapter.embeddings is not None:
        raise ValueError("only count-input adapters can be serialized")
    return {
        "name": adapter.name,
        "vocab": list(adapter.vocab),
        "weights": adapter.model.weights.tolist(),
        "bias": adapter.model.bias.tolist(),
    }


def adapter_from_json(obj):
    try:
        vocab = obj["vocab"]
        weights = np.asarray(obj["weights"], dtype=np.float64)
        bias = np.asarray(obj["bias"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise DimensionError(f"malformed model document ({exc})") from exc
    if weights.ndim != 2 or bias.shape != (weights.shape[0],):
        raise DimensionError("model weights must be classes x vocab with one bias per class")
    model = LinearProbModel(weights=weights, bias=bias)
    return LinearBagAdapter(model, vocab, name=obj.get("name", "linear"))
