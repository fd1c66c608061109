"""Built-in saliency generators: occlusion, gradients and Shapley value sampling."""

import numpy as np

from ..dataio import SaliencyTensor
from ..errors import GradientUnsupported, MaskUnsupported
from .adapters import TokenInstance


def _require_masking(adapter):
    if not callable(getattr(adapter, "mask_tokens", None)):
        raise MaskUnsupported(f"{type(adapter).__name__} does not support token masking")


def coalition_distributions(adapter, instance, keep):
    """Class distributions with only the ``keep`` tokens of each row unmasked."""
    keep = np.asarray(keep, dtype=bool)
    batch = getattr(adapter, "predict_batch", None)
    if callable(batch):
        return batch(instance, keep)
    out = []
    for row in keep:
        masked = adapter.mask_tokens(instance, np.flatnonzero(~row))
        out.append(adapter.predict_distribution(masked))
    return np.asarray(out)


def saliency_occlusion(adapter, instance, cls):
    """Drop in ``p(cls)`` when each token in turn is replaced by the zero baseline."""
    _require_masking(adapter)
    n = len(instance.tokens)
    if n == 0:
        return np.zeros(0)
    keep = np.vstack([np.ones(n, dtype=bool), ~np.eye(n, dtype=bool)])
    probs = coalition_distributions(adapter, instance, keep)[:, cls]
    return probs[0] - probs[1:]


def saliency_gradient(adapter, instance, cls, aggregation="mean", inputx=False, target="logit"):
    """Gradient saliency per token, optionally multiplied by the input.

    Each token owns a block of input features; the block gradient is reduced
    to one score by its mean (``"mean"``) or Euclidean norm (``"l2"``).
    """
    grads = getattr(adapter, "token_gradients", None)
    if not callable(grads):
        raise GradientUnsupported(f"{type(adapter).__name__} exposes no analytic gradient")
    if aggregation not in ("mean", "l2"):
        raise ValueError(f"aggregation must be 'mean' or 'l2', got {aggregation!r}")
    scores = []
    for value, grad in grads(instance, cls, target):
        g = grad * value if inputx else grad
        scores.append(float(np.mean(g)) if aggregation == "mean" else float(np.linalg.norm(g)))
    return np.asarray(scores)


def saliency_shapley_sampling(adapter, instance, cls, num_samples=25, seed=13):
    """Permutation-sampling estimate of each token's Shapley value for ``p(cls)``.

    For every sampled ordering the tokens are unmasked one at a time, starting
    from the fully masked input, and each token is credited with the change
    in ``p(cls)`` it causes. Scores are the mean credit over orderings.
    """
    _require_masking(adapter)
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    n = len(instance.tokens)
    if n == 0:
        return np.zeros(0)
    rng = np.random.default_rng(seed)
    perms = np.array([rng.permutation(n) for _ in range(num_samples)])
    # row k of each block keeps the first k tokens of the permutation
    keep = np.zeros((num_samples, n + 1, n), dtype=bool)
    for s in range(num_samples):
        for k in range(1, n + 1):
            keep[s, k] = keep[s, k - 1]
            keep[s, k, perms[s, k - 1]] = True
    probs = coalition_distributions(adapter, instance, keep.reshape(-1, n))[:, cls]
    probs = probs.reshape(num_samples, n + 1)
    gains = np.diff(probs, axis=1)
    totals = np.zeros(n)
    np.add.at(totals, perms.ravel(), gains.ravel())
    return totals / num_samples


def random_saliency(dataset, classes, seed=13):
    """Uniform random scores in [0, 1) for every instance and class."""
    rng = np.random.default_rng(seed)
    scores = {}
    for inst in dataset:
        for c in classes:
            scores[(inst.id, c)] = rng.random(len(inst.tokens))
    return SaliencyTensor(scores)


GENERATORS = ("occlusion", "gradient", "inputx_gradient", "shapley", "random")


def generate_saliency(adapter, dataset, method="occlusion", classes=None, seed=13, **kwargs):
    """Saliency for every instance of a token dataset at every requested class."""
    if classes is None:
        classes = range(adapter.num_classes)
    classes = list(classes)
    if method == "random":
        return random_saliency(dataset, classes, seed)
    scores = {}
    for pos, inst in enumerate(dataset):
        ti = TokenInstance.from_instance(inst)
        for c in classes:
            if method == "occlusion":
                s = saliency_occlusion(adapter, ti, c)
            elif method == "gradient":
                s = saliency_gradient(adapter, ti, c, **kwargs)
            elif method == "inputx_gradient":
                s = saliency_gradient(adapter, ti, c, inputx=True, **kwargs)
            elif method == "shapley":
                s = saliency_shapley_sampling(adapter, ti, c, seed=seed + pos, **kwargs)
            else:
                raise ValueError(f"unknown saliency method {method!r}")
            scores[(inst.id, c)] = s
    return SaliencyTensor(scores)
