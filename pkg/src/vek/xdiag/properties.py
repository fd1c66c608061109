"""Diagnostic properties of saliency explanations.

* human agreement: mean average precision against gold rationales;
* confidence indication: how well saliency distances predict model confidence;
* faithfulness: area under the performance-drop curve when masking the most
  salient tokens first;
* rationale consistency: rank correlation between activation and saliency
  distances across models on the same instance;
* dataset consistency: the same correlation across instance pairs of one model.
"""

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ..errors import (
    MaskUnsupported,
    MissingClass,
    MissingSaliency,
    NoPositives,
    TooFewInstances,
)
from ..numerics import accuracy, average_precision, macro_f1, minmax_scale, spearman_rho
from .adapters import TokenInstance

DEFAULT_THRESHOLDS = tuple(range(0, 101, 10))


@dataclass
class DiagnosticsReport:
    """Collected property values; any field may be absent."""

    map_score: float = None
    confidence_mae: float = None
    confidence_max_error: float = None
    auctp: dict = field(default_factory=dict)
    rationale_rho: dict = field(default_factory=dict)
    dataset_rho: float = None
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items() if v not in (None, {})}


def _label_lookup(labels):
    if isinstance(labels, dict):
        return labels
    return {inst.id: inst.label for inst in labels if inst.label is not None}


# --------------------------------------------------------------------------
# Human agreement
# --------------------------------------------------------------------------


def human_agreement_map(saliency, rationales, gold_labels):
    """Mean average precision of saliency at the gold class against rationale masks.

    Instances whose mask has no positive token are skipped and counted.
    """
    gold = _label_lookup(gold_labels)
    per_instance = {}
    skipped = []
    for instance_id in sorted(rationales):
        cls = gold.get(instance_id)
        scores = saliency.get(instance_id, cls) if cls is not None else None
        if scores is None:
            raise MissingSaliency(instance_id, cls)
        try:
            per_instance[instance_id] = average_precision(rationales[instance_id], scores)
        except NoPositives:
            skipped.append(instance_id)
    values = list(per_instance.values())
    return {
        "map": float(np.mean(values)) if values else None,
        "n_scored": len(values),
        "n_skipped": len(skipped),
        "skipped_ids": skipped,
        "per_instance": per_instance,
    }


# --------------------------------------------------------------------------
# Confidence indication
# --------------------------------------------------------------------------


def saliency_distance_features(scores_by_class, predicted_class, num_classes):
    """Saliency distance between the predicted class and the other classes.

    Two classes: the token-summed difference ``sum_j (w_pred - w_other)``.
    More classes: the token-summed difference to each other class, reduced
    to ``(max, min, mean)``.
    """
    for c in range(num_classes):
        if c not in scores_by_class:
            raise MissingClass(c)
    own = np.asarray(scores_by_class[predicted_class], dtype=np.float64)
    diffs = np.array(
        [np.sum(own - np.asarray(scores_by_class[c])) for c in range(num_classes) if c != predicted_class]
    )
    if num_classes == 2:
        return diffs
    return np.array([diffs.max(), diffs.min(), diffs.mean()])


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class SigmoidRegressor:
    """``sigmoid(a . z + b)`` on z-scored features, fitted by squared-error descent."""

    coef: np.ndarray
    intercept: float
    mean: np.ndarray
    scale: np.ndarray

    def predict(self, features):
        z = (np.asarray(features, dtype=np.float64) - self.mean) / self.scale
        return _sigmoid(z @ self.coef + self.intercept)


def fit_sigmoid_regressor(features, targets, epochs=5000, learning_rate=4.0, tol=1e-14):
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    z = (x - mean) / scale
    ybar = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
    a = np.zeros(z.shape[1])
    b = math.log(ybar / (1 - ybar))

    def loss_grad(a, b):
        p = _sigmoid(z @ a + b)
        r = p - y
        loss = float(np.mean(r**2))
        d = 2.0 * r * p * (1 - p) / len(y)
        return loss, z.T @ d, float(d.sum())

    loss, ga, gb = loss_grad(a, b)
    lr = learning_rate
    for _ in range(epochs):
        na, nb = a - lr * ga, b - lr * gb
        nloss, nga, ngb = loss_grad(na, nb)
        if nloss > loss:
            lr /= 2.0
            if lr < 1e-10:
                break
            continue
        delta = loss - nloss
        a, b, loss, ga, gb = na, nb, nloss, nga, ngb
        if delta < tol:
            break
    return SigmoidRegressor(coef=a, intercept=b, mean=mean, scale=scale)


def confidence_decile(values):
    return np.minimum((np.asarray(values) * 10).astype(int), 9)


def upsample_by_decile(indices, targets, rng):
    """Resample so every non-empty confidence decile matches the largest one."""
    indices = np.asarray(indices)
    deciles = confidence_decile(np.asarray(targets)[indices])
    counts = np.bincount(deciles, minlength=10)
    top = counts.max()
    extra = []
    for dec in range(10):
        members = indices[deciles == dec]
        if 0 < len(members) < top:
            extra.append(rng.choice(members, size=top - len(members), replace=True))
    return np.concatenate([indices] + extra) if extra else indices


def confidence_indication(saliency, confidences, num_classes, folds=5, upsample=False, seed=13):
    """Cross-validated MAE of predicting confidence from saliency distances."""
    ids = sorted(confidences)
    if len(ids) < max(10, folds):
        raise TooFewInstances(f"confidence indication needs at least 10 instances, got {len(ids)}")
    feats = []
    for instance_id in ids:
        by_class = {}
        for c in range(num_classes):
            s = saliency.get(instance_id, c)
            if s is None:
                raise MissingSaliency(instance_id, c)
            by_class[c] = s
        feats.append(saliency_distance_features(by_class, confidences[instance_id].predicted_class, num_classes))
    x = np.asarray(feats)
    y = np.array([confidences[i].confidence for i in ids])

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    splits = np.array_split(order, folds)
    fold_mae, errors = [], []
    for k, test_idx in enumerate(splits):
        train_idx = np.concatenate([s for j, s in enumerate(splits) if j != k])
        if upsample:
            train_idx = upsample_by_decile(train_idx, y, rng)
        reg = fit_sigmoid_regressor(x[train_idx], y[train_idx])
        err = np.abs(reg.predict(x[test_idx]) - y[test_idx])
        fold_mae.append(float(err.mean()))
        errors.append(err)
    return {
        "mae": float(np.mean(fold_mae)),
        "max_error": float(np.concatenate(errors).max()),
        "fold_mae": fold_mae,
        "n_instances": len(ids),
    }


# --------------------------------------------------------------------------
# Faithfulness
# --------------------------------------------------------------------------


def mask_count(threshold, n_tokens):
    return int(math.floor(threshold * n_tokens / 100.0 + 1e-9))


def _performance(metric, gold, pred):
    if metric == "macro_f1":
        return macro_f1(gold, pred)
    if metric == "accuracy":
        return accuracy(gold, pred)
    raise ValueError(f"metric must be 'macro_f1' or 'accuracy', got {metric!r}")


def trapezoid_area(xs, ys):
    order = np.argsort(xs, kind="stable")
    x = np.asarray(xs, dtype=np.float64)[order]
    y = np.asarray(ys, dtype=np.float64)[order]
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def faithfulness_auctp(
    adapter,
    dataset,
    saliency,
    metric="macro_f1",
    thresholds=DEFAULT_THRESHOLDS,
    saliency_class="predicted",
):
    """Area under the (masked fraction, performance drop) curve.

    For each threshold ``i`` the ``floor(i/100 * n_tokens)`` most salient
    tokens of every instance are masked (ties: lower position first) and the
    task metric is recomputed against gold labels. The curve plots
    ``P(unmasked) - P(masked at i)`` over ``i / 100``.
    """
    if not callable(getattr(adapter, "mask_tokens", None)):
        raise MaskUnsupported(f"{type(adapter).__name__} does not support token masking")
    if saliency_class not in ("predicted", "gold"):
        raise ValueError("saliency_class must be 'predicted' or 'gold'")
    instances = [TokenInstance.from_instance(inst) for inst in dataset]
    gold = np.array([inst.label for inst in dataset])
    base_pred = [int(np.argmax(adapter.predict_distribution(ti))) for ti in instances]
    orders = []
    for ti, inst, pred in zip(instances, dataset, base_pred):
        cls = pred if saliency_class == "predicted" else inst.label
        scores = saliency.get(inst.id, cls)
        if scores is None:
            raise MissingSaliency(inst.id, cls)
        orders.append(np.argsort(-np.asarray(scores), kind="stable"))

    def perf_at(threshold):
        if threshold == 0:
            pred = base_pred
        else:
            pred = []
            for ti, order in zip(instances, orders):
                top = order[: mask_count(threshold, len(ti.tokens))]
                dist = adapter.predict_distribution(adapter.mask_tokens(ti, top))
                pred.append(int(np.argmax(dist)))
        return _performance(metric, gold, np.asarray(pred))

    base = _performance(metric, gold, np.asarray(base_pred))
    perf = [base if t == 0 else perf_at(t) for t in thresholds]
    drops = [0.0 if t == 0 else base - p for t, p in zip(thresholds, perf)]
    xs = [t / 100.0 for t in thresholds]
    return {
        "auctp": trapezoid_area(xs, drops),
        "thresholds": list(thresholds),
        "performance": perf,
        "drops": drops,
        "metric": metric,
    }


# --------------------------------------------------------------------------
# Consistency
# --------------------------------------------------------------------------


def _pad_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) == len(b):
        return a, b
    n = max(len(a), len(b))
    return np.pad(a, (0, n - len(a))), np.pad(b, (0, n - len(b)))


def distance(a, b):
    """Euclidean norm of the absolute difference (shorter vector zero-padded)."""
    a, b = _pad_pair(a, b)
    return float(np.linalg.norm(np.abs(a - b)))


def consistency_rho(activation_distances, saliency_distances):
    """Spearman correlation of min-max scaled distance sequences."""
    return spearman_rho(minmax_scale(activation_distances), minmax_scale(saliency_distances))


def _named(adapters):
    out = []
    for k, item in enumerate(adapters):
        if isinstance(item, tuple):
            out.append(item)
        else:
            out.append((getattr(item, "name", f"model{k}"), item))
    return out


def rationale_consistency(adapters, dataset, saliencies, gold_labels=None):
    """Correlate activation and saliency distances over model pairs and instances.

    ``adapters`` is a list of adapters (or ``(name, adapter)`` pairs) and
    ``saliencies`` the matching list of saliency tensors. Every unordered
    model pair contributes one point per instance.
    """
    named = _named(adapters)
    if len(named) < 2:
        raise TooFewInstances("rationale consistency needs at least two models")
    if len(saliencies) != len(named):
        raise ValueError("one saliency tensor per adapter is required")
    gold = _label_lookup(gold_labels if gold_labels is not None else dataset)
    ids = sorted(inst.id for inst in dataset)
    token_inst = {inst.id: TokenInstance.from_instance(inst) for inst in dataset}
    acts = {
        (m, i): np.asarray(adapter.activation_summary(token_inst[i]))
        for m, (_, adapter) in enumerate(named)
        for i in ids
    }
    sal = {m: saliencies[m] for m in range(len(named))}
    return _rationale_points([name for name, _ in named], ids, gold, acts, sal)


def rationale_consistency_from_tables(activations, saliencies, dataset, gold_labels=None):
    """Table-driven variant: ``activations[(model, id)]``, ``saliencies[model]``."""
    models = sorted(saliencies)
    if len(models) < 2:
        raise TooFewInstances("rationale consistency needs at least two models")
    gold = _label_lookup(gold_labels if gold_labels is not None else dataset)
    ids = sorted(inst.id for inst in dataset)
    acts = {}
    for m, name in enumerate(models):
        for i in ids:
            if (name, i) not in activations:
                raise MissingSaliency(i, f"activation of model {name}")
            acts[(m, i)] = activations[(name, i)]
    sal = {m: saliencies[name] for m, name in enumerate(models)}
    return _rationale_points(models, ids, gold, acts, sal)


def _rationale_points(names, ids, gold, acts, sal):
    d_act, d_sal, pairs = [], [], []
    for a, b in combinations(range(len(names)), 2):
        pairs.append((names[a], names[b]))
        for i in ids:
            cls = gold.get(i)
            sa = sal[a].get(i, cls)
            sb = sal[b].get(i, cls)
            if sa is None:
                raise MissingSaliency(i, cls)
            if sb is None:
                raise MissingSaliency(i, cls)
            d_act.append(distance(acts[(a, i)], acts[(b, i)]))
            d_sal.append(distance(sa, sb))
    return {
        "rho": consistency_rho(d_act, d_sal),
        "n_points": len(d_act),
        "pairs": pairs,
        "activation_distances": d_act,
        "saliency_distances": d_sal,
    }


def select_pairs(dataset, n_overlap=2000, n_random=2000, seed=13):
    """Instance pairs ranked by shared unique tokens, plus a random remainder.

    Returns ``(overlap_pairs, random_pairs)`` as lists of id tuples.
    """
    items = sorted(((inst.id, frozenset(inst.tokens or ())) for inst in dataset), key=lambda t: t[0])
    scored = []
    for (ia, ta), (ib, tb) in combinations(items, 2):
        scored.append((-len(ta & tb), ia, ib))
    scored.sort()
    top = [(ia, ib) for _, ia, ib in scored[:n_overlap]]
    rest = [(ia, ib) for _, ia, ib in scored[n_overlap:]]
    if not rest or n_random <= 0:
        return top, []
    rng = np.random.default_rng(seed)
    take = min(n_random, len(rest))
    chosen = np.sort(rng.choice(len(rest), size=take, replace=False))
    return top, [rest[k] for k in chosen]


def dataset_consistency(adapter, dataset, saliency, n_overlap=2000, n_random=2000, seed=13, activations=None):
    """Correlate activation and saliency distances over instance pairs of one model.

    For a pair ``(i, j)`` both saliency vectors are taken at instance ``i``'s
    gold class (predicted class when unlabelled). ``activations`` may supply
    precomputed ``{id: vector}`` summaries instead of querying ``adapter``.
    """
    if len(dataset) < 2:
        raise TooFewInstances("dataset consistency needs at least two instances")
    by_id = {inst.id: inst for inst in dataset}
    token_inst = {i: TokenInstance.from_instance(inst) for i, inst in by_id.items()}
    if activations is None:
        activations = {i: np.asarray(adapter.activation_summary(ti)) for i, ti in token_inst.items()}

    def class_of(i):
        label = by_id[i].label
        if label is not None:
            return label
        return int(np.argmax(adapter.predict_distribution(token_inst[i])))

    top, rand = select_pairs(dataset, n_overlap, n_random, seed)
    d_act, d_sal = [], []
    for ia, ib in top + rand:
        cls = class_of(ia)
        sa = saliency.get(ia, cls)
        sb = saliency.get(ib, cls)
        if sa is None:
            raise MissingSaliency(ia, cls)
        if sb is None:
            raise MissingSaliency(ib, cls)
        d_act.append(distance(activations[ia], activations[ib]))
        d_sal.append(distance(sa, sb))
    return {
        "rho": consistency_rho(d_act, d_sal),
        "n_pairs": len(d_act),
        "n_overlap_pairs": len(top),
        "n_random_pairs": len(rand),
        "activation_distances": d_act,
        "saliency_distances": d_sal,
    }
