"""Deterministic numerical primitives shared by the algorithm modules.

Matrices are plain ``float64`` numpy arrays. Every routine that involves
randomness takes an explicit integer seed; every tie resolves to the lowest
index.
"""

from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (
    DegenerateData,
    DimensionError,
    EmptyReference,
    NoPositives,
    NonFiniteLoss,
    SingleClass,
    ZeroVariance,
)

_PROB_CLIP = 1e-12
_LR_GROWTH = 1.1
_LR_CAP = 64.0


def as_matrix(data, name="data"):
    """Return ``data`` as a finite 2-D float array."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains non-finite values")
    return arr


# --------------------------------------------------------------------------
# PCA
# --------------------------------------------------------------------------


def symmetric_eig(a, tol=1e-15, max_sweeps=100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` in the order the rotations leave
    them (unsorted); column ``i`` of the second array pairs with value ``i``.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise DimensionError(f"expected a square matrix, got {a.shape}")
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if n < 2 or scale == 0.0:
        return np.diag(a).copy(), v

    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0

                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v


def _fix_signs(components):
    out = components.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


@dataclass(frozen=True)
class Subspace:
    """Orthonormal principal-component basis of a dataset.

    Attributes
    ----------
    components : ndarray, shape (p, d)
        Basis vectors as columns.
    eigenvalues : ndarray, shape (d,)
        Covariance eigenvalues, non-increasing.
    mean : ndarray, shape (p,)
        Mean subtracted before projection.
    """

    components: np.ndarray
    eigenvalues: np.ndarray
    mean: np.ndarray

    @property
    def d(self):
        return self.components.shape[1]

    @property
    def p(self):
        return self.components.shape[0]

    def project(self, data):
        data = np.asarray(data, dtype=np.float64)
        if data.shape[-1] != self.p:
            raise DimensionError(
                f"data has {data.shape[-1]} features, subspace expects {self.p}"
            )
        return (data - self.mean) @ self.components


def pca_fit(data, d):
    """Top-``d`` principal components of ``data`` (rows are samples).

    Uses the ``n - 1`` divisor covariance. Each component is sign-normalised
    so its largest-magnitude entry is non-negative.
    """
    x = as_matrix(data)
    n, p = x.shape
    if n < 2:
        raise DimensionError(f"need at least 2 rows for PCA, got {n}")
    if not 1 <= d <= min(n - 1, p):
        raise DimensionError(f"d={d} outside [1, {min(n - 1, p)}] for {n}x{p} data")

    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    cov = (cov + cov.T) / 2.0
    values, vectors = symmetric_eig(cov)
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]

    top = values[0]
    rank = 0 if top <= 0 else int(np.sum(values > top * max(n, p) * 1e-12))
    if rank < d:
        raise DegenerateData(
            f"covariance has rank {rank}, cannot extract {d} components", rank=rank
        )
    components = _fix_signs(vectors[:, :d])
    eigenvalues = np.maximum(values[:d], 0.0)
    return Subspace(components=components, eigenvalues=eigenvalues, mean=mean)


# --------------------------------------------------------------------------
# Ranking statistics
# --------------------------------------------------------------------------


def average_ranks(values):
    """1-based ranks with ties assigned their average rank."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=np.float64)
    sorted_x = x[order]
    start = 0
    n = len(x)
    while start < n:
        stop = start + 1
        while stop < n and sorted_x[stop] == sorted_x[start]:
            stop += 1
        ranks[order[start:stop]] = (start + stop + 1) / 2.0
        start = stop
    return ranks


def spearman_rho(a, b):
    """Spearman's rank correlation with average-rank tie handling."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"sequences must be 1-D of equal length: {a.shape} vs {b.shape}")
    if len(a) < 3:
        raise DimensionError(f"need at least 3 points, got {len(a)}")
    ra = average_ranks(a)
    rb = average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    sa = np.sqrt(np.dot(ra, ra))
    sb = np.sqrt(np.dot(rb, rb))
    if sa == 0.0 or sb == 0.0:
        raise ZeroVariance("spearman_rho is undefined for a constant sequence")
    return float(np.clip(np.dot(ra, rb) / (sa * sb), -1.0, 1.0))


def average_precision(gold, scores):
    """Average precision of ``scores`` as a ranking of the binary ``gold``.

    Ranking is by descending score; equal scores keep ascending index order.
    """
    gold = np.asarray(gold)
    scores = np.asarray(scores, dtype=np.float64)
    if gold.shape != scores.shape or gold.ndim != 1:
        raise DimensionError(f"gold {gold.shape} and scores {scores.shape} differ")
    gold = gold.astype(bool)
    n_pos = int(gold.sum())
    if n_pos == 0:
        raise NoPositives("gold has no positive entries")
    order = np.argsort(-scores, kind="stable")
    hits = gold[order]
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(precision[hits].sum() / n_pos)


def minmax_scale(values):
    """Scale to [0, 1]; a constant input maps to all zeros."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise DimensionError("minmax_scale needs at least one value")
    lo = v.min()
    span = v.max() - lo
    if span == 0:
        return np.zeros_like(v)
    return (v - lo) / span


# --------------------------------------------------------------------------
# Multinomial logistic reference model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearProbModel:
    """Multinomial logistic model ``softmax(weights @ x + bias)``."""

    weights: np.ndarray
    bias: np.ndarray
    loss_history: tuple = field(default=(), compare=False)

    @property
    def num_classes(self):
        return self.weights.shape[0]

    @property
    def num_features(self):
        return self.weights.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.0
    epochs: int = 2000
    l2: float = 1e-4
    seed: int = 13
    tol: float = 1e-8
    standardize: bool = True


def softmax(logits):
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def predict_proba(model, x):
    """Class distribution(s) for one feature vector or a matrix of rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.num_features:
        raise DimensionError(
            f"input has {x.shape[-1]} features, model expects {model.num_features}"
        )
    return softmax(x @ model.weights.T + model.bias)


def _target_matrix(labels, sample_weights, num_classes):
    targets = np.zeros((len(labels), num_classes))
    targets[np.arange(len(labels)), labels] = sample_weights
    return targets


def _soft_cross_entropy(weights, bias, data, targets, row_weight, total, l2):
    logits = data @ weights.T + bias
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    norm = e.sum(axis=1, keepdims=True)
    probs = e / norm
    log_probs = np.maximum(logits - np.log(norm), np.log(_PROB_CLIP))
    loss = float(-np.sum(targets * log_probs) / total) + 0.5 * l2 * float(np.sum(weights**2))
    resid = (probs * row_weight[:, None] - targets) / total
    return loss, resid.T @ data + l2 * weights, resid.sum(axis=0)


def weighted_cross_entropy(weights, bias, data, labels, sample_weights, l2):
    """Loss and analytic gradients of the weighted softmax cross-entropy.

    Loss is ``sum_i w_i * -log p_i[y_i] / sum_i w_i + l2/2 * ||weights||^2``
    with probabilities floored at 1e-12. Returns
    ``(loss, grad_weights, grad_bias)``.
    """
    w = np.asarray(sample_weights, dtype=np.float64)
    targets = _target_matrix(np.asarray(labels), w, weights.shape[0])
    return _soft_cross_entropy(weights, bias, data, targets, w, w.sum(), l2)


def train_linear_prob(data, labels, sample_weights=None, config=TrainConfig(), num_classes=None):
    """Fit a :class:`LinearProbModel` by full-batch gradient descent.

    The learning rate halves whenever a step would increase the loss (the
    step is then rejected), so the recorded loss history is non-increasing.
    Each accepted step grows the rate by 10%, up to 64 times its initial value.
    Training stops once an accepted step changes the loss by less than
    ``config.tol`` or after ``config.epochs`` epochs.

    With ``config.standardize`` the optimisation runs on z-scored features
    and the returned parameters are mapped back to the raw feature space.
    """
    x = as_matrix(data)
    y = np.asarray(labels, dtype=np.int64)
    n, p = x.shape
    if y.shape != (n,):
        raise DimensionError(f"{n} rows but {y.shape} labels")
    w = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
    if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DimensionError("sample weights must be finite, non-negative, one per row")
    if w.sum() <= 0:
        raise SingleClass("all sample weights are zero")
    if num_classes is None:
        num_classes = max(2, int(y.max()) + 1)
    if y.min() < 0 or y.max() >= num_classes:
        raise DimensionError(f"labels must lie in [0, {num_classes})")
    if len(np.unique(y[w > 0])) < 2:
        raise SingleClass("training data contains a single class")

    if config.standardize:
        mu = x.mean(axis=0)
        sigma = x.std(axis=0)
        sigma[sigma == 0] = 1.0
        z = (x - mu) / sigma
    else:
        z = x

    rng = np.random.default_rng(config.seed)
    weights = rng.normal(0.0, 0.01, size=(num_classes, p))
    bias = np.zeros(num_classes)
    targets = _target_matrix(y, w, num_classes)
    total = w.sum()

    def objective(cw, cb):
        return _soft_cross_entropy(cw, cb, z, targets, w, total, config.l2)

    loss, gw, gb = objective(weights, bias)
    if not np.isfinite(loss):
        raise NonFiniteLoss(0)
    history = [loss]
    lr = config.learning_rate
    for epoch in range(1, config.epochs + 1):
        cand_w = weights - lr * gw
        cand_b = bias - lr * gb
        cand_loss, cand_gw, cand_gb = objective(cand_w, cand_b)
        if not np.isfinite(cand_loss) or not np.all(np.isfinite(cand_w)):
            raise NonFiniteLoss(epoch)
        if cand_loss > loss:
            lr /= 2.0
            history.append(loss)
            if lr < 1e-12:
                break
            continue
        delta = loss - cand_loss
        weights, bias, loss, gw, gb = cand_w, cand_b, cand_loss, cand_gw, cand_gb
        lr = min(lr * _LR_GROWTH, config.learning_rate * _LR_CAP)
        history.append(loss)
        if delta < config.tol:
            break

    if config.standardize:
        raw_w = weights / sigma
        raw_b = bias - raw_w @ mu
    else:
        raw_w, raw_b = weights, bias
    return LinearProbModel(weights=raw_w, bias=raw_b, loss_history=tuple(history))


def polynomial_features(data, degree):
    """All monomials of the columns up to ``degree`` (constant term excluded)."""
    x = as_matrix(data)
    if degree < 1:
        raise DimensionError("degree must be >= 1")
    cols = []
    for k in range(1, degree + 1):
        for combo in combinations_with_replacement(range(x.shape[1]), k):
            cols.append(np.prod(x[:, combo], axis=1))
    return np.column_stack(cols)


# --------------------------------------------------------------------------
# Clustering and nearest neighbours
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia_history: tuple
    n_iter: int

    @property
    def inertia(self):
        return self.inertia_history[-1]


def _kmeanspp_init(x, k, rng):
    n = len(x)
    chosen = [int(rng.integers(n))]
    d2 = cdist(x, x[chosen[0]][None, :], "sqeuclidean")[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            taken = set(chosen)
            idx = next(i for i in range(n) if i not in taken)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        chosen.append(idx)
        d2 = np.minimum(d2, cdist(x, x[idx][None, :], "sqeuclidean")[:, 0])
    return x[chosen].copy()


def kmeans_fit(data, k, seed, max_iter=300):
    """Lloyd's algorithm from a k-means++ initialisation.

    Iterates until the assignment stops changing or ``max_iter`` updates.
    A centroid that loses all its points moves to the point farthest from
    its current centroid.
    """
    x = as_matrix(data)
    n = len(x)
    if not 1 <= k <= n:
        raise DimensionError(f"k={k} must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(x, k, rng)
    dist = cdist(x, centroids, "sqeuclidean")
    labels = np.argmin(dist, axis=1)
    history = [float(dist[np.arange(n), labels].sum())]

    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new_centroids = centroids.copy()
        point_dist = dist[np.arange(n), labels].copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new_centroids[j] = x[members].mean(axis=0)
        for j in range(k):
            if not (labels == j).any():
                far = int(np.argmax(point_dist))
                new_centroids[j] = x[far]
                point_dist[far] = -1.0
        centroids = new_centroids
        dist = cdist(x, centroids, "sqeuclidean")
        new_labels = np.argmin(dist, axis=1)
        history.append(float(dist[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return KMeansResult(labels=labels, centroids=centroids, inertia_history=tuple(history), n_iter=n_iter)


def kmeans(data, k, seed):
    """Cluster ids from :func:`kmeans_fit`."""
    return kmeans_fit(data, k, seed).labels


def nn1_classify(reference, reference_labels, queries):
    """Euclidean 1-nearest-neighbour labels; ties go to the lowest reference index."""
    ref = np.asarray(reference, dtype=np.float64)
    if ref.ndim != 2 or len(ref) == 0:
        raise EmptyReference("1-NN needs at least one reference point")
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim == 1:
        q = q[None, :]
    if q.shape[1] != ref.shape[1]:
        raise DimensionError(f"queries have {q.shape[1]} features, reference {ref.shape[1]}")
    ref_labels = np.asarray(reference_labels)
    if len(ref_labels) != len(ref):
        raise DimensionError("one label per reference point is required")
    if len(q) == 0:
        return ref_labels[:0].copy()
    nearest = np.argmin(cdist(q, ref, "sqeuclidean"), axis=1)
    return ref_labels[nearest]


# --------------------------------------------------------------------------
# Classification metrics
# --------------------------------------------------------------------------


def accuracy(y_true, y_pred):
    y_true = np.asarray(y_true)
    return float(np.mean(y_true == np.asarray(y_pred))) if len(y_true) else 0.0


def macro_f1(y_true, y_pred, labels=None):
    """Unweighted mean of per-class F1 over ``labels`` (default: observed classes)."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if labels is None:
        labels = np.union1d(y_true, y_pred)
    scores = []
    for c in labels:
        tp = np.sum((y_true == c) & (y_pred == c))
        fp = np.sum((y_true != c) & (y_pred == c))
        fn = np.sum((y_true == c) & (y_pred != c))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores)) if scores else 0.0
