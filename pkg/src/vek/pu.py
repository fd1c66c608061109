"""Positive-Unlabelled learning and Positive Unlabelled Conversion (PUC).

A classifier ``f`` is trained to separate labelled from unlabelled samples.
Its mean confidence on held-out labelled positives estimates the labelling
frequency ``c = p(s=1 | y=1)``; each unlabelled sample then receives the
weight ``w(x) = p(y=1 | x, s=0)``. Unlabelled samples are duplicated into a
positive copy weighted ``w`` and a negative copy weighted ``1 - w`` and a
second classifier ``g`` is trained on the result.

PUC additionally estimates the class prior and relabels the highest-weight
unlabelled samples as plain positives until the positive fraction reaches
that prior.
"""

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import FeatureDataset
from .errors import EmptyValidation, InvalidC, MissingWeight, SchemaError, SingleClass
from .numerics import TrainConfig, polynomial_features, predict_proba, train_linear_prob

P_CLIP = 1e-6
MODES = ("pn", "pu", "puc")


@dataclass(frozen=True)
class PUWeight:
    id: str
    p_s: float
    w: float
    converted: bool = False


@dataclass(frozen=True)
class PUWeightTable:
    """Per-instance PU weights for the unlabelled part of a dataset."""

    c_estimate: float
    entries: tuple
    prior_estimate: float = None

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def by_id(self):
        return {e.id: e for e in self.entries}

    @property
    def converted_ids(self):
        return [e.id for e in self.entries if e.converted]

    @property
    def n_converted(self):
        return sum(e.converted for e in self.entries)

    def validate(self, dataset=None):
        """Raise ``ValueError`` if any table invariant is violated."""
        c = self.c_estimate
        if not 0 < c <= 1:
            raise ValueError(f"c_estimate {c} outside (0, 1]")
        if self.prior_estimate is not None and not 0 <= self.prior_estimate <= 1:
            raise ValueError(f"prior_estimate {self.prior_estimate} outside [0, 1]")
        for e in self.entries:
            expected = instance_weight(e.p_s, c)
            if not np.isclose(e.w, expected, rtol=1e-12, atol=0.0) or e.w < 0:
                raise ValueError(f"{e.id}: weight {e.w} != {expected}")
            if not P_CLIP <= e.p_s <= 1 - P_CLIP:
                raise ValueError(f"{e.id}: p_s {e.p_s} is not clipped")
        if dataset is not None:
            for e in self.entries:
                if dataset[e.id].is_labelled or _observed_label(dataset[e.id]) == 1:
                    raise ValueError(f"{e.id}: weighted instance is labelled")
        converted = [e.w for e in self.entries if e.converted]
        remaining = [e.w for e in self.entries if not e.converted]
        if converted and remaining and max(remaining) > min(converted):
            raise ValueError("converted instances are not a prefix of the weight ranking")


@dataclass(frozen=True)
class WeightedSet:
    """Training rows produced by the duplication scheme."""

    ids: tuple
    features: np.ndarray
    labels: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.ids)

    @property
    def total_weight(self):
        return float(self.weights.sum())


@dataclass(frozen=True)
class PUConfig:
    """Settings for :func:`fit_pu_pipeline`.

    ``degree`` > 1 expands raw features into all monomials up to that degree
    before any model sees them.
    """

    seed: int = 13
    degree: int = 1
    validation_fraction: float = 0.2
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass(frozen=True)
class PUFitResult:
    mode: str
    model: object
    weights: PUWeightTable = None
    labelled_model: object = None
    validation_ids: tuple = ()
    degree: int = 1

    def transform(self, raw):
        return featurize(raw, self.degree)

    def predict_proba(self, raw):
        """Class distribution of ``g`` for raw (untransformed) feature rows."""
        return predict_proba(self.model, self.transform(raw))


def featurize(raw, degree=1):
    raw = np.asarray(raw, dtype=np.float64)
    if degree == 1:
        return raw
    single = raw.ndim == 1
    out = polynomial_features(np.atleast_2d(raw), degree)
    return out[0] if single else out


def _observed_label(inst):
    if inst.pu_flag is not None:
        return 1 if inst.pu_flag == "labelled" else 0
    if inst.label in (0, 1):
        return inst.label
    raise SchemaError(f"instance {inst.id!r} has neither pu_flag nor a binary label", field="label")


def observed_labels(dataset):
    """The PU indicator ``s`` per instance.

    ``pu_flag`` decides when present, otherwise the binary ``label`` is used.
    Any true ``label`` carried next to a ``pu_flag`` is ignored.
    """
    return np.array([_observed_label(inst) for inst in dataset], dtype=np.int64)


def _rows(data, degree):
    if isinstance(data, FeatureDataset):
        data = data.features()
    return featurize(np.atleast_2d(np.asarray(data, dtype=np.float64)), degree)


def estimate_c(model, validation_positives, degree=1):
    """Mean probability of the labelled class over known positives.

    ``validation_positives`` is a :class:`FeatureDataset` or a matrix of raw
    rows. The result is clipped to ``[1e-6, 1]``.
    """
    if isinstance(validation_positives, FeatureDataset) and len(validation_positives) == 0:
        raise EmptyValidation("no validation positives to estimate c")
    rows = np.asarray(
        validation_positives.features()
        if isinstance(validation_positives, FeatureDataset)
        else validation_positives,
        dtype=np.float64,
    )
    if rows.size == 0:
        raise EmptyValidation("no validation positives to estimate c")
    probs = predict_proba(model, _rows(rows, degree))[:, 1]
    return float(np.clip(probs.mean(), P_CLIP, 1.0))


def instance_weight(p_s, c):
    """``(1 - c) / c * p / (1 - p)`` with ``p`` clipped to ``[1e-6, 1 - 1e-6]``."""
    if not np.all(np.asarray(c) > 0):
        raise InvalidC(f"c must be positive, got {c}")
    p = np.clip(np.asarray(p_s, dtype=np.float64), P_CLIP, 1.0 - P_CLIP)
    w = (1.0 - c) / c * p / (1.0 - p)
    w = np.maximum(w, 0.0)
    return float(w) if np.ndim(w) == 0 else w


def compute_weights(dataset, model, c, degree=1):
    """Weight every unlabelled instance of ``dataset`` with classifier ``model``."""
    s = observed_labels(dataset)
    unlabelled = [inst for inst, si in zip(dataset, s) if si == 0]
    if not unlabelled:
        return PUWeightTable(c_estimate=c, entries=())
    raw = np.asarray([inst.features for inst in unlabelled], dtype=np.float64)
    p_s = np.clip(predict_proba(model, _rows(raw, degree))[:, 1], P_CLIP, 1.0 - P_CLIP)
    w = instance_weight(p_s, c)
    entries = tuple(
        PUWeight(inst.id, float(p), float(wi)) for inst, p, wi in zip(unlabelled, p_s, w)
    )
    return PUWeightTable(c_estimate=c, entries=entries)


def build_weighted_training_set(dataset, weights, degree=1):
    """Expand a PU dataset into weighted binary training rows.

    Labelled positives and converted instances appear once as positives with
    weight 1. Every other unlabelled instance appears twice: as a positive
    with weight ``w`` and as a negative with weight ``1 - w`` (``w`` clamped
    to ``[0, 1]``).
    """
    table = weights.by_id() if weights is not None else {}
    s = observed_labels(dataset)
    ids, rows, labels, ws = [], [], [], []
    for inst, si in zip(dataset, s):
        if si == 1:
            ids.append(inst.id)
            rows.append(inst.features)
            labels.append(1)
            ws.append(1.0)
            continue
        if inst.id not in table:
            raise MissingWeight(inst.id)
        entry = table[inst.id]
        if entry.converted:
            ids.append(inst.id)
            rows.append(inst.features)
            labels.append(1)
            ws.append(1.0)
            continue
        w = min(max(entry.w, 0.0), 1.0)
        ids.extend([inst.id, inst.id])
        rows.extend([inst.features, inst.features])
        labels.extend([1, 0])
        ws.extend([w, 1.0 - w])
    features = _rows(np.asarray(rows, dtype=np.float64), degree) if rows else np.zeros((0, 0))
    return WeightedSet(
        ids=tuple(ids),
        features=features,
        labels=np.asarray(labels, dtype=np.int64),
        weights=np.asarray(ws, dtype=np.float64),
    )


def estimate_prior(dataset, model, c, degree=1):
    """Estimate ``p(y=1)`` as ``(#labelled + sum of unlabelled w) / k``, clipped to [0, 1]."""
    if len(dataset) == 0:
        raise ValueError("cannot estimate a prior on an empty dataset")
    s = observed_labels(dataset)
    table = compute_weights(dataset, model, c, degree)
    total_w = sum(e.w for e in table.entries)
    return float(np.clip((s.sum() + total_w) / len(dataset), 0.0, 1.0))


def puc_convert(dataset, weights):
    """Convert the highest-weight unlabelled instances into positives.

    Unlabelled instances are ranked by descending ``w`` (ties: smaller id
    first) and converted one at a time until the positive fraction of the
    whole dataset is at least ``weights.prior_estimate``.
    """
    if weights.prior_estimate is None:
        raise ValueError("puc_convert needs a prior estimate")
    s = observed_labels(dataset)
    positives = int(s.sum())
    total = len(dataset)
    ranked = sorted(weights.entries, key=lambda e: (-e.w, e.id))
    converted = set()
    for entry in ranked:
        if positives / total >= weights.prior_estimate:
            break
        converted.add(entry.id)
        positives += 1
    entries = tuple(replace(e, converted=e.id in converted) for e in weights.entries)
    return replace(weights, entries=entries)


def _hash_fraction(instance_id):
    digest = hashlib.sha256(instance_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2.0**64


def validation_split(dataset, fraction=0.2):
    """Deterministic split of instance ids into (train, validation) by id hash.

    At least one labelled instance always lands in validation.
    """
    s = observed_labels(dataset)
    fracs = {inst.id: _hash_fraction(inst.id) for inst in dataset}
    val = {i for i, f in fracs.items() if f < fraction}
    labelled = [inst.id for inst, si in zip(dataset, s) if si == 1]
    if not labelled:
        raise EmptyValidation("dataset has no labelled positives")
    if not val.intersection(labelled):
        val.add(min(labelled, key=lambda i: (fracs[i], i)))
    train = [i for i in dataset.ids if i not in val]
    return train, [i for i in dataset.ids if i in val]


def fit_pu_pipeline(train, mode="puc", config=PUConfig()):
    """Train a positive-vs-negative classifier from PU data.

    Modes
    -----
    pn
        Unlabelled instances are treated as negatives.
    pu
        ``f`` is trained on the training part of a deterministic 80/20 split,
        ``c`` is estimated on the labelled instances of the validation part,
        and ``g`` is trained on the duplicated, weighted full dataset.
    puc
        As ``pu``, plus prior estimation and conversion before training ``g``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    s = observed_labels(train)
    if s.min() == s.max():
        raise SingleClass("PU training data needs both labelled and unlabelled instances")
    f_cfg = replace(config.train, seed=config.seed)
    g_cfg = replace(config.train, seed=config.seed + 1)
    raw = train.features()

    if mode == "pn":
        model = train_linear_prob(featurize(raw, config.degree), s, config=f_cfg, num_classes=2)
        return PUFitResult(mode=mode, model=model, degree=config.degree)

    train_ids, val_ids = validation_split(train, config.validation_fraction)
    train_set = set(train_ids)
    train_part = train.subset(lambda inst: inst.id in train_set)
    val_set = set(val_ids)
    val_pos = train.subset(lambda inst: inst.id in val_set and _observed_label(inst) == 1)
    f_model = train_linear_prob(
        featurize(train_part.features(), config.degree),
        observed_labels(train_part),
        config=f_cfg,
        num_classes=2,
    )
    c = estimate_c(f_model, val_pos, degree=config.degree)
    table = compute_weights(train, f_model, c, degree=config.degree)
    if mode == "puc":
        prior = estimate_prior(train, f_model, c, degree=config.degree)
        table = puc_convert(train, replace(table, prior_estimate=prior))
    rows = build_weighted_training_set(train, table, degree=config.degree)
    g_model = train_linear_prob(rows.features, rows.labels, rows.weights, config=g_cfg, num_classes=2)
    return PUFitResult(
        mode=mode,
        model=g_model,
        weights=table,
        labelled_model=f_model,
        validation_ids=tuple(val_ids),
        degree=config.degree,
    )
