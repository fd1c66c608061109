"""Loading, validation and persistence of datasets, saliency and reports.

Instance-level data is JSON Lines (one object per line, UTF-8); reports are a
single JSON document with sorted keys. Every loader error names the file and
the offending line or instance id.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    DuplicateId,
    IoError,
    LengthMismatch,
    ParseError,
    SchemaError,
    UnknownInstance,
)

PU_FLAGS = ("labelled", "unlabelled")
_INSTANCE_KEYS = ("id", "tokens", "features", "label", "pu_flag", "domain", "timestep")
SCHEMAS = ("features", "tokens", "both", "any")


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Instance:
    id: str
    features: tuple = None
    tokens: tuple = None
    label: int = None
    pu_flag: str = None
    domain: str = None
    timestep: int = None

    @property
    def is_labelled(self):
        return self.pu_flag == "labelled"

    def to_json(self):
        out = {}
        for key in _INSTANCE_KEYS:
            value = getattr(self, key)
            if value is None:
                continue
            out[key] = list(value) if isinstance(value, tuple) else value
        return out


@dataclass(frozen=True)
class FeatureDataset:
    """An immutable, validated collection of :class:`Instance` objects."""

    instances: tuple
    num_classes: int = None
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        instances = tuple(self.instances)
        object.__setattr__(self, "instances", instances)
        index = {}
        width = None
        for pos, inst in enumerate(instances):
            if inst.id in index:
                raise DuplicateId(inst.id)
            index[inst.id] = pos
            if inst.features is None and inst.tokens is None:
                raise SchemaError(f"instance {inst.id!r} has neither features nor tokens")
            if inst.features is not None:
                if width is None:
                    width = len(inst.features)
                elif len(inst.features) != width:
                    raise SchemaError(
                        f"instance {inst.id!r} has {len(inst.features)} features, "
                        f"expected {width}",
                        field="features",
                    )
            if inst.label is not None and self.num_classes is not None:
                if not 0 <= inst.label < self.num_classes:
                    raise SchemaError(
                        f"instance {inst.id!r} label {inst.label} outside "
                        f"[0, {self.num_classes})",
                        field="label",
                    )
        object.__setattr__(self, "_index", index)

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __contains__(self, instance_id):
        return instance_id in self._index

    def __getitem__(self, instance_id):
        try:
            return self.instances[self._index[instance_id]]
        except KeyError:
            raise UnknownInstance(instance_id) from None

    @property
    def ids(self):
        return [inst.id for inst in self.instances]

    def features(self):
        """Feature matrix, one row per instance."""
        rows = [inst.features for inst in self.instances]
        if any(r is None for r in rows):
            missing = next(inst.id for inst in self.instances if inst.features is None)
            raise SchemaError(f"instance {missing!r} has no features", field="features")
        if not rows:
            return np.zeros((0, 0))
        return np.asarray(rows, dtype=np.float64)

    def labels(self, missing=-1):
        return np.array(
            [missing if inst.label is None else inst.label for inst in self.instances],
            dtype=np.int64,
        )

    def subset(self, predicate):
        return FeatureDataset(
            tuple(inst for inst in self.instances if predicate(inst)),
            num_classes=self.num_classes,
        )

    def group_by(self, key):
        """Split into sub-datasets keyed by ``key(instance)``, keys sorted."""
        groups = {}
        for inst in self.instances:
            groups.setdefault(key(inst), []).append(inst)
        return {
            k: FeatureDataset(tuple(v), num_classes=self.num_classes)
            for k, v in sorted(groups.items(), key=lambda kv: kv[0])
        }


@dataclass(frozen=True)
class SaliencyTensor:
    """Token saliency scores keyed by ``(instance id, class id)``."""

    scores: dict

    def __getitem__(self, key):
        return self.scores[key]

    def __contains__(self, key):
        return key in self.scores

    def __len__(self):
        return len(self.scores)

    def get(self, instance_id, cls):
        return self.scores.get((instance_id, cls))

    def classes_for(self, instance_id):
        return sorted(c for (i, c) in self.scores if i == instance_id)

    def ids(self):
        return sorted({i for (i, _) in self.scores})


@dataclass(frozen=True)
class ConfidenceEntry:
    predicted_class: int
    confidence: float
    full_distribution: tuple = None


@dataclass(frozen=True)
class ExplainRecord:
    id: str
    sentences: tuple
    justification: str


# --------------------------------------------------------------------------
# JSON Lines plumbing
# --------------------------------------------------------------------------


def _iter_jsonl(path):
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"{path}: cannot open ({exc.strerror or exc})") from exc
    with handle:
        for line_no, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line=line_no, path=path) from exc
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", line=line_no, path=path)
            yield line_no, obj


def _dumps_line(obj):
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def _write_lines(path, rows):
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            for row in rows:
                handle.write(_dumps_line(row))
                handle.write("\n")
    except OSError as exc:
        raise IoError(f"{path}: cannot write ({exc.strerror or exc})") from exc


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _check_keys(obj, allowed, line, path):
    for key in obj:
        if key not in allowed:
            raise SchemaError("unknown key", field=key, line=line, path=path)


def _require_id(obj, line, path):
    value = obj.get("id")
    if not isinstance(value, str) or not value:
        raise SchemaError("must be a non-empty string", field="id", line=line, path=path)
    return value


def _number_list(obj, key, line, path):
    value = obj[key]
    if not isinstance(value, list) or not all(_is_number(v) for v in value):
        raise SchemaError("must be a list of finite numbers", field=key, line=line, path=path)
    return tuple(float(v) for v in value)


# --------------------------------------------------------------------------
# Datasets
# --------------------------------------------------------------------------


def _parse_instance(obj, line, path, num_classes):
    _check_keys(obj, _INSTANCE_KEYS, line, path)
    kwargs = {"id": _require_id(obj, line, path)}
    if "tokens" in obj:
        tokens = obj["tokens"]
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise SchemaError("must be a list of strings", field="tokens", line=line, path=path)
        kwargs["tokens"] = tuple(tokens)
    if "features" in obj:
        kwargs["features"] = _number_list(obj, "features", line, path)
    if "label" in obj:
        label = obj["label"]
        if not _is_int(label) or label < 0:
            raise SchemaError("must be a non-negative integer", field="label", line=line, path=path)
        if num_classes is not None and label >= num_classes:
            raise SchemaError(
                f"outside [0, {num_classes})", field="label", line=line, path=path
            )
        kwargs["label"] = label
    if "pu_flag" in obj:
        if obj["pu_flag"] not in PU_FLAGS:
            raise SchemaError(
                f"must be one of {PU_FLAGS}", field="pu_flag", line=line, path=path
            )
        kwargs["pu_flag"] = obj["pu_flag"]
    if "domain" in obj:
        if not isinstance(obj["domain"], str):
            raise SchemaError("must be a string", field="domain", line=line, path=path)
        kwargs["domain"] = obj["domain"]
    if "timestep" in obj:
        if not _is_int(obj["timestep"]):
            raise SchemaError("must be an integer", field="timestep", line=line, path=path)
        kwargs["timestep"] = obj["timestep"]
    return Instance(**kwargs)


def load_dataset(path, schema="any", num_classes=None):
    """Read a JSON Lines dataset.

    Parameters
    ----------
    path : str or Path
        One instance object per line; blank lines are ignored.
    schema : {"features", "tokens", "both", "any"}
        Which representation every instance must carry.
    num_classes : int, optional
        When given, labels must lie in ``[0, num_classes)``.
    """
    if schema not in SCHEMAS:
        raise ValueError(f"schema must be one of {SCHEMAS}")
    instances = []
    seen = set()
    width = None
    for line, obj in _iter_jsonl(path):
        inst = _parse_instance(obj, line, path, num_classes)
        if inst.id in seen:
            raise DuplicateId(inst.id, line=line, path=path)
        seen.add(inst.id)
        if schema in ("features", "both") and inst.features is None:
            raise SchemaError("required", field="features", line=line, path=path)
        if schema in ("tokens", "both") and inst.tokens is None:
            raise SchemaError("required", field="tokens", line=line, path=path)
        if inst.features is None and inst.tokens is None:
            raise SchemaError("instance needs features or tokens", line=line, path=path)
        if inst.features is not None:
            if width is None:
                width = len(inst.features)
            elif len(inst.features) != width:
                raise SchemaError(
                    f"expected {width} values, got {len(inst.features)}",
                    field="features",
                    line=line,
                    path=path,
                )
        instances.append(inst)
    return FeatureDataset(tuple(instances), num_classes=num_classes)


def write_dataset(dataset, path):
    _write_lines(path, (inst.to_json() for inst in dataset))


# --------------------------------------------------------------------------
# Saliency, rationales, confidences, activations
# --------------------------------------------------------------------------


def _token_count(inst, line, path):
    if inst.tokens is None:
        raise SchemaError(
            f"instance {inst.id!r} has no tokens to align scores with",
            field="tokens",
            line=line,
            path=path,
        )
    return len(inst.tokens)


def _lookup(dataset, instance_id, line, path):
    if instance_id not in dataset:
        raise UnknownInstance(instance_id, line=line, path=path)
    return dataset[instance_id]


def load_saliency(path, dataset):
    scores = {}
    for line, obj in _iter_jsonl(path):
        _check_keys(obj, ("id", "class", "scores"), line, path)
        instance_id = _require_id(obj, line, path)
        cls = obj.get("class")
        if not _is_int(cls) or cls < 0:
            raise SchemaError("must be a non-negative integer", field="class", line=line, path=path)
        if "scores" not in obj:
            raise SchemaError("required", field="scores", line=line, path=path)
        values = np.asarray(_number_list(obj, "scores", line, path))
        inst = _lookup(dataset, instance_id, line, path)
        expected = _token_count(inst, line, path)
        if len(values) != expected:
            raise LengthMismatch(instance_id, expected, len(values), line=line, path=path)
        if (instance_id, cls) in scores:
            raise DuplicateId(f"{instance_id}@class{cls}", line=line, path=path)
        scores[(instance_id, cls)] = values
    return SaliencyTensor(scores)


def write_saliency(saliency, path):
    rows = (
        {"id": i, "class": c, "scores": [float(v) for v in saliency[(i, c)]]}
        for (i, c) in sorted(saliency.scores)
    )
    _write_lines(path, rows)


def load_rationales(path, dataset):
    masks = {}
    for line, obj in _iter_jsonl(path):
        _check_keys(obj, ("id", "mask"), line, path)
        instance_id = _require_id(obj, line, path)
        mask = obj.get("mask")
        if not isinstance(mask, list) or not all(_is_int(v) and v in (0, 1) for v in mask):
            raise SchemaError("must be a list of 0/1 integers", field="mask", line=line, path=path)
        inst = _lookup(dataset, instance_id, line, path)
        expected = _token_count(inst, line, path)
        if len(mask) != expected:
            raise LengthMismatch(instance_id, expected, len(mask), line=line, path=path)
        if instance_id in masks:
            raise DuplicateId(instance_id, line=line, path=path)
        masks[instance_id] = np.asarray(mask, dtype=np.int64)
    return masks


def write_rationales(rationales, path):
    _write_lines(
        path, ({"id": i, "mask": [int(v) for v in rationales[i]]} for i in sorted(rationales))
    )


def load_confidences(path, dataset):
    table = {}
    for line, obj in _iter_jsonl(path):
        _check_keys(obj, ("id", "predicted_class", "confidence", "full_distribution"), line, path)
        instance_id = _require_id(obj, line, path)
        _lookup(dataset, instance_id, line, path)
        cls = obj.get("predicted_class")
        if not _is_int(cls) or cls < 0:
            raise SchemaError(
                "must be a non-negative integer", field="predicted_class", line=line, path=path
            )
        conf = obj.get("confidence")
        if not _is_number(conf) or not 0.0 <= conf <= 1.0:
            raise SchemaError("must be a number in [0, 1]", field="confidence", line=line, path=path)
        dist = None
        if "full_distribution" in obj:
            dist = _number_list(obj, "full_distribution", line, path)
            if abs(max(dist) - conf) > 1e-9:
                raise SchemaError(
                    "confidence differs from the distribution maximum",
                    field="confidence",
                    line=line,
                    path=path,
                )
        if instance_id in table:
            raise DuplicateId(instance_id, line=line, path=path)
        table[instance_id] = ConfidenceEntry(cls, float(conf), dist)
    return table


def write_confidences(confidences, path):
    rows = []
    for i in sorted(confidences):
        entry = confidences[i]
        row = {"id": i, "predicted_class": entry.predicted_class, "confidence": entry.confidence}
        if entry.full_distribution is not None:
            row["full_distribution"] = list(entry.full_distribution)
        rows.append(row)
    _write_lines(path, rows)


def load_activations(path, dataset):
    table = {}
    widths = {}
    for line, obj in _iter_jsonl(path):
        _check_keys(obj, ("model", "id", "activation"), line, path)
        model = obj.get("model")
        if not isinstance(model, str) or not model:
            raise SchemaError("must be a non-empty string", field="model", line=line, path=path)
        instance_id = _require_id(obj, line, path)
        _lookup(dataset, instance_id, line, path)
        if "activation" not in obj:
            raise SchemaError("required", field="activation", line=line, path=path)
        values = np.asarray(_number_list(obj, "activation", line, path))
        expected = widths.setdefault(model, len(values))
        if len(values) != expected:
            raise LengthMismatch(instance_id, expected, len(values), line=line, path=path)
        if (model, instance_id) in table:
            raise DuplicateId(f"{model}/{instance_id}", line=line, path=path)
        table[(model, instance_id)] = values
    return table


def write_activations(activations, path):
    rows = (
        {"model": m, "id": i, "activation": [float(v) for v in activations[(m, i)]]}
        for (m, i) in sorted(activations)
    )
    _write_lines(path, rows)


# --------------------------------------------------------------------------
# Extractive explanation corpora
# --------------------------------------------------------------------------


def load_explain_corpus(path):
    """Read ``{"id", "sentences", "justification"}`` records keyed by id."""
    records = {}
    for line, obj in _iter_jsonl(path):
        _check_keys(obj, ("id", "sentences", "justification"), line, path)
        instance_id = _require_id(obj, line, path)
        sentences = obj.get("sentences")
        if not isinstance(sentences, list) or not all(isinstance(s, str) for s in sentences):
            raise SchemaError("must be a list of strings", field="sentences", line=line, path=path)
        justification = obj.get("justification")
        if not isinstance(justification, str):
            raise SchemaError("must be a string", field="justification", line=line, path=path)
        if instance_id in records:
            raise DuplicateId(instance_id, line=line, path=path)
        records[instance_id] = ExplainRecord(instance_id, tuple(sentences), justification)
    return records


def write_explain_corpus(records, path):
    _write_lines(
        path,
        (
            {"id": r.id, "sentences": list(r.sentences), "justification": r.justification}
            for r in (records[k] for k in sorted(records))
        ),
    )


def load_texts(path, key="text"):
    """Read ``{"id", <key>}`` lines where ``<key>`` is a string or a list of strings."""
    texts = {}
    for line, obj in _iter_jsonl(path):
        instance_id = _require_id(obj, line, path)
        value = obj.get(key)
        if isinstance(value, list) and all(isinstance(v, str) for v in value):
            value = " ".join(value)
        if not isinstance(value, str):
            raise SchemaError("must be a string or list of strings", field=key, line=line, path=path)
        if instance_id in texts:
            raise DuplicateId(instance_id, line=line, path=path)
        texts[instance_id] = value
    return texts


def write_texts(texts, path, key="text"):
    _write_lines(path, ({"id": i, key: texts[i]} for i in sorted(texts)))


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def render_report(results, *, seed, config, wall_time=None, tool_version=__version__):
    doc = {
        "tool_version": tool_version,
        "seed": seed,
        "config": config,
        "wall_time": wall_time,
        "results": results,
    }
    return json.dumps(_to_jsonable(doc), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_report(results, path, *, seed, config, wall_time=None, tool_version=__version__):
    """Write a report as one JSON document with sorted keys.

    ``wall_time`` is stored as given; pass ``None`` to keep reports
    byte-identical across runs.
    """
    text = render_report(results, seed=seed, config=config, wall_time=wall_time, tool_version=tool_version)
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"{path}: cannot write report ({exc.strerror or exc})") from exc


def read_report(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"{path}: cannot read report ({exc.strerror or exc})") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", line=exc.lineno, path=path) from exc
