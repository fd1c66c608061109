"""Command-line interface.

Every command reads the JSON Lines formats of :mod:`vek.dataio` and writes
either a JSON report or a data file. Exit status is 0 on success, 2 on a
usage error and 1 on a data or validation error.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, dataio, explain, pu, ssa, synth
from .errors import IoError, ParseError, SchemaError, VekError
from .numerics import TrainConfig, accuracy, nn1_classify, predict_proba, train_linear_prob
from .xdiag import adapters, properties, saliency

DEFAULT_SEED = 13
SEED_ENV = "VEK_SEED"


class UsageError(Exception):
    """Bad flag value detected after parsing."""


# --------------------------------------------------------------------------
# argument types
# --------------------------------------------------------------------------


def _thresholds(text):
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or any(not 0 <= v <= 100 for v in values):
        raise argparse.ArgumentTypeError("thresholds must lie in 0..100")
    return values


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _named_path(text):
    name, sep, path = text.partition("=")
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError(f"expected NAME=PATH, got {text!r}")
    return name, path


def resolve_seed(explicit):
    if explicit is not None:
        return explicit
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}")


# --------------------------------------------------------------------------
# shared helpers
# --------------------------------------------------------------------------

_NOT_CONFIG = {"handler", "command", "action", "out", "record_wall_time", "seed"}


def _config(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_CONFIG}


def _emit(args, results, started):
    wall = round(time.perf_counter() - started, 6) if args.record_wall_time else None
    dataio.write_report(results, args.out, seed=args.seed, config=_config(args), wall_time=wall)


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"{path}: cannot read ({exc.strerror or exc})") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", line=exc.lineno, path=path) from exc


def _write_json(obj, path):
    try:
        Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"{path}: cannot write ({exc.strerror or exc})") from exc


def _adapter(args, dataset):
    """Adapter from ``--model`` or, failing that, trained on the labelled input."""
    if args.model:
        return adapters.adapter_from_json(_read_json(args.model))
    labelled = dataset.subset(lambda inst: inst.label is not None)
    return adapters.train_bag_adapter(labelled, TrainConfig(seed=args.seed), name="trained")


def _binary_scores(gold, pred):
    gold = np.asarray(gold)
    pred = np.asarray(pred)
    tp = int(np.sum((gold == 1) & (pred == 1)))
    fp = int(np.sum((gold == 0) & (pred == 1)))
    fn = int(np.sum((gold == 1) & (pred == 0)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"accuracy": accuracy(gold, pred), "precision": precision, "recall": recall, "f1": f1}


# --------------------------------------------------------------------------
# pu
# --------------------------------------------------------------------------


def _pu_config(args):
    return pu.PUConfig(seed=args.seed, degree=args.degree, train=replace(TrainConfig(), seed=args.seed))


def cmd_pu_fit(args):
    started = time.perf_counter()
    train = dataio.load_dataset(args.input, schema="features")
    result = pu.fit_pu_pipeline(train, args.mode, _pu_config(args))
    out = {
        "mode": result.mode,
        "model": {"weights": result.model.weights, "bias": result.model.bias},
        "n_train": len(train),
    }
    if result.weights is not None:
        out["c_estimate"] = result.weights.c_estimate
        out["prior_estimate"] = result.weights.prior_estimate
        out["n_converted"] = result.weights.n_converted
    if args.test:
        test = dataio.load_dataset(args.test, schema="features")
        pred = np.argmax(result.predict_proba(test.features()), axis=1)
        gold = test.labels()
        scored = gold >= 0
        out["test"] = _binary_scores(gold[scored], pred[scored])
        out["test"]["n"] = int(scored.sum())
    _emit(args, out, started)


def cmd_pu_convert(args):
    started = time.perf_counter()
    train = dataio.load_dataset(args.input, schema="features")
    result = pu.fit_pu_pipeline(train, "puc", _pu_config(args))
    table = result.weights
    out = {
        "c_estimate": table.c_estimate,
        "prior_estimate": table.prior_estimate,
        "n_converted": table.n_converted,
        "weights": [
            {"id": e.id, "p_s": e.p_s, "w": e.w, "converted": e.converted}
            for e in sorted(table.entries, key=lambda e: e.id)
        ],
    }
    if args.dataset_out:
        converted = set(table.converted_ids)
        flagged = tuple(
            replace(inst, pu_flag="labelled") if inst.id in converted else inst for inst in train
        )
        dataio.write_dataset(dataio.FeatureDataset(flagged, num_classes=train.num_classes), args.dataset_out)
    _emit(args, out, started)


# --------------------------------------------------------------------------
# ssa
# --------------------------------------------------------------------------


def _steps(dataset):
    if all(inst.timestep is not None for inst in dataset):
        groups = dataset.group_by(lambda inst: inst.timestep)
    elif all(inst.domain is not None for inst in dataset):
        groups = dataset.group_by(lambda inst: inst.domain)
    else:
        raise SchemaError("every instance needs a timestep or a domain tag", field="timestep")
    return list(groups), list(groups.values())


def _classify(ref, ref_labels, query, classifier, seed):
    if classifier == "1nn":
        return nn1_classify(ref, ref_labels, query)
    model = train_linear_prob(ref, ref_labels, config=TrainConfig(seed=seed, epochs=500))
    return np.argmax(predict_proba(model, query), axis=1)


def _target_report(target, coords, ref, ref_labels, classifier, seed, truth):
    seeds = target.labels() >= 0
    pred = target.labels().copy()
    if (~seeds).any():
        pred[~seeds] = _classify(ref, ref_labels, coords[~seeds], classifier, seed)
    out = {
        "predictions": {i: int(p) for i, p in zip(target.ids, pred)},
        "n_seeds": int(seeds.sum()),
    }
    if truth is not None:
        gold = np.array([truth[i] for i in target.ids])
        out["accuracy_unlabelled"] = accuracy(gold[~seeds], pred[~seeds]) if (~seeds).any() else None
    return out


def _truth(args):
    if not args.truth:
        return None
    data = dataio.load_dataset(args.truth)
    return {inst.id: inst.label for inst in data if inst.label is not None}


def cmd_ssa_align(args):
    started = time.perf_counter()
    data = dataio.load_dataset(args.input, schema="features")
    keys, steps = _steps(data)
    if len(steps) != 2:
        raise SchemaError(f"align needs exactly two steps or domains, found {len(steps)}", field="timestep")
    source, target = steps
    result = ssa.align_semisupervised(
        source, target, d=args.d, use_clusters=args.use_clusters, k_clusters=args.k, seed=args.seed
    )
    seeds = result.target_seed_mask
    ref = np.vstack([result.source_coords, result.target_coords[seeds]])
    ref_labels = np.concatenate([result.source_labels, result.target_labels[seeds]])
    out = {
        "source": keys[0],
        "target": keys[1],
        "d": result.map.d,
        "M": result.map.M,
        "fallback_cells": [list(c) if isinstance(c, tuple) else c for c in result.fallback_cells],
    }
    out.update(_target_report(target, result.target_coords, ref, ref_labels, args.classifier, args.seed, _truth(args)))
    _emit(args, out, started)


def cmd_ssa_sequence(args):
    started = time.perf_counter()
    data = dataio.load_dataset(args.input, schema="features")
    keys, steps = _steps(data)
    result = ssa.align_sequence(steps, d=args.d, seed=args.seed, k_clusters=args.k)
    last = len(steps) - 1
    seeds = result.known_mask[last]
    ref = np.vstack([result.coords[t] for t in range(last)] + [result.coords[last][seeds]])
    ref_labels = np.concatenate([result.labels[t] for t in range(last)] + [result.labels[last][seeds]])
    out = {
        "steps": keys,
        "d": result.d,
        "tree": [[list(span) for span in level] for level in result.tree],
    }
    out.update(_target_report(steps[last], result.coords[last], ref, ref_labels, args.classifier, args.seed, _truth(args)))
    _emit(args, out, started)


# --------------------------------------------------------------------------
# diag
# --------------------------------------------------------------------------


def _tokens(args):
    return dataio.load_dataset(args.input, schema="tokens")


def cmd_diag_saliency(args):
    data = _tokens(args)
    adapter = _adapter(args, data)
    kwargs = {"num_samples": args.samples} if args.method == "shapley" else {}
    tensor = saliency.generate_saliency(adapter, data, args.method, seed=args.seed, **kwargs)
    dataio.write_saliency(tensor, args.out)


def cmd_diag_map(args):
    started = time.perf_counter()
    data = _tokens(args)
    sal = dataio.load_saliency(args.saliency, data)
    masks = dataio.load_rationales(args.rationales, data)
    res = properties.human_agreement_map(sal, masks, data)
    res.pop("per_instance")
    _emit(args, res, started)


def cmd_diag_confidence(args):
    started = time.perf_counter()
    data = _tokens(args)
    sal = dataio.load_saliency(args.saliency, data)
    conf = dataio.load_confidences(args.confidences, data)
    num_classes = data.num_classes or 1 + max(c for (_, c) in sal.scores)
    res = properties.confidence_indication(
        sal, conf, num_classes, folds=args.folds, upsample=args.upsample, seed=args.seed
    )
    _emit(args, res, started)


def cmd_diag_faithfulness(args):
    started = time.perf_counter()
    data = _tokens(args)
    sal = dataio.load_saliency(args.saliency, data)
    adapter = _adapter(args, data)
    res = properties.faithfulness_auctp(
        adapter, data, sal, metric=args.metric, thresholds=args.thresholds, saliency_class=args.saliency_class
    )
    _emit(args, res, started)


def cmd_diag_rationale(args):
    started = time.perf_counter()
    data = _tokens(args)
    acts = dataio.load_activations(args.activations, data)
    tensors = {name: dataio.load_saliency(path, data) for name, path in args.saliency}
    res = properties.rationale_consistency_from_tables(acts, tensors, data)
    _emit(args, res, started)


def cmd_diag_dataset(args):
    started = time.perf_counter()
    data = _tokens(args)
    sal = dataio.load_saliency(args.saliency, data)
    adapter = _adapter(args, data)
    acts = None
    if args.activations:
        table = dataio.load_activations(args.activations, data)
        models = sorted({m for m, _ in table})
        if len(models) != 1:
            raise SchemaError(f"expected activations of one model, found {len(models)}", field="model")
        acts = {i: table[(models[0], i)] for i in data.ids}
    res = properties.dataset_consistency(
        adapter, data, sal, n_overlap=args.n_overlap, n_random=args.n_random, seed=args.seed, activations=acts
    )
    _emit(args, res, started)


# --------------------------------------------------------------------------
# explain
# --------------------------------------------------------------------------


def cmd_explain_oracle(args):
    started = time.perf_counter()
    corpus = dataio.load_explain_corpus(args.input)
    selections = {}
    for instance_id in sorted(corpus):
        rec = corpus[instance_id]
        if args.method == "lead":
            sel = explain.lead_k(rec.sentences, args.k)
        else:
            sel = explain.greedy_oracle(rec.sentences, rec.justification, args.k, force_k=args.force_k)
        selections[instance_id] = sel
    if args.texts_out:
        texts = {i: s.text(corpus[i].sentences) for i, s in selections.items()}
        dataio.write_texts(texts, args.texts_out)
    out = {
        "n_instances": len(selections),
        "selections": {
            i: {"indices": list(s.indices), "trace": [list(t) for t in s.trace]} for i, s in selections.items()
        },
    }
    _emit(args, out, started)


def cmd_explain_rouge(args):
    started = time.perf_counter()
    scores = explain.score_text(args.candidate, args.reference)
    out = {k: {"precision": v.precision, "recall": v.recall, "f1": v.f1} for k, v in scores.items()}
    _emit(args, out, started)


def cmd_explain_eval(args):
    started = time.perf_counter()
    predictions = dataio.load_texts(args.input, key="text")
    corpus = dataio.load_explain_corpus(args.reference)
    references = {i: rec.justification for i, rec in corpus.items()}
    _emit(args, explain.evaluate_explanations(predictions, references), started)


# --------------------------------------------------------------------------
# synth
# --------------------------------------------------------------------------


def cmd_synth_scar(args):
    data = synth.scar(n=args.n, n_test=args.n_test, prior=args.prior, c=args.c, seed=args.seed)
    dataio.write_dataset(data.train, args.out)
    if args.test_out:
        dataio.write_dataset(data.test, args.test_out)


def cmd_synth_drift(args):
    data = synth.drift(
        n_steps=args.steps, n_per_class=args.n, angle=args.angle, seeds_per_class=args.seeds, seed=args.seed
    )
    merged = tuple(inst for step in data.steps for inst in step)
    dataio.write_dataset(dataio.FeatureDataset(merged, num_classes=2), args.out)
    if args.truth_out:
        full = tuple(
            replace(inst, label=int(y)) for step, ys in zip(data.steps, data.truth) for inst, y in zip(step, ys)
        )
        dataio.write_dataset(dataio.FeatureDataset(full, num_classes=2), args.truth_out)


def cmd_synth_tokens(args):
    data = synth.planted_tokens(vocab_size=args.vocab, n=args.n, num_classes=args.classes, seed=args.seed)
    dataio.write_dataset(data.dataset, args.out)
    if args.model_out:
        adapter = adapters.LinearBagAdapter(data.model, data.vocab, name="planted")
        _write_json(adapters.adapter_to_json(adapter), args.model_out)


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _common(p, report=True):
    p.add_argument("--out", required=True, help="output path")
    p.add_argument("--seed", type=int, default=None, help=f"random seed (default ${SEED_ENV} or {DEFAULT_SEED})")
    if report:
        p.add_argument(
            "--record-wall-time",
            action="store_true",
            help="store elapsed seconds in the report (makes reports differ between runs)",
        )


def build_parser():
    parser = argparse.ArgumentParser(prog="vek", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    groups = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    # pu
    g = groups.add_parser("pu", help="positive-unlabelled learning").add_subparsers(
        dest="action", metavar="ACTION", required=True
    )
    p = g.add_parser("fit", help="train a PN, PU or PUC classifier")
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=pu.MODES, default="puc")
    p.add_argument("--degree", type=_positive_int, default=1, help="polynomial feature degree")
    p.add_argument("--test", help="labelled dataset to score the classifier on")
    _common(p)
    p.set_defaults(handler=cmd_pu_fit)
    p = g.add_parser("convert", help="estimate weights and convert unlabelled instances")
    p.add_argument("--input", required=True)
    p.add_argument("--degree", type=_positive_int, default=1)
    p.add_argument("--dataset-out", help="write the dataset with converted instances flagged as labelled")
    _common(p)
    p.set_defaults(handler=cmd_pu_convert)

    # ssa
    g = groups.add_parser("ssa", help="subspace alignment").add_subparsers(dest="action", metavar="ACTION", required=True)
    for name, handler, helptext in (
        ("align", cmd_ssa_align, "align a labelled source onto a sparsely labelled target"),
        ("sequence", cmd_ssa_sequence, "align a sequence of time steps"),
    ):
        p = g.add_parser(name, help=helptext)
        p.add_argument("--input", required=True, help="dataset with timestep or domain tags")
        p.add_argument("--d", type=_positive_int, default=None, help="subspace dimensionality")
        p.add_argument("--k", type=_positive_int, default=5, help="k-means clusters")
        p.add_argument("--classifier", choices=("1nn", "linear"), default="1nn")
        p.add_argument("--truth", help="fully labelled copy of the input for scoring")
        if name == "align":
            p.add_argument("--use-clusters", action="store_true")
        _common(p)
        p.set_defaults(handler=handler)

    # diag
    g = groups.add_parser("diag", help="saliency diagnostics").add_subparsers(dest="action", metavar="ACTION", required=True)
    p = g.add_parser("saliency", help="generate saliency with a built-in technique")
    p.add_argument("--input", required=True)
    p.add_argument("--model", help="model JSON (default: train on the input)")
    p.add_argument("--method", choices=saliency.GENERATORS, default="occlusion")
    p.add_argument("--samples", type=_positive_int, default=25, help="Shapley permutations")
    _common(p, report=False)
    p.set_defaults(handler=cmd_diag_saliency)
    p = g.add_parser("map", help="human agreement")
    p.add_argument("--input", required=True)
    p.add_argument("--saliency", required=True)
    p.add_argument("--rationales", required=True)
    _common(p)
    p.set_defaults(handler=cmd_diag_map)
    p = g.add_parser("confidence", help="confidence indication")
    p.add_argument("--input", required=True)
    p.add_argument("--saliency", required=True)
    p.add_argument("--confidences", required=True)
    p.add_argument("--folds", type=_positive_int, default=5)
    p.add_argument("--upsample", action="store_true")
    _common(p)
    p.set_defaults(handler=cmd_diag_confidence)
    p = g.add_parser("faithfulness", help="AUC of the threshold-performance curve")
    p.add_argument("--input", required=True)
    p.add_argument("--saliency", required=True)
    p.add_argument("--model", help="model JSON (default: train on the input)")
    p.add_argument("--thresholds", type=_thresholds, default=properties.DEFAULT_THRESHOLDS)
    p.add_argument("--metric", choices=("macro_f1", "accuracy"), default="macro_f1")
    p.add_argument("--saliency-class", choices=("predicted", "gold"), default="predicted")
    _common(p)
    p.set_defaults(handler=cmd_diag_faithfulness)
    p = g.add_parser("rationale", help="rationale consistency across models")
    p.add_argument("--input", required=True)
    p.add_argument("--activations", required=True)
    p.add_argument("--saliency", required=True, action="append", type=_named_path, metavar="MODEL=PATH")
    _common(p)
    p.set_defaults(handler=cmd_diag_rationale)
    p = g.add_parser("dataset", help="dataset consistency for one model")
    p.add_argument("--input", required=True)
    p.add_argument("--saliency", required=True)
    p.add_argument("--model", help="model JSON (default: train on the input)")
    p.add_argument("--activations", help="precomputed activations of a single model")
    p.add_argument("--n-overlap", type=int, default=2000)
    p.add_argument("--n-random", type=int, default=2000)
    _common(p)
    p.set_defaults(handler=cmd_diag_dataset)

    # explain
    g = groups.add_parser("explain", help="ROUGE and extractive explanations").add_subparsers(
        dest="action", metavar="ACTION", required=True
    )
    p = g.add_parser("oracle", help="greedy ROUGE-2 oracle or lead-k selection")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=_positive_int, default=4)
    p.add_argument("--force-k", action="store_true", help="always select k sentences")
    p.add_argument("--method", choices=("greedy", "lead"), default="greedy")
    p.add_argument("--texts-out", help="write the selected text per instance as JSON Lines")
    _common(p)
    p.set_defaults(handler=cmd_explain_oracle)
    p = g.add_parser("rouge", help="score one candidate text against one reference")
    p.add_argument("--candidate", required=True)
    p.add_argument("--reference", required=True)
    _common(p)
    p.set_defaults(handler=cmd_explain_rouge)
    p = g.add_parser("eval", help="mean ROUGE of predicted texts against justifications")
    p.add_argument("--input", required=True, help='JSON Lines of {"id", "text"}')
    p.add_argument("--reference", required=True, help="explanation corpus")
    _common(p)
    p.set_defaults(handler=cmd_explain_eval)

    # synth
    g = groups.add_parser("synth", help="synthetic datasets").add_subparsers(dest="action", metavar="ACTION", required=True)
    p = g.add_parser("scar", help="two Gaussians labelled completely at random")
    p.add_argument("--n", type=_positive_int, default=5000)
    p.add_argument("--n-test", type=int, default=2000)
    p.add_argument("--prior", type=float, default=0.5)
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--test-out")
    _common(p, report=False)
    p.set_defaults(handler=cmd_synth_scar)
    p = g.add_parser("drift", help="rotating two-class Gaussians")
    p.add_argument("--steps", type=_positive_int, default=2)
    p.add_argument("--n", type=_positive_int, default=100, help="instances per class and step")
    p.add_argument("--angle", type=float, default=30.0)
    p.add_argument("--seeds", type=_positive_int, default=10, help="labels per class in the last step")
    p.add_argument("--truth-out")
    _common(p, report=False)
    p.set_defaults(handler=cmd_synth_drift)
    p = g.add_parser("tokens", help="token sequences labelled by a planted linear model")
    p.add_argument("--n", type=_positive_int, default=500)
    p.add_argument("--vocab", type=_positive_int, default=50)
    p.add_argument("--classes", type=_positive_int, default=2)
    p.add_argument("--model-out")
    _common(p, report=False)
    p.set_defaults(handler=cmd_synth_tokens)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.seed = resolve_seed(args.seed)
    except UsageError as exc:
        parser.error(str(exc))
    try:
        args.handler(args)
    except VekError as exc:
        print(f"vek: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"vek: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
