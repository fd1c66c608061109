"""Drive every CLI subcommand over small generated inputs.

``prepare_inputs`` writes one shared input directory. ``run_all`` then runs
each subcommand from inside a run directory using relative paths only, so two
runs in different directories must produce byte-identical files.
"""

import json
import os
from contextlib import contextmanager
from pathlib import Path

import numpy as np

import oracles
from vek import dataio
from vek.cli import main
from vek.dataio import ConfidenceEntry, ExplainRecord
from vek.xdiag import TokenInstance
from vek.xdiag.adapters import adapter_from_json, random_init_adapter


@contextmanager
def working_directory(path):
    previous = os.getcwd()
    os.chdir(path)
    try:
        yield
    finally:
        os.chdir(previous)


def vek(*argv):
    code = main([str(a) for a in argv])
    if code != 0:
        raise RuntimeError(f"vek {' '.join(map(str, argv))} exited with {code}")


def prepare_inputs(root):
    """Write synthetic inputs for every subcommand into ``root``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    with working_directory(root):
        vek("synth", "scar", "--n", 600, "--n-test", 200, "--out", "scar.jsonl", "--test-out", "scar_test.jsonl", "--seed", 1)
        vek("synth", "drift", "--steps", 3, "--n", 60, "--out", "drift.jsonl", "--truth-out", "drift_truth.jsonl", "--seed", 2)
        vek("synth", "tokens", "--n", 80, "--vocab", 20, "--out", "tokens.jsonl", "--model-out", "model.json", "--seed", 3)

        data = dataio.load_dataset("tokens.jsonl", schema="tokens")
        planted = adapter_from_json(json.loads(Path("model.json").read_text()))
        other = random_init_adapter(planted.vocab, 2, seed=4, name="random")
        index = {w: i for i, w in enumerate(planted.vocab)}
        w = planted.model.weights

        masks, confidences, activations = {}, {}, {}
        for inst in data:
            ti = TokenInstance.from_instance(inst)
            gap = np.array([w[inst.label, index[t]] - w[1 - inst.label, index[t]] for t in inst.tokens])
            masks[inst.id] = (gap > 0).astype(int)
            dist = planted.predict_distribution(ti)
            cls = int(np.argmax(dist))
            confidences[inst.id] = ConfidenceEntry(cls, float(dist[cls]))
            for adapter in (planted, other):
                activations[(adapter.name, inst.id)] = adapter.activation_summary(ti)
        dataio.write_rationales(masks, "rationales.jsonl")
        dataio.write_confidences(confidences, "confidences.jsonl")
        dataio.write_activations(activations, "activations.jsonl")
        dataio.write_activations(
            {key: v for key, v in activations.items() if key[0] == "planted"}, "activations_planted.jsonl"
        )

        rng = np.random.default_rng(5)
        records = {}
        for k in range(12):
            sentences, justification = oracles.random_document(rng)
            records[f"doc{k:02d}"] = ExplainRecord(f"doc{k:02d}", tuple(sentences), justification)
        dataio.write_explain_corpus(records, "corpus.jsonl")
    return root


def commands(inp):
    """Argument vectors covering every subcommand; ``inp`` resolves input names."""
    return [
        ("synth", "scar", "--n", 300, "--n-test", 100, "--out", "s_scar.jsonl", "--test-out", "s_scar_test.jsonl"),
        ("synth", "drift", "--steps", 2, "--out", "s_drift.jsonl", "--truth-out", "s_drift_truth.jsonl"),
        ("synth", "tokens", "--n", 40, "--out", "s_tokens.jsonl", "--model-out", "s_model.json"),
        ("pu", "fit", "--mode", "puc", "--input", inp("scar.jsonl"), "--test", inp("scar_test.jsonl"), "--out", "pu_fit.json", "--seed", 7),
        ("pu", "fit", "--mode", "pn", "--input", inp("scar.jsonl"), "--out", "pu_fit_pn.json"),
        ("pu", "convert", "--input", inp("scar.jsonl"), "--out", "pu_convert.json", "--dataset-out", "converted.jsonl"),
        ("ssa", "align", "--input", "s_drift.jsonl", "--truth", "s_drift_truth.jsonl", "--use-clusters", "--k", 3, "--out", "ssa_align.json"),
        ("ssa", "sequence", "--input", inp("drift.jsonl"), "--truth", inp("drift_truth.jsonl"), "--classifier", "linear", "--out", "ssa_sequence.json"),
        ("diag", "saliency", "--input", inp("tokens.jsonl"), "--model", inp("model.json"), "--method", "occlusion", "--out", "sal_planted.jsonl"),
        ("diag", "saliency", "--input", inp("tokens.jsonl"), "--method", "shapley", "--samples", 5, "--out", "sal_random.jsonl"),
        ("diag", "map", "--input", inp("tokens.jsonl"), "--saliency", "sal_planted.jsonl", "--rationales", inp("rationales.jsonl"), "--out", "diag_map.json"),
        ("diag", "confidence", "--input", inp("tokens.jsonl"), "--saliency", "sal_planted.jsonl", "--confidences", inp("confidences.jsonl"), "--upsample", "--out", "diag_confidence.json"),
        ("diag", "faithfulness", "--input", inp("tokens.jsonl"), "--saliency", "sal_planted.jsonl", "--model", inp("model.json"), "--out", "diag_faithfulness.json"),
        ("diag", "rationale", "--input", inp("tokens.jsonl"), "--activations", inp("activations.jsonl"), "--saliency", "planted=sal_planted.jsonl", "--saliency", "random=sal_random.jsonl", "--out", "diag_rationale.json"),
        ("diag", "dataset", "--input", inp("tokens.jsonl"), "--saliency", "sal_planted.jsonl", "--model", inp("model.json"), "--activations", inp("activations_planted.jsonl"), "--n-overlap", 200, "--n-random", 200, "--out", "diag_dataset.json"),
        ("explain", "oracle", "--input", inp("corpus.jsonl"), "--force-k", "--texts-out", "oracle_texts.jsonl", "--out", "explain_oracle.json"),
        ("explain", "oracle", "--input", inp("corpus.jsonl"), "--method", "lead", "--out", "explain_lead.json"),
        ("explain", "rouge", "--candidate", "the cat sat", "--reference", "the cat ran", "--out", "explain_rouge.json"),
        ("explain", "eval", "--input", "oracle_texts.jsonl", "--reference", inp("corpus.jsonl"), "--out", "explain_eval.json"),
    ]


def run_all(inputs, run_dir):
    """Run every subcommand; return the output file names in a stable order."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    rel = os.path.relpath(Path(inputs), run_dir)
    with working_directory(run_dir):
        for argv in commands(lambda name: os.path.join(rel, name)):
            vek(*argv)
    return sorted(p.name for p in run_dir.iterdir())

