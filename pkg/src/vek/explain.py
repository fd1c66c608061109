"""ROUGE scoring and extractive explanation baselines.

Sentences are supplied pre-segmented; nothing here splits text into
sentences. Tokenization lowercases and keeps maximal runs of letters and
digits, so scores can drift slightly from other ROUGE packages.
"""

import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import IdMismatch, NoSentences

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text):
    return tuple(_TOKEN.findall(text.lower()))


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, overlap, n_candidate, n_reference):
        if n_candidate == 0 or n_reference == 0:
            return cls(0.0, 0.0, 0.0)
        p = overlap / n_candidate
        r = overlap / n_reference
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f)

    def as_tuple(self):
        return (self.precision, self.recall, self.f1)


def ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate, reference, n=2):
    """Clipped n-gram overlap between two token sequences."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = ngrams(tuple(candidate), n)
    ref = ngrams(tuple(reference), n)
    overlap = sum((cand & ref).values())
    return RougeScore.from_counts(overlap, sum(cand.values()), sum(ref.values()))


def lcs_length(a, b):
    if not a or not b:
        return 0
    # single-row DP over the shorter sequence
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference):
    candidate, reference = tuple(candidate), tuple(reference)
    return RougeScore.from_counts(lcs_length(candidate, reference), len(candidate), len(reference))


@dataclass(frozen=True)
class OracleSelection:
    """Selected sentence indices in document order plus the greedy trace.

    ``trace`` lists ``(index, rouge2_f1)`` in selection order, the score being
    that of the selection right after the index was added.
    """

    indices: tuple
    trace: tuple = ()

    def text(self, sentences):
        return " ".join(sentences[i] for i in self.indices)


def greedy_oracle(sentences, justification, k=4, force_k=False):
    """Greedily pick sentences that maximise ROUGE-2 F1 against ``justification``.

    Each step scores the concatenation, in document order, of the already
    chosen sentences plus one candidate. Selection stops after ``k`` picks or,
    unless ``force_k`` is set, once no candidate strictly improves the score.
    Ties go to the lowest index.
    """
    if not sentences:
        raise NoSentences("greedy oracle needs at least one sentence")
    if k < 1:
        raise ValueError("k must be >= 1")
    sent_tokens = [tokenize(s) for s in sentences]
    ref = tokenize(justification)
    chosen, trace = [], []
    best = 0.0
    while len(chosen) < min(k, len(sentences)):
        step_best, step_idx = -1.0, None
        for i in range(len(sentences)):
            if i in chosen:
                continue
            cand = [tok for j in sorted(chosen + [i]) for tok in sent_tokens[j]]
            score = rouge_n(cand, ref, 2).f1
            if score > step_best:
                step_best, step_idx = score, i
        if chosen and not force_k and step_best <= best:
            break
        chosen.append(step_idx)
        trace.append((step_idx, step_best))
        best = step_best
    return OracleSelection(indices=tuple(sorted(chosen)), trace=tuple(trace))


def lead_k(sentences, k=4):
    if not sentences:
        raise NoSentences("lead-k needs at least one sentence")
    return OracleSelection(indices=tuple(range(min(k, len(sentences)))))


def score_text(candidate, reference):
    """ROUGE-1, ROUGE-2 and ROUGE-L of two raw texts."""
    c, r = tokenize(candidate), tokenize(reference)
    return {"rouge1": rouge_n(c, r, 1), "rouge2": rouge_n(c, r, 2), "rougeL": rouge_l(c, r)}


def evaluate_explanations(predictions, references):
    """Mean ROUGE-1/2/L over instances matched by id.

    ``predictions`` and ``references`` map ids to texts. Means are plain
    arithmetic averages of per-instance precision, recall and F1.
    """
    if set(predictions) != set(references):
        missing = sorted(set(references) - set(predictions))
        extra = sorted(set(predictions) - set(references))
        raise IdMismatch(f"prediction ids do not match reference ids (missing {missing[:5]}, extra {extra[:5]})")
    if not references:
        raise IdMismatch("no instances to evaluate")
    per = {i: score_text(predictions[i], references[i]) for i in sorted(references)}
    means = {}
    for metric in ("rouge1", "rouge2", "rougeL"):
        vals = np.array([per[i][metric].as_tuple() for i in per])
        p, r, f = vals.mean(axis=0)
        means[metric] = {"precision": float(p), "recall": float(r), "f1": float(f)}
    return {"n_instances": len(per), "mean": means}
