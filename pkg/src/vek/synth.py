"""Synthetic data with known generative truth.

These generators back the acceptance checks and the ``synth`` CLI commands,
so every pipeline can be exercised without external corpora.
"""

from dataclasses import dataclass

import numpy as np

from .dataio import FeatureDataset, Instance
from .numerics import LinearProbModel


@dataclass(frozen=True)
class ScarData:
    train: FeatureDataset
    test: FeatureDataset
    true_prior: float
    true_c: float


def scar(n=5000, n_test=2000, prior=0.5, c=0.5, separation=3.0, seed=13):
    """Two isotropic 2-D Gaussians under the SCAR labelling mechanism.

    Positives are centred at ``(+separation, 0)``, negatives at
    ``(-separation, 0)``. Each positive is labelled with probability ``c``.
    Training instances carry ``pu_flag`` plus their true ``label`` (ignored by
    the PU pipeline); test instances carry only the true label.
    """
    rng = np.random.default_rng(seed)

    def draw(count, prefix, with_flags):
        y = (rng.random(count) < prior).astype(int)
        x = rng.normal(size=(count, 2))
        x[:, 0] += np.where(y == 1, separation, -separation)
        labelled = (y == 1) & (rng.random(count) < c)
        out = []
        for i in range(count):
            out.append(
                Instance(
                    id=f"{prefix}{i:05d}",
                    features=(float(x[i, 0]), float(x[i, 1])),
                    label=int(y[i]),
                    pu_flag=("labelled" if labelled[i] else "unlabelled") if with_flags else None,
                )
            )
        return FeatureDataset(tuple(out), num_classes=2)

    train = draw(n, "tr", True)
    test = draw(n_test, "te", False) if n_test else FeatureDataset((), num_classes=2)
    return ScarData(train=train, test=test, true_prior=prior, true_c=c)


def rotation(angle_deg):
    a = np.deg2rad(angle_deg)
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


@dataclass(frozen=True)
class DriftData:
    steps: tuple
    truth: tuple


def drift(
    n_steps=2,
    n_per_class=100,
    angle=30.0,
    seeds_per_class=10,
    radius=4.0,
    class_angle=30.0,
    spread=(1.2, 0.4),
    seed=13,
):
    """Two elongated Gaussian classes that rotate about the origin over time.

    Class 0 is centred at angle 0 and class 1 at ``class_angle`` on a circle
    of ``radius``; each class is stretched along its radial direction. Step
    ``t`` rotates the whole configuration by ``t * angle`` degrees. All steps
    but the last are fully labelled; the last keeps ``seeds_per_class``
    labels per class. ``truth`` holds the full label vector of every step.
    """
    rng = np.random.default_rng(seed)
    steps, truth = [], []
    cov_base = np.diag(np.square(spread))
    for t in range(n_steps):
        rot_t = rotation(t * angle)
        xs, ys = [], []
        for cls, theta in enumerate((0.0, class_angle)):
            r = rotation(theta)
            mean = rot_t @ r @ np.array([radius, 0.0])
            cov = rot_t @ r @ cov_base @ r.T @ rot_t.T
            xs.append(rng.multivariate_normal(mean, cov, size=n_per_class))
            ys.append(np.full(n_per_class, cls))
        x = np.vstack(xs)
        y = np.concatenate(ys)
        order = rng.permutation(len(y))
        x, y = x[order], y[order]
        last = t == n_steps - 1
        keep = np.ones(len(y), dtype=bool)
        if last:
            keep[:] = False
            for cls in (0, 1):
                keep[np.flatnonzero(y == cls)[:seeds_per_class]] = True
        instances = tuple(
            Instance(
                id=f"t{t}-{i:04d}",
                features=(float(x[i, 0]), float(x[i, 1])),
                label=int(y[i]) if keep[i] else None,
                timestep=t,
            )
            for i in range(len(y))
        )
        steps.append(FeatureDataset(instances, num_classes=2))
        truth.append(y)
    return DriftData(steps=tuple(steps), truth=tuple(truth))


@dataclass(frozen=True)
class PlantedTokens:
    dataset: FeatureDataset
    vocab: tuple
    model: LinearProbModel


def planted_tokens(vocab_size=50, n=500, min_len=8, max_len=20, num_classes=2, scale=1.0, seed=13):
    """Token sequences labelled by a random linear bag-of-tokens model.

    Gold labels are the planted model's argmax, so the unmasked model is
    perfectly accurate.
    """
    rng = np.random.default_rng(seed)
    vocab = tuple(f"w{j:02d}" for j in range(vocab_size))
    weights = rng.normal(0.0, scale, size=(num_classes, vocab_size))
    bias = np.zeros(num_classes)
    model = LinearProbModel(weights=weights, bias=bias)
    instances = []
    for i in range(n):
        length = int(rng.integers(min_len, max_len + 1))
        idx = rng.integers(0, vocab_size, size=length)
        counts = np.bincount(idx, minlength=vocab_size)
        label = int(np.argmax(weights @ counts + bias))
        instances.append(Instance(id=f"d{i:04d}", tokens=tuple(vocab[j] for j in idx), label=label))
    return PlantedTokens(dataset=FeatureDataset(tuple(instances), num_classes=num_classes), vocab=vocab, model=model)
