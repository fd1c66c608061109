import numpy as np
import pytest

from vek.dataio import FeatureDataset, Instance
from vek.errors import DimensionError, InsufficientClassSamples, MissingClassSeed
from vek.numerics import Subspace, accuracy, nn1_classify, pca_fit
from vek.ssa import (
    UNKNOWN,
    align_semisupervised,
    align_sequence,
    align_unsupervised,
    project_aligned,
    pseudo_label,
    transform_source,
)
from vek.synth import drift, rotation


def orthonormal(p, d, rng):
    q, _ = np.linalg.qr(rng.normal(size=(p, d)))
    return q


def subspace(components):
    return Subspace(components, np.ones(components.shape[1]), np.zeros(components.shape[0]))


def labelled(rows, labels, prefix="s"):
    return FeatureDataset(
        tuple(
            Instance(f"{prefix}{i:03d}", features=tuple(r), label=None if l == UNKNOWN else int(l))
            for i, (r, l) in enumerate(zip(rows, labels))
        )
    )


class TestUnsupervised:
    def test_identity(self):
        c = orthonormal(5, 3, np.random.default_rng(0))
        np.testing.assert_allclose(align_unsupervised(subspace(c), subspace(c)).M, np.eye(3), atol=1e-12)

    def test_rotation_recovery(self):
        rng = np.random.default_rng(1)
        c = orthonormal(4, 2, rng)
        r = rotation(37.0)
        np.testing.assert_allclose(align_unsupervised(subspace(c), subspace(c @ r)).M, r, atol=1e-12)

    def test_local_optimality(self):
        rng = np.random.default_rng(2)
        cs, ct = orthonormal(6, 3, rng), orthonormal(6, 3, rng)
        m = align_unsupervised(subspace(cs), subspace(ct)).M
        best = np.linalg.norm(cs @ m - ct)
        for _ in range(100):
            delta = rng.normal(scale=1e-3, size=m.shape)
            assert best <= np.linalg.norm(cs @ (m + delta) - ct)

    def test_matches_least_squares(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            cs, ct = orthonormal(7, 3, rng), orthonormal(7, 3, rng)
            m_ls, *_ = np.linalg.lstsq(cs, ct, rcond=None)
            assert np.abs(align_unsupervised(subspace(cs), subspace(ct)).M - m_ls).max() <= 1e-8

    def test_shape_mismatch(self):
        rng = np.random.default_rng(4)
        with pytest.raises(DimensionError):
            align_unsupervised(subspace(orthonormal(4, 2, rng)), subspace(orthonormal(4, 3, rng)))

    def test_self_alignment_is_identity_on_coordinates(self):
        x = np.random.default_rng(5).normal(size=(50, 4))
        sub = pca_fit(x, 2)
        src, tgt = project_aligned(x, x, align_unsupervised(sub, sub))
        np.testing.assert_allclose(src, tgt, atol=1e-8)
        np.testing.assert_allclose(tgt, sub.project(x))

    def test_projection_dimension_check(self):
        sub = pca_fit(np.random.default_rng(6).normal(size=(10, 3)), 2)
        with pytest.raises(DimensionError):
            project_aligned(np.zeros((2, 4)), np.zeros((2, 3)), align_unsupervised(sub, sub))

    def test_aligned_beats_raw_on_rotated_pair(self):
        # two classes along the first axis; the target is rotated by 40 degrees
        # within the dominant plane and shifted, so raw 1-NN is near chance
        def draw(rng, n=100):
            y = np.repeat([0, 1], n)
            x = np.column_stack(
                [np.where(y == 1, 3.0, -3.0) + rng.normal(size=2 * n), 1.5 * rng.normal(size=2 * n), 0.2 * rng.normal(size=2 * n)]
            )
            return x, y

        turn = np.eye(3)
        turn[:2, :2] = rotation(40.0)
        wins = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            xs, ys = draw(rng)
            xt, yt = draw(rng)
            xt = xt @ turn.T + [4.0, -3.0, 5.0]
            raw = accuracy(yt, nn1_classify(xs, ys, xt))
            a_src, a_tgt = project_aligned(xs, xt, align_unsupervised(pca_fit(xs, 2), pca_fit(xt, 2)))
            wins += accuracy(yt, nn1_classify(a_src, ys, a_tgt)) > raw
        assert wins == 20


class TestPseudoLabel:
    def test_seeds_dominate(self):
        x = np.random.default_rng(7).normal(size=(10, 2))
        y = np.arange(10) % 2
        np.testing.assert_array_equal(pseudo_label(x, y), y)

    def test_nearest_seed(self):
        x = np.array([[0.0], [10.0], [1.0], [9.0]])
        np.testing.assert_array_equal(pseudo_label(x, [0, 1, UNKNOWN, UNKNOWN]), [0, 1, 0, 1])


@pytest.fixture(scope="module")
def pair():
    data = drift(n_steps=2, seed=0)
    return data, align_semisupervised(*data.steps, d=2)


class TestSemiSupervised:
    def test_centering(self, pair):
        _, res = pair
        for c in (0, 1):
            np.testing.assert_allclose(
                res.source_coords[res.source_labels == c].mean(0),
                res.target_coords[res.target_labels == c].mean(0),
                atol=1e-9,
            )

    def test_labels_unchanged(self, pair):
        data, res = pair
        np.testing.assert_array_equal(res.source_labels, data.steps[0].labels())
        seeds = res.target_seed_mask
        np.testing.assert_array_equal(res.target_labels[seeds], data.steps[1].labels()[seeds])

    def test_map_structure(self, pair):
        _, res = pair
        assert res.map.semi_supervised
        assert set(res.map.per_class) == {0, 1}
        assert res.map.M.shape == (2, 2)
        for c in (0, 1):
            assert np.all(np.isfinite(res.map.per_class[c].offset))

    def test_transform_source_replays(self, pair):
        data, res = pair
        np.testing.assert_allclose(
            transform_source(res, data.steps[0].features(), res.source_labels), res.source_coords
        )

    def test_missing_seed(self):
        rng = np.random.default_rng(8)
        src = labelled(rng.normal(size=(20, 2)), np.arange(20) % 2)
        tgt = labelled(rng.normal(size=(20, 2)), [0] + [UNKNOWN] * 19, "t")
        with pytest.raises(MissingClassSeed):
            align_semisupervised(src, tgt, d=1)

    def test_insufficient_samples(self):
        rng = np.random.default_rng(9)
        src = labelled(rng.normal(size=(20, 3)), [0] * 18 + [1] * 2)
        tgt = labelled(rng.normal(size=(20, 3)), [0, 1] + [UNKNOWN] * 18, "t")
        with pytest.raises(InsufficientClassSamples):
            align_semisupervised(src, tgt, d=2)

    def test_clusters_are_deterministic(self):
        data = drift(n_steps=2, n_per_class=150, seed=2)
        a = align_semisupervised(*data.steps, d=2, use_clusters=True, seed=4)
        b = align_semisupervised(*data.steps, d=2, use_clusters=True, seed=4)
        np.testing.assert_array_equal(a.source_coords, b.source_coords)
        assert a.cells == b.cells
        assert any(isinstance(cell, tuple) for cell in a.cells)

    def test_gain_over_no_alignment(self):
        gains = []
        for seed in range(5):
            data = drift(n_steps=2, seed=seed)
            src, tgt = data.steps
            seeds = tgt.labels() != UNKNOWN
            truth = data.truth[1]
            xs, xt = src.features(), tgt.features()
            ref = np.vstack([xs, xt[seeds]])
            rl = np.concatenate([src.labels(), truth[seeds]])
            base = accuracy(truth[~seeds], nn1_classify(ref, rl, xt[~seeds]))
            res = align_semisupervised(src, tgt, d=2)
            ref = np.vstack([res.source_coords, res.target_coords[seeds]])
            gains.append(accuracy(truth[~seeds], nn1_classify(ref, rl, res.target_coords[~seeds])) - base)
        assert np.mean(gains) >= 0.10


class TestSequence:
    def test_two_steps_match_single_call(self):
        data = drift(n_steps=2, seed=3)
        seq = align_sequence(list(data.steps), d=2)
        single = align_semisupervised(*data.steps, d=2)
        np.testing.assert_allclose(seq.coords[0], single.source_coords)
        np.testing.assert_allclose(seq.coords[1], single.target_coords)
        np.testing.assert_array_equal(seq.labels[1], single.target_labels)
        assert seq.tree == (((0, 1),),)

    def test_three_step_tree(self):
        data = drift(n_steps=3, seed=4)
        seq = align_sequence(list(data.steps), d=2)
        assert seq.tree == (((0, 1), (1, 2)), ((0, 2),))
        assert [c.shape for c in seq.coords] == [(200, 2)] * 3

    def test_known_mask_and_labels(self):
        data = drift(n_steps=4, seed=5)
        seq = align_sequence(list(data.steps), d=2)
        for t in range(3):
            assert seq.known_mask[t].all()
            np.testing.assert_array_equal(seq.labels[t], data.truth[t])
        assert seq.known_mask[3].sum() == 20

    def test_deterministic(self):
        data = drift(n_steps=4, seed=6)
        a = align_sequence(list(data.steps), d=2, seed=1)
        b = align_sequence(list(data.steps), d=2, seed=1)
        for x, y in zip(a.coords, b.coords):
            np.testing.assert_array_equal(x, y)

    def test_needs_two_steps(self):
        with pytest.raises(DimensionError):
            align_sequence([drift(n_steps=1).steps[0]])
