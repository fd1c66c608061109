"""Sequential subspace alignment between time steps or domains.

Unsupervised alignment maps the source principal components onto the target
components with the closed-form ``M = C_S^T C_T``. Semi-supervised alignment
does the same per class (optionally per ``(class, cluster)`` cell) after
pseudo-labelling the target by 1-nearest-neighbour from a few labelled
seeds, and centres every transformed source class on its target class.

All coordinates produced here live in the target's global ``d``-dimensional
PCA basis.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .dataio import FeatureDataset
from .errors import (
    DegenerateData,
    DimensionError,
    InsufficientClassSamples,
    MissingClassSeed,
)
from .numerics import Subspace, kmeans_fit, nn1_classify, pca_fit

UNKNOWN = -1


@dataclass(frozen=True)
class ClassAlignment:
    """Alignment of one class (or class/cluster cell).

    ``projection`` maps mean-centred source rows straight to output
    coordinates: ``C_S,k @ M_k @ C_T,k^T @ C_T``. ``offset`` is then added so
    the class mean matches the target class mean.
    """

    M: np.ndarray
    source_subspace: Subspace
    target_subspace: Subspace
    projection: np.ndarray
    offset: np.ndarray
    n_source: int
    n_target: int

    def transform(self, rows):
        return (np.asarray(rows, dtype=np.float64) - self.source_subspace.mean) @ self.projection + self.offset


@dataclass(frozen=True)
class AlignmentMap:
    M: np.ndarray
    source_subspace: Subspace
    target_subspace: Subspace
    per_class: dict = None

    @property
    def d(self):
        return self.M.shape[0]

    @property
    def semi_supervised(self):
        return self.per_class is not None


def align_unsupervised(source_subspace, target_subspace):
    """Closed-form alignment ``M = C_S^T C_T`` between two subspaces."""
    cs, ct = source_subspace.components, target_subspace.components
    if cs.shape != ct.shape:
        raise DimensionError(f"subspace shapes differ: {cs.shape} vs {ct.shape}")
    return AlignmentMap(M=cs.T @ ct, source_subspace=source_subspace, target_subspace=target_subspace)


def project_aligned(source, target, alignment):
    """Source rows mapped through ``C_S M``; target rows onto ``C_T``."""
    xs = np.asarray(source, dtype=np.float64)
    xt = np.asarray(target, dtype=np.float64)
    p = alignment.source_subspace.p
    if xs.shape[-1] != p or xt.shape[-1] != alignment.target_subspace.p:
        raise DimensionError("data dimensionality does not match the subspaces")
    src = (xs - alignment.source_subspace.mean) @ alignment.source_subspace.components @ alignment.M
    tgt = alignment.target_subspace.project(xt)
    return src, tgt


# --------------------------------------------------------------------------
# Semi-supervised alignment
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SemiSupervisedAlignment:
    """Result of :func:`align_semisupervised`.

    ``cells`` maps every source row to the key of the alignment that moved it
    (a class id, or a ``(class, cluster)`` pair when clusters were used and
    the cell was large enough).
    """

    map: AlignmentMap
    source_coords: np.ndarray
    target_coords: np.ndarray
    source_labels: np.ndarray
    target_labels: np.ndarray
    target_seed_mask: np.ndarray
    cells: tuple
    source_ids: tuple = ()
    target_ids: tuple = ()
    fallback_cells: tuple = field(default=())


def default_d(*matrices, cap=10):
    return max(1, min([cap] + [m.shape[1] for m in matrices] + [len(m) - 1 for m in matrices]))


def pseudo_label(target, known):
    """Fill unknown (``-1``) labels by 1-NN from the known target rows."""
    known = np.asarray(known, dtype=np.int64)
    out = known.copy()
    seeds = known != UNKNOWN
    if (~seeds).any():
        out[~seeds] = nn1_classify(target[seeds], known[seeds], target[~seeds])
    return out


def _fit_cell(xs, xt, d, target_basis, target_coords):
    cs = pca_fit(xs, d)
    ct = pca_fit(xt, d)
    m = cs.components.T @ ct.components
    projection = cs.components @ m @ ct.components.T @ target_basis.components
    moved = (xs - cs.mean) @ projection
    offset = target_coords.mean(axis=0) - moved.mean(axis=0)
    return ClassAlignment(
        M=m,
        source_subspace=cs,
        target_subspace=ct,
        projection=projection,
        offset=offset,
        n_source=len(xs),
        n_target=len(xt),
    )


def _semisupervised(xs, ys, xt, yt_known, d, source_clusters=None, target_clusters=None):
    xs = np.asarray(xs, dtype=np.float64)
    xt = np.asarray(xt, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.int64)
    yt_known = np.asarray(yt_known, dtype=np.int64)
    if xs.shape[1] != xt.shape[1]:
        raise DimensionError(f"source has {xs.shape[1]} features, target {xt.shape[1]}")
    if np.any(ys == UNKNOWN):
        raise DimensionError("every source row needs a label")
    classes = sorted(set(ys.tolist()))
    for c in classes:
        if not np.any(yt_known == c):
            raise MissingClassSeed(c)
    if d is None:
        d = default_d(xs, xt)
    needed = d + 1
    yt = pseudo_label(xt, yt_known)

    source_basis = pca_fit(xs, d)
    target_basis = pca_fit(xt, d)
    target_coords = target_basis.project(xt)
    global_map = align_unsupervised(source_basis, target_basis)

    per_class = {}
    for c in classes:
        ns = int(np.sum(ys == c))
        nt = int(np.sum(yt == c))
        for count in (ns, nt):
            if count < needed:
                raise InsufficientClassSamples(c, count, needed)
        per_class[c] = _fit_cell(xs[ys == c], xt[yt == c], d, target_basis, target_coords[yt == c])

    source_coords = np.empty((len(xs), d))
    cells = [None] * len(xs)
    fallback = []
    use_clusters = source_clusters is not None and target_clusters is not None
    for c in classes:
        s_mask = ys == c
        if not use_clusters:
            source_coords[s_mask] = per_class[c].transform(xs[s_mask])
            for i in np.flatnonzero(s_mask):
                cells[i] = c
            continue
        t_mask = yt == c
        for g in sorted(set(np.asarray(source_clusters)[s_mask].tolist())):
            sc = s_mask & (source_clusters == g)
            tc = t_mask & (target_clusters == g)
            key = (c, g)
            alignment = None
            if sc.sum() >= needed and tc.sum() >= needed:
                try:
                    alignment = _fit_cell(xs[sc], xt[tc], d, target_basis, target_coords[tc])
                except DegenerateData:
                    alignment = None
            if alignment is None:
                fallback.append(key)
                source_coords[sc] = per_class[c].transform(xs[sc])
                for i in np.flatnonzero(sc):
                    cells[i] = c
            else:
                per_class[key] = alignment
                source_coords[sc] = alignment.transform(xs[sc])
                for i in np.flatnonzero(sc):
                    cells[i] = key

    amap = AlignmentMap(
        M=global_map.M,
        source_subspace=source_basis,
        target_subspace=target_basis,
        per_class=per_class,
    )
    return amap, source_coords, target_coords, yt, tuple(cells), tuple(fallback)


def cluster_ids(target_rows, k, seed, *others):
    """k-means on ``target_rows``; other row sets get their nearest target centroid."""
    target_rows = np.asarray(target_rows, dtype=np.float64)
    fit = kmeans_fit(target_rows, min(k, len(target_rows)), seed)
    assigned = [np.argmin(cdist(np.asarray(o, dtype=np.float64), fit.centroids, "sqeuclidean"), axis=1) for o in others]
    return (fit.labels, *assigned)


def align_semisupervised(source, target, d=None, use_clusters=False, k_clusters=5, seed=13):
    """Per-class alignment of a labelled source onto a sparsely labelled target.

    Parameters
    ----------
    source : FeatureDataset
        Every instance must carry features and a label.
    target : FeatureDataset
        Instances with a label act as seeds; the rest are pseudo-labelled.
    d : int, optional
        Subspace dimensionality, default ``min(10, features, rows - 1)``.
    use_clusters : bool
        Align ``(class, k-means cluster)`` cells instead of classes. Clusters
        are fitted on the raw target features; source rows take the nearest
        target centroid. Cells with fewer than ``d + 1`` rows on either side
        fall back to their class alignment.
    """
    xs = source.features()
    ys = source.labels()
    xt = target.features()
    yt = target.labels()
    s_clusters = t_clusters = None
    if use_clusters:
        t_clusters, s_clusters = cluster_ids(xt, k_clusters, seed, xs)
    amap, src, tgt, pseudo, cells, fallback = _semisupervised(xs, ys, xt, yt, d, s_clusters, t_clusters)
    return SemiSupervisedAlignment(
        map=amap,
        source_coords=src,
        target_coords=tgt,
        source_labels=ys,
        target_labels=pseudo,
        target_seed_mask=yt != UNKNOWN,
        cells=cells,
        source_ids=tuple(source.ids),
        target_ids=tuple(target.ids),
        fallback_cells=fallback,
    )


def transform_source(alignment, rows, labels):
    """Apply the class-level maps of a semi-supervised alignment to new rows."""
    rows = np.asarray(rows, dtype=np.float64)
    labels = np.asarray(labels)
    out = np.empty((len(rows), alignment.map.d))
    for c in sorted(set(labels.tolist())):
        mask = labels == c
        out[mask] = alignment.map.per_class[c].transform(rows[mask])
    return out


# --------------------------------------------------------------------------
# Unbounded time: pyramid of adjacent joins
# --------------------------------------------------------------------------


@dataclass
class _Space:
    span: tuple
    members: list  # (step, row) pairs
    coords: np.ndarray
    known: np.ndarray
    carried: np.ndarray
    clusters: np.ndarray


@dataclass(frozen=True)
class SequenceAlignment:
    """Root-space coordinates for every instance of every step.

    ``tree`` lists, per level, the inclusive step spans of the joined spaces.
    """

    coords: tuple
    labels: tuple
    known_mask: tuple
    tree: tuple
    d: int

    def step(self, index):
        return self.coords[index], self.labels[index], self.known_mask[index]


def _join(source, target, d, use_clusters):
    s_clusters = source.clusters if use_clusters else None
    t_clusters = target.clusters if use_clusters else None
    _, src, tgt, pseudo, _, _ = _semisupervised(
        source.coords, source.carried, target.coords, target.known, d, s_clusters, t_clusters
    )
    in_target = set(target.members)
    keep = [i for i, m in enumerate(source.members) if m not in in_target]
    members = [source.members[i] for i in keep] + list(target.members)
    carried = np.concatenate([source.carried[keep], pseudo])
    known = np.concatenate([source.known[keep], target.known])
    clusters = np.concatenate([source.clusters[keep], target.clusters])
    coords = np.vstack([src[keep], tgt])
    return _Space(
        span=(source.span[0], target.span[1]),
        members=members,
        coords=coords,
        known=known,
        carried=carried,
        clusters=clusters,
    )


def align_sequence(steps, d=None, seed=13, k_clusters=5, cluster_deeper=True):
    """Align a sequence of time steps into one joint space.

    Adjacent steps are joined pairwise, then adjacent joint spaces are joined
    again, level by level, until one space remains (``n`` steps give
    ``n - 1`` levels). Each join is semi-supervised: the earlier space is
    the source and carries labels (given or propagated), the later space is
    the target whose known labels seed the pseudo-labelling. Joins above the
    first level also use k-means cell ids computed once on the raw features
    when ``cluster_deeper`` is set.

    Unlabelled instances in non-final steps are first pseudo-labelled by 1-NN
    from their own step's labels.
    """
    if len(steps) < 2:
        raise DimensionError("align_sequence needs at least two steps")
    raws = [s.features() if isinstance(s, FeatureDataset) else np.asarray(s[0]) for s in steps]
    knowns = [s.labels() if isinstance(s, FeatureDataset) else np.asarray(s[1]) for s in steps]
    if d is None:
        d = default_d(*raws)
    clusters = cluster_ids(raws[-1], k_clusters, seed, *raws)[1:]

    level = []
    for t, (raw, known) in enumerate(zip(raws, knowns)):
        carried = pseudo_label(raw, known) if t < len(steps) - 1 else known.copy()
        level.append(
            _Space(
                span=(t, t),
                members=[(t, i) for i in range(len(raw))],
                coords=raw,
                known=known.copy(),
                carried=carried,
                clusters=np.asarray(clusters[t]),
            )
        )

    tree = []
    depth = 0
    while len(level) > 1:
        use_clusters = cluster_deeper and depth > 0
        level = [_join(level[i], level[i + 1], d, use_clusters) for i in range(len(level) - 1)]
        tree.append(tuple(sp.span for sp in level))
        depth += 1

    root = level[0]
    coords = [np.empty((len(r), d)) for r in raws]
    labels = [np.empty(len(r), dtype=np.int64) for r in raws]
    known_mask = [np.zeros(len(r), dtype=bool) for r in raws]
    for (t, i), row, lab, kn in zip(root.members, root.coords, root.carried, root.known):
        coords[t][i] = row
        labels[t][i] = lab
        known_mask[t][i] = kn != UNKNOWN
    return SequenceAlignment(
        coords=tuple(coords),
        labels=tuple(labels),
        known_mask=tuple(known_mask),
        tree=tuple(tree),
        d=d,
    )
