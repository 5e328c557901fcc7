"""Multi-label image annotation by nearest neighbours in a reduced space.

Dataset model over a fixed concept vocabulary, deterministic prune/split
protocol, a voting KNN annotator that emits 5 keywords per image, and
ranking-based Average Precision aggregated over the test set.
"""

from dataclasses import dataclass, field

import numpy as np

from . import baselines, diffusion_maps
from .numerics import as_data_matrix, seeded_rng

TOP_K_KEYWORDS = 5


@dataclass(eq=False)
class LabeledDataset:
    """Feature vectors paired with per-image concept label sets."""

    ids: list
    features: np.ndarray
    labels: list
    vocabulary: list

    def __post_init__(self):
        self.features = as_data_matrix(self.features, name="features")
        if not (len(self.ids) == self.features.shape[0] == len(self.labels)):
            raise ValueError(
                f"inconsistent dataset sizes: {len(self.ids)} ids, "
                f"{self.features.shape[0]} feature rows, {len(self.labels)} label sets"
            )
        v = len(self.vocabulary)
        self.labels = [frozenset(int(c) for c in ls) for ls in self.labels]
        for i, ls in enumerate(self.labels):
            for c in ls:
                if not 0 <= c < v:
                    raise ValueError(
                        f"image {self.ids[i]!r} has concept index {c} outside [0, {v})"
                    )

    @property
    def n(self):
        return self.features.shape[0]

    def subset(self, indices):
        return LabeledDataset(
            ids=[self.ids[i] for i in indices],
            features=self.features[list(indices)],
            labels=[self.labels[i] for i in indices],
            vocabulary=self.vocabulary,
        )

    def label_counts(self):
        """Training frequency of each concept (used for vote tie-breaking)."""
        counts = np.zeros(len(self.vocabulary), dtype=np.int64)
        for ls in self.labels:
            for c in ls:
                counts[c] += 1
        return counts


@dataclass(eq=False)
class SplitDataset:
    """Disjoint train/test halves produced by :func:`prune_and_split`."""

    train: LabeledDataset
    test: LabeledDataset
    seed: int
    prune_min: int


def prune_and_split(data, prune_min, seed):
    """Drop sparsely labeled images, shuffle, and split half/half.

    Images with fewer than ``prune_min`` labels are removed before the
    seeded shuffle; the halves differ in size by at most one (train gets
    the extra image when the count is odd).
    """
    kept = [i for i in range(data.n) if len(data.labels[i]) >= prune_min]
    if len(kept) < 2:
        raise ValueError(
            f"pruning with prune_min={prune_min} left {len(kept)} of {data.n} "
            f"images; need at least 2"
        )
    rng = seeded_rng(seed)
    order = rng.permutation(len(kept))
    shuffled = [kept[i] for i in order]
    n_train = (len(shuffled) + 1) // 2
    return SplitDataset(
        train=data.subset(shuffled[:n_train]),
        test=data.subset(shuffled[n_train:]),
        seed=int(seed),
        prune_min=int(prune_min),
    )


def knn_annotate(train, query, k, label_counts=None):
    """Rank the vocabulary for one query by votes of its k nearest images.

    Returns a list of (concept index, vote count) covering the whole
    vocabulary, ordered by votes descending, then global training frequency
    descending, then concept index ascending. Neighbour distance ties at
    the k-th position keep the lower row index.
    """
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (train.features.shape[1],):
        raise ValueError(
            f"query dimension {query.shape} does not match training "
            f"features ({train.features.shape[1]},)"
        )
    if not 1 <= k <= train.n:
        raise ValueError(f"k must be in [1, {train.n}], got {k}")
    diff = train.features - query
    sq = np.einsum("ij,ij->i", diff, diff)
    nearest = np.argsort(sq, kind="stable")[:k]
    votes = np.zeros(len(train.vocabulary), dtype=np.int64)
    for idx in nearest:
        for c in train.labels[idx]:
            votes[c] += 1
    if label_counts is None:
        label_counts = train.label_counts()
    order = np.lexsort((np.arange(votes.size), -label_counts, -votes))
    return [(int(c), int(votes[c])) for c in order]


def average_precision(ranked, truth):
    """Ranking-based Average Precision of one image's label ranking.

    For each true label at rank r, the precision among the top r ranks;
    averaged over the true labels. 1.0 when every true label precedes every
    false one. ``ranked`` may hold concept indices or (index, score) pairs
    and must cover all of ``truth``.
    """
    if not truth:
        raise ValueError("average precision is undefined for an empty truth set")
    labels = [item[0] if isinstance(item, tuple) else int(item) for item in ranked]
    rank_of = {}
    for pos, lab in enumerate(labels, start=1):
        if lab not in rank_of:
            rank_of[lab] = pos
    missing = [lab for lab in truth if lab not in rank_of]
    if missing:
        raise ValueError(f"ranking does not cover truth labels {sorted(missing)}")
    ranks = sorted(rank_of[lab] for lab in truth)
    return sum((hits / rank) for hits, rank in enumerate(ranks, start=1)) / len(ranks)


@dataclass(frozen=True)
class ReducerSpec:
    """Which reducer to run ahead of annotation, and with what parameters."""

    method: str
    d: int = 0
    sigma: float = 10.0
    t: int = 1
    k_nn: int = baselines.DEFAULT_K_NN
    lle_reg: float = baselines.DEFAULT_LLE_REG
    lem_sigma: float | None = None
    oos: str = "transductive"

    def __post_init__(self):
        if self.method.lower() not in ("dm", "pca", "lle", "lem", "identity"):
            raise ValueError(f"unknown reducer method {self.method!r}")
        if self.oos not in ("transductive", "nystrom"):
            raise ValueError(f"unknown out-of-sample mode {self.oos!r}")


def run_reducer(spec, data):
    """Dispatch a ReducerSpec to the matching embedding routine."""
    method = spec.method.lower()
    if method == "identity":
        X = as_data_matrix(data)
        return diffusion_maps.Embedding(
            coords=X.copy(),
            eigenvalues=np.zeros(0),
            method="identity",
            config={"method": "identity"},
        )
    if method == "dm":
        return diffusion_maps.embed(
            data, diffusion_maps.DmConfig(sigma=spec.sigma, d=spec.d, t=spec.t)
        )
    if method == "pca":
        return baselines.embed_pca(data, spec.d)
    config = baselines.BaselineConfig(
        method=method,
        d=spec.d,
        k_nn=spec.k_nn,
        lle_reg=spec.lle_reg,
        lem_sigma=spec.lem_sigma,
    )
    if method == "lle":
        return baselines.embed_lle(data, config)
    return baselines.embed_lem(data, config)


def _reduce_split(split, spec):
    """Reduced train/test coordinate blocks for one reducer spec.

    The default is transductive: one embedding fit on train and test
    jointly, mirroring pipelines in which reduction precedes the split.
    'nystrom' fits on the training half only and maps test points through
    the out-of-sample extension (diffusion maps) or the learned projection
    (PCA); LLE and LEM have no such map and are rejected in that mode.
    """
    method = spec.method.lower()
    n_train = split.train.n
    if method == "identity":
        return split.train.features, split.test.features
    if spec.oos == "transductive":
        stacked = np.vstack([split.train.features, split.test.features])
        emb = run_reducer(spec, stacked)
        return emb.coords[:n_train], emb.coords[n_train:]
    if method == "dm":
        emb = run_reducer(spec, split.train.features)
        ext = diffusion_maps.nystrom_extend(emb, split.train.features, split.test.features)
        return emb.coords, ext.coords
    if method == "pca":
        mean, components, _ = baselines.pca_fit(split.train.features, spec.d)
        return (
            (split.train.features - mean) @ components,
            (split.test.features - mean) @ components,
        )
    raise ValueError(f"method {spec.method!r} has no out-of-sample extension")


@dataclass(eq=False)
class AnnotationReport:
    """Per-image rankings and keyword sets plus aggregate retrieval scores.

    ``ap_values`` holds None for images whose ground truth is empty; those
    images are excluded from all three aggregate means but still counted in
    ``n_test``.
    """

    ids: list
    rankings: list
    top_keywords: list
    ap_values: list
    mean_ap: float
    precision_at_5: float
    recall_at_5: float
    n_train: int
    n_test: int
    n_scored: int
    config: dict = field(default_factory=dict)


def _annotate_block(train_reduced, test_reduced, split, k, config_echo):
    reduced_train = LabeledDataset(
        ids=split.train.ids,
        features=train_reduced,
        labels=split.train.labels,
        vocabulary=split.train.vocabulary,
    )
    counts = reduced_train.label_counts()
    top_n = min(TOP_K_KEYWORDS, len(split.train.vocabulary))
    rankings, keywords, ap_values = [], [], []
    precisions, recalls = [], []
    for row in range(split.test.n):
        ranking = knn_annotate(reduced_train, test_reduced[row], k, label_counts=counts)
        top = [c for c, _ in ranking[:top_n]]
        truth = split.test.labels[row]
        rankings.append(ranking)
        keywords.append(top)
        if truth:
            ap_values.append(average_precision(ranking, truth))
            hits = len(truth.intersection(top))
            precisions.append(hits / top_n)
            recalls.append(hits / len(truth))
        else:
            ap_values.append(None)
    scored = [v for v in ap_values if v is not None]
    return AnnotationReport(
        ids=list(split.test.ids),
        rankings=rankings,
        top_keywords=keywords,
        ap_values=ap_values,
        mean_ap=float(np.mean(scored)) if scored else 0.0,
        precision_at_5=float(np.mean(precisions)) if precisions else 0.0,
        recall_at_5=float(np.mean(recalls)) if recalls else 0.0,
        n_train=split.train.n,
        n_test=split.test.n,
        n_scored=len(scored),
        config=config_echo,
    )


def evaluate_pipeline(split, reducer, k):
    """Reduce, annotate every test image, and aggregate retrieval quality.

    ``reducer`` is a ReducerSpec; ``k`` is the neighbour count of the KNN
    annotator. Reduction failures propagate with the offending
    configuration attached.
    """
    if not 1 <= k <= split.train.n:
        raise ValueError(f"k must be in [1, {split.train.n}], got {k}")
    try:
        train_reduced, test_reduced = _reduce_split(split, reducer)
    except Exception as exc:
        raise RuntimeError(
            f"reduction failed for method={reducer.method} d={reducer.d}: {exc}"
        ) from exc
    echo = {
        "method": reducer.method.upper(),
        "d": reducer.d,
        "k": k,
        "oos": reducer.oos,
        "seed": split.seed,
        "prune_min": split.prune_min,
    }
    if reducer.method.lower() == "dm":
        echo.update({"sigma": reducer.sigma, "t": reducer.t})
    if reducer.method.lower() in ("lle", "lem"):
        echo.update({"k_nn": reducer.k_nn})
    return _annotate_block(train_reduced, test_reduced, split, k, echo)


# ---------------------------------------------------------------------------
# Label and vocabulary file formats


def read_vocabulary_file(path):
    """One concept name per line; the line number is the concept index."""
    vocabulary = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            name = line.strip()
            if not name:
                raise ValueError(f"{path}:{lineno}: empty concept name")
            vocabulary.append(name)
    if not vocabulary:
        raise ValueError(f"{path}: empty vocabulary")
    return vocabulary


def read_label_file(path, vocabulary_size):
    """Parse "<image-id> <concept-index> ..." lines into an id -> set map.

    An id with no indices is a valid empty-truth image. Indices outside the
    vocabulary raise with their line number.
    """
    labels = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            image_id = parts[0]
            try:
                concepts = frozenset(int(p) for p in parts[1:])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer concept index") from None
            for c in concepts:
                if not 0 <= c < vocabulary_size:
                    raise ValueError(
                        f"{path}:{lineno}: concept index {c} outside "
                        f"[0, {vocabulary_size})"
                    )
            if image_id in labels:
                raise ValueError(f"{path}:{lineno}: duplicate image id {image_id!r}")
            labels[image_id] = concepts
    if not labels:
        raise ValueError(f"{path}: no label lines found")
    return labels


def join_features_labels(ids, matrix, label_map, vocabulary):
    """Build a LabeledDataset from parallel feature and label inputs.

    Every feature id must appear in the label map and vice versa; up to 10
    missing ids are listed on failure.
    """
    missing = [i for i in ids if i not in label_map]
    if missing:
        shown = ", ".join(missing[:10])
        raise ValueError(f"{len(missing)} feature ids have no labels: {shown}")
    extra = sorted(set(label_map) - set(ids))
    if extra:
        shown = ", ".join(extra[:10])
        raise ValueError(f"{len(extra)} labeled ids have no features: {shown}")
    return LabeledDataset(
        ids=list(ids),
        features=matrix,
        labels=[label_map[i] for i in ids],
        vocabulary=list(vocabulary),
    )
