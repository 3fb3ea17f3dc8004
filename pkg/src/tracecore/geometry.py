"""Representation geometry of full traces, cores, and removed steps.

Trace-level embeddings are means of step embeddings over the retained set,
its complement, or the whole trace; the necessity-weighted variant blends
steps by their leave-one-out weights. Group statistics cover compactness,
correctness separation (linear probe, kNN, silhouette, Davies-Bouldin),
and intrinsic dimensionality via the PCA participation ratio.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    ClassImbalance,
    CoincidentCentroids,
    DegenerateClustering,
    EmbedderError,
    EmptyInput,
    ZeroVariance,
    ZeroVector,
)
from .metrics import NecessityProfile
from .trace import Subset, Trace


class HashEmbedder:
    """Deterministic feature-hash embedder over character n-grams.

    A stand-in for model embeddings in tests and desk-scale runs: each
    n-gram is hashed to a signed bucket, and the accumulated vector is
    normalized to unit length. Identical text always maps to the same
    vector, across processes and platforms.
    """

    def __init__(self, dim: int = 64, ngram: int = 3):
        if dim < 1 or ngram < 1:
            raise ValueError("dim and ngram must be >= 1")
        self.dim = dim
        self.ngram = ngram

    def __call__(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        padded = f"\x02{text}\x03"
        n = self.ngram
        grams = [padded[i: i + n] for i in range(max(1, len(padded) - n + 1))]
        for gram in grams:
            digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
            value = int.from_bytes(digest, "big")
            bucket = value % self.dim
            sign = 1.0 if (value >> 63) & 1 else -1.0
            vec[bucket] += sign
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


def embed_steps(trace: Trace, embedder) -> np.ndarray:
    """One row per step; deterministic per embedder. Shape (T, d)."""
    rows = []
    width = None
    for step in trace.steps:
        try:
            vec = np.asarray(embedder(step.text), dtype=float)
        except Exception as exc:
            raise EmbedderError(f"trace {trace.id} step {step.index}: {exc}") from exc
        if vec.ndim != 1 or not np.all(np.isfinite(vec)):
            raise EmbedderError(
                f"trace {trace.id} step {step.index}: bad vector shape/values"
            )
        if width is None:
            width = vec.shape[0]
        elif vec.shape[0] != width:
            raise EmbedderError(f"trace {trace.id} step {step.index}: dim mismatch")
        rows.append(vec)
    return np.stack(rows)


@dataclass
class TraceEmbeddings:
    """Full / core / removed / necessity-weighted vectors for one trace.

    Empty groups get the fixed zero vector and a degeneracy flag; the
    necessity-weighted vector falls back to the full mean (flagged) when
    the profile is degenerate or absent. Flagged vectors are excluded from
    distance and cosine statistics downstream.
    """

    full: np.ndarray
    core: np.ndarray
    removed: np.ndarray
    necessity_weighted: np.ndarray
    degenerate_core: bool
    degenerate_removed: bool
    degenerate_necessity: bool


def trace_embeddings(step_vecs: np.ndarray, core: Subset,
                     profile: NecessityProfile | None = None) -> TraceEmbeddings:
    """Aggregate step vectors into the four trace-level views."""
    T, d = step_vecs.shape
    if core.trace_len != T:
        raise ValueError(f"subset trace_len {core.trace_len} != {T} step vectors")
    if profile is not None and len(profile) != T:
        raise ValueError("profile length disagrees with step vectors")

    zero = np.zeros(d)
    full = step_vecs.mean(axis=0)

    core_idx = list(core.indices)
    removed_idx = [t for t in range(T) if t not in set(core_idx)]

    core_vec = step_vecs[core_idx].mean(axis=0) if core_idx else zero.copy()
    removed_vec = step_vecs[removed_idx].mean(axis=0) if removed_idx else zero.copy()

    if profile is None or profile.degenerate:
        necessity_vec = full.copy()
        degenerate_necessity = True
    else:
        weights = np.asarray(profile.weights)
        necessity_vec = weights @ step_vecs
        degenerate_necessity = False

    return TraceEmbeddings(
        full=full, core=core_vec, removed=removed_vec,
        necessity_weighted=necessity_vec,
        degenerate_core=not core_idx,
        degenerate_removed=not removed_idx,
        degenerate_necessity=degenerate_necessity,
    )


def group_variance(vectors: np.ndarray) -> float:
    """Mean squared distance to the centroid."""
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2 or vectors.shape[0] < 1:
        raise EmptyInput("group variance needs at least one vector")
    centered = vectors - vectors.mean(axis=0)
    return float(np.mean(np.sum(centered ** 2, axis=1)))


def _stratified_split(labels: np.ndarray, split_seed: int,
                      train_fraction: float = 0.7) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(split_seed)
    train_idx, test_idx = [], []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(len(members))]
        n_train = int(round(train_fraction * len(members)))
        n_train = min(max(n_train, 1), len(members) - 1)
        train_idx.extend(members[:n_train])
        test_idx.extend(members[n_train:])
    return np.sort(np.array(train_idx)), np.sort(np.array(test_idx))


def _check_probe_inputs(vectors: np.ndarray, labels: np.ndarray,
                        min_per_class: int = 10) -> tuple[np.ndarray, np.ndarray]:
    vectors = np.asarray(vectors, dtype=float)
    labels = np.asarray(labels).astype(int)
    if vectors.shape[0] != labels.shape[0]:
        raise ValueError("vectors and labels disagree in length")
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2 or counts.min() < min_per_class:
        raise ClassImbalance(
            f"need >= {min_per_class} examples per class, got {dict(zip(classes, counts))}"
        )
    return vectors, labels


def linear_probe_accuracy(vectors: np.ndarray, labels, split_seed: int = 0) -> float:
    """Held-out accuracy of a logistic probe under pinned training.

    Full-batch gradient descent from zero init: 500 iterations, step size
    0.1, L2 penalty 1e-3 on the weights (bias unpenalized); 70/30
    stratified split determined by split_seed.
    """
    X, y = _check_probe_inputs(vectors, labels)
    train_idx, test_idx = _stratified_split(y, split_seed)

    Xtr, ytr = X[train_idx], y[train_idx]
    Xte, yte = X[test_idx], y[test_idx]

    w = np.zeros(X.shape[1])
    b = 0.0
    lam = 1e-3
    lr = 0.1
    for _ in range(500):
        z = np.clip(Xtr @ w + b, -30.0, 30.0)
        p = 1.0 / (1.0 + np.exp(-z))
        err = p - ytr
        grad_w = Xtr.T @ err / len(ytr) + lam * w
        grad_b = float(np.mean(err))
        w -= lr * grad_w
        b -= lr * grad_b

    predictions = (Xte @ w + b > 0.0).astype(int)
    return float(np.mean(predictions == yte))


def knn_accuracy(vectors: np.ndarray, labels, k: int = 5, split_seed: int = 0) -> float:
    """Held-out k-NN majority-vote accuracy, Euclidean metric.

    Distance ties resolve to the lower training index; vote ties to the
    smaller label. Same split protocol as the linear probe.
    """
    X, y = _check_probe_inputs(vectors, labels)
    train_idx, test_idx = _stratified_split(y, split_seed)
    Xtr, ytr = X[train_idx], y[train_idx]
    Xte, yte = X[test_idx], y[test_idx]

    diffs = Xte[:, None, :] - Xtr[None, :, :]
    distances = np.sqrt(np.sum(diffs ** 2, axis=2))
    correct = 0
    for i in range(len(Xte)):
        nearest = np.argsort(distances[i], kind="stable")[:k]
        votes = ytr[nearest]
        values, counts = np.unique(votes, return_counts=True)
        winner = values[np.flatnonzero(counts == counts.max())].min()
        correct += int(winner == yte[i])
    return correct / len(Xte)


def _check_clusters(vectors: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    vectors = np.asarray(vectors, dtype=float)
    labels = np.asarray(labels).astype(int)
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2 or counts.min() < 2:
        raise DegenerateClustering(
            "need >= 2 classes with >= 2 members each"
        )
    return vectors, labels


def silhouette(vectors: np.ndarray, labels) -> float:
    """Mean silhouette value over points, Euclidean distances.

    For each point, a is the mean distance to its own class (self
    excluded), b the smallest mean distance to another class; the point
    contributes (b - a) / max(a, b), or 0 when both vanish.
    """
    X, y = _check_clusters(vectors, labels)
    diffs = X[:, None, :] - X[None, :, :]
    distances = np.sqrt(np.sum(diffs ** 2, axis=2))
    classes = np.unique(y)

    scores = []
    for i in range(len(X)):
        same = np.flatnonzero((y == y[i]) & (np.arange(len(X)) != i))
        a = float(np.mean(distances[i, same]))
        b = min(
            float(np.mean(distances[i, np.flatnonzero(y == cls)]))
            for cls in classes if cls != y[i]
        )
        denom = max(a, b)
        scores.append(0.0 if denom == 0.0 else (b - a) / denom)
    return float(np.mean(scores))


def davies_bouldin(vectors: np.ndarray, labels) -> float:
    """Davies-Bouldin index: mean over classes of the worst
    (sigma_i + sigma_j) / centroid-distance ratio."""
    X, y = _check_clusters(vectors, labels)
    classes = np.unique(y)
    centroids = np.stack([X[y == cls].mean(axis=0) for cls in classes])
    scatter = np.array([
        float(np.mean(np.linalg.norm(X[y == cls] - centroids[i], axis=1)))
        for i, cls in enumerate(classes)
    ])

    ratios = []
    for i in range(len(classes)):
        worst = 0.0
        for j in range(len(classes)):
            if i == j:
                continue
            gap = float(np.linalg.norm(centroids[i] - centroids[j]))
            if gap == 0.0:
                raise CoincidentCentroids(
                    f"classes {classes[i]} and {classes[j]} share a centroid"
                )
            worst = max(worst, (scatter[i] + scatter[j]) / gap)
        ratios.append(worst)
    return float(np.mean(ratios))


def participation_ratio(vectors: np.ndarray) -> float:
    """PCA participation ratio (sum lambda)^2 / sum lambda^2 with 1/N
    covariance normalization. Ranges from 1 (rank one) to d (isotropic)."""
    X = np.asarray(vectors, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("participation ratio needs >= 2 vectors")
    centered = X - X.mean(axis=0)
    n, d = centered.shape
    # Work on the smaller Gram side; nonzero eigenvalues coincide.
    if d <= n:
        cov = centered.T @ centered / n
    else:
        cov = centered @ centered.T / n
    trace_total = float(np.trace(cov))
    if trace_total <= 0.0:
        raise ZeroVariance("all vectors identical")
    trace_sq = float(np.sum(cov * cov))
    return trace_total ** 2 / trace_sq


def cosine_alignment(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; zero vectors are rejected, not coerced."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine alignment of a zero vector")
    return float(np.dot(a, b) / (norm_a * norm_b))


def load_embeddings_jsonl(path) -> dict[str, np.ndarray]:
    """Read externally computed step embeddings.

    Rows are {"trace_id": str, "step_index": int, "vector": [...]}; step
    indices must be contiguous from 0 per trace and all vectors must share
    one dimension.
    """
    by_trace: dict[str, dict[int, np.ndarray]] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            vec = np.asarray(row["vector"], dtype=float)
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise ValueError(f"line {line_no}: embedding dim {vec.shape[0]} != {dim}")
            by_trace.setdefault(row["trace_id"], {})[int(row["step_index"])] = vec

    result = {}
    for trace_id, rows in by_trace.items():
        T = len(rows)
        if sorted(rows) != list(range(T)):
            raise ValueError(f"trace {trace_id}: step indices not contiguous from 0")
        result[trace_id] = np.stack([rows[t] for t in range(T)])
    return result


def save_embeddings_jsonl(embeddings: dict[str, np.ndarray], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for trace_id in embeddings:
            matrix = embeddings[trace_id]
            for t in range(matrix.shape[0]):
                row = {
                    "trace_id": trace_id,
                    "step_index": t,
                    "vector": [float(v) for v in matrix[t]],
                }
                fh.write(json.dumps(row) + "\n")
