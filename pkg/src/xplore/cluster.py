"""Attribute pseudo-label discovery via k-means, plus cluster statistics.

The discovered pieces feed two places downstream: assignments become the
classification pseudo-labels, and per-cluster (centroid, std) pairs
condition the decoder's normalization layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import FeatureMatrix

# Floor for per-dimension cluster stds: singleton or constant clusters must
# not collapse the downstream conditioning to zero scale.
EPS_SIGMA = 1e-4

BRUTE_FORCE_LIMIT = 10 ** 7


class EmptyClusterError(ValueError):
    pass


@dataclass
class ClusteringOptions:
    init: str = "kmeanspp"  # kmeanspp | random
    restarts: int = 1
    max_iters: int = 300
    tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.init not in ("kmeanspp", "random"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")


@dataclass
class ClusterModel:
    centroids: np.ndarray    # (k, r)
    stds: np.ndarray         # (k, r), floored at EPS_SIGMA
    assignments: np.ndarray  # (n,) ints in [0, k)
    inertia: float
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        self.stds = np.asarray(self.stds, dtype=np.float64)
        self.assignments = np.asarray(self.assignments, dtype=np.int64)
        self.inertia = float(self.inertia)
        if self.check and np.any(self.stds < EPS_SIGMA):
            raise ValueError(f"cluster stds below the {EPS_SIGMA} floor")

    @property
    def k(self):
        return self.centroids.shape[0]

    @property
    def dim(self):
        return self.centroids.shape[1]


def _values(features) -> np.ndarray:
    if isinstance(features, FeatureMatrix):
        return features.values
    return np.asarray(features, dtype=np.float64)


def _distances_sq(x, centroids):
    # explicit differences: symmetric and exactly tie-stable, unlike the
    # |x|^2 - 2x.c + |c|^2 expansion
    return np.sum((x[:, None, :] - centroids[None, :, :]) ** 2, axis=2)


def _assign(x, centroids):
    return np.argmin(_distances_sq(x, centroids), axis=1)  # ties: lowest index


def _inertia(x, centroids, labels):
    return float(np.sum((x - centroids[labels]) ** 2))


def _repair_empty(x, centroids, labels, k):
    """Give each empty cluster the point currently farthest from its centroid."""
    while True:
        counts = np.bincount(labels, minlength=k)
        empty = np.where(counts == 0)[0]
        if empty.size == 0:
            return centroids, labels
        dist = np.sum((x - centroids[labels]) ** 2, axis=1)
        far = int(np.argmax(dist))
        centroids = centroids.copy()
        centroids[empty[0]] = x[far]
        labels = _assign(x, centroids)


def _init_centroids(x, k, init, rng):
    n = x.shape[0]
    if init == "random":
        idx = rng.choice(n, size=k, replace=False)
        return x[idx].copy()
    # k-means++: D^2-weighted seeding
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x[rng.integers(n)]
    closest = np.sum((x - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            centroids[j] = x[rng.integers(n)]
        else:
            centroids[j] = x[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, np.sum((x - centroids[j]) ** 2, axis=1))
    return centroids


def _lloyd(x, k, init, max_iters, tol, rng):
    centroids = _init_centroids(x, k, init, rng)
    labels = _assign(x, centroids)
    centroids, labels = _repair_empty(x, centroids, labels, k)
    inertia = _inertia(x, centroids, labels)
    for _ in range(max_iters):
        new_centroids = np.empty_like(centroids)
        for j in range(k):
            new_centroids[j] = x[labels == j].mean(axis=0)
        new_labels = _assign(x, new_centroids)
        new_centroids, new_labels = _repair_empty(x, new_centroids, new_labels, k)
        new_inertia = _inertia(x, new_centroids, new_labels)
        if new_inertia > inertia + 1e-9 * max(1.0, inertia):
            raise RuntimeError(f"Lloyd inertia increased: {inertia} -> {new_inertia}")
        fixed_point = np.array_equal(new_labels, labels)
        small_gain = (inertia - new_inertia) <= tol * max(inertia, np.finfo(float).tiny)
        centroids, labels, inertia = new_centroids, new_labels, new_inertia
        if fixed_point or small_gain:
            break
    return centroids, labels, inertia


def suggested_k(image_size: int) -> int:
    """Published defaults: 50 clusters at 256px resolution, 100 at 128px."""
    return 100 if image_size < 256 else 50


def kmeans_fit(features, k: int, opts: ClusteringOptions | None = None) -> ClusterModel:
    """Best-of-restarts Lloyd's algorithm on the feature rows."""
    opts = opts or ClusteringOptions()
    x = _values(features)
    n = x.shape[0]
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points n={n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("kmeans_fit: non-finite features")

    master = np.random.default_rng(opts.seed)
    seeds = master.integers(0, 2 ** 63 - 1, size=opts.restarts)
    best = None
    for s in seeds:
        run = _lloyd(x, k, opts.init, opts.max_iters, opts.tol, np.random.default_rng(s))
        if best is None or run[2] < best[2]:
            best = run
    centroids, labels, inertia = best
    _, stds = compute_cluster_stats(x, labels, k)
    return ClusterModel(centroids=centroids, stds=stds, assignments=labels,
                        inertia=inertia)


def assign_clusters(model: ClusterModel, features) -> np.ndarray:
    """Nearest-centroid labels; ties break to the lowest centroid index."""
    x = _values(features)
    if x.shape[1] != model.dim:
        raise ValueError(f"assign_clusters: features have {x.shape[1]} dims, "
                         f"model has {model.dim}")
    return _assign(x, model.centroids)


def compute_cluster_stats(features, labels, k: int):
    """Per-cluster mean and per-dimension population std, floored at EPS_SIGMA."""
    x = _values(features)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"labels outside [0, {k})")
    mu = np.empty((k, x.shape[1]), dtype=np.float64)
    sigma = np.empty_like(mu)
    for j in range(k):
        members = x[labels == j]
        if members.shape[0] == 0:
            raise EmptyClusterError(f"cluster {j} is empty")
        mu[j] = members.mean(axis=0)
        sigma[j] = np.maximum(members.std(axis=0), EPS_SIGMA)
    return mu, sigma


def brute_force_kmeans(features, k: int) -> ClusterModel:
    """Exact global optimum by enumerating every assignment; test oracle.

    Guarded at k**n <= 10^7 assignments.
    """
    x = _values(features)
    n = x.shape[0]
    if k <= 0 or k > n:
        raise ValueError(f"k={k} out of range for n={n}")
    total = k ** n
    if total > BRUTE_FORCE_LIMIT:
        raise ValueError(f"instance too large for brute force: {k}^{n} = {total} "
                         f"> {BRUTE_FORCE_LIMIT}")

    total_sq = float(np.sum(x * x))
    best_cost, best_assign = np.inf, None
    chunk = 1 << 14
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = np.empty((idx.size, n), dtype=np.int64)
        rem = idx.copy()
        for pos in range(n - 1, -1, -1):
            digits[:, pos] = rem % k
            rem //= k
        onehot = np.eye(k, dtype=np.float64)[digits]          # (m, n, k)
        counts = onehot.sum(axis=1)                           # (m, k)
        sums = np.einsum("mnk,nd->mkd", onehot, x)            # (m, k, d)
        with np.errstate(divide="ignore", invalid="ignore"):
            reduced = np.where(counts > 0,
                               np.sum(sums ** 2, axis=2) / counts,
                               0.0)
        costs = total_sq - reduced.sum(axis=1)
        j = int(np.argmin(costs))
        if costs[j] < best_cost:
            best_cost, best_assign = float(costs[j]), digits[j].copy()

    # canonical model: every cluster nonempty, every point with its nearest
    # centroid; seizure repair covers duplicate-point degeneracies where the
    # optimum leaves a cluster empty
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    for j in range(k):
        members = x[best_assign == j]
        centroids[j] = members.mean(axis=0) if members.shape[0] else x[0]
    labels = _assign(x, centroids)
    centroids, labels = _repair_empty(x, centroids, labels, k)
    inertia = _inertia(x, centroids, labels)
    _, stds = compute_cluster_stats(x, labels, k)
    return ClusterModel(centroids=centroids, stds=stds, assignments=labels,
                        inertia=inertia)


# -- agreement metrics ---------------------------------------------------------

def _contingency(pred, truth):
    pu, pi = np.unique(pred, return_inverse=True)
    tu, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((pu.size, tu.size), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def clustering_metrics(pred, truth) -> dict:
    """NMI (arithmetic-mean normalization) and ARI between two labelings."""
    pred = np.asarray(pred).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if pred.shape != truth.shape:
        raise ValueError(f"label length mismatch: {pred.shape[0]} vs {truth.shape[0]}")
    if pred.size == 0:
        raise ValueError("empty labelings")
    table = _contingency(pred, truth)
    n = pred.size

    pij = table / n
    pi = pij.sum(axis=1)
    qj = pij.sum(axis=0)
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / np.outer(pi, qj)[nz])))
    hu = float(-np.sum(pi[pi > 0] * np.log(pi[pi > 0])))
    hv = float(-np.sum(qj[qj > 0] * np.log(qj[qj > 0])))
    if hu + hv == 0.0:
        nmi = 1.0  # both labelings trivial, hence identical partitions
    else:
        nmi = float(np.clip(2.0 * mi / (hu + hv), 0.0, 1.0))

    def comb2(v):
        return v * (v - 1) / 2.0

    sum_ij = comb2(table.astype(np.float64)).sum()
    sum_a = comb2(table.sum(axis=1).astype(np.float64)).sum()
    sum_b = comb2(table.sum(axis=0).astype(np.float64)).sum()
    expected = sum_a * sum_b / comb2(float(n)) if n > 1 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        ari = 1.0  # degenerate partitions that agree perfectly
    else:
        ari = float((sum_ij - expected) / (max_index - expected))
    return {"nmi": nmi, "ari": ari}
