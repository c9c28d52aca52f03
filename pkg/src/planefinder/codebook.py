"""K-means visual vocabularies and bag-of-words quantization."""

from dataclasses import dataclass

import numpy as np


class CodebookError(Exception):
    pass


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray
    descriptor_kind: str = "static"

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        c.flags.writeable = False
        object.__setattr__(self, "centroids", c)

    @property
    def k(self):
        return self.centroids.shape[0]


@dataclass(frozen=True)
class BoWHistogram:
    values: np.ndarray
    descriptor_kind: str = "static"
    empty: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


def _descriptor_matrix(descriptors):
    if len(descriptors) == 0:
        return np.zeros((0, 0))
    rows = [np.asarray(getattr(d, "values", d), dtype=np.float64) for d in descriptors]
    return np.stack(rows)


def _assign(data, centroids, chunk=2048):
    """Nearest-centroid assignment (ties -> lowest index) and min distances."""
    n = data.shape[0]
    assign = np.empty(n, dtype=np.int64)
    min_d2 = np.empty(n)
    c2 = (centroids ** 2).sum(axis=1)
    for lo in range(0, n, chunk):
        block = data[lo:lo + chunk]
        d2 = ((block ** 2).sum(axis=1)[:, None]
              - 2.0 * block @ centroids.T + c2[None, :])
        np.maximum(d2, 0.0, out=d2)
        best = d2.min(axis=1)
        # lowest index among near-ties, stable across float noise
        assign[lo:lo + chunk] = np.argmax(d2 <= best[:, None] + 1e-12, axis=1)
        min_d2[lo:lo + chunk] = best
    return assign, min_d2


def train_codebook(descriptors, k, seed=0, max_iter=100, descriptor_kind="static"):
    """Lloyd's k-means with k-means++ seeding and farthest-point re-seeding
    of empty clusters. Deterministic for a fixed seed."""
    data = _descriptor_matrix(descriptors)
    if data.shape[0] < k or np.unique(data, axis=0).shape[0] < k:
        raise CodebookError("need at least k=%d distinct descriptors" % k)
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_seed(data, k, rng)
    assign = np.full(data.shape[0], -1)
    for _ in range(max_iter):
        new_assign, min_d2 = _assign(data, centroids)
        for j in range(k):
            members = data[new_assign == j]
            if members.shape[0] == 0:
                far = int(np.argmax(min_d2))
                centroids[j] = data[far]
                new_assign[far] = j
                min_d2[far] = 0.0
            else:
                centroids[j] = members.mean(axis=0)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return Codebook(centroids=centroids, descriptor_kind=descriptor_kind)


def _kmeanspp_seed(data, k, rng):
    n = data.shape[0]
    centroids = np.empty((k, data.shape[1]))
    centroids[0] = data[rng.integers(n)]
    d2 = ((data - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = data[idx]
        d2 = np.minimum(d2, ((data - centroids[j]) ** 2).sum(axis=1))
    return centroids


def kmeans_inertia(descriptors, cb):
    data = _descriptor_matrix(descriptors)
    _, min_d2 = _assign(data, cb.centroids)
    return float(min_d2.sum())


def quantize(descriptors, cb):
    """Vote each descriptor to its nearest centroid; L1-normalized histogram.

    Ties go to the lowest centroid index; an empty input yields the flagged
    all-zero histogram.
    """
    counts = np.zeros(cb.k)
    data = _descriptor_matrix(descriptors)
    if data.shape[0] == 0:
        return BoWHistogram(values=counts, descriptor_kind=cb.descriptor_kind, empty=True)
    if data.shape[1] != cb.centroids.shape[1]:
        raise CodebookError(
            "descriptor dim %d does not match codebook dim %d"
            % (data.shape[1], cb.centroids.shape[1])
        )
    assign, _ = _assign(data, cb.centroids)
    np.add.at(counts, assign, 1.0)
    return BoWHistogram(values=counts / counts.sum(),
                        descriptor_kind=cb.descriptor_kind, empty=False)
