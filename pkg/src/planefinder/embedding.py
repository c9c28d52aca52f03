"""Supervised cross-view embedding: label-similarity matrix and the
closed-form whitened-SVD solve of the trace maximization."""

from dataclasses import dataclass

import numpy as np


class EmbeddingError(Exception):
    pass


@dataclass(frozen=True)
class SemanticLabels:
    """One-hot plane label (last slot = non-standard) and diagnosis label
    (last slot = normal)."""

    plane: np.ndarray
    diagnosis: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.plane, dtype=np.float64)
        d = np.asarray(self.diagnosis, dtype=np.float64)
        for vec, name in ((p, "plane"), (d, "diagnosis")):
            if vec.ndim != 1 or np.count_nonzero(vec == 1.0) != 1 \
                    or np.count_nonzero(vec) != 1:
                raise EmbeddingError("%s label must be one-hot" % name)
        p.flags.writeable = False
        d.flags.writeable = False
        object.__setattr__(self, "plane", p)
        object.__setattr__(self, "diagnosis", d)


@dataclass(frozen=True)
class EmbeddingModel:
    w_x: np.ndarray
    w_y: np.ndarray
    mean_x: np.ndarray
    mean_y: np.ndarray
    c: int
    epsilon: float
    train_n: int


def semantic_similarity(a, b):
    """0 for different plane types, else 1 + diagnosis agreement."""
    if a.plane.shape != b.plane.shape or a.diagnosis.shape != b.diagnosis.shape:
        raise EmbeddingError("label dimension mismatch")
    plane_dot = float(np.dot(a.plane, b.plane))
    if plane_dot == 0.0:
        return 0.0
    return 1.0 + float(np.dot(a.diagnosis, b.diagnosis))


def build_similarity_matrix(labels):
    n = len(labels)
    if n < 2:
        raise EmbeddingError("need at least 2 labeled samples")
    planes = np.stack([l.plane for l in labels])
    diags = np.stack([l.diagnosis for l in labels])
    plane_dot = planes @ planes.T
    s = np.where(plane_dot > 0, 1.0 + diags @ diags.T, 0.0)
    return s


def _inv_sqrt(c_mat, c, epsilon):
    evals, evecs = np.linalg.eigh(c_mat)
    rank = int(np.sum(evals > 1e-10 * max(evals.max(), 1e-300)))
    if epsilon == 0.0 and rank < c:
        raise EmbeddingError(
            "covariance rank %d below c=%d with epsilon=0; supply epsilon > 0"
            % (rank, c)
        )
    evals = np.maximum(evals, 1e-15 * max(evals.max(), 1e-300))
    return (evecs / np.sqrt(evals)) @ evecs.T


def fit_embedding(x, y, s, c, epsilon=None):
    """Closed-form solve of the supervised trace maximization.

    Centers both views, whitens with C + eps*I, and takes the top-c singular
    directions of the whitened cross matrix X^T S Y / n.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    n, d_x = x.shape
    d_y = y.shape[1]
    if y.shape[0] != n or s.shape != (n, n):
        raise EmbeddingError("row counts of X, Y and S must agree")
    if c > min(d_x, d_y, n):
        raise EmbeddingError("c=%d exceeds min(d_x, d_y, n)=%d" % (c, min(d_x, d_y, n)))

    mean_x = x.mean(axis=0)
    mean_y = y.mean(axis=0)
    xc = x - mean_x
    yc = y - mean_y

    if epsilon is None:
        cxx0 = xc.T @ xc / n
        cyy0 = yc.T @ yc / n
        epsilon = 1e-6 * 0.5 * (np.trace(cxx0) / d_x + np.trace(cyy0) / d_y)

    cxx = xc.T @ xc / n + epsilon * np.eye(d_x)
    cyy = yc.T @ yc / n + epsilon * np.eye(d_y)
    isx = _inv_sqrt(cxx, c, epsilon)
    isy = _inv_sqrt(cyy, c, epsilon)

    m = xc.T @ s @ yc / n
    u, sv, vt = np.linalg.svd(isx @ m @ isy, full_matrices=False)
    u = u[:, :c].copy()
    v = vt[:c].T.copy()
    # sign convention: largest-magnitude entry of each whitened basis column
    # positive; the paired Y column flips with it
    for j in range(c):
        if u[np.argmax(np.abs(u[:, j])), j] < 0:
            u[:, j] = -u[:, j]
            v[:, j] = -v[:, j]
    w_x = isx @ u
    w_y = isy @ v
    return EmbeddingModel(w_x=w_x, w_y=w_y, mean_x=mean_x, mean_y=mean_y,
                          c=c, epsilon=float(epsilon), train_n=n)


def embed(features, model, view="static"):
    """Project one feature vector (or a stack) into the compact code space."""
    f = np.asarray(features, dtype=np.float64)
    if view == "static":
        return (f - model.mean_x) @ model.w_x
    if view == "spacetime":
        return (f - model.mean_y) @ model.w_y
    raise EmbeddingError("unknown view %r" % view)


def embed_fused(x, y, model):
    """Elementwise average of the two per-view codes."""
    return 0.5 * (embed(x, model, "static") + embed(y, model, "spacetime"))


def embedding_objective(x, y, w_x, w_y, s, c):
    """Frobenius objective || (1/c) (X Wx)(Y Wy)^T - S ||_F^2, verbatim."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    zx = x @ w_x
    zy = y @ w_y
    if zx.shape[1] != zy.shape[1]:
        raise EmbeddingError("code lengths of the two views differ")
    resid = (zx @ zy.T) / c - s
    return float((resid ** 2).sum())


def trace_objective(x, y, w_x, w_y, s):
    """tr(Wx^T X^T S Y Wy), the quantity the closed-form solve maximizes."""
    return float(np.trace(w_x.T @ x.T @ s @ y @ w_y))
