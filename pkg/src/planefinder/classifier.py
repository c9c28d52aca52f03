"""One-vs-rest soft-margin SVMs with histogram intersection or linear kernel,
trained by sequential minimal optimization."""

from dataclasses import dataclass, field

import numpy as np

KKT_TOL = 1e-4
ALPHA_KEEP = 1e-12


class ClassifierError(Exception):
    pass


def hik(a, b):
    """Histogram intersection kernel sum_i min(a_i, b_i)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ClassifierError("length mismatch")
    if a.min() < 0 or b.min() < 0:
        raise ClassifierError("HIK requires nonnegative inputs")
    return float(np.minimum(a, b).sum())


def hik_matrix(a, b, chunk=256):
    """HIK Gram block between row sets a (n x d) and b (m x d)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.min(initial=0.0) < 0 or b.min(initial=0.0) < 0:
        raise ClassifierError("HIK requires nonnegative inputs")
    out = np.empty((a.shape[0], b.shape[0]))
    for lo in range(0, a.shape[0], chunk):
        block = a[lo:lo + chunk]
        out[lo:lo + chunk] = np.minimum(block[:, None, :], b[None, :, :]).sum(axis=2)
    return out


def kernel_matrix(a, b, kind):
    if kind == "hik":
        return hik_matrix(a, b)
    if kind == "linear":
        return np.asarray(a, dtype=np.float64) @ np.asarray(b, dtype=np.float64).T
    raise ClassifierError("unknown kernel %r" % kind)


@dataclass(frozen=True)
class FeatureScaler:
    mins: np.ndarray
    maxs: np.ndarray
    passthrough: bool = False


def fit_scaler(codes):
    codes = np.asarray(codes, dtype=np.float64)
    if codes.ndim != 2 or codes.shape[0] < 2:
        raise ClassifierError("need at least 2 training codes")
    return FeatureScaler(mins=codes.min(axis=0), maxs=codes.max(axis=0))


def apply_scaler(code, scaler):
    """Min-max map into [0,1]; constant dims map to 0.5; out-of-range clamps."""
    code = np.asarray(code, dtype=np.float64)
    if scaler.passthrough:
        return code
    span = scaler.maxs - scaler.mins
    const = span <= 0
    safe_span = np.where(const, 1.0, span)
    scaled = np.clip((code - scaler.mins) / safe_span, 0.0, 1.0)
    return np.where(const, 0.5, scaled)


def identity_scaler(dim):
    """Pass-through scaler for inputs that need no rescaling (BoW histograms,
    linear-kernel features)."""
    return FeatureScaler(mins=np.zeros(dim), maxs=np.ones(dim), passthrough=True)


@dataclass(frozen=True)
class SvmModel:
    support_vectors: np.ndarray
    dual_coefs: np.ndarray  # alpha_i * y_i
    bias: float
    c: float
    class_weights: tuple
    kernel: str
    scaler: FeatureScaler


@dataclass(frozen=True)
class MulticlassModel:
    class_ids: tuple
    machines: dict  # class_id -> SvmModel


def _smo(gram, y, box, tol=KKT_TOL, max_iter=200000):
    """Maximal-violating-pair SMO for the dual soft-margin problem."""
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a'Qa - e'a with Q = yy' * K
    q_diag = np.diag(gram) * 1.0
    for _ in range(max_iter):
        ygrad = -y * grad
        up = ((y > 0) & (alpha < box)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < box)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, ygrad, -np.inf)))
        j = int(np.argmin(np.where(low, ygrad, np.inf)))
        if ygrad[i] - ygrad[j] <= tol:
            break
        qi = y[i] * y * gram[i]
        qj = y[j] * y * gram[j]
        quad = max(q_diag[i] + q_diag[j] - 2.0 * gram[i, j], 1e-12)
        delta = (ygrad[i] - ygrad[j]) / quad
        # step in the direction increasing alpha_i by y_i*delta etc., clipped
        old_i, old_j = alpha[i], alpha[j]
        if y[i] > 0:
            delta = min(delta, box[i] - old_i)
        else:
            delta = min(delta, old_i)
        if y[j] > 0:
            delta = min(delta, old_j)
        else:
            delta = min(delta, box[j] - old_j)
        alpha[i] = old_i + y[i] * delta
        alpha[j] = old_j - y[j] * delta
        grad += qi * (alpha[i] - old_i) + qj * (alpha[j] - old_j)
    return alpha, grad


def train_svm(z, y, c=1.0, kernel="hik", class_weights=None, scaler=None,
              tol=KKT_TOL):
    """Soft-margin SVM via SMO; converges to max KKT violation <= tol."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ClassifierError("non-finite features")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ClassifierError("both classes must be present")
    if scaler is None:
        scaler = identity_scaler(z.shape[1])
    if class_weights is None:
        class_weights = (float(np.sum(y < 0)) / float(np.sum(y > 0)), 1.0)
    zs = apply_scaler(z, scaler)
    gram = kernel_matrix(zs, zs, kernel)
    box = np.where(y > 0, c * class_weights[0], c * class_weights[1])
    alpha, grad = _smo(gram, y, box, tol=tol)

    keep = alpha > ALPHA_KEEP
    # bias from free support vectors, else midpoint of the violation bounds
    ygrad = -y * grad
    free = keep & (alpha < box - ALPHA_KEEP)
    if free.any():
        bias = float(ygrad[free].mean())
    else:
        up = ((y > 0) & (alpha < box)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < box)) | ((y > 0) & (alpha > 0))
        hi = ygrad[up].max() if up.any() else 0.0
        lo = ygrad[low].min() if low.any() else 0.0
        bias = float(0.5 * (hi + lo))
    return SvmModel(support_vectors=zs[keep], dual_coefs=alpha[keep] * y[keep],
                    bias=bias, c=float(c), class_weights=tuple(class_weights),
                    kernel=kernel, scaler=scaler)


def dual_objective(model_or_alpha, gram=None, y=None):
    """Dual value sum(alpha) - 1/2 sum alpha_i alpha_j y_i y_j K_ij."""
    alpha = np.asarray(model_or_alpha, dtype=np.float64)
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ gram @ ay)


def decision_values(model, z):
    """Decision function for one vector or a stack of vectors."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    if z.shape[1] != model.support_vectors.shape[1]:
        raise ClassifierError("feature dimension mismatch")
    zs = apply_scaler(z, model.scaler)
    k = kernel_matrix(zs, model.support_vectors, model.kernel)
    f = k @ model.dual_coefs + model.bias
    return float(f[0]) if single else f


def decision_value(model, z):
    return decision_values(model, z)


def predict(model, z):
    """sign(f), with sign(0) -> +1."""
    f = decision_values(model, z)
    return np.where(np.asarray(f) >= 0, 1, -1) if np.ndim(f) else (1 if f >= 0 else -1)


def train_multiclass(z, plane_labels, c=1.0, kernel="hik", scaler=None):
    """One binary machine per standard-plane class against everything else."""
    plane_labels = np.asarray(plane_labels)
    class_ids = sorted(set(int(l) for l in plane_labels if l >= 0))
    if len(class_ids) < 2:
        raise ClassifierError("need at least 2 standard-plane classes")
    z = np.asarray(z, dtype=np.float64)
    if scaler is None:
        scaler = fit_scaler(z)
    machines = {}
    for cid in class_ids:
        y = np.where(plane_labels == cid, 1.0, -1.0)
        if not np.any(y > 0):
            raise ClassifierError("class %d has no positive samples" % cid)
        machines[cid] = train_svm(z, y, c=c, kernel=kernel, scaler=scaler)
    return MulticlassModel(class_ids=tuple(class_ids), machines=machines)


def classify(model, z):
    """Returns (class id or None, {class_id: decision value}).

    Argmax over positive decision values; all negative -> None; ties -> the
    lowest class id.
    """
    scores = {cid: float(decision_values(model.machines[cid], z))
              for cid in model.class_ids}
    best = None
    best_val = 0.0
    for cid in model.class_ids:  # ascending ids: strict > keeps the lowest on ties
        if scores[cid] > 0 and (best is None or scores[cid] > best_val):
            best = cid
            best_val = scores[cid]
    return best, scores
