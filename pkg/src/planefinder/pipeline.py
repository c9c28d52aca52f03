"""End-to-end orchestration: training, plane localization, evaluation,
baselines and timing comparisons."""

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import pgm
from .bundle import ModelBundle, save_bundle
from .classifier import (classify, decision_values, fit_scaler, identity_scaler,
                         train_multiclass)
from .codebook import quantize, train_codebook
from .config import PipelineConfig
from .embedding import (build_similarity_matrix, embed, embed_fused, fit_embedding)
from .features import (describe_spacetime, describe_static, detect_spacetime_points,
                       detect_static_keypoints)
from .smoothing import SmoothingConfig, smooth_sequence
from .volume import (extract_plane_sequence, generate_candidates, load_volume)


class PipelineError(Exception):
    pass


@dataclass
class EvaluationReport:
    accuracy: dict = field(default_factory=dict)  # (class_id, condition) -> value
    f1: dict = field(default_factory=dict)        # class_id -> mean F1 over volumes
    timings: dict = field(default_factory=dict)   # label -> seconds

    def mean_accuracy(self):
        return float(np.mean(list(self.accuracy.values()))) if self.accuracy else 0.0

    def mean_f1(self):
        return float(np.mean(list(self.f1.values()))) if self.f1 else 0.0


def smoothing_config(cfg):
    return SmoothingConfig(lam=cfg.smooth_lambda, kappa=cfg.smooth_kappa,
                           beta_max=cfg.smooth_beta_max)


def candidate_planes(vol, cfg):
    return generate_candidates(vol, cfg.candidates_n, cfg.candidate_seed,
                               width=cfg.plane_size, height=cfg.plane_size,
                               pixel_step=cfg.pixel_step)


def sequence_descriptors(vol, params, cfg):
    """Full feature path for one candidate plane: resample, smooth, detect and
    describe both feature kinds. Degenerate descriptors are dropped."""
    seq = extract_plane_sequence(vol, params)
    seq = smooth_sequence(seq, smoothing_config(cfg))
    static = []
    for frame in seq.frames:
        kps = detect_static_keypoints(frame, contrast_threshold=cfg.contrast_threshold)
        static.extend(d for d in describe_static(frame, kps) if not d.degenerate)
    if seq.n_frames >= 5:
        pts = detect_spacetime_points(seq, k=cfg.harris_k)
        spacetime = [d for d in describe_spacetime(seq, pts) if not d.degenerate]
    else:
        spacetime = []
    return static, spacetime


def bow_features(descs, cb_s, cb_t):
    """Quantize per-plane descriptor pairs into stacked (X, Y) matrices."""
    x_rows = []
    y_rows = []
    for static, spacetime in descs:
        x_rows.append(quantize(static, cb_s).values)
        y_rows.append(quantize(spacetime, cb_t).values)
    return np.stack(x_rows), np.stack(y_rows)


class VolumeFeatureCache:
    """Per-volume descriptor cache so repeated evaluations reuse the feature
    path (candidate generation is deterministic from the config)."""

    def __init__(self, cfg):
        self.cfg = cfg
        self._volumes = {}
        self._descs = {}

    def volume(self, path):
        if path not in self._volumes:
            self._volumes[path] = load_volume(path)
        return self._volumes[path]

    def candidates(self, path):
        return candidate_planes(self.volume(path), self.cfg)

    def descriptors(self, path, cand_index):
        key = (path, cand_index)
        if key not in self._descs:
            vol = self.volume(path)
            params = self.candidates(path)[cand_index]
            self._descs[key] = sequence_descriptors(vol, params, self.cfg)
        return self._descs[key]

    def all_descriptors(self, path):
        return [self.descriptors(path, i) for i in range(self.cfg.candidates_n)]


@dataclass
class TrainData:
    x: np.ndarray
    y: np.ndarray
    labels: list
    plane_classes: np.ndarray
    conditions: list
    cb_static: object
    cb_spacetime: object


def prepare_training_data(manifest, cfg, cache=None):
    """Descriptor extraction, codebook training and quantization for every
    labeled training candidate."""
    manifest.validate(candidate_count=cfg.candidates_n)
    cache = cache or VolumeFeatureCache(cfg)
    descs = []
    for rec in manifest.records:
        try:
            descs.append(cache.descriptors(rec.volume, rec.cand_index))
        except Exception as exc:
            raise PipelineError(
                "feature extraction failed for volume %s candidate %d: %s"
                % (rec.volume, rec.cand_index, exc)) from exc
    pool_s = _pool([d for s, _ in descs for d in s], cfg.descriptor_cap, cfg.pool_seed)
    pool_t = _pool([d for _, t in descs for d in t], cfg.descriptor_cap, cfg.pool_seed + 1)
    cb_s = train_codebook(pool_s, cfg.k_static, seed=cfg.kmeans_seed,
                          max_iter=cfg.kmeans_max_iter, descriptor_kind="static")
    cb_t = train_codebook(pool_t, cfg.k_spacetime, seed=cfg.kmeans_seed,
                          max_iter=cfg.kmeans_max_iter, descriptor_kind="spacetime")
    x, y = bow_features(descs, cb_s, cb_t)
    return TrainData(
        x=x, y=y,
        labels=[rec.labels for rec in manifest.records],
        plane_classes=np.array([rec.plane_class for rec in manifest.records]),
        conditions=[rec.condition for rec in manifest.records],
        cb_static=cb_s, cb_spacetime=cb_t)


def _pool(descriptors, cap, seed):
    if len(descriptors) <= cap:
        return descriptors
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(descriptors), size=cap, replace=False)
    return [descriptors[i] for i in sorted(idx)]


def compute_codes(x, y, emb, view):
    if view == "static":
        return embed(x, emb, "static")
    if view == "spacetime":
        return embed(y, emb, "spacetime")
    if view == "fused":
        return embed_fused(x, y, emb)
    raise PipelineError("unknown view %r" % view)


def train_from_data(td, cfg):
    s = build_similarity_matrix(td.labels)
    eps = None if cfg.embed_epsilon < 0 else cfg.embed_epsilon
    emb = fit_embedding(td.x, td.y, s, cfg.embed_c, epsilon=eps)
    codes = compute_codes(td.x, td.y, emb, cfg.view)
    scaler = fit_scaler(codes)
    clf = train_multiclass(codes, td.plane_classes, c=cfg.svm_c,
                           kernel=cfg.kernel, scaler=scaler)
    return ModelBundle(config=cfg, cb_static=td.cb_static,
                       cb_spacetime=td.cb_spacetime, embedding=emb,
                       classifier=clf).with_hash()


def train_pipeline(manifest, cfg, cache=None):
    """Full training path; deterministic for a fixed manifest + config."""
    cfg.validate()
    td = prepare_training_data(manifest, cfg, cache=cache)
    return train_from_data(td, cfg)


def candidate_codes(vol, bundle, cache_descs=None):
    cfg = bundle.config
    cands = candidate_planes(vol, cfg)
    if cache_descs is None:
        cache_descs = [sequence_descriptors(vol, p, cfg) for p in cands]
    x, y = bow_features(cache_descs, bundle.cb_static, bundle.cb_spacetime)
    return cands, compute_codes(x, y, bundle.embedding, cfg.view)


def locate_standard_planes(vol, bundle, plane_class, top_k, cache_descs=None):
    """Rank all candidate planes of a volume by one class's decision value.

    Ties break toward the lower candidate index.
    """
    if top_k < 1:
        raise PipelineError("top_k must be >= 1")
    if plane_class not in bundle.classifier.class_ids:
        raise PipelineError("no machine for plane class %r" % plane_class)
    _, codes = candidate_codes(vol, bundle, cache_descs=cache_descs)
    scores = decision_values(bundle.classifier.machines[plane_class], codes)
    order = np.lexsort((np.arange(len(scores)), -scores))
    return [(int(i), float(scores[i])) for i in order[:min(top_k, len(scores))]]


def _machine_scores(clf, codes):
    return {cid: decision_values(clf.machines[cid], codes) for cid in clf.class_ids}


def evaluate_synthetic(bundle, manifest, cache=None):
    """Per-class, per-condition binary accuracy over labeled candidates."""
    t0 = time.perf_counter()
    manifest.validate(candidate_count=bundle.config.candidates_n)
    cache = cache or VolumeFeatureCache(bundle.config)
    descs = [cache.descriptors(r.volume, r.cand_index) for r in manifest.records]
    x, y = bow_features(descs, bundle.cb_static, bundle.cb_spacetime)
    codes = compute_codes(x, y, bundle.embedding, bundle.config.view)
    plane = np.array([r.plane_class for r in manifest.records])
    cond = np.array([r.condition for r in manifest.records])
    scores = _machine_scores(bundle.classifier, codes)
    report = EvaluationReport()
    for cid in bundle.classifier.class_ids:
        pred_pos = scores[cid] > 0
        true_pos = plane == cid
        for condition in ("normal", "abnormal"):
            sel = cond == condition
            if sel.any():
                report.accuracy[(cid, condition)] = float(
                    np.mean(pred_pos[sel] == true_pos[sel]))
    report.timings["evaluate_synthetic"] = time.perf_counter() - t0
    return report


def evaluate_volumes(bundle, manifest, cache=None):
    """Retrieval F1 per class: positives among all candidates of each volume
    against the manifest's ground-truth candidate indices, averaged over
    volumes."""
    t0 = time.perf_counter()
    manifest.validate(candidate_count=bundle.config.candidates_n)
    cache = cache or VolumeFeatureCache(bundle.config)
    per_class = {cid: [] for cid in bundle.classifier.class_ids}
    for vol_path in manifest.volumes:
        vol = cache.volume(vol_path)
        descs = cache.all_descriptors(vol_path)
        _, codes = candidate_codes(vol, bundle, cache_descs=descs)
        scores = _machine_scores(bundle.classifier, codes)
        for cid in bundle.classifier.class_ids:
            truth = set(manifest.ground_truth(vol_path, cid))
            if not truth:
                raise PipelineError(
                    "volume %s lacks ground truth for class %d" % (vol_path, cid))
            predicted = set(np.nonzero(scores[cid] > 0)[0].tolist())
            per_class[cid].append(_f1(predicted, truth))
    report = EvaluationReport()
    for cid, values in per_class.items():
        report.f1[cid] = float(np.mean(values))
    report.timings["evaluate_volumes"] = time.perf_counter() - t0
    return report


def _f1(predicted, truth):
    if not predicted:
        return 0.0
    tp = len(predicted & truth)
    precision = tp / len(predicted)
    recall = tp / len(truth)
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# baselines and timing comparisons


def _representations(td, cfg):
    """Feature matrices per method, shared across train and test."""
    from .embedding import EmbeddingModel  # noqa: F401  (type reference only)
    s_sup = build_similarity_matrix(td.labels)
    s_id = np.eye(len(td.labels))
    eps = None if cfg.embed_epsilon < 0 else cfg.embed_epsilon
    emb_sup = fit_embedding(td.x, td.y, s_sup, cfg.embed_c, epsilon=eps)
    emb_cca = fit_embedding(td.x, td.y, s_id, cfg.embed_c, epsilon=eps)

    def make(x, y, method):
        if method == "static":
            return x
        if method == "spacetime":
            return y
        if method == "concat":
            return np.hstack([x, y])
        if method == "cca":
            return compute_codes(x, y, emb_cca, cfg.view)
        if method == "proposed":
            return compute_codes(x, y, emb_sup, cfg.view)
        raise PipelineError("unknown method %r" % method)

    return make, {"cca": emb_cca, "proposed": emb_sup}


BASELINE_METHODS = ("static", "spacetime", "concat", "cca", "proposed")


def run_baselines(train_manifest, test_manifest, cfg, methods=BASELINE_METHODS,
                  cache=None, with_volume_f1=True):
    """Train and evaluate every method on identical features and SVM settings.

    Returns {method: EvaluationReport}.
    """
    cache = cache or VolumeFeatureCache(cfg)
    td = prepare_training_data(train_manifest, cfg, cache=cache)
    make, embeddings = _representations(td, cfg)

    test_manifest.validate(candidate_count=cfg.candidates_n)
    test_descs = [cache.descriptors(r.volume, r.cand_index)
                  for r in test_manifest.records]
    tx, ty = bow_features(test_descs, td.cb_static, td.cb_spacetime)
    test_plane = np.array([r.plane_class for r in test_manifest.records])
    test_cond = np.array([r.condition for r in test_manifest.records])

    vol_feats = {}
    if with_volume_f1:
        for vol_path in test_manifest.volumes:
            descs = cache.all_descriptors(vol_path)
            vol_feats[vol_path] = bow_features(descs, td.cb_static, td.cb_spacetime)

    results = {}
    for method in methods:
        z_train = make(td.x, td.y, method)
        t0 = time.perf_counter()
        scaler = (identity_scaler(z_train.shape[1])
                  if method in ("static", "spacetime", "concat")
                  else fit_scaler(z_train))
        clf = train_multiclass(z_train, td.plane_classes, c=cfg.svm_c,
                               kernel=cfg.kernel, scaler=scaler)
        train_time = time.perf_counter() - t0
        report = EvaluationReport()
        report.timings["train"] = train_time

        z_test = make(tx, ty, method)
        t0 = time.perf_counter()
        scores = _machine_scores(clf, z_test)
        report.timings["test"] = time.perf_counter() - t0
        for cid in clf.class_ids:
            pred_pos = scores[cid] > 0
            true_pos = test_plane == cid
            for condition in ("normal", "abnormal"):
                sel = test_cond == condition
                if sel.any():
                    report.accuracy[(cid, condition)] = float(
                        np.mean(pred_pos[sel] == true_pos[sel]))
        if with_volume_f1:
            for cid in clf.class_ids:
                f1s = []
                for vol_path, (vx, vy) in vol_feats.items():
                    vz = make(vx, vy, method)
                    truth = set(test_manifest.ground_truth(vol_path, cid))
                    pred = set(np.nonzero(
                        decision_values(clf.machines[cid], vz) > 0)[0].tolist())
                    f1s.append(_f1(pred, truth))
                report.f1[cid] = float(np.mean(f1s))
        results[method] = report
    return results


def benchmark(bundle, manifest, cfg=None, cache=None):
    """Timing table mirroring the train/test comparison across the four
    representations, measured on this manifest's precomputed features."""
    cfg = cfg or bundle.config
    cache = cache or VolumeFeatureCache(cfg)
    results = run_baselines(manifest, manifest, cfg, cache=cache,
                            methods=("static", "spacetime", "concat", "proposed"),
                            with_volume_f1=False)
    table = {}
    for method, report in results.items():
        table[(method, "train")] = report.timings["train"]
        table[(method, "test")] = report.timings["test"]
    return table


def benchmark_representations(n_train=200, n_test=2000, d_static=5000,
                              d_spacetime=1000, c=32, seed=0, svm_c=1.0):
    """Paper-scale synthetic timing comparison: classify a fixed candidate
    feature set with the compact embedded codes vs the concatenated BoW."""
    rng = np.random.default_rng(seed)
    d_cat = d_static + d_spacetime

    def random_hist(n, d):
        h = rng.random((n, d))
        return h / h.sum(axis=1, keepdims=True)

    labels = rng.integers(0, 2, size=n_train)
    z_cat_train = random_hist(n_train, d_cat)
    z_cat_train[labels == 1, :10] += 0.05
    z_cat_train /= z_cat_train.sum(axis=1, keepdims=True)
    z_cat_test = random_hist(n_test, d_cat)
    z_emb_train = rng.random((n_train, c))
    z_emb_train[labels == 1, 0] += 0.5
    z_emb_test = rng.random((n_test, c))

    from .classifier import train_svm
    y = np.where(labels == 1, 1.0, -1.0)
    timings = {}
    models = {}
    for name, z_train in (("concat", z_cat_train), ("embedded", z_emb_train)):
        t0 = time.perf_counter()
        models[name] = train_svm(z_train, y, c=svm_c, kernel="hik",
                                 class_weights=(1.0, 1.0))
        timings[(name, "train")] = time.perf_counter() - t0
    for name, z_test in (("concat", z_cat_test), ("embedded", z_emb_test)):
        t0 = time.perf_counter()
        decision_values(models[name], z_test)
        timings[(name, "test")] = time.perf_counter() - t0
    return timings


def dump_keypoint_overlays(vol, bundle, out_dir, plane=None):
    """Write original-frame and smoothed-frame overlays with detected static
    points marked, for the given plane (default: the central axial plane)."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = bundle.config if bundle is not None else PipelineConfig()
    if plane is None:
        from .volume import plane_from_center
        nx, ny, nz = vol.dims
        plane = plane_from_center(((nx - 1) / 2, (ny - 1) / 2, (nz - 1) / 2),
                                  (0.0, 0.0, 1.0), width=cfg.plane_size,
                                  height=cfg.plane_size, pixel_step=cfg.pixel_step)
    seq = extract_plane_sequence(vol, plane)
    smoothed = smooth_sequence(seq, smoothing_config(cfg))
    written = []
    counts = {"original": 0, "smoothed": 0}
    for label, frames in (("original", seq.frames), ("smoothed", smoothed.frames)):
        for t, frame in enumerate(frames):
            kps = detect_static_keypoints(frame, contrast_threshold=cfg.contrast_threshold)
            counts[label] += len(kps)
            overlay = frame.copy()
            for kp in kps:
                x, y = int(round(kp.x)), int(round(kp.y))
                overlay[max(0, y - 1):y + 2, max(0, x - 1):x + 2] = 1.0
            path = os.path.join(out_dir, "%s_%03d.pgm" % (label, t))
            pgm.write_pgm(path, overlay)
            written.append(path)
    return written, counts
