"""Model bundle: every trained component serialized into one directory."""

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from . import matio
from .classifier import FeatureScaler, MulticlassModel, SvmModel
from .codebook import Codebook
from .config import PipelineConfig, config_text, load_config, save_config
from .embedding import EmbeddingModel


class BundleError(Exception):
    pass


@dataclass(frozen=True)
class ModelBundle:
    config: PipelineConfig
    cb_static: Codebook
    cb_spacetime: Codebook
    embedding: EmbeddingModel
    classifier: MulticlassModel
    content_hash: str = ""

    def with_hash(self):
        return ModelBundle(config=self.config, cb_static=self.cb_static,
                           cb_spacetime=self.cb_spacetime, embedding=self.embedding,
                           classifier=self.classifier,
                           content_hash=compute_hash(self))


def _matrices(bundle):
    mats = [
        ("codebook_static", bundle.cb_static.centroids),
        ("codebook_spacetime", bundle.cb_spacetime.centroids),
        ("embed_wx", bundle.embedding.w_x),
        ("embed_wy", bundle.embedding.w_y),
        ("embed_mean_x", bundle.embedding.mean_x),
        ("embed_mean_y", bundle.embedding.mean_y),
    ]
    any_machine = next(iter(bundle.classifier.machines.values()))
    mats.append(("scaler_mins", any_machine.scaler.mins))
    mats.append(("scaler_maxs", any_machine.scaler.maxs))
    for cid in bundle.classifier.class_ids:
        m = bundle.classifier.machines[cid]
        mats.append(("svm_%d_sv" % cid, m.support_vectors))
        mats.append(("svm_%d_coef" % cid, m.dual_coefs))
    return mats


def _meta_lines(bundle):
    emb = bundle.embedding
    lines = [
        "format=planefinder-bundle-1",
        "classes=%s" % ",".join(str(c) for c in bundle.classifier.class_ids),
        "embed_c=%d" % emb.c,
        "embed_epsilon=%.17g" % emb.epsilon,
        "embed_train_n=%d" % emb.train_n,
        "scaler_passthrough=%d"
        % int(next(iter(bundle.classifier.machines.values())).scaler.passthrough),
    ]
    for cid in bundle.classifier.class_ids:
        m = bundle.classifier.machines[cid]
        lines.append("svm_%d_bias=%.17g" % (cid, m.bias))
        lines.append("svm_%d_c=%.17g" % (cid, m.c))
        lines.append("svm_%d_weights=%.17g,%.17g" % (cid, *m.class_weights))
        lines.append("svm_%d_kernel=%s" % (cid, m.kernel))
    return lines


def compute_hash(bundle):
    h = hashlib.sha256()
    h.update(config_text(bundle.config).encode())
    for line in _meta_lines(bundle):
        h.update(line.encode())
    for name, arr in _matrices(bundle):
        h.update(name.encode())
        h.update(np.ascontiguousarray(np.atleast_2d(arr), dtype="<f8").tobytes())
    return h.hexdigest()


def save_bundle(bundle, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    bundle = bundle.with_hash() if not bundle.content_hash else bundle
    for name, arr in _matrices(bundle):
        matio.write_matrix(os.path.join(out_dir, name + ".mat"), arr)
    save_config(bundle.config, os.path.join(out_dir, "config.txt"))
    with open(os.path.join(out_dir, "bundle.manifest"), "w") as fh:
        for line in _meta_lines(bundle):
            fh.write(line + "\n")
        for name, arr in _matrices(bundle):
            shape = np.atleast_2d(arr).shape
            fh.write("matrix=%s %d %d\n" % (name, shape[0], shape[1]))
        fh.write("hash=%s\n" % bundle.content_hash)
    return bundle


def load_bundle(path):
    mpath = os.path.join(path, "bundle.manifest")
    if not os.path.exists(mpath):
        raise BundleError("no bundle.manifest under %s" % path)
    meta = {}
    with open(mpath, "r") as fh:
        for line in fh:
            key, val = line.rstrip("\n").split("=", 1)
            meta.setdefault(key, []).append(val)

    def one(key):
        return meta[key][0]

    def mat(name, flat=False):
        arr = matio.read_matrix(os.path.join(path, name + ".mat"))
        return arr.ravel() if flat else arr

    cfg = load_config(os.path.join(path, "config.txt"))
    scaler = FeatureScaler(mins=mat("scaler_mins", flat=True),
                           maxs=mat("scaler_maxs", flat=True),
                           passthrough=bool(int(one("scaler_passthrough"))))
    class_ids = tuple(int(c) for c in one("classes").split(","))
    machines = {}
    for cid in class_ids:
        weights = tuple(float(w) for w in one("svm_%d_weights" % cid).split(","))
        machines[cid] = SvmModel(
            support_vectors=mat("svm_%d_sv" % cid),
            dual_coefs=mat("svm_%d_coef" % cid, flat=True),
            bias=float(one("svm_%d_bias" % cid)),
            c=float(one("svm_%d_c" % cid)),
            class_weights=weights,
            kernel=one("svm_%d_kernel" % cid),
            scaler=scaler)
    emb = EmbeddingModel(
        w_x=mat("embed_wx"), w_y=mat("embed_wy"),
        mean_x=mat("embed_mean_x", flat=True), mean_y=mat("embed_mean_y", flat=True),
        c=int(one("embed_c")), epsilon=float(one("embed_epsilon")),
        train_n=int(one("embed_train_n")))
    bundle = ModelBundle(
        config=cfg,
        cb_static=Codebook(centroids=mat("codebook_static"), descriptor_kind="static"),
        cb_spacetime=Codebook(centroids=mat("codebook_spacetime"),
                              descriptor_kind="spacetime"),
        embedding=emb,
        classifier=MulticlassModel(class_ids=class_ids, machines=machines),
        content_hash=one("hash"))
    if compute_hash(bundle) != bundle.content_hash:
        raise BundleError("bundle hash mismatch under %s" % path)
    return bundle
