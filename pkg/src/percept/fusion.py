"""Stream fusion, the trainable softmax heads, and class activation maps.

Two head variants share one SGD trainer: the recognition head is
FC-ReLU-FC-softmax; the activation-map head is a single bias-free linear
layer on globally average-pooled feature maps, which is what makes the
per-location weighted sum in cam() equal the class logit on average.
"""

from dataclasses import dataclass

import numpy as np

from . import pct1
from .errors import DataError, ModelError

STREAM_ORDER = ("pers", "group", "prox")


@dataclass
class FeatureBundle:
    subject_id: int
    clip_id: int
    pers: np.ndarray = None
    group: np.ndarray = None
    prox: np.ndarray = None

    def present(self):
        return [s for s in STREAM_ORDER if getattr(self, s) is not None]


def fuse_concat(bundle):
    """Concatenate present streams in fixed (pers, group, prox) order."""
    streams = bundle.present()
    if not streams:
        raise DataError("bundle has no streams to fuse")
    vecs = [np.asarray(getattr(bundle, s)) for s in streams]
    lengths = {v.shape[0] for v in vecs}
    if len(lengths) != 1:
        raise DataError(f"stream lengths differ: {sorted(lengths)}")
    return np.concatenate(vecs)


@dataclass
class PcaTransform:
    mean: np.ndarray          # (D,)
    components: np.ndarray    # (n_comp, D), orthonormal rows
    retained: float           # achieved explained-variance fraction

    @property
    def n_components(self):
        return self.components.shape[0]


def pca_fit(matrix, target=0.98):
    """Leading covariance eigenvectors reaching the target variance fraction."""
    x = np.asarray(matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError("pca_fit needs at least 2 samples")
    if not 0.0 < target <= 1.0:
        raise DataError(f"target variance fraction must be in (0, 1], got {target}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (x.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    evals = np.maximum(evals[::-1], 0.0)
    evecs = evecs[:, ::-1]
    total = evals.sum()
    if total <= 0:
        raise DataError("pca_fit on rank-0 (constant) data")
    cum = np.cumsum(evals) / total
    n_comp = int(np.searchsorted(cum, target - 1e-12) + 1)
    n_comp = min(n_comp, evals.shape[0])
    return PcaTransform(mean=mean, components=evecs[:, :n_comp].T.copy(),
                        retained=float(cum[n_comp - 1]))


def pca_transform(x, transform):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != transform.mean.shape[0]:
        raise DataError(f"dimension mismatch: {x.shape[-1]} vs {transform.mean.shape[0]}")
    return (x - transform.mean) @ transform.components.T


def pca_inverse(y, transform):
    return np.asarray(y) @ transform.components + transform.mean


def softmax(logits):
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class HeadModel:
    """FC-ReLU-FC-softmax recognition head."""
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    hidden: int
    n_classes: int
    seed: int
    final_loss: float = float("nan")

    @property
    def in_dim(self):
        return self.w1.shape[1]


@dataclass
class LinearCamHead:
    """Bias-free softmax layer on globally average-pooled feature maps."""
    weights: np.ndarray    # (n_classes, K)
    n_classes: int
    seed: int
    final_loss: float = float("nan")

    @property
    def in_dim(self):
        return self.weights.shape[1]


def init_head(in_dim, hidden, n_classes, seed):
    rng = np.random.default_rng(seed)
    return HeadModel(
        w1=rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(hidden, in_dim)),
        b1=np.zeros(hidden),
        w2=rng.normal(0.0, np.sqrt(1.0 / hidden), size=(n_classes, hidden)),
        b2=np.zeros(n_classes),
        hidden=hidden, n_classes=n_classes, seed=seed)


def head_loss_and_grads(model, features, labels):
    """Mean cross-entropy and its analytic gradients for one batch."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    z1 = x @ model.w1.T + model.b1
    a1 = np.maximum(z1, 0.0)
    probs = softmax(a1 @ model.w2.T + model.b2)
    n = x.shape[0]
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    da1 = dlogits @ model.w2
    dz1 = da1 * (z1 > 0)
    return loss, {
        "w1": dz1.T @ x, "b1": dz1.sum(axis=0),
        "w2": dlogits.T @ a1, "b2": dlogits.sum(axis=0),
    }


def _check_labels(labels, n_classes):
    y = np.asarray(labels)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    missing = sorted(set(range(n_classes)) - set(int(c) for c in np.unique(y)))
    if missing:
        raise DataError(f"classes missing from training set: {missing}")
    return y, n_classes


def head_train(features, labels, n_classes=None, hidden=128, epochs=300,
               lr=0.01, batch_size=32, seed=0, shuffle=True):
    """Mini-batch SGD on mean cross-entropy; deterministic per seed.

    shuffle=False keeps the sample order as given, which lets callers
    construct exact batch correspondences (e.g. duplicated-data probes).
    """
    x = np.asarray(features, dtype=float)
    y, n_classes = _check_labels(labels, n_classes)
    model = init_head(x.shape[1], hidden, n_classes, seed)
    rng = np.random.default_rng(seed)
    n = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n) if shuffle else np.arange(n)
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            _, grads = head_loss_and_grads(model, x[idx], y[idx])
            model.w1 -= lr * grads["w1"]
            model.b1 -= lr * grads["b1"]
            model.w2 -= lr * grads["w2"]
            model.b2 -= lr * grads["b2"]
    model.final_loss, _ = head_loss_and_grads(model, x, y)
    return model


def head_predict(x, model):
    """Class probabilities for one vector or a batch."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.in_dim:
        raise DataError(f"dimension mismatch: {x.shape[-1]} vs {model.in_dim}")
    if isinstance(model, LinearCamHead):
        return softmax(x @ model.weights.T)
    a1 = np.maximum(x @ model.w1.T + model.b1, 0.0)
    return softmax(a1 @ model.w2.T + model.b2)


def cam_head_train(features, labels, n_classes=None, epochs=300, lr=0.01,
                   batch_size=32, seed=0, shuffle=True):
    """SGD softmax training of the bias-free GAP-linear CAM head."""
    x = np.asarray(features, dtype=float)
    y, n_classes = _check_labels(labels, n_classes)
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, np.sqrt(1.0 / x.shape[1]), size=(n_classes, x.shape[1]))
    n = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n) if shuffle else np.arange(n)
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            probs = softmax(x[idx] @ w.T)
            d = probs
            d[np.arange(idx.shape[0]), y[idx]] -= 1.0
            w -= lr * (d.T @ x[idx]) / idx.shape[0]
    probs = softmax(x @ w.T)
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))
    return LinearCamHead(weights=w, n_classes=n_classes, seed=seed, final_loss=loss)


def decision_fuse_sum(prob_vectors):
    """Sum-rule late fusion of per-stream probability vectors."""
    if not prob_vectors:
        raise DataError("decision_fuse_sum needs at least one vector")
    mat = np.asarray(prob_vectors, dtype=float)
    if mat.ndim != 2:
        raise DataError("probability vectors must share one length")
    if np.any(np.abs(mat.sum(axis=1) - 1.0) > 1e-6):
        raise DataError("inputs must be probability vectors summing to 1")
    total = mat.sum(axis=0)
    return total / total.sum()


def gap(maps):
    """Global average pool: (4, 4, K) maps -> length-K vector."""
    values = maps.values if hasattr(maps, "values") else np.asarray(maps)
    return values.mean(axis=(0, 1))


def stack_maps(maps_list):
    """Concatenate per-stream 4x4 feature maps along the unit axis."""
    arrays = [m.values if hasattr(m, "values") else np.asarray(m) for m in maps_list]
    return np.concatenate(arrays, axis=2)


def cam(maps, head, class_index):
    """Per-location class evidence: sum over units of w_k^c * f_k(x, y)."""
    if not isinstance(head, LinearCamHead):
        raise ModelError("class activation maps require the GAP-linear head variant")
    values = maps.values if hasattr(maps, "values") else np.asarray(maps)
    if values.shape[2] != head.in_dim:
        raise DataError(f"unit count mismatch: {values.shape[2]} vs {head.in_dim}")
    return values @ head.weights[class_index]


def quartile_quantize(act):
    """Label map entries low/medium/high by the 25th/75th percentiles.

    Constant maps are all 'medium' by explicit rule.
    """
    act = np.asarray(act, dtype=float)
    if act.size == 0:
        raise DataError("empty activation map")
    if act.max() == act.min():
        return np.full(act.shape, "medium", dtype="<U6")
    q1 = np.percentile(act, 25)
    q3 = np.percentile(act, 75)
    out = np.full(act.shape, "medium", dtype="<U6")
    out[act <= q1] = "low"
    out[act > q3] = "high"
    return out


_HEAD_MAGIC = "PERCEPT-HEAD 1"


def write_head(path, model):
    """Model file: text header (dims, seed, variant) + PCT1 parameter blocks."""
    if isinstance(model, LinearCamHead):
        header = [_HEAD_MAGIC, "variant linear",
                  f"in_dim {model.in_dim}", f"classes {model.n_classes}",
                  f"seed {model.seed}", f"final_loss {model.final_loss!r}",
                  "tensors 1"]
        blocks = [model.weights]
    else:
        header = [_HEAD_MAGIC, "variant mlp",
                  f"in_dim {model.in_dim}", f"hidden {model.hidden}",
                  f"classes {model.n_classes}", f"seed {model.seed}",
                  f"final_loss {model.final_loss!r}", "tensors 4"]
        blocks = [model.w1, model.b1, model.w2, model.b2]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n\n").encode("ascii"))
        for b in blocks:
            fh.write(pct1.to_bytes(np.asarray(b, dtype=np.float32)))


def read_head(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    split = buf.find(b"\n\n")
    if split < 0 or not buf.startswith(_HEAD_MAGIC.encode()):
        raise ModelError(f"{path} is not a head model file")
    fields = {}
    for line in buf[:split].decode("ascii").splitlines()[1:]:
        key, _, val = line.partition(" ")
        fields[key] = val
    offset = split + 2
    blocks = []
    for _ in range(int(fields["tensors"])):
        arr, offset = pct1.from_bytes(buf, offset)
        blocks.append(arr.astype(float))
    if fields["variant"] == "linear":
        return LinearCamHead(weights=blocks[0], n_classes=int(fields["classes"]),
                             seed=int(fields["seed"]),
                             final_loss=float(fields["final_loss"]))
    if fields["variant"] == "mlp":
        return HeadModel(w1=blocks[0], b1=blocks[1], w2=blocks[2], b2=blocks[3],
                         hidden=int(fields["hidden"]), n_classes=int(fields["classes"]),
                         seed=int(fields["seed"]), final_loss=float(fields["final_loss"]))
    raise ModelError(f"unknown head variant {fields['variant']!r}")
