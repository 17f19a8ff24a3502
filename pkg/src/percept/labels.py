"""Trait scores to labels, evaluation splits, and significance testing.

Subjects carry Big-Five trait scores (E, A, C, N, OE). Labels come either
from agglomerative clustering of the normalized 5D vectors into three
personality types (resilient / undercontrolled / overcontrolled, named by
their mean E and N profile) or from a per-trait HIGH/LOW median split.
"""

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

TRAITS = ("E", "A", "C", "N", "OE")
TYPE_NAMES = ("resilient", "undercontrolled", "overcontrolled")


@dataclass
class TraitScores:
    subject_id: int
    values: np.ndarray   # (5,) in TRAITS order, each in [0, 1]

    def trait(self, name):
        return float(self.values[TRAITS.index(name)])


def normalize_traits(raw):
    """Min-max normalize each trait over the population to [0, 1].

    `raw` is a list of (subject_id, {trait: value}). A constant trait maps
    to 0.5 for everyone; a missing trait is an error.
    """
    if len(raw) < 2:
        raise DataError("normalize_traits needs at least 2 subjects")
    for sid, scores in raw:
        missing = [t for t in TRAITS if t not in scores]
        if missing:
            raise DataError(f"subject {sid} missing trait(s) {missing}")
    mat = np.array([[float(scores[t]) for t in TRAITS] for _, scores in raw])
    lo, hi = mat.min(axis=0), mat.max(axis=0)
    span = hi - lo
    out = np.where(span > 0, (mat - lo) / np.where(span > 0, span, 1.0), 0.5)
    return [TraitScores(subject_id=sid, values=out[i])
            for i, (sid, _) in enumerate(raw)]


@dataclass
class ClusterResult:
    labels: dict          # subject_id -> cluster index (0..k-1)
    k: int
    merged_duplicates: bool = False


def cluster_types(scores, k=3):
    """Cluster 5D trait vectors into k types (Euclidean, average linkage).

    Clusters are numbered by creation order; tied merge distances resolve to
    the pair with the smallest (min id, max id). Fewer distinct vectors than
    k yields fewer clusters and a merge note. Cluster indices are
    canonicalized by smallest member position.
    """
    vectors = np.stack([s.values for s in scores])
    n = vectors.shape[0]
    if n < k:
        raise DataError(f"need at least {k} subjects, got {n}")
    distinct = np.unique(vectors, axis=0).shape[0]
    merged = distinct < k
    k_eff = min(k, distinct)

    # sizes and average-linkage distances maintained incrementally
    members = {i: [i] for i in range(n)}
    dist = {}
    for i, j in itertools.combinations(range(n), 2):
        dist[(i, j)] = float(np.linalg.norm(vectors[i] - vectors[j]))
    next_id = n
    while len(members) > k_eff:
        best = min(dist, key=lambda p: (dist[p], p))
        a, b = best
        size_a, size_b = len(members[a]), len(members[b])
        merged_members = members.pop(a) + members.pop(b)
        new_dist = {}
        for (i, j), d in dist.items():
            if a in (i, j) or b in (i, j):
                continue
            new_dist[(i, j)] = d
        for o in members:
            da = dist[(min(a, o), max(a, o))]
            db = dist[(min(b, o), max(b, o))]
            new_dist[(o, next_id)] = (size_a * da + size_b * db) / (size_a + size_b)
        members[next_id] = merged_members
        dist = new_dist
        next_id += 1

    clusters = sorted(members.values(), key=min)
    labels = {}
    for idx, mem in enumerate(clusters):
        for m in mem:
            labels[scores[m].subject_id] = idx
    return ClusterResult(labels=labels, k=len(clusters), merged_duplicates=merged)


def name_types(result, scores):
    """Map 3 clusters to type names by their mean E and N profile.

    resilient = lowest mean N, overcontrolled = lowest mean E, and the
    remaining cluster is undercontrolled. Ties or one cluster winning both
    criteria raise an ambiguity error carrying the cluster profiles.
    """
    labels = result.labels if isinstance(result, ClusterResult) else result
    by_subject = {s.subject_id: s for s in scores}
    clusters = sorted(set(labels.values()))
    if len(clusters) != 3:
        raise DataError(f"type naming needs exactly 3 clusters, got {len(clusters)}")
    mean_e, mean_n = {}, {}
    for c in clusters:
        vals = np.stack([by_subject[sid].values for sid, ci in labels.items() if ci == c])
        mean_e[c] = float(vals[:, TRAITS.index("E")].mean())
        mean_n[c] = float(vals[:, TRAITS.index("N")].mean())
    profile = {c: (mean_e[c], mean_n[c]) for c in clusters}

    n_sorted = sorted(clusters, key=lambda c: mean_n[c])
    e_sorted = sorted(clusters, key=lambda c: mean_e[c])
    if mean_n[n_sorted[0]] == mean_n[n_sorted[1]]:
        raise DataError(f"ambiguous naming: tie on lowest N; profiles {profile}")
    if mean_e[e_sorted[0]] == mean_e[e_sorted[1]]:
        raise DataError(f"ambiguous naming: tie on lowest E; profiles {profile}")
    resilient, overcontrolled = n_sorted[0], e_sorted[0]
    if resilient == overcontrolled:
        raise DataError(
            f"ambiguous naming: one cluster has both lowest N and lowest E; "
            f"profiles {profile}")
    remaining = [c for c in clusters if c not in (resilient, overcontrolled)]
    return {resilient: "resilient",
            overcontrolled: "overcontrolled",
            remaining[0]: "undercontrolled"}


def median_binarize(scores, trait):
    """HIGH/LOW per subject by the population median (ties go HIGH)."""
    vals = np.array([s.trait(trait) for s in scores])
    med = np.median(vals)
    return {s.subject_id: ("HIGH" if s.trait(trait) >= med else "LOW")
            for s in scores}


def kfold_split(subject_ids, k=10, seed=0):
    """Seeded shuffle of subjects into k folds with sizes differing by <= 1."""
    ids = sorted(subject_ids)
    if k > len(ids):
        raise DataError(f"k={k} exceeds subject count {len(ids)}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    return [sorted(ids[i] for i in chunk) for chunk in np.array_split(perm, k)]


def loso_split(subject_ids):
    """One fold per subject, in subject-id order."""
    ids = sorted(subject_ids)
    if len(ids) < 2:
        raise DataError("leave-one-subject-out needs at least 2 subjects")
    return [[sid] for sid in ids]


def asterisks(p):
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def significance(acc_a, acc_b, max_exact=20, n_samples=10000, seed=0):
    """Two-sided paired sign-flip permutation test on fold accuracies.

    Exact enumeration of all 2^n sign patterns for n <= max_exact, else
    n_samples seeded draws. Returns (p_value, asterisk code).
    """
    a = np.asarray(acc_a, dtype=float)
    b = np.asarray(acc_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError("significance needs two equal-length fold-accuracy lists")
    diff = a - b
    n = diff.shape[0]
    observed = abs(float(diff.mean()))
    if n <= max_exact:
        count, total = 0, 2 ** n
        chunk = 1 << 16
        for lo in range(0, total, chunk):
            codes = np.arange(lo, min(lo + chunk, total), dtype=np.uint64)
            bits = (codes[:, None] >> np.arange(n, dtype=np.uint64)) & 1
            signs = 1.0 - 2.0 * bits
            stats = np.abs((signs * diff).mean(axis=1))
            count += int(np.sum(stats >= observed - 1e-12))
        p = count / total
    else:
        rng = np.random.default_rng(seed)
        signs = rng.choice((-1.0, 1.0), size=(n_samples, n))
        stats = np.abs((signs * diff).mean(axis=1))
        # identity permutation always counts, keeping p in (0, 1]
        p = (1 + int(np.sum(stats >= observed - 1e-12))) / (n_samples + 1)
    return p, asterisks(p)


@dataclass
class EvalReport:
    combo: str
    fold_accuracies: list = field(default_factory=list)
    mean_accuracy: float = 0.0
    p_value: float = None    # vs the reference (first) combo
    stars: str = ""


def read_trait_file(path):
    """Trait CSV `subject_id,E,A,C,N,OE` -> list of (subject_id, {trait: value})."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"trait file {path} is empty")
    out = []
    for row in rows:
        try:
            out.append((int(row["subject_id"]),
                        {t: float(row[t]) for t in TRAITS if row.get(t) is not None}))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"trait file {path}: bad row {row}") from exc
    return out


def write_trait_file(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", *TRAITS])
        for sid, scores in rows:
            writer.writerow([sid, *(repr(float(scores[t])) for t in TRAITS)])


def read_label_file(path):
    """Label CSV `subject_id,label` -> {subject_id: label}."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"label file {path} is empty")
    try:
        return {int(r["subject_id"]): r["label"] for r in rows}
    except (KeyError, ValueError) as exc:
        raise DataError(f"label file {path}: bad rows") from exc


def write_label_file(path, labels):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "label"])
        for sid in sorted(labels):
            writer.writerow([sid, labels[sid]])
