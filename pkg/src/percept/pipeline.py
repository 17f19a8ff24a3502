"""End-to-end orchestration: descriptors -> backbone features -> evaluation.

This is the reusable layer under the CLI: it extracts per-(clip, subject)
stream tensors, discovers nonsocial regions, turns tensors into pooled
backbone feature vectors with per-fold calibration (fit on training folds
only), and runs the cross-validation / leave-one-subject-out protocols over
descriptor-stream combinations.
"""

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import pct1
from .backbone import (BackboneModel, bilinear_resize, fit_calibration,
                       round_half_up)
from .descriptors import group_average_pool, person_descriptor, social_proxemics
from .errors import ConfigError, DataError
from .fusion import (decision_fuse_sum, head_predict, head_train, pca_fit,
                     pca_transform)
from .labels import EvalReport, kfold_split, loso_split, significance
from .pose import window
from .regions import (PatchGrid, active_patch_points, arm_motion_features,
                      fit_gmm, nonsocial_proxemics, region_centers)

# ablation sets mirroring the social / nonsocial experiment tables
SOCIAL_COMBOS = (("pers",), ("prox", "group"), ("pers", "prox"),
                 ("pers", "group"), ("pers", "prox", "group"))
NONSOCIAL_COMBOS = (("pers",), ("pers", "prox"))


def combo_name(combo):
    return "+".join(f"D_{s}" for s in combo)


@dataclass
class Sample:
    clip_id: int
    subject_id: int
    tensors: dict = field(default_factory=dict)    # stream -> DescriptorTensor


def clip_group_members(clip, assignments, subject_id):
    """Group members for a clip: the subject's group at the clip's first
    frame, restricted to subjects persistent through the clip. Ungrouped
    subjects form a singleton group."""
    ga = assignments.get(clip.start_frame) if assignments else None
    group = ga.group_of(subject_id) if ga else None
    if not group:
        return [subject_id]
    members = [sid for sid in sorted(group) if sid in clip.subject_ids]
    return members or [subject_id]


def extract_descriptors(frames, cfg, streams, assignments=None, regions=None,
                        clip_offset=0, subject_offset=0):
    """Per-(clip, subject) descriptor tensors for the requested streams."""
    kind = frames[0].scene_kind if frames else cfg.scene_kind
    if "group" in streams and kind == "nonsocial":
        raise ConfigError("group stream undefined for nonsocial scenes")
    if "group" in streams and assignments is None:
        raise ConfigError("group stream requested but no group file given")
    if "prox" in streams and kind == "nonsocial" and regions is None:
        raise ConfigError("nonsocial prox stream requested but no region file given")

    clips = window(frames, cfg.t, cfg.effective_stride())
    ref = cfg.ref_joint_list()
    samples = []
    for ci, clip in enumerate(clips):
        person_cache = {}
        if "pers" in streams or "group" in streams:
            for sid in clip.subject_ids:
                person_cache[sid] = person_descriptor(clip, sid, ref)
        for sid in clip.subject_ids:
            sample = Sample(clip_id=clip_offset + ci,
                            subject_id=subject_offset + sid)
            if "pers" in streams:
                sample.tensors["pers"] = person_cache[sid]
            if "group" in streams:
                members = clip_group_members(clip, assignments, sid)
                sample.tensors["group"] = group_average_pool(
                    [person_cache[m] for m in members])
            if "prox" in streams:
                if kind == "social":
                    sample.tensors["prox"] = social_proxemics(
                        clip, sid, cfg.n_max, cfg.effective_r_far())
                else:
                    sample.tensors["prox"] = nonsocial_proxemics(clip, sid, regions)
            samples.append(sample)
    return samples, clips


def discover_regions(frames_list, cfg, seed=None):
    """Arm-motion histograms over all clips -> seeded GMM -> canonical regions."""
    grid = PatchGrid(width=cfg.scene_width, height=cfg.scene_height,
                     rows=cfg.grid_rows, cols=cfg.grid_cols)
    clips = []
    for frames in frames_list:
        clips.extend(window(frames, cfg.t, cfg.effective_stride()))
    if not clips:
        raise DataError("no clips available for region discovery")
    hists = arm_motion_features(clips, grid, m_min=cfg.m_min, m_max=cfg.m_max,
                                orient_bins=cfg.orient_bins, mag_bins=cfg.mag_bins)
    points, weights = active_patch_points(hists, grid)
    if points.shape[0] == 0:
        raise DataError("no arm-motion energy found; cannot discover regions")
    model = fit_gmm(points, weights, cfg.regions,
                    seed=cfg.gmm_seed if seed is None else seed,
                    sigma_min_sq=cfg.sigma_min_sq,
                    tol=cfg.gmm_tol, max_iter=cfg.gmm_max_iter)
    return model, region_centers(model)


def _quantize_batch(tensors, calib):
    """Vectorized quantize_and_resize over same-shape tensors."""
    data = np.stack([t.data for t in tensors])
    clipped = np.clip(data, calib.mins, calib.maxs)
    scaled = round_half_up(255.0 * (clipped - calib.mins) / (calib.maxs - calib.mins))
    if scaled.shape[3] == 2:
        scaled = np.concatenate([scaled, np.zeros_like(scaled[..., :1])], axis=3)
    out = np.empty((scaled.shape[0], 68, 68, 3), dtype=np.uint8)
    for lo in range(0, scaled.shape[0], 256):
        resized = bilinear_resize(scaled[lo:lo + 256], 68, 68)
        out[lo:lo + 256] = np.clip(round_half_up(resized), 0, 255).astype(np.uint8)
    return out


def stream_features(samples, stream, train_idx, cfg, model, want_maps=False):
    """Pooled backbone vectors for one stream, calibrated on the train fold.

    Returns (vectors (N, 4K), maps (N, 4, 4, K) or None).
    """
    tensors = [s.tensors[stream] for s in samples]
    calib = fit_calibration([tensors[i] for i in train_idx])
    pixels = _quantize_batch(tensors, calib)
    maps = model.forward_batch(pixels)
    vectors = np.transpose(maps.mean(axis=1), (0, 2, 1)).reshape(maps.shape[0], -1)
    return vectors, (maps if want_maps else None)


def _standardize(train, test):
    mu = train.mean(axis=0)
    sd = np.maximum(train.std(axis=0), 1e-8)
    return (train - mu) / sd, (test - mu) / sd


def _fuse_features(per_stream, combo, train_idx, test_idx, cfg):
    """Apply the configured feature-fusion mode; returns (X_train, X_test)."""
    trains, tests = [], []
    for stream in ("pers", "group", "prox"):
        if stream not in combo:
            continue
        vec = per_stream[stream]
        tr, te = vec[train_idx], vec[test_idx]
        if cfg.standardize:
            tr, te = _standardize(tr, te)
        if cfg.fusion == "pca_stream":
            p = pca_fit(tr, cfg.pca_target)
            tr, te = pca_transform(tr, p), pca_transform(te, p)
        trains.append(tr)
        tests.append(te)
    x_train, x_test = np.hstack(trains), np.hstack(tests)
    if cfg.fusion == "pca_concat":
        p = pca_fit(x_train, cfg.pca_target)
        x_train, x_test = pca_transform(x_train, p), pca_transform(x_test, p)
    return x_train, x_test


def make_folds(subject_ids, cfg):
    if cfg.protocol == "loso":
        return loso_split(subject_ids)
    return kfold_split(subject_ids, k=cfg.folds, seed=cfg.split_seed)


def run_protocol(samples, labels, folds, combos, cfg, model=None):
    """Train/evaluate every stream combination over the folds.

    `labels` maps subject id -> label string; every sample of a subject
    carries that subject's label, and all of a subject's clips stay on one
    side of each split. Returns one EvalReport per combo (significance and
    asterisks of each row are paired against the first combo).
    """
    model = model or BackboneModel(k=cfg.backbone_k, seed=cfg.backbone_seed)
    missing = sorted({s.subject_id for s in samples} - set(labels))
    if missing:
        raise DataError(f"subjects without labels: {missing[:5]}")
    classes = sorted(set(labels.values()))
    class_idx = {c: i for i, c in enumerate(classes)}
    y_all = np.array([class_idx[labels[s.subject_id]] for s in samples])
    streams_needed = sorted({s for combo in combos for s in combo})

    fold_accs = {combo: [] for combo in combos}
    predictions = {combo: [] for combo in combos}
    for fold_i, test_subjects in enumerate(folds):
        test_set = set(test_subjects)
        train_idx = np.array([i for i, s in enumerate(samples)
                              if s.subject_id not in test_set])
        test_idx = np.array([i for i, s in enumerate(samples)
                             if s.subject_id in test_set])
        if train_idx.size == 0 or test_idx.size == 0:
            raise DataError(f"fold {fold_i} leaves an empty train or test side")

        def one_stream(stream):
            return stream_features(samples, stream, train_idx, cfg, model)[0]

        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                vecs = list(pool.map(one_stream, streams_needed))
        else:
            vecs = [one_stream(s) for s in streams_needed]
        per_stream = dict(zip(streams_needed, vecs))

        seed = cfg.head_seed + fold_i
        for combo in combos:
            if cfg.fusion == "decision":
                probs = []
                for stream in combo:
                    tr, te = per_stream[stream][train_idx], per_stream[stream][test_idx]
                    if cfg.standardize:
                        tr, te = _standardize(tr, te)
                    head = head_train(tr, y_all[train_idx], n_classes=len(classes),
                                      hidden=cfg.hidden, epochs=cfg.epochs, lr=cfg.lr,
                                      batch_size=cfg.batch_size, seed=seed)
                    probs.append(head_predict(te, head))
                p = np.stack([decision_fuse_sum([pv[i] for pv in probs])
                              for i in range(test_idx.size)])
            else:
                x_train, x_test = _fuse_features(per_stream, combo,
                                                 train_idx, test_idx, cfg)
                head = head_train(x_train, y_all[train_idx], n_classes=len(classes),
                                  hidden=cfg.hidden, epochs=cfg.epochs, lr=cfg.lr,
                                  batch_size=cfg.batch_size, seed=seed)
                p = head_predict(x_test, head)
            pred = p.argmax(axis=1)
            fold_accs[combo].append(float((pred == y_all[test_idx]).mean()))
            for row, i in enumerate(test_idx):
                predictions[combo].append(
                    (samples[i].clip_id, samples[i].subject_id,
                     classes[y_all[i]], classes[pred[row]], p[row]))

    reports = []
    ref = fold_accs[combos[0]]
    for combo in combos:
        accs = fold_accs[combo]
        rep = EvalReport(combo=combo_name(combo), fold_accuracies=accs,
                         mean_accuracy=float(np.mean(accs)))
        if combo != combos[0]:
            rep.p_value, rep.stars = significance(accs, ref)
        reports.append(rep)
    return reports, predictions, classes


def write_report(reports, path, protocol):
    """CSV report plus a human-readable summary next to it."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["combo", "protocol", "mean_accuracy", "p_vs_first",
                         "stars", "fold_accuracies"])
        for r in reports:
            writer.writerow([r.combo, protocol, f"{r.mean_accuracy:.6f}",
                             "" if r.p_value is None else f"{r.p_value:.6g}",
                             r.stars,
                             ";".join(f"{a:.6f}" for a in r.fold_accuracies)])
    lines = [f"{'combo':<28}{protocol:>10}", "-" * 42]
    for r in reports:
        lines.append(f"{r.combo:<28}{100 * r.mean_accuracy:>8.2f}%{r.stars:<4}")
    summary = path + ".txt"
    with open(summary, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return summary


def write_predictions(predictions, classes, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "subject_id", "true_label", "pred_label",
                         *(f"p_{i}" for i in range(len(classes)))])
        for clip_id, sid, true, pred, probs in predictions:
            writer.writerow([clip_id, sid, true, pred,
                             *(f"{v:.6f}" for v in probs)])


def write_archive(samples, outdir):
    """PCT1 tensor files plus a manifest CSV."""
    os.makedirs(outdir, exist_ok=True)
    rows = []
    for s in samples:
        for stream, tensor in s.tensors.items():
            name = f"c{s.clip_id:05d}_s{s.subject_id:05d}_{stream}.pct1"
            pct1.write_pct1(os.path.join(outdir, name),
                            tensor.data.astype(np.float32))
            rows.append({"clip_id": s.clip_id, "subject_id": s.subject_id,
                         "stream": stream, "file": name,
                         "tensor_stream": tensor.stream,
                         "channels": ";".join(tensor.channel_names)})
    with open(os.path.join(outdir, "manifest.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["clip_id", "subject_id", "stream",
                                                "file", "tensor_stream", "channels"])
        writer.writeheader()
        writer.writerows(rows)
    return os.path.join(outdir, "manifest.csv")


def read_archive(outdir):
    from .descriptors import DescriptorTensor

    manifest = os.path.join(outdir, "manifest.csv")
    if not os.path.exists(manifest):
        raise DataError(f"archive manifest not found: {manifest}")
    with open(manifest, newline="") as fh:
        rows = list(csv.DictReader(fh))
    by_key = {}
    for row in rows:
        key = (int(row["clip_id"]), int(row["subject_id"]))
        sample = by_key.setdefault(key, Sample(clip_id=key[0], subject_id=key[1]))
        data = pct1.read_pct1(os.path.join(outdir, row["file"])).astype(float)
        sample.tensors[row["stream"]] = DescriptorTensor(
            data=data, stream=row["tensor_stream"],
            channel_names=tuple(row["channels"].split(";")))
    return [by_key[k] for k in sorted(by_key)]


def trace_rows(sample, t):
    """Per-frame mean absolute descriptor value for each stream of a sample."""
    rows = []
    for f in range(t):
        row = {"frame": f}
        for col, stream in (("d_pers", "pers"), ("d_group", "group"),
                            ("d_prox", "prox")):
            tensor = sample.tensors.get(stream)
            if tensor is None:
                row[col] = ""
                continue
            h = tensor.data.shape[0]
            if h == t:
                block = tensor.data[f]
            else:
                if h % t:
                    raise DataError(f"stream {stream}: height {h} not a "
                                    f"multiple of t={t}")
                block = tensor.data[np.arange(h // t) * t + f]
            row[col] = float(np.abs(block).mean())
        rows.append(row)
    return rows
