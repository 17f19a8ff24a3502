"""Command-line pipeline driver.

Subcommands: extract, regions, train, eval, trace, cam, synth. Every config
key is available as a --key flag; precedence is CLI > config file >
defaults, and PERCEPT_SEED overrides all seeds. Exit codes: 0 ok, 2 config
error, 3 data error, 4 model error.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import pct1, pipeline
from .backbone import BackboneModel
from .config import RunConfig, config_hash, load_config, seed_fields
from .errors import ConfigError, DataError, ModelError, PerceptError
from .fusion import LinearCamHead, cam, cam_head_train, head_train, \
    quartile_quantize, read_head, stack_maps, write_head
from .labels import (cluster_types, median_binarize, name_types,
                     normalize_traits, read_label_file, read_trait_file,
                     write_label_file, write_trait_file, TRAITS)
from .pose import parse_group_file, parse_pose_stream, serialize_group_file, \
    serialize_pose_stream
from .regions import read_region_file, write_region_file
from .synth import generate_scene, load_profiles

COMMANDS = ("extract", "regions", "train", "eval", "trace", "cam", "synth")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="percept",
        description="person-context descriptor extraction, training, and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key=value config file")
        for f in dataclasses.fields(RunConfig):
            flags = [f"--{f.name}"]
            dashed = f"--{f.name.replace('_', '-')}"
            if dashed != flags[0]:
                flags.append(dashed)
            p.add_argument(*flags, dest=f.name, default=None, metavar="V")
    return parser


def _overrides(args):
    return {f.name: getattr(args, f.name)
            for f in dataclasses.fields(RunConfig)
            if getattr(args, f.name) is not None}


def _require(cfg, **paths):
    for label, path in paths.items():
        if not path:
            raise ConfigError(f"missing input: {label} not set")
        if not os.path.exists(path):
            raise ConfigError(f"missing input: {label} file {path!r} does not exist")


class _Partial:
    """Marker file guarding against silently truncated outputs."""

    def __init__(self, outdir):
        self.path = os.path.join(outdir, ".partial")

    def __enter__(self):
        with open(self.path, "w") as fh:
            fh.write("command in progress\n")
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None and os.path.exists(self.path):
            os.remove(self.path)
        return False


def _manifest(cfg, command, outputs):
    path = os.path.join(cfg.out, f"{command}.manifest.json")
    with open(path, "w") as fh:
        json.dump({"command": command, "config_hash": config_hash(cfg),
                   "seeds": seed_fields(cfg), "outputs": sorted(outputs)},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_frames(cfg):
    with open(cfg.pose_file, "rb") as fh:
        frames = parse_pose_stream(fh.read(), n_joints=cfg.joints, n_max=cfg.n_max)
    if not frames:
        raise DataError(f"pose file {cfg.pose_file} holds no frames")
    return frames


def resolve_labels(cfg):
    """subject id -> label string, per label_mode."""
    mode = cfg.label_mode
    if mode == "types":
        _require(cfg, label_file=cfg.label_file)
        return read_label_file(cfg.label_file)
    _require(cfg, trait_file=cfg.trait_file)
    scores = normalize_traits(read_trait_file(cfg.trait_file))
    if mode == "cluster":
        result = cluster_types(scores, k=3)
        names = name_types(result, scores)
        return {sid: names[c] for sid, c in result.labels.items()}
    if mode.startswith("trait:"):
        trait = mode.split(":", 1)[1]
        if trait not in TRAITS:
            raise ConfigError(f"unknown trait {trait!r} in label_mode")
        return median_binarize(scores, trait)
    raise ConfigError(f"unknown label_mode {mode!r}")


def cmd_synth(cfg):
    profiles = load_profiles(cfg.profiles_file or None)
    scene = generate_scene(cfg.n_subjects, cfg.n_frames, cfg.scene_kind,
                           profiles, cfg.mix_fractions(), cfg.synth_seed,
                           scene_width=cfg.scene_width, scene_height=cfg.scene_height,
                           segment_len=cfg.t)
    os.makedirs(cfg.out, exist_ok=True)
    outputs = []
    with _Partial(cfg.out):
        pose_path = os.path.join(cfg.out, "pose.jsonl")
        with open(pose_path, "wb") as fh:
            fh.write(serialize_pose_stream(scene.frames, decimals=5))
        outputs.append(pose_path)
        if scene.kind == "social":
            group_path = os.path.join(cfg.out, "groups.jsonl")
            with open(group_path, "wb") as fh:
                fh.write(serialize_group_file(scene.group_assignments))
            outputs.append(group_path)
        trait_path = os.path.join(cfg.out, "traits.csv")
        write_trait_file(trait_path, scene.traits)
        outputs.append(trait_path)
        types_path = os.path.join(cfg.out, "types.csv")
        write_label_file(types_path, scene.types)
        outputs.append(types_path)
        outputs.append(_manifest(cfg, "synth", outputs))
    print(f"synth: wrote {len(outputs)} files to {cfg.out}")
    return 0


def cmd_extract(cfg):
    _require(cfg, pose_file=cfg.pose_file)
    streams = cfg.stream_list()
    frames = _load_frames(cfg)
    kind = frames[0].scene_kind
    assignments = None
    if "group" in streams:
        if kind == "nonsocial":
            raise ConfigError("group stream undefined for nonsocial scenes")
        _require(cfg, group_file=cfg.group_file)
        with open(cfg.group_file, "rb") as fh:
            assignments = parse_group_file(fh.read())
    regions = None
    if "prox" in streams and kind == "nonsocial":
        _require(cfg, region_file=cfg.region_file)
        regions, _ = read_region_file(cfg.region_file)
    os.makedirs(cfg.out, exist_ok=True)
    with _Partial(cfg.out):
        samples, _ = pipeline.extract_descriptors(frames, cfg, streams,
                                                  assignments=assignments,
                                                  regions=regions)
        if not samples:
            raise DataError("no clips with persistent subjects to extract")
        manifest = pipeline.write_archive(samples, cfg.out)
        _manifest(cfg, "extract", [manifest])
    print(f"extract: {len(samples)} samples ({', '.join(streams)}) -> {cfg.out}")
    return 0


def cmd_regions(cfg):
    _require(cfg, pose_file=cfg.pose_file)
    frames = _load_frames(cfg)
    if frames[0].scene_kind != "nonsocial":
        raise DataError("region discovery expects a nonsocial pose stream")
    os.makedirs(cfg.out, exist_ok=True)
    with _Partial(cfg.out):
        model, _ = pipeline.discover_regions([frames], cfg)
        path = os.path.join(cfg.out, "regions.csv")
        write_region_file(model, path)
        _manifest(cfg, "regions", [path])
    flag = " (k reduced)" if model.reduced else ""
    print(f"regions: {model.k} components{flag} -> {path}")
    return 0


def _archive_features_all(samples, streams, cfg, model, want_maps=False):
    """Feature table calibrated on the full archive (final-model training)."""
    idx = np.arange(len(samples))
    vectors, maps = {}, {}
    for stream in streams:
        vectors[stream], maps[stream] = pipeline.stream_features(
            samples, stream, idx, cfg, model, want_maps=want_maps)
    return vectors, maps


def cmd_train(cfg):
    _require(cfg, archive=cfg.archive)
    samples = pipeline.read_archive(cfg.archive)
    labels = resolve_labels(cfg)
    missing = sorted({s.subject_id for s in samples} - set(labels))
    if missing:
        raise DataError(f"subjects without labels: {missing[:5]}")
    classes = sorted(set(labels.values()))
    class_idx = {c: i for i, c in enumerate(classes)}
    y = np.array([class_idx[labels[s.subject_id]] for s in samples])
    streams = [s for s in cfg.stream_list() if s in samples[0].tensors]
    if not streams:
        raise ConfigError("requested streams not present in archive")
    model = BackboneModel(k=cfg.backbone_k, seed=cfg.backbone_seed)
    os.makedirs(cfg.out, exist_ok=True)
    with _Partial(cfg.out):
        if cfg.head_variant == "linear":
            _, maps = _archive_features_all(samples, streams, cfg, model,
                                            want_maps=True)
            stacked = np.concatenate([maps[s] for s in streams], axis=3)
            features = stacked.mean(axis=(1, 2))
            head = cam_head_train(features, y, n_classes=len(classes),
                                  epochs=cfg.epochs, lr=cfg.lr,
                                  batch_size=cfg.batch_size, seed=cfg.head_seed)
        else:
            vectors, _ = _archive_features_all(samples, streams, cfg, model)
            x = np.hstack([vectors[s] for s in streams])
            head = head_train(x, y, n_classes=len(classes), hidden=cfg.hidden,
                              epochs=cfg.epochs, lr=cfg.lr,
                              batch_size=cfg.batch_size, seed=cfg.head_seed)
        path = os.path.join(cfg.out, "head.model")
        write_head(path, head)
        classes_path = os.path.join(cfg.out, "classes.json")
        with open(classes_path, "w") as fh:
            json.dump(classes, fh)
            fh.write("\n")
        _manifest(cfg, "train", [path, classes_path])
    print(f"train: {cfg.head_variant} head on {'+'.join(streams)}, "
          f"final loss {head.final_loss:.4f} -> {path}")
    return 0


def cmd_eval(cfg):
    _require(cfg, archive=cfg.archive)
    samples = pipeline.read_archive(cfg.archive)
    labels = resolve_labels(cfg)
    available = set(samples[0].tensors)
    base = pipeline.SOCIAL_COMBOS if cfg.scene_kind == "social" \
        else pipeline.NONSOCIAL_COMBOS
    combos = [c for c in base if set(c) <= available]
    if not combos:
        raise ConfigError(f"archive streams {sorted(available)} support no "
                          f"{cfg.scene_kind} ablation row")
    subjects = sorted({s.subject_id for s in samples})
    folds = pipeline.make_folds(subjects, cfg)
    os.makedirs(cfg.out, exist_ok=True)
    with _Partial(cfg.out):
        reports, predictions, classes = pipeline.run_protocol(
            samples, labels, folds, combos, cfg)
        report_path = os.path.join(cfg.out, "report.csv")
        summary = pipeline.write_report(reports, report_path, cfg.protocol)
        outputs = [report_path, summary]
        for combo in combos:
            name = pipeline.combo_name(combo).replace("+", "_")
            pred_path = os.path.join(cfg.out, f"predictions_{name}.csv")
            pipeline.write_predictions(predictions[combo], classes, pred_path)
            outputs.append(pred_path)
        _manifest(cfg, "eval", outputs)
    for r in reports:
        print(f"eval: {r.combo:<28} {100 * r.mean_accuracy:6.2f}% {r.stars}")
    return 0


def cmd_trace(cfg):
    _require(cfg, archive=cfg.archive)
    samples = pipeline.read_archive(cfg.archive)
    match = [s for s in samples
             if s.clip_id == cfg.clip_id and s.subject_id == cfg.subject_id]
    if not match:
        raise DataError(f"no sample for clip {cfg.clip_id} subject {cfg.subject_id}")
    rows = pipeline.trace_rows(match[0], cfg.t)
    os.makedirs(cfg.out, exist_ok=True)
    with _Partial(cfg.out):
        path = os.path.join(cfg.out,
                            f"trace_c{cfg.clip_id:05d}_s{cfg.subject_id:05d}.csv")
        with open(path, "w") as fh:
            fh.write("frame,d_pers,d_group,d_prox\n")
            for row in rows:
                fh.write(f"{row['frame']},{row['d_pers']},{row['d_group']},"
                         f"{row['d_prox']}\n")
        _manifest(cfg, "trace", [path])
    print(f"trace: {len(rows)} frames -> {path}")
    return 0


def cmd_cam(cfg):
    _require(cfg, archive=cfg.archive, model_file=cfg.model_file)
    head = read_head(cfg.model_file)
    if not isinstance(head, LinearCamHead):
        raise ModelError("cam requires the GAP-linear head variant "
                         "(train with head_variant=linear)")
    samples = pipeline.read_archive(cfg.archive)
    streams = [s for s in ("pers", "group") if s in samples[0].tensors]
    if len(streams) < 2:
        raise DataError("cam needs pers and group streams in the archive")
    if not 0 <= cfg.cam_class < head.n_classes:
        raise ConfigError(f"cam_class {cfg.cam_class} out of range "
                          f"(head has {head.n_classes} classes)")
    model = BackboneModel(k=cfg.backbone_k, seed=cfg.backbone_seed)
    _, maps = _archive_features_all(samples, streams, cfg, model, want_maps=True)
    stacked = np.concatenate([maps[s] for s in streams], axis=3)
    if stacked.shape[3] != head.in_dim:
        raise ModelError(f"head expects {head.in_dim} units, archive gives "
                         f"{stacked.shape[3]}")
    os.makedirs(cfg.out, exist_ok=True)
    outputs = []
    with _Partial(cfg.out):
        for i, s in enumerate(samples):
            act = cam(stacked[i], head, cfg.cam_class)
            stem = os.path.join(cfg.out, f"cam_c{s.clip_id:05d}_s{s.subject_id:05d}")
            pct1.write_pct1(stem + "_act.pct1", act.astype(np.float32))
            quart = quartile_quantize(act)
            with open(stem + "_quartiles.txt", "w") as fh:
                for row in quart:
                    fh.write(" ".join(row) + "\n")
            outputs += [stem + "_act.pct1", stem + "_quartiles.txt"]
        _manifest(cfg, "cam", outputs)
    print(f"cam: class {cfg.cam_class}, {len(samples)} maps -> {cfg.out}")
    return 0


_DISPATCH = {
    "synth": cmd_synth, "extract": cmd_extract, "regions": cmd_regions,
    "train": cmd_train, "eval": cmd_eval, "trace": cmd_trace, "cam": cmd_cam,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        return _DISPATCH[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 4
    except (DataError, PerceptError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
