import csv
import json
import os

import numpy as np
import pytest

from percept import pct1
from percept.cli import main

FAST = ["--backbone_k", "8", "--hidden", "8", "--epochs", "4", "--t", "15",
        "--n_frames", "30", "--protocol", "loso"]


def run(*args):
    return main(list(args))


@pytest.fixture(scope="module")
def social_dir(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("social"))
    code = run("synth", "--out", out, "--n_subjects", "6", "--n_frames", "30",
               "--synth_seed", "3", "--scene_kind", "social")
    assert code == 0
    return out


@pytest.fixture(scope="module")
def nonsocial_dir(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("nonsocial"))
    code = run("synth", "--out", out, "--n_subjects", "3", "--n_frames", "60",
               "--synth_seed", "4", "--scene_kind", "nonsocial")
    assert code == 0
    return out


@pytest.fixture(scope="module")
def social_archive(social_dir, tmp_path_factory):
    arch = str(tmp_path_factory.mktemp("arch_social"))
    code = run("extract", "--pose_file", f"{social_dir}/pose.jsonl",
               "--group_file", f"{social_dir}/groups.jsonl",
               "--streams", "pers,group,prox", "--out", arch, *FAST)
    assert code == 0
    return arch


class TestSynth:
    def test_outputs_exist(self, social_dir):
        for name in ("pose.jsonl", "groups.jsonl", "traits.csv", "types.csv",
                     "synth.manifest.json"):
            assert os.path.exists(os.path.join(social_dir, name))
        assert not os.path.exists(os.path.join(social_dir, ".partial"))

    def test_nonsocial_has_no_group_file(self, nonsocial_dir):
        assert not os.path.exists(os.path.join(nonsocial_dir, "groups.jsonl"))

    def test_manifest_carries_hash_and_seeds(self, social_dir):
        with open(os.path.join(social_dir, "synth.manifest.json")) as fh:
            manifest = json.load(fh)
        assert manifest["command"] == "synth"
        assert "synth_seed" in manifest["seeds"]
        assert len(manifest["config_hash"]) == 16

    def test_deterministic_bytes(self, social_dir, tmp_path):
        out2 = str(tmp_path / "again")
        assert run("synth", "--out", out2, "--n_subjects", "6",
                   "--n_frames", "30", "--synth_seed", "3",
                   "--scene_kind", "social") == 0
        for name in ("pose.jsonl", "groups.jsonl", "traits.csv", "types.csv"):
            with open(os.path.join(social_dir, name), "rb") as a, \
                    open(os.path.join(out2, name), "rb") as b:
                assert a.read() == b.read()


class TestExtract:
    def test_archive_layout(self, social_archive):
        manifest = os.path.join(social_archive, "manifest.csv")
        assert os.path.exists(manifest)
        with open(manifest, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["stream"] for r in rows} == {"pers", "group", "prox"}
        assert os.path.exists(os.path.join(social_archive, rows[0]["file"]))

    def test_missing_pose_is_config_error(self, tmp_path):
        assert run("extract", "--pose_file", str(tmp_path / "nope.jsonl"),
                   "--out", str(tmp_path / "a")) == 2

    def test_group_stream_on_nonsocial_rejected(self, nonsocial_dir, tmp_path):
        code = run("extract", "--pose_file", f"{nonsocial_dir}/pose.jsonl",
                   "--streams", "pers,group", "--out", str(tmp_path / "a"), *FAST)
        assert code == 2

    def test_nonsocial_prox_needs_region_file(self, nonsocial_dir, tmp_path):
        code = run("extract", "--pose_file", f"{nonsocial_dir}/pose.jsonl",
                   "--streams", "pers,prox", "--out", str(tmp_path / "a"), *FAST)
        assert code == 2


class TestRegionsCmd:
    def test_regions_then_extract(self, nonsocial_dir, tmp_path):
        rdir = str(tmp_path / "regions")
        code = run("regions", "--pose_file", f"{nonsocial_dir}/pose.jsonl",
                   "--regions", "3", "--out", rdir, *FAST)
        assert code == 0
        region_file = os.path.join(rdir, "regions.csv")
        assert os.path.exists(region_file)
        arch = str(tmp_path / "arch")
        code = run("extract", "--pose_file", f"{nonsocial_dir}/pose.jsonl",
                   "--streams", "pers,prox", "--region_file", region_file,
                   "--out", arch, *FAST)
        assert code == 0

    def test_social_stream_rejected(self, social_dir, tmp_path):
        code = run("regions", "--pose_file", f"{social_dir}/pose.jsonl",
                   "--out", str(tmp_path / "r"), *FAST)
        assert code == 3


class TestEval:
    def test_eval_report_and_determinism(self, social_dir, social_archive, tmp_path):
        out1, out2 = str(tmp_path / "e1"), str(tmp_path / "e2")
        for out in (out1, out2):
            code = run("eval", "--archive", social_archive,
                       "--label_file", f"{social_dir}/types.csv",
                       "--label_mode", "types", "--out", out, *FAST)
            assert code == 0
        with open(os.path.join(out1, "report.csv"), "rb") as a, \
                open(os.path.join(out2, "report.csv"), "rb") as b:
            assert a.read() == b.read()
        with open(os.path.join(out1, "report.csv"), newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 5  # social ablation set
        assert rows[0]["combo"] == "D_pers"
        pred = os.path.join(out1, "predictions_D_pers.csv")
        with open(pred, newline="") as fh:
            head = fh.readline().strip().split(",")
        assert head[:4] == ["clip_id", "subject_id", "true_label", "pred_label"]
        assert head[4].startswith("p_")

    def test_label_mismatch_is_data_error(self, social_archive, tmp_path):
        bad = tmp_path / "labels.csv"
        bad.write_text("subject_id,label\n0,resilient\n")
        code = run("eval", "--archive", social_archive,
                   "--label_file", str(bad), "--label_mode", "types",
                   "--out", str(tmp_path / "e"), *FAST)
        assert code == 3


class TestTrainCamTrace:
    def test_train_linear_then_cam(self, social_dir, social_archive, tmp_path):
        mdir = str(tmp_path / "model")
        code = run("train", "--archive", social_archive,
                   "--label_file", f"{social_dir}/types.csv",
                   "--label_mode", "types", "--head_variant", "linear",
                   "--streams", "pers,group", "--out", mdir, *FAST)
        assert code == 0
        cdir = str(tmp_path / "cams")
        code = run("cam", "--archive", social_archive,
                   "--model_file", os.path.join(mdir, "head.model"),
                   "--cam_class", "0", "--out", cdir, *FAST)
        assert code == 0
        acts = [f for f in os.listdir(cdir) if f.endswith("_act.pct1")]
        assert acts
        act = pct1.read_pct1(os.path.join(cdir, acts[0]))
        assert act.shape == (4, 4)
        quart = acts[0].replace("_act.pct1", "_quartiles.txt")
        words = open(os.path.join(cdir, quart)).read().split()
        assert set(words) <= {"low", "medium", "high"}
        assert len(words) == 16

    def test_cam_rejects_mlp_head(self, social_dir, social_archive, tmp_path):
        mdir = str(tmp_path / "mlp")
        code = run("train", "--archive", social_archive,
                   "--label_file", f"{social_dir}/types.csv",
                   "--label_mode", "types", "--head_variant", "mlp",
                   "--out", mdir, *FAST)
        assert code == 0
        code = run("cam", "--archive", social_archive,
                   "--model_file", os.path.join(mdir, "head.model"),
                   "--out", str(tmp_path / "c"), *FAST)
        assert code == 4

    def test_cam_missing_model_is_config_error(self, social_archive, tmp_path):
        code = run("cam", "--archive", social_archive,
                   "--model_file", str(tmp_path / "missing.model"),
                   "--out", str(tmp_path / "c"), *FAST)
        assert code == 2

    def test_trace(self, social_archive, tmp_path):
        with open(os.path.join(social_archive, "manifest.csv"), newline="") as fh:
            row = next(csv.DictReader(fh))
        out = str(tmp_path / "trace")
        code = run("trace", "--archive", social_archive,
                   "--clip_id", row["clip_id"], "--subject_id", row["subject_id"],
                   "--out", out, *FAST)
        assert code == 0
        files = os.listdir(out)
        csvs = [f for f in files if f.startswith("trace_") and f.endswith(".csv")]
        assert csvs
        lines = open(os.path.join(out, csvs[0])).read().strip().splitlines()
        assert lines[0] == "frame,d_pers,d_group,d_prox"
        assert len(lines) == 1 + 15

    def test_trace_unknown_ids(self, social_archive, tmp_path):
        code = run("trace", "--archive", social_archive,
                   "--clip_id", "999", "--subject_id", "999",
                   "--out", str(tmp_path / "t"), *FAST)
        assert code == 3


class TestLabelModes:
    def test_cluster_and_trait_modes(self, social_dir, social_archive, tmp_path):
        code = run("eval", "--archive", social_archive,
                   "--trait_file", f"{social_dir}/traits.csv",
                   "--label_mode", "trait:E", "--out", str(tmp_path / "e"), *FAST)
        assert code == 0
        with open(os.path.join(str(tmp_path / "e"), "predictions_D_pers.csv"),
                  newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["true_label"] for r in rows} <= {"HIGH", "LOW"}

    def test_unknown_trait_rejected(self, social_dir, social_archive, tmp_path):
        code = run("eval", "--archive", social_archive,
                   "--trait_file", f"{social_dir}/traits.csv",
                   "--label_mode", "trait:Z", "--out", str(tmp_path / "e"), *FAST)
        assert code == 2
