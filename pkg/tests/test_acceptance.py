"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and timings. The two synthetic end-to-end criteria regenerate their
datasets over five seeds and are the slow part of the suite.
"""

import math
import time

import numpy as np
import pytest

from percept.backbone import (BackboneModel, QuantizedClipImage,
                              backbone_forward, fit_calibration,
                              quantize_and_resize, temporal_mean_pool)
from percept.config import RunConfig
from percept.descriptors import (DescriptorTensor, cylindrical,
                                 group_average_pool, group_max_pool,
                                 person_descriptor, social_proxemics)
from percept.fusion import (LinearCamHead, cam, gap, head_loss_and_grads,
                            head_train, init_head, pca_fit, quartile_quantize)
from percept.labels import (TYPE_NAMES, TraitScores, cluster_types, kfold_split,
                            loso_split, median_binarize, name_types, significance)
from percept.pipeline import extract_descriptors, discover_regions, run_protocol
from percept.pose import PoseClip, PoseFrame, Skeleton, window
from percept.regions import fit_gmm, nonsocial_proxemics, SceneRegions
from percept.synth import TYPE_TRAIT_MEANS, TRAIT_SIGMA, generate_scene, load_profiles

J = 18


class Stopwatch:
    def __init__(self, criterion, limit_s):
        self.criterion = criterion
        self.limit = limit_s

    def __enter__(self):
        self.t0 = time.time()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.time() - self.t0
        status = "PASS" if exc_type is None else "FAIL"
        print(f"[criterion {self.criterion}] {status} ({elapsed:.1f}s, "
              f"limit {self.limit}s)")
        assert exc_type is not None or elapsed < self.limit, \
            f"criterion {self.criterion} exceeded its {self.limit}s budget"
        return False


def dyadic_clip(t=15, n_subjects=2, seed=0, offset=(0.0, 0.0), kind="social"):
    rng = np.random.default_rng(seed)
    frames = []
    bases = [rng.integers(0, 256, (J, 2)) / 64.0 + np.array([5.0 * s, 0.0])
             for s in range(n_subjects)]
    for f in range(t):
        skels = [Skeleton(joints=bases[s] + rng.integers(-8, 9, (J, 2)) / 64.0
                          + np.asarray(offset),
                          confidence=np.ones(J), subject_id=s)
                 for s in range(n_subjects)]
        frames.append(PoseFrame(frame_index=f, skeletons=skels, scene_kind=kind))
    return PoseClip(frames=frames, t=t, subject_ids=list(range(n_subjects)))


def translate_clip(clip, offset):
    off = np.asarray(offset, dtype=float)
    frames = [PoseFrame(frame_index=f.frame_index,
                        skeletons=[Skeleton(joints=s.joints + off,
                                            confidence=s.confidence,
                                            subject_id=s.subject_id)
                                   for s in f.skeletons],
                        scene_kind=f.scene_kind)
              for f in clip.frames]
    return PoseClip(frames=frames, t=clip.t, subject_ids=clip.subject_ids)


def rotate_clip(clip, alpha):
    rot = np.array([[math.cos(alpha), -math.sin(alpha)],
                    [math.sin(alpha), math.cos(alpha)]])
    frames = [PoseFrame(frame_index=f.frame_index,
                        skeletons=[Skeleton(joints=s.joints @ rot.T,
                                            confidence=s.confidence,
                                            subject_id=s.subject_id)
                                   for s in f.skeletons],
                        scene_kind=f.scene_kind)
              for f in clip.frames]
    return PoseClip(frames=frames, t=clip.t, subject_ids=clip.subject_ids)


def test_criterion_1_descriptor_unit_suite():
    with Stopwatch(1, 5):
        # Eq. 1 worked examples, exact to 1e-12
        c = cylindrical((0.0, 0.0), (3.0, 4.0))
        assert abs(c.rho - 5.0) <= 1e-12
        assert abs(c.theta - math.atan2(4.0, 3.0)) <= 1e-12
        assert abs(c.z - 4.0) <= 1e-12
        c = cylindrical((7.0, -2.0), (7.0, -2.0))
        assert (c.rho, c.theta, c.z) == (0.0, 0.0, 0.0)
        c = cylindrical((1.0, 1.0), (0.0, 1.0))
        assert abs(c.rho - 1.0) <= 1e-12 and abs(c.theta - math.pi) <= 1e-12

        # translation invariance, exact, for all three descriptor families
        clip = dyadic_clip(n_subjects=3, seed=1)
        moved = translate_clip(clip, (12.0, -7.0))
        pers0 = person_descriptor(clip, 0)
        pers1 = person_descriptor(moved, 0)
        assert np.array_equal(pers0.data, pers1.data)
        grp0 = group_average_pool([person_descriptor(clip, s) for s in (0, 1, 2)])
        grp1 = group_average_pool([person_descriptor(moved, s) for s in (0, 1, 2)])
        assert np.array_equal(grp0.data, grp1.data)
        prox0 = social_proxemics(clip, 0, n_max=6, r_far=50.0)
        prox1 = social_proxemics(moved, 0, n_max=6, r_far=50.0)
        assert np.array_equal(prox0.data, prox1.data)

        # rotation: rho invariant, theta shifted by alpha (mod 2pi), to 1e-9
        alpha = 1.1
        rot = rotate_clip(clip, alpha)
        pers_r = person_descriptor(rot, 0)
        assert np.max(np.abs(pers_r.data[..., 0] - pers0.data[..., 0])) <= 1e-9
        wrap = np.angle(np.exp(1j * (pers_r.data[..., 1] - pers0.data[..., 1]
                                     - alpha)))
        assert np.max(np.abs(wrap)) <= 1e-9
        prox_r = social_proxemics(rot, 0, n_max=6, r_far=50.0)
        assert np.max(np.abs(prox_r.data[..., 0] - prox0.data[..., 0])) <= 1e-9

        # pooling identities, exact on dyadic data
        rng = np.random.default_rng(2)
        members = [DescriptorTensor(data=rng.integers(-128, 128, (12, 7, 3)) / 64.0,
                                    stream="person",
                                    channel_names=("rho", "theta", "z"))
                   for _ in range(5)]
        assert np.array_equal(group_average_pool(members[:1]).data, members[0].data)
        assert np.array_equal(group_max_pool(members[:1]).data, members[0].data)
        assert np.all(group_max_pool(members).data >= group_average_pool(members).data)
        assert np.array_equal(group_average_pool(members).data,
                              group_average_pool(members[::-1]).data)
        assert np.array_equal(group_max_pool(members).data,
                              group_max_pool(members[::-1]).data)


def test_criterion_2_gmm_suite():
    with Stopwatch(2, 10):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            k = int(rng.integers(2, 5))
            pts = rng.normal(0, 1.5, (60, 2)) + rng.integers(0, k, (60, 1)) * 4.0
            wts = rng.uniform(0.2, 3.0, 60)
            model = fit_gmm(pts, wts, k=k, seed=seed)
            assert np.all(np.diff(model.trace) >= -1e-9), "log-likelihood dipped"
            assert np.allclose(model.responsibilities.sum(axis=1), 1.0, atol=1e-9)

        pts = np.array([[-0.1], [0.0], [0.1], [9.9], [10.0], [10.1]])
        model = fit_gmm(pts, np.ones(6), k=2, seed=0)
        means = sorted(model.means[:, 0])
        assert abs(means[0] - 0.0) < 0.1 and abs(means[1] - 10.0) < 0.1


def test_criterion_3_numerical_optimization_suite():
    with Stopwatch(3, 30):
        # analytic gradients vs central differences on 50 random instances
        rng = np.random.default_rng(0)
        worst = 0.0
        for trial in range(50):
            n, d, h, c = (int(rng.integers(3, 8)), int(rng.integers(2, 6)),
                          int(rng.integers(2, 7)), int(rng.integers(2, 5)))
            x = rng.normal(size=(n, d))
            y = rng.integers(0, c, n)
            model = init_head(d, h, c, seed=trial)
            _, analytic = head_loss_and_grads(model, x, y)
            eps = 1e-5
            for name in ("w1", "b1", "w2", "b2"):
                param = getattr(model, name)
                it = np.nditer(param, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    orig = param[idx]
                    param[idx] = orig + eps
                    up, _ = head_loss_and_grads(model, x, y)
                    param[idx] = orig - eps
                    dn, _ = head_loss_and_grads(model, x, y)
                    param[idx] = orig
                    num = (up - dn) / (2 * eps)
                    ana = analytic[name][idx]
                    rel = abs(ana - num) / max(abs(ana) + abs(num), 1e-6)
                    worst = max(worst, rel)
        assert worst <= 1e-4, f"max relative gradient error {worst:.2e}"

        # full-batch loss non-increasing on the fixed toy problem, lr = 1e-3
        rng = np.random.default_rng(42)
        x = rng.normal(size=(16, 5))
        y = np.tile([0, 1, 2, 0], 4)
        losses = [head_train(x, y, hidden=6, epochs=e, lr=1e-3,
                             batch_size=16, seed=7).final_loss
                  for e in range(0, 60, 5)]
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

        # PCA: retained variance >= target, orthonormal components to 1e-6
        for seed in range(5):
            rng = np.random.default_rng(seed)
            x = rng.normal(size=(40, 12)) * np.linspace(4, 0.05, 12)
            for target in (0.8, 0.98, 1.0):
                p = pca_fit(x, target=target)
                assert p.retained >= target - 1e-12
                gram = p.components @ p.components.T
                assert np.max(np.abs(gram - np.eye(p.n_components))) <= 1e-6


def test_criterion_4_shape_backbone_suite():
    with Stopwatch(4, 10):
        model = BackboneModel(k=32, seed=0)
        rng = np.random.default_rng(1)
        shapes = {"person": (60, 17, 3), "group": (60, 17, 3),
                  "prox_social": (15, 5, 2), "prox_nonsocial": (30, 6, 2)}
        for stream, shape in shapes.items():
            names = ("rho", "theta", "z")[:shape[2]]
            t = DescriptorTensor(data=rng.normal(size=shape), stream=stream,
                                 channel_names=names)
            img = quantize_and_resize(t, fit_calibration([t]))
            assert img.pixels.shape == (68, 68, 3)
            maps = backbone_forward(img, model)
            assert maps.values.shape == (4, 4, 32)
            vec = temporal_mean_pool(maps)
            assert vec.shape == (4 * 32,)
            again = temporal_mean_pool(backbone_forward(img, model))
            assert np.array_equal(vec, again), "forward pass not bitwise stable"

        # golden zero-input output, reference seed
        golden_model = BackboneModel(k=64, seed=0)
        img = QuantizedClipImage(pixels=np.zeros((68, 68, 3), dtype=np.uint8),
                                 stream="person", calib_id="golden")
        flat = backbone_forward(img, golden_model).values.reshape(-1)
        assert np.allclose(flat[:5],
                           [0.0, 2.15112697e-04, 1.45612215e-03,
                            3.35339177e-03, 0.0], atol=1e-5)
        assert np.isclose(flat.sum(), 7.31928825, rtol=1e-4)
        flat2 = backbone_forward(img, BackboneModel(k=64, seed=0)).values.reshape(-1)
        assert np.array_equal(flat, flat2)


def test_criterion_5_cam_identity():
    with Stopwatch(5, 5):
        rng = np.random.default_rng(3)
        maps = rng.normal(size=(4, 4, 24))
        head = LinearCamHead(weights=rng.normal(size=(3, 24)), n_classes=3, seed=0)
        for c in range(3):
            act = cam(maps, head, c)
            assert act.shape == (4, 4)
            logit = gap(maps) @ head.weights[c]
            assert abs(act.mean() - logit) <= 1e-6
        q = quartile_quantize(np.arange(16.0).reshape(4, 4))
        assert int((q == "low").sum()) == 4
        assert int((q == "medium").sum()) == 8
        assert int((q == "high").sum()) == 4


def test_criterion_6_protocol_suite():
    with Stopwatch(6, 10):
        # leakage audit over both protocols on a synthetic sample table
        rng = np.random.default_rng(4)
        subjects = list(range(24))
        clips = [(clip, sid) for sid in subjects for clip in range(10)]
        for folds in (kfold_split(subjects, k=10, seed=1), loso_split(subjects)):
            covered = sorted(s for f in folds for s in f)
            assert covered == subjects
            for fold in folds:
                test_set = set(fold)
                train_clips = {c for c, sid in clips if sid not in test_set}
                test_clips = {c for c, sid in clips if sid in test_set}
                train_subj = {sid for _, sid in clips if sid not in test_set}
                assert not (train_subj & test_set)
                # clip ids repeat across subjects, but no (clip, subject) pair leaks
                train_pairs = {(c, s) for c, s in clips if s not in test_set}
                test_pairs = {(c, s) for c, s in clips if s in test_set}
                assert not (train_pairs & test_pairs)

        # exact sign-flip significance
        p, stars = significance([0.6] * 10, [0.5] * 10)
        assert p == 2 / 1024
        assert stars == "**"
        p, stars = significance([0.7] * 10, [0.7] * 10)
        assert p == 1.0 and stars == ""


def _eval_cfg():
    return RunConfig(backbone_k=64, hidden=64, epochs=50, lr=0.05, batch_size=32,
                     protocol="cv10", folds=10).validate()


def _social_dataset(cfg, profiles, base_seed, n_scenes=10, per_scene=6):
    samples, labels = [], {}
    for si in range(n_scenes):
        scene = generate_scene(per_scene, 150, "social", profiles,
                               [0.34, 0.33, 0.33], seed=base_seed + si,
                               segment_len=cfg.t)
        sc, _ = extract_descriptors(scene.frames, cfg, ["pers", "group", "prox"],
                                    assignments=scene.group_assignments,
                                    clip_offset=si * 1000, subject_offset=si * 100)
        samples.extend(sc)
        for sid, lab in scene.types.items():
            labels[si * 100 + sid] = lab
    return samples, labels


def test_criterion_7_synthetic_social_end_to_end():
    with Stopwatch(7, 600):
        cfg = _eval_cfg()
        profiles = load_profiles()
        combos = [("pers",), ("group",), ("prox",), ("pers", "prox", "group")]
        acc = {c: [] for c in combos}
        for base_seed in (101, 202, 303, 404, 505):
            samples, labels = _social_dataset(cfg, profiles, base_seed)
            assert len(labels) == 60
            folds = kfold_split(sorted(labels), k=10, seed=base_seed)
            reports, _, _ = run_protocol(samples, labels, folds, combos, cfg)
            for combo, rep in zip(combos, reports):
                acc[combo].append(rep.mean_accuracy)
        fused = float(np.mean(acc[("pers", "prox", "group")]))
        singles = {c: float(np.mean(acc[c])) for c in combos[:3]}
        best_single = max(singles.values())
        print(f"  social fused={100 * fused:.1f}% singles=" +
              " ".join(f"{c[0]}:{100 * v:.1f}%" for c, v in singles.items()))
        assert fused >= 0.80, f"fused accuracy {fused:.3f} below 0.80"
        assert fused >= best_single, \
            f"fused {fused:.3f} below best single stream {best_single:.3f}"


def test_criterion_8_synthetic_nonsocial_end_to_end():
    with Stopwatch(8, 600):
        cfg = _eval_cfg()
        profiles = load_profiles()
        onehot = {0: [1.0, 0.0, 0.0], 1: [0.0, 1.0, 0.0], 2: [0.0, 0.0, 1.0]}
        combos = [("pers",), ("pers", "prox")]
        acc = {c: [] for c in combos}
        for base_seed in (510, 620, 730, 840, 950):
            scenes = [generate_scene(1, 150, "nonsocial", profiles,
                                     onehot[si % 3], seed=base_seed + si,
                                     segment_len=cfg.t)
                      for si in range(45)]
            _, regions = discover_regions([s.frames for s in scenes], cfg,
                                          seed=base_seed)
            samples, labels = [], {}
            for si, scene in enumerate(scenes):
                sc, _ = extract_descriptors(scene.frames, cfg, ["pers", "prox"],
                                            regions=regions,
                                            clip_offset=si * 1000,
                                            subject_offset=si * 100)
                samples.extend(sc)
                labels[si * 100] = scene.types[0]
            assert len(labels) == 45
            folds = kfold_split(sorted(labels), k=10, seed=base_seed)
            reports, _, _ = run_protocol(samples, labels, folds, combos, cfg)
            for combo, rep in zip(combos, reports):
                acc[combo].append(rep.mean_accuracy)
        pers = float(np.mean(acc[("pers",)]))
        fused = float(np.mean(acc[("pers", "prox")]))
        print(f"  nonsocial pers={100 * pers:.1f}% pers+prox={100 * fused:.1f}%")
        assert fused >= pers, f"pers+prox {fused:.3f} below pers {pers:.3f}"
        assert pers >= 0.33 + 0.20, f"pers {pers:.3f} not 20 points over chance"
        assert fused >= 0.33 + 0.20, f"fused {fused:.3f} not 20 points over chance"


def test_criterion_9_label_suite():
    with Stopwatch(9, 5):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            scores, planted = [], {}
            sid = 0
            for name in TYPE_NAMES:
                mean = np.array(TYPE_TRAIT_MEANS[name])
                for _ in range(10):
                    vec = np.clip(rng.normal(mean, TRAIT_SIGMA), 0, 1)
                    scores.append(TraitScores(subject_id=sid, values=vec))
                    planted[sid] = name
                    sid += 1
            result = cluster_types(scores, k=3)
            names = name_types(result, scores)
            for s in scores:
                assert names[result.labels[s.subject_id]] == planted[s.subject_id]

        # median-split properties on random score vectors
        rng = np.random.default_rng(99)
        for _ in range(100):
            n = int(rng.integers(2, 15))
            vals = rng.uniform(0, 1, n)
            scores = [TraitScores(subject_id=i,
                                  values=np.array([v, 0.5, 0.5, 0.5, 0.5]))
                      for i, v in enumerate(vals)]
            out = median_binarize(scores, "E")
            assert "HIGH" in out.values()
            if len(set(vals)) > 1:
                assert "LOW" in out.values()
            med = np.median(vals)
            for i, v in enumerate(vals):
                assert out[i] == ("HIGH" if v >= med else "LOW")
