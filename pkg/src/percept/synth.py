"""Synthetic multi-subject pose scenes with planted personality structure.

Each personality type gets a behavioral profile (motion energy, group-join
probability, preferred radius, arm-gesture rate). The profiles are chosen so
no single descriptor stream separates all three types: motion energy splits
overcontrolled from the rest (person stream), while grouping/proximity
behavior splits resilient from the rest (group and proxemics streams), so a
fused model has a genuine multi-stream signal to find. Default profile
values live in data/default_profiles.cfg, not here.

Everything is a pure function of the seed: regenerating a scene with the
same arguments is bit-identical.
"""

import importlib.resources
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .labels import TRAITS, TYPE_NAMES
from .pose import GroupAssignment, PoseFrame, Skeleton

# joint template: COCO-18 layout, hips at the origin, ~1.7 units tall, y down
SKELETON_TEMPLATE = np.array([
    (0.00, -1.45), (0.00, -1.30),
    (-0.22, -1.30), (-0.28, -1.00), (-0.30, -0.70),
    (0.22, -1.30), (0.28, -1.00), (0.30, -0.70),
    (-0.15, 0.00), (-0.17, 0.45), (-0.18, 0.90),
    (0.15, 0.00), (0.17, 0.45), (0.18, 0.90),
    (-0.05, -1.50), (0.05, -1.50), (-0.10, -1.47), (0.10, -1.47),
])

# per-frame behavioral scales, all multiplied by the profile's motion energy
JITTER_FACTOR = 0.10      # per-joint posture jitter
WALK_FACTOR = 0.15        # singleton random-walk step
ANCHOR_JITTER = 0.04      # positional wobble while anchored to a target
GESTURE_FACTOR = 0.25     # arm-joint displacement during a gesture
GESTURE_FRAMES = 5
SCENE_MARGIN = 1.5

# trait-score Gaussian means per type (E, A, C, N, OE): resilient is high E /
# low N, undercontrolled high E / high N, overcontrolled low E / high N
TYPE_TRAIT_MEANS = {
    "resilient": (0.80, 0.60, 0.60, 0.20, 0.60),
    "undercontrolled": (0.80, 0.45, 0.40, 0.80, 0.55),
    "overcontrolled": (0.20, 0.50, 0.55, 0.80, 0.45),
}
TRAIT_SIGMA = 0.08

# fixed nonsocial attractors, as (x, y) fractions of the scene extent
ATTRACTOR_FRACTIONS = [
    (0.20, 0.30), (0.50, 0.30), (0.80, 0.30),
    (0.20, 0.70), (0.50, 0.70), (0.80, 0.70),
]


@dataclass
class TypeProfile:
    label: str
    motion_energy: float    # units/frame; 0 means a fully static subject
    join_prob: float        # chance of joining a group, drawn once per window
    radius: float           # preferred distance to the group anchor / region
    gesture_rate: float     # arm gestures per 100 frames (nonsocial)

    def __post_init__(self):
        if not 0.0 <= self.join_prob <= 1.0:
            raise ConfigError(f"join_prob must be in [0,1], got {self.join_prob}")
        if self.motion_energy < 0 or self.radius < 0 or self.gesture_rate < 0:
            raise ConfigError(f"profile {self.label}: negative parameter")


def load_profiles(path=None):
    """Load type profiles from a flat key=value file (default: packaged)."""
    if path is None:
        text = (importlib.resources.files("percept") / "data"
                / "default_profiles.cfg").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line or "." not in line.split("=")[0]:
            raise ConfigError(f"profiles line {lineno}: expected type.field=value")
        key, _, val = line.partition("=")
        label, _, fieldname = key.strip().partition(".")
        raw.setdefault(label, {})[fieldname] = float(val.strip())
    profiles = {}
    fields = ("motion_energy", "join_prob", "radius", "gesture_rate")
    for label in TYPE_NAMES:
        if label not in raw:
            raise ConfigError(f"profiles file missing type {label!r}")
        missing = [f for f in fields if f not in raw[label]]
        unknown = [f for f in raw[label] if f not in fields]
        if missing or unknown:
            raise ConfigError(f"profile {label}: missing {missing}, "
                              f"unknown {unknown}")
        profiles[label] = TypeProfile(label=label, **raw[label])
    return profiles


@dataclass
class SynthScene:
    frames: list
    group_assignments: dict            # frame_index -> GroupAssignment
    traits: list                       # [(subject_id, {trait: value})]
    types: dict                        # subject_id -> type label
    kind: str
    seed: int


def _type_counts(n_subjects, mix):
    if len(mix) != 3 or any(m < 0 for m in mix) or abs(sum(mix) - 1.0) > 1e-6:
        raise ConfigError(f"mix must be 3 nonnegative fractions summing to 1: {mix}")
    exact = [n_subjects * m for m in mix]
    counts = [int(np.floor(e)) for e in exact]
    remainders = [e - c for e, c in zip(exact, counts)]
    for _ in range(n_subjects - sum(counts)):
        i = int(np.argmax(remainders))
        counts[i] += 1
        remainders[i] = -1
    return counts


def _attractors(width, height):
    return np.array([(fx * width, fy * height) for fx, fy in ATTRACTOR_FRACTIONS])


def generate_scene(n_subjects, n_frames, kind, profiles, mix, seed,
                   scene_width=20.0, scene_height=15.0, segment_len=15):
    """Generate one scene with planted per-type behavior.

    Social scenes re-draw group membership every segment_len frames (align
    segment_len with the clip length so membership is stable within a clip)
    and record it in the group assignment; nonsocial scenes anchor subjects
    near six fixed attractors at their preferred radius and schedule arm
    gestures. Trait scores are sampled from the per-type Gaussians.
    """
    if n_subjects < 1:
        raise ConfigError("n_subjects must be >= 1")
    if kind not in ("social", "nonsocial"):
        raise ConfigError(f"unknown scene kind {kind!r}")
    rng = np.random.default_rng(seed)
    counts = _type_counts(n_subjects, mix)
    type_list = [TYPE_NAMES[i] for i, c in enumerate(counts) for _ in range(c)]
    type_list = [type_list[i] for i in rng.permutation(n_subjects)]
    types = {sid: type_list[sid] for sid in range(n_subjects)}
    prof = {sid: profiles[types[sid]] for sid in range(n_subjects)}
    ids = list(range(n_subjects))

    lo = np.array([SCENE_MARGIN, SCENE_MARGIN + 1.6])
    hi = np.array([scene_width - SCENE_MARGIN, scene_height - SCENE_MARGIN])
    pos = {sid: rng.uniform(lo, hi) for sid in ids}
    attractors = _attractors(scene_width, scene_height)

    frames = []
    group_assignments = {}
    seg_groups = []            # [(anchor, [sid, ...])]
    target = {}
    gesture = {sid: (0, 0) for sid in ids}    # (frames left, arm index)

    for f in range(n_frames):
        if f % segment_len == 0:
            seg_groups = []
            target = {}
            if kind == "social":
                pool = [sid for sid in ids if rng.random() < prof[sid].join_prob]
                if pool:
                    n_groups = max(1, int(round(len(pool) / 3)))
                    anchors = rng.uniform(lo, hi, size=(n_groups, 2))
                    order = [pool[i] for i in rng.permutation(len(pool))]
                    assign = {g: [] for g in range(n_groups)}
                    for i, sid in enumerate(order):
                        assign[i % n_groups].append(sid)
                    for g in range(n_groups):
                        seg_groups.append((anchors[g], sorted(assign[g])))
                        m = len(assign[g])
                        for slot, sid in enumerate(sorted(assign[g])):
                            ang = 2 * np.pi * slot / m + rng.normal(0, 0.2)
                            offset = prof[sid].radius * np.array([np.cos(ang), np.sin(ang)])
                            target[sid] = np.clip(anchors[g] + offset, lo, hi)
            else:
                for sid in ids:
                    a = attractors[rng.integers(len(attractors))]
                    ang = rng.uniform(-np.pi, np.pi)
                    offset = prof[sid].radius * np.array([np.cos(ang), np.sin(ang)])
                    target[sid] = np.clip(a + offset, lo, hi)

        skeletons = []
        for sid in ids:
            energy = prof[sid].motion_energy
            if sid in target:
                pos[sid] = np.clip(
                    target[sid] + rng.normal(0, ANCHOR_JITTER * energy, 2),
                    lo, hi)
            else:
                pos[sid] = np.clip(
                    pos[sid] + rng.normal(0, WALK_FACTOR * energy, 2),
                    lo, hi)
            joints = pos[sid] + SKELETON_TEMPLATE \
                + rng.normal(0, JITTER_FACTOR * energy, (18, 2))
            if kind == "nonsocial":
                left, arm = gesture[sid]
                if left == 0 and rng.random() < prof[sid].gesture_rate / 100.0:
                    left, arm = GESTURE_FRAMES, int(rng.integers(2))
                if left > 0:
                    arm_idx = (3, 4) if arm == 0 else (6, 7)
                    joints[list(arm_idx)] += rng.normal(
                        0, GESTURE_FACTOR * energy, (2, 2))
                    left -= 1
                gesture[sid] = (left, arm)
            skeletons.append(Skeleton(joints=joints,
                                      confidence=np.ones(18),
                                      subject_id=sid))
        frames.append(PoseFrame(frame_index=f, skeletons=skeletons, scene_kind=kind))
        if kind == "social":
            group_assignments[f] = GroupAssignment(
                frame_index=f,
                groups=[frozenset(members) for _, members in seg_groups])

    traits = []
    for sid in ids:
        mean = np.array(TYPE_TRAIT_MEANS[types[sid]])
        vec = np.clip(rng.normal(mean, TRAIT_SIGMA), 0.0, 1.0)
        traits.append((sid, dict(zip(TRAITS, vec))))

    return SynthScene(frames=frames, group_assignments=group_assignments,
                      traits=traits, types=types, kind=kind, seed=seed)
