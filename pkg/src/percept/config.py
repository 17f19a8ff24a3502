"""Run configuration: defaults, flat key=value files, CLI overrides.

Precedence is CLI > file > defaults. PERCEPT_SEED in the environment
overrides every *_seed field (CI reproducibility hook).
"""

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

from .errors import ConfigError

# 18-joint COCO-style layout (OpenPose ordering).
JOINT_NAMES = [
    "nose", "neck",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_hip", "r_knee", "r_ankle",
    "l_hip", "l_knee", "l_ankle",
    "r_eye", "l_eye", "r_ear", "l_ear",
]

# Published skeleton edges for the layout above.
JOINT_EDGES = [
    (1, 2), (1, 5), (2, 3), (3, 4), (5, 6), (6, 7),
    (1, 8), (8, 9), (9, 10), (1, 11), (11, 12), (12, 13),
    (1, 0), (0, 14), (14, 16), (0, 15), (15, 17),
]

NOSE, NECK = 0, 1
R_SHOULDER, R_ELBOW, R_WRIST = 2, 3, 4
L_SHOULDER, L_ELBOW, L_WRIST = 5, 6, 7
R_HIP, L_HIP = 8, 11

# Reference joints for the person descriptor: L/R shoulder, L/R hip.
# The vertical stacking order of the per-reference blocks is fixed here.
DEFAULT_REF_JOINTS = (L_SHOULDER, R_SHOULDER, L_HIP, R_HIP)

# (elbow, wrist) index pairs per arm; histograms are keyed on the wrist patch.
ARM_JOINT_PAIRS = ((R_ELBOW, R_WRIST), (L_ELBOW, L_WRIST))

HIP_JOINTS = (R_HIP, L_HIP)


def build_topology(n_joints=18, edges=None):
    """Joint index -> set of neighbour indices, from an edge list."""
    if edges is None:
        if n_joints != 18:
            raise ConfigError(
                f"no default topology for J={n_joints}; supply topology_file")
        edges = JOINT_EDGES
    topo = {j: set() for j in range(n_joints)}
    for a, b in edges:
        if not (0 <= a < n_joints and 0 <= b < n_joints):
            raise ConfigError(f"topology edge ({a},{b}) out of range for J={n_joints}")
        topo[a].add(b)
        topo[b].add(a)
    return topo


@dataclass
class RunConfig:
    # dataset paths
    pose_file: str = ""
    group_file: str = ""
    region_file: str = ""
    trait_file: str = ""
    label_file: str = ""
    archive: str = ""
    model_file: str = ""
    out: str = "out"
    profiles_file: str = ""
    topology_file: str = ""

    # skeleton / windowing
    joints: int = 18
    ref_joints: str = "5,2,11,8"
    t: int = 15
    stride: int = 0            # 0 -> same as t (non-overlapping clips)
    max_jump: float = 5.0
    n_max: int = 6

    # scene geometry
    scene_width: float = 20.0
    scene_height: float = 15.0
    r_far: float = 0.0         # 0 -> 2 * scene diagonal

    # nonsocial regions
    grid_rows: int = 12
    grid_cols: int = 16
    regions: int = 6
    orient_bins: int = 8
    mag_bins: int = 3
    m_min: float = 0.01
    m_max: float = 10.0
    sigma_min_sq: float = 1e-6
    gmm_tol: float = 1e-6
    gmm_max_iter: int = 200
    gmm_seed: int = 0

    # backbone
    backbone_k: int = 64
    backbone_seed: int = 0

    # head / fusion
    hidden: int = 128
    epochs: int = 300
    lr: float = 0.01
    batch_size: int = 32
    head_seed: int = 0
    head_variant: str = "mlp"      # mlp | linear (linear = GAP-linear CAM head)
    fusion: str = "concat"         # concat | pca_stream | pca_concat | decision
    pca_target: float = 0.98
    standardize: int = 1

    # evaluation
    protocol: str = "cv10"         # cv10 | loso
    folds: int = 10
    split_seed: int = 0
    streams: str = "pers,group,prox"
    label_mode: str = "types"      # types | cluster | trait:<E|A|C|N|OE>

    # synth
    synth_seed: int = 0
    n_subjects: int = 5
    n_frames: int = 150
    scene_kind: str = "social"
    mix: str = "0.34,0.33,0.33"

    # misc
    cam_class: int = 0
    clip_id: int = 0
    subject_id: int = 0
    workers: int = 1

    def ref_joint_list(self):
        try:
            idx = [int(x) for x in self.ref_joints.split(",") if x.strip() != ""]
        except ValueError:
            raise ConfigError(f"ref_joints not a comma list of ints: {self.ref_joints!r}")
        if any(not 0 <= j < self.joints for j in idx):
            raise ConfigError(f"ref_joints out of range for J={self.joints}: {idx}")
        return idx

    def stream_list(self):
        names = [s.strip() for s in self.streams.split(",") if s.strip()]
        bad = [s for s in names if s not in ("pers", "group", "prox")]
        if bad:
            raise ConfigError(f"unknown stream(s): {bad}")
        return names

    def mix_fractions(self):
        try:
            fr = [float(x) for x in self.mix.split(",")]
        except ValueError:
            raise ConfigError(f"mix not a comma list of floats: {self.mix!r}")
        if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-6:
            raise ConfigError(f"mix must be 3 nonnegative fractions summing to 1: {fr}")
        return fr

    def effective_stride(self):
        return self.stride if self.stride > 0 else self.t

    def effective_r_far(self):
        if self.r_far > 0:
            return self.r_far
        return 2.0 * math.hypot(self.scene_width, self.scene_height)

    def topology(self):
        if self.topology_file:
            with open(self.topology_file) as fh:
                edges = [tuple(e) for e in json.load(fh)]
            return build_topology(self.joints, edges)
        return build_topology(self.joints)

    def validate(self):
        if self.t < 2:
            raise ConfigError(f"t must be >= 2, got {self.t}")
        if self.stride < 0:
            raise ConfigError("stride must be >= 0")
        if self.joints < 2:
            raise ConfigError("joints must be >= 2")
        if self.n_max < 1:
            raise ConfigError("n_max must be >= 1")
        if self.regions < 1:
            raise ConfigError("regions must be >= 1")
        if self.grid_rows * self.grid_cols < self.regions:
            raise ConfigError("grid must have at least `regions` cells")
        if not 0.0 < self.pca_target <= 1.0:
            raise ConfigError("pca_target must be in (0, 1]")
        if self.protocol not in ("cv10", "loso"):
            raise ConfigError(f"unknown protocol: {self.protocol!r}")
        if self.fusion not in ("concat", "pca_stream", "pca_concat", "decision"):
            raise ConfigError(f"unknown fusion mode: {self.fusion!r}")
        if self.head_variant not in ("mlp", "linear"):
            raise ConfigError(f"unknown head variant: {self.head_variant!r}")
        if self.scene_kind not in ("social", "nonsocial"):
            raise ConfigError(f"unknown scene kind: {self.scene_kind!r}")
        self.ref_joint_list()
        self.stream_list()
        return self


_FIELD_TYPES = {f.name: (f.type if isinstance(f.type, type) else {"int": int,
                "float": float, "str": str}[f.type])
                for f in dataclasses.fields(RunConfig)}


def _coerce(key, raw):
    kind = _FIELD_TYPES[key]
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}")


def parse_config_file(path):
    """Parse a flat key=value file into a dict (no defaults applied)."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, raw.strip())
    return values


def load_config(path=None, overrides=None, env=None):
    """Build a RunConfig from defaults, an optional file, and CLI overrides."""
    cfg = RunConfig()
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        for k, v in parse_config_file(path).items():
            setattr(cfg, k, v)
    for k, v in (overrides or {}).items():
        if k not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {k!r}")
        setattr(cfg, k, _coerce(k, v) if isinstance(v, str) else v)
    env = os.environ if env is None else env
    seed_override = env.get("PERCEPT_SEED")
    if seed_override is not None:
        try:
            seed = int(seed_override)
        except ValueError:
            raise ConfigError(f"PERCEPT_SEED must be an int, got {seed_override!r}")
        for name in _FIELD_TYPES:
            if name.endswith("_seed"):
                setattr(cfg, name, seed)
    return cfg.validate()


def config_hash(cfg):
    """Stable short hash over all config fields, for output manifests."""
    payload = json.dumps(dataclasses.asdict(cfg), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def seed_fields(cfg):
    return {name: getattr(cfg, name) for name in _FIELD_TYPES if name.endswith("_seed")}
