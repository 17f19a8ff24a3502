"""Multi-subject skeleton streams: parsing, repair, tracking, windowing.

A pose stream file is UTF-8 with one frame per line; each line is a JSON
record {"frame": int, "scene": "social"|"nonsocial", "subjects": [{"id",
"joints" ([[x, y]] * J), "conf" ([float] * J)}]}. A group file holds one
record per frame: {"frame": int, "groups": [[id, ...], ...]}.

Coordinates are scene units, x right / y down. Confidence 0 marks a
missing joint; imputed joints get the sentinel confidence 0.01.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import PoseParseError, PoseSchemaError, UnimputableError

IMPUTED_CONF = 0.01


@dataclass
class Skeleton:
    joints: np.ndarray        # (J, 2) float
    confidence: np.ndarray    # (J,) float in [0, 1]
    subject_id: int

    def detected(self):
        return self.confidence > 0

    def centroid(self):
        """Mean of detected joints; falls back to all joints if none detected."""
        mask = self.detected()
        pts = self.joints[mask] if mask.any() else self.joints
        return pts.mean(axis=0)


@dataclass
class PoseFrame:
    frame_index: int
    skeletons: list
    scene_kind: str = "social"

    def subject_ids(self):
        return [s.subject_id for s in self.skeletons]

    def skeleton_of(self, subject_id):
        for s in self.skeletons:
            if s.subject_id == subject_id:
                return s
        return None


@dataclass
class PoseClip:
    frames: list
    t: int
    subject_ids: list

    @property
    def scene_kind(self):
        return self.frames[0].scene_kind

    @property
    def start_frame(self):
        return self.frames[0].frame_index


@dataclass
class GroupAssignment:
    frame_index: int
    groups: list = field(default_factory=list)   # list of frozenset of ids

    def group_of(self, subject_id):
        for g in self.groups:
            if subject_id in g:
                return g
        return None


def _check_frame(frame, n_joints, lineno):
    seen = set()
    for s in frame.skeletons:
        if s.joints.shape != (n_joints, 2):
            raise PoseSchemaError(
                f"line {lineno}: subject {s.subject_id} has "
                f"{s.joints.shape[0]} joints, expected {n_joints}")
        if s.confidence.shape != (n_joints,):
            raise PoseSchemaError(
                f"line {lineno}: subject {s.subject_id} has "
                f"{s.confidence.shape[0]} confidences, expected {n_joints}")
        if s.subject_id in seen:
            raise PoseSchemaError(
                f"line {lineno}: duplicate subject id {s.subject_id}")
        seen.add(s.subject_id)


def parse_pose_stream(data, n_joints=18, n_max=None):
    """Parse a pose stream into PoseFrames sorted by frame index.

    `data` is bytes or str. Malformed lines raise PoseParseError naming the
    line number; joint-count mismatches raise PoseSchemaError.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    frames = []
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            frame = PoseFrame(
                frame_index=int(rec["frame"]),
                scene_kind=str(rec["scene"]),
                skeletons=[
                    Skeleton(
                        joints=np.asarray(sub["joints"], dtype=float),
                        confidence=np.asarray(sub["conf"], dtype=float),
                        subject_id=int(sub["id"]),
                    )
                    for sub in rec["subjects"]
                ],
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise PoseParseError(f"line {lineno}: {exc}") from exc
        if frame.scene_kind not in ("social", "nonsocial"):
            raise PoseSchemaError(f"line {lineno}: bad scene kind {frame.scene_kind!r}")
        if frame.frame_index < 0:
            raise PoseSchemaError(f"line {lineno}: negative frame index")
        _check_frame(frame, n_joints, lineno)
        if n_max is not None and len(frame.skeletons) > n_max:
            raise PoseSchemaError(
                f"line {lineno}: {len(frame.skeletons)} subjects exceeds n_max={n_max}")
        frames.append(frame)
    frames.sort(key=lambda f: f.frame_index)
    return frames


def serialize_pose_stream(frames, decimals=None):
    """Inverse of parse_pose_stream. Round-trips exactly when decimals=None."""

    def num(x):
        x = float(x)
        return round(x, decimals) if decimals is not None else x

    lines = []
    for f in frames:
        rec = {
            "frame": f.frame_index,
            "scene": f.scene_kind,
            "subjects": [
                {
                    "id": s.subject_id,
                    "joints": [[num(x), num(y)] for x, y in s.joints],
                    "conf": [num(c) for c in s.confidence],
                }
                for s in f.skeletons
            ],
        }
        lines.append(json.dumps(rec, separators=(",", ":")))
    return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")


def parse_group_file(data):
    """Parse a group file into {frame_index: GroupAssignment}."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    out = {}
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            ga = GroupAssignment(
                frame_index=int(rec["frame"]),
                groups=[frozenset(int(m) for m in g) for g in rec["groups"]],
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise PoseParseError(f"line {lineno}: {exc}") from exc
        seen = set()
        for g in ga.groups:
            if seen & g:
                raise PoseSchemaError(f"line {lineno}: overlapping groups")
            seen |= g
        out[ga.frame_index] = ga
    return out


def serialize_group_file(assignments):
    lines = []
    for key in sorted(assignments):
        ga = assignments[key]
        groups = sorted(sorted(g) for g in ga.groups)
        lines.append(json.dumps({"frame": ga.frame_index, "groups": groups},
                                separators=(",", ":")))
    return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")


def impute_missing_joints(skeleton, topology):
    """Fill confidence-0 joints from detected topological neighbours.

    Single pass over the originally-detected joints only (no chaining), so
    the result is independent of joint order. Neighbourless missing joints
    get the centroid of the detected joints. All joints missing is an error.
    """
    detected = skeleton.detected()
    if detected.all():
        return skeleton
    if not detected.any():
        raise UnimputableError(
            f"subject {skeleton.subject_id}: no detected joints to impute from")
    joints = skeleton.joints.copy()
    conf = skeleton.confidence.copy()
    centroid = skeleton.joints[detected].mean(axis=0)
    for j in np.flatnonzero(~detected):
        neighbours = [n for n in sorted(topology.get(j, ())) if detected[n]]
        if neighbours:
            joints[j] = skeleton.joints[neighbours].mean(axis=0)
        else:
            joints[j] = centroid
        conf[j] = IMPUTED_CONF
    return Skeleton(joints=joints, confidence=conf, subject_id=skeleton.subject_id)


def associate_tracks(frames, max_jump):
    """Re-assign subject ids by greedy nearest-centroid frame-to-frame matching.

    Matches are taken in ascending (distance, track id, detection order);
    detections farther than max_jump from every live track start fresh ids.
    Deterministic for a given frame/skeleton order.
    """
    out = []
    next_id = 0
    tracks = {}   # id -> last centroid
    for frame in frames:
        cents = [s.centroid() for s in frame.skeletons]
        track_ids = sorted(tracks)
        pairs = []
        for ti, tid in enumerate(track_ids):
            for di, c in enumerate(cents):
                d = float(np.hypot(*(c - tracks[tid])))
                if d <= max_jump:
                    pairs.append((d, tid, di))
        pairs.sort(key=lambda p: (p[0], p[1], p[2]))
        used_tracks, used_dets = set(), set()
        assign = {}
        for d, tid, di in pairs:
            if tid in used_tracks or di in used_dets:
                continue
            assign[di] = tid
            used_tracks.add(tid)
            used_dets.add(di)
        new_tracks = {}
        new_skels = []
        for di, skel in enumerate(frame.skeletons):
            if di in assign:
                sid = assign[di]
            else:
                sid = next_id
                next_id += 1
            new_tracks[sid] = cents[di]
            new_skels.append(Skeleton(joints=skel.joints,
                                      confidence=skel.confidence,
                                      subject_id=sid))
        next_id = max(next_id, max(new_tracks, default=-1) + 1)
        tracks = new_tracks
        out.append(PoseFrame(frame_index=frame.frame_index,
                             skeletons=new_skels,
                             scene_kind=frame.scene_kind))
    return out


def window(frames, t, stride):
    """Cut fixed-length clips starting at 0, stride, 2*stride, ...

    A clip keeps only subjects present in all t of its frames; clips with no
    persistent subject are dropped. Fewer than t frames yields an empty list.
    """
    if t < 2:
        raise ValueError(f"t must be >= 2, got {t}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    clips = []
    for start in range(0, len(frames) - t + 1, stride):
        chunk = frames[start:start + t]
        persistent = set(chunk[0].subject_ids())
        for f in chunk[1:]:
            persistent &= set(f.subject_ids())
        if persistent:
            clips.append(PoseClip(frames=chunk, t=t, subject_ids=sorted(persistent)))
    return clips
