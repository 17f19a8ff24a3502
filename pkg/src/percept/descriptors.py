"""Spatio-temporal motion descriptors in cylindrical coordinates.

Every stream (person motion, pooled social-group motion, proxemics) encodes
pairs of 2D points as (rho, theta, z): planar distance, quadrant-aware
planar angle, signed vertical offset. Time runs down the vertical axis of
each descriptor, so one clip becomes an H x W x C tensor.
"""

from dataclasses import dataclass

import numpy as np

from . import config
from .errors import ConfigError, DataError, MissingSubjectError


@dataclass
class CylTriple:
    rho: float
    theta: float    # in (-pi, pi]; 0 by convention when rho == 0
    z: float


@dataclass
class DescriptorTensor:
    data: np.ndarray          # (H, W, C) float
    stream: str               # person | group | prox_social | prox_nonsocial
    channel_names: tuple

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3 or 0 in self.data.shape:
            raise DataError(f"descriptor must be H x W x C, got {self.data.shape}")
        if self.data.shape[2] not in (2, 3):
            raise DataError(f"descriptor needs 2 or 3 channels, got {self.data.shape[2]}")
        if not np.isfinite(self.data).all():
            raise DataError("descriptor contains non-finite entries")
        if len(self.channel_names) != self.data.shape[2]:
            raise DataError("channel_names length must match channel count")

    @property
    def shape(self):
        return self.data.shape


def _cyl_arrays(dx, dy):
    """Vectorized (rho, theta, z) with theta forced to 0 where rho == 0."""
    rho = np.hypot(dx, dy)
    theta = np.arctan2(dy, dx)
    theta = np.where(rho == 0.0, 0.0, theta)
    return rho, theta, dy


def cylindrical(a, b):
    """Cylindrical triple of the displacement from point a to point b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise DataError("cylindrical() requires finite coordinates")
    rho, theta, z = _cyl_arrays(b[0] - a[0], b[1] - a[1])
    return CylTriple(rho=float(rho), theta=float(theta), z=float(z))


def _subject_positions(clip, subject_id):
    """(t, J, 2) joint positions of one subject across a clip."""
    pos = []
    for frame in clip.frames:
        skel = frame.skeleton_of(subject_id)
        if skel is None:
            raise MissingSubjectError(
                f"subject {subject_id} absent from frame {frame.frame_index}")
        pos.append(skel.joints)
    return np.stack(pos)


def person_descriptor(clip, subject_id, ref_joints=config.DEFAULT_REF_JOINTS):
    """Relative-position skeleton clip for one subject.

    For each frame and each reference joint, the cylindrical triple from the
    reference to every other joint is computed; the per-reference t x (J-1)
    blocks are stacked vertically in ref_joints order, giving a
    (ref*t) x (J-1) x 3 tensor with channels (rho, theta, z).
    """
    pos = _subject_positions(clip, subject_id)     # (t, J, 2)
    n_joints = pos.shape[1]
    blocks = []
    for ref in ref_joints:
        others = [j for j in range(n_joints) if j != ref]
        delta = pos[:, others, :] - pos[:, ref:ref + 1, :]
        rho, theta, z = _cyl_arrays(delta[..., 0], delta[..., 1])
        blocks.append(np.stack([rho, theta, z], axis=-1))
    return DescriptorTensor(data=np.concatenate(blocks, axis=0),
                            stream="person",
                            channel_names=("rho", "theta", "z"))


def _pool(members, reducer, stream):
    if not members:
        raise DataError("cannot pool an empty member list")
    shape = members[0].data.shape
    for m in members[1:]:
        if m.data.shape != shape:
            raise DataError(f"member shape mismatch: {m.data.shape} vs {shape}")
    return DescriptorTensor(data=reducer([m.data for m in members]),
                            stream=stream,
                            channel_names=members[0].channel_names)


def group_average_pool(members):
    """Elementwise mean of member person-descriptors (channelwise)."""
    return _pool(members, lambda d: np.mean(d, axis=0), "group")


def group_max_pool(members):
    """Elementwise maximum of member person-descriptors (channelwise)."""
    return _pool(members, lambda d: np.max(d, axis=0), "group")


def body_center(skeleton, hip_joints=config.HIP_JOINTS):
    """Interpersonal-distance anchor: mean of the two hip joints."""
    return skeleton.joints[list(hip_joints)].mean(axis=0)


def social_proxemics(clip, subject_id, n_max, r_far, hip_joints=config.HIP_JOINTS):
    """Distances and bearings from one subject to every other, per frame.

    Columns are the other subjects persistent through the clip, ordered by
    ascending rho at the first frame (ties broken by id); the remaining
    columns up to n_max-1 are padded with (r_far, 0). Channels are (rho,
    theta); the vertical offset is not meaningful between people and is
    dropped.
    """
    if clip.scene_kind != "social":
        raise DataError("social_proxemics requires a social clip")
    if subject_id not in clip.subject_ids:
        raise MissingSubjectError(f"subject {subject_id} not persistent in clip")
    observed = max(len(f.skeletons) for f in clip.frames)
    if n_max < observed:
        raise ConfigError(f"n_max={n_max} below observed subject count {observed}")

    centers = {}
    for sid in clip.subject_ids:
        centers[sid] = np.stack([
            body_center(f.skeleton_of(sid), hip_joints) for f in clip.frames])
    others = [sid for sid in clip.subject_ids if sid != subject_id]

    t = clip.t
    rho = np.full((t, n_max - 1), float(r_far))
    theta = np.zeros((t, n_max - 1))
    if others:
        delta = np.stack([centers[o] for o in others], axis=1) \
            - centers[subject_id][:, None, :]        # (t, n_others, 2)
        r, th, _ = _cyl_arrays(delta[..., 0], delta[..., 1])
        order = sorted(range(len(others)), key=lambda i: (r[0, i], others[i]))
        rho[:, :len(others)] = r[:, order]
        theta[:, :len(others)] = th[:, order]
    return DescriptorTensor(data=np.stack([rho, theta], axis=-1),
                            stream="prox_social",
                            channel_names=("rho", "theta"))
