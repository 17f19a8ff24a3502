"""Nonsocial context: scene patches, arm-motion histograms, GMM regions.

The scene is gridded into patches; per frame-pair, arm-joint displacements
minus the subject's mean body displacement are binned into per-patch
orientation x magnitude histograms. Patch centers weighted by histogram
energy feed a seeded diagonal-covariance GMM whose component means become
the scene's semantic region centers.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import config
from .descriptors import DescriptorTensor, _cyl_arrays, _subject_positions
from .errors import DataError


@dataclass
class PatchGrid:
    width: float
    height: float
    rows: int = 12
    cols: int = 16
    clamped: int = 0    # count of out-of-grid points clamped to the border

    @property
    def n_patches(self):
        return self.rows * self.cols

    def cell_of(self, point):
        """Patch index of a scene point; outside points clamp to the border."""
        col = int(point[0] / self.width * self.cols)
        row = int(point[1] / self.height * self.rows)
        if not (0 <= col < self.cols and 0 <= row < self.rows):
            self.clamped += 1
            col = min(max(col, 0), self.cols - 1)
            row = min(max(row, 0), self.rows - 1)
        return row * self.cols + col

    def patch_center(self, index):
        row, col = divmod(index, self.cols)
        return np.array([(col + 0.5) * self.width / self.cols,
                         (row + 0.5) * self.height / self.rows])


@dataclass
class TrackletHistogram:
    patch: int
    histogram: np.ndarray    # (orient_bins, mag_bins), magnitude-weighted counts
    support: int = 0

    @property
    def energy(self):
        return float(self.histogram.sum())


def _mag_bin_edges(m_min, m_max, mag_bins):
    return np.logspace(np.log10(m_min), np.log10(m_max), mag_bins + 1)


def arm_motion_features(clips, grid, m_min=0.01, m_max=10.0,
                        orient_bins=8, mag_bins=3,
                        arm_pairs=config.ARM_JOINT_PAIRS):
    """Per-patch histograms of body-motion-compensated arm tracklets.

    A tracklet is one consecutive-frame displacement of an elbow or wrist,
    minus the subject's mean all-joint displacement for that frame pair, so
    rigid locomotion cancels exactly. Residuals shorter than m_min are
    discarded; the rest add their magnitude to the (orientation, magnitude)
    bin of the patch containing the arm's wrist.
    """
    hists = np.zeros((grid.n_patches, orient_bins, mag_bins))
    supports = np.zeros(grid.n_patches, dtype=int)
    edges = _mag_bin_edges(m_min, m_max, mag_bins)
    for clip in clips:
        if clip.scene_kind != "nonsocial":
            raise DataError("arm_motion_features requires nonsocial clips")
        for sid in clip.subject_ids:
            pos = _subject_positions(clip, sid)          # (t, J, 2)
            disp = pos[1:] - pos[:-1]                    # (t-1, J, 2)
            mean_disp = disp.mean(axis=1, keepdims=True)
            for elbow, wrist in arm_pairs:
                res = disp[:, (elbow, wrist), :] - mean_disp
                mag = np.hypot(res[..., 0], res[..., 1])     # (t-1, 2)
                ang = np.arctan2(res[..., 1], res[..., 0])
                for f in range(mag.shape[0]):
                    patch = grid.cell_of(pos[f, wrist])
                    for a in range(2):
                        m = mag[f, a]
                        if m < m_min:
                            continue
                        ob = min(int((ang[f, a] + np.pi) / (2 * np.pi / orient_bins)),
                                 orient_bins - 1)
                        mb = min(int(np.searchsorted(edges, m, side="right")) - 1,
                                 mag_bins - 1)
                        hists[patch, ob, max(mb, 0)] += m
                        supports[patch] += 1
    return [TrackletHistogram(patch=i, histogram=hists[i], support=int(supports[i]))
            for i in range(grid.n_patches)]


def active_patch_points(histograms, grid):
    """(points, weights) of patches with nonzero support, for fit_gmm."""
    pts, wts = [], []
    for h in histograms:
        if h.support > 0:
            pts.append(grid.patch_center(h.patch))
            wts.append(h.energy)
    if not pts:
        return np.zeros((0, 2)), np.zeros(0)
    return np.stack(pts), np.asarray(wts, dtype=float)


@dataclass
class GmmModel:
    weights: np.ndarray          # (K,), sums to 1
    means: np.ndarray            # (K, D)
    covariances: np.ndarray      # (K, D) diagonal entries, >= sigma_min_sq
    trace: list                  # weighted log-likelihood per iteration
    responsibilities: np.ndarray  # (N, K) for the training points
    seed: int = 0
    reduced: bool = False        # True when K was cut to the active point count

    @property
    def k(self):
        return self.means.shape[0]


def _log_gauss_diag(points, means, covs):
    """(N, K) log density of diagonal Gaussians."""
    diff = points[:, None, :] - means[None, :, :]
    return -0.5 * (np.log(2 * np.pi * covs)[None, :, :]
                   + diff ** 2 / covs[None, :, :]).sum(axis=2)


def _kmeans_pp_init(points, weights, k, rng):
    """k-means++-style seeding on weighted points."""
    n = points.shape[0]
    prob = weights / weights.sum()
    centers = [points[rng.choice(n, p=prob)]]
    for _ in range(1, k):
        d2 = np.min([((points - c) ** 2).sum(axis=1) for c in centers], axis=0)
        score = d2 * weights
        total = score.sum()
        if total <= 0:
            idx = int(rng.choice(n, p=prob))
        else:
            idx = int(rng.choice(n, p=score / total))
        centers.append(points[idx])
    return np.stack(centers)


def fit_gmm(points, weights, k, seed=0, sigma_min_sq=1e-6,
            tol=1e-6, max_iter=200):
    """Weighted EM fit of a diagonal-covariance Gaussian mixture.

    Deterministic per seed. When fewer points than k are supplied, k is
    reduced to the point count and the result is flagged. Stops when the
    weighted log-likelihood gain drops below tol or after max_iter rounds.
    """
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise DataError("fit_gmm needs a nonempty (N, D) point array")
    if np.any(weights <= 0):
        raise DataError("point weights must be positive")
    n, dim = points.shape
    reduced = n < k
    k = min(k, n)

    rng = np.random.default_rng(seed)
    means = _kmeans_pp_init(points, weights, k, rng)
    wsum = weights.sum()
    global_var = np.average((points - np.average(points, axis=0, weights=weights)) ** 2,
                            axis=0, weights=weights)
    covs = np.tile(np.maximum(global_var, sigma_min_sq), (k, 1))
    mix = np.full(k, 1.0 / k)

    trace = []
    resp = None
    prev_ll = -np.inf
    for _ in range(max_iter):
        logp = _log_gauss_diag(points, means, covs) + np.log(mix)[None, :]
        norm = np.logaddexp.reduce(logp, axis=1)
        ll = float(np.sum(weights * norm))
        trace.append(ll)
        resp = np.exp(logp - norm[:, None])
        if ll - prev_ll < tol and len(trace) > 1:
            break
        prev_ll = ll
        # M-step on point-weighted responsibilities
        wr = resp * weights[:, None]                  # (N, K)
        nk = wr.sum(axis=0)
        nk = np.maximum(nk, 1e-300)
        mix = nk / wsum
        means = (wr.T @ points) / nk[:, None]
        diff2 = (points[:, None, :] - means[None, :, :]) ** 2
        covs = np.maximum((wr[:, :, None] * diff2).sum(axis=0) / nk[:, None],
                          sigma_min_sq)
    return GmmModel(weights=mix, means=means, covariances=covs,
                    trace=trace, responsibilities=resp,
                    seed=seed, reduced=reduced)


@dataclass
class SceneRegions:
    centers: np.ndarray    # (K, 2) in scene coordinates, canonical order

    @property
    def k(self):
        return self.centers.shape[0]


def region_centers(model):
    """Canonicalize mixture means: weight descending, then x ascending."""
    order = sorted(range(model.k),
                   key=lambda i: (-model.weights[i],
                                  model.means[i, 0], model.means[i, 1]))
    return SceneRegions(centers=model.means[order].copy())


def nonsocial_proxemics(clip, subject_id, scene_regions,
                        hip_joints=config.HIP_JOINTS):
    """Distances and bearings from a subject to each region center, per frame.

    Channels (rho, theta), shape t x K x 2; column order is the canonical
    SceneRegions order, so relabeling mixture components cannot change it.
    """
    if clip.scene_kind != "nonsocial":
        raise DataError("nonsocial_proxemics requires a nonsocial clip")
    if scene_regions.k == 0:
        raise DataError("no regions to measure proxemics against")
    pos = _subject_positions(clip, subject_id)
    centers = pos[:, list(hip_joints), :].mean(axis=1)       # (t, 2)
    delta = scene_regions.centers[None, :, :] - centers[:, None, :]
    rho, theta, _ = _cyl_arrays(delta[..., 0], delta[..., 1])
    return DescriptorTensor(data=np.stack([rho, theta], axis=-1),
                            stream="prox_nonsocial",
                            channel_names=("rho", "theta"))


REGION_FIELDS = ["k", "weight", "cx", "cy", "var_x", "var_y"]


def write_region_file(model, path):
    """Write mixture components as text records in canonical region order."""
    order = sorted(range(model.k),
                   key=lambda i: (-model.weights[i],
                                  model.means[i, 0], model.means[i, 1]))
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REGION_FIELDS)
        writer.writeheader()
        for k, i in enumerate(order):
            writer.writerow({
                "k": k,
                "weight": repr(float(model.weights[i])),
                "cx": repr(float(model.means[i, 0])),
                "cy": repr(float(model.means[i, 1])),
                "var_x": repr(float(model.covariances[i, 0])),
                "var_y": repr(float(model.covariances[i, 1])),
            })


def read_region_file(path):
    """Load a region file; returns (SceneRegions, component record list)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"region file {path} has no components")
    records = []
    for row in rows:
        try:
            records.append({f: (int(row[f]) if f == "k" else float(row[f]))
                            for f in REGION_FIELDS})
        except (KeyError, ValueError) as exc:
            raise DataError(f"region file {path}: bad record {row}") from exc
    records.sort(key=lambda r: r["k"])
    centers = np.array([[r["cx"], r["cy"]] for r in records])
    return SceneRegions(centers=centers), records
