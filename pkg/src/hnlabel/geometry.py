"""Back-projection of depth to 3D and windowed PCA surface normals.

Camera frame convention: x right, y down, z forward (matches raster
indexing; valid points always have z > 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hnlabel.ingest import DepthFrame

# Relative eigenvalue-gap threshold below which a neighborhood is treated
# as isotropic and the pixel marked invalid instead of picking a direction.
_EIG_GAP_REL = 1e-9


@dataclass
class PointCloud:
    points: np.ndarray  # H x W x 3, meters
    valid_mask: np.ndarray  # H x W, bool


@dataclass
class NormalMap:
    normals: np.ndarray  # H x W x 3, unit vectors
    valid_mask: np.ndarray  # H x W, bool (subset of point validity)
    # Planarity confidence in [0, 1]: how cleanly the neighborhood separates
    # a plane from its residual. Downstream estimators may weight by this.
    quality: np.ndarray | None = None
    # Centroid of each pixel's fitted neighborhood (H x W x 3); together with
    # the normal it defines the local plane used for point denoising.
    centroids: np.ndarray | None = None


def backproject(depth: DepthFrame) -> PointCloud:
    """Pinhole back-projection; invalid depth pixels stay invalid."""
    intr = depth.intrinsics
    h, w = depth.values.shape
    u = np.arange(w, dtype=np.float64)[None, :]
    v = np.arange(h, dtype=np.float64)[:, None]
    d = depth.values
    pts = np.empty((h, w, 3), dtype=np.float64)
    pts[..., 0] = (u - intr.cx) * d / intr.fx
    pts[..., 1] = (v - intr.cy) * d / intr.fy
    pts[..., 2] = d
    pts[~depth.valid_mask] = 0.0
    return PointCloud(points=pts, valid_mask=depth.valid_mask.copy())


def estimate_normals(cloud: PointCloud, window: int = 5, depth_jump: float = 0.05) -> NormalMap:
    """Per-pixel plane fit over a window, guarded at depth discontinuities.

    The normal is the minor eigenvector of the covariance of neighboring
    points, excluding neighbors whose depth differs from the center by more
    than depth_jump. Pixels with fewer than 3 usable neighbors, or with an
    isotropic neighborhood, come out invalid. Normals face the camera.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd size, got {window}")
    h, w = cloud.valid_mask.shape
    r = window // 2
    pts = np.where(cloud.valid_mask[..., None], cloud.points, 0.0)
    pad_pts = np.pad(pts, ((r, r), (r, r), (0, 0)))
    pad_valid = np.pad(cloud.valid_mask, r)
    center_z = cloud.points[..., 2]

    count = np.zeros((h, w), dtype=np.int64)
    s1 = np.zeros((h, w, 3), dtype=np.float64)
    s2 = np.zeros((h, w, 3, 3), dtype=np.float64)
    for dy in range(window):
        for dx in range(window):
            p = pad_pts[dy : dy + h, dx : dx + w]
            m = (
                pad_valid[dy : dy + h, dx : dx + w]
                & cloud.valid_mask
                & (np.abs(p[..., 2] - center_z) <= depth_jump)
            )
            pm = np.where(m[..., None], p, 0.0)
            count += m
            s1 += pm
            s2 += pm[..., :, None] * pm[..., None, :]
    enough = cloud.valid_mask & (count >= 3)

    cnt = np.maximum(count, 1).astype(np.float64)
    mean = s1 / cnt[..., None]
    cov = s2 / cnt[..., None, None] - mean[..., :, None] * mean[..., None, :]

    flat = cov[enough]
    normals = np.zeros((h, w, 3), dtype=np.float64)
    valid = np.zeros((h, w), dtype=bool)
    quality = np.zeros((h, w), dtype=np.float64)
    if flat.shape[0]:
        # Depth noise perturbs points along their viewing rays, which tilts
        # the raw minor eigenvector on obliquely-viewed surfaces. Estimate
        # the per-pixel ray-noise variance from the first-pass residual and
        # subtract it from the covariance before the final decomposition.
        center = cloud.points[enough]
        rays = center / np.linalg.norm(center, axis=1, keepdims=True)
        ray_outer = rays[:, :, None] * rays[:, None, :]
        evals, evecs = np.linalg.eigh(flat)
        evals_raw = evals
        for _ in range(2):
            n0 = evecs[:, :, 0]
            cos_rn = np.abs(np.einsum("ij,ij->i", rays, n0))
            # The sensor noise level is shared across the frame; a robust
            # global estimate avoids chasing per-pixel residual fluctuation.
            sigma2 = float(np.median(evals_raw[:, 0] / np.maximum(cos_rn, 0.1) ** 2))
            if sigma2 <= 0:
                break
            cut = np.minimum(sigma2, 0.95 * evals_raw[:, 1])
            evals, evecs = np.linalg.eigh(flat - cut[:, None, None] * ray_outer)
        n = evecs[:, :, 0]
        gap_ok = (evals[:, 1] - evals[:, 0]) > _EIG_GAP_REL * np.maximum(evals[:, 2], 1e-300)
        dots = np.einsum("ij,ij->i", n, cloud.points[enough])
        n = np.where(dots[:, None] > 0, -n, n)
        ok = gap_ok & (dots != 0)
        normals[enough] = n
        q = np.clip((evals[:, 1] - np.maximum(evals[:, 0], 0.0)) / np.maximum(evals[:, 1], 1e-300), 0.0, 1.0)
        # Where the noise variance rivals the in-plane scatter the normal is
        # noise-dominated (and systematically tilted by the capped ray-noise
        # correction); fold that signal-to-noise ratio into the confidence.
        if sigma2 > 0:
            snr = np.maximum(evals[:, 1], 0.0) / sigma2
            q = q * (snr / (8.0 + snr))
        quality[enough] = q
        valid_flat = np.zeros(h * w, dtype=bool)
        valid_flat[np.flatnonzero(enough.ravel())] = ok
        valid = valid_flat.reshape(h, w)
        normals[~valid] = 0.0
        quality[~valid] = 0.0
    centroids = np.where(valid[..., None], mean, 0.0)
    return NormalMap(normals=normals, valid_mask=valid, quality=quality, centroids=centroids)


def denoise_points(
    cloud: PointCloud, normals: NormalMap, max_shift: float = 0.05
) -> PointCloud:
    """Snap each point onto its locally fitted plane along its viewing ray.

    Depth noise moves a point along its ray; the local plane (normal +
    neighborhood centroid) averages that noise over the whole fit window, so
    the ray/plane intersection is a far lower-variance estimate of where the
    surface actually is. On noiseless planar data the intersection is the
    original point. Pixels without a valid normal, rays nearly parallel to
    the plane, and corrections larger than max_shift (a fit that mixed
    surfaces at an occlusion) keep the raw point.
    """
    if normals.centroids is None:
        return cloud
    pts = cloud.points
    n = normals.normals
    num = np.einsum("hwc,hwc->hw", n, normals.centroids)
    den = np.einsum("hwc,hwc->hw", n, pts)
    z = pts[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / den
    ok = (
        normals.valid_mask
        & cloud.valid_mask
        & (np.abs(den) > 0.05 * np.linalg.norm(pts, axis=-1))
        & np.isfinite(t)
        & (np.abs(t - 1.0) * np.abs(z) <= max_shift)
    )
    out = np.where(ok[..., None], t[..., None] * pts, pts)
    return PointCloud(points=out, valid_mask=cloud.valid_mask.copy())


def export_xyz(cloud: PointCloud, normals: NormalMap, path: str | Path) -> int:
    """Debug dump: one "x y z nx ny nz" line per normal-valid point."""
    mask = normals.valid_mask
    pts = cloud.points[mask]
    nrm = normals.normals[mask]
    with open(path, "w") as f:
        for (x, y, z), (nx, ny, nz) in zip(pts, nrm):
            f.write(f"{x:.6f} {y:.6f} {z:.6f} {nx:.6f} {ny:.6f} {nz:.6f}\n")
    return int(mask.sum())
