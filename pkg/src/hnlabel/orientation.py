"""Gravity/up estimation, floor location and frame acceptance."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from hnlabel.geometry import NormalMap, PointCloud

MIN_VALID_NORMALS = 100
_CONVERGENCE_DEG = 0.01

# Camera y points down, so the upward direction for a roughly upright
# sensor is -y in the camera frame.
DEFAULT_SEED_UP = np.array([0.0, -1.0, 0.0])


class GravityEstimationError(Exception):
    """Raised when a frame carries too little information to orient."""


@dataclass
class GravityEstimate:
    up: np.ndarray  # unit 3-vector, camera frame
    rotation: np.ndarray  # 3x3, camera frame -> gravity-aligned frame (up -> +Y)
    inlier_fraction: float
    iterations_used: int


@dataclass
class FloorFrameEstimate:
    gravity: GravityEstimate | None
    floor_height: float  # gravity-frame Y of the floor plane
    accepted: bool
    floor_support_fraction: float

    def to_record(self) -> dict:
        """Per-frame diagnostic record for logging."""
        g = self.gravity
        return {
            "up": None if g is None else [float(x) for x in g.up],
            "inlier_fraction": None if g is None else float(g.inlier_fraction),
            "floor_height": None if not np.isfinite(self.floor_height) else float(self.floor_height),
            "floor_support_fraction": float(self.floor_support_fraction),
            "accepted": bool(self.accepted),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def _seed_axis(
    ns: np.ndarray, weights: np.ndarray, seed: np.ndarray, angle_tol: float
) -> np.ndarray:
    """Initial axis: the supported normal-scatter eigenvector nearest the seed."""
    scatter = (ns * weights[:, None]).T @ ns
    _, evecs = np.linalg.eigh(scatter)
    cos_tol = np.cos(np.radians(angle_tol))
    min_support = max(MIN_VALID_NORMALS, int(0.05 * ns.shape[0]))
    best = seed
    best_dot = -1.0
    for i in range(3):
        cand = evecs[:, i]
        if int(np.sum(np.abs(ns @ cand) >= cos_tol)) < min_support:
            continue
        d = abs(float(np.dot(cand, seed)))
        if d > best_dot:
            best_dot = d
            best = cand if np.dot(cand, seed) >= 0 else -cand
    return best


def _rotation_from_up(up: np.ndarray) -> np.ndarray:
    """Proper rotation sending the camera frame to a frame with up -> +Y."""
    ref = np.array([1.0, 0.0, 0.0])
    if abs(np.dot(ref, up)) > 0.9:
        ref = np.array([0.0, 0.0, 1.0])
    ex = ref - np.dot(ref, up) * up
    ex /= np.linalg.norm(ex)
    ez = np.cross(ex, up)
    return np.stack([ex, up, ez])


def estimate_gravity(
    normals: NormalMap,
    seed_up: np.ndarray = DEFAULT_SEED_UP,
    max_iters: int = 20,
    angle_tol: float = 25.0,
    refine_tol: float = 5.0,
    max_seed_angle: float = 55.0,
) -> GravityEstimate:
    """Iterative dominant-axis refinement of the upward direction.

    The axis is seeded with the scatter-matrix eigenvector closest to
    seed_up among those with meaningful support (a pitched camera can put
    the raw seed closer to a wall's normal family than to the vertical).
    From there the estimator repeatedly collects normals within a tolerance
    cone of the current axis (either sign), sign-aligns them, and replaces
    the axis with their principal direction until the update angle drops
    below 0.1 degrees or max_iters is reached. The cone starts at angle_tol
    and is annealed down to refine_tol, shedding slightly-tilted normals
    (plane creases) that would otherwise bias the axis.
    """
    ns = normals.normals[normals.valid_mask]
    if ns.shape[0] < MIN_VALID_NORMALS:
        raise GravityEstimationError(
            f"only {ns.shape[0]} valid normals, need {MIN_VALID_NORMALS}"
        )
    if normals.quality is not None:
        weights = normals.quality[normals.valid_mask]
    else:
        weights = np.ones(ns.shape[0])
    seed = np.asarray(seed_up, dtype=np.float64)
    seed = seed / np.linalg.norm(seed)
    up = _seed_axis(ns, weights, seed, angle_tol)
    iters = 0
    final_tol = min(refine_tol, angle_tol)
    tols = [angle_tol]
    while tols[-1] > final_tol:
        tols.append(max(final_tol, tols[-1] / 2.0))
    # max_iters budgets each annealing phase; the narrow-cone phases are
    # near-unit-slope contractions and need the full budget to settle.
    for tol in tols:
        cos_tol = np.cos(np.radians(tol))
        for _ in range(max_iters):
            iters += 1
            dots = ns @ up
            sel = np.abs(dots) >= cos_tol
            if not np.any(sel):
                break
            aligned = ns[sel] * np.where(dots[sel] < 0, -1.0, 1.0)[:, None]
            scatter = (aligned * weights[sel][:, None]).T @ aligned
            _, evecs = np.linalg.eigh(scatter)
            new_up = evecs[:, -1]
            if np.dot(new_up, up) < 0:
                new_up = -new_up
            step = np.degrees(np.arccos(np.clip(np.dot(new_up, up), -1.0, 1.0)))
            up = new_up
            if step < _CONVERGENCE_DEG:
                break
    seed_angle = np.degrees(np.arccos(np.clip(np.dot(up, seed), -1.0, 1.0)))
    if seed_angle > max_seed_angle:
        # The seed encodes a roughly-upright sensor; an axis this far off is
        # a wall's normal family in a frame with no usable vertical surface.
        raise GravityEstimationError(
            f"axis {seed_angle:.1f} deg from the upright prior "
            f"(limit {max_seed_angle:.1f})"
        )
    supporters = int(np.sum(np.abs(ns @ up) >= np.cos(np.radians(angle_tol))))
    if supporters < MIN_VALID_NORMALS:
        raise GravityEstimationError(
            f"only {supporters} normals support the converged axis, "
            f"need {MIN_VALID_NORMALS}"
        )
    inlier_fraction = float(supporters / ns.shape[0])
    return GravityEstimate(
        up=up,
        rotation=_rotation_from_up(up),
        inlier_fraction=inlier_fraction,
        iterations_used=iters,
    )


def locate_floor(
    cloud: PointCloud,
    normals: NormalMap,
    gravity: GravityEstimate,
    percentile: float = 0.01,
    support_angle: float = 30.0,
    support_fraction_min: float = 0.5,
    slab_thickness: float = 0.05,
) -> FloorFrameEstimate:
    """Place the floor at a low quantile of gravity-frame heights and vet it.

    The frame is accepted only when more than support_fraction_min of the
    points in a slab around the floor height carry normals aligned (within
    support_angle) with the upward direction.
    """
    up = gravity.up
    pts = cloud.points[cloud.valid_mask]
    if pts.shape[0] == 0:
        return FloorFrameEstimate(gravity, float("nan"), False, 0.0)
    heights = pts @ up  # gravity-frame Y; rows of R other than up are irrelevant here
    floor_height = float(np.quantile(heights, percentile))

    # Candidates need a valid normal to be judged at all.
    cand_mask = normals.valid_mask
    cand_pts = cloud.points[cand_mask]
    cand_nrm = normals.normals[cand_mask]
    in_slab = np.abs(cand_pts @ up - floor_height) <= slab_thickness
    if not np.any(in_slab):
        return FloorFrameEstimate(gravity, floor_height, False, 0.0)
    cos_support = np.cos(np.radians(support_angle))
    # Signed test: floor normals point along +up; a surface facing away
    # (a far wall or ceiling caught in the slab) must not count as support.
    aligned = cand_nrm[in_slab] @ up >= cos_support
    support = float(np.mean(aligned))
    accepted = support > support_fraction_min
    # A frame whose entire cloud sits inside the floor slab is a single
    # plane filling the view (e.g. a close-up wall whose normal was taken
    # for up); there is no structure above the floor to corroborate it.
    if accepted and float(np.mean(heights > floor_height + slab_thickness)) < _MIN_ABOVE_FRACTION:
        return FloorFrameEstimate(gravity, floor_height, False, support)
    if accepted:
        up, floor_height, consistent = _refine_floor_plane(
            pts, cand_pts, cand_nrm, up, floor_height,
            percentile, cos_support, slab_thickness,
        )
        if not consistent:
            # The floor slab's own plane fit contradicts the gravity axis
            # beyond the drift limit: the axis converged onto an accidental
            # normal family (e.g. a frame with no real floor in view, where
            # a box top fills the low band) and cannot be trusted.
            return FloorFrameEstimate(gravity, floor_height, False, support)
        gravity = GravityEstimate(
            up=up,
            rotation=_rotation_from_up(up),
            inlier_fraction=gravity.inlier_fraction,
            iterations_used=gravity.iterations_used,
        )
    return FloorFrameEstimate(
        gravity=gravity,
        floor_height=floor_height,
        accepted=accepted,
        floor_support_fraction=support,
    )


_REFINE_DRIFT_DEG = 10.0
_MIN_ABOVE_FRACTION = 0.02


def _refine_floor_plane(
    pts: np.ndarray,
    cand_pts: np.ndarray,
    cand_nrm: np.ndarray,
    up: np.ndarray,
    floor_height: float,
    percentile: float,
    cos_support: float,
    slab_thickness: float,
    iters: int = 3,
) -> tuple[np.ndarray, float, bool]:
    """Polish up and floor height with a plane fit over the floor slab.

    Per-pixel normals come from small windows and inherit their noise; a
    total-least-squares plane over the whole slab averages it out (the fit
    bias shrinks with the square of the patch extent). The refined height is
    the fitted plane's offset, which unlike a low quantile is centered on
    the surface rather than on the noise tail.

    Returns (up, floor_height, consistent). consistent is False when the
    very first slab fit already disagrees with the incoming axis by more
    than the drift limit: the lowest supported surface then contradicts the
    gravity estimate itself, not just local noise, and the caller should
    reject the frame. Later-iteration drift only stops refinement (the slab
    may have re-anchored onto a raised surface).
    """
    up0 = up
    cos_drift = np.cos(np.radians(_REFINE_DRIFT_DEG))
    for i in range(iters):
        sel = np.abs(cand_pts @ up - floor_height) <= slab_thickness
        sel &= cand_nrm @ up >= cos_support
        if np.count_nonzero(sel) < MIN_VALID_NORMALS:
            break
        slab = cand_pts[sel]
        center = slab.mean(axis=0)
        cov = np.cov((slab - center).T)
        _, evecs = np.linalg.eigh(cov)
        new_up = evecs[:, 0]
        if np.dot(new_up, up0) < 0:
            new_up = -new_up
        if np.dot(new_up, up0) < cos_drift:
            if i == 0:
                return up, floor_height, False
            break
        up = new_up
        floor_height = float(np.dot(center, up))
        # Re-anchor against the full cloud so a slab that drifted onto a
        # raised surface snaps back to the lowest supported band.
        quant = float(np.quantile(pts @ up, percentile))
        if floor_height - quant > slab_thickness:
            floor_height = quant
    return up, floor_height, True
