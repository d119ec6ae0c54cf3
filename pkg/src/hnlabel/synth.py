"""Synthetic indoor scenes with exact analytic ground truth.

Geometry is restricted to infinite planes and axis-aligned boxes so every
ray intersection is closed-form and the rendered ground truth (world
heights, normal angles, HN labels, semantic classes) is trustworthy.
World frame: X right, Y up, Z into the room; the floor lies at Y = 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hnlabel.ingest import CameraIntrinsics, DepthFrame
from hnlabel.labels import HNLabelConfig, bin_height, bin_normal, compose_label

CLASS_FLOOR = 0
CLASS_WALL = 1
CLASS_CEILING = 2
FIRST_BOX_CLASS = 3
SEMANTIC_IGNORE = 255

_BASE_COLORS = {
    CLASS_FLOOR: (130, 100, 70),
    CLASS_WALL: (200, 200, 190),
    CLASS_CEILING: (240, 240, 235),
    3: (180, 60, 60),
    4: (60, 140, 60),
    5: (60, 80, 180),
    6: (200, 160, 40),
    7: (140, 60, 170),
}


class RenderError(Exception):
    """Raised when a pose sees no geometry at all."""


@dataclass
class Plane:
    point: np.ndarray  # any point on the plane
    normal: np.ndarray  # unit normal
    class_id: int


@dataclass
class Box:
    class_id: int
    center: np.ndarray
    extents: np.ndarray  # full sizes along x, y, z

    @property
    def min_corner(self) -> np.ndarray:
        return self.center - self.extents / 2

    @property
    def max_corner(self) -> np.ndarray:
        return self.center + self.extents / 2


@dataclass
class SyntheticScene:
    planes: list[Plane]
    boxes: list[Box]
    room_size: tuple[float, float, float]  # width (x), height (y), depth (z)
    class_colors: dict[int, tuple[int, int, int]] = field(default_factory=dict)

    def __post_init__(self):
        for b in self.boxes:
            if b.min_corner[1] < -1e-9:
                raise ValueError("boxes must sit on or above the floor")

    def color_for(self, class_id: int) -> tuple[int, int, int]:
        if class_id in self.class_colors:
            return self.class_colors[class_id]
        return _BASE_COLORS.get(class_id, (128, 128, 128))


@dataclass
class CameraPose:
    position: np.ndarray
    rotation: np.ndarray  # 3x3, camera frame -> world frame
    intrinsics: CameraIntrinsics


@dataclass
class GroundTruth:
    """Analytic per-pixel truth; never touched by depth noise."""

    height: np.ndarray  # world Y of the hit point (floor is at 0)
    normal_angle: np.ndarray  # degrees from vertical, [0, 90]
    label: np.ndarray  # HN label under the render's binning config
    class_id: np.ndarray  # semantic class raster (SEMANTIC_IGNORE where no hit)
    prim_id: np.ndarray  # primitive index per pixel, -1 where no hit
    points_world: np.ndarray  # H x W x 3 hit points
    normals_world: np.ndarray  # H x W x 3 surface normals
    valid_mask: np.ndarray


def default_intrinsics(width: int = 560, height: int = 424, focal: float = 570.0) -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=focal,
        fy=focal,
        cx=(width - 1) / 2,
        cy=(height - 1) / 2,
        width=width,
        height=height,
        depth_scale=0.001,
    )


def make_room(width: float, height: float, depth: float) -> list[Plane]:
    """Floor, ceiling and four walls of an axis-aligned room."""
    w2, d2 = width / 2, depth / 2
    e = np.eye(3)
    return [
        Plane(np.array([0.0, 0.0, 0.0]), e[1].copy(), CLASS_FLOOR),
        Plane(np.array([0.0, height, 0.0]), -e[1], CLASS_CEILING),
        Plane(np.array([-w2, 0.0, 0.0]), e[0].copy(), CLASS_WALL),
        Plane(np.array([w2, 0.0, 0.0]), -e[0], CLASS_WALL),
        Plane(np.array([0.0, 0.0, -d2]), e[2].copy(), CLASS_WALL),
        Plane(np.array([0.0, 0.0, d2]), -e[2], CLASS_WALL),
    ]


def _rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


# Maps the level camera (x right, y down, z forward) into the world frame
# (x right, y up, z toward -view): proper rotation, det +1.
_CAM_TO_WORLD_LEVEL = np.diag([1.0, -1.0, -1.0])


def pose_from_angles(
    position,
    yaw: float,
    pitch: float,
    roll: float,
    intrinsics: CameraIntrinsics,
) -> CameraPose:
    """Camera pose from degrees: yaw about world Y, pitch > 0 looks up."""
    rot = (
        _rot_y(np.radians(yaw))
        @ _rot_x(np.radians(pitch))
        @ _CAM_TO_WORLD_LEVEL
        @ _rot_z(np.radians(roll))
    )
    return CameraPose(np.asarray(position, dtype=np.float64), rot, intrinsics)


def render_depth(
    scene: SyntheticScene,
    pose: CameraPose,
    noise_sigma: float = 0.0,
    cfg: HNLabelConfig = HNLabelConfig(),
    seed: int = 0,
) -> tuple[DepthFrame, GroundTruth]:
    """Ray-cast the scene; Gaussian depth noise only touches the depth raster."""
    intr = pose.intrinsics
    h, w = intr.height, intr.width
    u = np.arange(w, dtype=np.float64)[None, :]
    v = np.arange(h, dtype=np.float64)[:, None]
    dirs_cam = np.empty((h, w, 3))
    dirs_cam[..., 0] = (u - intr.cx) / intr.fx
    dirs_cam[..., 1] = (v - intr.cy) / intr.fy
    dirs_cam[..., 2] = 1.0
    dirs = dirs_cam @ pose.rotation.T
    origin = pose.position

    best_t = np.full((h, w), np.inf)
    best_prim = np.full((h, w), -1, dtype=np.int32)
    best_normal = np.zeros((h, w, 3))
    best_class = np.full((h, w), SEMANTIC_IGNORE, dtype=np.int32)
    eps = 1e-9

    prim = 0
    for plane in scene.planes:
        denom = dirs @ plane.normal
        num = np.dot(plane.point - origin, plane.normal)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(denom) > 1e-12, num / denom, np.inf)
        hit = (t > eps) & (t < best_t)
        best_t = np.where(hit, t, best_t)
        best_prim[hit] = prim
        best_normal[hit] = plane.normal
        best_class[hit] = plane.class_id
        prim += 1

    for box in scene.boxes:
        with np.errstate(divide="ignore"):
            inv = 1.0 / dirs
        t1 = (box.min_corner - origin) * inv
        t2 = (box.max_corner - origin) * inv
        tlo = np.minimum(t1, t2)
        thi = np.maximum(t1, t2)
        tnear = tlo.max(axis=-1)
        tfar = thi.min(axis=-1)
        axis = tlo.argmax(axis=-1)
        hit = (tnear <= tfar) & (tnear > eps) & (tnear < best_t)
        best_t = np.where(hit, tnear, best_t)
        sign = -np.sign(np.take_along_axis(dirs, axis[..., None], axis=-1)[..., 0])
        # One primitive id per box face so face creases are visible downstream.
        face = (axis * 2 + (sign > 0)).astype(np.int32)
        best_prim[hit] = prim + face[hit]
        n = np.zeros((h, w, 3))
        np.put_along_axis(n, axis[..., None], sign[..., None], axis=-1)
        best_normal[hit] = n[hit]
        best_class[hit] = box.class_id
        prim += 6

    valid = np.isfinite(best_t)
    if not np.any(valid):
        raise RenderError("camera pose sees no geometry")

    depth_true = np.where(valid, best_t, 0.0)  # dirs_cam z == 1, so t is z-depth
    points = origin + dirs * depth_true[..., None]
    height = points[..., 1]
    dots = np.abs(best_normal[..., 1])
    angle = np.degrees(np.arccos(np.clip(dots, 0.0, 1.0)))
    label = np.full((h, w), cfg.ignore_label, dtype=np.int64)
    label[valid] = compose_label(
        bin_height(height[valid], cfg), bin_normal(angle[valid], cfg), cfg
    )

    depth = depth_true.copy()
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        noise = np.clip(
            rng.normal(0.0, noise_sigma, size=depth.shape), -3 * noise_sigma, 3 * noise_sigma
        )
        depth = np.where(valid, np.maximum(depth + noise, 1e-3), 0.0)

    frame = DepthFrame(values=depth, valid_mask=valid.copy(), intrinsics=intr)
    gt = GroundTruth(
        height=height,
        normal_angle=angle,
        label=label,
        class_id=best_class,
        prim_id=best_prim,
        points_world=points,
        normals_world=best_normal,
        valid_mask=valid,
    )
    return frame, gt


def boundary_mask(
    gt: GroundTruth,
    cfg: HNLabelConfig,
    window_radius: int = 2,
    height_band: float = 0.01,
    angle_band: float = 1.0,
) -> np.ndarray:
    """Pixels whose analytic label is not trustworthy for comparisons.

    Covers (a) pixels within window_radius + 1 of a primitive boundary,
    where any windowed estimator mixes surfaces, and (b) pixels whose
    height or angle lies within a band of a bin edge.
    """
    prim = gt.prim_id
    edge = np.zeros(prim.shape, dtype=bool)
    edge[:-1] |= prim[:-1] != prim[1:]
    edge[1:] |= prim[:-1] != prim[1:]
    edge[:, :-1] |= prim[:, :-1] != prim[:, 1:]
    edge[:, 1:] |= prim[:, :-1] != prim[:, 1:]
    edge |= ~gt.valid_mask
    for _ in range(window_radius + 1):
        grown = edge.copy()
        grown[:-1] |= edge[1:]
        grown[1:] |= edge[:-1]
        grown[:, :-1] |= edge[:, 1:]
        grown[:, 1:] |= edge[:, :-1]
        edge = grown
    # Only interior bin edges are decision boundaries; beyond the clamp
    # edges (height_min / height_max) both sides land in the same bin.
    bin_w = (cfg.height_max - cfg.height_min) / cfg.n_h
    rel = gt.height - cfg.height_min
    k = np.clip(np.round(rel / bin_w), 1, cfg.n_h - 1) if cfg.n_h > 1 else None
    if k is None:
        near_h = np.zeros(prim.shape, dtype=bool)
    else:
        near_h = np.abs(rel - k * bin_w) < height_band
    if cfg.n_n == 1:
        near_a = np.zeros(prim.shape, dtype=bool)
    elif cfg.n_n == 2:
        near_a = np.abs(gt.normal_angle - cfg.normal_split_angle) < angle_band
    else:
        aw = 90.0 / cfg.n_n
        ka = np.clip(np.round(gt.normal_angle / aw), 1, cfg.n_n - 1)
        near_a = np.abs(gt.normal_angle - ka * aw) < angle_band
    return edge | near_h | near_a


_LIGHT_DIR = np.array([0.3, 0.85, 0.44]) / np.linalg.norm([0.3, 0.85, 0.44])


def render_color(
    scene: SyntheticScene,
    gt: GroundTruth,
    brightness_jitter: float = 0.0,
    pixel_noise: float = 0.0,
    seed: int = 0,
    shading: float = 0.0,
    pose: CameraPose | None = None,
) -> np.ndarray:
    """Flat per-class shading, optionally jittered per frame and per pixel.

    shading > 0 blends in Lambertian shading plus, when the pose is given,
    camera-distance falloff, so the image carries the monocular geometry
    cues a flat render lacks.
    """
    rng = np.random.default_rng(seed)
    h, w = gt.class_id.shape
    color = np.zeros((h, w, 3), dtype=np.float64)
    for cid in np.unique(gt.class_id):
        if cid == SEMANTIC_IGNORE:
            continue
        color[gt.class_id == cid] = scene.color_for(int(cid))
    if shading > 0:
        shade = 0.35 + 0.65 * np.abs(gt.normals_world @ _LIGHT_DIR)
        if pose is not None:
            dist = np.linalg.norm(gt.points_world - pose.position, axis=-1)
            shade = shade / (1.0 + 0.06 * dist**2)
        color *= ((1.0 - shading) + shading * shade)[..., None]
    if brightness_jitter > 0:
        color *= 1.0 + rng.uniform(-brightness_jitter, brightness_jitter)
    if pixel_noise > 0:
        color += rng.normal(0.0, pixel_noise * 255.0, size=color.shape)
    return np.clip(np.rint(color), 0, 255).astype(np.uint8)


def random_scene(seed: int) -> SyntheticScene:
    """Deterministic random room with 0-4 boxes resting on the floor."""
    rng = np.random.default_rng(seed)
    width = rng.uniform(4.0, 7.0)
    depth = rng.uniform(4.0, 7.0)
    height = rng.uniform(2.4, 3.0)
    planes = make_room(width, height, depth)
    n_boxes = int(rng.integers(0, 5))
    boxes = []
    for _ in range(n_boxes):
        ext = rng.uniform([0.3, 0.3, 0.3], [1.2, 1.2, 1.2])
        cx = rng.uniform(-width / 2 + ext[0] / 2 + 0.3, width / 2 - ext[0] / 2 - 0.3)
        cz = rng.uniform(-depth / 2 + ext[2] / 2 + 0.3, depth / 2 - ext[2] / 2 - 0.3)
        class_id = int(rng.integers(FIRST_BOX_CLASS, 8))
        boxes.append(Box(class_id, np.array([cx, ext[1] / 2, cz]), ext))
    jitter = rng.integers(-20, 21, size=3)
    colors = {
        cid: tuple(int(np.clip(c + j, 0, 255)) for c, j in zip(base, jitter))
        for cid, base in _BASE_COLORS.items()
    }
    return SyntheticScene(planes, boxes, (width, height, depth), colors)


def random_pose(
    scene: SyntheticScene,
    seed: int,
    intrinsics: CameraIntrinsics | None = None,
    pitch_range: tuple[float, float] = (-45.0, 10.0),
    height_range: tuple[float, float] = (1.2, 1.8),
    roll_limit: float = 10.0,
) -> CameraPose:
    """Roughly-upright pose inside the room, outside every box."""
    rng = np.random.default_rng(seed)
    intr = intrinsics if intrinsics is not None else default_intrinsics()
    width, _, depth = scene.room_size
    for _ in range(100):
        x = rng.uniform(-width / 2 + 0.5, width / 2 - 0.5)
        z = rng.uniform(-depth / 2 + 0.5, depth / 2 - 0.5)
        y = rng.uniform(*height_range)
        pos = np.array([x, y, z])
        inside = any(
            np.all(pos > b.min_corner - 0.2) and np.all(pos < b.max_corner + 0.2)
            for b in scene.boxes
        )
        if not inside:
            break
    yaw = rng.uniform(0.0, 360.0)
    pitch = rng.uniform(*pitch_range)
    roll = rng.uniform(-roll_limit, roll_limit)
    return pose_from_angles(pos, yaw, pitch, roll, intr)


def save_scene(scene: SyntheticScene, path: str | Path) -> None:
    doc = {
        "room_size": list(scene.room_size),
        "planes": [
            {
                "point": [float(x) for x in p.point],
                "normal": [float(x) for x in p.normal],
                "class_id": p.class_id,
            }
            for p in scene.planes
        ],
        "boxes": [
            {
                "class_id": b.class_id,
                "center": [float(x) for x in b.center],
                "extents": [float(x) for x in b.extents],
            }
            for b in scene.boxes
        ],
        "class_colors": {str(k): list(v) for k, v in scene.class_colors.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_scene(path: str | Path) -> SyntheticScene:
    doc = json.loads(Path(path).read_text())
    planes = [
        Plane(np.array(p["point"]), np.array(p["normal"]), int(p["class_id"]))
        for p in doc["planes"]
    ]
    boxes = [
        Box(int(b["class_id"]), np.array(b["center"]), np.array(b["extents"]))
        for b in doc["boxes"]
    ]
    colors = {int(k): tuple(v) for k, v in doc.get("class_colors", {}).items()}
    return SyntheticScene(planes, boxes, tuple(doc["room_size"]), colors)
