"""Height/normal (HN) label space: binning, composition, raster generation."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np
from PIL import Image

from hnlabel.geometry import backproject, denoise_points, estimate_normals
from hnlabel.ingest import DepthFrame
from hnlabel.orientation import (
    DEFAULT_SEED_UP,
    FloorFrameEstimate,
    GravityEstimationError,
    estimate_gravity,
    locate_floor,
)


@dataclass(frozen=True)
class HNLabelConfig:
    """Binning layout for the height x normal-angle label product."""

    n_h: int = 10
    n_n: int = 2
    height_min: float = 0.0
    height_max: float = 3.0
    normal_split_angle: float = 45.0
    ignore_label: int = 255

    def __post_init__(self):
        if self.n_h < 1 or self.n_n < 1:
            raise ValueError("bin counts must be >= 1")
        if not self.height_min < self.height_max:
            raise ValueError("height_min must be below height_max")
        if not 0 < self.normal_split_angle < 90:
            raise ValueError("normal_split_angle must lie strictly inside (0, 90)")
        if 0 <= self.ignore_label < self.n_h * self.n_n:
            raise ValueError("ignore_label collides with the label range")

    @property
    def n_labels(self) -> int:
        return self.n_h * self.n_n

    @property
    def layout(self) -> str:
        return f"h_major:n_n={self.n_n}"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HNLabelConfig":
        return cls(**d)


@dataclass(frozen=True)
class GeometryParams:
    """Knobs for back-projection neighborhood plane fitting."""

    window: int = 5
    depth_jump: float = 0.05


@dataclass(frozen=True)
class OrientationParams:
    """Knobs for gravity refinement and floor acceptance."""

    max_iters: int = 20
    angle_tol: float = 25.0
    percentile: float = 0.01
    support_angle: float = 30.0
    support_fraction_min: float = 0.5
    slab_thickness: float = 0.05
    seed_up: tuple[float, float, float] = field(
        default_factory=lambda: tuple(DEFAULT_SEED_UP)
    )


def compute_height(point_y: np.ndarray | float, floor_height: float) -> np.ndarray | float:
    """Signed height above the floor plane, gravity-frame meters."""
    return point_y - floor_height


def compute_normal_angle(normal: np.ndarray, up: np.ndarray) -> np.ndarray | float:
    """Angle in [0, 90] degrees between a normal and the vertical axis.

    Uses |cos| so up- and down-facing horizontal surfaces share an angle;
    the estimated normal's sign is view-dependent and must not leak into
    the label.
    """
    dots = np.abs(np.asarray(normal) @ np.asarray(up))
    return np.degrees(np.arccos(np.clip(dots, 0.0, 1.0)))


def bin_height(h: np.ndarray | float, cfg: HNLabelConfig) -> np.ndarray | int:
    """Uniform height bins over [height_min, height_max], clamped outside."""
    width = (cfg.height_max - cfg.height_min) / cfg.n_h
    idx = np.floor((np.asarray(h, dtype=np.float64) - cfg.height_min) / width).astype(np.int64)
    idx = np.clip(idx, 0, cfg.n_h - 1)
    return idx if idx.ndim else int(idx)

def bin_normal(angle: np.ndarray | float, cfg: HNLabelConfig) -> np.ndarray | int:
    """Angle bins over [0, 90]; for two bins, the split angle divides
    horizontal from vertical surfaces and the boundary goes upward."""
    a = np.asarray(angle, dtype=np.float64)
    if cfg.n_n == 1:
        idx = np.zeros(a.shape, dtype=np.int64)
    elif cfg.n_n == 2:
        idx = np.where(a < cfg.normal_split_angle, 0, 1).astype(np.int64)
    else:
        width = 90.0 / cfg.n_n
        idx = np.clip(np.floor(a / width).astype(np.int64), 0, cfg.n_n - 1)
    return idx if idx.ndim else int(idx)


def compose_label(h_bin: np.ndarray | int, n_bin: np.ndarray | int, cfg: HNLabelConfig):
    """Height-major product label: h_bin * n_n + n_bin."""
    h = np.asarray(h_bin)
    n = np.asarray(n_bin)
    if np.any(h < 0) or np.any(h >= cfg.n_h):
        raise ValueError("height bin out of range")
    if np.any(n < 0) or np.any(n >= cfg.n_n):
        raise ValueError("normal bin out of range")
    out = h * cfg.n_n + n
    return out if out.ndim else int(out)


def _raster_dtype(cfg: HNLabelConfig):
    return np.uint8 if max(cfg.n_labels - 1, cfg.ignore_label) < 256 else np.uint16


def generate_labels(
    depth: DepthFrame,
    cfg: HNLabelConfig = HNLabelConfig(),
    geom: GeometryParams = GeometryParams(),
    orient: OrientationParams = OrientationParams(),
) -> tuple[np.ndarray, FloorFrameEstimate]:
    """Full per-frame pipeline: depth -> points -> normals -> floor -> labels.

    Rejected frames (gravity failure or failed floor validation) yield an
    all-ignore raster and an estimate with accepted=False.
    """
    raster = np.full(depth.values.shape, cfg.ignore_label, dtype=_raster_dtype(cfg))
    cloud = backproject(depth)
    normals = estimate_normals(cloud, window=geom.window, depth_jump=geom.depth_jump)
    # Heights come from individual points and would otherwise carry the full
    # per-pixel depth noise; snapping points onto their fitted local planes
    # shrinks that noise by roughly the fit window size, which keeps labels
    # stable across viewpoints for surfaces near a height-bin edge.
    cloud = denoise_points(cloud, normals, max_shift=geom.depth_jump)
    try:
        gravity = estimate_gravity(
            normals,
            seed_up=np.asarray(orient.seed_up, dtype=np.float64),
            max_iters=orient.max_iters,
            angle_tol=orient.angle_tol,
        )
    except GravityEstimationError:
        return raster, FloorFrameEstimate(None, float("nan"), False, 0.0)
    estimate = locate_floor(
        cloud,
        normals,
        gravity,
        percentile=orient.percentile,
        support_angle=orient.support_angle,
        support_fraction_min=orient.support_fraction_min,
        slab_thickness=orient.slab_thickness,
    )
    if not estimate.accepted:
        return raster, estimate

    up = estimate.gravity.up  # locate_floor may have polished the axis
    mask = normals.valid_mask  # subset of point validity
    heights = compute_height(cloud.points[mask] @ up, estimate.floor_height)
    angles = compute_normal_angle(normals.normals[mask], up)
    labels = compose_label(bin_height(heights, cfg), bin_normal(angles, cfg), cfg)
    raster[mask] = labels.astype(raster.dtype)
    return raster, estimate


def save_label_png(path: str | Path, raster: np.ndarray) -> None:
    if raster.dtype == np.uint8:
        Image.fromarray(raster, mode="L").save(path)
    else:
        Image.fromarray(raster.astype(np.uint16)).save(path)


def load_label_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img).copy()


def save_sidecar(
    path: str | Path, cfg: HNLabelConfig, estimate: FloorFrameEstimate, frame_id: str
) -> None:
    """Per-frame metadata next to the label raster."""
    record = {
        "frame_id": frame_id,
        "config": cfg.to_dict(),
        "layout": cfg.layout,
        **estimate.to_record(),
    }
    Path(path).write_text(json.dumps(record, sort_keys=True, indent=2) + "\n")


def load_sidecar(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def label_palette(n_labels: int) -> np.ndarray:
    """Fixed (n_labels + 1)-entry RGB palette; the last entry colors ignore."""
    # Deterministic, high-contrast-ish: golden-angle hue walk.
    colors = np.zeros((n_labels + 1, 3), dtype=np.uint8)
    for i in range(n_labels):
        hue = (i * 0.618033988749895) % 1.0
        colors[i] = _hsv_to_rgb(hue, 0.65, 0.95)
    colors[n_labels] = (0, 0, 0)
    return colors


def _hsv_to_rgb(h: float, s: float, v: float) -> tuple[int, int, int]:
    i = int(h * 6) % 6
    f = h * 6 - int(h * 6)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    r, g, b = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
    return int(r * 255), int(g * 255), int(b * 255)


def colorize_labels(raster: np.ndarray, cfg: HNLabelConfig) -> np.ndarray:
    """Human-inspection RGB image of a label raster."""
    palette = label_palette(cfg.n_labels)
    idx = np.where(raster == cfg.ignore_label, cfg.n_labels, raster)
    idx = np.minimum(idx, cfg.n_labels)
    return palette[idx]
