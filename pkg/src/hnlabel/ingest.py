"""Loading, validation and geometric normalization of aligned RGB-D frames."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image


class IngestError(Exception):
    """Raised for unreadable, malformed or mismatched input files."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters plus the raster size they describe."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    depth_scale: float = 0.001

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx},{self.cy}) outside raster {self.width}x{self.height}"
            )
        if self.depth_scale <= 0:
            raise ValueError(f"depth_scale must be positive, got {self.depth_scale}")

    def cropped(self, x0: int, y0: int, width: int, height: int) -> "CameraIntrinsics":
        """Intrinsics after cutting a window with top-left corner (x0, y0)."""
        return replace(self, cx=self.cx - x0, cy=self.cy - y0, width=width, height=height)

    def scaled(self, width: int, height: int) -> "CameraIntrinsics":
        """Intrinsics after resampling the raster to a new size."""
        sx = width / self.width
        sy = height / self.height
        return replace(
            self,
            fx=self.fx * sx,
            fy=self.fy * sy,
            cx=(self.cx + 0.5) * sx - 0.5,
            cy=(self.cy + 0.5) * sy - 0.5,
            width=width,
            height=height,
        )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "depth_scale": self.depth_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(**{k: d[k] for k in ("fx", "fy", "cx", "cy", "width", "height", "depth_scale")})


@dataclass
class DepthFrame:
    """Metric depth raster with an explicit missing-value mask."""

    values: np.ndarray  # H x W, meters
    valid_mask: np.ndarray  # H x W, bool
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        h, w = self.values.shape
        if (h, w) != (self.intrinsics.height, self.intrinsics.width):
            raise ValueError(
                f"depth raster {w}x{h} does not match intrinsics "
                f"{self.intrinsics.width}x{self.intrinsics.height}"
            )
        if self.valid_mask.shape != self.values.shape:
            raise ValueError("valid_mask shape does not match depth values")
        if np.any(self.values[self.valid_mask] <= 0):
            raise ValueError("valid depth values must be positive")


@dataclass(frozen=True)
class FrameRecord:
    frame_id: str
    depth_path: str
    color_path: str
    intrinsics_id: str
    scene_id: str

    def to_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "depth_path": self.depth_path,
            "color_path": self.color_path,
            "intrinsics_id": self.intrinsics_id,
            "scene_id": self.scene_id,
        }


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered frame records plus the intrinsics table they reference."""

    frames: tuple[FrameRecord, ...]
    intrinsics: dict[str, CameraIntrinsics] = field(default_factory=dict)

    def __post_init__(self):
        ids = [f.frame_id for f in self.frames]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest frame_ids are not unique")
        missing = {f.intrinsics_id for f in self.frames} - set(self.intrinsics)
        if missing:
            raise ValueError(f"unresolved intrinsics ids: {sorted(missing)}")

    def intrinsics_for(self, record: FrameRecord) -> CameraIntrinsics:
        return self.intrinsics[record.intrinsics_id]


def load_depth(path: str | Path, intrinsics: CameraIntrinsics) -> DepthFrame:
    """Read a 16-bit depth PNG; stored value 0 means no measurement."""
    path = Path(path)
    if not path.exists():
        raise IngestError(f"depth file not found: {path}")
    try:
        with Image.open(path) as img:
            stored = np.asarray(img)
    except Exception as e:  # noqa: BLE001 - rewrap with path context
        raise IngestError(f"unreadable depth file {path}: {e}") from e
    if stored.ndim != 2:
        raise IngestError(f"depth file {path} is not single-channel (shape {stored.shape})")
    h, w = stored.shape
    if (h, w) != (intrinsics.height, intrinsics.width):
        raise IngestError(
            f"depth file {path} is {w}x{h} but intrinsics declare "
            f"{intrinsics.width}x{intrinsics.height}"
        )
    stored = stored.astype(np.float64)
    valid = stored > 0
    values = stored * intrinsics.depth_scale
    values[~valid] = 0.0
    return DepthFrame(values=values, valid_mask=valid, intrinsics=intrinsics)


def save_depth(path: str | Path, frame: DepthFrame) -> None:
    """Write a DepthFrame back to a 16-bit PNG (0 where invalid)."""
    stored = np.rint(frame.values / frame.intrinsics.depth_scale)
    stored[~frame.valid_mask] = 0
    if np.any(stored < 0) or np.any(stored > 65535):
        raise IngestError("depth values out of 16-bit storage range")
    Image.fromarray(stored.astype(np.uint16)).save(path)


def load_color(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"color file not found: {path}")
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"))
    except Exception as e:  # noqa: BLE001
        raise IngestError(f"unreadable color file {path}: {e}") from e
    return arr


def save_color(path: str | Path, color: np.ndarray) -> None:
    Image.fromarray(color.astype(np.uint8), mode="RGB").save(path)


def _sample_coords(size_src: int, size_dst: int) -> np.ndarray:
    """Continuous source coordinates of destination pixel centers."""
    scale = size_src / size_dst
    return (np.arange(size_dst) + 0.5) * scale - 0.5


def resample_bilinear(img: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Bilinear resampling; target = (height, width)."""
    th, tw = target
    h, w = img.shape[:2]
    ys = np.clip(_sample_coords(h, th), 0, h - 1)
    xs = np.clip(_sample_coords(w, tw), 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    if img.ndim == 3:
        wy = wy[..., None]
        wx = wx[..., None]
    vals = img.astype(np.float64)
    top = vals[y0][:, x0] * (1 - wx) + vals[y0][:, x1] * wx
    bot = vals[y1][:, x0] * (1 - wx) + vals[y1][:, x1] * wx
    out = top * (1 - wy) + bot * wy
    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        out = np.clip(np.rint(out), info.min, info.max).astype(img.dtype)
    return out


def resample_nearest(img: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resampling; never invents values."""
    th, tw = target
    h, w = img.shape[:2]
    ys = np.clip(np.floor((np.arange(th) + 0.5) * h / th).astype(int), 0, h - 1)
    xs = np.clip(np.floor((np.arange(tw) + 0.5) * w / tw).astype(int), 0, w - 1)
    return img[ys][:, xs].copy()


def center_crop_box(src: tuple[int, int], target: tuple[int, int]) -> tuple[int, int, int, int]:
    """(y0, x0, h, w) of the centered window with the target aspect ratio."""
    sh, sw = src
    th, tw = target
    # Largest window with target aspect that fits the source.
    if sw * th >= sh * tw:
        ch = sh
        cw = int(round(sh * tw / th))
    else:
        cw = sw
        ch = int(round(sw * th / tw))
    y0 = (sh - ch) // 2
    x0 = (sw - cw) // 2
    return y0, x0, ch, cw


def normalize_frame(
    color: np.ndarray,
    labels: np.ndarray | None,
    target: tuple[int, int],
) -> tuple[np.ndarray, np.ndarray | None]:
    """Center-crop to the target aspect ratio, then resample to target size.

    Color is blended bilinearly; labels are taken nearest-neighbor so no
    label value is ever interpolated into existence.
    """
    th, tw = target
    sh, sw = color.shape[:2]
    if th > sh or tw > sw:
        raise IngestError(f"target {tw}x{th} larger than source {sw}x{sh}; no upscaling policy")
    if labels is not None and labels.shape[:2] != (sh, sw):
        raise IngestError("label raster does not match color raster dimensions")
    if (th, tw) == (sh, sw):
        return color.copy(), None if labels is None else labels.copy()
    y0, x0, ch, cw = center_crop_box((sh, sw), target)
    color_c = color[y0 : y0 + ch, x0 : x0 + cw]
    out_color = resample_bilinear(color_c, target)
    out_labels = None
    if labels is not None:
        out_labels = resample_nearest(labels[y0 : y0 + ch, x0 : x0 + cw], target)
    return out_color, out_labels


def normalize_intrinsics(intr: CameraIntrinsics, target: tuple[int, int]) -> CameraIntrinsics:
    """Intrinsics matching the normalize_frame crop+resample."""
    th, tw = target
    y0, x0, ch, cw = center_crop_box((intr.height, intr.width), target)
    return intr.cropped(x0, y0, cw, ch).scaled(tw, th)


def sample_uniform(manifest: DatasetManifest, n: int, seed: int) -> DatasetManifest:
    """Draw n frames spread as evenly as possible across scenes.

    Deterministic for a fixed (manifest, n, seed); the selection preserves
    manifest order, so n == len(frames) is the identity.
    """
    total = len(manifest.frames)
    if n > total:
        raise ValueError(f"requested {n} frames but manifest has {total}")
    by_scene: dict[str, list[int]] = {}
    for i, rec in enumerate(manifest.frames):
        by_scene.setdefault(rec.scene_id, []).append(i)
    scene_ids = sorted(by_scene)
    quotas = {sid: min(n // len(scene_ids), len(by_scene[sid])) for sid in scene_ids}
    # Round-robin the remaining slots over scenes with spare frames.
    remaining = n - sum(quotas.values())
    while remaining > 0:
        progressed = False
        for sid in scene_ids:
            if remaining == 0:
                break
            if quotas[sid] < len(by_scene[sid]):
                quotas[sid] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            raise RuntimeError("allocator stalled")  # unreachable: n <= total
    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    for sid in scene_ids:
        idx = by_scene[sid]
        k = quotas[sid]
        if k == len(idx):
            chosen.extend(idx)
        else:
            chosen.extend(rng.choice(idx, size=k, replace=False).tolist())
    frames = tuple(manifest.frames[i] for i in sorted(chosen))
    return DatasetManifest(frames=frames, intrinsics=dict(manifest.intrinsics))


def load_manifest(manifest_path: str | Path, intrinsics_path: str | Path) -> DatasetManifest:
    """Read a line-delimited frame manifest plus its intrinsics table."""
    manifest_path = Path(manifest_path)
    intrinsics_path = Path(intrinsics_path)
    if not manifest_path.exists():
        raise IngestError(f"manifest not found: {manifest_path}")
    if not intrinsics_path.exists():
        raise IngestError(f"intrinsics table not found: {intrinsics_path}")
    try:
        table = json.loads(intrinsics_path.read_text())
        intr = {k: CameraIntrinsics.from_dict(v) for k, v in table.items()}
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise IngestError(f"bad intrinsics table {intrinsics_path}: {e}") from e
    frames = []
    for lineno, line in enumerate(manifest_path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            frames.append(
                FrameRecord(
                    frame_id=rec["frame_id"],
                    depth_path=rec["depth_path"],
                    color_path=rec["color_path"],
                    intrinsics_id=rec["intrinsics_id"],
                    scene_id=rec["scene_id"],
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise IngestError(f"bad manifest record at {manifest_path}:{lineno}: {e}") from e
    try:
        return DatasetManifest(frames=tuple(frames), intrinsics=intr)
    except ValueError as e:
        raise IngestError(f"inconsistent manifest {manifest_path}: {e}") from e


def save_manifest(
    manifest: DatasetManifest, manifest_path: str | Path, intrinsics_path: str | Path
) -> None:
    lines = [json.dumps(f.to_dict(), sort_keys=True) for f in manifest.frames]
    Path(manifest_path).write_text("\n".join(lines) + ("\n" if lines else ""))
    table = {k: v.to_dict() for k, v in manifest.intrinsics.items()}
    Path(intrinsics_path).write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
