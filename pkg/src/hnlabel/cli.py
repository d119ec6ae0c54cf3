"""Batch driver: labelgen / stats / eval / synth subcommands."""

from __future__ import annotations

import argparse
import json
import multiprocessing
import sys
import time
from dataclasses import dataclass, asdict, fields
from pathlib import Path

import numpy as np

from hnlabel import ingest, labels as hn, metrics, stats, synth
from hnlabel.ingest import DatasetManifest, FrameRecord
from hnlabel.labels import GeometryParams, HNLabelConfig, OrientationParams


@dataclass
class RunConfig:
    manifest: str = ""
    intrinsics: str = ""
    out: str = ""
    workers: int = 1
    seed: int = 0
    resume: bool = False
    colorize: bool = False
    # HN label space
    n_h: int = 10
    n_n: int = 2
    height_min: float = 0.0
    height_max: float = 3.0
    normal_split_angle: float = 45.0
    ignore_label: int = 255
    # geometry
    window: int = 5
    depth_jump: float = 0.05
    # orientation
    max_iters: int = 20
    angle_tol: float = 25.0
    percentile: float = 0.01
    support_angle: float = 30.0
    support_fraction_min: float = 0.5
    slab_thickness: float = 0.05

    def label_config(self) -> HNLabelConfig:
        return HNLabelConfig(
            n_h=self.n_h,
            n_n=self.n_n,
            height_min=self.height_min,
            height_max=self.height_max,
            normal_split_angle=self.normal_split_angle,
            ignore_label=self.ignore_label,
        )

    def geometry_params(self) -> GeometryParams:
        return GeometryParams(window=self.window, depth_jump=self.depth_jump)

    def orientation_params(self) -> OrientationParams:
        return OrientationParams(
            max_iters=self.max_iters,
            angle_tol=self.angle_tol,
            percentile=self.percentile,
            support_angle=self.support_angle,
            support_fraction_min=self.support_fraction_min,
            slab_thickness=self.slab_thickness,
        )


@dataclass
class RunReport:
    processed: int = 0
    accepted: int = 0
    rejected: int = 0
    failed: int = 0
    wall_time_s: float = 0.0


def _frame_paths(out_dir: Path, frame_id: str) -> tuple[Path, Path]:
    return out_dir / "labels" / f"{frame_id}.png", out_dir / "labels" / f"{frame_id}.json"


def _is_complete(out_dir: Path, frame_id: str) -> dict | None:
    """Existing, metadata-complete output for a frame, if any."""
    png, sidecar = _frame_paths(out_dir, frame_id)
    if not (png.exists() and sidecar.exists()):
        return None
    try:
        meta = hn.load_sidecar(sidecar)
    except (json.JSONDecodeError, OSError):
        return None
    if meta.get("frame_id") != frame_id or "accepted" not in meta:
        return None
    return meta


def _process_frame(args: tuple) -> dict:
    """Worker: generate and write labels for one frame."""
    record_dict, intr_dict, cfg_dict, out_dir = args
    record = FrameRecord(**record_dict)
    config = RunConfig(**cfg_dict)
    out_dir = Path(out_dir)
    try:
        intr = ingest.CameraIntrinsics.from_dict(intr_dict)
        depth = ingest.load_depth(record.depth_path, intr)
        cfg = config.label_config()
        raster, estimate = hn.generate_labels(
            depth, cfg, config.geometry_params(), config.orientation_params()
        )
        png, sidecar = _frame_paths(out_dir, record.frame_id)
        hn.save_label_png(png, raster)
        hn.save_sidecar(sidecar, cfg, estimate, record.frame_id)
        if config.colorize:
            vis = hn.colorize_labels(raster, cfg)
            ingest.save_color(out_dir / "labels" / f"{record.frame_id}_vis.png", vis)
        status = "accepted" if estimate.accepted else "rejected"
        return {"frame_id": record.frame_id, "status": status}
    except Exception as e:  # noqa: BLE001 - per-frame isolation
        return {"frame_id": record.frame_id, "status": "failed", "reason": f"{type(e).__name__}: {e}"}


def run_labelgen(config: RunConfig) -> RunReport:
    """Generate label rasters for every manifest frame; never aborts mid-batch."""
    t0 = time.monotonic()
    manifest = ingest.load_manifest(config.manifest, config.intrinsics)
    out_dir = Path(config.out)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)
    report = RunReport()
    statuses: list[dict] = []
    todo = []
    for rec in manifest.frames:
        if config.resume:
            meta = _is_complete(out_dir, rec.frame_id)
            if meta is not None:
                statuses.append(
                    {
                        "frame_id": rec.frame_id,
                        "status": "accepted" if meta["accepted"] else "rejected",
                        "resumed": True,
                    }
                )
                continue
        todo.append(
            (
                rec.to_dict(),
                manifest.intrinsics_for(rec).to_dict(),
                asdict(config),
                str(out_dir),
            )
        )
    if todo:
        if config.workers > 1:
            with multiprocessing.Pool(config.workers) as pool:
                statuses.extend(pool.imap(_process_frame, todo, chunksize=1))
        else:
            statuses.extend(map(_process_frame, todo))
    statuses.sort(key=lambda s: s["frame_id"])
    failures = [s for s in statuses if s["status"] == "failed"]
    rejected = [s for s in statuses if s["status"] == "rejected"]
    report.processed = len(statuses)
    report.accepted = sum(1 for s in statuses if s["status"] == "accepted")
    report.rejected = len(rejected)
    report.failed = len(failures)
    report.wall_time_s = time.monotonic() - t0
    with open(out_dir / "failures.jsonl", "w") as f:
        for s in failures:
            f.write(json.dumps(s, sort_keys=True) + "\n")
    with open(out_dir / "rejected.jsonl", "w") as f:
        for s in rejected:
            f.write(json.dumps(s, sort_keys=True) + "\n")
    (out_dir / "report.json").write_text(json.dumps(asdict(report), sort_keys=True, indent=2) + "\n")
    return report


def _matched_rasters(dir_a: Path, dir_b: Path) -> list[tuple[Path, Path]]:
    names = sorted(p.name for p in dir_a.glob("*.png") if not p.stem.endswith("_vis"))
    pairs = []
    for name in names:
        other = dir_b / name
        if not other.exists():
            raise FileNotFoundError(f"no counterpart for {name} in {dir_b}")
        pairs.append((dir_a / name, other))
    return pairs


def run_stats(
    labels_dir: str | Path,
    semantic_dir: str | Path,
    out_path: str | Path,
    n_classes: int,
    cfg: HNLabelConfig,
) -> stats.HeightDistribution:
    """Class x height-bin distribution from HN label and semantic rasters."""
    dist = stats.HeightDistribution(n_classes, cfg.n_h)
    for sem_path, lab_path in _matched_rasters(Path(semantic_dir), Path(labels_dir)):
        sem = hn.load_label_png(sem_path)
        lab = hn.load_label_png(lab_path)
        hbins = np.where(lab == cfg.ignore_label, 255, lab // cfg.n_n)
        stats.accumulate(dist, sem, hbins, semantic_ignore=255, height_ignore=255)
    stats.export_json(dist, out_path)
    return dist


def run_eval(
    gt_dir: str | Path, pred_dir: str | Path, out_path: str | Path, n_classes: int
) -> dict:
    """Segmentation metrics over matched ground-truth/prediction rasters."""
    cm = metrics.ConfusionMatrix(n_classes)
    for gt_path, pred_path in _matched_rasters(Path(gt_dir), Path(pred_dir)):
        metrics.update(cm, hn.load_label_png(gt_path), hn.load_label_png(pred_path))
    return metrics.save_report(cm, out_path)


def run_synth(
    out_dir: str | Path,
    scenes: int,
    frames_per_scene: int,
    seed: int,
    noise_sigma: float,
    cfg: HNLabelConfig,
    width: int = 560,
    height: int = 424,
    focal: float = 570.0,
    pitch_range: tuple[float, float] = (-45.0, 10.0),
    cam_height_range: tuple[float, float] = (1.2, 1.8),
    roll_limit: float = 10.0,
    brightness_jitter: float = 0.0,
    pixel_noise: float = 0.0,
    shading: float = 0.0,
) -> DatasetManifest:
    """Render a synthetic dataset with depth, color, GT labels and classes."""
    out = Path(out_dir)
    for sub in ("depth", "color", "gt_label", "gt_class", "scenes"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    intr = synth.default_intrinsics(width, height, focal)
    records = []
    for si in range(scenes):
        scene = synth.random_scene(seed * 10_000 + si)
        synth.save_scene(scene, out / "scenes" / f"scene_{si:04d}.json")
        for fi in range(frames_per_scene):
            sub_seed = seed * 1_000_000 + si * 1_000 + fi
            pose = synth.random_pose(
                scene, sub_seed, intr, pitch_range=pitch_range,
                height_range=cam_height_range, roll_limit=roll_limit,
            )
            depth, gt = synth.render_depth(scene, pose, noise_sigma, cfg, seed=sub_seed)
            color = synth.render_color(
                scene, gt, brightness_jitter, pixel_noise, seed=sub_seed,
                shading=shading, pose=pose,
            )
            frame_id = f"s{si:04d}_f{fi:03d}"
            ingest.save_depth(out / "depth" / f"{frame_id}.png", depth)
            ingest.save_color(out / "color" / f"{frame_id}.png", color)
            hn.save_label_png(out / "gt_label" / f"{frame_id}.png", gt.label.astype(np.uint8))
            hn.save_label_png(out / "gt_class" / f"{frame_id}.png", gt.class_id.astype(np.uint8))
            records.append(
                FrameRecord(
                    frame_id=frame_id,
                    depth_path=str(out / "depth" / f"{frame_id}.png"),
                    color_path=str(out / "color" / f"{frame_id}.png"),
                    intrinsics_id="synth",
                    scene_id=f"s{si:04d}",
                )
            )
    manifest = DatasetManifest(frames=tuple(records), intrinsics={"synth": intr})
    ingest.save_manifest(manifest, out / "manifest.jsonl", out / "intrinsics.json")
    return manifest


def _add_label_flags(p: argparse.ArgumentParser) -> None:
    d = RunConfig()
    p.add_argument("--n-h", type=int, default=d.n_h)
    p.add_argument("--n-n", type=int, default=d.n_n)
    p.add_argument("--height-min", type=float, default=d.height_min)
    p.add_argument("--height-max", type=float, default=d.height_max)
    p.add_argument("--normal-split-angle", type=float, default=d.normal_split_angle)
    p.add_argument("--ignore-label", type=int, default=d.ignore_label)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hnlabel", description=__doc__)
    parser.add_argument(
        "--print-config",
        action="store_true",
        help="print every numeric default as JSON and exit",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("labelgen", help="generate HN label rasters for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--colorize", action="store_true")
    p.add_argument("--config", help="JSON config file; its values override flags")
    _add_label_flags(p)
    d = RunConfig()
    p.add_argument("--window", type=int, default=d.window)
    p.add_argument("--depth-jump", type=float, default=d.depth_jump)
    p.add_argument("--max-iters", type=int, default=d.max_iters)
    p.add_argument("--angle-tol", type=float, default=d.angle_tol)
    p.add_argument("--percentile", type=float, default=d.percentile)
    p.add_argument("--support-angle", type=float, default=d.support_angle)
    p.add_argument("--support-fraction-min", type=float, default=d.support_fraction_min)
    p.add_argument("--slab-thickness", type=float, default=d.slab_thickness)

    p = sub.add_parser("stats", help="class x height-bin distribution")
    p.add_argument("--labels-dir", required=True)
    p.add_argument("--semantic-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-classes", type=int, required=True)
    _add_label_flags(p)

    p = sub.add_parser("eval", help="segmentation metrics between raster dirs")
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-classes", type=int, required=True)

    p = sub.add_parser("synth", help="render a synthetic dataset with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=5)
    p.add_argument("--frames-per-scene", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--width", type=int, default=560)
    p.add_argument("--height", type=int, default=424)
    p.add_argument("--focal", type=float, default=570.0)
    p.add_argument("--brightness-jitter", type=float, default=0.0)
    p.add_argument("--pixel-noise", type=float, default=0.0)
    p.add_argument("--shading", type=float, default=0.0)
    p.add_argument("--pitch-min", type=float, default=-45.0)
    p.add_argument("--pitch-max", type=float, default=10.0)
    p.add_argument("--cam-height-min", type=float, default=1.2)
    p.add_argument("--cam-height-max", type=float, default=1.8)
    p.add_argument("--roll-limit", type=float, default=10.0)
    _add_label_flags(p)
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    config = RunConfig(
        manifest=args.manifest,
        intrinsics=args.intrinsics,
        out=args.out,
        workers=args.workers,
        seed=args.seed,
        resume=args.resume,
        colorize=args.colorize,
        n_h=args.n_h,
        n_n=args.n_n,
        height_min=args.height_min,
        height_max=args.height_max,
        normal_split_angle=args.normal_split_angle,
        ignore_label=args.ignore_label,
        window=args.window,
        depth_jump=args.depth_jump,
        max_iters=args.max_iters,
        angle_tol=args.angle_tol,
        percentile=args.percentile,
        support_angle=args.support_angle,
        support_fraction_min=args.support_fraction_min,
        slab_thickness=args.slab_thickness,
    )
    if args.config:
        overrides = json.loads(Path(args.config).read_text())
        known = {f.name for f in fields(RunConfig)}
        bad = set(overrides) - known
        if bad:
            raise SystemExit(f"unknown config keys: {sorted(bad)}")
        for k, v in overrides.items():
            setattr(config, k, v)
    return config


def _label_config_from_args(args: argparse.Namespace) -> HNLabelConfig:
    return HNLabelConfig(
        n_h=args.n_h,
        n_n=args.n_n,
        height_min=args.height_min,
        height_max=args.height_max,
        normal_split_angle=args.normal_split_angle,
        ignore_label=args.ignore_label,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_config:
        print(json.dumps(asdict(RunConfig()), indent=2, sort_keys=True))
        return 0
    if args.command == "labelgen":
        config = _config_from_args(args)
        report = run_labelgen(config)
        print(json.dumps(asdict(report), sort_keys=True))
        return 0 if report.failed == 0 else 1
    if args.command == "stats":
        run_stats(args.labels_dir, args.semantic_dir, args.out, args.n_classes,
                  _label_config_from_args(args))
        print(f"wrote {args.out}")
        return 0
    if args.command == "eval":
        doc = run_eval(args.gt_dir, args.pred_dir, args.out, args.n_classes)
        print(json.dumps({k: doc[k] for k in ("global_accuracy", "class_avg_accuracy", "mean_iou")}))
        return 0
    if args.command == "synth":
        manifest = run_synth(
            args.out,
            args.scenes,
            args.frames_per_scene,
            args.seed,
            args.noise_sigma,
            _label_config_from_args(args),
            width=args.width,
            height=args.height,
            focal=args.focal,
            pitch_range=(args.pitch_min, args.pitch_max),
            cam_height_range=(args.cam_height_min, args.cam_height_max),
            roll_limit=args.roll_limit,
            brightness_jitter=args.brightness_jitter,
            pixel_noise=args.pixel_noise,
            shading=args.shading,
        )
        print(f"rendered {len(manifest.frames)} frames into {args.out}")
        return 0
    parser.print_help()
    return 2


if __name__ == "__main__":
    sys.exit(main())
