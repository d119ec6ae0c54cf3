"""Batch CLI: labelgen, stats, eval, synth subcommands."""

import json
from pathlib import Path

import numpy as np
import pytest

from hnlabel import cli, ingest, synth
from hnlabel.labels import HNLabelConfig, load_label_png, save_label_png
from hnlabel.synth import default_intrinsics


def small_dataset(tmp_path, scenes=2, frames=2, noise=0.0, seed=0) -> Path:
    out = tmp_path / "data"
    cli.run_synth(
        out, scenes, frames, seed, noise, HNLabelConfig(), width=140, height=106, focal=140.0
    )
    return out


def labelgen_config(data: Path, out: Path, **kw) -> cli.RunConfig:
    return cli.RunConfig(
        manifest=str(data / "manifest.jsonl"),
        intrinsics=str(data / "intrinsics.json"),
        out=str(out),
        **kw,
    )


class TestLabelgen:
    def test_empty_manifest_succeeds_with_zero_counts(self, tmp_path):
        (tmp_path / "manifest.jsonl").write_text("")
        intr = default_intrinsics(64, 48, 64.0)
        (tmp_path / "intrinsics.json").write_text(json.dumps({"synth": intr.to_dict()}))
        config = labelgen_config(tmp_path, tmp_path / "out")
        report = cli.run_labelgen(config)
        assert (report.processed, report.accepted, report.rejected, report.failed) == (0, 0, 0, 0)
        assert (tmp_path / "out" / "report.json").exists()

    def test_outputs_per_frame(self, tmp_path):
        data = small_dataset(tmp_path)
        report = cli.run_labelgen(labelgen_config(data, tmp_path / "out"))
        assert report.processed == 4
        assert report.failed == 0
        for rec in ingest.load_manifest(data / "manifest.jsonl", data / "intrinsics.json").frames:
            png = tmp_path / "out" / "labels" / f"{rec.frame_id}.png"
            sidecar = tmp_path / "out" / "labels" / f"{rec.frame_id}.json"
            assert png.exists() and sidecar.exists()
            meta = json.loads(sidecar.read_text())
            assert meta["frame_id"] == rec.frame_id
            assert "accepted" in meta

    def test_unreadable_frame_isolated(self, tmp_path):
        data = small_dataset(tmp_path)
        # Corrupt one depth file; the rest of the batch still completes.
        victim = sorted((data / "depth").glob("*.png"))[0]
        victim.write_bytes(b"not a png")
        report = cli.run_labelgen(labelgen_config(data, tmp_path / "out"))
        assert report.failed == 1
        assert report.processed == 4
        failures = [
            json.loads(line)
            for line in (tmp_path / "out" / "failures.jsonl").read_text().splitlines()
        ]
        assert len(failures) == 1
        assert failures[0]["frame_id"] == victim.stem
        assert "reason" in failures[0]

    def test_resume_skips_complete_frames_and_matches_fresh(self, tmp_path):
        data = small_dataset(tmp_path)
        fresh = tmp_path / "fresh"
        cli.run_labelgen(labelgen_config(data, fresh))
        # Partial run: keep two outputs, delete the rest, resume.
        partial = tmp_path / "partial"
        cli.run_labelgen(labelgen_config(data, partial))
        ids = sorted(p.stem for p in (partial / "labels").glob("*.png"))
        for fid in ids[2:]:
            (partial / "labels" / f"{fid}.png").unlink()
            (partial / "labels" / f"{fid}.json").unlink()
        report = cli.run_labelgen(labelgen_config(data, partial, resume=True))
        assert report.processed == 4
        for fid in ids:
            a = (fresh / "labels" / f"{fid}.png").read_bytes()
            b = (partial / "labels" / f"{fid}.png").read_bytes()
            assert a == b

    def test_resume_redoes_corrupt_sidecar(self, tmp_path):
        data = small_dataset(tmp_path, scenes=1, frames=1)
        out = tmp_path / "out"
        cli.run_labelgen(labelgen_config(data, out))
        sidecar = next((out / "labels").glob("*.json"))
        sidecar.write_text("{broken")
        report = cli.run_labelgen(labelgen_config(data, out, resume=True))
        assert report.processed == 1
        json.loads(sidecar.read_text())  # rewritten and valid again

    def test_colorize_writes_vis(self, tmp_path):
        data = small_dataset(tmp_path, scenes=1, frames=1)
        cli.run_labelgen(labelgen_config(data, tmp_path / "out", colorize=True))
        assert list((tmp_path / "out" / "labels").glob("*_vis.png"))


class TestMainEntry:
    def test_print_config_lists_defaults(self, capsys):
        assert cli.main(["--print-config"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["n_h"] == 10 and doc["n_n"] == 2
        assert doc["window"] == 5 and doc["slab_thickness"] == 0.05

    def test_no_command_exits_2(self, capsys):
        assert cli.main([]) == 2

    def test_labelgen_exit_codes(self, tmp_path, capsys):
        data = small_dataset(tmp_path, scenes=1, frames=1)
        argv = [
            "labelgen",
            "--manifest", str(data / "manifest.jsonl"),
            "--intrinsics", str(data / "intrinsics.json"),
            "--out", str(tmp_path / "out"),
        ]
        assert cli.main(argv) == 0
        next((data / "depth").glob("*.png")).write_bytes(b"junk")
        assert cli.main(argv + ["--out", str(tmp_path / "out2")]) == 1

    def test_config_file_overrides_flags(self, tmp_path, capsys):
        data = small_dataset(tmp_path, scenes=1, frames=1)
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"n_h": 4}))
        argv = [
            "labelgen",
            "--manifest", str(data / "manifest.jsonl"),
            "--intrinsics", str(data / "intrinsics.json"),
            "--out", str(tmp_path / "out"),
            "--n-h", "6",
            "--config", str(cfg_path),
        ]
        assert cli.main(argv) == 0
        sidecar = next((tmp_path / "out" / "labels").glob("*.json"))
        meta = json.loads(sidecar.read_text())
        assert meta["config"]["n_h"] == 4

    def test_unknown_config_key_rejected(self, tmp_path):
        data = small_dataset(tmp_path, scenes=1, frames=1)
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"n_bins": 4}))
        argv = [
            "labelgen",
            "--manifest", str(data / "manifest.jsonl"),
            "--intrinsics", str(data / "intrinsics.json"),
            "--out", str(tmp_path / "out"),
            "--config", str(cfg_path),
        ]
        with pytest.raises(SystemExit):
            cli.main(argv)


class TestStatsEval:
    def test_eval_identity_scores_one(self, tmp_path):
        data = small_dataset(tmp_path, scenes=1, frames=2)
        doc = cli.run_eval(data / "gt_class", data / "gt_class", tmp_path / "m.json", 8)
        assert doc["global_accuracy"] == 1.0
        assert doc["mean_iou"] == 1.0

    def test_eval_matches_brute_force(self, tmp_path):
        rng = np.random.default_rng(0)
        gt_dir, pred_dir = tmp_path / "gt", tmp_path / "pred"
        gt_dir.mkdir(), pred_dir.mkdir()
        correct = total = 0
        for i in range(3):
            gt = rng.integers(0, 3, size=(10, 10)).astype(np.uint8)
            pred = rng.integers(0, 3, size=(10, 10)).astype(np.uint8)
            save_label_png(gt_dir / f"f{i}.png", gt)
            save_label_png(pred_dir / f"f{i}.png", pred)
            correct += int(np.sum(gt == pred))
            total += gt.size
        doc = cli.run_eval(gt_dir, pred_dir, tmp_path / "m.json", 3)
        assert doc["global_accuracy"] == pytest.approx(correct / total)

    def test_eval_missing_counterpart_errors(self, tmp_path):
        gt_dir, pred_dir = tmp_path / "gt", tmp_path / "pred"
        gt_dir.mkdir(), pred_dir.mkdir()
        save_label_png(gt_dir / "a.png", np.zeros((4, 4), np.uint8))
        with pytest.raises(FileNotFoundError):
            cli.run_eval(gt_dir, pred_dir, tmp_path / "m.json", 2)

    def test_stats_floor_view_row(self, tmp_path):
        # A pure-floor dataset: the floor class row is (1, 0, ..., 0).
        data = tmp_path / "data"
        cli.run_synth(
            data, 1, 2, 0, 0.0, HNLabelConfig(),
            width=96, height=72, focal=96.0, pitch_range=(-90.0, -90.0),
        )
        cfg = HNLabelConfig()
        dist = cli.run_stats(data / "gt_label", data / "gt_class", tmp_path / "s.json", 8, cfg)
        from hnlabel.stats import finalize

        rows = finalize(dist)
        floor = rows[synth.CLASS_FLOOR]
        assert floor[0] == pytest.approx(1.0)
        assert np.all(floor[1:] == 0.0)
        doc = json.loads((tmp_path / "s.json").read_text())
        assert doc["n_height_bins"] == cfg.n_h


class TestSynthCommand:
    def test_layout_and_determinism(self, tmp_path):
        a = small_dataset(tmp_path / "a", scenes=1, frames=2, seed=3)
        b = small_dataset(tmp_path / "b", scenes=1, frames=2, seed=3)
        for sub in ("depth", "color", "gt_label", "gt_class", "scenes"):
            assert (a / sub).is_dir()
        for rel in sorted(p.relative_to(a) for p in a.rglob("*.png")):
            assert (a / rel).read_bytes() == (b / rel).read_bytes()

    def test_gt_label_readable_and_in_range(self, tmp_path):
        data = small_dataset(tmp_path, scenes=1, frames=1)
        lab = load_label_png(next((data / "gt_label").glob("*.png")))
        cfg = HNLabelConfig()
        assert np.all((lab < cfg.n_labels) | (lab == cfg.ignore_label))
