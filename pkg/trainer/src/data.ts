/** Dataset assembly from the labeler's manifest, label and color files. */

import * as fs from "fs";
import * as path from "path";
import { IN_CHANNELS } from "./net";
import { readGrayPng, readRgbPng } from "./png";
import { Tensor } from "./tensor";

export interface Sample {
  frameId: string;
  input: Tensor; // [5, H, W]: rgb in [0,1] plus normalized x, y
  hnLabel: Uint8Array | null; // from the labeler's output, 255 = ignore
  semLabel: Uint8Array | null; // semantic class raster, 255 = ignore
}

export interface Dataset {
  samples: Sample[];
  width: number;
  height: number;
}

interface ManifestRow {
  frame_id: string;
  color_path: string;
}

function readManifest(manifestPath: string): ManifestRow[] {
  const rows: ManifestRow[] = [];
  for (const line of fs.readFileSync(manifestPath, "utf8").split("\n")) {
    if (!line.trim()) continue;
    rows.push(JSON.parse(line));
  }
  return rows;
}

/** Color plus pixel-coordinate input planes for one frame. */
export function buildInput(rgb: { width: number; height: number; data: Uint8Array }): Tensor {
  const { width: w, height: h, data } = rgb;
  const x = new Tensor([IN_CHANNELS, h, w]);
  const n = h * w;
  // Planes are centered on zero so He-initialized layers start well-scaled.
  for (let p = 0; p < n; p++) {
    x.data[p] = data[p * 3] / 255 - 0.5;
    x.data[n + p] = data[p * 3 + 1] / 255 - 0.5;
    x.data[2 * n + p] = data[p * 3 + 2] / 255 - 0.5;
  }
  for (let v = 0; v < h; v++) {
    for (let u = 0; u < w; u++) {
      x.data[3 * n + v * w + u] = u / (w - 1) - 0.5;
      x.data[4 * n + v * w + u] = v / (h - 1) - 0.5;
    }
  }
  return x;
}

/**
 * Loads frames listed in a manifest. hnDir holds the labeler's HN rasters
 * (frame_id.png), semDir holds semantic class rasters; either may be null.
 */
export function loadDataset(
  manifestPath: string,
  hnDir: string | null,
  semDir: string | null,
): Dataset {
  const rows = readManifest(manifestPath);
  if (rows.length === 0) throw new Error(`empty manifest: ${manifestPath}`);
  const base = path.dirname(manifestPath);
  const samples: Sample[] = [];
  let width = 0;
  let height = 0;
  for (const row of rows) {
    const colorPath = path.isAbsolute(row.color_path)
      ? row.color_path
      : path.join(base, row.color_path);
    const rgb = readRgbPng(colorPath);
    width = rgb.width;
    height = rgb.height;
    const sample: Sample = {
      frameId: row.frame_id,
      input: buildInput(rgb),
      hnLabel: null,
      semLabel: null,
    };
    if (hnDir) {
      const img = readGrayPng(path.join(hnDir, `${row.frame_id}.png`));
      if (img.width !== width || img.height !== height) {
        throw new Error(`HN raster dims differ for ${row.frame_id}`);
      }
      sample.hnLabel = img.data;
    }
    if (semDir) {
      const img = readGrayPng(path.join(semDir, `${row.frame_id}.png`));
      if (img.width !== width || img.height !== height) {
        throw new Error(`semantic raster dims differ for ${row.frame_id}`);
      }
      sample.semLabel = img.data;
    }
    samples.push(sample);
  }
  return { samples, width, height };
}
