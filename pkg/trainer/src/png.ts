/** Raster IO for the label PNGs and color frames the labeler emits. */

import * as fs from "fs";
import { PNG } from "pngjs";

export interface GrayImage {
  width: number;
  height: number;
  data: Uint8Array; // one value per pixel
}

export interface RgbImage {
  width: number;
  height: number;
  data: Uint8Array; // r, g, b per pixel
}

/** 8-bit single-channel label raster (reads the first channel). */
export function readGrayPng(path: string): GrayImage {
  const png = PNG.sync.read(fs.readFileSync(path));
  const out = new Uint8Array(png.width * png.height);
  for (let i = 0; i < out.length; i++) out[i] = png.data[i * 4];
  return { width: png.width, height: png.height, data: out };
}

export function readRgbPng(path: string): RgbImage {
  const png = PNG.sync.read(fs.readFileSync(path));
  const out = new Uint8Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    out[i * 3] = png.data[i * 4];
    out[i * 3 + 1] = png.data[i * 4 + 1];
    out[i * 3 + 2] = png.data[i * 4 + 2];
  }
  return { width: png.width, height: png.height, data: out };
}
