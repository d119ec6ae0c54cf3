/** Pre-training on HN labels and the four transfer modes. */

import { Param, Sgd, zeroGrads } from "./layers";
import { predict, softmaxCrossEntropy } from "./loss";
import { Confusion } from "./metrics";
import { ToySegNet } from "./net";
import { CrossStitchNet } from "./stitch";
import { Dataset, Sample } from "./data";
import { Rng, Tensor } from "./tensor";

export const IGNORE_LABEL = 255;

export interface TrainConfig {
  iters: number;
  lr: number;
  batchSize: number;
  seed: number;
}

export const DEFAULT_TRAIN: TrainConfig = { iters: 250, lr: 0.05, batchSize: 4, seed: 0 };

/**
 * Mirrors a sample left-right. Height/normal labels are invariant under a
 * horizontal flip, and the centered column-coordinate plane negates itself,
 * so flipping every input plane is exact augmentation, not approximation.
 */
function flipSample(sample: Sample, w: number, h: number): Sample {
  const input = sample.input.clone();
  const planes = input.shape[0];
  for (let c = 0; c < planes; c++) {
    for (let y = 0; y < h; y++) {
      const row = c * h * w + y * w;
      for (let x = 0; x < w >> 1; x++) {
        const t = input.data[row + x];
        input.data[row + x] = input.data[row + w - 1 - x];
        input.data[row + w - 1 - x] = t;
      }
    }
  }
  const flipLabel = (lab: Uint8Array | null) => {
    if (!lab) return null;
    const out = new Uint8Array(lab.length);
    for (let y = 0; y < h; y++) {
      for (let x = 0; x < w; x++) out[y * w + x] = lab[y * w + w - 1 - x];
    }
    return out;
  };
  return {
    frameId: sample.frameId,
    input,
    hnLabel: flipLabel(sample.hnLabel),
    semLabel: flipLabel(sample.semLabel),
  };
}

/** Scales all gradients down when their global norm exceeds maxNorm. */
function clipGrads(params: Param[], maxNorm = 5): void {
  let sq = 0;
  for (const p of params) for (const g of p.grad.data) sq += g * g;
  const norm = Math.sqrt(sq);
  if (norm <= maxNorm) return;
  const s = maxNorm / norm;
  for (const p of params) for (let i = 0; i < p.grad.data.length; i++) p.grad.data[i] *= s;
}

/**
 * Short linear warmup (momentum makes cold high-lr starts destructive), then
 * cosine decay from lr down to lr/10 to tame late-stage bouncing.
 */
function lrAt(cfg: TrainConfig, it: number): number {
  const warmup = Math.max(1, Math.floor(cfg.iters / 20));
  const ramp = Math.min(1, (it + 1) / warmup);
  return ramp * cfg.lr * (0.1 + 0.45 * (1 + Math.cos((Math.PI * it) / cfg.iters)));
}

export type Mode = "scratch" | "full" | "fixed_k" | "cross_stitch";

export interface PretrainResult {
  net: ToySegNet;
  curve: number[]; // mean loss per logging interval
  holdoutAccuracy: number;
  perClassAccuracy: number[];
}

export interface FinetuneResult {
  report: Record<string, unknown>;
  meanIou: number;
  net: ToySegNet | CrossStitchNet;
}

/** Deterministic split: every fourth sample is held out. */
export function splitDataset(samples: Sample[]): { train: Sample[]; held: Sample[] } {
  const train: Sample[] = [];
  const held: Sample[] = [];
  samples.forEach((s, i) => (i % 4 === 3 ? held : train).push(s));
  return { train, held };
}

function labelOf(sample: Sample, task: "hn" | "sem"): Uint8Array {
  const lab = task === "hn" ? sample.hnLabel : sample.semLabel;
  if (!lab) throw new Error(`sample ${sample.frameId} lacks a ${task} raster`);
  return lab;
}

/** Mean loss over one batch with grads accumulated; all-ignore batches add 0. */
function batchPass(
  forward: (x: Tensor) => { logits: Tensor; backward: (g: Tensor) => void },
  batch: Sample[],
  task: "hn" | "sem",
): number {
  let total = 0;
  let counted = 0;
  for (const sample of batch) {
    const { logits, backward } = forward(sample.input);
    const { loss, grad, counted: n } = softmaxCrossEntropy(logits, labelOf(sample, task), IGNORE_LABEL);
    if (n === 0) continue; // nothing labeled: no loss, no gradient
    backward(grad);
    total += loss;
    counted++;
  }
  return counted > 0 ? total / counted : 0;
}

function evaluate(
  run: (x: Tensor) => Tensor,
  samples: Sample[],
  task: "hn" | "sem",
  nClasses: number,
): Confusion {
  const cm = new Confusion(nClasses);
  for (const sample of samples) {
    cm.update(labelOf(sample, task), predict(run(sample.input)));
  }
  return cm;
}

export function pretrainHN(dataset: Dataset, nClasses: number, cfg: TrainConfig = DEFAULT_TRAIN): PretrainResult {
  const split = splitDataset(dataset.samples);
  // Frames the labeler rejected are all-ignore; they would waste batch slots.
  const train = split.train.filter((s) => labelOf(s, "hn").some((v) => v !== IGNORE_LABEL));
  const held = split.held;
  if (train.length === 0) throw new Error("empty training set");
  const rng = new Rng(cfg.seed);
  const net = new ToySegNet(nClasses, rng);
  const opt = new Sgd(cfg.lr);
  const curve: number[] = [];
  let window = 0;
  for (let it = 0; it < cfg.iters; it++) {
    const batch = Array.from({ length: cfg.batchSize }, () => {
      const s = train[rng.int(train.length)];
      return rng.uniform() < 0.5 ? flipSample(s, dataset.width, dataset.height) : s;
    });
    zeroGrads(net.params());
    const loss = batchPass(
      (x) => {
        const cache = net.forward(x);
        return { logits: cache.logits, backward: (g) => net.backward(cache, g) };
      },
      batch,
      "hn",
    );
    clipGrads(net.params());
    opt.lr = lrAt(cfg, it);
    opt.step(net.params());
    window += loss;
    if ((it + 1) % 25 === 0) {
      curve.push(window / 25);
      window = 0;
    }
  }
  const cm = evaluate((x) => net.forward(x).logits, held.length ? held : train, "hn", nClasses);
  return {
    net,
    curve,
    holdoutAccuracy: cm.globalAccuracy(),
    perClassAccuracy: cm.perClassAccuracy(),
  };
}

export interface FinetuneOptions {
  mode: Mode;
  init?: ToySegNet; // trained HN network, required except for scratch
  nClasses: number;
  fixedK?: number; // encoder blocks kept frozen in fixed_k mode
  alphaLr?: number;
  freezeAlphas?: boolean;
  alphaInit?: [number, number];
}

export function finetune(
  dataset: Dataset,
  opts: FinetuneOptions,
  cfg: TrainConfig = DEFAULT_TRAIN,
): FinetuneResult {
  const { mode, init, nClasses } = opts;
  if (mode === "scratch" && init) throw new Error("scratch mode takes no initial network");
  if (mode !== "scratch" && !init) throw new Error(`${mode} mode requires a trained HN network`);
  const { train, held } = splitDataset(dataset.samples);
  if (train.length === 0) throw new Error("empty training set");
  const rng = new Rng(cfg.seed);

  if (mode === "cross_stitch") {
    // The trainable stream starts from the pre-trained weights (new head), so
    // the junctions choose between pre-trained features and whatever the task
    // stream turns them into -- not between features and noise.
    const task = init!.cloneNet();
    task.replaceHead(nClasses, rng);
    const stitch = new CrossStitchNet(init!.cloneNet(), task, opts.alphaInit ?? [0.5, 0.5]);
    if (opts.freezeAlphas) stitch.trainAlphas = false;
    const alphaLr = opts.alphaLr ?? 0.01;
    const opt = new Sgd(cfg.lr);
    for (let it = 0; it < cfg.iters; it++) {
      const batch = Array.from({ length: cfg.batchSize }, () => train[rng.int(train.length)]);
      stitch.zeroGrads();
      batchPass(
        (x) => {
          const caches = stitch.forward(x);
          return {
            logits: caches.taskCache.logits,
            backward: (g) => stitch.backward(caches, g),
          };
        },
        batch,
        "sem",
      );
      clipGrads(stitch.task.params());
      opt.lr = lrAt(cfg, it);
      stitch.step(opt, alphaLr);
    }
    const cm = evaluate(
      (x) => stitch.forward(x).taskCache.logits,
      held.length ? held : train,
      "sem",
      nClasses,
    );
    return { report: cm.report(), meanIou: cm.meanIou(), net: stitch };
  }

  let net: ToySegNet;
  if (mode === "scratch") {
    net = new ToySegNet(nClasses, rng);
  } else {
    net = init!.cloneNet();
    net.replaceHead(nClasses, rng);
  }
  // fixed_k freezes the first k encoder blocks; k = 0 degenerates to full.
  const k = mode === "fixed_k" ? opts.fixedK ?? 2 : 0;
  const frozen = new Set(net.enc.slice(0, k).flatMap((l) => l.params()));
  const trainable = net.params().filter((p) => !frozen.has(p));
  const opt = new Sgd(cfg.lr);
  for (let it = 0; it < cfg.iters; it++) {
    const batch = Array.from({ length: cfg.batchSize }, () => train[rng.int(train.length)]);
    zeroGrads(net.params());
    batchPass(
      (x) => {
        const cache = net.forward(x);
        return { logits: cache.logits, backward: (g) => net.backward(cache, g) };
      },
      batch,
      "sem",
    );
    clipGrads(trainable);
    opt.lr = lrAt(cfg, it);
    opt.step(trainable);
  }
  const cm = evaluate((x) => net.forward(x).logits, held.length ? held : train, "sem", nClasses);
  return { report: cm.report(), meanIou: cm.meanIou(), net };
}
