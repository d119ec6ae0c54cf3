// Transfer-mode contracts: degenerate mixing, frozen weights, boundary cases.

import { describe, expect, it } from "vitest";
import { Dataset, Sample } from "../src/data";
import { ToySegNet } from "../src/net";
import { CrossStitchNet } from "../src/stitch";
import { Rng, Tensor } from "../src/tensor";
import { finetune } from "../src/train";

function toyDataset(seed: number, n = 8, h = 16, w = 16, classes = 4): Dataset {
  const rng = new Rng(seed);
  const samples: Sample[] = [];
  for (let s = 0; s < n; s++) {
    const input = new Tensor([5, h, w]);
    for (let i = 0; i < input.size; i++) input.data[i] = rng.uniform();
    const hn = new Uint8Array(h * w);
    const sem = new Uint8Array(h * w);
    for (let i = 0; i < h * w; i++) {
      hn[i] = rng.int(classes);
      sem[i] = rng.uniform() < 0.05 ? 255 : rng.int(classes);
    }
    samples.push({ frameId: `t${s}`, input, hnLabel: hn, semLabel: sem });
  }
  return { samples, width: w, height: h };
}

describe("cross-stitch degenerate mixing", () => {
  it("alpha = (0, 1) reproduces the task network alone within 1e-5", () => {
    const rng = new Rng(5);
    const hn = new ToySegNet(4, rng);
    const task = new ToySegNet(4, new Rng(6));
    const stitch = new CrossStitchNet(hn, task.cloneNet(), [0, 1]);
    const x = new Tensor([5, 16, 16]);
    const xr = new Rng(9);
    for (let i = 0; i < x.size; i++) x.data[i] = xr.normal();
    const mixed = stitch.forward(x).taskCache.logits;
    const alone = task.forward(x).logits;
    for (let i = 0; i < mixed.size; i++) {
      expect(Math.abs(mixed.data[i] - alone.data[i])).toBeLessThan(1e-5);
    }
  });
});

describe("fine-tune mode contracts", () => {
  it("fixed_k with k = 0 equals full fine-tune exactly at the same seed", () => {
    const data = toyDataset(1);
    const init = new ToySegNet(4, new Rng(42));
    const cfg = { iters: 4, lr: 0.05, batchSize: 2, seed: 3 };
    const full = finetune(data, { mode: "full", init, nClasses: 4 }, cfg);
    const k0 = finetune(data, { mode: "fixed_k", init, nClasses: 4, fixedK: 0 }, cfg);
    expect((k0.net as ToySegNet).serialize()).toBe((full.net as ToySegNet).serialize());
  });

  it("fixed_k leaves the first k encoder blocks untouched", () => {
    const data = toyDataset(2);
    const init = new ToySegNet(4, new Rng(42));
    const cfg = { iters: 4, lr: 0.05, batchSize: 2, seed: 3 };
    const out = finetune(data, { mode: "fixed_k", init, nClasses: 4, fixedK: 2 }, cfg).net as ToySegNet;
    for (let i = 0; i < 4; i++) {
      const same =
        JSON.stringify(Array.from(out.enc[i].weight.value.data)) ===
        JSON.stringify(Array.from(init.enc[i].weight.value.data));
      expect(same).toBe(i < 2);
    }
  });

  it("HN-side weights are bit-identical after cross-stitch training", () => {
    const data = toyDataset(3);
    const init = new ToySegNet(4, new Rng(42));
    const before = init.serialize();
    const cfg = { iters: 6, lr: 0.05, batchSize: 2, seed: 1 };
    const out = finetune(data, { mode: "cross_stitch", init, nClasses: 4 }, cfg).net as CrossStitchNet;
    expect(out.hn.serialize()).toBe(before);
    // and the alphas actually moved from their 0.5/0.5 start
    const moved = out.alphaH.some((a) => a !== 0.5) || out.alphaS.some((a) => a !== 0.5);
    expect(moved).toBe(true);
  });

  it("mode/init mismatches are rejected", () => {
    const data = toyDataset(4);
    const init = new ToySegNet(4, new Rng(0));
    expect(() => finetune(data, { mode: "scratch", init, nClasses: 4 })).toThrow();
    expect(() => finetune(data, { mode: "full", nClasses: 4 })).toThrow();
    expect(() => finetune(data, { mode: "cross_stitch", nClasses: 4 })).toThrow();
  });

  it("training is deterministic per seed", () => {
    const data = toyDataset(5);
    const cfg = { iters: 3, lr: 0.05, batchSize: 2, seed: 8 };
    const a = finetune(data, { mode: "scratch", nClasses: 4 }, cfg);
    const b = finetune(data, { mode: "scratch", nClasses: 4 }, cfg);
    expect((a.net as ToySegNet).serialize()).toBe((b.net as ToySegNet).serialize());
  });
});
