// Analytic gradients vs central finite differences.

import { describe, expect, it } from "vitest";
import { softmaxCrossEntropy } from "../src/loss";
import { ToySegNet } from "../src/net";
import { stitchBackward, stitchForward } from "../src/stitch";
import { Rng, Tensor } from "../src/tensor";

function relErr(a: number, b: number): number {
  return Math.abs(a - b) / Math.max(1e-8, Math.abs(a), Math.abs(b));
}

describe("cross-stitch junction gradients", () => {
  it("matches central finite differences within 1e-4", () => {
    const rng = new Rng(7);
    const shape = [3, 4, 4];
    const a = new Tensor(shape);
    const b = new Tensor(shape);
    const gOut = new Tensor(shape);
    for (let i = 0; i < a.size; i++) {
      a.data[i] = rng.normal();
      b.data[i] = rng.normal();
      gOut.data[i] = rng.normal();
    }
    const alphaA = 0.6;
    const alphaB = 0.4;
    // Scalar objective: sum(gOut * stitch(a, b)).
    const f = (aa: Tensor, bb: Tensor, alA: number, alB: number) => {
      const out = stitchForward(aa, bb, alA, alB);
      let s = 0;
      for (let i = 0; i < out.size; i++) s += gOut.data[i] * out.data[i];
      return s;
    };
    const g = stitchBackward(a, b, alphaA, alphaB, gOut);
    const eps = 1e-5;

    for (const i of [0, 5, 17, a.size - 1]) {
      for (const [t, analytic] of [
        [a, g.gradA.data[i]],
        [b, g.gradB.data[i]],
      ] as [Tensor, number][]) {
        const keep = t.data[i];
        t.data[i] = keep + eps;
        const up = f(a, b, alphaA, alphaB);
        t.data[i] = keep - eps;
        const dn = f(a, b, alphaA, alphaB);
        t.data[i] = keep;
        expect(relErr(analytic, (up - dn) / (2 * eps))).toBeLessThan(1e-4);
      }
    }
    const upA = f(a, b, alphaA + eps, alphaB);
    const dnA = f(a, b, alphaA - eps, alphaB);
    expect(relErr(g.gradAlphaA, (upA - dnA) / (2 * eps))).toBeLessThan(1e-4);
    const upB = f(a, b, alphaA, alphaB + eps);
    const dnB = f(a, b, alphaA, alphaB - eps);
    expect(relErr(g.gradAlphaB, (upB - dnB) / (2 * eps))).toBeLessThan(1e-4);
  });
});

describe("network gradients", () => {
  it("parameter grads match finite differences through the full net", () => {
    const rng = new Rng(3);
    const net = new ToySegNet(5, rng);
    const x = new Tensor([5, 16, 16]);
    for (let i = 0; i < x.size; i++) x.data[i] = rng.normal() * 0.5;
    const target = new Uint8Array(16 * 16);
    for (let i = 0; i < target.length; i++) target[i] = i % 5 === 0 ? 255 : i % 5;

    const lossOf = () => softmaxCrossEntropy(net.forward(x).logits, target, 255).loss;
    const cache = net.forward(x);
    const { grad } = softmaxCrossEntropy(cache.logits, target, 255);
    const params = net.params();
    for (const p of params) p.grad.data.fill(0);
    net.backward(cache, grad);

    const eps = 1e-6;
    const probes: [number, number][] = [
      [0, 0],
      [2, 3],
      [5, 1],
      [8, 0],
      [params.length - 1, 0],
    ];
    for (const [pi, wi] of probes) {
      const p = params[pi];
      const keep = p.value.data[wi];
      p.value.data[wi] = keep + eps;
      const up = lossOf();
      p.value.data[wi] = keep - eps;
      const dn = lossOf();
      p.value.data[wi] = keep;
      const fd = (up - dn) / (2 * eps);
      expect(relErr(p.grad.data[wi], fd)).toBeLessThan(1e-4);
    }
  });
});
