/** Cross-stitch fusion of a frozen pre-trained stream and a task stream. */

import { Param, Sgd, zeroGrads } from "./layers";
import { ForwardCache, N_BLOCKS, ToySegNet } from "./net";
import { Tensor, zeros } from "./tensor";

export interface StitchGrads {
  gradA: Tensor;
  gradB: Tensor;
  gradAlphaA: number;
  gradAlphaB: number;
}

/** out = alphaA * a + alphaB * b, elementwise over equal-shaped tensors. */
export function stitchForward(a: Tensor, b: Tensor, alphaA: number, alphaB: number): Tensor {
  if (a.size !== b.size) throw new Error("stitch inputs differ in size");
  const out = zeros(a.shape);
  for (let i = 0; i < out.size; i++) out.data[i] = alphaA * a.data[i] + alphaB * b.data[i];
  return out;
}

export function stitchBackward(
  a: Tensor,
  b: Tensor,
  alphaA: number,
  alphaB: number,
  gradOut: Tensor,
): StitchGrads {
  const gradA = zeros(a.shape);
  const gradB = zeros(b.shape);
  let gradAlphaA = 0;
  let gradAlphaB = 0;
  for (let i = 0; i < gradOut.size; i++) {
    const g = gradOut.data[i];
    gradA.data[i] = alphaA * g;
    gradB.data[i] = alphaB * g;
    gradAlphaA += g * a.data[i];
    gradAlphaB += g * b.data[i];
  }
  return { gradA, gradB, gradAlphaA, gradAlphaB };
}

/**
 * Task network whose encoder features are mixed with a frozen pre-trained
 * network's features at each of the four pooling outputs:
 *   mixed_i = alphaH_i * hn_i + alphaS_i * task_i
 * Only the task network and the alphas train; the pre-trained side is
 * never updated.
 */
export class CrossStitchNet {
  hn: ToySegNet;
  task: ToySegNet;
  alphaH: number[];
  alphaS: number[];
  alphaGradH: number[];
  alphaGradS: number[];
  trainAlphas: boolean;

  constructor(hn: ToySegNet, task: ToySegNet, init: [number, number] = [0.5, 0.5]) {
    this.hn = hn;
    this.task = task;
    this.alphaH = new Array(N_BLOCKS).fill(init[0]);
    this.alphaS = new Array(N_BLOCKS).fill(init[1]);
    this.alphaGradH = new Array(N_BLOCKS).fill(0);
    this.alphaGradS = new Array(N_BLOCKS).fill(0);
    this.trainAlphas = true;
  }

  params(): Param[] {
    return this.task.params();
  }

  forward(x: Tensor): { taskCache: ForwardCache; hnCache: ForwardCache } {
    // The frozen stream runs on its own pure features.
    const hnCache = this.hn.forward(x);
    const taskCache = this.task.forward(x, (level, pooled) =>
      stitchForward(hnCache.pooled[level], pooled, this.alphaH[level], this.alphaS[level]),
    );
    return { taskCache, hnCache };
  }

  /** Accumulates task-network and alpha grads; the frozen side gets none. */
  backward(caches: { taskCache: ForwardCache; hnCache: ForwardCache }, gradLogits: Tensor): void {
    const { taskCache, hnCache } = caches;
    this.task.backward(taskCache, gradLogits, (level, gradMixed) => {
      const g = stitchBackward(
        hnCache.pooled[level],
        taskCache.pooled[level],
        this.alphaH[level],
        this.alphaS[level],
        gradMixed,
      );
      this.alphaGradH[level] += g.gradAlphaA;
      this.alphaGradS[level] += g.gradAlphaB;
      return g.gradB;
    });
  }

  zeroGrads(): void {
    zeroGrads(this.params());
    this.alphaGradH.fill(0);
    this.alphaGradS.fill(0);
  }

  step(opt: Sgd, alphaLr: number): void {
    opt.step(this.params());
    if (this.trainAlphas) {
      for (let i = 0; i < N_BLOCKS; i++) {
        this.alphaH[i] -= alphaLr * this.alphaGradH[i];
        this.alphaS[i] -= alphaLr * this.alphaGradS[i];
      }
    }
  }
}
