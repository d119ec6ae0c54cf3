/** Convolution, pooling and activation layers with manual backprop (CHW). */

import { Rng, Tensor, randomTensor, zeros } from "./tensor";

export interface Param {
  value: Tensor;
  grad: Tensor;
}

function param(value: Tensor): Param {
  return { value, grad: zeros(value.shape) };
}

/** 2D convolution, odd square kernel, stride 1, same padding. */
export class Conv2d {
  inC: number;
  outC: number;
  k: number;
  weight: Param; // [outC, inC, k, k]
  bias: Param; // [outC]

  constructor(inC: number, outC: number, k: number, rng: Rng) {
    this.inC = inC;
    this.outC = outC;
    this.k = k;
    this.weight = param(randomTensor([outC, inC, k, k], rng, inC * k * k));
    this.bias = param(zeros([outC]));
  }

  params(): Param[] {
    return [this.weight, this.bias];
  }

  forward(x: Tensor): Tensor {
    const [, h, w] = [x.shape[0], x.shape[1], x.shape[2]];
    if (x.shape[0] !== this.inC) throw new Error(`expected ${this.inC} channels, got ${x.shape[0]}`);
    const out = zeros([this.outC, h, w]);
    const r = (this.k - 1) / 2;
    const wd = this.weight.value.data;
    const xd = x.data;
    const od = out.data;
    for (let oc = 0; oc < this.outC; oc++) {
      const b = this.bias.value.data[oc];
      for (let y = 0; y < h; y++) {
        for (let xx = 0; xx < w; xx++) {
          let acc = b;
          for (let ic = 0; ic < this.inC; ic++) {
            const xBase = ic * h * w;
            const wBase = (oc * this.inC + ic) * this.k * this.k;
            for (let dy = -r; dy <= r; dy++) {
              const yy = y + dy;
              if (yy < 0 || yy >= h) continue;
              for (let dx = -r; dx <= r; dx++) {
                const xc = xx + dx;
                if (xc < 0 || xc >= w) continue;
                acc += xd[xBase + yy * w + xc] * wd[wBase + (dy + r) * this.k + (dx + r)];
              }
            }
          }
          od[oc * h * w + y * w + xx] = acc;
        }
      }
    }
    return out;
  }

  /** Accumulates weight/bias grads; returns grad w.r.t. the input. */
  backward(x: Tensor, gradOut: Tensor): Tensor {
    const h = x.shape[1];
    const w = x.shape[2];
    const r = (this.k - 1) / 2;
    const gradIn = zeros(x.shape);
    const wd = this.weight.value.data;
    const wg = this.weight.grad.data;
    const bg = this.bias.grad.data;
    const xd = x.data;
    const gd = gradOut.data;
    const gi = gradIn.data;
    for (let oc = 0; oc < this.outC; oc++) {
      for (let y = 0; y < h; y++) {
        for (let xx = 0; xx < w; xx++) {
          const g = gd[oc * h * w + y * w + xx];
          if (g === 0) continue;
          bg[oc] += g;
          for (let ic = 0; ic < this.inC; ic++) {
            const xBase = ic * h * w;
            const wBase = (oc * this.inC + ic) * this.k * this.k;
            for (let dy = -r; dy <= r; dy++) {
              const yy = y + dy;
              if (yy < 0 || yy >= h) continue;
              for (let dx = -r; dx <= r; dx++) {
                const xc = xx + dx;
                if (xc < 0 || xc >= w) continue;
                const wi = wBase + (dy + r) * this.k + (dx + r);
                wg[wi] += g * xd[xBase + yy * w + xc];
                gi[xBase + yy * w + xc] += g * wd[wi];
              }
            }
          }
        }
      }
    }
    return gradIn;
  }
}

// Leaky rather than hard rectification: a small negative slope keeps dead
// units trainable, which matters a lot for a net this small.
export const RELU_LEAK = 0.05;

export function relu(x: Tensor): Tensor {
  const out = new Tensor(x.shape, x.data.slice());
  for (let i = 0; i < out.data.length; i++) if (out.data[i] < 0) out.data[i] *= RELU_LEAK;
  return out;
}

export function reluBackward(x: Tensor, gradOut: Tensor): Tensor {
  const g = new Tensor(x.shape, gradOut.data.slice());
  for (let i = 0; i < g.data.length; i++) if (x.data[i] <= 0) g.data[i] *= RELU_LEAK;
  return g;
}

export interface PoolResult {
  out: Tensor;
  indices: Int32Array; // flat input index of each pooled maximum
}

/** 2x2 max pooling, stride 2; remembers argmax indices for unpooling. */
export function maxPool2(x: Tensor): PoolResult {
  const [c, h, w] = x.shape;
  if (h % 2 !== 0 || w % 2 !== 0) throw new Error(`pooling needs even dims, got ${h}x${w}`);
  const oh = h / 2;
  const ow = w / 2;
  const out = zeros([c, oh, ow]);
  const indices = new Int32Array(c * oh * ow);
  for (let ch = 0; ch < c; ch++) {
    for (let y = 0; y < oh; y++) {
      for (let xx = 0; xx < ow; xx++) {
        let best = -Infinity;
        let bi = -1;
        for (let dy = 0; dy < 2; dy++) {
          for (let dx = 0; dx < 2; dx++) {
            const i = ch * h * w + (2 * y + dy) * w + (2 * xx + dx);
            if (x.data[i] > best) {
              best = x.data[i];
              bi = i;
            }
          }
        }
        const o = ch * oh * ow + y * ow + xx;
        out.data[o] = best;
        indices[o] = bi;
      }
    }
  }
  return { out, indices };
}

export function maxPool2Backward(inShape: number[], indices: Int32Array, gradOut: Tensor): Tensor {
  const gradIn = zeros(inShape);
  for (let o = 0; o < gradOut.data.length; o++) gradIn.data[indices[o]] += gradOut.data[o];
  return gradIn;
}

/** Places pooled values back at their argmax positions, zeros elsewhere. */
export function unpool2(x: Tensor, indices: Int32Array, outShape: number[]): Tensor {
  const out = zeros(outShape);
  for (let o = 0; o < x.data.length; o++) out.data[indices[o]] = x.data[o];
  return out;
}

export function unpool2Backward(indices: Int32Array, gradOut: Tensor, inShape: number[]): Tensor {
  const gradIn = zeros(inShape);
  for (let o = 0; o < gradIn.data.length; o++) gradIn.data[o] = gradOut.data[indices[o]];
  return gradIn;
}

/** SGD with classical momentum over a parameter list. */
export class Sgd {
  lr: number;
  momentum: number;
  private velocity = new Map<Param, Float64Array>();

  constructor(lr: number, momentum = 0.9) {
    this.lr = lr;
    this.momentum = momentum;
  }

  step(params: Param[]): void {
    for (const p of params) {
      let v = this.velocity.get(p);
      if (!v) {
        v = new Float64Array(p.value.data.length);
        this.velocity.set(p, v);
      }
      for (let i = 0; i < v.length; i++) {
        v[i] = this.momentum * v[i] - this.lr * p.grad.data[i];
        p.value.data[i] += v[i];
      }
    }
  }
}

/** Plain SGD over a parameter list. */
export function sgdStep(params: Param[], lr: number): void {
  for (const p of params) {
    for (let i = 0; i < p.value.data.length; i++) p.value.data[i] -= lr * p.grad.data[i];
  }
}

export function zeroGrads(params: Param[]): void {
  for (const p of params) p.grad.data.fill(0);
}
