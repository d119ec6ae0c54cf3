/** Softmax cross-entropy over class-map logits with an ignore label. */

import { Tensor, zeros } from "./tensor";

export interface LossResult {
  loss: number; // mean over counted pixels; 0 if none counted
  grad: Tensor; // d loss / d logits, same shape as logits
  counted: number;
}

/**
 * logits: [C, H, W]; target: H*W class ids; pixels equal to ignoreLabel
 * contribute nothing to the loss or the gradient.
 */
export function softmaxCrossEntropy(
  logits: Tensor,
  target: Uint8Array | Int32Array,
  ignoreLabel: number,
): LossResult {
  const [c, h, w] = logits.shape;
  const n = h * w;
  if (target.length !== n) throw new Error(`target length ${target.length} != ${n}`);
  const grad = zeros(logits.shape);
  let loss = 0;
  let counted = 0;
  const probs = new Float64Array(c);
  for (let p = 0; p < n; p++) {
    const t = target[p];
    if (t === ignoreLabel) continue;
    if (t >= c) throw new Error(`class id ${t} out of range for ${c} logits`);
    let mx = -Infinity;
    for (let k = 0; k < c; k++) mx = Math.max(mx, logits.data[k * n + p]);
    let sum = 0;
    for (let k = 0; k < c; k++) {
      probs[k] = Math.exp(logits.data[k * n + p] - mx);
      sum += probs[k];
    }
    loss -= Math.log(probs[t] / sum);
    for (let k = 0; k < c; k++) {
      grad.data[k * n + p] = probs[k] / sum - (k === t ? 1 : 0);
    }
    counted++;
  }
  if (counted > 0) {
    loss /= counted;
    for (let i = 0; i < grad.data.length; i++) grad.data[i] /= counted;
  }
  return { loss, grad, counted };
}

/** Per-pixel argmax over the class axis. */
export function predict(logits: Tensor): Int32Array {
  const [c, h, w] = logits.shape;
  const n = h * w;
  const out = new Int32Array(n);
  for (let p = 0; p < n; p++) {
    let best = logits.data[p];
    let bi = 0;
    for (let k = 1; k < c; k++) {
      const v = logits.data[k * n + p];
      if (v > best) {
        best = v;
        bi = k;
      }
    }
    out[p] = bi;
  }
  return out;
}
