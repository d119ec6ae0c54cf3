/** Small encoder-decoder segmentation net with max-pool index unpooling. */

import {
  Conv2d,
  Param,
  maxPool2,
  maxPool2Backward,
  relu,
  reluBackward,
  unpool2,
  unpool2Backward,
} from "./layers";
import { Rng, Tensor } from "./tensor";

export const N_BLOCKS = 4;
export const ENC_CHANNELS = [16, 24, 32, 32];
export const IN_CHANNELS = 5; // r, g, b plus normalized x, y coordinates

/** Mixes the pooled features of encoder level i before the next block. */
export type Junction = (level: number, pooled: Tensor) => Tensor;
/** Routes the gradient of the mixed features back to the task-side input. */
export type JunctionBackward = (level: number, gradMixed: Tensor) => Tensor;

export interface ForwardCache {
  encIn: Tensor[]; // input to each encoder conv
  encPre: Tensor[]; // conv output before relu
  encAct: Tensor[]; // after relu (pool input)
  poolIdx: Int32Array[];
  pooled: Tensor[]; // raw pooled features per level
  mixed: Tensor[]; // features actually fed onward (== pooled without a junction)
  decIn: Tensor[]; // input to each decoder conv (after unpool)
  decPre: Tensor[];
  decAct: Tensor[];
  logits: Tensor;
}

export class ToySegNet {
  enc: Conv2d[];
  dec: Conv2d[];
  head: Conv2d;
  nClasses: number;

  constructor(nClasses: number, rng: Rng) {
    this.nClasses = nClasses;
    this.enc = [];
    let c = IN_CHANNELS;
    for (let i = 0; i < N_BLOCKS; i++) {
      this.enc.push(new Conv2d(c, ENC_CHANNELS[i], 3, rng));
      c = ENC_CHANNELS[i];
    }
    // Decoder mirrors the encoder; unpooling preserves channel count, the
    // conv then maps down to the channel count of the next-shallower level.
    this.dec = [];
    const decOut = [ENC_CHANNELS[2], ENC_CHANNELS[1], ENC_CHANNELS[0], ENC_CHANNELS[0]];
    let dc = ENC_CHANNELS[N_BLOCKS - 1];
    for (let i = 0; i < N_BLOCKS; i++) {
      this.dec.push(new Conv2d(dc, decOut[i], 3, rng));
      dc = decOut[i];
    }
    // Zero head: logits start uniform, so early training fits the class
    // marginal through the bias instead of fighting random head noise.
    this.head = new Conv2d(dc, nClasses, 1, rng);
    this.head.weight.value.data.fill(0);
  }

  params(): Param[] {
    const ps: Param[] = [];
    for (const layer of [...this.enc, ...this.dec, this.head]) ps.push(...layer.params());
    return ps;
  }

  /** New final classifier for a different class count; the rest is shared. */
  replaceHead(nClasses: number, rng: Rng): void {
    this.head = new Conv2d(this.head.inC, nClasses, 1, rng);
    this.head.weight.value.data.fill(0);
    this.nClasses = nClasses;
  }

  forward(x: Tensor, junction?: Junction): ForwardCache {
    const cache: ForwardCache = {
      encIn: [], encPre: [], encAct: [], poolIdx: [], pooled: [], mixed: [],
      decIn: [], decPre: [], decAct: [], logits: new Tensor([0]),
    };
    let cur = x;
    for (let i = 0; i < N_BLOCKS; i++) {
      cache.encIn.push(cur);
      const pre = this.enc[i].forward(cur);
      cache.encPre.push(pre);
      const act = relu(pre);
      cache.encAct.push(act);
      const { out, indices } = maxPool2(act);
      cache.poolIdx.push(indices);
      cache.pooled.push(out);
      const mixed = junction ? junction(i, out) : out;
      cache.mixed.push(mixed);
      cur = mixed;
    }
    for (let i = 0; i < N_BLOCKS; i++) {
      const level = N_BLOCKS - 1 - i;
      const up = unpool2(cur, cache.poolIdx[level], cache.encAct[level].shape);
      cache.decIn.push(up);
      const pre = this.dec[i].forward(up);
      cache.decPre.push(pre);
      cur = relu(pre);
      cache.decAct.push(cur);
    }
    cache.logits = this.head.forward(cur);
    return cache;
  }

  /** Accumulates parameter grads; returns grad w.r.t. the network input. */
  backward(cache: ForwardCache, gradLogits: Tensor, junctionBackward?: JunctionBackward): Tensor {
    let g = this.head.backward(cache.decAct[N_BLOCKS - 1], gradLogits);
    for (let i = N_BLOCKS - 1; i >= 0; i--) {
      const level = N_BLOCKS - 1 - i;
      g = reluBackward(cache.decPre[i], g);
      g = this.dec[i].backward(cache.decIn[i], g);
      // Grad w.r.t. the unpool input: decAct[i-1] for i > 0, else mixed[3].
      g = unpool2Backward(cache.poolIdx[level], g, cache.mixed[level].shape);
    }
    if (junctionBackward) g = junctionBackward(N_BLOCKS - 1, g);
    for (let i = N_BLOCKS - 1; i >= 0; i--) {
      g = maxPool2Backward(cache.encAct[i].shape, cache.poolIdx[i], g);
      g = reluBackward(cache.encPre[i], g);
      g = this.enc[i].backward(cache.encIn[i], g);
      if (junctionBackward && i > 0) g = junctionBackward(i - 1, g);
    }
    return g;
  }

  serialize(): string {
    const layers = [...this.enc, ...this.dec, this.head].map((l) => ({
      inC: l.inC,
      outC: l.outC,
      k: l.k,
      weight: encodeF64(l.weight.value.data),
      bias: encodeF64(l.bias.value.data),
    }));
    return JSON.stringify({ nClasses: this.nClasses, layers });
  }

  static deserialize(text: string): ToySegNet {
    const doc = JSON.parse(text);
    const net = new ToySegNet(doc.nClasses, new Rng(0));
    const all = [...net.enc, ...net.dec, net.head];
    if (doc.layers.length !== all.length) throw new Error("layer count mismatch");
    for (let i = 0; i < all.length; i++) {
      const l = doc.layers[i];
      if (l.inC !== all[i].inC || l.outC !== all[i].outC || l.k !== all[i].k) {
        throw new Error(`layer ${i} shape mismatch`);
      }
      all[i].weight.value.data.set(decodeF64(l.weight));
      all[i].bias.value.data.set(decodeF64(l.bias));
    }
    return net;
  }

  cloneNet(): ToySegNet {
    return ToySegNet.deserialize(this.serialize());
  }
}

function encodeF64(a: Float64Array): string {
  return Buffer.from(a.buffer, a.byteOffset, a.byteLength).toString("base64");
}

function decodeF64(s: string): Float64Array {
  const buf = Buffer.from(s, "base64");
  return new Float64Array(buf.buffer, buf.byteOffset, buf.byteLength / 8);
}
