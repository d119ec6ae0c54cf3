/** Minimal dense tensors (Float64, CHW layout) and a seeded RNG. */

export class Tensor {
  data: Float64Array;
  shape: number[];

  constructor(shape: number[], data?: Float64Array) {
    const size = shape.reduce((a, b) => a * b, 1);
    if (data !== undefined && data.length !== size) {
      throw new Error(`data length ${data.length} does not match shape [${shape}]`);
    }
    this.shape = shape.slice();
    this.data = data ?? new Float64Array(size);
  }

  get size(): number {
    return this.data.length;
  }

  clone(): Tensor {
    return new Tensor(this.shape, this.data.slice());
  }

  fill(v: number): this {
    this.data.fill(v);
    return this;
  }
}

export function zeros(shape: number[]): Tensor {
  return new Tensor(shape);
}

/** sfc32: small fast counter RNG; deterministic across platforms. */
export class Rng {
  private a: number;
  private b: number;
  private c: number;
  private d: number;

  constructor(seed: number) {
    this.a = 0x9e3779b9 ^ seed;
    this.b = 0x243f6a88 ^ (seed << 13) ^ (seed >>> 7);
    this.c = 0xb7e15162 ^ (seed * 0x85ebca6b);
    this.d = seed >>> 0;
    for (let i = 0; i < 12; i++) this.uniform();
  }

  /** Uniform in [0, 1). */
  uniform(): number {
    this.a >>>= 0; this.b >>>= 0; this.c >>>= 0; this.d >>>= 0;
    let t = (this.a + this.b) | 0;
    this.a = this.b ^ (this.b >>> 9);
    this.b = (this.c + (this.c << 3)) | 0;
    this.c = (this.c << 21) | (this.c >>> 11);
    this.d = (this.d + 1) | 0;
    t = (t + this.d) | 0;
    this.c = (this.c + t) | 0;
    return (t >>> 0) / 4294967296;
  }

  /** Standard normal via Box-Muller. */
  normal(): number {
    let u = 0;
    while (u === 0) u = this.uniform();
    return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * this.uniform());
  }

  /** Integer in [0, n). */
  int(n: number): number {
    return Math.floor(this.uniform() * n);
  }

  shuffle<T>(xs: T[]): T[] {
    for (let i = xs.length - 1; i > 0; i--) {
      const j = this.int(i + 1);
      [xs[i], xs[j]] = [xs[j], xs[i]];
    }
    return xs;
  }
}

/** He-style init scaled by fan-in. */
export function randomTensor(shape: number[], rng: Rng, fanIn: number): Tensor {
  const t = new Tensor(shape);
  const scale = Math.sqrt(2 / fanIn);
  for (let i = 0; i < t.data.length; i++) t.data[i] = rng.normal() * scale;
  return t;
}
