/** Confusion-matrix metrics matching the labeler's eval report schema. */

export class Confusion {
  n: number;
  counts: Float64Array; // row = ground truth, col = prediction

  constructor(n: number) {
    this.n = n;
    this.counts = new Float64Array(n * n);
  }

  update(gt: ArrayLike<number>, pred: ArrayLike<number>, ignoreLabel = 255): void {
    for (let i = 0; i < gt.length; i++) {
      const g = gt[i];
      if (g === ignoreLabel) continue;
      this.counts[g * this.n + pred[i]] += 1;
    }
  }

  total(): number {
    let s = 0;
    for (const c of this.counts) s += c;
    return s;
  }

  globalAccuracy(): number {
    let diag = 0;
    for (let i = 0; i < this.n; i++) diag += this.counts[i * this.n + i];
    return diag / this.total();
  }

  perClassAccuracy(): number[] {
    const out: number[] = [];
    for (let i = 0; i < this.n; i++) {
      let row = 0;
      for (let j = 0; j < this.n; j++) row += this.counts[i * this.n + j];
      out.push(row > 0 ? this.counts[i * this.n + i] / row : NaN);
    }
    return out;
  }

  perClassIou(): number[] {
    const out: number[] = [];
    for (let i = 0; i < this.n; i++) {
      let row = 0;
      let col = 0;
      for (let j = 0; j < this.n; j++) {
        row += this.counts[i * this.n + j];
        col += this.counts[j * this.n + i];
      }
      const diag = this.counts[i * this.n + i];
      const union = row + col - diag;
      out.push(union > 0 ? diag / union : NaN);
    }
    return out;
  }

  classAvgAccuracy(): number {
    return nanMean(this.perClassAccuracy());
  }

  meanIou(): number {
    return nanMean(this.perClassIou());
  }

  /** Same document layout as the labeler's eval command. */
  report(): Record<string, unknown> {
    const acc = this.perClassAccuracy();
    const iou = this.perClassIou();
    const perClass = [];
    for (let c = 0; c < this.n; c++) {
      let row = 0;
      for (let j = 0; j < this.n; j++) row += this.counts[c * this.n + j];
      perClass.push({
        class: c,
        gt_pixels: row,
        accuracy: Number.isNaN(acc[c]) ? null : acc[c],
        iou: Number.isNaN(iou[c]) ? null : iou[c],
      });
    }
    return {
      global_accuracy: this.globalAccuracy(),
      class_avg_accuracy: this.classAvgAccuracy(),
      mean_iou: this.meanIou(),
      per_class: perClass,
    };
  }
}

function nanMean(xs: number[]): number {
  let s = 0;
  let n = 0;
  for (const x of xs) {
    if (!Number.isNaN(x)) {
      s += x;
      n++;
    }
  }
  return s / n;
}
