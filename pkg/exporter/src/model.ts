/**
 * Toy single-layer multi-head attention classifier.
 *
 * Exists to exercise the capture path with gradients that are exact: the
 * target logit is linear in the (post-softmax) attention matrix, so
 * d(logit)/dA has a closed form and finite differences reproduce it to
 * rounding error. Token 0 is the classification token by convention.
 */

import { ModelWithoutAttentionError } from './errors.js';
import { SeededStream } from './rng.js';

export type Matrix = number[][];
/** heads x rows x cols */
export type Tensor3 = number[][][];

export interface LayerTrace {
  /** per-head post-softmax attention, heads x T x T */
  attention: Tensor3;
  /** per-head value projections, heads x T x headDim */
  values: Tensor3;
}

export interface ForwardTrace {
  tokenCount: number;
  logits: number[];
  predictedClass: number;
  layers: LayerTrace[];
}

export interface AttentionModel {
  readonly headCount: number;
  readonly layerCount: number;
  readonly clsIndex: number;
  forward(features: Matrix): ForwardTrace;
  /** d(logit_target)/dA per layer, same shapes as the attention maps. */
  attentionGradients(trace: ForwardTrace, targetClass: number): Tensor3[];
}

export interface ToyModelOptions {
  featureDim: number;
  headCount: number;
  headDim: number;
  classCount: number;
  seed?: bigint;
}

function zeros(rows: number, cols: number): Matrix {
  return Array.from({ length: rows }, () => new Array<number>(cols).fill(0));
}

function matmul(a: Matrix, b: Matrix): Matrix {
  const out = zeros(a.length, b[0].length);
  for (let i = 0; i < a.length; i++) {
    for (let k = 0; k < b.length; k++) {
      const aik = a[i][k];
      if (aik === 0) continue;
      for (let j = 0; j < b[0].length; j++) {
        out[i][j] += aik * b[k][j];
      }
    }
  }
  return out;
}

function softmaxRows(scores: Matrix): Matrix {
  return scores.map(row => {
    const peak = Math.max(...row);
    const exps = row.map(v => Math.exp(v - peak));
    const total = exps.reduce((a, b) => a + b, 0);
    return exps.map(v => v / total);
  });
}

function argmax(values: number[]): number {
  let best = 0;
  for (let i = 1; i < values.length; i++) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

export class ToyAttentionClassifier implements AttentionModel {
  readonly headCount: number;
  readonly layerCount = 1;
  readonly clsIndex = 0;
  readonly featureDim: number;
  readonly headDim: number;
  readonly classCount: number;

  /** per-head projections, each featureDim x headDim */
  private readonly wq: Matrix[];
  private readonly wk: Matrix[];
  private readonly wv: Matrix[];
  /** output head, (headCount * headDim) x classCount */
  private readonly wo: Matrix;

  constructor(opts: ToyModelOptions, weights?: { wq: Matrix[]; wk: Matrix[]; wv: Matrix[]; wo: Matrix }) {
    if (opts.featureDim < 1 || opts.headCount < 1 || opts.headDim < 1 || opts.classCount < 2) {
      throw new Error('model wants featureDim/headCount/headDim >= 1 and classCount >= 2');
    }
    this.featureDim = opts.featureDim;
    this.headCount = opts.headCount;
    this.headDim = opts.headDim;
    this.classCount = opts.classCount;
    if (weights) {
      this.wq = weights.wq;
      this.wk = weights.wk;
      this.wv = weights.wv;
      this.wo = weights.wo;
      return;
    }
    const stream = new SeededStream(opts.seed ?? 0n);
    const draw = (rows: number, cols: number): Matrix =>
      Array.from({ length: rows }, () => Array.from({ length: cols }, () => stream.range(-0.5, 0.5)));
    this.wq = Array.from({ length: this.headCount }, () => draw(this.featureDim, this.headDim));
    this.wk = Array.from({ length: this.headCount }, () => draw(this.featureDim, this.headDim));
    this.wv = Array.from({ length: this.headCount }, () => draw(this.featureDim, this.headDim));
    this.wo = draw(this.headCount * this.headDim, this.classCount);
  }

  forward(features: Matrix): ForwardTrace {
    const tokenCount = features.length;
    if (tokenCount < 2) throw new Error('need at least a cls token and one patch token');
    for (const row of features) {
      if (row.length !== this.featureDim) {
        throw new Error(`feature rows must have ${this.featureDim} entries, got ${row.length}`);
      }
    }
    const attention: Tensor3 = [];
    const values: Tensor3 = [];
    const scale = 1 / Math.sqrt(this.headDim);
    for (let h = 0; h < this.headCount; h++) {
      const q = matmul(features, this.wq[h]);
      const k = matmul(features, this.wk[h]);
      const v = matmul(features, this.wv[h]);
      const scores = zeros(tokenCount, tokenCount);
      for (let i = 0; i < tokenCount; i++) {
        for (let j = 0; j < tokenCount; j++) {
          let s = 0;
          for (let m = 0; m < this.headDim; m++) s += q[i][m] * k[j][m];
          scores[i][j] = s * scale;
        }
      }
      attention.push(softmaxRows(scores));
      values.push(v);
    }
    const trace: ForwardTrace = {
      tokenCount,
      logits: [],
      predictedClass: 0,
      layers: [{ attention, values }],
    };
    trace.logits = this.logitsGivenAttention(trace, attention);
    trace.predictedClass = argmax(trace.logits);
    return trace;
  }

  /**
   * Logits as a function of an explicit attention tensor, reusing the
   * trace's value projections. This is the map the gradients differentiate.
   */
  logitsGivenAttention(trace: ForwardTrace, attention: Tensor3): number[] {
    const layer = trace.layers[0];
    const logits = new Array<number>(this.classCount).fill(0);
    for (let h = 0; h < this.headCount; h++) {
      for (let m = 0; m < this.headDim; m++) {
        let ctx = 0; // context feature m of the cls token for head h
        for (let j = 0; j < trace.tokenCount; j++) {
          ctx += attention[h][this.clsIndex][j] * layer.values[h][j][m];
        }
        for (let c = 0; c < this.classCount; c++) {
          logits[c] += ctx * this.wo[h * this.headDim + m][c];
        }
      }
    }
    return logits;
  }

  attentionGradients(trace: ForwardTrace, targetClass: number): Tensor3[] {
    if (targetClass < 0 || targetClass >= this.classCount) {
      throw new Error(`target class ${targetClass} outside [0, ${this.classCount})`);
    }
    const layer = trace.layers[0];
    const grads: Tensor3 = [];
    for (let h = 0; h < this.headCount; h++) {
      const g = zeros(trace.tokenCount, trace.tokenCount);
      // logit_t = sum_j A[cls][j] * (V[j] . wo_block[:, t]); rows other
      // than cls never reach the logit, so their gradient is exactly 0
      for (let j = 0; j < trace.tokenCount; j++) {
        let d = 0;
        for (let m = 0; m < this.headDim; m++) {
          d += layer.values[h][j][m] * this.wo[h * this.headDim + m][targetClass];
        }
        g[this.clsIndex][j] = d;
      }
      grads.push(g);
    }
    return [grads];
  }
}

/** Guard used by the capture path before touching model output. */
export function requireAttention(model: AttentionModel): void {
  if (model.layerCount < 1) {
    throw new ModelWithoutAttentionError('model exposes no attention layers to capture');
  }
}
