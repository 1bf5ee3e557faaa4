/**
 * Turns model attention captures into the evaluation toolkit's on-disk
 * contract: one 3-d NPY pair (attention, gradient) per layer plus a JSONL
 * manifest whose entries carry capture metadata and ground truth. The
 * exporter only writes; relevance reduction stays in the consuming toolkit.
 */

import { mkdirSync } from 'node:fs';
import { join } from 'node:path';

import { ModelWithoutAttentionError, ShapeDriftError } from './errors.js';
import { AttentionModel, Matrix, Tensor3 } from './model.js';
import { buildNpyBytes, writeFileAtomic } from './npy.js';

export type Box = [number, number, number, number];

export interface BoxGroundTruth {
  bboxes: Box[];
  /** [width, height] in pixels */
  imageSize: [number, number];
}

export interface ExportSample {
  sampleId: string;
  /** token features, T x featureDim; row 0 is the cls token */
  features: Matrix;
  /** gradient target and reported true class: the annotated class */
  annotationClass: number;
  /** patch grid [rows, cols]; must tile the non-cls tokens */
  grid: [number, number];
  maskPath?: string;
  boxes?: BoxGroundTruth;
  tags?: Record<string, string>;
}

export interface ExportJob {
  model: AttentionModel;
  samples: ExportSample[];
  outDir: string;
}

export interface ExportResult {
  manifestPath: string;
  sampleCount: number;
  fileCount: number;
}

function flatten3(t: Tensor3): { shape: number[]; data: Float64Array } {
  const heads = t.length;
  const rows = t[0].length;
  const cols = t[0][0].length;
  const data = new Float64Array(heads * rows * cols);
  let at = 0;
  for (const head of t) {
    if (head.length !== rows) throw new ShapeDriftError('ragged attention tensor');
    for (const row of head) {
      if (row.length !== cols) throw new ShapeDriftError('ragged attention tensor');
      for (const v of row) data[at++] = v;
    }
  }
  return { shape: [heads, rows, cols], data };
}

function sameShape(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((v, i) => v === b[i]);
}

function checkSample(sample: ExportSample, tokenCount: number): void {
  const id = sample.sampleId;
  if (!id) throw new Error('sampleId must be non-empty');
  const hasMask = sample.maskPath !== undefined;
  const hasBoxes = sample.boxes !== undefined;
  if (hasMask === hasBoxes) {
    throw new Error(`sample '${id}': exactly one of maskPath/boxes is required`);
  }
  const [gridRows, gridCols] = sample.grid;
  if (gridRows * gridCols !== tokenCount - 1) {
    throw new Error(
      `sample '${id}': grid ${gridRows}x${gridCols} cannot tile ${tokenCount - 1} patch tokens`,
    );
  }
  if (!Number.isInteger(sample.annotationClass) || sample.annotationClass < 0) {
    throw new Error(`sample '${id}': annotationClass must be a non-negative integer`);
  }
}

export function captureSample(
  model: AttentionModel,
  sample: ExportSample,
  outDir: string,
): { entry: Record<string, unknown>; files: number } {
  const trace = model.forward(sample.features);
  if (trace.layers.length === 0) {
    throw new ModelWithoutAttentionError('forward pass produced no attention layers');
  }
  checkSample(sample, trace.tokenCount);
  const grads = model.attentionGradients(trace, sample.annotationClass);
  if (grads.length !== trace.layers.length) {
    throw new ShapeDriftError(
      `sample '${sample.sampleId}': ${trace.layers.length} attention layers but ${grads.length} gradient layers`,
    );
  }

  const attentionPaths: string[] = [];
  const gradientPaths: string[] = [];
  let expected: number[] | null = null;
  for (let layer = 0; layer < trace.layers.length; layer++) {
    const attn = flatten3(trace.layers[layer].attention);
    const grad = flatten3(grads[layer]);
    if (expected === null) expected = attn.shape;
    for (const got of [attn.shape, grad.shape]) {
      if (!sameShape(got, expected)) {
        throw new ShapeDriftError(
          `sample '${sample.sampleId}' layer ${layer}: shape (${got.join(', ')}) ` +
            `drifts from (${expected.join(', ')})`,
        );
      }
    }
    const attnRel = `captures/${sample.sampleId}.attn${layer}.npy`;
    const gradRel = `captures/${sample.sampleId}.grad${layer}.npy`;
    writeFileAtomic(join(outDir, attnRel), buildNpyBytes(attn.shape, attn.data));
    writeFileAtomic(join(outDir, gradRel), buildNpyBytes(grad.shape, grad.data));
    attentionPaths.push(attnRel);
    gradientPaths.push(gradRel);
  }

  const entry: Record<string, unknown> = {
    sample_id: sample.sampleId,
    true_class: sample.annotationClass,
    pred_class: trace.predictedClass,
    capture: {
      attention_paths: attentionPaths,
      gradient_paths: gradientPaths,
      cls_index: model.clsIndex,
      grid: [sample.grid[0], sample.grid[1]],
      target_class: sample.annotationClass,
      non_image_tokens: [model.clsIndex],
    },
  };
  if (sample.maskPath !== undefined) {
    entry.mask_path = sample.maskPath;
  } else {
    entry.bboxes = sample.boxes!.bboxes.map(b => [...b]);
    entry.image_size = [...sample.boxes!.imageSize];
  }
  if (sample.tags) entry.tags = sample.tags;
  return { entry, files: attentionPaths.length + gradientPaths.length };
}

export function runExport(job: ExportJob): ExportResult {
  if (job.model.layerCount < 1) {
    throw new ModelWithoutAttentionError('model exposes no attention layers to capture');
  }
  const seen = new Set<string>();
  for (const sample of job.samples) {
    if (seen.has(sample.sampleId)) {
      throw new Error(`duplicate sample id '${sample.sampleId}'`);
    }
    seen.add(sample.sampleId);
  }
  mkdirSync(join(job.outDir, 'captures'), { recursive: true });
  const lines: string[] = [];
  let files = 0;
  for (const sample of job.samples) {
    const { entry, files: wrote } = captureSample(job.model, sample, job.outDir);
    lines.push(JSON.stringify(entry));
    files += wrote;
  }
  const manifestPath = join(job.outDir, 'manifest.jsonl');
  writeFileAtomic(manifestPath, lines.map(l => l + '\n').join(''));
  return { manifestPath, sampleCount: job.samples.length, fileCount: files };
}
