export { ExporterError, ModelWithoutAttentionError, NpyFormatError, ShapeDriftError } from './errors.js';
export { buildNpyBytes, parseNpyBytes, writeFileAtomic, writeNpy } from './npy.js';
export type { NpyDtype, ParsedNpy } from './npy.js';
export { SeededStream, splitmix64, unitDouble } from './rng.js';
export { ToyAttentionClassifier, requireAttention } from './model.js';
export type { AttentionModel, ForwardTrace, LayerTrace, Matrix, Tensor3, ToyModelOptions } from './model.js';
export { captureSample, runExport } from './exporter.js';
export type { Box, BoxGroundTruth, ExportJob, ExportResult, ExportSample } from './exporter.js';
