export class ExporterError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

/** The model exposes no attention layers to capture. */
export class ModelWithoutAttentionError extends ExporterError {}

/** Attention or gradient shapes disagree across the captured layers. */
export class ShapeDriftError extends ExporterError {}

/** A capture file would violate the NPY subset contract. */
export class NpyFormatError extends ExporterError {}
