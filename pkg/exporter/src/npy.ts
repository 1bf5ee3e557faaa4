/**
 * NPY v1.0 writer/reader for the subset the evaluation toolkit accepts:
 * little-endian float32/float64, C order, rank 2 or 3, every dim >= 1.
 * The writer is byte-compatible with numpy.save for arrays in the subset.
 */

import { renameSync, writeFileSync } from 'node:fs';

import { NpyFormatError } from './errors.js';

const MAGIC = Buffer.from('\x93NUMPY', 'latin1');
const HEADER_ALIGN = 64;

export type NpyDtype = '<f4' | '<f8';

export interface ParsedNpy {
  dtype: NpyDtype;
  shape: number[];
  /** Values in C order; float32 payloads are widened on read. */
  data: Float64Array;
}

function checkShape(shape: number[]): void {
  if (shape.length !== 2 && shape.length !== 3) {
    throw new NpyFormatError(`only rank 2/3 tensors are written, got rank ${shape.length}`);
  }
  for (const dim of shape) {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new NpyFormatError(`shape dims must be integers >= 1, got (${shape.join(', ')})`);
    }
  }
}

export function buildNpyBytes(
  shape: number[],
  data: ArrayLike<number>,
  dtype: NpyDtype = '<f8',
): Buffer {
  checkShape(shape);
  const count = shape.reduce((a, b) => a * b, 1);
  if (data.length !== count) {
    throw new NpyFormatError(`shape (${shape.join(', ')}) wants ${count} values, got ${data.length}`);
  }
  const itemSize = dtype === '<f8' ? 8 : 4;
  const header = `{'descr': '${dtype}', 'fortran_order': False, 'shape': (${shape.join(', ')}), }`;
  // declared length counts the trailing newline; padding keeps the whole
  // prefix (magic + version + length field + header text) 64-aligned
  const hlen = header.length + 1;
  const padlen = HEADER_ALIGN - ((MAGIC.length + 2 + 2 + hlen) % HEADER_ALIGN);

  const buf = Buffer.alloc(10 + hlen + padlen + count * itemSize);
  MAGIC.copy(buf, 0);
  buf[6] = 1;
  buf[7] = 0;
  buf.writeUInt16LE(hlen + padlen, 8);
  buf.write(header, 10, 'ascii');
  buf.fill(0x20, 10 + header.length, 10 + header.length + padlen);
  buf[10 + header.length + padlen] = 0x0a;

  let offset = 10 + hlen + padlen;
  if (dtype === '<f8') {
    for (let i = 0; i < count; i++) offset = buf.writeDoubleLE(data[i], offset);
  } else {
    for (let i = 0; i < count; i++) offset = buf.writeFloatLE(data[i], offset);
  }
  return buf;
}

// canonical header layout only, which is what numpy.save and this writer emit
const HEADER_RE = /^\{'descr': '([^']*)', 'fortran_order': (True|False), 'shape': \((\d+(?:, \d+)*)\), \}$/;

export function parseNpyBytes(buf: Buffer): ParsedNpy {
  if (buf.subarray(0, 6).compare(MAGIC) !== 0) {
    throw new NpyFormatError('bad magic, not an NPY file');
  }
  if (buf.length < 10) throw new NpyFormatError('file ends inside the fixed header');
  if (buf[6] !== 1 || buf[7] !== 0) {
    throw new NpyFormatError(`unsupported format version ${buf[6]}.${buf[7]}`);
  }
  const hlen = buf.readUInt16LE(8);
  if (buf.length < 10 + hlen) throw new NpyFormatError('file ends inside the header text');
  if ((10 + hlen) % HEADER_ALIGN !== 0) {
    throw new NpyFormatError(`header section not ${HEADER_ALIGN}-byte aligned`);
  }
  const headerText = buf.subarray(10, 10 + hlen).toString('ascii');
  if (!headerText.endsWith('\n')) {
    throw new NpyFormatError('header text not terminated by newline');
  }
  const match = HEADER_RE.exec(headerText.trimEnd());
  if (!match) throw new NpyFormatError(`unparseable header: ${headerText.trim()}`);
  const [, descr, fortran, shapeText] = match;
  if (descr !== '<f4' && descr !== '<f8') {
    throw new NpyFormatError(`descr '${descr}' not supported (only '<f4'/'<f8')`);
  }
  if (fortran !== 'False') {
    throw new NpyFormatError('fortran_order must be False (row-major only)');
  }
  const shape = shapeText.split(', ').map(Number);
  checkShape(shape);

  const itemSize = descr === '<f8' ? 8 : 4;
  const count = shape.reduce((a, b) => a * b, 1);
  const payload = buf.subarray(10 + hlen);
  if (payload.length < count * itemSize) {
    throw new NpyFormatError(`payload holds ${payload.length} bytes, expected ${count * itemSize}`);
  }
  if (payload.length > count * itemSize) {
    throw new NpyFormatError(`${payload.length - count * itemSize} trailing bytes after payload`);
  }
  const data = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = descr === '<f8' ? payload.readDoubleLE(i * 8) : payload.readFloatLE(i * 4);
  }
  return { dtype: descr, shape, data };
}

/** Write via a temp file + rename so readers never observe a partial file. */
export function writeFileAtomic(path: string, data: Buffer | string): void {
  const tmp = `${path}.tmp-${process.pid}`;
  writeFileSync(tmp, data);
  renameSync(tmp, path);
}

export function writeNpy(path: string, shape: number[], data: ArrayLike<number>, dtype: NpyDtype = '<f8'): void {
  writeFileAtomic(path, buildNpyBytes(shape, data, dtype));
}
