/**
 * Minimal MATLAB v5 (.mat) reader: little-endian files holding full numeric
 * matrices, optionally zlib-compressed. This covers the layout used by the
 * natively recorded DVS fingerspelling archive (per-sample variables
 * ts/x/y/pol as numeric column vectors); anything fancier (structs, cells,
 * sparse, big-endian) is rejected loudly.
 */

import { inflateSync } from 'node:zlib';

// data element types
const MI_INT8 = 1;
const MI_UINT8 = 2;
const MI_INT16 = 3;
const MI_UINT16 = 4;
const MI_INT32 = 5;
const MI_UINT32 = 6;
const MI_SINGLE = 7;
const MI_DOUBLE = 9;
const MI_INT64 = 12;
const MI_UINT64 = 13;
const MI_MATRIX = 14;
const MI_COMPRESSED = 15;

export interface MatVariable {
  name: string;
  dims: number[];
  data: Float64Array; // column-major, values widened to double
}

export function readMat(buf: Uint8Array): Map<string, MatVariable> {
  if (buf.length < 128) throw new Error('not a MAT v5 file: too short');
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  const endian = view.getUint16(126, false);
  // 'IM' (0x494D big-endian read) marks a little-endian writer
  if (endian !== 0x494d) {
    throw new Error('unsupported MAT file (expected little-endian v5)');
  }
  const vars = new Map<string, MatVariable>();
  let off = 128;
  while (off + 8 <= buf.length) {
    const { type, size, dataOff, next } = readTag(view, off);
    if (type === MI_COMPRESSED) {
      const inner = inflateSync(buf.subarray(dataOff, dataOff + size));
      const v = parseMatrixElement(new DataView(inner.buffer, inner.byteOffset, inner.byteLength), 0);
      if (v) vars.set(v.name, v);
    } else if (type === MI_MATRIX) {
      const v = parseMatrix(view, dataOff, size);
      if (v) vars.set(v.name, v);
    }
    // other top-level element types are skipped
    off = next;
  }
  return vars;
}

function readTag(view: DataView, off: number) {
  const first = view.getUint32(off, true);
  const small = first >>> 16;
  if (small !== 0) {
    // small data element: type in low 16 bits, <=4 bytes of payload
    return { type: first & 0xffff, size: small, dataOff: off + 4, next: off + 8 };
  }
  const size = view.getUint32(off + 4, true);
  const padded = (size + 7) & ~7;
  return { type: first, size, dataOff: off + 8, next: off + 8 + padded };
}

function parseMatrixElement(view: DataView, off: number): MatVariable | null {
  const { type, size, dataOff } = readTag(view, off);
  if (type !== MI_MATRIX) throw new Error('compressed element is not a matrix');
  return parseMatrix(view, dataOff, size);
}

function parseMatrix(view: DataView, off: number, size: number): MatVariable | null {
  const end = off + size;
  // array flags
  const flagsTag = readTag(view, off);
  if (flagsTag.type !== MI_UINT32) throw new Error('malformed matrix: missing flags');
  const klass = view.getUint32(flagsTag.dataOff, true) & 0xff;
  if (klass < 6 || klass > 15) {
    return null; // not a full numeric matrix (cell/struct/char/sparse)
  }
  // dimensions
  const dimsTag = readTag(view, flagsTag.next);
  const ndims = dimsTag.size / 4;
  const dims: number[] = [];
  for (let i = 0; i < ndims; i++) {
    dims.push(view.getInt32(dimsTag.dataOff + 4 * i, true));
  }
  // name
  const nameTag = readTag(view, dimsTag.next);
  if (nameTag.type !== MI_INT8) throw new Error('malformed matrix: missing name');
  let name = '';
  for (let i = 0; i < nameTag.size; i++) {
    name += String.fromCharCode(view.getUint8(nameTag.dataOff + i));
  }
  // real part
  const dataTag = readTag(view, nameTag.next);
  if (dataTag.next > end + 8) throw new Error('malformed matrix: data overruns element');
  const count = dims.reduce((a, b) => a * b, 1);
  const data = readNumeric(view, dataTag.type, dataTag.dataOff, dataTag.size, count);
  return { name, dims, data };
}

function readNumeric(view: DataView, type: number, off: number, size: number, count: number): Float64Array {
  const out = new Float64Array(count);
  const readers: Record<number, [number, (o: number) => number]> = {
    [MI_INT8]: [1, (o) => view.getInt8(o)],
    [MI_UINT8]: [1, (o) => view.getUint8(o)],
    [MI_INT16]: [2, (o) => view.getInt16(o, true)],
    [MI_UINT16]: [2, (o) => view.getUint16(o, true)],
    [MI_INT32]: [4, (o) => view.getInt32(o, true)],
    [MI_UINT32]: [4, (o) => view.getUint32(o, true)],
    [MI_SINGLE]: [4, (o) => view.getFloat32(o, true)],
    [MI_DOUBLE]: [8, (o) => view.getFloat64(o, true)],
    [MI_INT64]: [8, (o) => Number(view.getBigInt64(o, true))],
    [MI_UINT64]: [8, (o) => Number(view.getBigUint64(o, true))],
  };
  const entry = readers[type];
  if (!entry) throw new Error(`unsupported numeric storage type ${type}`);
  const [width, read] = entry;
  if (size < width * count) throw new Error('numeric data shorter than dimensions imply');
  for (let i = 0; i < count; i++) out[i] = read(off + i * width);
  return out;
}
