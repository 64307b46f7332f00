/**
 * Canonical binary event file (.evs), little-endian:
 *   magic "EVS1", u16 width, u16 height, u64 count,
 *   then per event: u64 t_us, u16 x, u16 y, u8 polarity (0 = -1, 1 = +1).
 */

export interface EventArrays {
  width: number;
  height: number;
  t: BigInt64Array; // microseconds, non-decreasing
  x: Uint16Array;
  y: Uint16Array;
  p: Int8Array; // +1 / -1
}

const MAGIC = 0x31535645; // "EVS1" read as LE u32
const HEADER_BYTES = 16;
const RECORD_BYTES = 13;

export function encodeEvents(ev: EventArrays): Uint8Array {
  const n = ev.t.length;
  if (ev.x.length !== n || ev.y.length !== n || ev.p.length !== n) {
    throw new Error('event arrays must share one length');
  }
  const buf = new Uint8Array(HEADER_BYTES + n * RECORD_BYTES);
  const view = new DataView(buf.buffer);
  view.setUint32(0, MAGIC, true);
  view.setUint16(4, ev.width, true);
  view.setUint16(6, ev.height, true);
  view.setBigUint64(8, BigInt(n), true);
  let off = HEADER_BYTES;
  let prev = -1n;
  for (let i = 0; i < n; i++) {
    const t = ev.t[i];
    if (t < 0n || t < prev) {
      throw new Error(`non-monotone timestamp at record ${i}`);
    }
    prev = t;
    view.setBigUint64(off, BigInt.asUintN(64, t), true);
    view.setUint16(off + 8, ev.x[i], true);
    view.setUint16(off + 10, ev.y[i], true);
    view.setUint8(off + 12, ev.p[i] > 0 ? 1 : 0);
    off += RECORD_BYTES;
  }
  return buf;
}

export function decodeEvents(buf: Uint8Array): EventArrays {
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  if (buf.length < HEADER_BYTES || view.getUint32(0, true) !== MAGIC) {
    throw new Error('bad magic: not an EVS1 file');
  }
  const width = view.getUint16(4, true);
  const height = view.getUint16(6, true);
  const n = Number(view.getBigUint64(8, true));
  if (buf.length !== HEADER_BYTES + n * RECORD_BYTES) {
    throw new Error('truncated or oversized event file');
  }
  const out: EventArrays = {
    width,
    height,
    t: new BigInt64Array(n),
    x: new Uint16Array(n),
    y: new Uint16Array(n),
    p: new Int8Array(n),
  };
  let off = HEADER_BYTES;
  for (let i = 0; i < n; i++) {
    out.t[i] = BigInt.asIntN(64, view.getBigUint64(off, true));
    out.x[i] = view.getUint16(off + 8, true);
    out.y[i] = view.getUint16(off + 10, true);
    out.p[i] = view.getUint8(off + 12) > 0 ? 1 : -1;
    off += RECORD_BYTES;
  }
  return out;
}
