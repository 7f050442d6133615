/**
 * Minimal FCT tensor decoder (little-endian).
 *
 * Layout: 4-byte magic "FCT1", 1-byte dtype code (0 f32, 1 f64, 2 u8),
 * 1-byte ndim (1..4), 2 zero bytes, ndim uint32 dims, row-major payload.
 */

export interface Tensor {
  dtype: "f32" | "f64" | "u8";
  shape: number[];
  data: Float32Array | Float64Array | Uint8Array;
}

export function decodeFct(buf: ArrayBuffer): Tensor {
  const view = new DataView(buf);
  if (buf.byteLength < 8) throw new Error("fct: truncated header");
  const magic = String.fromCharCode(view.getUint8(0), view.getUint8(1), view.getUint8(2), view.getUint8(3));
  if (magic !== "FCT1") throw new Error("fct: bad magic");
  const code = view.getUint8(4);
  const ndim = view.getUint8(5);
  if (view.getUint16(6, true) !== 0) throw new Error("fct: nonzero padding");
  if (ndim < 1 || ndim > 4) throw new Error(`fct: bad ndim ${ndim}`);
  const shape: number[] = [];
  let count = 1;
  for (let i = 0; i < ndim; i++) {
    const dim = view.getUint32(8 + 4 * i, true);
    if (dim < 1) throw new Error("fct: zero dimension");
    shape.push(dim);
    count *= dim;
  }
  const offset = 8 + 4 * ndim;
  const itemSize = code === 0 ? 4 : code === 1 ? 8 : code === 2 ? 1 : -1;
  if (itemSize < 0) throw new Error(`fct: unknown dtype code ${code}`);
  if (buf.byteLength !== offset + count * itemSize) {
    throw new Error(`fct: payload is ${buf.byteLength - offset} bytes, expected ${count * itemSize}`);
  }
  // copy so alignment never depends on the header size
  const payload = buf.slice(offset);
  if (code === 0) return { dtype: "f32", shape, data: new Float32Array(payload) };
  if (code === 1) return { dtype: "f64", shape, data: new Float64Array(payload) };
  return { dtype: "u8", shape, data: new Uint8Array(payload) };
}

export function base64ToBuffer(b64: string): ArrayBuffer {
  const bin = atob(b64);
  const bytes = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) bytes[i] = bin.charCodeAt(i);
  return bytes.buffer;
}
