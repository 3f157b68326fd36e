/**
 * Minimal parser for the NumPy .npy serialization format (versions 1.0/2.0,
 * little-endian numeric dtypes, C order). Values are widened to float64;
 * integer arrays stay exact up to 2^53.
 */

export interface NpyArray {
  data: Float64Array;
  shape: number[];
}

const MAGIC = [0x93, 0x4e, 0x55, 0x4d, 0x50, 0x59]; // \x93NUMPY

function headerField(header: string, key: string): string {
  // the shape value is a tuple and may contain commas
  const pattern = key === "shape"
    ? `'${key}'\\s*:\\s*(\\([^)]*\\))`
    : `'${key}'\\s*:\\s*([^,}]+)`;
  const match = header.match(new RegExp(pattern));
  if (!match) throw new Error(`npy header missing '${key}': ${header}`);
  return match[1].trim();
}

export function parseNpy(bytes: Uint8Array): NpyArray {
  if (bytes.length < 10 || MAGIC.some((b, i) => bytes[i] !== b)) {
    throw new Error("not an npy file (bad magic)");
  }
  const major = bytes[6];
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  let headerLen: number;
  let offset: number;
  if (major === 1) {
    headerLen = view.getUint16(8, true);
    offset = 10;
  } else if (major === 2) {
    headerLen = view.getUint32(8, true);
    offset = 12;
  } else {
    throw new Error(`unsupported npy version ${major}`);
  }
  const header = new TextDecoder().decode(
    bytes.subarray(offset, offset + headerLen));
  const dataStart = offset + headerLen;

  const descr = headerField(header, "descr").replace(/['"]/g, "");
  if (headerField(header, "fortran_order") !== "False") {
    throw new Error("fortran-ordered npy arrays are not supported");
  }
  const shapeText = headerField(header, "shape");
  const shape = (shapeText.match(/\d+/g) ?? []).map(Number);
  const count = shape.reduce((a, b) => a * b, 1);

  const body = bytes.subarray(dataStart);
  const data = new Float64Array(count);
  const dv = new DataView(body.buffer, body.byteOffset, body.byteLength);
  const readers: Record<string, [(i: number) => number, number]> = {
    "<f8": [(i) => dv.getFloat64(8 * i, true), 8],
    "<f4": [(i) => dv.getFloat32(4 * i, true), 4],
    "<i8": [(i) => Number(dv.getBigInt64(8 * i, true)), 8],
    "<i4": [(i) => dv.getInt32(4 * i, true), 4],
    "<i2": [(i) => dv.getInt16(2 * i, true), 2],
    "|i1": [(i) => dv.getInt8(i), 1],
    "|u1": [(i) => dv.getUint8(i), 1],
  };
  const reader = readers[descr];
  if (!reader) throw new Error(`unsupported npy dtype ${descr}`);
  const [read, itemSize] = reader;
  if (body.byteLength < count * itemSize) {
    throw new Error(`npy data truncated: need ${count * itemSize} bytes, `
      + `have ${body.byteLength}`);
  }
  for (let i = 0; i < count; i++) data[i] = read(i);
  return { data, shape };
}
