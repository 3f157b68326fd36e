import { unzipSync } from "fflate";

import { NpyArray, parseNpy } from "./npy.js";

/** Unpack an .npz archive (a zip of .npy members) into named arrays. */
export function parseNpz(buffer: Uint8Array): Record<string, NpyArray> {
  let members: Record<string, Uint8Array>;
  try {
    members = unzipSync(buffer);
  } catch (e) {
    throw new Error(`unreadable npz archive: ${e}`);
  }
  const out: Record<string, NpyArray> = {};
  for (const [name, bytes] of Object.entries(members)) {
    out[name.replace(/\.npy$/i, "")] = parseNpy(bytes);
  }
  return out;
}
