/** Rendering helpers for field slices and fiber statuses.
 *
 * Pure data-to-pixels mapping; the field values themselves come from
 * the service untouched.
 */

import type { SliceDoc } from "./api.js";

/** Status code → display color, matching the report legend:
 * activated red, damaged green, non-activated white/grey. */
export const STATUS_COLORS: Record<number, string> = {
  0: "#9aa0a6", // unknown: mid grey
  1: "#d62728", // activated: red
  2: "#e8eaed", // non-activated: white-grey
  3: "#2ca02c", // damaged: green
  4: "#ff8f00", // failed: amber
};

export function statusColor(code: number): string {
  return STATUS_COLORS[code] ?? STATUS_COLORS[0]!;
}

/** Five-stop blue-to-hot ramp; dark low, bright high. */
const RAMP: [number, number, number][] = [
  [8, 12, 40],
  [46, 86, 166],
  [66, 160, 160],
  [222, 170, 60],
  [250, 245, 230],
];

/** Map one normalized value (0..1) through the color ramp. */
export function rampColor(t: number): [number, number, number] {
  const x = Math.min(1, Math.max(0, t)) * (RAMP.length - 1);
  const i = Math.min(RAMP.length - 2, Math.floor(x));
  const f = x - i;
  const lo = RAMP[i]!;
  const hi = RAMP[i + 1]!;
  return [
    Math.round(lo[0] + f * (hi[0] - lo[0])),
    Math.round(lo[1] + f * (hi[1] - lo[1])),
    Math.round(lo[2] + f * (hi[2] - lo[2])),
  ];
}

/** Robust display ceiling: the 99th percentile of the slice, so a hot
 * voxel next to a contact does not wash out the rest. */
export function displayMax(values: number[][]): number {
  const flat = values.flat().sort((a, b) => a - b);
  if (!flat.length) return 1;
  const v = flat[Math.min(flat.length - 1, Math.floor(flat.length * 0.99))]!;
  return v > 0 ? v : 1;
}

/** RGBA pixel buffer for a slice; row-major, `shape[0]` columns wide.
 *
 * The first slice axis runs along x (columns), the second along y
 * (rows), so the buffer is `shape[0] * shape[1] * 4` bytes.
 */
export function sliceToRgba(
  doc: SliceDoc,
  maxValue?: number,
): Uint8ClampedArray<ArrayBuffer> {
  const [nx, ny] = doc.shape;
  const vmax = maxValue ?? displayMax(doc.values);
  const out = new Uint8ClampedArray(nx * ny * 4);
  for (let j = 0; j < ny; j++) {
    for (let i = 0; i < nx; i++) {
      const v = doc.values[i]?.[j] ?? 0;
      const [r, g, b] = rampColor(v / vmax);
      const o = 4 * (j * nx + i);
      out[o] = r;
      out[o + 1] = g;
      out[o + 2] = b;
      out[o + 3] = 255;
    }
  }
  return out;
}

/** World coordinate (mm, in the slice's two axes) → pixel index. */
export function worldToPixel(
  doc: SliceDoc,
  u: number,
  v: number,
): [number, number] {
  return [
    Math.round((u - doc.origin_mm[0]) / doc.spacing_mm[0]),
    Math.round((v - doc.origin_mm[1]) / doc.spacing_mm[1]),
  ];
}

const AXIS_INDEX: Record<string, number> = { x: 0, y: 1, z: 2 };

/** Project a 3D fiber point onto the slice plane's pixel grid. */
export function projectPoint(
  doc: SliceDoc,
  point: [number, number, number],
): [number, number] {
  const u = point[AXIS_INDEX[doc.axes[0]]!]!;
  const v = point[AXIS_INDEX[doc.axes[1]]!]!;
  return worldToPixel(doc, u, v);
}
