/**
 * The shipped 256-entry colormap: piecewise-linear between five anchors,
 * channels rounded as floor(v + 0.5). Must stay byte-identical to the
 * server's table (same anchors, same rounding) so client-side re-blending
 * matches server overlays exactly.
 */

const ANCHORS: Array<[number, [number, number, number]]> = [
  [0, [13, 8, 135]],
  [64, [126, 3, 168]],
  [128, [204, 71, 120]],
  [192, [248, 149, 64]],
  [255, [240, 249, 33]],
];

function buildTable(): Uint8Array {
  const table = new Uint8Array(256 * 3);
  for (let seg = 0; seg + 1 < ANCHORS.length; seg++) {
    const [p0, c0] = ANCHORS[seg]!;
    const [p1, c1] = ANCHORS[seg + 1]!;
    for (let i = p0; i <= p1; i++) {
      const t = (i - p0) / (p1 - p0);
      for (let ch = 0; ch < 3; ch++) {
        table[3 * i + ch] = Math.floor(c0[ch]! + t * (c1[ch]! - c0[ch]!) + 0.5);
      }
    }
  }
  return table;
}

export const COLORMAP: Uint8Array = buildTable();

/** RGB triple for a normalized saliency value in [0, 1]. */
export function colorFor(value: number): [number, number, number] {
  const idx = Math.min(255, Math.max(0, Math.floor(value * 255 + 0.5)));
  return [COLORMAP[3 * idx]!, COLORMAP[3 * idx + 1]!, COLORMAP[3 * idx + 2]!];
}
