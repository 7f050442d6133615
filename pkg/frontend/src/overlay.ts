/**
 * Pure overlay composition on RGBA buffers, testable without a canvas.
 *
 * Per pixel with normalized saliency s and slider opacity o:
 *     alpha = o * s
 *     out   = floor(image * (1 - alpha) + colormap(s) * alpha + 0.5)
 * so zero saliency leaves the image untouched at any opacity and a
 * saturated map at opacity 1 shows pure colormap pixels.
 */

import { colorFor } from "./colormap.js";

/** Bilinear resample with half-pixel centers, clamped to the source edge. */
export function bilinearResize(
  src: Float32Array, srcW: number, srcH: number, dstW: number, dstH: number,
): Float32Array {
  const out = new Float32Array(dstW * dstH);
  const scaleX = srcW / dstW;
  const scaleY = srcH / dstH;
  for (let y = 0; y < dstH; y++) {
    let sy = (y + 0.5) * scaleY - 0.5;
    sy = Math.min(Math.max(sy, 0), srcH - 1);
    const y0 = Math.floor(sy);
    const y1 = Math.min(y0 + 1, srcH - 1);
    const fy = sy - y0;
    for (let x = 0; x < dstW; x++) {
      let sx = (x + 0.5) * scaleX - 0.5;
      sx = Math.min(Math.max(sx, 0), srcW - 1);
      const x0 = Math.floor(sx);
      const x1 = Math.min(x0 + 1, srcW - 1);
      const fx = sx - x0;
      const top = src[y0 * srcW + x0]! * (1 - fx) + src[y0 * srcW + x1]! * fx;
      const bot = src[y1 * srcW + x0]! * (1 - fx) + src[y1 * srcW + x1]! * fx;
      out[y * dstW + x] = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

export function renderOverlay(
  image: Uint8ClampedArray, width: number, height: number,
  saliency: Float32Array, salWidth: number, salHeight: number,
  opacity: number,
): Uint8ClampedArray {
  if (image.length !== width * height * 4) throw new Error("image buffer size mismatch");
  if (saliency.length !== salWidth * salHeight) throw new Error("saliency buffer size mismatch");
  if (opacity < 0 || opacity > 1) throw new Error("opacity must lie in [0, 1]");
  const grid = (salWidth === width && salHeight === height)
    ? saliency
    : bilinearResize(saliency, salWidth, salHeight, width, height);
  const out = new Uint8ClampedArray(image.length);
  for (let p = 0; p < width * height; p++) {
    const s = Math.min(Math.max(grid[p]!, 0), 1);
    const alpha = opacity * s;
    const [r, g, b] = colorFor(s);
    out[4 * p] = Math.floor(image[4 * p]! * (1 - alpha) + r * alpha + 0.5);
    out[4 * p + 1] = Math.floor(image[4 * p + 1]! * (1 - alpha) + g * alpha + 0.5);
    out[4 * p + 2] = Math.floor(image[4 * p + 2]! * (1 - alpha) + b * alpha + 0.5);
    out[4 * p + 3] = 255;
  }
  return out;
}
