/** Click/drag geometry: pixel rectangles on the displayed image converted to
 * the fractional coordinates the region endpoint expects. */

export interface PixelRect {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export const MIN_BOX_FRACTION = 0.05;

function clamp01(v: number): number {
  return Math.min(1, Math.max(0, v));
}

/** Convert a pixel rect to fractional [x0, y0, x1, y1] within [0, 1]^2.
 * Degenerate clicks (zero width or height) grow to a centered box that is
 * MIN_BOX_FRACTION of the image on each side. */
export function toFractionalRect(
  rect: PixelRect,
  width: number,
  height: number,
): [number, number, number, number] {
  if (width <= 0 || height <= 0) throw new Error("image has no size");
  let x0 = clamp01(Math.min(rect.x0, rect.x1) / width);
  let x1 = clamp01(Math.max(rect.x0, rect.x1) / width);
  let y0 = clamp01(Math.min(rect.y0, rect.y1) / height);
  let y1 = clamp01(Math.max(rect.y0, rect.y1) / height);
  [x0, x1] = growIfDegenerate(x0, x1);
  [y0, y1] = growIfDegenerate(y0, y1);
  return [x0, y0, x1, y1];
}

function growIfDegenerate(lo: number, hi: number): [number, number] {
  if (hi - lo >= MIN_BOX_FRACTION) return [lo, hi];
  const center = (lo + hi) / 2;
  const half = MIN_BOX_FRACTION / 2;
  let a = center - half;
  let b = center + half;
  if (a < 0) {
    b -= a;
    a = 0;
  }
  if (b > 1) {
    a -= b - 1;
    b = 1;
  }
  return [clamp01(a), clamp01(b)];
}
