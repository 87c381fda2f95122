/** Heatmap overlay rendering: grayscale attention PNG blended over the photo
 * with a fixed warm colormap and a user-controlled opacity. */

export interface Rgba {
  r: number;
  g: number;
  b: number;
  a: number;
}

/** Fixed colormap: black -> deep blue -> red -> yellow, alpha follows intensity. */
export function colormap(value: number, opacity: number): Rgba {
  const v = Math.min(1, Math.max(0, value));
  let r: number;
  let g: number;
  let b: number;
  if (v < 0.5) {
    const t = v / 0.5;
    r = t * 255;
    g = 0;
    b = 96 * (1 - t);
  } else {
    const t = (v - 0.5) / 0.5;
    r = 255;
    g = t * 220;
    b = 0;
  }
  return { r: Math.round(r), g: Math.round(g), b: Math.round(b), a: v * opacity };
}

/** Blend a heatmap intensity buffer (values in [0, 1]) into RGBA pixels. */
export function blendHeatmap(intens: Float32Array, opacity: number): Uint8ClampedArray {
  const out = new Uint8ClampedArray(intens.length * 4);
  for (let i = 0; i < intens.length; i++) {
    const c = colormap(intens[i], opacity);
    out[i * 4] = c.r;
    out[i * 4 + 1] = c.g;
    out[i * 4 + 2] = c.b;
    out[i * 4 + 3] = Math.round(c.a * 255);
  }
  return out;
}
