"""Procedural scene generator with closed-form ground-truth scores, plus
manifest I/O in a one-row-per-image CSV layout.

Scenes are a flat-colored background with a handful of simple shapes
(circle / rect / triangle), optional global blur, and an optional exact
mirror symmetry. Every attribute score is a fixed, documented function of
the scene parameters, so generated datasets come with an analytic oracle:

  object            1 - 4|area - 1/4| / (1/4), area = summed shape area fraction
  color_vividness   2 * mean shape saturation - 1 (background saturation if empty)
  rule_of_thirds    1 - 2 * d / d_max, d = primary-shape distance to nearest
                    thirds intersection, d_max = sqrt(2)/3 (corner distance)
  light             1 - 4|mean luminance - 1/2|, area-weighted Rec.601 luma
  symmetry          +1 when mirrored, else 1 - 12 * mean |image - hflip(image)|
  motion_blur       1 - 2 * blur / BLUR_MAX (sharp is best)
  depth_of_field    1 - 4|blur / BLUR_MAX - 1/2| (moderate blur is best)
  repetition        -1 + (repeats - 1) / 2
  content           -1 + (distinct shape kinds) * 2/3
  elements_balance  1 - 4 * |area-weighted shape centroid - center|
  color_harmony     1 - (mean pairwise circular hue distance) / 90

all clamped to [-1, 1]. The overall score is a fixed convex mixture of the
attribute scores whose weights depend on the background hue band (three
bands of 120 degrees), giving a recoverable input-dependent weighting.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .autodiff import default_rng
from .model import ATTRIBUTE_NAMES

BLUR_MAX = 0.05  # blur radius as a fraction of image width
MANIFEST_HEADER = ["path", "overall"] + list(ATTRIBUTE_NAMES)

SHAPE_KINDS = ("circle", "rect", "triangle")

# Overall-score mixtures keyed by background hue band (0-120, 120-240, 240-360).
# Rows follow ATTRIBUTE_NAMES order and each sums to 1.
HUE_BAND_WEIGHTS = np.array(
    [
        [0.04, 0.04, 0.05, 0.04, 0.10, 0.04, 0.30, 0.04, 0.15, 0.05, 0.15],
        [0.22, 0.06, 0.08, 0.04, 0.06, 0.04, 0.06, 0.18, 0.04, 0.18, 0.04],
        [0.04, 0.20, 0.06, 0.14, 0.22, 0.12, 0.06, 0.04, 0.04, 0.04, 0.04],
    ],
    dtype=np.float64,
)

THIRDS_POINTS = np.array([[1 / 3, 1 / 3], [1 / 3, 2 / 3], [2 / 3, 1 / 3], [2 / 3, 2 / 3]])
THIRDS_DMAX = math.sqrt(2.0) / 3.0


@dataclass
class Shape:
    kind: str
    cx: float
    cy: float
    size: float  # sqrt of the shape's area fraction
    hue: float
    sat: float
    val: float

    def validate(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        for name in ("cx", "cy", "size"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"shape {name}={v} outside [0, 1]")

    @property
    def area(self):
        return self.size * self.size


@dataclass
class SceneSpec:
    bg_hue: float
    bg_sat: float
    bg_val: float
    shapes: list[Shape] = field(default_factory=list)
    blur: float = 0.0
    mirror: bool = False
    repetition: int = 1
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0.0 <= self.blur <= BLUR_MAX:
            raise ValueError(f"blur {self.blur} outside [0, {BLUR_MAX}]")
        for s in self.shapes:
            s.validate()

    def to_dict(self):
        return {
            "bg": [self.bg_hue, self.bg_sat, self.bg_val],
            "shapes": [[s.kind, s.cx, s.cy, s.size, s.hue, s.sat, s.val] for s in self.shapes],
            "blur": self.blur,
            "mirror": self.mirror,
            "repetition": self.repetition,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            bg_hue=d["bg"][0],
            bg_sat=d["bg"][1],
            bg_val=d["bg"][2],
            shapes=[Shape(*row) for row in d["shapes"]],
            blur=d["blur"],
            mirror=d["mirror"],
            repetition=d["repetition"],
            seed=d.get("seed", 0),
        )


@dataclass
class ImageSample:
    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    y_overall: float
    y_attributes: np.ndarray  # (11,) float64 in [-1, 1]
    path: str | None = None
    spec: SceneSpec | None = None


def hsv_to_rgb(h, s, v):
    """Scalar HSV (h in degrees) to an RGB triple in [0, 1]."""
    h = (h % 360.0) / 60.0
    i = int(h) % 6
    f = h - int(h)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    return [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]


def _luma(h, s, v):
    r, g, b = hsv_to_rgb(h, s, v)
    return 0.299 * r + 0.587 * g + 0.114 * b


# ---------------------------------------------------------------------------
# generation


def generate_scene(rng, max_shapes=6):
    """Draw one SceneSpec; the distribution spans small/large areas, the full
    saturation range, and centroid positions across the frame."""
    bg_hue = float(rng.uniform(0.0, 360.0))
    bg_sat = float(rng.uniform(0.0, 0.6))
    bg_val = float(rng.uniform(0.2, 1.0))

    repeats = int(rng.integers(1, max_shapes + 1))
    base_kind = SHAPE_KINDS[int(rng.integers(0, 3))]
    total_area = float(rng.uniform(0.02, 0.65))
    per_area = total_area / repeats
    size = min(math.sqrt(per_area), 0.95)

    shape_hue = float(rng.uniform(0.0, 360.0))
    shapes = []
    for _ in range(repeats):
        margin = min(size * 0.75, 0.45)
        shapes.append(
            Shape(
                kind=base_kind,
                cx=float(rng.uniform(margin, 1.0 - margin)),
                cy=float(rng.uniform(margin, 1.0 - margin)),
                size=size,
                hue=(shape_hue + float(rng.uniform(-20.0, 20.0))) % 360.0,
                sat=float(rng.uniform(0.0, 1.0)),
                val=float(rng.uniform(0.3, 1.0)),
            )
        )
    if rng.random() < 0.35:
        other = SHAPE_KINDS[(SHAPE_KINDS.index(base_kind) + 1 + int(rng.integers(0, 2))) % 3]
        extra_size = float(rng.uniform(0.05, 0.25))
        margin = min(extra_size * 0.75, 0.45)
        shapes.append(
            Shape(
                kind=other,
                cx=float(rng.uniform(margin, 1.0 - margin)),
                cy=float(rng.uniform(margin, 1.0 - margin)),
                size=extra_size,
                hue=float(rng.uniform(0.0, 360.0)),
                sat=float(rng.uniform(0.0, 1.0)),
                val=float(rng.uniform(0.3, 1.0)),
            )
        )

    mirror = bool(rng.random() < 0.2)
    if mirror:
        # mirror-symmetric scene: center each shape or add its reflected twin
        sym = []
        for s in shapes:
            if abs(s.cx - 0.5) < 0.08:
                sym.append(Shape(s.kind, 0.5, s.cy, s.size, s.hue, s.sat, s.val))
            else:
                sym.append(s)
                sym.append(Shape(s.kind, 1.0 - s.cx, s.cy, s.size, s.hue, s.sat, s.val))
        shapes = sym

    blur = 0.0 if rng.random() < 0.5 else float(rng.uniform(0.0, BLUR_MAX))
    repetition = sum(1 for s in shapes if s.kind == base_kind)
    return SceneSpec(
        bg_hue=bg_hue,
        bg_sat=bg_sat,
        bg_val=bg_val,
        shapes=shapes,
        blur=blur,
        mirror=mirror,
        repetition=repetition,
        seed=int(rng.integers(0, 2**31 - 1)),
    )


# ---------------------------------------------------------------------------
# rendering


def _coverage(shape, size_px, supersample=4):
    """Antialiased coverage mask in [0, 1] for one shape."""
    n = size_px * supersample
    coords = (np.arange(n) + 0.5) / n
    xg, yg = np.meshgrid(coords, coords)
    if shape.kind == "circle":
        r = shape.size / math.sqrt(math.pi)
        inside = (xg - shape.cx) ** 2 + (yg - shape.cy) ** 2 <= r * r
    elif shape.kind == "rect":
        half = shape.size / 2.0
        inside = (np.abs(xg - shape.cx) <= half) & (np.abs(yg - shape.cy) <= half)
    else:  # triangle with area size^2: base b, height h, b*h/2 = size^2
        b = shape.size * math.sqrt(2.0)
        hgt = shape.size * math.sqrt(2.0)
        x0, y0 = shape.cx, shape.cy - hgt / 2.0  # apex
        x1, y1 = shape.cx - b / 2.0, shape.cy + hgt / 2.0
        x2, y2 = shape.cx + b / 2.0, shape.cy + hgt / 2.0

        def edge(ax, ay, bx, by):
            return (bx - ax) * (yg - ay) - (by - ay) * (xg - ax)

        e0, e1, e2 = edge(x0, y0, x1, y1), edge(x1, y1, x2, y2), edge(x2, y2, x0, y0)
        inside = ((e0 >= 0) & (e1 >= 0) & (e2 >= 0)) | ((e0 <= 0) & (e1 <= 0) & (e2 <= 0))
    cov = inside.astype(np.float32).reshape(size_px, supersample, size_px, supersample)
    return cov.mean(axis=(1, 3))


def _gaussian_blur(img, sigma_px):
    """Separable Gaussian blur with edge-replicate padding."""
    if sigma_px <= 0:
        return img
    radius = max(1, int(math.ceil(3.0 * sigma_px)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (t / sigma_px) ** 2)
    kernel /= kernel.sum()
    out = img.astype(np.float64)
    for axis in (0, 1):
        moved = np.moveaxis(out, axis, 0)
        padded = np.concatenate([np.repeat(moved[:1], radius, axis=0), moved, np.repeat(moved[-1:], radius, axis=0)], axis=0)
        win = np.lib.stride_tricks.sliding_window_view(padded, len(kernel), axis=0)
        moved[:] = win @ kernel
    return out.astype(np.float32)


def render_scene(spec, size=64):
    """Deterministic rasterization of a SceneSpec to a float32 image in [0, 1]."""
    img = np.empty((size, size, 3), dtype=np.float32)
    img[:] = np.asarray(hsv_to_rgb(spec.bg_hue, spec.bg_sat, spec.bg_val), dtype=np.float32)
    for shape in spec.shapes:
        cov = _coverage(shape, size)[:, :, None]
        color = np.asarray(hsv_to_rgb(shape.hue, shape.sat, shape.val), dtype=np.float32)
        img = img * (1.0 - cov) + color * cov
    if spec.blur > 0:
        img = _gaussian_blur(img, spec.blur * size)
    if spec.mirror:
        half = size // 2
        img[:, size - half :] = img[:, :half][:, ::-1]
    return np.clip(img, 0.0, 1.0)


def object_bounding_box(shape):
    """Fractional (x0, y0, x1, y1) box enclosing one shape."""
    if shape.kind == "circle":
        ext = 2.0 * shape.size / math.sqrt(math.pi)
    elif shape.kind == "rect":
        ext = shape.size
    else:
        ext = shape.size * math.sqrt(2.0)
    half = ext / 2.0
    return (
        max(0.0, shape.cx - half),
        max(0.0, shape.cy - half),
        min(1.0, shape.cx + half),
        min(1.0, shape.cy + half),
    )


# ---------------------------------------------------------------------------
# oracle


def _clamp(x):
    return float(min(1.0, max(-1.0, x)))


def _circular_distance(h1, h2):
    d = abs(h1 - h2) % 360.0
    return min(d, 360.0 - d)


def oracle_scores(spec):
    """Closed-form ground truth (overall, 11 attribute scores), all in [-1, 1]."""
    shapes = spec.shapes
    areas = np.array([s.area for s in shapes], dtype=np.float64)
    area_total = float(min(1.0, areas.sum())) if len(shapes) else 0.0

    scores = {}
    scores["object"] = _clamp(1.0 - 4.0 * abs(area_total - 0.25) / 0.25)

    mean_sat = float(np.mean([s.sat for s in shapes])) if shapes else spec.bg_sat
    scores["color_vividness"] = _clamp(2.0 * mean_sat - 1.0)

    if shapes:
        primary = shapes[int(np.argmax(areas))]
        d = float(np.min(np.hypot(THIRDS_POINTS[:, 0] - primary.cx, THIRDS_POINTS[:, 1] - primary.cy)))
        scores["rule_of_thirds"] = _clamp(1.0 - 2.0 * d / THIRDS_DMAX)
    else:
        scores["rule_of_thirds"] = 0.0

    bg_l = _luma(spec.bg_hue, spec.bg_sat, spec.bg_val)
    if shapes:
        shape_l = np.array([_luma(s.hue, s.sat, s.val) for s in shapes])
        w = areas * (area_total / areas.sum()) if areas.sum() > 0 else areas
        mean_l = (1.0 - area_total) * bg_l + float((w * shape_l).sum())
    else:
        mean_l = bg_l
    scores["light"] = _clamp(1.0 - 4.0 * abs(mean_l - 0.5))

    if spec.mirror:
        scores["symmetry"] = 1.0
    else:
        img = render_scene(spec, 64)
        diff = float(np.mean(np.abs(img - img[:, ::-1])))
        scores["symmetry"] = _clamp(1.0 - 12.0 * diff)

    b = spec.blur / BLUR_MAX
    scores["motion_blur"] = _clamp(1.0 - 2.0 * b)
    scores["depth_of_field"] = _clamp(1.0 - 4.0 * abs(b - 0.5))

    scores["repetition"] = _clamp(-1.0 + (spec.repetition - 1) * 0.5)

    kinds = len({s.kind for s in shapes})
    scores["content"] = _clamp(-1.0 + kinds * (2.0 / 3.0))

    if shapes and areas.sum() > 0:
        cx = float((areas * [s.cx for s in shapes]).sum() / areas.sum())
        cy = float((areas * [s.cy for s in shapes]).sum() / areas.sum())
        dev = math.hypot(cx - 0.5, cy - 0.5)
        scores["elements_balance"] = _clamp(1.0 - 4.0 * dev)
    else:
        scores["elements_balance"] = 1.0

    hues = [spec.bg_hue] + [s.hue for s in shapes]
    if len(hues) > 1:
        dists = [_circular_distance(hues[i], hues[j]) for i in range(len(hues)) for j in range(i + 1, len(hues))]
        scores["color_harmony"] = _clamp(1.0 - float(np.mean(dists)) / 90.0)
    else:
        scores["color_harmony"] = 1.0

    vec = np.array([scores[name] for name in ATTRIBUTE_NAMES], dtype=np.float64)
    band = int((spec.bg_hue % 360.0) // 120.0)
    overall = _clamp(float(HUE_BAND_WEIGHTS[band] @ vec))
    return overall, vec


def oracle_mix_weights(spec):
    """The fixed convex mixture the oracle uses for this scene's hue band."""
    return HUE_BAND_WEIGHTS[int((spec.bg_hue % 360.0) // 120.0)].copy()


# ---------------------------------------------------------------------------
# dataset I/O


def sample_from_spec(spec, size=64):
    overall, attrs = oracle_scores(spec)
    return ImageSample(image=render_scene(spec, size), y_overall=overall, y_attributes=attrs, spec=spec)


def generate_dataset(n, seed, size=64):
    """n rendered-and-labeled samples; sample i uses its own (seed, i) stream."""
    samples = []
    for i in range(n):
        spec = generate_scene(default_rng([seed, i]))
        samples.append(sample_from_spec(spec, size))
    return samples


def write_dataset(out_dir, n, seed, size=64):
    """Render a dataset to PNGs plus manifest.csv (and a specs.jsonl sidecar)."""
    os.makedirs(out_dir, exist_ok=True)
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, "manifest.csv")
    specs_path = os.path.join(out_dir, "specs.jsonl")
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as mf, open(specs_path, "w", encoding="utf-8") as sf:
        mf.write(",".join(MANIFEST_HEADER) + "\n")
        for i in range(n):
            spec = generate_scene(default_rng([seed, i]))
            image = render_scene(spec, size)
            overall, attrs = oracle_scores(spec)
            rel = f"images/img_{i:05d}.png"
            Image.fromarray((image * 255.0 + 0.5).astype(np.uint8)).save(os.path.join(out_dir, rel))
            row = [rel, f"{overall:.6f}"] + [f"{v:.6f}" for v in attrs]
            mf.write(",".join(row) + "\n")
            sf.write(json.dumps(spec.to_dict(), sort_keys=True) + "\n")
    return manifest_path


def _load_image(path, image_size):
    img = Image.open(path).convert("RGB")
    if image_size is not None and img.size != (image_size, image_size):
        img = img.resize((image_size, image_size), Image.BILINEAR)
    return np.asarray(img, dtype=np.float32) / 255.0


def load_manifest(path, image_size=None):
    """Read manifest rows into ImageSamples; images are resized (bilinear) and
    normalized to [0, 1]; any out-of-range score is rejected with its row number."""
    base = os.path.dirname(os.path.abspath(path))
    samples = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise ValueError(f"manifest header mismatch: expected {','.join(MANIFEST_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(MANIFEST_HEADER):
                raise ValueError(f"manifest row {line_no}: expected {len(MANIFEST_HEADER)} fields, got {len(row)}")
            try:
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ValueError(f"manifest row {line_no}: unparseable score ({exc})") from exc
            for v in values:
                if not -1.0 <= v <= 1.0:
                    raise ValueError(f"manifest row {line_no}: score {v} outside [-1, 1]")
            img_path = row[0] if os.path.isabs(row[0]) else os.path.join(base, row[0])
            if not os.path.exists(img_path):
                raise FileNotFoundError(f"manifest row {line_no}: missing image {row[0]}")
            samples.append(
                ImageSample(
                    image=_load_image(img_path, image_size),
                    y_overall=values[0],
                    y_attributes=np.array(values[1:], dtype=np.float64),
                    path=img_path,
                )
            )
    specs_path = os.path.join(base, "specs.jsonl")
    if os.path.exists(specs_path):
        with open(specs_path, encoding="utf-8") as fh:
            for sample, line in zip(samples, fh):
                sample.spec = SceneSpec.from_dict(json.loads(line))
    return samples


def split(samples, fraction, seed):
    """Deterministic disjoint train/validation split; errors if a side is empty."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    idx = default_rng(seed).permutation(len(samples))
    n_train = int(round(fraction * len(samples)))
    if n_train == 0 or n_train == len(samples):
        raise ValueError(f"split of {len(samples)} at {fraction} leaves an empty side")
    train = [samples[i] for i in idx[:n_train]]
    val = [samples[i] for i in idx[n_train:]]
    return train, val
