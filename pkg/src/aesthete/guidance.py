"""Heuristics layered on evaluation reports: pop-up prompt selection, the
attended-area and chrominance rules, the display-score transform, detailed
weight-sorted feedback, and region-click suggestions.

All message text comes from the template catalog (templates.json); nothing
here composes free-form strings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .model import ATTRIBUTE_NAMES


def load_templates():
    with resources.files(__package__).joinpath("templates.json").open(encoding="utf-8") as fh:
        return json.load(fh)


_TEMPLATES = load_templates()


@dataclass
class HeuristicConfig:
    area_high: float = 0.5
    area_low: float = 1.0 / 9.0
    mass_coverage: float = 0.9
    chroma_low: float = 0.2
    chroma_high: float = 0.9
    poll_interval: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.area_low < self.area_high < 1.0:
            raise ValueError("need 0 < area_low < area_high < 1")
        if not 0.0 <= self.chroma_low < self.chroma_high <= 1.0:
            raise ValueError("need 0 <= chroma_low < chroma_high <= 1")


@dataclass
class GuidanceMessage:
    attribute: str
    severity: str  # "prompt" | "suggestion"
    template_id: str
    text: str
    region: tuple[float, float, float, float] | None = None

    def to_dict(self):
        return {
            "attribute": self.attribute,
            "severity": self.severity,
            "template_id": self.template_id,
            "text": self.text,
            "region": list(self.region) if self.region else None,
        }


def to_display_score(s):
    """Affine map of a [-1, 1] score onto [1, 100]: -1 -> 1, 0 -> 50.5, 1 -> 100."""
    if not -1.0 <= s <= 1.0:
        raise ValueError(f"score {s} outside [-1, 1]")
    return 1.0 + 99.0 * (s + 1.0) / 2.0


def _canonical_rank(name):
    return ATTRIBUTE_NAMES.index(name)


def select_prompt_attribute(report):
    """The largest-weight attribute scoring below the overall score, or None.

    Weight ties fall back to the canonical attribute order.
    """
    candidates = [a for a in report.attributes if a.score < report.overall]
    if not candidates:
        return None
    return min(candidates, key=lambda a: (-a.weight, _canonical_rank(a.name))).name


def attended_area_fraction(mask, coverage):
    """Smallest fraction of cells (by descending attention) holding ``coverage`` of the mass.

    Scale-invariant: the mask is normalized by its own total first.
    """
    if not 0.0 < coverage < 1.0:
        raise ValueError("coverage must be in (0, 1)")
    flat = np.sort(np.asarray(mask, dtype=np.float64).reshape(-1))[::-1]
    total = flat.sum()
    if total <= 0:
        raise ValueError("mask has no mass")
    cum = np.cumsum(flat / total)
    k = int(np.searchsorted(cum, coverage - 1e-12)) + 1
    return k / flat.size


def rgb_to_hsv(r, g, b):
    """Standard conversion; h in [0, 360), s and v in [0, 1]. Accepts arrays."""
    r, g, b = (np.asarray(x, dtype=np.float64) for x in (r, g, b))
    v = np.maximum(np.maximum(r, g), b)
    c = v - np.minimum(np.minimum(r, g), b)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        hr = np.where(c > 0, ((g - b) / np.where(c > 0, c, 1.0)) % 6.0, 0.0)
        hg = np.where(c > 0, (b - r) / np.where(c > 0, c, 1.0) + 2.0, 0.0)
        hb = np.where(c > 0, (r - g) / np.where(c > 0, c, 1.0) + 4.0, 0.0)
    h = 60.0 * np.where(v == r, hr, np.where(v == g, hg, hb))
    h = h % 360.0
    if h.ndim == 0:
        return float(h), float(s), float(v)
    return h, s, v


def _upsample_nearest(mask, out_h, out_w):
    mask = np.asarray(mask, dtype=np.float64)
    mh, mw = mask.shape
    rows = (np.arange(out_h) * mh // out_h).clip(0, mh - 1)
    cols = (np.arange(out_w) * mw // out_w).clip(0, mw - 1)
    return mask[np.ix_(rows, cols)]


def mean_chrominance(image, mask):
    """Attention-weighted mean HSV saturation over the image.

    The mask is upsampled to image resolution with nearest-cell lookup and
    renormalized, so each cell's mass spreads evenly over its pixels.
    """
    image = np.asarray(image, dtype=np.float64)
    _, sat, _ = rgb_to_hsv(image[..., 0], image[..., 1], image[..., 2])
    w = _upsample_nearest(np.asarray(mask), image.shape[0], image.shape[1])
    total = w.sum()
    if total <= 0:
        raise ValueError("mask has no mass")
    return float((w * sat).sum() / total)


def _mask_hotspot_rect(mask):
    """Fractional bounding box of the above-uniform-attention cells."""
    mask = np.asarray(mask, dtype=np.float64)
    h, w = mask.shape
    hot = mask > (mask.sum() / mask.size)
    if not hot.any():
        return (0.0, 0.0, 1.0, 1.0)
    rows, cols = np.nonzero(hot)
    return (cols.min() / w, rows.min() / h, (cols.max() + 1) / w, (rows.max() + 1) / h)


def build_prompt(report, image, config=None):
    """Pop-up prompt for the most pressing attribute, or None when no rule fires.

    object: attended-area rule; color_vividness: chrominance rule; every other
    attribute fires its low-score template when the score is negative.
    """
    config = config or HeuristicConfig()
    name = select_prompt_attribute(report)
    if name is None:
        return None
    attr = report.attribute(name)
    catalog = _TEMPLATES["attributes"][name]
    region = _mask_hotspot_rect(attr.mask)

    if name == "object":
        area = attended_area_fraction(attr.mask, config.mass_coverage)
        if area > config.area_high:
            return GuidanceMessage(name, "prompt", f"{name}.high", catalog["high_text"], region)
        if area < config.area_low:
            return GuidanceMessage(name, "prompt", f"{name}.low", catalog["low_text"], region)
        return None
    if name == "color_vividness":
        chroma = mean_chrominance(image, attr.mask)
        if chroma < config.chroma_low:
            return GuidanceMessage(name, "prompt", f"{name}.low", catalog["low_text"], region)
        if chroma > config.chroma_high:
            return GuidanceMessage(name, "prompt", f"{name}.high", catalog["high_text"], region)
        return None
    if attr.score < _TEMPLATES["attributes"][name]["trigger"]["low"]:
        return GuidanceMessage(name, "prompt", f"{name}.low", catalog["low_text"], region)
    return None


def detailed_report(report):
    """Weight-sorted rows of (attribute, display score, weight, heatmap ref, suggestion)."""
    entries = sorted(report.attributes, key=lambda a: (-a.weight, _canonical_rank(a.name)))
    rows = []
    for a in entries:
        catalog = _TEMPLATES["attributes"][a.name]
        text = catalog["low_text"] if a.score < 0 else catalog["high_text"]
        rows.append(
            {
                "attribute": a.name,
                "display_score": to_display_score(a.score),
                "weight": a.weight,
                "heatmap": a.name,
                "suggestion": text,
            }
        )
    return rows


def region_attention_means(report, rect):
    """Per-attribute mean attention value inside a fractional rectangle.

    Cell values are treated as piecewise-constant over the unit square, so the
    mean is the overlap-area-weighted average of covered cell values.
    """
    x0, y0, x1, y1 = rect
    if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
        raise ValueError(f"invalid region rectangle {rect}")
    h, w = report.attributes[0].mask.shape
    edges_x = np.arange(w + 1) / w
    edges_y = np.arange(h + 1) / h
    over_x = np.clip(np.minimum(edges_x[1:], x1) - np.maximum(edges_x[:-1], x0), 0.0, None)
    over_y = np.clip(np.minimum(edges_y[1:], y1) - np.maximum(edges_y[:-1], y0), 0.0, None)
    overlap = np.outer(over_y, over_x)
    area = overlap.sum()
    return {a.name: float((a.mask * overlap).sum() / area) for a in report.attributes}


def regional_suggestion(report, rect):
    """Suggestion for a clicked region, per the majority rule.

    Attributes whose region-mean attention exceeds the uniform baseline are
    'attending here'; if most of them score below the overall score the region
    is flagged for removal, otherwise for keeping; with none attending, a
    neutral message is returned.
    """
    means = region_attention_means(report, rect)
    h, w = report.attributes[0].mask.shape
    baseline = 1.0 / (h * w)
    selected = [a for a in report.attributes if means[a.name] > baseline]
    if not selected:
        return GuidanceMessage("", "suggestion", "region.neutral", _TEMPLATES["region"]["neutral"], tuple(rect))
    below = [a for a in selected if a.score < report.overall]
    if len(below) > len(selected) - len(below):
        top = min(below, key=lambda a: (-means[a.name], _canonical_rank(a.name)))
        text = _TEMPLATES["region"]["remove"].format(attribute=top.name.replace("_", " "))
        return GuidanceMessage(top.name, "suggestion", "region.remove", text, tuple(rect))
    above = [a for a in selected if a.score >= report.overall]
    top = min(above or selected, key=lambda a: (-means[a.name], _canonical_rank(a.name)))
    text = _TEMPLATES["region"]["keep"].format(attribute=top.name.replace("_", " "))
    return GuidanceMessage(top.name, "suggestion", "region.keep", text, tuple(rect))
