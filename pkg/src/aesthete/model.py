"""The aesthetic network: feature extractor, per-attribute attention and score
heads, a no-attention posterior, and a hyper-network that mixes the eleven
attribute scores into the overall score.

Scores live in (-1, 1). The overall score is, by construction, the dot
product of the softmax mixing weights and the attribute score means, so the
decomposition identity holds exactly for every input.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

ATTRIBUTE_NAMES = (
    "elements_balance",
    "color_harmony",
    "content",
    "depth_of_field",
    "light",
    "motion_blur",
    "object",
    "repetition",
    "rule_of_thirds",
    "symmetry",
    "color_vividness",
)

CHECKPOINT_MAGIC = b"AESTHCK1"
CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    """Raised for unreadable, corrupt, or incompatible checkpoint files."""


@dataclass
class ModelConfig:
    """Network dimensions and the fixed attribute list.

    ``image_size`` is the square input edge (64 desk scale, 256 accepted).
    ``conv_channels`` lists the output channels of each halving conv block;
    a final stride-1 conv then maps to ``feature_channels``, so
    ``image_size / 2**len(conv_channels) == feature_size`` must hold.
    """

    image_size: int = 64
    feature_size: int = 8
    feature_channels: int = 64
    conv_channels: tuple[int, ...] = (8, 16, 32)
    attention_hidden: int = 256
    attr_hidden: int = 32
    hyper_hidden: tuple[int, ...] = (102, 19)
    sigma: float = 0.1
    attribute_names: tuple[str, ...] = ATTRIBUTE_NAMES
    init_seed: int = 0

    def __post_init__(self):
        self.conv_channels = tuple(self.conv_channels)
        self.hyper_hidden = tuple(self.hyper_hidden)
        self.attribute_names = tuple(self.attribute_names)
        if len(self.attribute_names) != 11:
            raise ValueError(f"attribute list must have exactly 11 entries, got {len(self.attribute_names)}")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if len(self.hyper_hidden) != 2:
            raise ValueError("hyper-network takes exactly two hidden sizes")
        if self.image_size <= 0 or self.feature_size <= 0:
            raise ValueError("image_size and feature_size must be positive")
        ratio = self.image_size / self.feature_size
        n_pool = int(round(math.log2(ratio))) if ratio >= 1 else -1
        if n_pool < 1 or 2**n_pool != ratio:
            raise ValueError(f"image_size/feature_size must be a power of two >= 2, got {ratio}")
        if len(self.conv_channels) != n_pool:
            raise ValueError(f"conv_channels needs {n_pool} entries for image {self.image_size} -> features {self.feature_size}")

    @property
    def k(self):
        return len(self.attribute_names)

    @property
    def feature_cells(self):
        return self.feature_size * self.feature_size

    def to_dict(self):
        return {
            "image_size": self.image_size,
            "feature_size": self.feature_size,
            "feature_channels": self.feature_channels,
            "conv_channels": list(self.conv_channels),
            "attention_hidden": self.attention_hidden,
            "attr_hidden": self.attr_hidden,
            "hyper_hidden": list(self.hyper_hidden),
            "sigma": self.sigma,
            "attribute_names": list(self.attribute_names),
            "init_seed": self.init_seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            image_size=d["image_size"],
            feature_size=d["feature_size"],
            feature_channels=d["feature_channels"],
            conv_channels=tuple(d["conv_channels"]),
            attention_hidden=d["attention_hidden"],
            attr_hidden=d["attr_hidden"],
            hyper_hidden=tuple(d["hyper_hidden"]),
            sigma=d["sigma"],
            attribute_names=tuple(d["attribute_names"]),
            init_seed=d.get("init_seed", 0),
        )


@dataclass
class AttributeEvaluation:
    name: str
    score: float
    weight: float
    mask: np.ndarray  # (feature_size, feature_size), nonnegative, sums to 1


@dataclass
class EvaluationReport:
    """Overall score plus per-attribute score/weight/mask, sorted by weight descending."""

    overall: float
    attributes: list[AttributeEvaluation] = field(default_factory=list)

    def attribute(self, name):
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(name)

    def to_dict(self, include_masks=False):
        out = {
            "overall": self.overall,
            "attributes": [
                {
                    "name": a.name,
                    "score": a.score,
                    "weight": a.weight,
                    **({"mask": a.mask.tolist()} if include_masks else {}),
                }
                for a in self.attributes
            ],
        }
        return out


def _he_init(rng, shape, fan_in):
    return (rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(np.float32)


class AestheticModel:
    """Trainable model; all parameters live in an ordered name -> Tensor map.

    Forward methods accept batched (B, H, W, 3) tensors and also single
    (H, W, 3) inputs, which are treated as a batch of one.
    """

    def __init__(self, config=None, rng=None):
        self.config = config or ModelConfig()
        rng = rng or ad.default_rng(self.config.init_seed)
        self.params: dict[str, Tensor] = {}
        self._build(rng)

    # -- parameter construction -------------------------------------------

    def _add_param(self, name, data):
        t = Tensor(data, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def _build(self, rng):
        cfg = self.config
        channels = [3, *cfg.conv_channels, cfg.feature_channels]
        for i in range(len(channels) - 1):
            c_in, c_out = channels[i], channels[i + 1]
            self._add_param(f"conv{i}_w", _he_init(rng, (3, 3, c_in, c_out), 9 * c_in))
            self._add_param(f"conv{i}_b", np.zeros(c_out, dtype=np.float32))

        # softmax-producing layers start near zero: masks and mix weights open
        # almost uniform, which keeps early gradients well-scaled
        f = cfg.feature_cells * cfg.feature_channels
        cells = cfg.feature_cells
        for i in range(cfg.k):
            self._add_param(f"att{i}_w1", _he_init(rng, (f, cfg.attention_hidden), f))
            self._add_param(f"att{i}_b1", np.zeros(cfg.attention_hidden, dtype=np.float32))
            self._add_param(f"att{i}_w2", (rng.standard_normal((cfg.attention_hidden, cells)) * 0.01).astype(np.float32))
            self._add_param(f"att{i}_b2", np.zeros(cells, dtype=np.float32))
            self._add_param(f"attr{i}_w1", _he_init(rng, (cfg.feature_channels, cfg.attr_hidden), cfg.feature_channels))
            self._add_param(f"attr{i}_b1", np.zeros(cfg.attr_hidden, dtype=np.float32))
            self._add_param(f"attr{i}_w2", (rng.standard_normal((cfg.attr_hidden, 1)) * 0.05).astype(np.float32))
            self._add_param(f"attr{i}_b2", np.zeros(1, dtype=np.float32))
            self._add_param(f"post{i}_w", (rng.standard_normal((cfg.feature_channels, 1)) * 0.05).astype(np.float32))
            self._add_param(f"post{i}_b", np.zeros(1, dtype=np.float32))

        h1, h2 = cfg.hyper_hidden
        self._add_param("hyper_w1", _he_init(rng, (f, h1), f))
        self._add_param("hyper_b1", np.zeros(h1, dtype=np.float32))
        self._add_param("hyper_w2", _he_init(rng, (h1, h2), h1))
        self._add_param("hyper_b2", np.zeros(h2, dtype=np.float32))
        self._add_param("hyper_w3", (rng.standard_normal((h2, cfg.k)) * 0.01).astype(np.float32))
        self._add_param("hyper_b3", np.zeros(cfg.k, dtype=np.float32))

    def parameters(self):
        return list(self.params.values())

    def parameter_groups(self):
        """Parameters split by role: extractor, attention, attribute heads, posterior, mixer."""
        groups = {"extractor": [], "attention": [], "attribute": [], "posterior": [], "mixer": []}
        for name, p in self.params.items():
            if name.startswith("conv"):
                groups["extractor"].append(p)
            elif name.startswith("att") and not name.startswith("attr"):
                groups["attention"].append(p)
            elif name.startswith("attr"):
                groups["attribute"].append(p)
            elif name.startswith("post"):
                groups["posterior"].append(p)
            else:
                groups["mixer"].append(p)
        return groups

    def to_dtype(self, dtype):
        """Cast all parameters (for 64-bit gradient checking)."""
        for p in self.params.values():
            p.data = p.data.astype(dtype)
        return self

    # -- forward pieces ----------------------------------------------------

    def _batched(self, image):
        t = ad.as_tensor(image)
        if t.data.ndim == 3:
            t = ad.reshape(t, (1, *t.shape))
        if t.data.ndim != 4 or t.shape[1] != self.config.image_size or t.shape[2] != self.config.image_size or t.shape[3] != 3:
            raise ValueError(f"expected image shape ({self.config.image_size}, {self.config.image_size}, 3), got {tuple(t.shape)[1:] if t.data.ndim == 4 else t.shape}")
        return t

    def _dense(self, x, w_name, b_name):
        w, b = self.params[w_name], self.params[b_name]
        y = ad.matmul(x, w)
        return ad.add(y, ad.broadcast_to(ad.reshape(b, (1, b.shape[0])), y.shape))

    def extract_features(self, image):
        """Conv stack: halving blocks then a stride-1 conv to the feature depth."""
        x = self._batched(image)
        n_blocks = len(self.config.conv_channels)
        for i in range(n_blocks):
            x = ad.conv2d(x, self.params[f"conv{i}_w"], 1, "same")
            b = self.params[f"conv{i}_b"]
            x = ad.add(x, ad.broadcast_to(ad.reshape(b, (1, 1, 1, b.shape[0])), x.shape))
            x = ad.relu(x)
            x = ad.mean_pool2(x)
        x = ad.conv2d(x, self.params[f"conv{n_blocks}_w"], 1, "same")
        b = self.params[f"conv{n_blocks}_b"]
        x = ad.add(x, ad.broadcast_to(ad.reshape(b, (1, 1, 1, b.shape[0])), x.shape))
        return ad.relu(x)

    def _check_index(self, index):
        if not 0 <= index < self.config.k:
            raise IndexError(f"attribute index {index} out of range [0, {self.config.k})")

    def attend(self, features, index):
        """Attention mask for one attribute: (B, cells), rows sum to 1."""
        self._check_index(index)
        batch = features.shape[0]
        flat = ad.reshape(features, (batch, self.config.feature_cells * self.config.feature_channels))
        h = ad.relu(self._dense(flat, f"att{index}_w1", f"att{index}_b1"))
        logits = self._dense(h, f"att{index}_w2", f"att{index}_b2")
        return ad.softmax(logits, axis=1)

    def apply_mask(self, features, mask):
        """Weight every channel of each spatial cell by the cell's attention value."""
        batch, h, w, c = features.shape
        if mask.shape not in ((batch, h * w), (batch, h, w)):
            raise ValueError(f"apply_mask: mask shape {mask.shape} does not match features {features.shape}")
        m = ad.reshape(mask, (batch, h, w, 1))
        return ad.mul(features, ad.broadcast_to(m, (batch, h, w, c)))

    def estimate_attribute(self, masked, index):
        """Score mean for one attribute from its attention-weighted feature map: (B, 1) in (-1, 1)."""
        self._check_index(index)
        cells = self.config.feature_cells
        pooled = ad.mul(ad.global_avg_pool(masked), float(cells))  # spatial sum = attention-weighted feature average
        h = ad.relu(self._dense(pooled, f"attr{index}_w1", f"attr{index}_b1"))
        return ad.tanh(self._dense(h, f"attr{index}_w2", f"attr{index}_b2"))

    def posterior_estimate(self, features, index):
        """No-attention score mean from globally pooled features: (B, 1) in (-1, 1)."""
        self._check_index(index)
        pooled = ad.global_avg_pool(features)
        return ad.tanh(self._dense(pooled, f"post{index}_w", f"post{index}_b"))

    def mix_weights(self, features):
        """Input-conditioned mixing weights from the hyper-network: (B, K), rows sum to 1."""
        batch = features.shape[0]
        flat = ad.reshape(features, (batch, self.config.feature_cells * self.config.feature_channels))
        h = ad.relu(self._dense(flat, "hyper_w1", "hyper_b1"))
        h = ad.relu(self._dense(h, "hyper_w2", "hyper_b2"))
        logits = self._dense(h, "hyper_w3", "hyper_b3")
        return ad.softmax(logits, axis=1)

    @staticmethod
    def overall_score(weights, scores):
        """Row-wise dot product of mixing weights and attribute scores: (B,)."""
        if weights.shape != scores.shape:
            raise ValueError(f"overall_score: length mismatch {weights.shape} vs {scores.shape}")
        return ad.reduce_sum(ad.mul(weights, scores), axis=1)

    def forward_batch(self, images, noise=None):
        """Full forward pass over a batch.

        ``noise`` of shape (B, K) switches attribute scores to reparameterized
        samples ``mean + sigma * noise``; otherwise means are used. Returns a
        dict of Tensors: features, masks (list per attribute), score_means,
        posterior_means, weights, scores, overall.
        """
        images = self._batched(images)
        feats = self.extract_features(images)
        masks, means, posts = [], [], []
        for i in range(self.config.k):
            mask = self.attend(feats, i)
            masks.append(mask)
            means.append(self.estimate_attribute(self.apply_mask(feats, mask), i))
            posts.append(self.posterior_estimate(feats, i))
        score_means = ad.concat(means, axis=1)
        posterior_means = ad.concat(posts, axis=1)
        weights = self.mix_weights(feats)
        if noise is not None:
            scores = ad.gaussian_reparam_sample(score_means, self.config.sigma, noise)
        else:
            scores = score_means
        overall = self.overall_score(weights, scores)
        return {
            "features": feats,
            "masks": masks,
            "score_means": score_means,
            "posterior_means": posterior_means,
            "weights": weights,
            "scores": scores,
            "overall": overall,
        }

    # -- inference ---------------------------------------------------------

    def evaluate(self, image):
        """Deterministic evaluation of one image -> :class:`EvaluationReport`."""
        image = np.asarray(image)
        if image.ndim != 3:
            raise ValueError(f"evaluate expects one (H, W, 3) image, got shape {image.shape}")
        out = self.forward_batch(image[None])
        s = self.config.feature_size
        masks = [m.data[0].reshape(s, s).astype(np.float32) for m in out["masks"]]
        weights = out["weights"].data[0]
        means = out["score_means"].data[0]
        order = sorted(range(self.config.k), key=lambda i: (-weights[i], i))
        attrs = [
            AttributeEvaluation(
                name=self.config.attribute_names[i],
                score=float(means[i]),
                weight=float(weights[i]),
                mask=masks[i],
            )
            for i in order
        ]
        return EvaluationReport(overall=float(out["overall"].data[0]), attributes=attrs)

    def evaluate_batch_arrays(self, images, chunk=64):
        """Deterministic overall and per-attribute means for many images (plain arrays)."""
        images = np.asarray(images)
        overall = np.empty(len(images), dtype=np.float64)
        means = np.empty((len(images), self.config.k), dtype=np.float64)
        weights = np.empty((len(images), self.config.k), dtype=np.float64)
        for lo in range(0, len(images), chunk):
            out = self.forward_batch(images[lo : lo + chunk])
            overall[lo : lo + chunk] = out["overall"].data
            means[lo : lo + chunk] = out["score_means"].data
            weights[lo : lo + chunk] = out["weights"].data
        return overall, means, weights


# ---------------------------------------------------------------------------
# checkpoint I/O: magic, canonical JSON header, little-endian float32 buffers


def _header_bytes(model, optimizer_state):
    header = {
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "params": [{"name": n, "shape": list(p.shape)} for n, p in model.params.items()],
        "optimizer": None if optimizer_state is None else {"step": optimizer_state.step, "slots": ["m", "v"]},
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(model, path, optimizer_state=None):
    """Write magic + header-length + canonical JSON header + float32 buffers."""
    head = _header_bytes(model, optimizer_state)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        for p in model.params.values():
            fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
        if optimizer_state is not None:
            for buf in (*optimizer_state.m, *optimizer_state.v):
                fh.write(np.ascontiguousarray(buf, dtype="<f4").tobytes())


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"corrupt checkpoint: truncated while reading {what}")
    return data


def load_checkpoint(path):
    """Load a checkpoint; returns (model, optimizer_state or None).

    Raises :class:`CheckpointError` on bad magic, version, truncation, or a
    header whose config/parameters do not describe a valid model.
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError("corrupt checkpoint: bad magic string")
        (head_len,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
        try:
            header = json.loads(_read_exact(fh, head_len, "header").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"corrupt checkpoint: unreadable header ({exc})") from exc
        if header.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {header.get('version')!r}")
        try:
            config = ModelConfig.from_dict(header["config"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"checkpoint config mismatch: {exc}") from exc

        model = AestheticModel(config)
        listed = header.get("params", [])
        expected = [(n, list(p.shape)) for n, p in model.params.items()]
        if [(e["name"], e["shape"]) for e in listed] != expected:
            raise CheckpointError("checkpoint config mismatch: parameter table does not match config")
        for entry in listed:
            shape = tuple(entry["shape"])
            n_bytes = 4 * int(np.prod(shape)) if shape else 4
            buf = _read_exact(fh, n_bytes, f"parameter {entry['name']}")
            model.params[entry["name"]].data = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()

        opt_state = None
        opt = header.get("optimizer")
        if opt is not None:
            opt_state = ad.AdamState(model.parameters())
            opt_state.step = int(opt["step"])
            for slot in (opt_state.m, opt_state.v):
                for i, p in enumerate(model.parameters()):
                    buf = _read_exact(fh, 4 * p.size, "optimizer state")
                    slot[i] = np.frombuffer(buf, dtype="<f4").reshape(p.shape).copy()
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError("corrupt checkpoint: trailing bytes")
    return model, opt_state
