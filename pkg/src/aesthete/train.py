"""Training: the three losses, their weighted combination, the Adam loop with
gradient clipping and early stopping, and held-out metrics.

Loss conventions (batch means throughout):
  * aesthetic loss   -- mean squared error of the overall score
  * attribute loss   -- mean over the batch of the summed per-attribute
                        squared errors
  * information loss -- minus the mean Gaussian KL between attended score
                        distributions and the no-attention posterior,
                        (mu_p - mu_q)^2 / (2 sigma^2) per entry, so it is
                        always <= 0 and minimizing it pushes the two apart
  * total            -- aes + lambda_att * att + lambda_mi * mi
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tape, Tensor, adam_step, backward, clip_global_norm, default_rng
from .model import AestheticModel, save_checkpoint


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite during fit."""


@dataclass
class TrainingConfig:
    lambda_att: float = 0.09
    lambda_mi: float = 0.001
    learning_rate: float = 4e-4
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 15
    clip_norm: float = 5.0
    seed: int = 0
    sampling: str = "stochastic"  # "stochastic" | "deterministic"
    mi_phi_mode: str = "as-written"  # "as-written" | "fit-posterior"
    monitor: str = "train"  # early-stop signal: "train" | "val"

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "max_epochs", "patience", "clip_norm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lambda_att", "lambda_mi"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.patience > self.max_epochs:
            raise ValueError("patience must be <= max_epochs")
        if self.sampling not in ("stochastic", "deterministic"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")
        if self.mi_phi_mode not in ("as-written", "fit-posterior"):
            raise ValueError(f"unknown mi_phi_mode {self.mi_phi_mode!r}")
        if self.monitor not in ("train", "val"):
            raise ValueError(f"unknown monitor {self.monitor!r}")

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))


# ---------------------------------------------------------------------------
# losses (tensor-graph functions; plain arrays are wrapped as constants)


def loss_aes(predictions, labels):
    """Mean squared error between predicted and labeled overall scores."""
    pred = ad.as_tensor(predictions)
    lab = ad.as_tensor(labels)
    if pred.size == 0:
        raise ValueError("loss_aes: empty batch")
    return ad.mse(pred, ad.detach(lab))


def loss_att(predictions, labels):
    """Mean over the batch of the per-attribute squared errors summed over attributes."""
    pred = ad.as_tensor(predictions)
    lab = ad.as_tensor(labels)
    if pred.data.ndim != 2 or pred.shape != lab.shape:
        raise ValueError(f"loss_att: expected matching (batch, K) shapes, got {pred.shape} vs {lab.shape}")
    if pred.size == 0:
        raise ValueError("loss_att: empty batch")
    d = ad.sub(pred, ad.detach(lab))
    per_sample = ad.reduce_sum(ad.mul(d, d), axis=1)
    return ad.reduce_mean(per_sample)


def loss_mi(attended_means, posterior_means, sigma):
    """Minus the mean KL between equal-variance Gaussians: -(mu_p - mu_q)^2 / (2 sigma^2)."""
    if sigma <= 0:
        raise ValueError("loss_mi: sigma must be > 0")
    mu_p = ad.as_tensor(attended_means)
    mu_q = ad.as_tensor(posterior_means)
    if mu_p.shape != mu_q.shape:
        raise ValueError(f"loss_mi: mean shapes differ, {mu_p.shape} vs {mu_q.shape}")
    d = ad.sub(mu_p, mu_q)
    kl = ad.mul(ad.mul(d, d), 1.0 / (2.0 * sigma * sigma))
    return ad.neg(ad.reduce_mean(kl))


def total_loss(l_aes, l_att, l_mi, config):
    """Weighted combination of the three losses."""
    parts = [ad.as_tensor(x) for x in (l_aes, l_att, l_mi)]
    for p in parts:
        if not np.isfinite(p.data).all():
            raise ValueError("total_loss: non-finite component loss")
    return ad.add(parts[0], ad.add(ad.mul(parts[1], config.lambda_att), ad.mul(parts[2], config.lambda_mi)))


def batch_losses(model, images, y_overall, y_attrs, config, noise=None):
    """Forward a batch and build the three losses plus their combination.

    In ``fit-posterior`` mode the posterior heads chase the (detached)
    attended means by maximum likelihood while everything else still
    maximizes the KL; ``as-written`` lets one KL term drive all parameters.
    """
    out = model.forward_batch(images, noise=noise)
    l_a = loss_aes(out["overall"], y_overall)
    l_t = loss_att(out["scores"], y_attrs)
    sigma = model.config.sigma
    for name, val in (("aes", l_a), ("att", l_t)):
        if not np.isfinite(val.data).all():
            raise TrainingDiverged(f"non-finite {name} loss ({float(val.data):.4g})")
    if config.mi_phi_mode == "fit-posterior":
        l_m = loss_mi(out["score_means"], ad.detach(out["posterior_means"]), sigma)
        fit_term = ad.neg(loss_mi(ad.detach(out["score_means"]), out["posterior_means"], sigma))
        total = ad.add(total_loss(l_a, l_t, l_m, config), ad.mul(fit_term, config.lambda_mi))
    else:
        l_m = loss_mi(out["score_means"], out["posterior_means"], sigma)
        total = total_loss(l_a, l_t, l_m, config)
    return {"aes": l_a, "att": l_t, "mi": l_m, "total": total, "forward": out}


# ---------------------------------------------------------------------------
# fit


@dataclass
class EpochRecord:
    epoch: int
    train: dict
    val: dict | None = None

    def to_dict(self):
        d = {"epoch": self.epoch, "train": self.train}
        if self.val is not None:
            d["val"] = self.val
        return d


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    best_loss: float = float("inf")
    wall_time_s: float = 0.0

    def loss_curve(self, key="total"):
        return [e.train[key] for e in self.epochs]

    def to_dict(self):
        return {
            "epochs": [e.to_dict() for e in self.epochs],
            "stopped_epoch": self.stopped_epoch,
            "best_epoch": self.best_epoch,
            "best_loss": self.best_loss,
            "wall_time_s": self.wall_time_s,
        }


class EarlyStopper:
    """Stop once the monitored loss has not improved for ``patience`` consecutive epochs."""

    def __init__(self, patience):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch, value):
        """Record one epoch value; returns True when training should stop."""
        if value < self.best:
            self.best = value
            self.best_epoch = epoch
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def _stack_dataset(samples):
    if not samples:
        raise ValueError("dataset is empty")
    images = np.stack([s.image for s in samples]).astype(np.float32)
    y = np.array([s.y_overall for s in samples], dtype=np.float32)
    ya = np.stack([s.y_attributes for s in samples]).astype(np.float32)
    return images, y, ya


def dataset_losses(model, images, y, ya, config, chunk=64):
    """Deterministic (mean-scored) losses over a whole dataset, as floats."""
    n = len(images)
    sums = {"aes": 0.0, "att": 0.0, "mi": 0.0, "total": 0.0}
    for lo in range(0, n, chunk):
        sl = slice(lo, min(lo + chunk, n))
        losses = batch_losses(model, images[sl], y[sl], ya[sl], config, noise=None)
        b = sl.stop - sl.start
        for key in sums:
            sums[key] += float(losses[key].data) * b
    return {key: val / n for key, val in sums.items()}


def fit(model, train_set, val_set, config, log_path=None, checkpoint_path=None, progress=None):
    """Train ``model``; returns a :class:`TrainReport`, leaving the model at its best epoch.

    Deterministic given ``config.seed``: shuffling and reparameterization
    noise come from one seeded generator. Each step clips the joint gradient
    norm and applies one Adam update. Stops early per the patience rule on
    the monitored loss (training total by default), restores the best
    parameters, and optionally writes them as a checkpoint.
    """
    images, y, ya = _stack_dataset(train_set)
    has_val = bool(val_set)
    if has_val:
        val_images, val_y, val_ya = _stack_dataset(val_set)
    if config.monitor == "val" and not has_val:
        raise ValueError("monitor='val' requires a validation set")

    rng = default_rng(config.seed)
    params = model.parameters()
    state = AdamState(params)
    stopper = EarlyStopper(config.patience)
    report = TrainReport()
    best_snapshot = None
    n = len(images)
    start = time.perf_counter()
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None

    try:
        for epoch in range(1, config.max_epochs + 1):
            order = rng.permutation(n)
            sums = {"aes": 0.0, "att": 0.0, "mi": 0.0, "total": 0.0}
            for lo in range(0, n, config.batch_size):
                idx = order[lo : lo + config.batch_size]
                noise = None
                if config.sampling == "stochastic":
                    noise = rng.standard_normal((len(idx), model.config.k)).astype(np.float32)
                tape = Tape()
                try:
                    with tape:
                        losses = batch_losses(model, images[idx], y[idx], ya[idx], config, noise=noise)
                except TrainingDiverged as exc:
                    raise TrainingDiverged(f"epoch {epoch}: {exc}") from None
                total = losses["total"]
                if not np.isfinite(total.data).all():
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch} (aes={float(losses['aes'].data):.4g}, "
                        f"att={float(losses['att'].data):.4g}, mi={float(losses['mi'].data):.4g})"
                    )
                backward(tape, total)
                grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
                grads, _ = clip_global_norm(grads, config.clip_norm)
                adam_step(params, grads, state, config.learning_rate)
                for key in sums:
                    sums[key] += float(losses[key].data) * len(idx)
            train_losses = {key: val / n for key, val in sums.items()}

            val_losses = None
            if has_val:
                val_losses = dataset_losses(model, val_images, val_y, val_ya, config)
            record = EpochRecord(epoch=epoch, train=train_losses, val=val_losses)
            report.epochs.append(record)
            if log_fh:
                log_fh.write(json.dumps(record.to_dict()) + "\n")
                log_fh.flush()
            if progress:
                progress(record)

            monitored = train_losses["total"] if config.monitor == "train" else val_losses["total"]
            improved = monitored < stopper.best
            stop = stopper.update(epoch, monitored)
            if improved:
                best_snapshot = [p.data.copy() for p in params]
            report.stopped_epoch = epoch
            if stop:
                break
    finally:
        if log_fh:
            log_fh.close()

    report.best_epoch = stopper.best_epoch
    report.best_loss = stopper.best
    report.wall_time_s = time.perf_counter() - start
    if best_snapshot is not None:
        for p, data in zip(params, best_snapshot):
            p.data = data
    if checkpoint_path:
        save_checkpoint(model, checkpoint_path)
    return report


# ---------------------------------------------------------------------------
# metrics


def eval_metrics(model, samples, n_pairs=1000, seed=0):
    """Overall MSE, per-attribute MSE, and pairwise ranking accuracy vs ground truth.

    Ranking: sample ``n_pairs`` index pairs with distinct ground-truth overall
    scores; the model 'prefers' the first image when its score is strictly
    higher, with exact ties resolved as first-is-better (fixed rule).
    """
    if len(samples) < 2:
        raise ValueError("eval_metrics: need at least 2 samples")
    images, y, ya = _stack_dataset(samples)
    pred_overall, pred_means, _ = model.evaluate_batch_arrays(images)

    overall_mse = float(np.mean((pred_overall - y) ** 2))
    per_attr = np.mean((pred_means - ya) ** 2, axis=0)
    attribute_mse = {name: float(v) for name, v in zip(model.config.attribute_names, per_attr)}

    rng = default_rng(seed)
    hits = 0
    drawn = 0
    guard = 0
    while drawn < n_pairs and guard < n_pairs * 50:
        guard += 1
        i, j = rng.integers(0, len(samples), size=2)
        if i == j or y[i] == y[j]:
            continue
        model_first = pred_overall[i] > pred_overall[j] or pred_overall[i] == pred_overall[j]
        truth_first = y[i] > y[j]
        hits += int(model_first == truth_first)
        drawn += 1
    if drawn == 0:
        raise ValueError("eval_metrics: could not sample pairs with distinct ground truth")
    return {
        "overall_mse": overall_mse,
        "attribute_mse": attribute_mse,
        "ranking_accuracy": hits / drawn,
        "n_pairs": drawn,
    }
