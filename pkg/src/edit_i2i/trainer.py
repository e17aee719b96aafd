"""Alternating generator / discriminator optimisation."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .core import Config, DomainLabel, GeneratorSpec
from .discriminator import PatchDiscriminator
from .errors import DomainError, NumericError
from .generator import Generator
from .losses import (
    LossReport,
    cycle_loss,
    discriminator_loss,
    generator_adv_loss,
    style_loss,
    total_loss,
)
from .param_net import ParamNet
from .perceptual import channel_stats, extract

log = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)


class ReplayBuffer:
    """Pool of past fakes shown to the discriminator."""

    def __init__(self, capacity: int = 50):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.storage: list[torch.Tensor] = []

    def __len__(self):
        return len(self.storage)

    def query_one(self, image: torch.Tensor, rng: np.random.Generator) -> torch.Tensor:
        image = image.detach()
        if len(self.storage) < self.capacity:
            self.storage.append(image.clone())
            return image
        if rng.random() < 0.5:
            k = int(rng.integers(self.capacity))
            old = self.storage[k]
            self.storage[k] = image.clone()
            return old
        return image

    def query(self, images: torch.Tensor, rng: np.random.Generator) -> torch.Tensor:
        """Per-image query over a [N, C, H, W] batch; the result never carries autograd history."""
        return torch.stack([self.query_one(img, rng) for img in images.detach()])


@dataclass(frozen=True)
class LRSchedule:
    base_lr: float = 0.001
    total_epochs: int = 100
    decay_start_epoch: int = 50


def lr_at(sched: LRSchedule, epoch: float) -> float:
    """Constant until ``decay_start_epoch``, then linear to zero at ``total_epochs``."""
    if not 0 <= epoch <= sched.total_epochs:
        raise DomainError(f"epoch {epoch} outside [0, {sched.total_epochs}]")
    if epoch < sched.decay_start_epoch:
        return sched.base_lr
    span = sched.total_epochs - sched.decay_start_epoch
    if span == 0:
        return 0.0
    return max(0.0, sched.base_lr * (sched.total_epochs - epoch) / span)


@dataclass
class TrainState:
    config: Config
    spec: GeneratorSpec
    generator: Generator
    param_net: ParamNet
    discriminator: PatchDiscriminator
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    buffers: list[ReplayBuffer]
    rng: np.random.Generator
    step: int = 0
    history: list[LossReport] = field(default_factory=list)

    @property
    def labels(self) -> list[DomainLabel]:
        reg = self.config.registry()
        return [reg.label(i) for i in range(len(reg))]

    def generator_parameters(self):
        return list(self.generator.parameters()) + self.param_net.trainable_parameters()

    def epoch(self) -> float:
        return self.step / self.config.steps_per_epoch

    def translate(self, images, exemplars, label):
        return self.generator(images, self.param_net(exemplars, label))


def build_state(config: Config, backbone=None) -> TrainState:
    torch.manual_seed(config.seed)
    spec = config.generator_spec()
    generator = Generator(spec)
    param_net = ParamNet(spec, len(config.domains), config.embed_dim, backbone)
    disc = PatchDiscriminator(len(config.domains), config.disc_base_width)
    opt_g = torch.optim.Adam(
        [{"params": list(generator.parameters())},
         {"params": param_net.trainable_parameters(), "lr_scale": config.paramnet_lr_scale}],
        lr=config.lr, betas=ADAM_BETAS)
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.lr, betas=ADAM_BETAS)
    buffers = [ReplayBuffer(config.buffer_capacity) for _ in config.domains]
    rng = np.random.default_rng([config.seed, 7])
    return TrainState(config, spec, generator, param_net, disc, opt_g, opt_d, buffers, rng)


def generator_objective(state: TrainState, x, y, label_x: DomainLabel, label_y: DomainLabel):
    """Forward both translation directions and both cycles; returns (total, parts)."""
    cfg = state.config
    G, P, D = state.generator, state.param_net, state.discriminator
    theta_y = P(y, label_y)
    theta_x = P(x, label_x)
    x_hat = G(x, theta_y)          # x rendered in y's style and domain
    y_hat = G(y, theta_x)
    x_bar = G(x_hat, theta_x)      # the source image is its own exemplar on the way back
    y_bar = G(y_hat, theta_y)
    cyc = cycle_loss(x_bar, x, y_bar, y)

    stats = lambda img: channel_stats(extract(img, P.backbone, cfg.style_layers))
    sty = style_loss(stats(y_hat), stats(x)) + style_loss(stats(x_hat), stats(y))

    adv_g = generator_adv_loss(D(x_hat, label_y.onehot), D(y_hat, label_x.onehot), cfg.saturating_gan)
    total = total_loss(adv_g, cyc, sty, cfg.lambda_cyc, cfg.eta_sty)
    return total, {"cyc": cyc, "sty": sty, "adv_g": adv_g, "x_hat": x_hat, "y_hat": y_hat}


def _grad_norm(params) -> float:
    sq = [p.grad.detach().pow(2).sum() for p in params if p.grad is not None]
    return float(torch.stack(sq).sum().sqrt()) if sq else 0.0


def _set_lr(state: TrainState):
    cfg = state.config
    sched = LRSchedule(cfg.lr, cfg.total_epochs, cfg.decay_start_epoch)
    lr = lr_at(sched, min(state.epoch(), cfg.total_epochs))
    for opt in (state.opt_g, state.opt_d):
        for group in opt.param_groups:
            group["lr"] = lr * group.get("lr_scale", 1.0)
    return lr


def train_step(state: TrainState, x, y, label_x: DomainLabel, label_y: DomainLabel,
               update_discriminator: bool = True) -> LossReport:
    """One generator+parameter-network update followed by one discriminator update."""
    cfg = state.config
    _set_lr(state)
    g_params = state.generator_parameters()
    d_params = list(state.discriminator.parameters())

    for p in d_params:
        p.requires_grad_(False)
    state.opt_g.zero_grad(set_to_none=True)
    try:
        total, parts = generator_objective(state, x, y, label_x, label_y)
    except NumericError as e:
        for p in d_params:
            p.requires_grad_(True)
        e.diagnostics.setdefault("step", state.step)
        raise
    total.backward()
    for p in d_params:
        p.requires_grad_(True)
    g_norm = _grad_norm(g_params)
    if not (torch.isfinite(total) and math.isfinite(g_norm)):
        raise NumericError(
            f"non-finite generator loss at step {state.step}",
            {"step": state.step, "total": total.item(), "cyc": parts["cyc"].item(),
             "sty": parts["sty"].item(), "adv_g": parts["adv_g"].item(), "grad_norm_g": g_norm},
        )
    if cfg.grad_clip:
        torch.nn.utils.clip_grad_norm_(g_params, cfg.grad_clip)
    state.opt_g.step()

    D = state.discriminator
    fake_y = state.buffers[label_y.index].query(parts["x_hat"], state.rng)
    fake_x = state.buffers[label_x.index].query(parts["y_hat"], state.rng)
    state.opt_d.zero_grad(set_to_none=True)
    adv_d = discriminator_loss(D(x, label_x.onehot), D(fake_y, label_y.onehot),
                               D(y, label_y.onehot), D(fake_x, label_x.onehot))
    if update_discriminator:
        adv_d.backward()
        d_norm = _grad_norm(d_params)
        if not (torch.isfinite(adv_d) and math.isfinite(d_norm)):
            raise NumericError(
                f"non-finite discriminator loss at step {state.step}",
                {"step": state.step, "adv_d": adv_d.item(), "grad_norm_d": d_norm},
            )
        if cfg.grad_clip:
            torch.nn.utils.clip_grad_norm_(d_params, cfg.grad_clip)
        state.opt_d.step()

    state.step += 1
    report = LossReport(parts["cyc"].item(), parts["sty"].item(), adv_d.item(),
                        parts["adv_g"].item(), total.item())
    state.history.append(report)
    return report


class LossLog:
    """CSV of per-step losses: step, lr, cyc, sty, adv_d, adv_g, total."""

    def __init__(self, path: str | Path, append: bool = False):
        self.path = Path(path)
        fresh = not (append and self.path.exists())
        self._fh = open(self.path, "w" if fresh else "a", newline="")
        self._writer = csv.writer(self._fh)
        if fresh:
            self._writer.writerow(["step", "lr"] + LossReport.header())

    def write(self, step: int, lr: float, report: LossReport):
        self._writer.writerow([step, repr(lr)] + [repr(v) for v in report.row()])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def fit(state: TrainState, sampler, steps: int, log_path: str | Path | None = None,
        on_step: Callable[[TrainState, LossReport], None] | None = None,
        on_epoch_end: Callable[[TrainState], None] | None = None) -> list[LossReport]:
    """Run ``steps`` iterations, cycling through the configured domain pairs."""
    pairs = state.config.pairs()
    labels = state.labels
    logger = LossLog(log_path, append=state.step > 0) if log_path else None
    reports = []
    try:
        for _ in range(steps):
            a, b = pairs[state.step % len(pairs)]
            x, y = sampler.batch(a), sampler.batch(b)
            lr = _set_lr(state)
            report = train_step(state, x, y, labels[a], labels[b])
            reports.append(report)
            if logger:
                logger.write(state.step, lr, report)
            if on_step:
                on_step(state, report)
            if on_epoch_end and state.step % state.config.steps_per_epoch == 0:
                on_epoch_end(state)
            if state.step % 50 == 0:
                log.info("step %d  cyc %.4f  sty %.4f  adv_d %.4f  adv_g %.4f",
                         state.step, report.cyc, report.sty, report.adv_d, report.adv_g)
    finally:
        if logger:
            logger.close()
    return reports
