"""Training objectives and their weighted total."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import torch
import torch.nn.functional as F

from .errors import ShapeError

LOG_EPS = 1e-7
DEFAULT_LAMBDA = 10.0
DEFAULT_ETA = 0.05


@dataclass
class LossReport:
    cyc: float
    sty: float
    adv_d: float
    adv_g: float
    total: float

    @staticmethod
    def header() -> list[str]:
        return [f.name for f in fields(LossReport)]

    def row(self) -> list[float]:
        return list(astuple(self))

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.row())


def cycle_loss(x_cycled, x, y_cycled, y):
    if x_cycled.shape != x.shape or y_cycled.shape != y.shape:
        raise ShapeError(
            f"cycle pairs differ in shape: {tuple(x_cycled.shape)}/{tuple(x.shape)}, "
            f"{tuple(y_cycled.shape)}/{tuple(y.shape)}"
        )
    return (x_cycled - x).abs().mean() + (y_cycled - y).abs().mean()


def style_loss(stats_gen, stats_ref):
    """One direction of the mean/std matching loss, averaged over the batch.

    ``stats_*`` are lists of (mu, sigma) pairs as returned by ``channel_stats``.
    """
    if len(stats_gen) != len(stats_ref) or not stats_gen:
        raise ShapeError(f"{len(stats_gen)} vs {len(stats_ref)} layers")
    n_layers = len(stats_gen)
    total = 0.0
    for (mu_g, sd_g), (mu_r, sd_r) in zip(stats_gen, stats_ref):
        if mu_g.shape[-1] != mu_r.shape[-1]:
            raise ShapeError(f"layer channel counts differ: {mu_g.shape[-1]} vs {mu_r.shape[-1]}")
        m = mu_g.shape[-1]
        per = ((mu_g - mu_r) ** 2 + (sd_g - sd_r) ** 2).sum(dim=-1) / (n_layers * m)
        total = total + per.mean()
    return total


def _log_prob(logits, real: bool):
    p = torch.sigmoid(logits).clamp(LOG_EPS, 1.0 - LOG_EPS)
    return torch.log(p if real else 1.0 - p).mean()


def discriminator_loss(logits_real_x, logits_fake_in_y, logits_real_y, logits_fake_in_x):
    return -(
        _log_prob(logits_real_x, True)
        + _log_prob(logits_fake_in_y, False)
        + _log_prob(logits_real_y, True)
        + _log_prob(logits_fake_in_x, False)
    )


def generator_adv_loss(logits_fake_in_y, logits_fake_in_x, saturating: bool = False):
    """Non-saturating ``-log D(fake)`` by default; ``saturating`` minimises ``log(1 - D(fake))``."""
    if saturating:
        return _log_prob(logits_fake_in_y, False) + _log_prob(logits_fake_in_x, False)
    return -(_log_prob(logits_fake_in_y, True) + _log_prob(logits_fake_in_x, True))


def adversarial_losses(logits_real_x, logits_fake_in_y, logits_real_y, logits_fake_in_x,
                       saturating: bool = False):
    adv_d = discriminator_loss(logits_real_x, logits_fake_in_y, logits_real_y, logits_fake_in_x)
    adv_g = generator_adv_loss(logits_fake_in_y, logits_fake_in_x, saturating)
    return adv_d, adv_g


def total_loss(adv_g, cyc, sty, lam=DEFAULT_LAMBDA, eta=DEFAULT_ETA):
    return adv_g + lam * cyc + eta * sty
