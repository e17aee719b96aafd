"""Feature statistics shared by the style loss and the evaluation metrics."""

from __future__ import annotations

from typing import Callable, Sequence

import torch

Backbone = Callable[[torch.Tensor], Sequence[torch.Tensor]]


def extract(images, backbone: Backbone, layers: Sequence[int] | None = None) -> list[torch.Tensor]:
    taps = list(backbone(images))
    if layers is None:
        return taps
    return [taps[i] for i in layers]


def _safe_sqrt(v):
    # sqrt'(0) is infinite; zero-variance channels get a zero gradient instead
    pos = v > 0
    return torch.sqrt(torch.where(pos, v, torch.ones_like(v))) * pos


def channel_stats(stack: Sequence[torch.Tensor]) -> list[tuple[torch.Tensor, torch.Tensor]]:
    """Per layer: spatial mean and population std, each [N, M_l]."""
    stats = []
    for f in stack:
        mu = f.mean(dim=(2, 3))
        var = f.var(dim=(2, 3), unbiased=False)
        stats.append((mu, _safe_sqrt(var)))
    return stats


def gram(feat) -> torch.Tensor:
    """Unnormalised F F^T of a [M, H, W] map (or a batch of them)."""
    flat = feat.flatten(-2)
    return flat @ flat.transpose(-1, -2)
