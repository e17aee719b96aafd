"""Domain-conditioned 70x70 PatchGAN."""

from __future__ import annotations

import torch
import torch.nn as nn

from .errors import ShapeError

# (kernel, stride, padding) of every conv in the stack, head included
LAYERS = ((4, 2, 1), (4, 2, 1), (4, 2, 1), (4, 1, 1), (4, 1, 1))


def logits_size(n: int) -> int:
    for k, s, p in LAYERS:
        n = (n + 2 * p - k) // s + 1
    return n


def receptive_field() -> int:
    rf = 1
    for k, s, _ in reversed(LAYERS):
        rf = (rf - 1) * s + k
    return rf


class PatchDiscriminator(nn.Module):
    """C64-C128-C256-C512 (scaled by ``base_width / 64``) then a 1-channel head.

    The domain one-hot enters as constant planes stacked onto the RGB input.
    ``norm="none"`` drops instance norm, which otherwise couples every patch
    through the per-channel statistics.
    """

    def __init__(self, num_domains: int, base_width: int = 64, norm: str = "instance"):
        super().__init__()
        self.num_domains = num_domains
        widths = [base_width, 2 * base_width, 4 * base_width, 8 * base_width]
        layers, cin = [], 3 + num_domains
        for i, (cout, (k, s, p)) in enumerate(zip(widths, LAYERS)):
            layers.append(nn.Conv2d(cin, cout, k, s, p))
            if i > 0 and norm == "instance":
                layers.append(nn.InstanceNorm2d(cout))
            layers.append(nn.LeakyReLU(0.2))
            cin = cout
        k, s, p = LAYERS[-1]
        layers.append(nn.Conv2d(cin, 1, k, s, p))
        self.model = nn.Sequential(*layers)
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.normal_(m.weight, 0.0, 0.02)
                nn.init.zeros_(m.bias)

    def forward(self, image, onehot):
        """``onehot`` is [D] or [N, D]; returns [N, 1, h', w'] pre-sigmoid scores."""
        n, _, h, w = image.shape
        if min(logits_size(h), logits_size(w)) < 1:
            raise ShapeError(f"image {h}x{w} is too small for the patch discriminator")
        onehot = onehot.to(image)
        if onehot.dim() == 1:
            onehot = onehot.expand(n, -1)
        if onehot.shape != (n, self.num_domains):
            raise ShapeError(f"label shape {tuple(onehot.shape)} for {n} images, {self.num_domains} domains")
        planes = onehot[:, :, None, None].expand(n, self.num_domains, h, w)
        return self.model(torch.cat([image, planes], dim=1))


def discriminate(image, label, disc: PatchDiscriminator):
    return disc(image, label.onehot)
