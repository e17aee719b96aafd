"""Exemplar-domain aware parameter network.

A frozen feature extractor summarises the exemplar, the domain one-hot is
appended, one fully connected layer produces a style embedding and a group of
per-block linear heads turns that embedding into the generator's dynamic
weights.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import DomainLabel, GeneratorSpec
from .errors import DomainError, ShapeError
from .generator import INIT_STD, dynamic_slices, param_count

BACKBONE_SEED = 20190
BACKBONE_WIDTHS = (16, 32, 64, 128, 128)
HEAD_STD = 1e-3


class FixedBackbone(nn.Module):
    """Five 3x3 conv+ReLU stages (the last four with stride 2), seeded and never trained.

    Stands in for a pretrained VGG16; each stage output is one perceptual tap.
    """

    def __init__(self, widths: Sequence[int] = BACKBONE_WIDTHS, seed: int = BACKBONE_SEED):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.widths = tuple(widths)
        self.convs = nn.ModuleList()
        cin = 3
        for i, cout in enumerate(self.widths):
            conv = nn.Conv2d(cin, cout, 3, stride=1 if i == 0 else 2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * (2.0 / (9 * cin)) ** 0.5)
                conv.bias.zero_()
            self.convs.append(conv)
            cin = cout
        self.freeze()

    def freeze(self):
        for p in self.parameters():
            p.requires_grad_(False)

    @property
    def feature_dim(self) -> int:
        return self.widths[-1]

    def forward(self, x) -> list[torch.Tensor]:
        taps = []
        for conv in self.convs:
            x = F.relu(conv(x))
            taps.append(x)
        return taps

    @classmethod
    def from_file(cls, path: str | Path) -> "FixedBackbone":
        """Load weights stored in the checkpoint tensor container."""
        from .checkpoint import read_container

        header, tensors = read_container(path)
        net = cls(tuple(header.get("widths", BACKBONE_WIDTHS)))
        prefix = "param_net.backbone."
        if any(k.startswith(prefix) for k in tensors):
            tensors = {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
        net.load_state_dict(tensors)
        net.freeze()
        return net


def _head_bias(block) -> torch.Tensor:
    parts = []
    for name, shape in block.conv_tensor_shapes():
        n = torch.Size(shape).numel()
        if name.startswith("weight"):
            parts.append(torch.randn(n) * INIT_STD)
        elif name.startswith("scale"):
            parts.append(torch.ones(n))
        else:
            parts.append(torch.zeros(n))
    return torch.cat(parts)


class ParamNet(nn.Module):
    """G_P(exemplar, domain; psi) -> flat dynamic parameter vector."""

    def __init__(self, spec: GeneratorSpec, num_domains: int, embed_dim: int = 128,
                 backbone: FixedBackbone | None = None):
        super().__init__()
        self.spec = spec
        self.num_domains = num_domains
        self.embed_dim = embed_dim
        self.backbone = backbone if backbone is not None else FixedBackbone()
        self.backbone.freeze()
        self.fc = nn.Linear(self.backbone.feature_dim + num_domains, embed_dim)
        self.head = nn.ModuleDict()
        for name, block, _, _ in dynamic_slices(spec):
            lin = nn.Linear(embed_dim, block.param_size)
            with torch.no_grad():
                lin.weight.normal_(0.0, HEAD_STD)
                lin.bias.copy_(_head_bias(block))
            self.head[name] = lin
        self.num_params = param_count(spec)

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def _onehots(self, label, n, like):
        if isinstance(label, DomainLabel):
            labels = [label]
        elif isinstance(label, torch.Tensor):
            vec = label.to(like)
            if vec.dim() == 1:
                vec = vec.expand(n, -1)
            if vec.shape != (n, self.num_domains):
                raise ShapeError(f"label tensor shape {tuple(label.shape)} does not match "
                                 f"{n} exemplars x {self.num_domains} domains")
            return vec
        else:
            labels = list(label)
        for lab in labels:
            if lab.num_domains != self.num_domains:
                raise ShapeError(f"label has {lab.num_domains} domains, network expects {self.num_domains}")
        if len(labels) == 1:
            labels = labels * n
        if len(labels) != n:
            raise ShapeError(f"{len(labels)} labels for {n} exemplars")
        return torch.stack([lab.onehot for lab in labels]).to(like)

    def embed(self, exemplar, label) -> torch.Tensor:
        if exemplar.dim() == 3:
            exemplar = exemplar.unsqueeze(0)
        if exemplar.dim() != 4 or exemplar.shape[1] != 3:
            raise ShapeError(f"exemplar must be [N, 3, H, W], got {tuple(exemplar.shape)}")
        feats = self.backbone(exemplar)[-1].mean(dim=(2, 3))
        onehot = self._onehots(label, exemplar.shape[0], feats)
        return F.relu(self.fc(torch.cat([feats, onehot], dim=1)))

    def forward(self, exemplar, label) -> torch.Tensor:
        """Returns [N, param_count(spec)]."""
        z = self.embed(exemplar, label)
        return torch.cat([self.head[name](z) for name in self.head], dim=1)

    generate_params = forward


def interpolate(theta_a, theta_b, alpha: float, extrapolate: bool = False):
    """(1 - alpha) * theta_a + alpha * theta_b, with exact endpoints."""
    if theta_a.shape != theta_b.shape:
        raise ShapeError(f"cannot blend {tuple(theta_a.shape)} with {tuple(theta_b.shape)}")
    if not extrapolate and not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha={alpha} outside [0, 1]")
    if alpha == 0:
        return theta_a.clone()
    if alpha == 1:
        return theta_b.clone()
    return (1.0 - alpha) * theta_a + alpha * theta_b
