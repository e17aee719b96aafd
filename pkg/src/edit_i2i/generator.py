"""Translation network with shared trunk weights and externally supplied decoder weights.

Dynamic parameters arrive as one flat vector per sample (or one vector shared
by the whole batch).  The layout is the concatenation, over dynamic blocks in
order, of each conv's ``[kernel, bias, scale, shift]``; residual blocks carry
two such groups.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import BlockSpec, GeneratorSpec
from .errors import NumericError, ShapeError

IN_EPS = 1e-5
INIT_STD = 0.02


def param_count(spec: GeneratorSpec) -> int:
    return sum(b.param_size for b in spec.blocks if b.dynamic)


def dynamic_slices(spec: GeneratorSpec) -> list[tuple[str, BlockSpec, int, int]]:
    """(name, block, start, stop) of each dynamic block inside the flat vector."""
    out, offset = [], 0
    for name, block in spec.dynamic_blocks():
        out.append((name, block, offset, offset + block.param_size))
        offset += block.param_size
    return out


def instance_norm(x, scale=None, shift=None, eps=IN_EPS):
    """Per-sample, per-channel normalisation.  ``scale``/``shift`` are [C] or [N, C]."""
    mean = x.mean(dim=(2, 3), keepdim=True)
    var = x.var(dim=(2, 3), unbiased=False, keepdim=True)
    y = (x - mean) / torch.sqrt(var + eps)
    if scale is not None:
        y = y * _per_channel(scale)
    if shift is not None:
        y = y + _per_channel(shift)
    return y


def _per_channel(v):
    return v[None, :, None, None] if v.dim() == 1 else v[:, :, None, None]


def _conv(x, weight, bias, stride):
    """Reflection-padded 'same' conv.  A 5-d weight holds one kernel per sample."""
    pad = weight.shape[-1] // 2
    if pad:
        x = F.pad(x, (pad, pad, pad, pad), mode="reflect")
    if weight.dim() == 4:
        return F.conv2d(x, weight, bias, stride=stride)
    n, cout, cin, k, _ = weight.shape
    h, w = x.shape[-2:]
    y = F.conv2d(
        x.reshape(1, n * cin, h, w),
        weight.reshape(n * cout, cin, k, k),
        bias.reshape(n * cout),
        stride=stride,
        groups=n,
    )
    return y.reshape(n, cout, *y.shape[-2:])


def _activate(x, activation):
    if activation == "relu":
        return F.relu(x)
    if activation == "tanh":
        return torch.tanh(x)
    return x


def unflatten_block(flat, block: BlockSpec) -> dict[str, torch.Tensor]:
    """Split a block's flat slice ([P] or [N, P]) into named tensors."""
    if flat.shape[-1] != block.param_size:
        raise ShapeError(f"block expects {block.param_size} parameters, got {flat.shape[-1]}")
    lead = flat.shape[:-1]
    tensors, offset = {}, 0
    for name, shape in block.conv_tensor_shapes():
        n = 1
        for s in shape:
            n *= s
        tensors[name] = flat[..., offset:offset + n].reshape(*lead, *shape)
        offset += n
    return tensors


def _conv_norm(x, t, suffix, block, activation):
    y = _conv(x, t["weight" + suffix], t["bias" + suffix], block.stride)
    if block.norm == "instance":
        y = instance_norm(y, t["scale" + suffix], t["shift" + suffix])
    return _activate(y, activation)


def apply_block(x, tensors: dict[str, torch.Tensor], block: BlockSpec):
    if block.kind == "resblock":
        h = _conv_norm(x, tensors, "", block, "relu")
        return x + _conv_norm(h, tensors, "2", block, "none")
    if block.kind == "upconv":
        x = F.interpolate(x, scale_factor=2, mode="nearest")
    return _conv_norm(x, tensors, "", block, block.activation)


def functional_conv_block(x, flat_params, block: BlockSpec):
    """Run one block with weights taken from a flat vector.

    >>> b = BlockSpec("conv", 3, 2, 32, 64)
    >>> functional_conv_block(torch.randn(1, 32, 16, 16), torch.randn(b.param_size) * 0.02, b).shape
    torch.Size([1, 64, 8, 8])
    """
    if not torch.isfinite(flat_params).all():
        raise NumericError("non-finite dynamic parameters")
    return apply_block(x, unflatten_block(flat_params, block), block)


class _BlockWeights(nn.Module):
    def __init__(self, block: BlockSpec):
        super().__init__()
        for name, shape in block.conv_tensor_shapes():
            if name.startswith("weight"):
                init = torch.randn(shape) * INIT_STD
            elif name.startswith("scale"):
                init = torch.ones(shape)
            else:
                init = torch.zeros(shape)
            self.register_parameter(name, nn.Parameter(init))

    def tensors(self):
        return dict(self.named_parameters())


class Generator(nn.Module):
    """G(x; theta_p, theta_s).  Holds theta_s; theta_p is passed to ``forward``."""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        spec.check_partition()
        self.spec = spec
        self.shared = nn.ModuleDict({name: _BlockWeights(b) for name, b in spec.shared_blocks()})
        self.num_dynamic = param_count(spec)

    def forward(self, x, theta_p):
        if x.dim() != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected [N, 3, H, W] images, got {tuple(x.shape)}")
        f = self.spec.downsample_factor
        if x.shape[2] % f or x.shape[3] % f:
            raise ShapeError(f"image sides must be multiples of {f}, got {tuple(x.shape[2:])}")
        if theta_p.shape[-1] != self.num_dynamic or theta_p.dim() not in (1, 2):
            raise ShapeError(
                f"theta_p must have trailing length {self.num_dynamic}, got {tuple(theta_p.shape)}"
            )
        if theta_p.dim() == 2 and theta_p.shape[0] != x.shape[0]:
            raise ShapeError(f"{theta_p.shape[0]} parameter rows for {x.shape[0]} images")
        if not torch.isfinite(theta_p).all():
            raise NumericError("non-finite dynamic parameters")
        slices = {name: (lo, hi) for name, _, lo, hi in dynamic_slices(self.spec)}
        for name, block in zip(self.spec.block_names(), self.spec.blocks):
            if block.dynamic:
                lo, hi = slices[name]
                tensors = unflatten_block(theta_p[..., lo:hi], block)
            else:
                tensors = self.shared[name].tensors()
            x = apply_block(x, tensors, block)
        return x
