import numpy as np
import pytest
import torch

from edit_i2i.core import Config, default_generator_spec
from edit_i2i.generator import Generator
from edit_i2i.param_net import FixedBackbone, ParamNet


def central_difference_check(f, params, n_dirs=3, n_coords=6, h=1e-6, rtol=1e-4, seed=0):
    """Compare autograd against central differences of ``f`` along random directions and coordinates.

    ``params`` are float64 leaf tensors that ``f`` reads; returns the worst relative error seen.
    The absolute floor is the float64 roundoff of the difference quotient, which only
    matters for derivatives that are exactly zero; those are left out of the returned figure.
    """
    gen = torch.Generator().manual_seed(seed)
    f0 = f()
    atol = 64 * torch.finfo(torch.float64).eps * max(1.0, abs(f0.item())) / h
    grads = torch.autograd.grad(f0, params, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]

    def numeric(direction):
        with torch.no_grad():
            for p, v in zip(params, direction):
                p.add_(h * v)
            up = float(f())
            for p, v in zip(params, direction):
                p.sub_(2 * h * v)
            down = float(f())
            for p, v in zip(params, direction):
                p.add_(h * v)
        return (up - down) / (2 * h)

    worst = 0.0
    probes = [[torch.randn(p.shape, generator=gen, dtype=p.dtype) for p in params] for _ in range(n_dirs)]
    for k, p in enumerate(params):
        flat = torch.randperm(p.numel(), generator=gen)[:n_coords]
        for i in flat:
            e = [torch.zeros_like(q) for q in params]
            e[k].view(-1)[i] = 1.0
            probes.append(e)
    for v in probes:
        ana = float(sum((g * d).sum() for g, d in zip(grads, v)))
        num = numeric(v)
        err = abs(ana - num)
        scale = max(abs(ana), abs(num))
        assert err <= rtol * scale + atol, f"autograd {ana!r} vs central difference {num!r}"
        if scale > 100 * atol:
            worst = max(worst, err / scale)
    return worst


@pytest.fixture
def mini_spec():
    return default_generator_spec(base_width=4, n_res=1)


@pytest.fixture
def mini_nets(mini_spec):
    torch.manual_seed(0)
    gen = Generator(mini_spec).double()
    pnet = ParamNet(mini_spec, 2, embed_dim=8, backbone=FixedBackbone()).double()
    return gen, pnet


@pytest.fixture
def tiny_config():
    return Config(image_size=24, base_width=4, n_res=1, embed_dim=8, disc_base_width=4,
                  synthetic_per_domain=8, steps_per_epoch=5, total_epochs=4, decay_start_epoch=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
