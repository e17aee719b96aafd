import random

import pytest
import torch

from edit_i2i.core import BlockSpec, GeneratorSpec, default_generator_spec
from edit_i2i.errors import NumericError, ShapeError
from edit_i2i.generator import (
    Generator,
    apply_block,
    functional_conv_block,
    instance_norm,
    param_count,
    unflatten_block,
)

from conftest import central_difference_check


def arithmetic_count(spec):
    """Hand formula: k*k*in*out + out (+ 2*out with instance norm), twice for residual blocks."""
    total = 0
    for b in spec.blocks:
        if not b.dynamic:
            continue
        per = b.kernel * b.kernel * b.in_ch * b.out_ch + b.out_ch + (2 * b.out_ch if b.norm == "instance" else 0)
        total += per * (2 if b.kind == "resblock" else 1)
    return total


def random_spec(r: random.Random):
    w = r.randint(1, 12)
    n_down = r.randint(0, 3)
    blocks, ch = [], 3
    out = r.choice([1, 2]) * w
    blocks.append(BlockSpec("conv", r.choice([3, 5, 7]), 1, ch, out, r.random() < 0.5))
    ch = out
    for _ in range(n_down):
        nxt = r.randint(1, 16)
        blocks.append(BlockSpec("conv", r.choice([1, 3]), 2, ch, nxt, r.random() < 0.5))
        ch = nxt
    for _ in range(r.randint(0, 4)):
        blocks.append(BlockSpec("resblock", r.choice([1, 3]), 1, ch, ch, r.random() < 0.5,
                                norm=r.choice(["instance", "none"])))
    for _ in range(n_down):
        nxt = r.randint(1, 16)
        blocks.append(BlockSpec("upconv", 3, 1, ch, nxt, r.random() < 0.5))
        ch = nxt
    blocks.append(BlockSpec("output", r.choice([3, 7]), 1, ch, 3, r.random() < 0.5, norm="none",
                            activation="tanh"))
    return GeneratorSpec(tuple(blocks), w)


def test_param_count_hand_examples():
    assert BlockSpec("conv", 3, 1, 32, 16, True).param_size == 4656
    assert BlockSpec("output", 7, 1, 16, 3, True, norm="none", activation="tanh").param_size == 2355
    shared_only = GeneratorSpec((BlockSpec("conv", 3, 1, 3, 3, norm="none"),))
    assert param_count(shared_only) == 0


@pytest.mark.parametrize("seed", range(25))
def test_param_count_random_specs(seed):
    spec = random_spec(random.Random(seed))
    assert param_count(spec) == arithmetic_count(spec)
    # a third route: materialise every dynamic tensor and count elements
    counted = sum(t.numel() for b in spec.blocks if b.dynamic
                  for t in unflatten_block(torch.zeros(b.param_size), b).values())
    assert counted == param_count(spec)


def test_default_layout_counts():
    spec = default_generator_spec(16)
    assert [b.kind for b in spec.blocks] == ["conv"] * 3 + ["resblock"] * 9 + ["upconv"] * 2 + ["output"]
    assert param_count(spec) == 18528 + 4656 + 2355


def test_forward_preserves_shape():
    spec = default_generator_spec(4, n_res=2)
    g = Generator(spec)
    x = torch.rand(2, 3, 32, 32) * 2 - 1
    theta = torch.randn(param_count(spec)) * 0.02
    out = g(x, theta)
    assert out.shape == (2, 3, 32, 32)
    assert out.abs().max() <= 1.0
    assert torch.equal(out, g(x, theta))


def test_forward_per_sample_params_match_individual_calls():
    spec = default_generator_spec(4, n_res=1)
    g = Generator(spec)
    x = torch.rand(3, 3, 16, 16) * 2 - 1
    theta = torch.randn(3, param_count(spec)) * 0.05
    batched = g(x, theta)
    for i in range(3):
        torch.testing.assert_close(batched[i:i + 1], g(x[i:i + 1], theta[i]), atol=1e-6, rtol=1e-5)


def test_forward_rejects_short_theta():
    spec = default_generator_spec(4, n_res=1)
    g = Generator(spec)
    with pytest.raises(ShapeError):
        g(torch.zeros(1, 3, 16, 16), torch.zeros(param_count(spec) - 1))


def test_forward_rejects_bad_size():
    spec = default_generator_spec(4, n_res=1)
    with pytest.raises(ShapeError):
        Generator(spec)(torch.zeros(1, 3, 18, 16), torch.zeros(param_count(spec)))


def test_functional_block_shapes():
    down = BlockSpec("conv", 3, 2, 32, 64)
    up = BlockSpec("upconv", 3, 1, 64, 32)
    y = functional_conv_block(torch.randn(1, 32, 16, 16), torch.randn(down.param_size) * 0.02, down)
    assert y.shape == (1, 64, 8, 8)
    z = functional_conv_block(y, torch.randn(up.param_size) * 0.02, up)
    assert z.shape == (1, 32, 16, 16)


def test_functional_block_rejects_nonfinite():
    b = BlockSpec("conv", 3, 1, 3, 4)
    p = torch.zeros(b.param_size)
    p[0] = float("nan")
    with pytest.raises(NumericError):
        functional_conv_block(torch.zeros(1, 3, 8, 8), p, b)


def test_zero_kernel_gives_zero_pre_activation():
    b = BlockSpec("conv", 3, 1, 4, 5, norm="none", activation="none")
    y = functional_conv_block(torch.full((1, 4, 8, 8), 0.7), torch.zeros(b.param_size), b)
    assert torch.count_nonzero(y) == 0


def test_instance_norm_statistics():
    x = torch.randn(3, 5, 9, 7, dtype=torch.float64) * 10 + 4
    y = instance_norm(x)
    torch.testing.assert_close(y.mean(dim=(2, 3)), torch.zeros(3, 5, dtype=torch.float64), atol=1e-5, rtol=0)
    torch.testing.assert_close(y.var(dim=(2, 3), unbiased=False), torch.ones(3, 5, dtype=torch.float64),
                               atol=1e-5, rtol=0)


def test_residual_block_identity_when_second_conv_zero():
    b = BlockSpec("resblock", 3, 1, 6, 6, True)
    t = {k: v.clone() for k, v in unflatten_block(torch.randn(b.param_size) * 0.1, b).items()}
    t["weight2"].zero_()
    t["bias2"].zero_()
    t["scale2"].zero_()
    t["shift2"].zero_()
    x = torch.randn(2, 6, 8, 8)
    torch.testing.assert_close(apply_block(x, t, b), x, atol=1e-6, rtol=0)


def test_generator_gradients_match_central_differences(mini_spec):
    torch.manual_seed(3)
    g = Generator(mini_spec).double()
    # unit-scale weights: at the 0.02 init the 2x2 trunk maps have variance far below the
    # norm epsilon, which makes second-order terms swamp a 1e-6 central difference
    with torch.no_grad():
        for p in g.parameters():
            p.add_(torch.randn_like(p) * 0.3)
    x = (torch.rand(2, 3, 8, 8, dtype=torch.float64) * 2 - 1).requires_grad_()
    theta = (torch.randn(param_count(mini_spec), dtype=torch.float64) * 0.3).requires_grad_()
    w = torch.randn(2, 3, 8, 8, dtype=torch.float64)
    shared = list(g.parameters())
    central_difference_check(lambda: (g(x, theta) * w).sum(), [x, theta] + shared)
