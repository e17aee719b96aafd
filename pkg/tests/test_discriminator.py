import pytest
import torch

from edit_i2i.core import make_onehot
from edit_i2i.discriminator import PatchDiscriminator, discriminate, logits_size, receptive_field
from edit_i2i.errors import ShapeError


def _shape_oracle(n):
    # C64, C128, C256 halve (k4 s2 p1), C512 and the head each lose one pixel (k4 s1 p1)
    for _ in range(3):
        n = (n + 2 - 4) // 2 + 1
    return n - 1 - 1


@pytest.mark.parametrize("size", [64, 128, 256])
def test_logit_shape_matches_oracle(size):
    d = PatchDiscriminator(2, base_width=8)
    out = d(torch.zeros(2, 3, size, size), make_onehot(0, 2).onehot)
    assert out.shape == (2, 1, _shape_oracle(size), _shape_oracle(size))
    assert logits_size(size) == _shape_oracle(size)


def test_reference_sizes():
    assert logits_size(256) == 30
    assert logits_size(64) == 6
    assert receptive_field() == 70


def test_receptive_field_by_perturbation():
    torch.manual_seed(0)
    d = PatchDiscriminator(2, base_width=4, norm="none").double()
    x = torch.randn(1, 3, 128, 128, dtype=torch.float64)
    oh = make_onehot(1, 2).onehot
    base = d(x, oh)

    def touched(r, c):
        y = x.clone()
        y[0, :, r, c] += 10.0
        return (d(y, oh) - base).abs() > 0

    # patch (i, j) sees rows/cols 8i-23 .. 8i+46: 70 pixels, offset by the paddings
    lo, hi = 8 * 5 - 23, 8 * 5 + 46
    assert touched(lo, 40)[0, 0, 5].any() and touched(hi, 40)[0, 0, 5].any()
    assert not touched(lo - 1, 40)[0, 0, 5].any()
    assert not touched(hi + 1, 40)[0, 0, 5].any()
    assert hi - lo + 1 == receptive_field()


def test_label_changes_scores():
    torch.manual_seed(1)
    d = PatchDiscriminator(3, base_width=8)
    x = torch.rand(1, 3, 64, 64) * 2 - 1
    a = discriminate(x, make_onehot(0, 3), d)
    b = discriminate(x, make_onehot(2, 3), d)
    assert not torch.equal(a, b)


def test_batch_onehot_and_errors():
    d = PatchDiscriminator(2, base_width=4)
    x = torch.zeros(2, 3, 32, 32)
    per = torch.eye(2)
    out = d(x, per)
    assert out.shape == (2, 1, 2, 2)
    with pytest.raises(ShapeError):
        d(x, torch.zeros(2, 3))
    with pytest.raises(ShapeError):
        d(torch.zeros(1, 3, 16, 16), per[0])
    assert d(torch.zeros(1, 3, 24, 24), per[0]).shape[-1] == 1
