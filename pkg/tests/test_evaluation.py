import json

import pytest
import torch

from edit_i2i.core import Config
from edit_i2i.evaluation import EvalReport, content_error, count_params, evaluate, style_error
from edit_i2i.generator import param_count
from edit_i2i.param_net import FixedBackbone
from edit_i2i.trainer import build_state


def _stub(maps):
    """Backbone that returns fixed feature maps for each input image index."""
    return lambda images: [torch.stack([maps[int(i)] for i in images[:, 0, 0, 0]])]


def _ids(*ks):
    return torch.tensor(ks, dtype=torch.float32)[:, None, None, None].expand(len(ks), 3, 2, 2)


def test_content_error_identity_symmetry_and_scale():
    bb = FixedBackbone()
    torch.manual_seed(0)
    a, b = torch.rand(2, 3, 32, 32) * 2 - 1, torch.rand(2, 3, 32, 32) * 2 - 1
    assert torch.equal(content_error(a, a, bb), torch.zeros(2))
    assert torch.allclose(content_error(a, b, bb), content_error(b, a, bb))

    doubled = lambda images: [2.0 * f for f in bb(images)]
    assert torch.allclose(content_error(a, b, doubled), 2 * content_error(a, b, bb), rtol=1e-6)


def test_content_error_hand_case():
    maps = {0: torch.zeros(1, 2, 2), 1: torch.tensor([[[3.0, 0.0], [0.0, 4.0]]])}
    assert content_error(_ids(0), _ids(1), _stub(maps), layer=0).item() == 5.0


def test_style_error_hand_case():
    # Gram [[4]] vs [[0]] with M=1, H=W=2: 16 / (4 * 1 * 4 * 4) = 0.25
    maps = {0: torch.ones(1, 2, 2), 1: torch.zeros(1, 2, 2)}
    assert style_error(_ids(0), _ids(1), _stub(maps)).item() == 0.25
    assert style_error(_ids(0), _ids(0), _stub(maps)).item() == 0.0


def test_style_error_nonnegative_and_zero_on_identity():
    bb = FixedBackbone()
    torch.manual_seed(1)
    a, b = torch.rand(3, 3, 32, 32) * 2 - 1, torch.rand(3, 3, 32, 32) * 2 - 1
    assert (style_error(a, b, bb) >= 0).all()
    assert torch.equal(style_error(a, a, bb), torch.zeros(3))


def test_counts_match_sources(tiny_config):
    state = build_state(tiny_config)
    c = count_params(state)
    assert c.dynamic == param_count(state.spec)
    assert c.shared == sum(b.param_size for _, b in state.spec.shared_blocks())
    assert c.paramnet == sum(p.numel() for p in state.param_net.parameters())
    assert min(c.shared, c.dynamic, c.paramnet) > 0


def test_full_width_layout_has_fewer_dynamic_than_shared():
    spec = Config(base_width=64).generator_spec()
    shared = sum(b.param_size for _, b in spec.shared_blocks())
    assert param_count(spec) < shared


def test_evaluate_report(tiny_config, tmp_path):
    state = build_state(tiny_config)
    torch.manual_seed(2)
    inputs, exemplars = torch.rand(3, 3, 24, 24) * 2 - 1, torch.rand(2, 3, 24, 24) * 2 - 1
    rep = evaluate(state, inputs, exemplars, state.labels[1], inception_fn=lambda imgs: float(imgs.shape[0]),
                   timing_repeats=3)
    assert rep.num_pairs == 6 and rep.inception_score == 6.0
    assert rep.content_error_mean >= 0 and rep.style_error_mean >= 0 and rep.ms_per_image > 0
    rep.write_kv(tmp_path / "r.json")
    rep.write_table(tmp_path / "r.txt")
    data = json.loads((tmp_path / "r.json").read_text())
    assert EvalReport(**data) == rep
    assert "content error" in (tmp_path / "r.txt").read_text()
