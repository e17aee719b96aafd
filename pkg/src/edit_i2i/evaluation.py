"""Content and style error metrics, plus parameter counts and timing."""

from __future__ import annotations

import json
import platform
import statistics
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import torch

from .generator import param_count
from .perceptual import extract, gram


def content_error(x, out, backbone, layer: int = 2) -> torch.Tensor:
    """Per-image L2 distance between the ``layer``-th feature maps."""
    fa = extract(x, backbone)[layer]
    fb = extract(out, backbone)[layer]
    return (fa - fb).flatten(1).norm(dim=1)


def style_error(out, exemplar, backbone, layers: Sequence[int] | None = None) -> torch.Tensor:
    """Per-image mean over layers of ||Gram(exemplar) - Gram(out)||^2 / (4 M^2 H^2 W^2)."""
    fo = extract(out, backbone, layers)
    fe = extract(exemplar, backbone, layers)
    total = 0.0
    for a, b in zip(fo, fe):
        m, h, w = a.shape[1:]
        diff = gram(b) - gram(a)
        total = total + diff.pow(2).sum(dim=(1, 2)) / (4.0 * m**2 * h**2 * w**2)
    return total / len(fo)


@dataclass
class ParamCounts:
    shared: int
    dynamic: int
    paramnet: int


def count_params(state) -> ParamCounts:
    shared = sum(p.numel() for p in state.generator.parameters())
    paramnet = sum(p.numel() for p in state.param_net.parameters())
    return ParamCounts(shared, param_count(state.spec), paramnet)


@torch.no_grad()
def time_inference(state, size: int, repeats: int = 30, warmup: int = 3) -> float:
    """Median milliseconds for one exemplar-conditioned translation."""
    x = torch.zeros(1, 3, size, size)
    label = state.labels[0]
    for _ in range(warmup):
        state.translate(x, x, label)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        state.translate(x, x, label)
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times)


@dataclass
class EvalReport:
    content_error_mean: float
    content_error_std: float
    style_error_mean: float
    style_error_std: float
    shared_param_count: int
    dynamic_param_count: int
    paramnet_param_count: int
    ms_per_image: float
    image_size: int
    hardware: str
    num_pairs: int
    inception_score: float | None = None

    def write_kv(self, path: str | Path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    def table(self) -> str:
        rows = [
            ("content error", f"{self.content_error_mean:.4f} +- {self.content_error_std:.4f}"),
            ("style error", f"{self.style_error_mean:.6f} +- {self.style_error_std:.6f}"),
            ("inception score", "disabled" if self.inception_score is None else f"{self.inception_score:.3f}"),
            ("params shared", str(self.shared_param_count)),
            ("params dynamic", str(self.dynamic_param_count)),
            ("params param-net", str(self.paramnet_param_count)),
            ("ms / image", f"{self.ms_per_image:.2f} ({self.image_size}px, {self.hardware})"),
            ("pairs evaluated", str(self.num_pairs)),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows) + "\n"

    def write_table(self, path: str | Path):
        Path(path).write_text(self.table())


def _mean_std(values: list[float]) -> tuple[float, float]:
    if len(values) == 1:
        return values[0], 0.0
    return statistics.fmean(values), statistics.pstdev(values)


@torch.no_grad()
def evaluate(state, inputs: torch.Tensor, exemplars: torch.Tensor, label,
             inception_fn: Callable[[torch.Tensor], float] | None = None,
             timing_repeats: int = 30) -> EvalReport:
    """Translate every input with every exemplar and aggregate both errors."""
    cfg = state.config
    backbone = state.param_net.backbone
    cont, sty, outputs = [], [], []
    for ex in exemplars:
        theta = state.param_net(ex[None], label)
        out = state.generator(inputs, theta.expand(inputs.shape[0], -1))
        cont += content_error(inputs, out, backbone, cfg.content_layer).tolist()
        sty += style_error(out, ex[None].expand_as(out), backbone, cfg.style_layers).tolist()
        outputs.append(out)
    counts = count_params(state)
    c_mean, c_std = _mean_std(cont)
    s_mean, s_std = _mean_std(sty)
    score = inception_fn(torch.cat(outputs)) if inception_fn is not None else None
    return EvalReport(
        c_mean, c_std, s_mean, s_std,
        counts.shared, counts.dynamic, counts.paramnet,
        time_inference(state, inputs.shape[-1], timing_repeats),
        inputs.shape[-1], f"{platform.machine()} cpu x{torch.get_num_threads()}",
        len(cont), score,
    )
