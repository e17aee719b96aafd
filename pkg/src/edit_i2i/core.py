"""Domain labels and the run configuration, including the generator layout."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import torch
import yaml

from .errors import ConfigError, DomainError, ShapeError, UsageError

BLOCK_KINDS = ("conv", "resblock", "upconv", "output")
NORMS = ("instance", "none")
ACTIVATIONS = ("relu", "tanh", "none")
NUM_TAPS = 5


@dataclass(frozen=True)
class DomainLabel:
    index: int
    num_domains: int
    name: str = ""

    @property
    def onehot(self) -> torch.Tensor:
        vec = torch.zeros(self.num_domains)
        vec[self.index] = 1.0
        return vec


def make_onehot(index: int, num_domains: int, name: str = "") -> DomainLabel:
    if num_domains < 2:
        raise DomainError(f"need at least 2 domains, got {num_domains}")
    if not 0 <= index < num_domains:
        raise DomainError(f"domain index {index} outside [0, {num_domains})")
    return DomainLabel(int(index), int(num_domains), name)


class DomainRegistry:
    """Ordered domain names; position in the list fixes the label index."""

    def __init__(self, names: Sequence[str]):
        names = list(names)
        if len(names) < 2:
            raise ConfigError("at least two domains are required")
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate domain names in {names}")
        self.names = names

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def label(self, key: int | str) -> DomainLabel:
        if isinstance(key, str):
            if key not in self.names:
                raise UsageError(
                    f"unknown domain {key!r}; registered domains: {', '.join(self.names)}"
                )
            key = self.names.index(key)
        return make_onehot(key, len(self.names), self.names[key])


@dataclass(frozen=True)
class BlockSpec:
    kind: str
    kernel: int
    stride: int
    in_ch: int
    out_ch: int
    dynamic: bool = False
    norm: str = "instance"
    activation: str = "relu"

    def __post_init__(self):
        if self.kind not in BLOCK_KINDS:
            raise ShapeError(f"unknown block kind {self.kind!r}")
        if self.norm not in NORMS or self.activation not in ACTIVATIONS:
            raise ShapeError(f"bad norm/activation {self.norm}/{self.activation}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ShapeError(f"kernel must be odd and positive, got {self.kernel}")
        if self.stride not in (1, 2):
            raise ShapeError(f"stride must be 1 or 2, got {self.stride}")
        if self.kind in ("resblock", "upconv", "output") and self.stride != 1:
            raise ShapeError(f"{self.kind} blocks use stride 1")
        if self.kind == "resblock" and self.in_ch != self.out_ch:
            raise ShapeError("residual blocks must preserve channels")
        if self.in_ch < 1 or self.out_ch < 1:
            raise ShapeError("channel counts must be positive")

    @property
    def num_convs(self) -> int:
        return 2 if self.kind == "resblock" else 1

    def conv_tensor_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Named tensor shapes in flat-layout order."""
        shapes = []
        for i in range(self.num_convs):
            suffix = "" if i == 0 else str(i + 1)
            cin = self.in_ch if i == 0 else self.out_ch
            shapes.append((f"weight{suffix}", (self.out_ch, cin, self.kernel, self.kernel)))
            shapes.append((f"bias{suffix}", (self.out_ch,)))
            if self.norm == "instance":
                shapes.append((f"scale{suffix}", (self.out_ch,)))
                shapes.append((f"shift{suffix}", (self.out_ch,)))
        return shapes

    @property
    def param_size(self) -> int:
        total = 0
        for _, shape in self.conv_tensor_shapes():
            n = 1
            for s in shape:
                n *= s
            total += n
        return total


@dataclass(frozen=True)
class GeneratorSpec:
    blocks: tuple[BlockSpec, ...]
    base_width: int = 16

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.blocks:
            raise ShapeError("generator needs at least one block")
        if self.blocks[0].in_ch != 3 or self.blocks[-1].out_ch != 3:
            raise ShapeError("generator must map 3 channels to 3 channels")
        for i, (a, b) in enumerate(zip(self.blocks, self.blocks[1:])):
            if a.out_ch != b.in_ch:
                raise ShapeError(
                    f"block {i} emits {a.out_ch} channels but block {i + 1} expects {b.in_ch}"
                )
        downs = sum(b.stride == 2 for b in self.blocks)
        ups = sum(b.kind == "upconv" for b in self.blocks)
        if downs != ups:
            raise ShapeError(f"{downs} downsampling vs {ups} upsampling blocks")

    def check_partition(self):
        flags = [b.dynamic for b in self.blocks]
        if not any(flags) or all(flags):
            raise ShapeError("need at least one dynamic and one shared block")

    @property
    def downsample_factor(self) -> int:
        return 2 ** sum(b.stride == 2 for b in self.blocks)

    def block_names(self) -> list[str]:
        return [f"b{i:02d}" for i in range(len(self.blocks))]

    def dynamic_blocks(self) -> list[tuple[str, BlockSpec]]:
        return [(n, b) for n, b in zip(self.block_names(), self.blocks) if b.dynamic]

    def shared_blocks(self) -> list[tuple[str, BlockSpec]]:
        return [(n, b) for n, b in zip(self.block_names(), self.blocks) if not b.dynamic]

    def to_dict(self) -> dict:
        return {"base_width": self.base_width, "blocks": [dataclasses.asdict(b) for b in self.blocks]}

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        return cls(tuple(BlockSpec(**b) for b in d["blocks"]), d.get("base_width", 16))


def default_generator_spec(
    base_width: int = 16,
    n_res: int = 9,
    dynamic_kinds: Iterable[str] = ("upconv", "output"),
) -> GeneratorSpec:
    """Encoder c7s1-W, d2W, d4W; ``n_res`` residual blocks; two resize-convs and a 7x7 tanh output."""
    w = base_width
    dyn = set(dynamic_kinds)
    blocks = [
        BlockSpec("conv", 7, 1, 3, w, "conv" in dyn),
        BlockSpec("conv", 3, 2, w, 2 * w, "conv" in dyn),
        BlockSpec("conv", 3, 2, 2 * w, 4 * w, "conv" in dyn),
    ]
    blocks += [BlockSpec("resblock", 3, 1, 4 * w, 4 * w, "resblock" in dyn) for _ in range(n_res)]
    blocks += [
        BlockSpec("upconv", 3, 1, 4 * w, 2 * w, "upconv" in dyn),
        BlockSpec("upconv", 3, 1, 2 * w, w, "upconv" in dyn),
        BlockSpec("output", 7, 1, w, 3, "output" in dyn, norm="none", activation="tanh"),
    ]
    return GeneratorSpec(tuple(blocks), base_width)


@dataclass
class Config:
    domains: list[str] = field(default_factory=lambda: ["edges", "photos"])
    image_size: int = 32
    base_width: int = 16
    n_res: int = 9
    dynamic_kinds: list[str] = field(default_factory=lambda: ["upconv", "output"])
    lambda_cyc: float = 10.0
    eta_sty: float = 0.05
    lr: float = 0.001
    paramnet_lr_scale: float = 0.05
    total_epochs: int = 100
    decay_start_epoch: int = 50
    steps_per_epoch: int = 100
    batch_size: int = 1
    buffer_capacity: int = 50
    seed: int = 0
    style_layers: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    content_layer: int = 2
    embed_dim: int = 128
    disc_base_width: int = 16
    domain_pairs: list[list[int]] | None = None
    grad_clip: float | None = None
    saturating_gan: bool = False
    data_root: str | None = None
    synthetic_per_domain: int = 64
    sample_every: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        def bad(msg):
            raise ConfigError(msg)

        DomainRegistry(self.domains)
        if self.image_size % 4 != 0:
            bad(f"image_size must be divisible by 4, got {self.image_size}")
        if self.image_size < 24:
            bad("image_size below 24 leaves the patch discriminator without output")
        for name in ("base_width", "embed_dim", "disc_base_width", "batch_size",
                     "buffer_capacity", "total_epochs", "steps_per_epoch", "synthetic_per_domain"):
            if getattr(self, name) < 1:
                bad(f"{name} must be >= 1")
        if self.n_res < 0:
            bad("n_res must be >= 0")
        for name in ("lr", "paramnet_lr_scale"):
            if not getattr(self, name) > 0:
                bad(f"{name} must be > 0")
        for name in ("lambda_cyc", "eta_sty"):
            if not getattr(self, name) >= 0:
                bad(f"{name} must be >= 0")
        if not 0 <= self.decay_start_epoch <= self.total_epochs:
            bad("decay_start_epoch must lie in [0, total_epochs]")
        if not self.style_layers or any(not 0 <= i < NUM_TAPS for i in self.style_layers):
            bad(f"style_layers must be non-empty tap indices in [0, {NUM_TAPS})")
        if not 0 <= self.content_layer < NUM_TAPS:
            bad("content_layer out of range")
        if self.grad_clip is not None and not self.grad_clip > 0:
            bad("grad_clip must be positive when set")
        for pair in self.pairs():
            if len(pair) != 2 or pair[0] == pair[1] or any(not 0 <= i < len(self.domains) for i in pair):
                bad(f"invalid domain pair {pair}")
        try:
            self.generator_spec().check_partition()
        except ShapeError as e:
            bad(str(e))

    def pairs(self) -> list[tuple[int, int]]:
        if self.domain_pairs is not None:
            return [tuple(p) for p in self.domain_pairs]
        n = len(self.domains)
        return [(i, j) for i in range(n) for j in range(i + 1, n)]

    def generator_spec(self) -> GeneratorSpec:
        return default_generator_spec(self.base_width, self.n_res, self.dynamic_kinds)

    def registry(self) -> DomainRegistry:
        return DomainRegistry(self.domains)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_text(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "Config":
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        return cls.from_dict(data)

    def save(self, path: str | Path):
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)
