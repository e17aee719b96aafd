"""Unpaired multi-domain image sources and a procedural shape generator."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from PIL import Image

from .core import DomainLabel
from .errors import DataError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
SHAPES = ("circle", "square", "triangle")
TEXTURES = ("flat", "stripes", "noise")


def to_tensor(img: Image.Image, size: int | None = None) -> torch.Tensor:
    """PIL image -> [3, H, W] float32 in [-1, 1], bilinear resize when ``size`` is given."""
    img = img.convert("RGB")
    if size is not None and img.size != (size, size):
        img = img.resize((size, size), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 127.5 - 1.0
    return torch.from_numpy(arr.transpose(2, 0, 1).copy())


def to_pil(t: torch.Tensor) -> Image.Image:
    arr = ((t.detach().cpu().clamp(-1, 1) + 1.0) * 127.5).round().to(torch.uint8)
    return Image.fromarray(arr.permute(1, 2, 0).numpy())


def read_image(path: str | Path, size: int | None = None) -> torch.Tensor:
    try:
        with Image.open(path) as img:
            return to_tensor(img, size)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot decode image {path}: {e}") from e


def save_image(t: torch.Tensor, path: str | Path):
    to_pil(t).save(path)


@dataclass
class DomainDataset:
    domain: DomainLabel
    split: str
    items: list[Path]

    def __post_init__(self):
        if not self.items:
            raise DataError(f"no images for domain {self.domain.name!r} ({self.split})")

    def __len__(self):
        return len(self.items)

    @classmethod
    def from_root(cls, root: str | Path, domain: DomainLabel, split: str = "train") -> "DomainDataset":
        folder = Path(root) / domain.name / split
        if not folder.is_dir():
            raise DataError(f"missing dataset folder {folder}")
        items = sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        return cls(domain, split, items)

    @classmethod
    def from_manifest(cls, path: str | Path, domain: DomainLabel, split: str = "train") -> "DomainDataset":
        base = Path(path).parent
        lines = Path(path).read_text().splitlines()
        return cls(domain, split, [base / ln for ln in lines if ln.strip()])

    def write_manifest(self, path: str | Path):
        base = Path(path).parent
        Path(path).write_text("".join(f"{p.relative_to(base)}\n" for p in self.items))

    def image(self, index: int, size: int) -> torch.Tensor:
        return read_image(self.items[index], size)


@dataclass
class InMemoryDomain:
    """Pre-rendered images, e.g. from ``generate_synthetic``."""

    domain: DomainLabel
    images: torch.Tensor
    split: str = "train"

    def __len__(self):
        return self.images.shape[0]

    def image(self, index: int, size: int) -> torch.Tensor:
        img = self.images[index]
        if img.shape[-1] != size or img.shape[-2] != size:
            img = torch.nn.functional.interpolate(
                img[None], size=(size, size), mode="bilinear", align_corners=False
            )[0]
        return img


def load_batch(ds, indices: Sequence[int], size: int, augment: bool = False,
               rng: np.random.Generator | None = None) -> torch.Tensor:
    """Stack images, optionally flipping each horizontally with probability 0.5."""
    out = []
    for i in indices:
        img = ds.image(int(i), size)
        if augment:
            if rng is None:
                raise ValueError("augmentation needs an rng")
            if rng.random() < 0.5:
                img = img.flip(-1)
        out.append(img)
    return torch.stack(out)


class UnpairedSampler:
    """Independent shuffled streams per domain; no index alignment across domains."""

    def __init__(self, sources: Sequence, size: int, batch_size: int = 1, augment: bool = True,
                 seed: int = 0):
        self.sources = list(sources)
        self.size = size
        self.batch_size = batch_size
        self.augment = augment
        self.rngs = [np.random.default_rng([seed, k]) for k in range(len(self.sources))]
        self.aug_rng = np.random.default_rng([seed, 1 << 16])
        self._orders = [np.empty(0, dtype=np.int64) for _ in self.sources]
        self._pos = [0] * len(self.sources)

    def _next_indices(self, k: int) -> list[int]:
        idx = []
        while len(idx) < self.batch_size:
            if self._pos[k] >= len(self._orders[k]):
                self._orders[k] = self.rngs[k].permutation(len(self.sources[k]))
                self._pos[k] = 0
            idx.append(int(self._orders[k][self._pos[k]]))
            self._pos[k] += 1
        return idx

    def batch(self, k: int) -> torch.Tensor:
        return load_batch(self.sources[k], self._next_indices(k), self.size, self.augment, self.aug_rng)


# ---------------------------------------------------------------------------
# procedural domains

PALETTES = {
    "red": [(0.9, 0.1, 0.1), (0.7, 0.0, 0.15)],
    "blue": [(0.1, 0.15, 0.9), (0.0, 0.3, 0.7)],
    "green": [(0.1, 0.75, 0.2), (0.0, 0.5, 0.1)],
    "yellow": [(0.95, 0.85, 0.1), (0.8, 0.65, 0.0)],
}


@dataclass(frozen=True)
class SyntheticStyleSpec:
    shape_family: str = "circle"
    palette: tuple = tuple(PALETTES["red"])
    texture: str = "flat"
    outline_only: bool = False
    seed: int = 0
    background: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.shape_family not in SHAPES:
            raise ValueError(f"unknown shape family {self.shape_family!r}")
        if self.texture not in TEXTURES:
            raise ValueError(f"unknown texture {self.texture!r}")
        if not self.palette:
            raise ValueError("palette must be non-empty")


def _shape_mask(family, yy, xx, cy, cx, r):
    if family == "circle":
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    if family == "square":
        return (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r)
    # upward triangle with apex at (cy - r, cx) and base at cy + r
    t = (yy - (cy - r)) / (2 * r)
    return (t >= 0) & (t <= 1) & (np.abs(xx - cx) <= t * r)


def _erode(mask, steps):
    m = mask.copy()
    for _ in range(steps):
        inner = m.copy()
        inner[1:, :] &= m[:-1, :]
        inner[:-1, :] &= m[1:, :]
        inner[:, 1:] &= m[:, :-1]
        inner[:, :-1] &= m[:, 1:]
        inner[0, :] = inner[-1, :] = inner[:, 0] = inner[:, -1] = False
        m = inner
    return m


def render_synthetic(spec: SyntheticStyleSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    """One [size, size, 3] float image in [0, 1]."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    r = rng.uniform(0.22, 0.38) * size
    cy, cx = rng.uniform(r + 1, size - r - 1, size=2)
    mask = _shape_mask(spec.shape_family, yy, xx, cy, cx, r)
    palette = np.asarray(spec.palette, dtype=np.float64)
    base = palette[rng.integers(len(palette))]
    img = np.empty((size, size, 3))
    img[:] = np.asarray(spec.background, dtype=np.float64)
    if spec.outline_only:
        width = max(1, size // 16)
        mask = mask & ~_erode(mask, width)
    if spec.texture == "flat":
        fill = np.broadcast_to(base, (size, size, 3))
    elif spec.texture == "stripes":
        period = max(2, size // 8)
        alt = palette[(rng.integers(len(palette)) + 1) % len(palette)] * 0.6
        phase = rng.integers(period)
        band = (((xx + yy + phase) // (period / 2)) % 2).astype(bool)[..., None]
        fill = np.where(band, base, alt)
    else:
        fill = np.clip(base + rng.normal(0.0, 0.08, size=(size, size, 3)), 0.0, 1.0)
    img[mask] = fill[mask]
    return img


def generate_synthetic(spec: SyntheticStyleSpec, n: int, size: int) -> list[torch.Tensor]:
    """``n`` images as [3, size, size] tensors in [-1, 1]; bitwise reproducible for a given seed."""
    if n < 1 or size < 16:
        raise ValueError("need n >= 1 and size >= 16")
    rng = np.random.default_rng(spec.seed)
    out = []
    for _ in range(n):
        img = render_synthetic(spec, size, rng) * 2.0 - 1.0
        out.append(torch.from_numpy(img.transpose(2, 0, 1).astype(np.float32)))
    return out


FILLED_BACKGROUNDS = ((0.45, 0.45, 0.5), (0.1, 0.1, 0.1), (0.8, 0.75, 0.6))


@dataclass
class SyntheticScenario:
    """Procedural domains: outline drawings on white, then filled textured shapes on plain grounds.

    Palettes vary inside each domain and act as exemplar styles.
    """

    size: int = 32
    per_domain: int = 64
    seed: int = 0
    palettes: Sequence[str] = ("red", "blue", "green", "yellow")
    names: tuple = ("edges", "photos")
    specs: dict = field(init=False)

    def __post_init__(self):
        self.specs = {name: [] for name in self.names}
        for d, name in enumerate(self.names):
            for k, pal in enumerate(self.palettes):
                for j, family in enumerate(SHAPES):
                    seed = self.seed * 100_000 + d * 1000 + k * 10 + j
                    if d == 0:
                        spec = SyntheticStyleSpec(family, tuple(PALETTES[pal]), "flat", True, seed)
                    else:
                        bg = FILLED_BACKGROUNDS[(d - 1) % len(FILLED_BACKGROUNDS)]
                        spec = SyntheticStyleSpec(family, tuple(PALETTES[pal]), TEXTURES[(k + j + d) % 3],
                                                  False, seed, background=bg)
                    self.specs[name].append(spec)

    def domain_images(self, name: str) -> torch.Tensor:
        specs = self.specs[name]
        per_spec = -(-self.per_domain // len(specs))
        images = [img for s in specs for img in generate_synthetic(s, per_spec, self.size)]
        return torch.stack(images[: self.per_domain])

    def sources(self, labels: Sequence[DomainLabel]) -> list[InMemoryDomain]:
        return [InMemoryDomain(lab, self.domain_images(lab.name)) for lab in labels]
