"""Binary tensor container and train-state checkpoints.

Layout (all integers little-endian)::

    b"EDITCKPT"
    u32 header_len, header (UTF-8 JSON: format_version, config, extra metadata)
    u32 tensor_count
    per tensor: u16 name_len, name, u8 dtype tag, u8 ndim, ndim * u64 dims,
                u64 payload_len, payload
    32-byte SHA-256 over everything above
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import FormatError, IntegrityError

MAGIC = b"EDITCKPT"
FORMAT_VERSION = 1

_DTYPES = {
    1: (torch.float32, "<f4"),
    2: (torch.float64, "<f8"),
    3: (torch.int64, "<i8"),
    4: (torch.uint8, "|u1"),
    5: (torch.int32, "<i4"),
}
_TAGS = {dt: tag for tag, (dt, _) in _DTYPES.items()}


def write_container(path: str | Path, header: dict, tensors: dict[str, torch.Tensor]):
    buf = io.BytesIO()
    buf.write(MAGIC)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    buf.write(struct.pack("<I", len(head)))
    buf.write(head)
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        t = tensors[name].detach().cpu().contiguous()
        if t.dtype not in _TAGS:
            raise FormatError(f"unsupported dtype {t.dtype} for {name}")
        np_dtype = _DTYPES[_TAGS[t.dtype]][1]
        payload = t.numpy().astype(np_dtype, copy=False).tobytes()
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<BB", _TAGS[t.dtype], t.dim()))
        buf.write(struct.pack(f"<{t.dim()}Q", *t.shape))
        buf.write(struct.pack("<Q", len(payload)))
        buf.write(payload)
    body = buf.getvalue()
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise IntegrityError("checkpoint is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_container(path: str | Path) -> tuple[dict, dict[str, torch.Tensor]]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise FormatError(f"{path} is not a checkpoint container")
    r = _Reader(data)
    r.take(len(MAGIC))
    (hlen,) = r.unpack("<I")
    try:
        header = json.loads(r.take(hlen))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise IntegrityError(f"corrupt checkpoint header: {e}") from e
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"checkpoint format version {version}, expected {FORMAT_VERSION}")
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode()
        tag, ndim = r.unpack("<BB")
        if tag not in _DTYPES:
            raise IntegrityError(f"unknown dtype tag {tag} for {name}")
        shape = r.unpack(f"<{ndim}Q")
        (plen,) = r.unpack("<Q")
        arr = np.frombuffer(r.take(plen), dtype=_DTYPES[tag][1])
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise IntegrityError(f"payload size mismatch for {name}")
        tensors[name] = torch.from_numpy(arr.reshape(shape).copy())
    digest = r.take(32)
    if r.pos != len(data):
        raise IntegrityError("trailing bytes after checkpoint payload")
    if hashlib.sha256(data[:-32]).digest() != digest:
        raise IntegrityError("checkpoint checksum mismatch")
    return header, tensors


def _optimizer_tensors(prefix, opt, named_params):
    out, meta = {}, {}
    ids = {id(p): n for n, p in named_params}
    for group in opt.param_groups:
        for p in group["params"]:
            st = opt.state.get(p)
            if not st:
                continue
            name = ids[id(p)]
            out[f"{prefix}.{name}.exp_avg"] = st["exp_avg"]
            out[f"{prefix}.{name}.exp_avg_sq"] = st["exp_avg_sq"]
            meta[name] = float(st["step"])
    return out, meta


def _restore_optimizer(prefix, opt, named_params, tensors, meta):
    for name, p in named_params:
        if name not in meta:
            continue
        opt.state[p] = {
            "step": torch.tensor(meta[name]),
            "exp_avg": tensors[f"{prefix}.{name}.exp_avg"].clone(),
            "exp_avg_sq": tensors[f"{prefix}.{name}.exp_avg_sq"].clone(),
        }


def _named(state):
    g = [(f"generator.{n}", p) for n, p in state.generator.named_parameters()]
    g += [(f"param_net.{n}", p) for n, p in state.param_net.named_parameters() if p.requires_grad]
    d = [(f"discriminator.{n}", p) for n, p in state.discriminator.named_parameters()]
    return g, d


def state_tensors(state) -> tuple[dict, dict[str, torch.Tensor]]:
    tensors = {}
    for prefix, module in (("generator", state.generator), ("param_net", state.param_net),
                           ("discriminator", state.discriminator)):
        for name, t in module.state_dict().items():
            tensors[f"{prefix}.{name}"] = t
    g_named, d_named = _named(state)
    opt_g, meta_g = _optimizer_tensors("optim.g", state.opt_g, g_named)
    opt_d, meta_d = _optimizer_tensors("optim.d", state.opt_d, d_named)
    tensors.update(opt_g)
    tensors.update(opt_d)
    for k, buf in enumerate(state.buffers):
        if buf.storage:
            tensors[f"buffer.{k}"] = torch.stack(buf.storage)
    header = {
        "format_version": FORMAT_VERSION,
        "config": state.config.canonical_text(),
        "step": state.step,
        "optim": {"g": meta_g, "d": meta_d},
        "rng": state.rng.bit_generator.state,
        "backbone_widths": list(state.param_net.backbone.widths),
    }
    return header, tensors


def save_checkpoint(state, path: str | Path):
    header, tensors = state_tensors(state)
    write_container(path, header, tensors)


def load_checkpoint(path: str | Path):
    from .core import Config
    from .param_net import FixedBackbone
    from .trainer import build_state

    header, tensors = read_container(path)
    try:
        config = Config.from_dict(json.loads(header["config"]))
        backbone = FixedBackbone(tuple(header.get("backbone_widths", FixedBackbone().widths)))
        state = build_state(config, backbone)
        for prefix, module in (("generator", state.generator), ("param_net", state.param_net),
                               ("discriminator", state.discriminator)):
            sub = {k[len(prefix) + 1:]: v for k, v in tensors.items() if k.startswith(prefix + ".")}
            module.load_state_dict(sub, strict=True)
        state.param_net.backbone.freeze()
        g_named, d_named = _named(state)
        _restore_optimizer("optim.g", state.opt_g, g_named, tensors, header["optim"]["g"])
        _restore_optimizer("optim.d", state.opt_d, d_named, tensors, header["optim"]["d"])
        for k, buf in enumerate(state.buffers):
            if f"buffer.{k}" in tensors:
                buf.storage = list(tensors[f"buffer.{k}"].unbind(0))
        state.rng.bit_generator.state = header["rng"]
        state.step = int(header["step"])
    except (KeyError, RuntimeError) as e:
        raise IntegrityError(f"checkpoint {path} does not match its config: {e}") from e
    return state
