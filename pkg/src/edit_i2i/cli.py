"""Command-line entry point: train, translate, interpolate, evaluate, inspect."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from pathlib import Path

import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .core import Config
from .data import (
    DomainDataset,
    SyntheticScenario,
    UnpairedSampler,
    read_image,
    save_image,
)
from .errors import EditError, UsageError
from .evaluation import count_params, evaluate
from .param_net import interpolate
from .trainer import fit

log = logging.getLogger("edit_i2i")


def _data_root(cfg: Config) -> str | None:
    return os.environ.get("EDIT_DATA_ROOT") or cfg.data_root


def _sources(cfg: Config, labels, split: str):
    root = _data_root(cfg)
    if root in (None, "", "synthetic"):
        seed = cfg.seed if split == "train" else cfg.seed + 1
        scenario = SyntheticScenario(cfg.image_size, cfg.synthetic_per_domain, seed, names=tuple(cfg.domains))
        return scenario.sources(labels)
    return [DomainDataset.from_root(root, lab, split) for lab in labels]


def _check_file(path, what):
    if path is None:
        raise UsageError(f"--{what} is required")
    if not Path(path).is_file():
        raise UsageError(f"{what} file not found: {path}")


def _load(args):
    _check_file(args.checkpoint, "checkpoint")
    state = load_checkpoint(args.checkpoint)
    state.generator.eval()
    return state


def _image_for(path, state, what) -> torch.Tensor:
    """Read an input image, shrinking it to a multiple of the generator's stride if needed."""
    img = read_image(path)
    f = state.spec.downsample_factor
    h, w = img.shape[-2:]
    if h % f or w % f:
        nh, nw = max(f, h // f * f), max(f, w // f * f)
        warnings.warn(f"{what} {h}x{w} is not a multiple of {f}; resizing to {nh}x{nw}")
        img = torch.nn.functional.interpolate(img[None], size=(nh, nw), mode="bilinear",
                                              align_corners=False)[0]
    return img


def _exemplar(path, state) -> torch.Tensor:
    size = state.config.image_size
    if path is None:
        return -torch.ones(3, size, size)
    return read_image(path, size)


@torch.no_grad()
def cmd_translate(args):
    _check_file(args.input, "input")
    if args.exemplar is not None:
        _check_file(args.exemplar, "exemplar")
    if args.output is None:
        raise UsageError("--output is required")
    state = _load(args)
    label = state.config.registry().label(args.domain)
    x = _image_for(args.input, state, "input")
    ex = _exemplar(args.exemplar, state)
    out = state.translate(x[None], ex[None], label)[0]
    save_image(out, args.output)
    print(args.output)


@torch.no_grad()
def cmd_interpolate(args):
    for what in ("input", "exemplar_a", "exemplar_b"):
        _check_file(getattr(args, what), what.replace("_", "-"))
    if args.steps < 2:
        raise UsageError("--steps must be >= 2")
    if args.output is None:
        raise UsageError("--output directory is required")
    state = _load(args)
    label = state.config.registry().label(args.domain)
    x = _image_for(args.input, state, "input")
    size_a = read_image(args.exemplar_a).shape[-2:]
    size_b = read_image(args.exemplar_b).shape[-2:]
    if size_a != size_b:
        warnings.warn(f"exemplar sizes differ ({tuple(size_a)} vs {tuple(size_b)}); both resized")
    theta_a = state.param_net(_exemplar(args.exemplar_a, state)[None], label)
    theta_b = state.param_net(_exemplar(args.exemplar_b, state)[None], label)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    digits = max(3, len(str(args.steps - 1)))
    for k in range(args.steps):
        alpha = k / (args.steps - 1)
        frame = state.generator(x[None], interpolate(theta_a, theta_b, alpha))[0]
        path = out_dir / f"frame_{k:0{digits}d}.png"
        save_image(frame, path)
        print(path)


def cmd_train(args):
    cfg = Config.load(args.config) if args.config else Config()
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.validate()
    if args.resume:
        _check_file(args.resume, "resume")
        state = load_checkpoint(args.resume)
        cfg = state.config
    else:
        from .trainer import build_state
        state = build_state(cfg)
    out = Path(args.output or "runs/edit")
    out.mkdir(parents=True, exist_ok=True)
    sources = _sources(cfg, state.labels, "train")
    sampler = UnpairedSampler(sources, cfg.image_size, cfg.batch_size, augment=True, seed=cfg.seed)
    total = cfg.total_epochs * cfg.steps_per_epoch
    steps = args.steps if args.steps is not None else total - state.step
    if steps < 0 or state.step + steps > total:
        raise UsageError(f"{steps} steps from step {state.step} exceed the schedule of {total}")
    samples = out / "samples"

    def on_step(st, report):
        if cfg.sample_every and st.step % cfg.sample_every == 0:
            samples.mkdir(exist_ok=True)
            _write_sample_grid(st, sampler, samples / f"step_{st.step:07d}.png")

    def on_epoch_end(st):
        save_checkpoint(st, out / f"epoch_{int(st.epoch()):04d}.edit")

    fit(state, sampler, steps, out / "train_log.csv", on_step, on_epoch_end)
    save_checkpoint(state, out / "final.edit")
    print(out / "final.edit")


@torch.no_grad()
def _write_sample_grid(state, sampler, path):
    a, b = state.config.pairs()[0]
    x, y = sampler.batch(a)[:1], sampler.batch(b)[:1]
    labels = state.labels
    x_hat = state.translate(x, y, labels[b])
    y_hat = state.translate(y, x, labels[a])
    row1 = torch.cat([x[0], y[0], x_hat[0]], dim=2)
    row2 = torch.cat([y[0], x[0], y_hat[0]], dim=2)
    save_image(torch.cat([row1, row2], dim=1), path)


def cmd_evaluate(args):
    try:
        src_name, tgt_name = args.domain_pair.split(",")
    except (AttributeError, ValueError):
        raise UsageError("--domain-pair must look like SRC,TGT") from None
    state = _load(args)
    reg = state.config.registry()
    src, tgt = reg.label(src_name), reg.label(tgt_name)
    if args.dataset:
        os.environ["EDIT_DATA_ROOT"] = args.dataset
    sources = _sources(state.config, state.labels, "test")
    size = state.config.image_size
    inputs = torch.stack([sources[src.index].image(i, size) for i in range(len(sources[src.index]))])
    n_ex = min(args.num_exemplars, len(sources[tgt.index]))
    exemplars = torch.stack([sources[tgt.index].image(i, size) for i in range(n_ex)])
    report = evaluate(state, inputs, exemplars, tgt)
    prefix = Path(args.output or "eval_report")
    report.write_table(prefix.with_suffix(".txt"))
    report.write_kv(prefix.with_suffix(".json"))
    print(report.table(), end="")


def cmd_inspect(args):
    state = _load(args)
    counts = count_params(state)
    print(f"domains: {', '.join(state.config.domains)}")
    print(f"step: {state.step}")
    print(f"shared_param_count: {counts.shared}")
    print(f"dynamic_param_count: {counts.dynamic}")
    print(f"paramnet_param_count: {counts.paramnet}")
    print("dynamic blocks:")
    for name, block in state.spec.dynamic_blocks():
        print(f"  {name} {block.kind} k{block.kernel} {block.in_ch}->{block.out_ch} "
              f"norm={block.norm} act={block.activation} params={block.param_size}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--device", default="cpu")

    p = argparse.ArgumentParser(prog="edit-i2i", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common])
    t.add_argument("--config")
    t.add_argument("--resume")
    t.add_argument("--output", help="run directory")
    t.add_argument("--steps", type=int, help="stop after this many steps")
    t.set_defaults(func=cmd_train)

    tr = sub.add_parser("translate", parents=[common])
    tr.add_argument("--checkpoint")
    tr.add_argument("--input")
    tr.add_argument("--exemplar", help="style image; omitted means a black exemplar")
    tr.add_argument("--domain", required=True)
    tr.add_argument("--output")
    tr.set_defaults(func=cmd_translate)

    it = sub.add_parser("interpolate", parents=[common])
    it.add_argument("--checkpoint")
    it.add_argument("--input")
    it.add_argument("--exemplar-a", dest="exemplar_a")
    it.add_argument("--exemplar-b", dest="exemplar_b")
    it.add_argument("--domain", required=True)
    it.add_argument("--steps", type=int, default=5)
    it.add_argument("--output", help="output directory")
    it.set_defaults(func=cmd_interpolate)

    ev = sub.add_parser("evaluate", parents=[common])
    ev.add_argument("--checkpoint")
    ev.add_argument("--dataset", help="dataset root, or 'synthetic'")
    ev.add_argument("--domain-pair", dest="domain_pair", required=True)
    ev.add_argument("--num-exemplars", dest="num_exemplars", type=int, default=10)
    ev.add_argument("--output", help="report path prefix (.txt and .json are written)")
    ev.set_defaults(func=cmd_evaluate)

    ins = sub.add_parser("inspect", parents=[common])
    ins.add_argument("--checkpoint")
    ins.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    if args.device != "cpu":
        print(f"edit-i2i: error[usage]: only the cpu device is supported, got {args.device!r}",
              file=sys.stderr)
        return UsageError.exit_code
    if args.seed is not None and args.command != "train":
        torch.manual_seed(args.seed)
    try:
        args.func(args)
    except EditError as e:
        print(f"edit-i2i: error[{e.kind}]: {' '.join(str(e).split())}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
