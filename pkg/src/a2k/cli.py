"""Command-line front end.

    a2k run    --content C.a2kt --style S.a2kt --config-dir DIR --mode a2k --out O.a2kt
    a2k bench  --sizes 32,64,128 --channels 64 --block balanced --mechanism a2k,all2all
    a2k loss   --stylized DIR --content DIR --style DIR [--config-dir DIR] [--weights 10,0.5,1.5]
    a2k init-config DIR --channels 64 [--block 8 --heads 8 --seed 0 --non-parametric]

Exit codes: 0 success, 2 I/O or format problem, 3 validation or configuration problem.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import tensorio
from .attention import DEFAULT_HEADS, LAYER_PATCH_EDGES, A2KConfig, a2k_forward, load_config, save_config
from .bench import run_bench, to_csv
from .errors import ConfigError, DimensionError, FormatError, ValidationError
from .losses import (
    LossWeights,
    a2k_matching_loss,
    ada_a2k_matching_loss,
    global_style_loss,
    load_feature_dir,
    matching_configs,
    total_loss,
)
from .stats import ada_a2k_forward, all2all_adaattn_forward

EXIT_OK = 0
EXIT_IO = 2
EXIT_INVALID = 3

MODES = ("a2k", "ada_a2k", "all2all_adaattn")


class _UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise _UsageError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise _UsageError("empty list")
    return values


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise _UsageError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_run(args) -> int:
    content = tensorio.load(args.content)
    style = tensorio.load(args.style)
    if args.mode == "all2all_adaattn":
        out = all2all_adaattn_forward(content, style)
    else:
        overrides = {}
        if args.no_da:
            overrides["enable_da"] = False
        if args.no_pa:
            overrides["enable_pa"] = False
        if args.no_pa_step1:
            overrides["enable_pa_step1"] = False
        cfg = load_config(args.config_dir, **overrides)
        forward = a2k_forward if args.mode == "a2k" else ada_a2k_forward
        out = forward(content, style, cfg)
    tensorio.save(args.out, out)
    shape = "x".join(str(d) for d in out.shape)
    print(f"shape={shape} sha256={tensorio.checksum(out)} sum={float(out.astype(np.float64).sum()):.9g}")
    return EXIT_OK


def cmd_bench(args) -> int:
    sizes = _int_list(args.sizes)
    mechanisms = [m.strip() for m in args.mechanism.split(",") if m.strip()]
    block = args.block if args.block == "balanced" else _int_list(args.block)[0]
    records = run_bench(sizes, args.channels, block, args.heads, mechanisms, args.reps, args.seed)
    text = to_csv(records)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _loss_settings(config_dir):
    edges, heads = LAYER_PATCH_EDGES, DEFAULT_HEADS
    if config_dir is None:
        return edges, heads
    path = Path(config_dir) / "config.json"
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    edges = tuple(manifest.get("layer_patch_edges", edges))
    heads = int(manifest.get("heads", heads))
    return edges, heads


def cmd_loss(args) -> int:
    values = _float_list(args.weights)
    if len(values) != 3:
        raise _UsageError(f"--weights needs three values, got {len(values)}")
    weights = LossWeights(*values)
    stylized = load_feature_dir(args.stylized)
    content = load_feature_dir(args.content)
    style = load_feature_dir(args.style)
    edges, heads = _loss_settings(args.config_dir)
    configs = matching_configs(content, edges, heads)
    parts = (
        global_style_loss(stylized, style),
        a2k_matching_loss(stylized, content, style, configs),
        ada_a2k_matching_loss(stylized, content, style, configs),
    )
    total = total_loss(parts, weights)
    print("global_style,a2k,ada_a2k,total")
    print(",".join(repr(float(v)) for v in (*parts, total)))
    return EXIT_OK


def cmd_init_config(args) -> int:
    cfg = A2KConfig(
        channels=args.channels,
        patch_edge=args.block,
        heads=args.heads,
        seed=args.seed,
        parametric=not args.non_parametric,
    )
    save_config(cfg, args.directory)
    print(f"wrote {args.directory}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="a2k", description="All-to-key attention kernels and benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="transform a content/style pair of A2KT feature maps")
    run.add_argument("--content", required=True)
    run.add_argument("--style", required=True)
    run.add_argument("--config-dir")
    run.add_argument("--mode", choices=MODES, default="a2k")
    run.add_argument("--out", required=True)
    run.add_argument("--no-da", action="store_true", help="disable distributed attention")
    run.add_argument("--no-pa", action="store_true", help="disable progressive attention")
    run.add_argument("--no-pa-step1", action="store_true", help="skip the patch matching step of PA")
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("bench", help="multiply counts and timings versus image size, as CSV")
    bench.add_argument("--sizes", default="32,64,128")
    bench.add_argument("--channels", type=int, default=64)
    bench.add_argument("--block", default="balanced", help="'balanced' or a fixed patch edge")
    bench.add_argument("--heads", type=int, default=DEFAULT_HEADS)
    bench.add_argument("--mechanism", default="a2k,all2all")
    bench.add_argument("--reps", type=int, default=1)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out")
    bench.set_defaults(func=cmd_bench)

    loss = sub.add_parser("loss", help="evaluate the three loss terms on layer1..layer5 A2KT directories")
    loss.add_argument("--stylized", required=True)
    loss.add_argument("--content", required=True)
    loss.add_argument("--style", required=True)
    loss.add_argument("--config-dir")
    loss.add_argument("--weights", default="10,0.5,1.5")
    loss.set_defaults(func=cmd_loss)

    init = sub.add_parser("init-config", help="write a seeded config directory")
    init.add_argument("directory")
    init.add_argument("--channels", type=int, required=True)
    init.add_argument("--block", type=int, default=8)
    init.add_argument("--heads", type=int, default=DEFAULT_HEADS)
    init.add_argument("--seed", type=int, default=0)
    init.add_argument("--non-parametric", action="store_true")
    init.set_defaults(func=cmd_init_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "run" and args.mode != "all2all_adaattn" and not args.config_dir:
        print("error: --config-dir is required for this mode", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ConfigError, DimensionError, _UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
