"""Command-line interface.

Subcommands: extract (residual images), generate (datasets), train, eval,
ablate (ablation / fusion grids), bench (filter timing). Configuration merges
defaults, an optional JSON config file (--config or the GRES_CONFIG
environment variable), then --set key=value overrides. Errors surface as one
line on stderr naming the failing step, with a nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import config as cfgmod
from .checkpoint import load_model, save_checkpoint
from .data import (SCENARIOS, DatasetConfig, build_dataset, generate_split,
                   load_arrays, load_manifest)
from .experiment import DataCache, StreamSet, ablation_grid, extract_stream, fusion_grid
from .guided_filter import GuidedFilterParams, guided_filter
from .image import Image, load_image, save_image
from .model import (DualStreamModel, ModelConfig, TrainingDiverged, evaluate,
                    train as train_loop)
from .residuals import (extract_guided_residual, extract_highpass_residual,
                        region_contrast, visualize_residual)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None,
                   help="JSON config file (default: $GRES_CONFIG if set)")
    p.add_argument("--set", dest="set", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--seed", type=int, default=None,
                   help="set data.seed and train.seed at once")


def _merged_config(args) -> dict:
    layers = []
    path = args.config or os.environ.get("GRES_CONFIG")
    if path:
        layers.append(cfgmod.load_config_file(path))
    overrides = {}
    for item in args.set:
        key, value = cfgmod.parse_override(item)
        overrides[key] = value
    if getattr(args, "seed", None) is not None:
        overrides["data.seed"] = args.seed
        overrides["train.seed"] = args.seed
    layers.append(overrides)
    return cfgmod.merge_config(*layers)


def _parse_csv(text: str, conv=str) -> tuple:
    return tuple(conv(part.strip()) for part in text.split(",") if part.strip())


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_extract(args) -> int:
    cfg = _merged_config(args)
    img = load_image(args.input)
    if args.method == "guided":
        params = GuidedFilterParams(
            radius=args.radius if args.radius is not None else int(cfg["guided.radius"]),
            epsilon=args.epsilon if args.epsilon is not None else float(cfg["guided.epsilon"]))
        residual = extract_guided_residual(img, params)
        detail = f"radius={params.radius} epsilon={params.epsilon}"
    else:
        residual = extract_highpass_residual(img)
        detail = "kernel=3x3-highpass"
    save_image(residual.as_image(), args.output)
    print(f"extract: method={args.method} {detail} output={args.output}")
    print(f"extract: mean={residual.data.mean():.6f} max={residual.data.max():.6f}")
    if args.visualize:
        save_image(visualize_residual(residual, gain=args.gain), args.visualize)
        print(f"extract: visualization gain={args.gain} output={args.visualize}")
    if args.contrast:
        region = _parse_csv(args.contrast, int)
        if len(region) != 4:
            raise ValueError("--contrast wants top,left,bottom,right")
        print(f"extract: contrast={region_contrast(residual, region):.6f} region={region}")
    return 0


def cmd_generate(args) -> int:
    cfg = _merged_config(args)
    scenarios = _parse_csv(args.scenarios) if args.scenarios else (str(cfg["data.scenario"]),)
    base = cfgmod.dataset_config(cfg)
    dataset = DatasetConfig(**{**_dataclass_dict(base), "scenarios": scenarios})
    train_m, test_m = build_dataset(dataset, args.out_dir)
    print(f"generate: out={args.out_dir} train={len(train_m.entries)} "
          f"test={len(test_m.entries)} scenarios={','.join(scenarios)} seed={dataset.seed}")
    return 0


def _dataclass_dict(dc) -> dict:
    import dataclasses
    return dataclasses.asdict(dc)


def _manifest_path(data: str, split: str) -> str:
    if os.path.isdir(data):
        return os.path.join(data, f"{split}.tsv")
    return data


def _load_streams(path: str, cfg: dict) -> tuple[StreamSet, int]:
    manifest = load_manifest(path)
    arrays = load_arrays(manifest)
    x_res = extract_stream(arrays.images, bool(cfg["mte.enabled"]),
                           cfgmod.guided_params(cfg))
    n_classes = int(arrays.labels.max()) + 1
    return StreamSet(arrays.images, x_res, arrays.labels), max(n_classes, 2)


def cmd_train(args) -> int:
    cfg = _merged_config(args)
    if args.data:
        train_set, n_classes = _load_streams(_manifest_path(args.data, "train"), cfg)
    else:
        arrays = generate_split(cfgmod.dataset_config(cfg), "train")
        x_res = extract_stream(arrays.images, bool(cfg["mte.enabled"]),
                               cfgmod.guided_params(cfg))
        train_set = StreamSet(arrays.images, x_res, arrays.labels)
        n_classes = int(cfg["data.classes"])
    spec = cfgmod.run_spec(cfg)
    settings = cfgmod.train_settings(cfg)
    settings = type(settings)(**{**_dataclass_dict(settings), "verbose": not args.quiet})
    model = DualStreamModel(ModelConfig(
        n_classes=n_classes,
        in_channels=train_set.x_rgb.shape[1],
        image_size=train_set.x_rgb.shape[2],
        fusion_method=spec.resolved_fusion(),
        skip_connection=spec.skip_connection,
        freeze_epoch_weights=spec.freeze_epoch_weights,
    ), seed=spec.seed)
    log = train_loop(model, train_set.x_rgb, train_set.x_res, train_set.labels, settings)
    history = [{"epoch": e.epoch, "loss_total": e.loss_total, "loss_fused": e.loss_fused,
                "loss_rgb": e.loss_rgb, "loss_res": e.loss_res,
                "alpha": list(e.alpha), "learning_rate": e.learning_rate}
               for e in log.epochs]
    save_checkpoint(args.out, model, extra={
        "config": {k: cfg[k] for k in sorted(cfg)}, "history": history})
    print(f"train: model={args.out} n_train={len(train_set.labels)} "
          f"classes={n_classes} final_loss={log.epochs[-1].loss_total:.4f} "
          f"alpha=({log.final_alpha[0]:.3f},{log.final_alpha[1]:.3f})")
    return 0


def cmd_eval(args) -> int:
    model, extra = load_model(args.ckpt)
    cfg = cfgmod.merge_config(extra.get("config") or None)
    test_set, _ = _load_streams(_manifest_path(args.data, "test"), cfg)
    report = evaluate(model, test_set.x_rgb, test_set.x_res, test_set.labels)
    print(f"eval: {report.summary()}")
    for i, value in enumerate(report.per_class):
        print(f"eval: class{i}_acc={value:.4f}")
    if args.json:
        payload = {
            "n": report.n, "accuracy": report.accuracy,
            "accuracy_rgb": report.accuracy_rgb, "accuracy_res": report.accuracy_res,
            "auc": report.auc, "mean_loss": report.mean_loss,
            "per_class": [float(v) for v in report.per_class],
            "confusion": report.confusion.tolist(),
        }
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
        print(f"eval: json={args.json}")
    return 0


def _cell(grid, **match) -> str:
    accs = [r.accuracy for r in grid.runs
            if all(getattr(r, k) == v for k, v in match.items())]
    if len(accs) > 1:
        return f"{np.mean(accs):.4f}+-{np.std(accs):.4f}"
    return f"{accs[0]:.4f}"


def _directional_checks(grid, scenarios, seeds) -> list[str]:
    lines = []

    def mean(**match):
        return grid.mean_accuracy(**match)

    if "jp60" in scenarios:
        full = mean(scenario="jp60", use_mte=True, use_afm=True)
        mte_only = mean(scenario="jp60", use_mte=True, use_afm=False)
        neither = mean(scenario="jp60", use_mte=False, use_afm=False)
        lines.append(f"check: jp60 full>=mte_only "
                     f"{'pass' if full >= mte_only else 'fail'} "
                     f"({full:.4f} vs {mte_only:.4f})")
        lines.append(f"check: jp60 full>=neither "
                     f"{'pass' if full >= neither else 'fail'} "
                     f"({full:.4f} vs {neither:.4f})")
    if "raw" in scenarios:
        mte_runs = [r for r in grid.runs if r.scenario == "raw" and r.use_mte]
        res_adv = np.mean([r.accuracy_res for r in mte_runs]) >= np.mean(
            [r.accuracy_rgb for r in mte_runs])
        lines.append(f"check: raw residual_stream>=spatial_stream "
                     f"{'pass' if res_adv else 'fail'}")
    worst = min(r.accuracy - max(r.accuracy_rgb, r.accuracy_res) for r in grid.runs)
    lines.append(f"check: fused>=best_stream-0.03 "
                 f"{'pass' if worst >= -0.03 else 'fail'} (worst margin {worst:+.4f})")
    return lines


def cmd_ablate(args) -> int:
    cfg = _merged_config(args)
    seeds = _parse_csv(args.seeds, int)
    cache = DataCache(cfgmod.dataset_config(cfg), cfgmod.guided_params(cfg))
    settings = cfgmod.train_settings(cfg)
    if args.fusion:
        grid = fusion_grid(cache, args.scenario, seeds, settings=settings,
                           verbose=not args.quiet)
        print(f"{'fusion':<8} {args.scenario}")
        for method in ("afm", "max", "min", "sum", "concat"):
            print(f"{method:<8} {_cell(grid, fusion_method=method)}")
        for method in ("afm", "max", "min", "sum", "concat"):
            print(f"ablate-row:\t{method}\t{args.scenario}\t"
                  f"{grid.mean_accuracy(fusion_method=method):.6f}")
    else:
        scenarios = _parse_csv(args.scenarios)
        for s in scenarios:
            if s not in SCENARIOS:
                raise ValueError(f"unknown scenario {s!r} (choose from {SCENARIOS})")
        grid = ablation_grid(cache, scenarios, seeds, settings=settings,
                             verbose=not args.quiet)
        combos = ((True, True), (True, False), (False, True), (False, False))
        names = {(True, True): "mte+afm", (True, False): "mte_only",
                 (False, True): "afm_only", (False, False): "neither"}
        header = f"{'config':<10}" + "".join(f" {s:>16}" for s in scenarios)
        print(header)
        for use_mte, use_afm in combos:
            cells = "".join(
                f" {_cell(grid, scenario=s, use_mte=use_mte, use_afm=use_afm):>16}"
                for s in scenarios)
            print(f"{names[(use_mte, use_afm)]:<10}{cells}")
        for use_mte, use_afm in combos:
            for s in scenarios:
                acc = grid.mean_accuracy(scenario=s, use_mte=use_mte, use_afm=use_afm)
                print(f"ablate-row:\t{names[(use_mte, use_afm)]}\t{s}\t{acc:.6f}")
        for line in _directional_checks(grid, scenarios, seeds):
            print(line)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(grid.rows(), fh, indent=2)
        print(f"ablate: json={args.out}")
    return 0


def cmd_bench(args) -> int:
    rng = np.random.default_rng(0)
    img = Image(rng.uniform(0.0, 1.0, size=(3, args.size, args.size)))
    radii = _parse_csv(args.radii, int)
    rows = []
    for radius in radii:
        params = GuidedFilterParams(radius=radius, epsilon=1e-2)
        guided_filter(img, params=params)  # warm up
        best = min(_time_once(img, params) for _ in range(args.repeats))
        rows.append({
            "size": args.size, "radius": radius, "seconds": best,
            "ns_per_pixel": 1e9 * best / (args.size * args.size * 3),
        })
    summary = {"rows": rows}
    if len(rows) >= 2:
        by_radius = sorted(rows, key=lambda r: r["radius"])
        t_small = by_radius[0]["seconds"]
        t_large = by_radius[-1]["seconds"]
        summary["ratio_largest_to_smallest_radius"] = t_large / t_small
        summary["radius_independent"] = bool(t_large <= 2.0 * t_small)
    if args.json:
        print(json.dumps(summary, indent=2))
    else:
        for row in rows:
            print(f"bench: size={row['size']} radius={row['radius']} "
                  f"seconds={row['seconds']:.4f} ns_per_pixel={row['ns_per_pixel']:.1f}")
        if "ratio_largest_to_smallest_radius" in summary:
            verdict = "pass" if summary["radius_independent"] else "fail"
            print(f"bench: ratio={summary['ratio_largest_to_smallest_radius']:.3f} "
                  f"radius_independence={verdict}")
    return 0


def _time_once(img: Image, params: GuidedFilterParams) -> float:
    t0 = time.perf_counter()
    guided_filter(img, params=params)
    return time.perf_counter() - t0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gres",
        description="Guided-residual trace extraction and dual-stream detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract a residual image")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--method", choices=("guided", "highpass"), default="guided")
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--visualize", default=None, metavar="PATH",
                   help="also write a gain-scaled visualization")
    p.add_argument("--gain", type=float, default=5.0)
    p.add_argument("--contrast", default=None, metavar="T,L,B,R",
                   help="print inside/outside contrast for a region")
    _add_config_args(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("out_dir")
    p.add_argument("--scenarios", default=None, help="comma-separated scenario list")
    _add_config_args(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", default=None,
                   help="dataset dir (train.tsv) or manifest; omitted = generate from config")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--quiet", action="store_true")
    _add_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="dataset dir (test.tsv) or manifest path")
    p.add_argument("--json", default=None, help="also write metrics as JSON")
    _add_config_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the ablation or fusion comparison grid")
    p.add_argument("--scenarios", default="raw,jp60,me5")
    p.add_argument("--scenario", default="jp60", help="scenario for --fusion mode")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--fusion", action="store_true", help="compare fusion methods instead")
    p.add_argument("--out", default=None, help="write per-run results as JSON")
    p.add_argument("--quiet", action="store_true")
    _add_config_args(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench", help="time the edge-preserving filter")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--radii", default="2,4,8,16")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, TrainingDiverged) as e:
        print(f"gres {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
