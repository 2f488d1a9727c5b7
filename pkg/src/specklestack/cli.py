"""Command-line interface: simulate, train, apply, classify, metrics, experiment."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .classic import SpeckleFilterParams
from .experiments import ExperimentConfig, MC_RATIOS, markdown_table, run_experiment
from .gmlc import classify as gmlc_classify, fit_classes
from .images import (
    QuantizedImage,
    QuantizerSpec,
    quantize,
    read_f64,
    read_pgm,
    write_f64,
    write_pgm,
)
from .metrics import metrics_report
from .speckle import G0Params, PhantomSpec, STRIPS_AND_POINTS, TWO_REGION, make_phantom
from .stackfilter import WindowShape, apply_iterated, pbf_from_text, pbf_to_text
from .training import RoiSet, region_mask, train_from_rois


def parse_window(text: str) -> WindowShape:
    try:
        w, h = (int(p) for p in text.lower().split("x"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("window must look like 3x3") from exc
    return WindowShape(w, h)


def parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(","))


def load_image(path: str, levels: int, clip_pct: float) -> tuple[QuantizedImage, QuantizerSpec | None]:
    """PGM loads as already-quantized; F64 floats are quantized on the fly."""
    p = Path(path)
    if p.suffix.lower() == ".pgm":
        img = read_pgm(p)
        return img, None
    img, spec = quantize(read_f64(p), QuantizerSpec(levels, clip_pct))
    return img, spec


def add_quantizer_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--levels", type=int, default=255, help="gray levels M (default 255)")
    sub.add_argument("--clip-pct", type=float, default=99.0, help="clip percentile for float input (default 99)")


def cmd_simulate(args) -> int:
    alphas = args.alpha
    means = args.mean
    kind = TWO_REGION if args.kind == "two-region" else STRIPS_AND_POINTS
    spec = PhantomSpec(
        kind,
        args.size,
        args.size,
        (
            (G0Params(alphas[0], 1.0, args.looks), means[0]),
            (G0Params(alphas[1], 1.0, args.looks), means[1]),
        ),
        seed=args.seed,
    )
    noisy, ideal, labels = make_phantom(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_f64(out / "noisy.f64", noisy)
    write_f64(out / "ideal.f64", ideal)
    write_pgm(out / "labels.pgm", QuantizedImage(labels, int(labels.max()) or 1))
    q, qspec = quantize(noisy, QuantizerSpec(args.levels, args.clip_pct))
    write_pgm(out / "noisy.pgm", q)
    meta = {
        "kind": args.kind,
        "size": args.size,
        "alphas": list(alphas),
        "means": list(means),
        "looks": args.looks,
        "seed": args.seed,
        "quantizer": {"levels": qspec.levels, "clip_pct": qspec.clip_pct, "lo": qspec.lo, "hi": qspec.hi},
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2))
    print(f"wrote noisy/ideal/labels to {out}")
    return 0


def cmd_train(args) -> int:
    img, _ = load_image(args.image, args.levels, args.clip_pct)
    rois = RoiSet.from_json(Path(args.rois).read_text())
    pbf = train_from_rois(img, rois, args.window)
    Path(args.out).write_text(pbf_to_text(pbf))
    if args.dump_rois:
        Path(args.dump_rois).write_text(rois.to_json())
    resolved = {r.name: r.resolved for r in rois.regions}
    print(f"trained {len(pbf.terms)}-term function; resolved ideals: {resolved}")
    return 0


def cmd_apply(args) -> int:
    img, _ = load_image(args.image, args.levels, args.clip_pct)
    pbf = pbf_from_text(Path(args.pbf).read_text())
    out = apply_iterated(pbf, img, args.iters)
    write_pgm(args.out, out)
    print(f"wrote {args.out}")
    return 0


def cmd_classify(args) -> int:
    img, _ = load_image(args.image, args.levels, args.clip_pct)
    rois = RoiSet.from_json(Path(args.rois).read_text())
    if len(rois.regions) < 2:
        print("classify needs at least 2 labeled regions", file=sys.stderr)
        return 2
    masks = {
        i: region_mask(region, img.width, img.height)
        for i, region in enumerate(rois.regions)
    }
    classes = fit_classes(img, masks)
    labels = gmlc_classify(img, classes)
    write_pgm(args.out, QuantizedImage(labels, max(int(labels.max()), 1)))
    doc = [
        {"label": c.label, "name": rois.regions[c.label].name, "mean": c.mean, "variance": c.variance}
        for c in classes
    ]
    print(json.dumps(doc, indent=2))
    return 0


def cmd_metrics(args) -> int:
    img, _ = load_image(args.image, args.levels, args.clip_pct)
    ref, _ = load_image(args.reference, args.levels, args.clip_pct)
    rep = metrics_report(img.data.astype(float), ref.data.astype(float), block=args.block)
    text = rep.to_json()
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


EXPERIMENT_DEFAULTS = {
    "mc-quality": {"reps": 50, "size": 64, "iters": (95,), "clip_pct": 99.0},
    "classification": {"reps": 20, "size": 128, "iters": (1, 20), "clip_pct": 99.0},
    "contrast": {"reps": 100, "size": 256, "iters": (1,), "clip_pct": 100.0},
}

FULL_SCALE = {
    "mc-quality": {"reps": 1000, "size": 128},
    "classification": {"reps": 100, "size": 128},
    "contrast": {"reps": 1000, "size": 256},
}


def cmd_experiment(args) -> int:
    defaults = EXPERIMENT_DEFAULTS[args.kind]
    reps = args.reps if args.reps is not None else defaults["reps"]
    size = args.size if args.size is not None else defaults["size"]
    iters = args.iters if args.iters is not None else defaults["iters"]
    clip = args.clip_pct if args.clip_pct is not None else defaults["clip_pct"]
    if args.full:
        reps = FULL_SCALE[args.kind]["reps"]
        size = FULL_SCALE[args.kind]["size"]
    filter_params = SpeckleFilterParams(window=args.filter_window, looks=args.looks, damping=args.damping)
    cfg = ExperimentConfig(
        kind=args.kind,
        reps=reps,
        size=size,
        ratios=args.ratios,
        window=args.window,
        iters=iters,
        levels=args.levels,
        clip_pct=clip,
        looks=args.looks,
        seed=args.seed,
        lee=filter_params,
        frost=filter_params,
        alpha_pair=tuple(args.alpha_pair),
        out_dir=args.out,
        workers=args.workers,
    )
    result = run_experiment(cfg)
    print(markdown_table(result))
    if args.out:
        print(f"records and aggregates written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specklestack",
        description="Adaptive stack filters for speckled imagery",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic speckled phantom")
    p.add_argument("--kind", choices=["two-region", "strips"], default="two-region")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--alpha", type=float, nargs=2, default=[-1.5, -10.0], metavar=("A1", "A2"))
    p.add_argument("--mean", type=float, nargs=2, default=[1.0, 10.0], metavar=("M1", "M2"))
    p.add_argument("--looks", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    add_quantizer_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a stack filter from regions of interest")
    p.add_argument("--image", required=True, help="PGM or F64 input")
    p.add_argument("--rois", required=True, help="RoiSet JSON file")
    p.add_argument("--window", type=parse_window, default=WindowShape(3, 3))
    p.add_argument("--out", required=True, help="output PBF text file")
    p.add_argument("--dump-rois", help="write the RoiSet with resolved ideals")
    add_quantizer_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("apply", help="apply a trained filter (iterated)")
    p.add_argument("--image", required=True)
    p.add_argument("--pbf", required=True)
    p.add_argument("--iters", type=int, default=1)
    p.add_argument("--out", required=True)
    add_quantizer_args(p)
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("classify", help="Gaussian ML classification from labeled regions")
    p.add_argument("--image", required=True)
    p.add_argument("--rois", required=True, help="labeled regions (class index = list order)")
    p.add_argument("--out", required=True, help="output label PGM")
    add_quantizer_args(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("metrics", help="quality indexes of an image against a reference")
    p.add_argument("--image", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--block", type=int, default=8)
    p.add_argument("--out")
    add_quantizer_args(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("experiment", help="run a reproducible study")
    p.add_argument("kind", choices=list(EXPERIMENT_DEFAULTS))
    p.add_argument("--seed", type=int, default=20250101)
    p.add_argument("--reps", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--ratios", type=parse_int_list, default=MC_RATIOS)
    p.add_argument("--window", type=parse_window, default=WindowShape(3, 3))
    p.add_argument("--iters", type=parse_int_list, default=None)
    p.add_argument("--levels", type=int, default=255)
    p.add_argument("--clip-pct", type=float, default=None)
    p.add_argument("--looks", type=float, default=1.0)
    p.add_argument("--filter-window", type=int, default=7, help="Lee/Frost window side")
    p.add_argument("--damping", type=float, default=0.3, help="Frost damping")
    p.add_argument("--alpha-pair", type=float, nargs=2, default=[-3.0, -12.0])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--full", action="store_true", help="full-scale replication counts")
    p.add_argument("--out", help="output directory for CSV/JSON/Markdown")
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
