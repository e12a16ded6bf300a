"""Command-line entry point: ``aset synth|train|classify|report``.

Exit codes: 0 success, 2 usage error, 3 I/O or file-format error,
4 infeasible configuration or data.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .active_set import RunConfig, RunTrace, run
from .classify import classify_image
from .errors import AsetError, FileFormatError
from .evaluation import evaluate, spatial_exclusion, stratified_sample
from .filters.descriptor import FILTER_KINDS
from .filters.sampler import SamplerConfig
from .glasso import load_model, save_model
from .report import render
from .synth import SceneSpec, composed_scene_spec, generate
from .tensor import read_cube, read_labels, write_cube, write_labels

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INFEASIBLE = 0, 2, 3, 4

log = logging.getLogger("aset")


def _cmd_synth(args) -> int:
    params = dict(height=args.height, width=args.width, n_classes=args.classes,
                  n_bands=args.bands, within_class_noise=args.noise, seed=args.seed,
                  auxiliary_height=args.aux_height)
    # the last two classes form the confuser pair: (4, 5) for the default scene
    params["confuser_pairs"] = () if args.no_confusers or args.classes < 2 else \
        ((args.classes - 1, args.classes),)
    spec = composed_scene_spec(**params) if args.composed else SceneSpec(**params)
    cube, samples = generate(spec)
    out = Path(args.out)
    write_cube(cube, out)
    write_labels(samples, out / "labels.tsv")
    print(f"wrote {cube.height}x{cube.width}x{cube.n_bands} cube and {len(samples)} labels to {out}")
    return EXIT_OK


def _sampler_from(args, n_inputs: int) -> SamplerConfig:
    kinds = tuple(args.kinds.split(",")) if args.kinds else FILTER_KINDS
    cfg = SamplerConfig(bands_per_minibatch=args.batch_bands, filters_per_band=args.filters_per_band,
                        allowed_kinds=kinds, allow_derived_inputs=not args.band_inputs_only)
    return cfg.clipped(n_inputs)


def _cmd_train(args) -> int:
    cube = read_cube(args.cube)
    samples = read_labels(args.labels)
    rng = np.random.default_rng(args.seed)
    train, rest = stratified_sample(samples, args.per_class, rng)
    test = spatial_exclusion(rest, train, args.window, cube.shape)
    config = RunConfig(
        mode="hierarchical" if args.mode == "hier" else "shallow",
        lam=args.lam, gamma0=args.gamma0, epsilon=args.epsilon, max_iterations=args.iters,
        sampler=_sampler_from(args, len(cube.original_ids())), seed=args.seed,
    )
    result = run(cube, train, config, holdout=test if len(test) else None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(result.state, out / "model.txt")
    result.trace.write(out / "trace.tsv")
    final = result.trace.records[-1].kappa_on_holdout
    kappa_txt = "n/a (empty test set)" if final is None else f"{final:.4f}"
    print(f"final kappa: {kappa_txt}")
    print(f"active features: {result.state.n_features}")
    return EXIT_OK


def _cmd_classify(args) -> int:
    state = load_model(args.model)
    cube = read_cube(args.cube)
    labels, proba = classify_image(cube, state)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    labels.astype("<i4").tofile(out / "labels.raw")
    for c in range(proba.shape[-1]):
        proba[:, :, c].astype("<f4").tofile(out / f"proba_{c + 1}.raw")
    (out / "classify.json").write_text(json.dumps({
        "height": cube.height, "width": cube.width, "n_classes": state.n_classes,
        "labels": {"file": "labels.raw", "dtype": "int32", "byte_order": "little"},
        "proba": {"files": [f"proba_{c + 1}.raw" for c in range(proba.shape[-1])],
                  "dtype": "float32", "byte_order": "little"},
    }, indent=2) + "\n")
    if args.labels:
        samples = read_labels(args.labels, state.n_classes)
        scores = evaluate(samples.labels, labels[samples.rows, samples.cols], state.n_classes)
        print(f"kappa on labeled pixels: {scores['kappa']:.4f}")
    print(f"wrote label map and {proba.shape[-1]} probability rasters to {out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    state = load_model(args.model)
    trace = RunTrace.read(args.trace) if args.trace else None
    text = render(state, trace, args.top_k)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aset", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic labeled scene")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--classes", type=int, default=5)
    s.add_argument("--bands", type=int, default=16)
    s.add_argument("--height", type=int, default=96)
    s.add_argument("--width", type=int, default=96)
    s.add_argument("--noise", type=float, default=SceneSpec.within_class_noise)
    s.add_argument("--composed", action="store_true",
                   help="confuser pair separable by composed filters (dots vs 3x3 squares)")
    s.add_argument("--no-confusers", action="store_true",
                   help="drop the confuser pair (by default the last two classes)")
    s.add_argument("--aux-height", action="store_true", help="add an auxiliary height band")
    s.set_defaults(func=_cmd_synth)

    t = sub.add_parser("train", help="run active-set feature discovery")
    t.add_argument("--cube", required=True)
    t.add_argument("--labels", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--mode", choices=("shallow", "hier"), default="shallow")
    t.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    t.add_argument("--gamma0", type=float, default=1.1)
    t.add_argument("--epsilon", type=float, default=1e-6)
    t.add_argument("--iters", type=int, default=100)
    t.add_argument("--per-class", type=int, default=30)
    t.add_argument("--window", type=int, default=3, help="spatial exclusion window around training pixels")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--batch-bands", type=int, default=20,
                   help="input bands per minibatch (capped at the number of original bands)")
    t.add_argument("--filters-per-band", type=int, default=3)
    t.add_argument("--kinds", default="", help="comma-separated filter kinds to sample")
    t.add_argument("--band-inputs-only", action="store_true",
                   help="never use discovered features as filter inputs")
    t.set_defaults(func=_cmd_train)

    c = sub.add_parser("classify", help="classify a full cube with a saved model")
    c.add_argument("--model", required=True)
    c.add_argument("--cube", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--labels", help="optional label table to score against")
    c.set_defaults(func=_cmd_classify)

    r = sub.add_parser("report", help="summarize a model and its trace")
    r.add_argument("--model", required=True)
    r.add_argument("--trace")
    r.add_argument("--out")
    r.add_argument("--top-k", type=int, default=6)
    r.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, FileFormatError) as exc:
        print(f"aset: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (AsetError, ValueError) as exc:
        print(f"aset: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
