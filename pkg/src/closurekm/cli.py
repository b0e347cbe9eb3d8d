"""``closurekm`` command line: generate data, train, evaluate, diagnose.

Exit status is 0 on success, 2 for usage errors (argparse) and 1 when the
command itself fails.  Results are printed as ``key=value`` lines.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import data_io
from .baselines import (distance_ratio_histogram, distance_ratios, lloyd_run,
                        lloyd_transition, recall_curve)
from .closure import ClosureConfig, config_dict, initial_model, load_model, run, save_model
from .core import nmi, point_costs


def _trees_range(text: str) -> range:
    try:
        lo, hi = (int(p) for p in text.split("..", 1))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO..HI, got {text!r}") from None
    if not 1 <= lo <= hi:
        raise argparse.ArgumentTypeError(f"need 1 <= LO <= HI, got {text!r}")
    return range(lo, hi + 1)


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _emit(**kv) -> None:
    for key, value in kv.items():
        if isinstance(value, float):
            value = repr(value)
        print(f"{key}={value}")


def _sidecar_labels(path: str) -> Path:
    return Path(path).with_suffix(".labels")


def cmd_gen(args) -> None:
    ds = data_io.gen_gmm(args.k_true, args.n, args.d, args.center_scale, args.sigma, args.seed)
    ext = os.path.splitext(args.out)[1].lower()
    if ext == ".fvecs":
        data_io.write_fvecs(ds, args.out)
    elif ext == ".bvecs":
        raise ValueError("generated mixtures are real-valued; use .fvecs or .csv")
    else:
        data_io.write_csv(ds, args.out)
    labels_path = _sidecar_labels(args.out)
    data_io.write_labels(ds.labels, labels_path)
    _emit(points=ds.n, dims=ds.d, out=args.out, labels=str(labels_path))


def cmd_train(args) -> None:
    ds = data_io.read_dataset(args.input)
    cfg = ClosureConfig(k=args.k, bucket_capacity=args.bucket_size, max_trees=args.max_trees,
                        reduction_threshold=args.tau, max_iterations=args.max_iters,
                        convergence_epsilon=args.epsilon, seed=args.seed,
                        threads=args.threads)
    if args.algo == "closure":
        state = run(ds, cfg)
        model, history = state.model, state.history
    else:
        start = time.perf_counter()
        init, _ = initial_model(ds, args.k, args.seed, cfg.pca_sample_size)
        init_time = time.perf_counter() - start
        res = lloyd_run(ds, init.centers, args.max_iters, args.epsilon,
                        init_assignments=init.assignments, threads=args.threads)
        model, history = res.model, res.history
        # the elapsed column counts initialization as part of the run
        history = [replace(h, elapsed=h.elapsed + init_time) for h in history]
    meta = dict(config_dict(cfg), algo=args.algo)
    if args.out_model:
        save_model(args.out_model, model, args.seed, meta)
    if args.out_history:
        data_io.write_history_csv(history, args.out_history)
    _emit(algo=args.algo, wcssd=history[-1].wcssd, iterations=history[-1].iteration,
          distance_computations=sum(h.distance_computations for h in history),
          trees=history[-1].tree_count)


def cmd_eval(args) -> None:
    ds = data_io.read_dataset(args.input)
    model, _ = load_model(args.model)
    if model.centers.shape[1] != ds.d:
        raise ValueError(f"model has d={model.centers.shape[1]}, dataset has d={ds.d}")
    if model.assignments.shape[0] != ds.n:
        raise ValueError(f"model covers n={model.assignments.shape[0]} points, "
                         f"dataset has n={ds.n}")
    model.distances = point_costs(ds.points, model.centers, model.assignments)
    _emit(n=ds.n, k=model.k, wcssd=float(model.distances.sum()))
    if args.labels:
        labels = data_io.read_labels(args.labels)
        if labels.shape[0] != ds.n:
            raise ValueError(f"{args.labels}: {labels.shape[0]} labels for {ds.n} points")
        _emit(nmi=nmi(labels, model.assignments))


def cmd_diagnose(args) -> None:
    ds = data_io.read_dataset(args.input)
    prev, nxt = lloyd_transition(ds, args.k, args.iteration, args.seed)
    edges, counts = distance_ratio_histogram(ds, prev, nxt)
    curve = recall_curve(ds, prev, nxt, args.bucket_size, args.trees_range, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_io.write_histogram_csv(edges, counts, out / "distance_ratio_histogram.csv")
    data_io.write_recall_csv(curve, out / "closure_recall.csv")
    r = distance_ratios(ds, prev, nxt)
    _emit(active_points=int(r.size), histogram=str(out / "distance_ratio_histogram.csv"),
          recall=str(out / "closure_recall.csv"))
    _emit(fraction_below_0_15=float((r < 0.15).mean()) if r.size else 0.0)
    for p in curve:
        print(f"trees={p.tree_count} mean_neighborhood={p.mean_neighborhood:.2f} "
              f"max_neighborhood={p.max_neighborhood} recall={p.recall!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="closurekm",
                                     description="Approximate k-means with cluster closures.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic Gaussian mixture")
    g.add_argument("--k-true", type=_positive, required=True)
    g.add_argument("--n", type=_positive, required=True)
    g.add_argument("--d", type=_positive, required=True)
    g.add_argument("--sigma", type=float, default=0.5)
    g.add_argument("--center-scale", type=float, default=10.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help=".fvecs or .csv; labels go to <stem>.labels")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="cluster a dataset")
    t.add_argument("--input", required=True)
    t.add_argument("--k", type=_positive, required=True)
    t.add_argument("--algo", choices=("closure", "lloyd"), default="closure")
    t.add_argument("--bucket-size", type=int, default=10)
    t.add_argument("--max-trees", type=_positive, default=10)
    t.add_argument("--tau", type=float, default=0.01)
    t.add_argument("--epsilon", type=float, default=1e-4)
    t.add_argument("--max-iters", type=int, default=100)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--threads", type=_positive, default=1)
    t.add_argument("--out-model")
    t.add_argument("--out-history")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a saved model")
    e.add_argument("--input", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--labels")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("diagnose", help="distance-ratio histogram and closure recall")
    d.add_argument("--input", required=True)
    d.add_argument("--k", type=_positive, required=True)
    d.add_argument("--iteration", type=_positive, default=2)
    d.add_argument("--bucket-size", type=int, default=10)
    d.add_argument("--trees-range", type=_trees_range, default=range(1, 6))
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out-dir", required=True)
    d.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"closurekm {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
