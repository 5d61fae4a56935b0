"""Command-line entry points: generate, index, train, query, bench, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import BenchConfig, run_bench
from .dataset import Dataset, DatasetDescriptor, generate_cbf, generate_random_walk
from .index import Distance, IndexConfig, build_index, load_index, save_index
from .models import GuaranteeBundle, build_witness_set, collect_training, train_bundle
from .presets import PRESETS
from .search import DEFAULT_CHECKPOINTS, SearchConfig
from .stopping import StoppingPolicy, plan_moments, run_with_policy


def _cmd_generate(args) -> int:
    out = Path(args.out)
    if args.kind == "walk":
        desc = generate_random_walk(args.n, args.length, args.seed, out)
    else:
        probs = tuple(float(p) for p in args.class_probs.split(","))
        desc = generate_cbf(args.n, args.length, args.amplitude, probs, args.seed, out)
    print(json.dumps({"descriptor": str(out.with_suffix(".json")),
                      "n": desc.n, "len": desc.length,
                      "labels": str(desc.labels) if desc.labels else None}))
    return 0


def _cmd_index(args) -> int:
    dataset = Dataset(DatasetDescriptor.load(Path(args.dataset)))
    config = IndexConfig(kind=args.kind, segment_count=args.segments,
                         leaf_threshold=args.leaf_threshold,
                         sax_max_cardinality=args.max_cardinality,
                         default_distance=args.distance)
    tree = build_index(dataset, config)
    save_index(tree, Path(args.out))
    print(json.dumps({"index": args.out, "nodes": len(tree.nodes),
                      "leaves": len(tree.leaves)}))
    return 0


def _cmd_train(args) -> int:
    dataset = Dataset(DatasetDescriptor.load(Path(args.dataset)))
    queries = Dataset(DatasetDescriptor.load(Path(args.queries)))
    if queries.length != dataset.length:
        raise ValueError("query file length does not match the dataset")
    tree = load_index(Path(args.index), dataset)
    distance = Distance.parse(args.distance)
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(queries.n)
    if args.witnesses + args.train_queries > queries.n:
        raise ValueError("query file too small for the requested draws")
    witness_ids = order[: args.witnesses]
    train_ids = order[args.witnesses: args.witnesses + args.train_queries]
    witnesses = build_witness_set(tree, witness_ids, queries.values[witness_ids], distance)
    config = SearchConfig(k=args.k, distance=distance,
                          checkpoints=DEFAULT_CHECKPOINTS)
    records = collect_training(tree, train_ids, queries.values[train_ids], config,
                               witnesses=witnesses)
    moments = plan_moments(records, m=args.moments)
    bundle = train_bundle(tree, records, witnesses, k=args.k, distance=distance,
                          checkpoints=DEFAULT_CHECKPOINTS, moments=moments,
                          labels=dataset.labels,
                          bandwidth_scale=args.bandwidth_scale)
    Path(args.out).write_text(bundle.to_json())
    print(json.dumps({"bundle": args.out, "k": args.k, "distance": str(distance),
                      "moments": list(moments)}))
    return 0


def _load_serving_artifacts(args):
    dataset = Dataset(DatasetDescriptor.load(Path(args.dataset)))
    tree = load_index(Path(args.index), dataset)
    bundle = GuaranteeBundle.from_json(Path(args.bundle).read_text())
    return dataset, tree, bundle


def _cmd_query(args) -> int:
    dataset, tree, bundle = _load_serving_artifacts(args)
    if args.k is not None and args.k != bundle.k:
        raise ValueError(f"bundle was trained for k={bundle.k}, not k={args.k}")
    if args.distance is not None and Distance.parse(args.distance) != bundle.distance:
        raise ValueError(f"bundle was trained for distance {bundle.distance}")
    if args.query_index is not None:
        query = dataset.values[args.query_index]
    else:
        query = np.asarray([float(v) for v in args.query_values.split(",")])
    policy = StoppingPolicy.parse(args.policy)
    outcome = run_with_policy(tree, bundle, query, policy,
                              labels=dataset.labels, audit=True)
    doc = {
        "ids": outcome.ids.tolist(),
        "distances": outcome.distances.tolist(),
        "stopped_at_leaves": outcome.stopped_at_leaves,
        "total_leaves_without_stop": outcome.total_leaves_without_stop,
        "savings": outcome.savings,
        "stop_reason": outcome.stop_reason,
        "exact": None if outcome.was_exact is None else bool(outcome.was_exact.all()),
    }
    if outcome.predicted_class is not None:
        doc["class"] = outcome.predicted_class
        doc["exact_class"] = outcome.exact_class
    print(json.dumps(doc, sort_keys=True))
    return 0


def _cmd_bench(args) -> int:
    if args.preset:
        preset = PRESETS[args.preset]
        workdir = Path(args.workdir or args.out)
        workdir.mkdir(parents=True, exist_ok=True)
        config = preset.bench_config(workdir, seed=args.seed)
    else:
        doc = json.loads(Path(args.config).read_text())
        if args.seed is not None:
            doc["seed"] = args.seed
        config = BenchConfig.from_dict(doc)
    if args.wallclock:
        from dataclasses import replace

        config = replace(config, include_wallclock=True)
    progress = (lambda msg: print(msg, file=sys.stderr)) if not args.quiet else None
    report = run_bench(config, progress=progress)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(report.to_json())
    (outdir / "report.csv").write_text(report.to_csv())
    from .plots import render_report_figures

    figures = render_report_figures(report, outdir / "figures")
    print(json.dumps({
        "report": str(outdir / "report.json"),
        "csv": str(outdir / "report.csv"),
        "figures": [str(p) for p in figures],
    }))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    dataset, tree, bundle = _load_serving_artifacts(args)
    app = create_app(tree, bundle, dataset=dataset,
                     labels=tree.dataset.labels, parallelism=args.parallelism,
                     console_dir=args.console)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="progsearch")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    p.add_argument("--kind", choices=("walk", "cbf"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--amplitude", type=float, default=3.0)
    p.add_argument("--class-probs", default="0.3333333333333333,0.3333333333333333,0.3333333333333334")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("index", help="build and save an index")
    p.add_argument("--dataset", required=True)
    p.add_argument("--kind", choices=("isax", "dstree"), default="dstree")
    p.add_argument("--segments", type=int, default=16)
    p.add_argument("--leaf-threshold", type=int, default=100)
    p.add_argument("--max-cardinality", type=int, default=256)
    p.add_argument("--distance", default="ed",
                   help="default measure the index will serve (ed | dtw:<radius>)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("train", help="train a guarantee bundle")
    p.add_argument("--dataset", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True,
                   help="descriptor of a disjoint query collection")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--distance", default="ed")
    p.add_argument("--witnesses", type=int, default=100)
    p.add_argument("--train-queries", type=int, default=100)
    p.add_argument("--moments", type=int, default=16)
    p.add_argument("--bandwidth-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("query", help="run one progressive query with a policy")
    p.add_argument("--dataset", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--distance")
    p.add_argument("--policy", default="none")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--query-index", type=int)
    group.add_argument("--query-values")
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("bench", help="run the Monte Carlo evaluation")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--config")
    group.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--workdir")
    p.add_argument("--seed", type=int)
    p.add_argument("--wallclock", action="store_true")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("serve", help="serve progressive queries over HTTP")
    p.add_argument("--dataset", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8650)
    p.add_argument("--parallelism", type=int, default=4)
    p.add_argument("--console", help="static directory for the browser console")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
