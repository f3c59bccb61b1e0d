"""Batch command-line runner: preprocess -> estimate -> graph -> analyze.

Exit codes: 0 success, 2 I/O error, 3 validation error, 4 numerical
failure.  Every command is deterministic given (inputs, config, seed);
timing information goes to stderr/stdout only, never into output files.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fileio
from .errors import (
    BadBand,
    BadDims,
    BadInput,
    BadK,
    BadLabels,
    BadLambda,
    BadPValue,
    BadSigma,
    BadSpec,
    BadWindow,
    DegenerateColumn,
    DegenerateInput,
    EmptyCorpus,
    EmptyInput,
    NoOracle,
    NumericalError,
    ParseError,
    ShapeError,
    TooFewTrials,
    TooLarge,
    TooShort,
)
from .pipeline import (
    PipelineConfig,
    analyze_corpus,
    estimate_matrix,
    graph_from_matrices,
    parse_config,
    preprocess_file,
    simulate,
)
from .synthetic import GeneratorSpec

_IO_ERRORS = (ParseError, EmptyInput, OSError)
_VALIDATION_ERRORS = (
    BadBand, BadDims, BadInput, BadK, BadLabels, BadLambda, BadPValue,
    BadSigma, BadSpec, BadWindow, DegenerateColumn, DegenerateInput,
    EmptyCorpus, NoOracle, ShapeError, TooFewTrials, TooLarge, TooShort,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse problems are validation errors
        raise BadInput(message)


def _add_common(sub, *, config=True, seed=True, jobs=False, output=True):
    if config:
        sub.add_argument("--config", help="key=value config file")
    if output:
        sub.add_argument("--output-dir", required=True, help="directory for outputs")
    if seed:
        sub.add_argument("--seed", type=int, help="override the config seed")
    if jobs:
        sub.add_argument("--jobs", type=int, help="parallel workers for the pair sweep")
    sub.add_argument("--lambda", dest="lambda_policy",
                     help="shrinkage policy: opt, 0, or a value in [0,1]")
    sub.add_argument("--alpha", type=float, help="raw significance cutoff")
    sub.add_argument("--fdr", type=float, help="FDR level for corrected BH")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dinfo", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("preprocess", help="filter, segment, quantize a recording")
    p.add_argument("--input", required=True, help="recording CSV (header = labels)")
    _add_common(p)

    p = subs.add_parser("estimate", help="pairwise DI matrix with p-values")
    p.add_argument("--input", required=True, help="features.json from preprocess")
    _add_common(p, jobs=True)

    p = subs.add_parser("graph", help="FDR-controlled interaction graph")
    p.add_argument("--input", required=True,
                   help="directory holding di_matrix.json and pvalues.csv")
    _add_common(p)

    p = subs.add_parser("analyze", help="clusters, embedding, classification")
    p.add_argument("--input", required=True,
                   help="manifest JSON listing DI matrices (and labels)")
    _add_common(p)

    p = subs.add_parser("simulate", help="generate a synthetic corpus + oracle")
    p.add_argument("--spec", required=True, help="generator spec JSON")
    _add_common(p)

    p = subs.add_parser("benchmark", help="time one pair and a pair sweep")
    p.add_argument("--channels", type=int, default=19)
    p.add_argument("--pairs", type=int, default=0,
                   help="limit the sweep to this many pairs (0 = all)")
    _add_common(p, output=False, jobs=True)
    return parser


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"), cfg)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    if getattr(args, "lambda_policy", None) is not None:
        overrides["lambda_policy"] = args.lambda_policy
    if getattr(args, "alpha", None) is not None:
        overrides["alpha"] = args.alpha
    if getattr(args, "fdr", None) is not None:
        overrides["fdr_q"] = args.fdr
    if overrides:
        cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_preprocess(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    channels, codebooks = preprocess_file(args.input, cfg)
    echo = {
        "segment_ms": cfg.segment_ms,
        "overlap_ms": cfg.overlap_ms,
        "feature": cfg.feature,
        "p_levels": cfg.p_levels,
        "sample_rate_hz": cfg.sample_rate_hz,
        "seed": cfg.seed,
    }
    fileio.write_json(out / "features.json", fileio.features_to_json(channels, echo))
    fileio.write_json(out / "codebooks.json", fileio.codebooks_to_json(codebooks))
    return 0


def cmd_estimate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    channels = fileio.features_from_json(fileio.read_json(args.input))
    di, pv, null_stats = estimate_matrix(channels, cfg)
    meta = {
        "order": cfg.markov_order,
        "lambda_policy": str(cfg.resolve_lambda()),
        "seed": cfg.seed,
        "pair_seed_stride": 100_003,
        "bootstrap_B": cfg.bootstrap_B,
        "bootstrap_reps": cfg.bootstrap_reps,
        "null_stats": {
            f"{src}->{dst}": {"mu": mu, "sigma": sigma}
            for (src, dst), (mu, sigma) in sorted(null_stats.items())
        },
    }
    (out / "di_matrix.csv").write_text(
        fileio.matrix_to_csv(di.labels, di.values()), encoding="utf-8"
    )
    fileio.write_json(out / "di_matrix.json", fileio.di_matrix_to_json(di, meta))
    (out / "pvalues.csv").write_text(fileio.pvalues_to_csv(pv), encoding="utf-8")
    return 0


def cmd_graph(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    src = Path(args.input)
    di = fileio.di_matrix_from_json(fileio.read_json(src / "di_matrix.json"))
    pv = fileio.pvalues_from_csv((src / "pvalues.csv").read_text(encoding="utf-8"))
    graph = graph_from_matrices(di, pv, cfg)
    (out / "graph.dot").write_text(fileio.graph_to_dot(graph), encoding="utf-8")
    fileio.write_json(out / "graph.json", fileio.graph_to_json(graph))
    return 0


def cmd_analyze(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    manifest = fileio.read_json(args.input)
    items = manifest.get("items", [])
    if not items:
        raise EmptyCorpus("manifest lists no items")
    base = Path(args.input).parent
    loaded = []
    for entry in items:
        path = Path(entry["di_path"])
        if not path.is_absolute():
            path = base / path
        di = fileio.di_matrix_from_json(fileio.read_json(path))
        loaded.append((di, entry.get("label")))

    mean_values = np.mean([di.values() for di, _ in loaded], axis=0)
    from .analysis import heat_kernel_distance, kmeans, mds

    dist = heat_kernel_distance(mean_values, cfg.heat_sigma, labels=loaded[0][0].labels)
    k = min(cfg.cluster_k, dist.k)
    assignment, objective = kmeans(dist, k, seed=cfg.seed, return_objective=True)
    fileio.write_json(
        out / "clusters.json",
        {
            "k": k,
            "seed": cfg.seed,
            "objective": float(objective),
            "assignments": {
                label: int(c) for label, c in zip(dist.labels, assignment)
            },
        },
    )
    coords = mds(dist, min(2, dist.k - 1))
    (out / "mds.csv").write_text(
        fileio.mds_to_csv(dist.labels, coords), encoding="utf-8"
    )

    labeled = [(di, lab) for di, lab in loaded if lab is not None]
    if len({lab for _, lab in labeled}) >= 2:
        report, points = analyze_corpus(labeled, cfg)
        report["seed"] = cfg.seed
        fileio.write_json(out / "classification_report.json", report)
        (out / "roc.csv").write_text(fileio.roc_to_csv(points), encoding="utf-8")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    payload = fileio.read_json(args.spec)
    kwargs = {
        key: payload[key]
        for key in (
            "kind", "length", "seed", "flip_prob", "coupling", "noise_std",
            "onset", "offset", "n_channels",
        )
        if key in payload
    }
    if "edges" in payload:
        kwargs["edges"] = tuple(tuple(e) for e in payload["edges"])
    if getattr(args, "seed", None) is not None:
        kwargs["seed"] = args.seed
    try:
        spec = GeneratorSpec(**kwargs)
    except TypeError as exc:
        raise BadSpec(f"bad generator spec: {exc}") from exc
    labels, samples, oracle = simulate(spec)
    (out / "corpus.csv").write_text(
        fileio.recording_to_csv(labels, samples), encoding="utf-8"
    )
    oracle["config_seed"] = cfg.seed
    fileio.write_json(out / "oracle.json", oracle)
    return 0


def cmd_benchmark(args) -> int:
    from .pipeline import _estimate_one_pair, preprocess_recording
    from .signals import Recording

    cfg = _load_config(args)
    k = args.channels
    rng = np.random.default_rng(cfg.seed)
    rec = Recording(
        rng.standard_normal((3008, k)),
        cfg.sample_rate_hz,
        tuple(f"ch{i:02d}" for i in range(k)),
    )
    channels, _ = preprocess_recording(rec, cfg)

    payload = (
        0, 1, 0, cfg.markov_order, cfg.resolve_lambda(), cfg.bootstrap_reps,
        cfg.bootstrap_B, cfg.seed, channels[0].symbols, channels[1].features,
    )
    start = time.perf_counter()
    _estimate_one_pair(payload)
    single = time.perf_counter() - start
    print(f"single pair ({len(channels[0].features)} segments, p={cfg.p_levels}, "
          f"order={cfg.markov_order}, B={cfg.bootstrap_B}): {single:.3f} s")

    if args.pairs:
        size = 2
        while size * (size - 1) < args.pairs and size < k:
            size += 1
    else:
        size = k
    subset = channels[:size]
    start = time.perf_counter()
    estimate_matrix(subset, cfg)
    sweep = time.perf_counter() - start
    done = len(subset) * (len(subset) - 1)
    print(f"sweep of {done} pairs with jobs={cfg.jobs}: {sweep:.3f} s "
          f"({sweep / done:.3f} s/pair)")
    return 0


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "estimate": cmd_estimate,
    "graph": cmd_graph,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _IO_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
