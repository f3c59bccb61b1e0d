"""Batch pipeline stages: preprocess, estimate, graph, analyze, simulate.

Stages communicate through files (see fileio) so they can run as separate
CLI invocations.  Every randomized stage derives its RNG streams from the
config seed plus fixed offsets, and the pair sweep assembles results by
pair index, so outputs are byte-identical across runs and worker counts.
"""

from __future__ import annotations

import concurrent.futures
import logging
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .analysis import (
    DistanceMatrix,
    LabeledCorpus,
    heat_kernel_distance,
    kmeans,
    knn_classify,
    mds,
    roc_auc,
    roc_points,
)
from .errors import BadInput, EmptyCorpus, NumericalError, ParseError
from .estimator import (
    DiEstimate,
    DiMatrix,
    _estimate_from_fits,
    _prepare_pair,
)
from .inference import PValueMatrix, build_graph, p_value
from .logit import _PairFits, null_di_distribution
from .signals import (
    FeatureSequence,
    QuantizedSequence,
    Recording,
    bandpass_notch,
    load_recording,
    quantize,
    segment_features,
    train_lloyd_max,
)
from .synthetic import GeneratorSpec, exact_di, generate
from .errors import NoOracle

log = logging.getLogger("dinfo")

_PAIR_SEED_STRIDE = 100_003
_NULL_SEED_OFFSET = 31


@dataclass(frozen=True)
class ChannelData:
    """One channel's feature sequence and its quantized symbols."""

    label: str
    features: FeatureSequence
    symbols: QuantizedSequence


@dataclass(frozen=True)
class PipelineConfig:
    """Pipeline knobs; field names double as config-file keys."""

    segment_ms: float = 200.0
    overlap_ms: float = 100.0
    p_levels: int = 10
    markov_order: int = 2
    window_T: int = 7
    stride: int = 1
    alpha: float = 0.05
    fdr_q: float = 0.1
    bootstrap_B: int = 200
    lambda_policy: str = "optimize"
    seed: int = 0
    feature: str = "mean"
    heat_sigma: float = 0.5
    sample_rate_hz: float = 500.0
    band_low_hz: float = 0.5
    band_high_hz: float = 70.0
    notch_low_hz: float = 59.0
    notch_high_hz: float = 61.0
    apply_filter: bool = True
    bootstrap_reps: int = 50
    cluster_k: int = 3
    knn_k: int = 1
    jobs: int = 1

    def validate(self) -> None:
        if self.segment_ms <= 0 or not 0 <= self.overlap_ms < self.segment_ms:
            raise BadInput("need 0 <= overlap_ms < segment_ms")
        if self.p_levels < 2:
            raise BadInput("p_levels must be >= 2")
        if self.markov_order < 1:
            raise BadInput("markov_order must be >= 1")
        if self.window_T <= self.markov_order:
            raise BadInput("window_T must exceed markov_order")
        if self.stride < 1:
            raise BadInput("stride must be >= 1")
        if not 0 < self.alpha < 1 or not 0 < self.fdr_q < 1:
            raise BadInput("alpha and fdr_q must lie in (0, 1)")
        if self.bootstrap_B < 100:
            raise BadInput("bootstrap_B must be >= 100")
        if self.resolve_lambda() == "optimize" and self.bootstrap_reps < 20:
            raise BadInput("bootstrap_reps must be >= 20 when optimizing lambda")
        if self.feature not in ("mean", "energy"):
            raise BadInput("feature must be mean or energy")
        if self.heat_sigma <= 0:
            raise BadInput("heat_sigma must be positive")
        if self.sample_rate_hz <= 0:
            raise BadInput("sample_rate_hz must be positive")
        if self.jobs < 1:
            raise BadInput("jobs must be >= 1")
        if self.apply_filter and not (
            0 <= self.band_low_hz < self.band_high_hz < self.sample_rate_hz / 2
        ):
            raise BadInput("filter band incompatible with sample rate")

    def resolve_lambda(self):
        """Normalized lambda policy: 'optimize' or a float in [0, 1]."""
        policy = self.lambda_policy
        if isinstance(policy, (int, float)) and not isinstance(policy, bool):
            value = float(policy)
        else:
            text = str(policy).strip().lower()
            if text in ("optimize", "opt"):
                return "optimize"
            try:
                value = float(text)
            except ValueError as exc:
                raise BadInput(f"bad lambda_policy {policy!r}") from exc
        if not 0.0 <= value <= 1.0:
            raise BadInput(f"fixed lambda {value} outside [0, 1]")
        return value


_BOOL_STRINGS = {"true": True, "1": True, "yes": True,
                 "false": False, "0": False, "no": False}


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Parse flat key=value lines (# comments allowed) over ``base`` defaults."""
    cfg = base or PipelineConfig()
    known = {f.name: f.type for f in fields(PipelineConfig)}
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"config line {lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise BadInput(f"config line {lineno}: unknown key {key!r}")
        current = getattr(cfg, key)
        if key == "lambda_policy":
            updates[key] = value
        elif isinstance(current, bool):
            if value.lower() not in _BOOL_STRINGS:
                raise BadInput(f"config line {lineno}: bad boolean {value!r}")
            updates[key] = _BOOL_STRINGS[value.lower()]
        elif isinstance(current, int):
            try:
                updates[key] = int(value)
            except ValueError as exc:
                raise BadInput(f"config line {lineno}: bad integer {value!r}") from exc
        elif isinstance(current, float):
            try:
                updates[key] = float(value)
            except ValueError as exc:
                raise BadInput(f"config line {lineno}: bad number {value!r}") from exc
        else:
            updates[key] = value
    return replace(cfg, **updates)


# -- preprocess -------------------------------------------------------------


def preprocess_recording(rec: Recording, config: PipelineConfig):
    """Filter, segment, train per-channel codebooks, and quantize.

    Returns (channels, codebooks); codebooks are trained per channel on
    that channel's own features.
    """
    config.validate()
    if config.apply_filter:
        notch = None
        if config.notch_low_hz and config.notch_high_hz:
            band = (config.notch_low_hz, config.notch_high_hz)
            if config.band_low_hz < band[0] < band[1] < config.band_high_hz:
                notch = band
        rec = bandpass_notch(rec, config.band_low_hz, config.band_high_hz, notch)
    feats = segment_features(rec, config.segment_ms, config.overlap_ms, config.feature)
    channels = []
    codebooks = {}
    for seq in feats:
        cb = train_lloyd_max(seq.values, config.p_levels)
        codebooks[seq.source_channel] = cb
        channels.append(
            ChannelData(
                label=seq.source_channel,
                features=seq,
                symbols=quantize(seq, cb),
            )
        )
    return channels, codebooks


def preprocess_file(path, config: PipelineConfig):
    rec = load_recording(path, "csv", sample_rate_hz=config.sample_rate_hz)
    return preprocess_recording(rec, config)


# -- estimate ---------------------------------------------------------------


def pair_seed(seed: int, pair_index: int) -> int:
    return seed + _PAIR_SEED_STRIDE * pair_index


def _estimate_one_pair(payload):
    """Worker for one ordered pair: DI estimate plus null calibration.

    Shares the full-sample fits between the estimate and the permutation
    null (as warm starts), which matches composing estimate_di with
    bootstrap_null_stats bit for bit at a fraction of the cost.
    """
    (src, dst, idx, order, policy, reps, null_b, base_seed) = payload[:8]
    sym, feat = payload[8], payload[9]
    started = time.perf_counter()
    seed = pair_seed(base_seed, idx)
    classes, class_count, x_past, x_cur = _prepare_pair(sym, feat, order)
    if class_count == 1:
        est = DiEstimate(
            value=0.0, lambda_=0.0, order=order, n_rows=classes.size,
            boot_mean=0.0, boot_std=0.0, degenerate=True,
        )
        elapsed = time.perf_counter() - started
        return (src, dst, est, 0.0, 0.0, 1.0, elapsed)
    fits = _PairFits(classes, x_past, x_cur, class_count, reps, seed)
    est = _estimate_from_fits(fits, policy, reps, order)
    null_values = null_di_distribution(
        classes, x_past, x_cur, class_count, null_b,
        seed + _NULL_SEED_OFFSET, est.lambda_,
        warm_past=fits.beta_past, warm_cur=fits.beta_cur,
    )
    mu = float(null_values.mean())
    sigma = float(null_values.std(ddof=1))
    if not np.isfinite(sigma) or sigma <= 0:
        raise NumericalError(f"degenerate null resamples for pair {src}->{dst}")
    pval = p_value(est.value, mu, sigma)
    elapsed = time.perf_counter() - started
    return (src, dst, est, mu, sigma, pval, elapsed)


def estimate_matrix(channels, config: PipelineConfig):
    """Full K(K-1) ordered-pair sweep of DI estimates and p-values.

    Per-pair seeds depend only on (config seed, pair index), so results do
    not depend on worker count or completion order.
    """
    config.validate()
    policy = config.resolve_lambda()
    labels = [ch.label for ch in channels]
    k = len(labels)
    jobs = []
    idx = 0
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            jobs.append(
                (
                    i, j, idx, config.markov_order, policy,
                    config.bootstrap_reps, config.bootstrap_B, config.seed,
                    channels[i].symbols, channels[j].features,
                )
            )
            idx += 1
    if config.jobs > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_estimate_one_pair, jobs, chunksize=8))
    else:
        results = [_estimate_one_pair(job) for job in jobs]

    grid: list[list[DiEstimate | None]] = [[None] * k for _ in range(k)]
    pvals = np.ones((k, k))
    null_stats = {}
    for (i, j, est, mu, sigma, pval, elapsed) in results:
        grid[i][j] = est
        pvals[i, j] = pval
        null_stats[(labels[i], labels[j])] = (mu, sigma)
        log.info("pair %s->%s: %.3f s", labels[i], labels[j], elapsed)
    di = DiMatrix(tuple(labels), tuple(tuple(row) for row in grid))
    pv = PValueMatrix(tuple(labels), pvals)
    return di, pv, null_stats


# -- graph ------------------------------------------------------------------


def graph_from_matrices(di: DiMatrix, pv: PValueMatrix, config: PipelineConfig):
    """Corrected-BH control at fdr_q with the raw significance cutoff applied."""
    return build_graph(di, pv, config.fdr_q, prefilter_p=config.alpha)


# -- analyze ----------------------------------------------------------------


def analyze_single(di: DiMatrix, config: PipelineConfig):
    """Clusters and a 2-D embedding for one DI matrix."""
    dist = heat_kernel_distance(di, config.heat_sigma)
    assignment, objective = kmeans(
        dist, min(config.cluster_k, dist.k), seed=config.seed, return_objective=True
    )
    dims = min(2, dist.k - 1)
    coords = mds(dist, dims)
    return dist, assignment, objective, coords


def analyze_corpus(corpus_items, config: PipelineConfig):
    """Leave-one-out kNN classification report plus one-vs-rest ROC data.

    The per-item score for class c is the negated distance to the nearest
    class-c item among the other items; pooled one-vs-rest scores feed the
    ROC curve and per-class AUCs.
    """
    if not corpus_items:
        raise EmptyCorpus("no labeled matrices to analyze")
    classes = sorted({label for _, label in corpus_items}, key=str)
    if len(classes) < 2:
        raise EmptyCorpus("need at least two classes for classification")
    n = len(corpus_items)
    correct = 0
    predictions = []
    per_class_hits = {c: [0, 0] for c in classes}
    pooled_scores: list[float] = []
    pooled_labels: list[int] = []
    from .analysis import _matrix_distance

    dists = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = _matrix_distance(corpus_items[i][0], corpus_items[j][0])
            dists[i, j] = dists[j, i] = d
    for i in range(n):
        others = [corpus_items[j] for j in range(n) if j != i]
        corpus = LabeledCorpus(tuple(others), class_count=len(classes))
        k = min(config.knn_k, len(others))
        predicted = knn_classify(corpus, corpus_items[i][0], k)
        truth = corpus_items[i][1]
        predictions.append({"index": i, "label": str(truth), "predicted": str(predicted)})
        per_class_hits[truth][1] += 1
        if predicted == truth:
            correct += 1
            per_class_hits[truth][0] += 1
        for c in classes:
            rival = [dists[i, j] for j in range(n) if j != i and corpus_items[j][1] == c]
            if rival:
                pooled_scores.append(-min(rival))
                pooled_labels.append(1 if truth == c else 0)
    report = {
        "n_items": n,
        "k": int(config.knn_k),
        "accuracy": correct / n,
        "per_class_accuracy": {
            str(c): (hits / total if total else 0.0)
            for c, (hits, total) in per_class_hits.items()
        },
        "predictions": predictions,
    }
    auc = roc_auc(pooled_scores, pooled_labels)
    points = roc_points(pooled_scores, pooled_labels)
    report["one_vs_rest_auc"] = auc
    return report, points


# -- simulate ---------------------------------------------------------------


def simulate(spec: GeneratorSpec):
    """Generate a synthetic corpus plus its oracle metadata."""
    channels = generate(spec)
    labels = [ch.name for ch in channels]
    samples = np.column_stack([ch.features.values for ch in channels])
    try:
        oracle_value = exact_di(spec)
    except NoOracle:
        oracle_value = None
    oracle = {
        "kind": spec.kind,
        "length": spec.length,
        "seed": spec.seed,
        "flip_prob": spec.flip_prob,
        "coupling": spec.coupling,
        "noise_std": spec.noise_std,
        "edges": [list(e) for e in spec.edges],
        "exact_di_per_step": oracle_value,
    }
    return labels, samples, oracle
