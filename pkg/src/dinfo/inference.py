"""Statistical calibration of DI estimates and directed-graph construction.

The no-interaction reference for a pair is obtained by permuting the
temporal pairing between the class rows and the regressor rows: a plain
iid bootstrap would preserve the coupling and could not serve as a null.
One-sided p-values (large DI is the alternative) feed a corrected
Benjamini-Hochberg step-up rule whose thresholds are deflated by the
harmonic sum, keeping FDR control valid under dependence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadInput,
    BadPValue,
    BadSigma,
    NumericalError,
    ShapeError,
    TooFewTrials,
)
from .estimator import DiMatrix, _prepare_pair
from .logit import fit_softmax_batch, null_di_distribution
from .signals import FeatureSequence, QuantizedSequence

MIN_NULL_REPS = 100


@dataclass(frozen=True)
class PValueMatrix:
    """Per-pair one-sided p-values; the undefined diagonal is fixed at 1."""

    labels: tuple[str, ...]
    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        entries = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", entries)
        k = len(self.labels)
        if entries.shape != (k, k):
            raise ShapeError("entries must be K x K")
        if np.any(entries < 0) or np.any(entries > 1):
            raise BadPValue("p-values must lie in [0, 1]")
        if not np.all(np.diag(entries) == 1.0):
            raise BadPValue("diagonal p-values must be 1")


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    di_value: float
    p_value: float


@dataclass(frozen=True)
class InteractionGraph:
    """Directed edges surviving FDR control, with their DI and p-values."""

    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    alpha: float
    fdr_method: str = "bh_corrected"

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        seen = set()
        for e in self.edges:
            if e.source not in self.nodes or e.target not in self.nodes:
                raise ShapeError(f"edge {e.source}->{e.target} uses unknown node")
            if e.source == e.target:
                raise ShapeError("self-edges are not allowed")
            if (e.source, e.target) in seen:
                raise ShapeError("duplicate edge")
            seen.add((e.source, e.target))


def bootstrap_null_stats(
    x: QuantizedSequence,
    y: FeatureSequence,
    order: int,
    B: int,
    seed: int,
    *,
    lambda_value: float = 0.0,
) -> tuple[float, float]:
    """Mean and spread of the DI estimate under broken temporal pairing.

    Each of the B resamples permutes which regressor row is matched to each
    class row (replicate b uses RNG stream seed + b), refits both models,
    and re-evaluates the per-step DI at ``lambda_value``.

    Raises TooFewTrials for B < 100 and NumericalError when the resampled
    estimates are degenerate (zero spread).
    """
    if B < MIN_NULL_REPS:
        raise TooFewTrials(f"null calibration needs B >= {MIN_NULL_REPS}")
    classes, class_count, x_past, x_cur = _prepare_pair(x, y, order)
    if class_count == 1:
        raise NumericalError("constant symbols leave nothing to calibrate")
    warm_p, _ = fit_softmax_batch(x_past[None], classes[None], class_count)
    warm_c, _ = fit_softmax_batch(x_cur[None], classes[None], class_count)
    values = null_di_distribution(
        classes, x_past, x_cur, class_count, B, seed, lambda_value,
        warm_past=warm_p[0], warm_cur=warm_c[0],
    )
    mu = float(values.mean())
    sigma = float(values.std(ddof=1))
    if not np.isfinite(sigma) or sigma <= 0:
        raise NumericalError("degenerate null resamples (zero spread)")
    return mu, sigma


def p_value(di: float, mu: float, sigma: float) -> float:
    """One-sided normal tail probability 1 - Phi((di - mu) / sigma)."""
    if sigma <= 0:
        raise BadSigma("sigma must be positive")
    z = (di - mu) / sigma
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def bh_corrected(pvals, alpha: float) -> np.ndarray:
    """Step-up FDR rule with harmonic-sum correction (valid under dependence).

    Sorting the m p-values ascending, hypothesis j passes when
    p_(j) <= (j/m) * alpha / sum_{n=1}^{m} 1/n; everything at or below the
    largest passing p-value is rejected.  Returns the rejected indices into
    the original list (empty array when nothing passes).
    """
    p = np.asarray(pvals, dtype=float).ravel()
    if p.size == 0:
        return np.empty(0, dtype=int)
    if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
        raise BadPValue("p-values must lie in [0, 1]")
    if not 0.0 < alpha < 1.0:
        raise BadInput("alpha must lie in (0, 1)")
    m = p.size
    harmonic = float(np.sum(1.0 / np.arange(1, m + 1)))
    order = np.argsort(p, kind="stable")
    thresholds = (np.arange(1, m + 1) / m) * alpha / harmonic
    passing = np.flatnonzero(p[order] <= thresholds)
    if passing.size == 0:
        return np.empty(0, dtype=int)
    cutoff = p[order][passing[-1]]
    return np.flatnonzero(p <= cutoff)


def build_graph(
    di: DiMatrix,
    pv: PValueMatrix,
    alpha: float,
    *,
    prefilter_p: float | None = None,
) -> InteractionGraph:
    """Directed graph of the ordered pairs surviving corrected-BH control.

    All K(K-1) off-diagonal hypotheses enter the step-up rule at level
    ``alpha``.  ``prefilter_p`` optionally drops surviving edges whose raw
    p-value exceeds a fixed significance cutoff; it never loosens the rule.
    """
    if tuple(di.labels) != tuple(pv.labels):
        raise ShapeError("DI and p-value matrices carry different labels")
    k = di.k
    pairs = [(i, j) for i in range(k) for j in range(k) if i != j]
    pvals = [float(pv.entries[i, j]) for i, j in pairs]
    rejected = set(bh_corrected(pvals, alpha).tolist())
    edges = []
    for idx, (i, j) in enumerate(pairs):
        if idx not in rejected:
            continue
        if prefilter_p is not None and pvals[idx] > prefilter_p:
            continue
        est = di.entries[i][j]
        edges.append(
            Edge(
                source=di.labels[i],
                target=di.labels[j],
                di_value=est.value if est is not None else 0.0,
                p_value=pvals[idx],
            )
        )
    return InteractionGraph(nodes=di.labels, edges=tuple(edges), alpha=alpha)
