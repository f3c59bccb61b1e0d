"""Readers and writers for the pipeline's file formats.

Floats are serialized with ``repr`` (shortest round-trip form) and JSON
keys are sorted, so identical inputs always produce byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ParseError, ShapeError
from .estimator import DiEstimate, DiMatrix, LocalDiSurface
from .inference import Edge, InteractionGraph, PValueMatrix
from .logit import ShrinkageLogitModel
from .signals import Codebook, FeatureSequence, QuantizedSequence


def _fmt(value: float) -> str:
    return repr(float(value))


def write_json(path, payload) -> None:
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc


# -- codebooks --------------------------------------------------------------


def codebooks_to_json(codebooks: dict[str, Codebook]) -> dict:
    return {
        label: {
            "boundaries": [float(b) for b in cb.boundaries],
            "representatives": [float(r) for r in cb.representatives],
        }
        for label, cb in codebooks.items()
    }


def codebooks_from_json(payload: dict) -> dict[str, Codebook]:
    out = {}
    for label, entry in payload.items():
        reps = entry["representatives"]
        out[label] = Codebook(entry["boundaries"], reps, p=len(reps))
    return out


# -- features ---------------------------------------------------------------


def features_to_json(channels, config_echo: dict) -> dict:
    payload = dict(config_echo)
    payload["channels"] = [
        {
            "label": ch.label,
            "values": [float(v) for v in ch.features.values],
            "symbols": [int(s) for s in ch.symbols.symbols],
            "alphabet_size": int(ch.symbols.alphabet_size),
            "segment_len_ms": float(ch.features.segment_len_ms),
            "overlap_ms": float(ch.features.overlap_ms),
        }
        for ch in channels
    ]
    return payload


def features_from_json(payload: dict):
    from .pipeline import ChannelData

    channels = []
    for entry in payload["channels"]:
        label = entry["label"]
        feats = FeatureSequence(
            entry["values"],
            entry["segment_len_ms"],
            entry["overlap_ms"],
            source_channel=label,
        )
        syms = QuantizedSequence(
            entry["symbols"], alphabet_size=entry["alphabet_size"], codebook_id=label
        )
        channels.append(ChannelData(label=label, features=feats, symbols=syms))
    return channels


# -- logit models -----------------------------------------------------------


def model_to_json(model: ShrinkageLogitModel, order: int) -> dict:
    return {
        "beta": [[float(v) for v in row] for row in model.beta],
        "target": [float(v) for v in model.target[0]],
        "lambda": float(model.lambda_),
        "class_count": int(model.class_count),
        "order": int(order),
    }


def model_from_json(payload: dict) -> tuple[ShrinkageLogitModel, int]:
    beta = np.asarray(payload["beta"], dtype=float)
    target_vec = np.asarray(payload["target"], dtype=float)
    lam = float(payload["lambda"])
    target = np.tile(target_vec, (beta.shape[0], 1))
    if lam == 1.0:
        beta_ml = np.zeros_like(beta)  # irrecoverable at full shrinkage
    else:
        beta_ml = (beta - lam * target) / (1.0 - lam)
    model = ShrinkageLogitModel(
        beta_ml, target, lam, lam * target + (1 - lam) * beta_ml,
        payload["class_count"], beta.shape[1],
    )
    return model, int(payload["order"])


# -- matrices ---------------------------------------------------------------


def matrix_to_csv(labels, values: np.ndarray) -> str:
    lines = ["," + ",".join(labels)]
    for label, row in zip(labels, values):
        lines.append(label + "," + ",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def matrix_from_csv(text: str):
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines:
        raise ParseError("empty matrix CSV")
    header = lines[0].split(",")
    labels = tuple(header[1:])
    k = len(labels)
    values = np.zeros((k, k))
    if len(lines) - 1 != k:
        raise ParseError(f"expected {k} matrix rows, found {len(lines) - 1}")
    for i, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != k + 1 or cells[0] != labels[i]:
            raise ParseError(f"matrix row {i} malformed")
        try:
            values[i] = [float(c) for c in cells[1:]]
        except ValueError as exc:
            raise ParseError(f"matrix row {i}: non-numeric cell") from exc
    return labels, values


def di_matrix_to_json(di: DiMatrix, meta: dict) -> dict:
    entries = []
    for i, src in enumerate(di.labels):
        for j, dst in enumerate(di.labels):
            est = di.entries[i][j]
            if est is None:
                continue
            entries.append(
                {
                    "source": src,
                    "target": dst,
                    "value": float(est.value),
                    "value_total": float(est.value_total),
                    "value_clamped": float(est.value_clamped),
                    "lambda": float(est.lambda_),
                    "order": int(est.order),
                    "n_rows": int(est.n_rows),
                    "boot_mean": float(est.boot_mean),
                    "boot_std": float(est.boot_std),
                    "degenerate": bool(est.degenerate),
                }
            )
    payload = dict(meta)
    payload["labels"] = list(di.labels)
    payload["entries"] = entries
    return payload


def di_matrix_from_json(payload: dict) -> DiMatrix:
    labels = tuple(payload["labels"])
    k = len(labels)
    index = {label: i for i, label in enumerate(labels)}
    grid: list[list[DiEstimate | None]] = [[None] * k for _ in range(k)]
    for e in payload["entries"]:
        est = DiEstimate(
            value=e["value"],
            lambda_=e["lambda"],
            order=e["order"],
            n_rows=e["n_rows"],
            boot_mean=e["boot_mean"],
            boot_std=e["boot_std"],
            value_total=e["value_total"],
            value_clamped=e["value_clamped"],
            degenerate=e.get("degenerate", False),
        )
        grid[index[e["source"]]][index[e["target"]]] = est
    return DiMatrix(labels, tuple(tuple(row) for row in grid))


def pvalues_to_csv(pv: PValueMatrix) -> str:
    return matrix_to_csv(pv.labels, pv.entries)


def pvalues_from_csv(text: str) -> PValueMatrix:
    labels, values = matrix_from_csv(text)
    return PValueMatrix(labels, values)


# -- local DI surfaces ------------------------------------------------------


def surface_to_csv(surface: LocalDiSurface) -> str:
    ny = surface.grid.shape[1]
    taus_y = [surface.stride * j for j in range(ny)]
    lines = ["tau_x\\tau_y," + ",".join(str(t) for t in taus_y)]
    for i, row in enumerate(surface.grid):
        lines.append(
            str(surface.stride * i) + "," + ",".join(_fmt(v) for v in row)
        )
    return "\n".join(lines) + "\n"


# -- graphs -----------------------------------------------------------------


def graph_to_dot(graph: InteractionGraph) -> str:
    lines = ["digraph interactions {"]
    for node in graph.nodes:
        lines.append(f'  "{node}";')
    for e in graph.edges:
        lines.append(
            f'  "{e.source}" -> "{e.target}" '
            f'[label="di={_fmt(e.di_value)} p={_fmt(e.p_value)}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_json(graph: InteractionGraph) -> dict:
    return {
        "nodes": list(graph.nodes),
        "alpha": float(graph.alpha),
        "fdr_method": graph.fdr_method,
        "edges": [
            {
                "source": e.source,
                "target": e.target,
                "di": float(e.di_value),
                "p": float(e.p_value),
            }
            for e in graph.edges
        ],
    }


def graph_from_json(payload: dict) -> InteractionGraph:
    edges = tuple(
        Edge(e["source"], e["target"], e["di"], e["p"]) for e in payload["edges"]
    )
    return InteractionGraph(
        nodes=tuple(payload["nodes"]),
        edges=edges,
        alpha=payload["alpha"],
        fdr_method=payload.get("fdr_method", "bh_corrected"),
    )


# -- analysis outputs -------------------------------------------------------


def mds_to_csv(labels, coords: np.ndarray) -> str:
    dims = coords.shape[1]
    lines = ["label," + ",".join(f"dim{i + 1}" for i in range(dims))]
    for label, row in zip(labels, coords):
        lines.append(label + "," + ",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def roc_to_csv(points: np.ndarray) -> str:
    lines = ["fpr,tpr"]
    for fpr, tpr in points:
        lines.append(f"{_fmt(fpr)},{_fmt(tpr)}")
    return "\n".join(lines) + "\n"


def recording_to_csv(labels, samples: np.ndarray) -> str:
    if samples.ndim != 2 or samples.shape[1] != len(labels):
        raise ShapeError("samples must be (n, len(labels))")
    lines = [",".join(labels)]
    for row in samples:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"
