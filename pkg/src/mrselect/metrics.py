"""Objective functions: activation coverage (threshold or surprise-bucket
variants), trace similarity, and kill ratio, evaluated for a candidate set of
transform chains over a data subset.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .data import LabeledDataset
from .errors import (
    EmptySubset,
    EmptyTraceSet,
    LengthMismatch,
    MissingClassBank,
)
from .model import MlpModel, predict_batch
from .transforms import BoundsTable, apply_chain_batch


@dataclass
class CoverageConfig:
    criterion: str = "nc"  # "nc" | "dsa"
    nc_threshold: float = 0.25
    dsa_buckets: int = 1000
    dsa_upper: float = 2.0
    dsa_bank_cap: int = 2000

    def __post_init__(self):
        if self.criterion not in ("nc", "dsa"):
            raise ValueError(f"unknown coverage criterion {self.criterion!r}")
        if self.nc_threshold < 0:
            raise ValueError("nc_threshold must be >= 0")
        if self.dsa_buckets < 1:
            raise ValueError("dsa_buckets must be >= 1")
        if self.dsa_upper <= 0:
            raise ValueError("dsa_upper must be > 0")


@dataclass
class ObjectiveVector:
    coverage: float  # maximize
    similarity: float  # minimize
    kill_ratio: float  # maximize
    feasible: bool | None = None

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.coverage, self.similarity, self.kill_ratio)


def neuron_coverage(traces, threshold: float) -> float:
    """Fraction of neurons whose activation exceeds `threshold` on >= 1 trace."""
    arr = np.asarray(traces, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.size == 0 or len(arr) == 0:
        raise EmptyTraceSet("no traces given")
    return float((arr > threshold).any(axis=0).mean())


def build_reference_bank(model: MlpModel, dataset: LabeledDataset, cap: int = 2000, seed: int = 0) -> dict:
    """Per-predicted-class activation traces of a calibration set, used as the
    reference for surprise scores. Capped by uniform subsample.
    """
    probs, traces = predict_batch(model, dataset.flat)
    if cap is not None and len(traces) > cap:
        idx = np.sort(np.random.default_rng(seed).choice(len(traces), size=cap, replace=False))
        probs, traces = probs[idx], traces[idx]
    preds = probs.argmax(axis=1)
    return {int(c): traces[preds == c] for c in np.unique(preds)}


def dsa_score(trace: np.ndarray, predicted: int, reference: dict) -> float:
    """Surprise score: distance to the nearest same-class reference trace over
    the distance to the nearest other-class reference trace.
    """
    trace = np.asarray(trace, dtype=np.float64)
    same = reference.get(int(predicted))
    others = [bank for cls, bank in reference.items() if cls != int(predicted) and len(bank)]
    if same is None or len(same) == 0 or not others:
        raise MissingClassBank(f"reference bank missing class {predicted} or alternatives")
    dist_a = float(np.sqrt(((same - trace) ** 2).sum(axis=1)).min())
    if dist_a == 0.0:
        return 0.0
    dist_b = min(float(np.sqrt(((bank - trace) ** 2).sum(axis=1)).min()) for bank in others)
    if dist_b == 0.0:
        return float("inf")
    return dist_a / dist_b


def dsa_scores_batch(traces: np.ndarray, predicted: np.ndarray, reference: dict) -> np.ndarray:
    return np.array([dsa_score(t, p, reference) for t, p in zip(traces, predicted)])


def dsa_coverage(scores, buckets: int, upper: float) -> float:
    """Fraction of the [0, upper] buckets containing at least one score."""
    scores = np.asarray(scores, dtype=np.float64)
    width = upper / buckets
    filled = set()
    for s in scores:
        if 0.0 <= s <= upper:
            filled.add(min(int(s // width), buckets - 1))
    return len(filled) / buckets


def _normalize_rows(arr: np.ndarray) -> np.ndarray:
    lo = arr.min(axis=1, keepdims=True)
    rng = arr.max(axis=1, keepdims=True) - lo
    rng = np.where(rng == 0, 1.0, rng)
    return (arr - lo) / rng


def neuron_similarity(traces, config: CoverageConfig) -> float:
    """Mean normalized pairwise trace distance across one original/follow-up
    tuple: Hamming on threshold-binarized traces in "nc" mode, L1 on per-trace
    min-max-normalized raw traces in "dsa" mode. Result in [0, 1].
    """
    try:
        arr = np.asarray(traces, dtype=np.float64)
    except ValueError as exc:
        raise LengthMismatch("traces have unequal lengths") from exc
    if arr.ndim != 2 or len(arr) < 2:
        raise LengthMismatch("need >= 2 equal-length traces")
    n_tot = arr.shape[1]
    if config.criterion == "nc":
        rows = (arr > config.nc_threshold).astype(np.float64)
    else:
        rows = _normalize_rows(arr)
    total = 0.0
    for i, j in combinations(range(len(arr)), 2):
        total += float(np.abs(rows[i] - rows[j]).sum())
    n_pairs = len(arr) * (len(arr) - 1) // 2
    return total / (n_tot * n_pairs)


def _chain_images(individual, subset: LabeledDataset, bounds: BoundsTable):
    """Transformed image stacks (flattened), one per chain of the individual."""
    return [
        apply_chain_batch(chain, subset.images, bounds).reshape(len(subset), -1)
        for chain in individual.chains
    ]


def kill_ratio(model: MlpModel, subset: LabeledDataset, individual, bounds: BoundsTable | None = None) -> float:
    """Fraction of inputs whose prediction flips under at least one chain."""
    if len(subset) == 0:
        raise EmptySubset("empty evaluation subset")
    if not individual.chains:
        raise EmptySubset("individual has no chains")
    probs, _ = predict_batch(model, subset.flat)
    base = probs.argmax(axis=1)
    killed = np.zeros(len(subset), dtype=bool)
    for flat in _chain_images(individual, subset, bounds):
        p, _ = predict_batch(model, flat)
        killed |= p.argmax(axis=1) != base
    return float(killed.mean())


def evaluate(
    model: MlpModel,
    subset: LabeledDataset,
    individual,
    config: CoverageConfig,
    bounds: BoundsTable | None = None,
    reference: dict | None = None,
    trace_cache: dict | None = None,
) -> ObjectiveVector:
    """Full objective vector over the subset: coverage of the union of
    original + follow-up traces, mean per-input tuple similarity, kill ratio.
    The feasibility flag is left unset here.

    `trace_cache` memoizes per-chain (predictions, traces) by chain key; it is
    only sound while the subset stays fixed.
    """
    if len(subset) == 0:
        raise EmptySubset("empty evaluation subset")
    if not individual.chains:
        raise EmptySubset("individual has no chains")

    base_probs, base_traces = predict_batch(model, subset.flat)
    base_pred = base_probs.argmax(axis=1)

    chain_traces = []
    chain_preds = []
    for chain in individual.chains:
        key = chain.key() if trace_cache is not None else None
        if key is not None and key in trace_cache:
            preds, t = trace_cache[key]
        else:
            flat = apply_chain_batch(chain, subset.images, bounds).reshape(len(subset), -1)
            p, t = predict_batch(model, flat)
            preds = p.argmax(axis=1)
            if key is not None:
                trace_cache[key] = (preds, t)
        chain_traces.append(t)
        chain_preds.append(preds)

    all_traces = np.concatenate([base_traces] + chain_traces, axis=0)
    if config.criterion == "nc":
        coverage = neuron_coverage(all_traces, config.nc_threshold)
    else:
        if reference is None:
            raise MissingClassBank("surprise coverage requires a reference bank")
        all_preds = np.concatenate([base_pred] + chain_preds)
        scores = dsa_scores_batch(all_traces, all_preds, reference)
        coverage = dsa_coverage(scores, config.dsa_buckets, config.dsa_upper)

    sims = []
    for i in range(len(subset)):
        tup = np.stack([base_traces[i]] + [t[i] for t in chain_traces])
        sims.append(neuron_similarity(tup, config))
    similarity = float(np.mean(sims))

    killed = np.zeros(len(subset), dtype=bool)
    for preds in chain_preds:
        killed |= preds != base_pred
    return ObjectiveVector(coverage, similarity, float(killed.mean()))
