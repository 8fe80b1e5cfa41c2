"""Span scoring, decoding, O-bias tuning and paired bootstrap tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Dataset, TagSet, tags_to_spans
from .lattice import viterbi_batch
from .scorer import Tagger
from .trainer import corpus_rho_hat

DEFAULT_BIAS_GRID = tuple(0.25 * i for i in range(21))


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "PRF":
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f1, tp, fp, fn)


def _f1(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return np.divide(2 * tp, denom, out=np.zeros_like(denom, dtype=float), where=denom > 0)


def span_counts(predicted: Sequence[Sequence[int]], gold: Sequence[Sequence[int]],
                tagset: TagSet) -> tuple[int, int, int]:
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predicted sequences for {len(gold)} gold sequences")
    tp = fp = fn = 0
    for k, (p, g) in enumerate(zip(predicted, gold)):
        if len(p) != len(g):
            raise ValueError(f"sequence {k}: predicted length {len(p)} != gold length {len(g)}")
        ps, gs = tags_to_spans(p, tagset), tags_to_spans(g, tagset)
        hit = len(ps & gs)
        tp += hit
        fp += len(ps) - hit
        fn += len(gs) - hit
    return tp, fp, fn


def span_prf(predicted: Sequence[Sequence[int]], gold: Sequence[Sequence[int]], tagset: TagSet) -> PRF:
    """Micro-averaged exact-match span precision, recall and F1."""
    return PRF.from_counts(*span_counts(predicted, gold, tagset))


def decode(tagger: Tagger, dataset: Dataset, o_bias: float = 0.0, batch_size: int = 256) -> list[tuple[int, ...]]:
    sentences = dataset.sentences()
    out: list[tuple[int, ...]] = []
    for lo in range(0, len(sentences), batch_size):
        batch = tagger.lattices([s.tokens for s in sentences[lo: lo + batch_size]])
        out.extend(viterbi_batch(batch, o_bias)[0])
    return out


def gold_sequences(dataset: Dataset) -> list[tuple[int, ...]]:
    if not dataset.has_gold:
        raise ValueError("dataset carries no gold tags")
    return [s.gold for s in dataset.sentences()]


def evaluate(tagger: Tagger, dataset: Dataset, o_bias: float = 0.0) -> PRF:
    return span_prf(decode(tagger, dataset, o_bias), gold_sequences(dataset), dataset.tagset)


def dev_f1(tagger: Tagger, dataset: Dataset) -> float:
    return evaluate(tagger, dataset).f1


@dataclass(frozen=True)
class BiasSearch:
    best: float
    scores: tuple[tuple[float, float], ...]


def tune_o_bias(tagger: Tagger, dev: Dataset, grid: Sequence[float] = DEFAULT_BIAS_GRID) -> BiasSearch:
    """Grid search for the O-potential penalty maximizing dev span F1.

    Ties go to the smaller bias.
    """
    grid = sorted(float(b) for b in grid)
    if not grid or grid[0] != 0.0 or any(b < 0 for b in grid):
        raise ValueError("bias grid must be non-negative and include 0")
    scores = tuple((b, evaluate(tagger, dev, b).f1) for b in grid)
    best = scores[0]
    for b, f in scores[1:]:
        if f > best[1]:
            best = (b, f)
    return BiasSearch(best[0], scores)


def predicted_entity_ratio(tagger: Tagger, dataset: Dataset) -> float:
    return corpus_rho_hat(tagger, dataset.sentences())


@dataclass(frozen=True)
class BootstrapConfig:
    iterations: int = 10_000
    confidence: float = 0.99
    rng_seed: int = 0
    chunk: int = 1000

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")


@dataclass(frozen=True)
class BootstrapResult:
    observed_diff: float
    ci_low: float
    ci_high: float
    significant: bool


def document_counts(predicted: Sequence[Sequence[Sequence[int]]], gold: Sequence[Sequence[Sequence[int]]],
                    tagset: TagSet) -> np.ndarray:
    """``(D, 3)`` array of per-document (tp, fp, fn)."""
    if len(predicted) != len(gold):
        raise ValueError("predictions and gold differ in document count")
    return np.array([span_counts(p, g, tagset) for p, g in zip(predicted, gold)], dtype=float).reshape(-1, 3)


def bootstrap_f1_diff(pred_a, pred_b, gold, tagset: TagSet, config: BootstrapConfig = BootstrapConfig()) -> BootstrapResult:
    """Percentile bootstrap CI for ``F1(A) - F1(B)``, resampling documents.

    Arguments are per-document lists of tag sequences. Resample indices are
    drawn as ``rng.integers(0, D, size=(chunk, D))`` blocks from
    ``default_rng(rng_seed)``, one row per iteration.
    """
    if not gold:
        raise ValueError("cannot bootstrap an empty corpus")
    ca = document_counts(pred_a, gold, tagset)
    cb = document_counts(pred_b, gold, tagset)
    n_docs = len(gold)
    rng = np.random.default_rng(config.rng_seed)
    diffs = np.empty(config.iterations)
    done = 0
    while done < config.iterations:
        rows = min(config.chunk, config.iterations - done)
        idx = rng.integers(0, n_docs, size=(rows, n_docs))
        sa = ca[idx].sum(axis=1)
        sb = cb[idx].sum(axis=1)
        diffs[done: done + rows] = _f1(*sa.T) - _f1(*sb.T)
        done += rows
    tail = (1 - config.confidence) / 2 * 100
    lo, hi = np.percentile(diffs, [tail, 100 - tail])
    full = _f1(*ca.sum(axis=0)) - _f1(*cb.sum(axis=0))
    return BootstrapResult(float(full), float(lo), float(hi), bool(lo > 0 or hi < 0))


def by_document(dataset: Dataset, sequences: Sequence[Sequence[int]]) -> list[list[Sequence[int]]]:
    """Regroup a flat per-sentence list along the dataset's documents."""
    out, k = [], 0
    for doc in dataset.documents:
        out.append(list(sequences[k: k + len(doc.sentences)]))
        k += len(doc.sentences)
    return out
