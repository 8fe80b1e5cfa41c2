"""Simulated low-recall annotation of gold corpora.

Both samplers draw from ``numpy.random.default_rng(rng_seed)`` (PCG64) in a
fixed order, documented on each function, so a seed pins the output.

* NNS (non-native speaker): drop whole mention-string groups until entity
  recall first reaches the target, then add short random false-positive
  spans until precision first reaches the target.
* EE (exploratory expert): visit documents in random order and keep gold
  spans left to right with a fixed probability, at most ``per_doc_cap`` per
  document, until ``total_budget`` spans are kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .corpus import Dataset, Document, ObservedTags, Span

SpanKey = tuple[int, int, Span]  # (document index, sentence index, span)


class SamplerError(ValueError):
    pass


@dataclass(frozen=True)
class NnsConfig:
    target_recall: float = 0.5
    target_precision: float = 0.9
    fp_span_max_len: int = 2
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 < self.target_recall <= 1 or not 0 < self.target_precision <= 1:
            raise ValueError("targets must lie in (0, 1]")
        if self.fp_span_max_len < 1:
            raise ValueError("fp_span_max_len must be >= 1")


@dataclass(frozen=True)
class EeConfig:
    total_budget: int = 1000
    per_doc_cap: int | None = 10
    keep_prob: float = 0.8
    rng_seed: int = 0

    def __post_init__(self):
        if self.total_budget < 1:
            raise ValueError("total_budget must be >= 1")
        if self.per_doc_cap is not None and self.per_doc_cap < 1:
            raise ValueError("per_doc_cap must be >= 1")
        if not 0 < self.keep_prob <= 1:
            raise ValueError("keep_prob must lie in (0, 1]")


@dataclass
class SamplerStats:
    recall: float
    precision: float
    n_gold: int
    n_kept: int
    n_correct: int
    per_doc_counts: list[int]
    position_bias: float
    gold_position_bias: float
    extra: dict = field(default_factory=dict)


def gold_spans(dataset: Dataset) -> list[SpanKey]:
    out = []
    for d, doc in enumerate(dataset.documents):
        for s, sent in enumerate(doc.sentences):
            if sent.gold is None:
                raise SamplerError(f"document {doc.id!r} sentence {s} has no gold tags")
            out.extend((d, s, sp) for sp in sorted(sent.gold_spans(dataset.tagset)))
    return out


def observed_spans(dataset: Dataset) -> list[SpanKey]:
    out = []
    for d, doc in enumerate(dataset.documents):
        for s, sent in enumerate(doc.sentences):
            out.extend((d, s, sp) for sp in sorted(sent.observed.spans(dataset.tagset)))
    return out


def _with_observations(gold: Dataset, keys: Iterable[SpanKey]) -> Dataset:
    per_sentence: dict[tuple[int, int], list[Span]] = {}
    for d, s, sp in keys:
        per_sentence.setdefault((d, s), []).append(sp)
    docs = []
    for d, doc in enumerate(gold.documents):
        sents = []
        for s, sent in enumerate(doc.sentences):
            obs = ObservedTags.from_spans(per_sentence.get((d, s), ()), len(sent), gold.tagset)
            sents.append(sent.with_observed(obs))
        docs.append(Document(doc.id, tuple(sents)))
    return gold.replace(docs)


def _mention(dataset: Dataset, key: SpanKey) -> str:
    d, s, sp = key
    return " ".join(dataset.documents[d].sentences[s].tokens[sp.start - 1: sp.end])


def _doc_positions(dataset: Dataset, keys: Iterable[SpanKey]) -> dict[int, list[float]]:
    """Normalized document offsets (span start token / document length) grouped by document."""
    offsets = []
    for doc in dataset.documents:
        acc, starts = 0, []
        for sent in doc.sentences:
            starts.append(acc)
            acc += len(sent)
        offsets.append((starts, acc))
    out: dict[int, list[float]] = {}
    for d, s, sp in keys:
        starts, total = offsets[d]
        out.setdefault(d, []).append((starts[s] + sp.start - 1) / total)
    return out


def sampler_stats(gold: Dataset, partial: Dataset) -> SamplerStats:
    """Entity-level recall/precision of ``partial``'s observed spans against gold.

    ``position_bias`` is the mean normalized document offset of observed
    spans; ``gold_position_bias`` is the same mean over all gold spans of the
    documents that received at least one observation.
    """
    g = set(gold_spans(gold))
    k = set(observed_spans(partial))
    hit = len(g & k)
    kept_pos = _doc_positions(gold, k)
    gold_pos = _doc_positions(gold, (key for key in g if key[0] in kept_pos))
    flat_kept = [x for xs in kept_pos.values() for x in xs]
    flat_gold = [x for xs in gold_pos.values() for x in xs]
    per_doc = [0] * len(gold.documents)
    for d, _, _ in k:
        per_doc[d] += 1
    return SamplerStats(
        recall=hit / len(g) if g else 0.0,
        precision=hit / len(k) if k else 1.0,
        n_gold=len(g), n_kept=len(k), n_correct=hit,
        per_doc_counts=per_doc,
        position_bias=float(np.mean(flat_kept)) if flat_kept else float("nan"),
        gold_position_bias=float(np.mean(flat_gold)) if flat_gold else float("nan"),
    )


def smallest_fp_count(kept: int, target_precision: float) -> int:
    """Least ``f`` with ``kept / (kept + f) <= target_precision``."""
    f = max(0, math.ceil(kept / target_precision - kept) - 1)
    while kept / (kept + f) > target_precision:
        f += 1
    return f


def sample_nns(gold: Dataset, config: NnsConfig) -> tuple[Dataset, SamplerStats]:
    """Non-native-speaker simulation.

    Draw order: one ``permutation`` over mention groups (sorted by mention
    string), then for each false positive a rejection loop of
    ``integers(1, fp_span_max_len + 1)`` (length), ``integers(0, #windows)``
    (window among all length-L windows inside sentences) and, once a window
    free of kept and earlier false-positive spans is found,
    ``integers(0, #classes)`` (class).
    """
    rng = np.random.default_rng(config.rng_seed)
    spans = gold_spans(gold)
    if not spans:
        raise SamplerError("gold corpus has no entity spans")
    groups: dict[str, list[SpanKey]] = {}
    for key in spans:
        groups.setdefault(_mention(gold, key), []).append(key)
    names = sorted(groups)
    total = len(spans)
    kept = set(spans)
    removed_sizes = []
    for gi in rng.permutation(len(names)):
        if len(kept) / total <= config.target_recall:
            break
        members = groups[names[gi]]
        kept.difference_update(members)
        removed_sizes.append(len(members))

    sentences = [(d, s, len(sent)) for d, doc in enumerate(gold.documents)
                 for s, sent in enumerate(doc.sentences)]
    occupied = {(d, s): np.zeros(n + 2, bool) for d, s, n in sentences}
    for d, s, sp in kept:
        occupied[(d, s)][sp.start: sp.end + 1] = True
    # windows of length L per sentence, for the uniform index draw
    window_counts = {L: np.array([max(0, n - L + 1) for _, _, n in sentences])
                     for L in range(1, config.fp_span_max_len + 1)}
    cumulative = {L: np.cumsum(c) for L, c in window_counts.items()}
    gold_set = set(spans)
    classes = gold.tagset.classes
    false_pos: list[SpanKey] = []
    correct = len(kept)

    def precision():
        return correct / (len(kept) + len(false_pos))

    free_tokens = sum(int((~occ[1:-1]).sum()) for occ in occupied.values())
    while precision() > config.target_precision:
        if free_tokens == 0:
            raise SamplerError(
                f"no free tokens left for false positives; precision stalls at {precision():.4f}")
        for _ in range(1_000_000):
            length = int(rng.integers(1, config.fp_span_max_len + 1))
            n_windows = int(cumulative[length][-1])
            if n_windows == 0:
                continue
            w = int(rng.integers(0, n_windows))
            si = int(np.searchsorted(cumulative[length], w, side="right"))
            start = w - (int(cumulative[length][si - 1]) if si else 0) + 1
            d, s, _ = sentences[si]
            occ = occupied[(d, s)]
            if not occ[start: start + length].any():
                break
        else:
            raise SamplerError("could not place a false-positive span; corpus too dense")
        label = classes[int(rng.integers(0, len(classes)))]
        key = (d, s, Span(start, start + length - 1, label))
        occ[start: start + length] = True
        free_tokens -= length
        false_pos.append(key)
        if key in gold_set:
            correct += 1

    partial = _with_observations(gold, list(kept) + false_pos)
    stats = sampler_stats(gold, partial)
    stats.extra = {
        "scheme": "nns",
        "removed_groups": len(removed_sizes),
        "largest_removed_group": max(removed_sizes, default=0),
        "recall_granularity": max(removed_sizes, default=0) / total,
        "false_positives": len(false_pos),
        "fp_class_distribution": "uniform",
        "fp_adjacent_to_spans": "allowed",
    }
    return partial, stats


def sample_ee(gold: Dataset, config: EeConfig) -> tuple[Dataset, SamplerStats]:
    """Exploratory-expert simulation.

    Draw order: one ``permutation`` over documents, then one ``random()``
    per gold span visited, in textual order, kept iff ``< keep_prob``.
    """
    rng = np.random.default_rng(config.rng_seed)
    spans = gold_spans(gold)
    by_doc: dict[int, list[SpanKey]] = {}
    for key in spans:
        by_doc.setdefault(key[0], []).append(key)
    kept: list[SpanKey] = []
    visited: list[int] = []
    for d in rng.permutation(len(gold.documents)):
        if len(kept) >= config.total_budget:
            break
        d = int(d)
        visited.append(d)
        in_doc = 0
        for key in by_doc.get(d, ()):
            if rng.random() < config.keep_prob:
                kept.append(key)
                in_doc += 1
                if len(kept) >= config.total_budget:
                    break
                if config.per_doc_cap is not None and in_doc >= config.per_doc_cap:
                    break
    partial = _with_observations(gold, kept)
    stats = sampler_stats(gold, partial)
    seen = set(visited)
    visited_gold = [key for key in spans if key[0] in seen]
    pos = _doc_positions(gold, visited_gold)
    flat = [x for xs in pos.values() for x in xs]
    stats.extra = {
        "scheme": "ee",
        "shortfall": len(kept) < config.total_budget,
        "documents_visited": len(visited),
        "visited_gold_position_bias": float(np.mean(flat)) if flat else float("nan"),
    }
    return partial, stats
