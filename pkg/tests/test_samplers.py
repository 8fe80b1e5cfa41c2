from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from eerner.corpus import AnnotatedSentence, Dataset, Document, ObservedTags, Span, TagSet, spans_to_tags
from eerner.samplers import (EeConfig, NnsConfig, SamplerError, gold_spans, observed_spans, sample_ee, sample_nns,
                             sampler_stats, smallest_fp_count)
from eerner.synthetic import SyntheticTaskConfig, generate_synthetic

TS = TagSet(("A", "B"))


def corpus_of_unique_triples(n_spans: int, per_sentence: int = 2, doc_size: int = 5) -> Dataset:
    """Gold spans of length 3 with distinct mention strings, separated by O tokens."""
    sents, k = [], 0
    while k < n_spans:
        tokens, spans = [], []
        for _ in range(min(per_sentence, n_spans - k)):
            start = len(tokens) + 2
            tokens += ["o", f"x{k}", f"y{k}", f"z{k}"]
            spans.append(Span(start, start + 2, "AB"[k % 2]))
            k += 1
        tokens += ["o", "o"]
        sents.append(AnnotatedSentence(tuple(tokens), ObservedTags(), spans_to_tags(spans, len(tokens), TS)))
    docs = [Document(f"d{i}", tuple(sents[i: i + doc_size])) for i in range(0, len(sents), doc_size)]
    return Dataset(tuple(docs), TS)


def test_smallest_fp_count():
    assert smallest_fp_count(100, 0.9) == 12
    assert smallest_fp_count(9, 0.9) == 1
    assert smallest_fp_count(10, 1.0) == 0


def test_nns_example_counts():
    gold = corpus_of_unique_triples(200)
    partial, stats = sample_nns(gold, NnsConfig(0.5, 0.9, 2, rng_seed=1))
    assert stats.n_correct == 100
    assert stats.recall == 0.5
    assert stats.extra["false_positives"] == 12
    assert stats.n_kept == 112
    assert stats.precision == pytest.approx(100 / 112)


def test_nns_noop_configuration_returns_gold():
    gold = corpus_of_unique_triples(20)
    partial, stats = sample_nns(gold, NnsConfig(1.0, 1.0))
    assert set(observed_spans(partial)) == set(gold_spans(gold))
    assert stats.recall == stats.precision == 1.0


@pytest.fixture(scope="module")
def synth_gold():
    return generate_synthetic(SyntheticTaskConfig(rng_seed=3), 800)[0]


def test_nns_removal_is_group_atomic_and_fps_do_not_overlap(synth_gold):
    partial, stats = sample_nns(synth_gold, NnsConfig(rng_seed=4))
    gold = set(gold_spans(synth_gold))
    kept = set(observed_spans(partial))

    def mention(key):
        d, s, sp = key
        return synth_gold.documents[d].sentences[s].tokens[sp.start - 1: sp.end]
    kept_gold = kept & gold
    kept_names = {mention(k) for k in kept_gold}
    for key in gold:
        assert (key in kept_gold) == (mention(key) in kept_names)
    by_sentence = {}
    for d, s, sp in kept:
        by_sentence.setdefault((d, s), []).append(sp)
    for spans in by_sentence.values():
        spans.sort()
        assert all(not a.overlaps(b) for a, b in zip(spans, spans[1:]))
    assert 0.5 - stats.extra["recall_granularity"] <= stats.recall <= 0.5


def test_nns_is_deterministic(synth_gold):
    a, _ = sample_nns(synth_gold, NnsConfig(rng_seed=9))
    b, _ = sample_nns(synth_gold, NnsConfig(rng_seed=9))
    c, _ = sample_nns(synth_gold, NnsConfig(rng_seed=10))
    assert observed_spans(a) == observed_spans(b)
    assert observed_spans(a) != observed_spans(c)


def test_nns_reports_unreachable_precision():
    gold = Dataset((Document("d", (AnnotatedSentence(("a",), ObservedTags(), (TS.index("U-A"),)),)),), TS)
    with pytest.raises(SamplerError):
        sample_nns(gold, NnsConfig(1.0, 0.5))


def test_ee_hand_trace_on_three_documents():
    gold = corpus_of_unique_triples(9, per_sentence=1, doc_size=3)  # 3 documents x 3 spans
    cfg = EeConfig(total_budget=4, per_doc_cap=2, keep_prob=0.5, rng_seed=123)
    partial, stats = sample_ee(gold, cfg)
    # replay the documented draw order by hand
    rng = np.random.default_rng(123)
    expected = []
    for d in rng.permutation(3):
        if len(expected) >= 4:
            break
        in_doc = 0
        for s in range(3):
            if rng.random() < 0.5:
                expected.append((int(d), s))
                in_doc += 1
                if len(expected) >= 4 or in_doc >= 2:
                    break
    assert sorted((d, s) for d, s, _ in observed_spans(partial)) == sorted(expected)


def test_ee_budget_cap_and_precision(synth_gold):
    partial, stats = sample_ee(synth_gold, EeConfig(total_budget=300, rng_seed=2))
    assert stats.n_kept == 300 and not stats.extra["shortfall"]
    assert max(stats.per_doc_counts) <= 10
    assert stats.precision == 1.0


def test_ee_shortfall_keeps_everything_it_can():
    gold = corpus_of_unique_triples(12)
    partial, stats = sample_ee(gold, EeConfig(total_budget=100, per_doc_cap=None, keep_prob=1.0))
    assert stats.extra["shortfall"]
    assert set(observed_spans(partial)) == set(gold_spans(gold))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.floats(0.1, 1.0))
def test_ee_properties(seed, budget, keep):
    gold = corpus_of_unique_triples(30)
    partial, stats = sample_ee(gold, EeConfig(budget, 3, keep, seed))
    kept = observed_spans(partial)
    assert set(kept) <= set(gold_spans(gold))
    assert len(kept) <= budget
    assert max(Counter(d for d, _, _ in kept).values(), default=0) <= 3


def test_stats_identity():
    gold = corpus_of_unique_triples(10)
    full = gold.replace(Document(d.id, tuple(s.with_observed(ObservedTags.from_tags(s.gold, TS)) for s in d.sentences))
                        for d in gold.documents)
    stats = sampler_stats(gold, full)
    assert stats.recall == stats.precision == 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        NnsConfig(target_recall=0.0)
    with pytest.raises(ValueError):
        EeConfig(per_doc_cap=0)
    with pytest.raises(ValueError):
        EeConfig(keep_prob=1.5)
