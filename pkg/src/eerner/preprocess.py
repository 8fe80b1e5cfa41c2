"""Dataset reductions for sparsely annotated corpora, and the Raw-baseline view."""

from __future__ import annotations

import enum
import logging

import numpy as np

from .corpus import AnnotatedSentence, Dataset, Document, ObservedTags
from .lattice import TransitionMask

log = logging.getLogger(__name__)


class Variant(str, enum.Enum):
    ALL = "all"
    SHORT = "short"
    SHORTEST = "shortest"


def apply_variant(dataset: Dataset, variant: Variant | str) -> Dataset:
    """``all`` keeps everything, ``short`` drops unannotated documents and
    ``shortest`` additionally drops the sentences after each document's last
    annotated sentence."""
    variant = Variant(variant)
    if variant is Variant.ALL:
        return dataset
    docs = []
    for doc in dataset.documents:
        annotated = [i for i, s in enumerate(doc.sentences) if len(s.observed)]
        if not annotated:
            continue
        if variant is Variant.SHORTEST:
            doc = Document(doc.id, doc.sentences[: annotated[-1] + 1])
        docs.append(doc)
    if not docs:
        log.warning("preprocessing variant %s removed every document", variant.value)
    return dataset.replace(docs)


def fill_with_o(sentence: AnnotatedSentence, mask: TransitionMask, o_index: int = 0) -> ObservedTags:
    """Observe O at every latent position where that keeps the sentence satisfiable.

    Positions are visited left to right; each is clamped to O if some
    grammatical completion consistent with the observations and earlier
    clamps still exists. For complete-span observations this is exactly
    "every unobserved token is O".
    """
    n, k = len(sentence), mask.size
    allowed = np.ones((n, k), bool)
    obs = sentence.observed.as_dict()
    for pos, tag in obs.items():
        allowed[pos - 1] = False
        allowed[pos - 1, tag] = True
    # feasible[i, y]: a valid suffix exists from position i with tag y
    feasible = np.zeros((n, k), bool)
    feasible[-1] = allowed[-1] & mask.end
    for i in range(n - 2, -1, -1):
        feasible[i] = allowed[i] & (mask.allowed & feasible[i + 1][None, :]).any(axis=1)
    reach = mask.start.copy()
    items = dict(obs)
    for i in range(n):
        options = reach & feasible[i]
        if (i + 1) not in obs and options[o_index]:
            options = np.zeros(k, bool)
            options[o_index] = True
            items[i + 1] = o_index
        reach = (mask.allowed & options[:, None]).any(axis=0)
    return ObservedTags.from_mapping(items)


def raw_view(dataset: Dataset) -> Dataset:
    """Treat unannotated tokens as observed O (the naive supervised baseline)."""
    mask = TransitionMask.biluo(dataset.tagset)
    o = dataset.tagset.o_index
    docs = [Document(doc.id, tuple(s.with_observed(fill_with_o(s, mask, o)) for s in doc.sentences))
            for doc in dataset.documents]
    return dataset.replace(docs)
