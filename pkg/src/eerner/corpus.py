"""Tokens, BILUO tags, spans, partial observations and datasets.

Positions exposed by this module are 1-based; tag sequences are tuples of
integer indices into a :class:`TagSet`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

ROLES = ("B", "I", "L", "U")


class TagSequenceError(ValueError):
    """An ungrammatical BILUO tag sequence; ``position`` is 1-based."""

    def __init__(self, position: int, message: str):
        super().__init__(f"position {position}: {message}")
        self.position = position


class OverlappingSpansError(ValueError):
    def __init__(self, first: "Span", second: "Span"):
        super().__init__(f"overlapping spans {first} and {second}")
        self.pair = (first, second)


@dataclass(frozen=True)
class TagSet:
    """O followed by B/I/L/U for each class, in declared class order."""

    classes: tuple[str, ...]
    tags: tuple[str, ...] = field(init=False)
    o_index: int = field(init=False, default=0)
    _index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        classes = tuple(self.classes)
        if any(not c for c in classes):
            raise ValueError("entity class names must be non-empty")
        if len(set(classes)) != len(classes):
            raise ValueError(f"duplicate entity classes in {classes}")
        tags = ("O",) + tuple(f"{r}-{c}" for c in classes for r in ROLES)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(tags)})

    def __len__(self) -> int:
        return len(self.tags)

    def index(self, tag: str) -> int:
        try:
            return self._index[tag]
        except KeyError:
            raise KeyError(f"unknown tag {tag!r}") from None

    def name(self, index: int) -> str:
        return self.tags[index]

    def role(self, index: int) -> str:
        return "O" if index == self.o_index else ROLES[(index - 1) % 4]

    def entity_class(self, index: int) -> str | None:
        return None if index == self.o_index else self.classes[(index - 1) // 4]

    def tag_index(self, role: str, entity_class: str) -> int:
        return self._index[f"{role}-{entity_class}"]

    def allowed(self, prev: int | None, cur: int | None) -> bool:
        """BILUO grammar; ``None`` stands for the always-O sentence boundary."""
        prev_role = "O" if prev is None else self.role(prev)
        cur_role = "O" if cur is None else self.role(cur)
        if prev_role in ("B", "I"):
            return cur_role in ("I", "L") and self.entity_class(cur) == self.entity_class(prev)
        return cur_role in ("O", "B", "U")


@dataclass(frozen=True, order=True)
class Span:
    start: int
    end: int
    label: str

    def __post_init__(self):
        if self.start < 1 or self.end < self.start:
            raise ValueError(f"invalid span bounds ({self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start + 1

    def overlaps(self, other: "Span") -> bool:
        return self.start <= other.end and other.start <= self.end


def spans_to_tags(spans: Iterable[Span], n: int, tagset: TagSet) -> tuple[int, ...]:
    tags = [tagset.o_index] * n
    ordered = sorted(spans)
    for a, b in zip(ordered, ordered[1:]):
        if a.overlaps(b):
            raise OverlappingSpansError(a, b)
    for span in ordered:
        if span.end > n:
            raise ValueError(f"span {span} exceeds sentence length {n}")
        if span.start == span.end:
            tags[span.start - 1] = tagset.tag_index("U", span.label)
            continue
        tags[span.start - 1] = tagset.tag_index("B", span.label)
        for i in range(span.start, span.end - 1):
            tags[i] = tagset.tag_index("I", span.label)
        tags[span.end - 1] = tagset.tag_index("L", span.label)
    return tuple(tags)


def check_grammar(tags: Sequence[int], tagset: TagSet) -> None:
    prev = None
    for pos, tag in enumerate(tags, start=1):
        if not 0 <= tag < len(tagset):
            raise TagSequenceError(pos, f"tag index {tag} out of range")
        if not tagset.allowed(prev, tag):
            before = "sentence start" if prev is None else tagset.name(prev)
            raise TagSequenceError(pos, f"{tagset.name(tag)} cannot follow {before}")
        prev = tag
    if tags and not tagset.allowed(prev, None):
        raise TagSequenceError(len(tags), f"{tagset.name(prev)} cannot end a sentence")


def tags_to_spans(tags: Sequence[int], tagset: TagSet) -> frozenset[Span]:
    check_grammar(tags, tagset)
    spans = []
    start = None
    for pos, tag in enumerate(tags, start=1):
        role = tagset.role(tag)
        if role == "U":
            spans.append(Span(pos, pos, tagset.entity_class(tag)))
        elif role == "B":
            start = pos
        elif role == "L":
            spans.append(Span(start, pos, tagset.entity_class(tag)))
    return frozenset(spans)


@dataclass(frozen=True)
class ObservedTags:
    """Sparse (position, tag) observations; every other position is latent."""

    items: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        items = tuple(sorted((int(p), int(t)) for p, t in self.items))
        positions = [p for p, _ in items]
        if len(set(positions)) != len(positions):
            raise ValueError("at most one observation per position")
        if positions and positions[0] < 1:
            raise ValueError("observation positions are 1-based")
        object.__setattr__(self, "items", items)

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, int]) -> "ObservedTags":
        return cls(tuple(mapping.items()))

    @classmethod
    def from_tags(cls, tags: Sequence[int], tagset: TagSet, keep_o: bool = False) -> "ObservedTags":
        return cls(tuple((i, t) for i, t in enumerate(tags, start=1)
                         if keep_o or t != tagset.o_index))

    @classmethod
    def from_spans(cls, spans: Iterable[Span], n: int, tagset: TagSet) -> "ObservedTags":
        tags = spans_to_tags(spans, n, tagset)
        return cls.from_tags(tags, tagset)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.items)

    def as_dict(self) -> dict[int, int]:
        return dict(self.items)

    def spans(self, tagset: TagSet) -> frozenset[Span]:
        """Complete spans spelled out by contiguous observations.

        Fragments (e.g. an observed B without its L) are not spans and are
        skipped.
        """
        obs = self.as_dict()
        spans = []
        for pos, tag in self.items:
            role = tagset.role(tag)
            label = tagset.entity_class(tag)
            if role == "U":
                spans.append(Span(pos, pos, label))
            elif role == "B":
                end = pos + 1
                while obs.get(end) == tagset.tag_index("I", label):
                    end += 1
                if obs.get(end) == tagset.tag_index("L", label):
                    spans.append(Span(pos, end, label))
        return frozenset(spans)


@dataclass(frozen=True)
class AnnotatedSentence:
    tokens: tuple[str, ...]
    observed: ObservedTags = ObservedTags()
    gold: tuple[int, ...] | None = None

    def __post_init__(self):
        tokens = tuple(self.tokens)
        if not tokens:
            raise ValueError("a sentence needs at least one token")
        if any(not t for t in tokens):
            raise ValueError("tokens must be non-empty strings")
        object.__setattr__(self, "tokens", tokens)
        if self.gold is not None:
            gold = tuple(int(t) for t in self.gold)
            if len(gold) != len(tokens):
                raise ValueError(f"gold has {len(gold)} tags for {len(tokens)} tokens")
            object.__setattr__(self, "gold", gold)
        if self.observed.items and self.observed.items[-1][0] > len(tokens):
            raise ValueError("observation position beyond sentence end")

    def __len__(self) -> int:
        return len(self.tokens)

    def gold_spans(self, tagset: TagSet) -> frozenset[Span]:
        if self.gold is None:
            raise ValueError("sentence carries no gold tags")
        return tags_to_spans(self.gold, tagset)

    def with_observed(self, observed: ObservedTags) -> "AnnotatedSentence":
        return AnnotatedSentence(self.tokens, observed, self.gold)


@dataclass(frozen=True)
class Document:
    id: str
    sentences: tuple[AnnotatedSentence, ...]

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if not self.sentences:
            raise ValueError(f"document {self.id!r} has no sentences")

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    @property
    def n_observed(self) -> int:
        return sum(len(s.observed) for s in self.sentences)


@dataclass(frozen=True)
class Dataset:
    documents: tuple[Document, ...]
    tagset: TagSet

    def __post_init__(self):
        object.__setattr__(self, "documents", tuple(self.documents))
        k = len(self.tagset)
        for doc in self.documents:
            for sent in doc.sentences:
                if any(not 0 <= t < k for _, t in sent.observed):
                    raise ValueError(f"document {doc.id!r}: observed tag outside the tag set")
                if sent.gold is not None:
                    check_grammar(sent.gold, self.tagset)

    def sentences(self) -> list[AnnotatedSentence]:
        return [s for d in self.documents for s in d.sentences]

    @property
    def n_sentences(self) -> int:
        return sum(len(d.sentences) for d in self.documents)

    @property
    def n_tokens(self) -> int:
        return sum(d.n_tokens for d in self.documents)

    @property
    def has_gold(self) -> bool:
        return all(s.gold is not None for s in self.sentences())

    def replace(self, documents: Iterable[Document]) -> "Dataset":
        return Dataset(tuple(documents), self.tagset)


def entity_token_ratio(dataset: Dataset) -> float:
    """Fraction of gold tags that are not O."""
    total = entities = 0
    for sent in dataset.sentences():
        if sent.gold is None:
            raise ValueError("entity_token_ratio needs gold tags on every sentence")
        total += len(sent.gold)
        entities += sum(t != dataset.tagset.o_index for t in sent.gold)
    return entities / total if total else 0.0
