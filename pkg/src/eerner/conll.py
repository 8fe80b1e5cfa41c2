"""Column-formatted corpora (CoNLL style) with document boundaries.

One token per line; a blank line ends a sentence; a line whose first field
is the document marker (``-DOCSTART-``) starts a new document. An optional
observation column holds the partial annotation, with ``-`` marking a
latent (unobserved) position; ``O`` there is an *observed* O.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import AnnotatedSentence, Dataset, Document, ObservedTags, TagSet, tags_to_spans

LATENT = "-"
_ALIASES = {"E": "L", "S": "U"}  # BIOES spellings of BILUO roles


class ConllFormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


@dataclass(frozen=True)
class ColumnFormatConfig:
    token_column: int = 0
    tag_column: int | None = -1
    observation_column: int | None = None
    separator: str | None = None  # None splits on whitespace runs; "\t" for tabs
    docstart_marker: str = "-DOCSTART-"
    scheme: str = "auto"  # "auto" | "bio" | "biluo"
    sentence_documents: bool = False  # without markers: one document per sentence

    def __post_init__(self):
        if self.token_column < 0:
            raise ValueError("token_column must be >= 0")
        if self.separator not in (None, "\t"):
            raise ValueError("separator must be None (whitespace) or a tab")
        if self.scheme not in ("auto", "bio", "biluo"):
            raise ValueError(f"unknown tag scheme {self.scheme!r}")
        cols = [c for c in (self.tag_column, self.observation_column) if c is not None]
        if any(c == self.token_column for c in cols):
            raise ValueError("token and tag columns must differ")

    def width(self) -> int:
        """Minimum number of fields a token line must carry."""
        cols = [self.token_column] + [c for c in (self.tag_column, self.observation_column)
                                      if c is not None]
        return max(max(c for c in cols if c >= 0) + 1, len(cols))


def _split_tag(tag: str) -> tuple[str, str | None]:
    if tag == "O":
        return "O", None
    role, sep, label = tag.partition("-")
    if not sep or not label:
        raise ValueError(f"malformed tag {tag!r}")
    return _ALIASES.get(role, role), label


def bio_to_biluo(tags: Sequence[str]) -> list[str]:
    """Convert BIO (or IOB1) tag strings to BILUO.

    An ``I-c`` that does not continue a ``c`` span opens a new span.
    """
    spans = []
    start = label = None
    for i, tag in enumerate(list(tags) + ["O"]):
        role, cls = _split_tag(tag)
        continues = role == "I" and label == cls and start is not None
        if start is not None and not continues:
            spans.append((start, i - 1, label))
            start = label = None
        if role in ("B", "I") and not continues:
            start, label = i, cls
        elif role not in ("O", "B", "I"):
            raise ValueError(f"{tag!r} is not a BIO tag")
    out = ["O"] * len(tags)
    for s, e, c in spans:
        if s == e:
            out[s] = f"U-{c}"
        else:
            out[s] = f"B-{c}"
            out[s + 1: e] = [f"I-{c}"] * (e - s - 1)
            out[e] = f"L-{c}"
    return out


def _is_biluo(tags: Sequence[str]) -> bool:
    return any(t[:2] in ("L-", "U-", "E-", "S-") for t in tags)


def _parse_line(line: str, config: ColumnFormatConfig) -> list[str]:
    return line.split("\t") if config.separator == "\t" else line.split()


def _read_blocks(path, config: ColumnFormatConfig):
    """Yield documents as lists of sentences of (line number, fields)."""
    docs: list[tuple[str | None, list[list[tuple[int, list[str]]]]]] = []
    cur_doc: list[list[tuple[int, list[str]]]] = []
    cur_sent: list[tuple[int, list[str]]] = []
    doc_id = None
    saw_marker = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                if cur_sent:
                    cur_doc.append(cur_sent)
                    cur_sent = []
                continue
            fields = _parse_line(line, config)
            if fields[0] == config.docstart_marker:
                if cur_sent:
                    cur_doc.append(cur_sent)
                    cur_sent = []
                if cur_doc:
                    docs.append((doc_id, cur_doc))
                cur_doc = []
                doc_id = fields[1] if len(fields) == 2 else None
                saw_marker = True
                continue
            if len(fields) < config.width():
                raise ConllFormatError(path, lineno, f"expected at least {config.width()} fields, got {len(fields)}")
            cur_sent.append((lineno, fields))
    if cur_sent:
        cur_doc.append(cur_sent)
    if cur_doc:
        docs.append((doc_id, cur_doc))
    if not saw_marker and config.sentence_documents:
        docs = [(None, [s]) for _, d in docs for s in d]
    return docs


def scan_classes(path, config: ColumnFormatConfig = ColumnFormatConfig()) -> tuple[str, ...]:
    """Entity classes mentioned in the tag and observation columns, sorted."""
    found = set()
    for _, sents in _read_blocks(path, config):
        for sent in sents:
            for lineno, fields in sent:
                for col in (config.tag_column, config.observation_column):
                    if col is None or fields[col] in ("O", LATENT):
                        continue
                    try:
                        found.add(_split_tag(fields[col])[1])
                    except ValueError as err:
                        raise ConllFormatError(path, lineno, str(err)) from None
    return tuple(sorted(found))


def read_corpus(path, config: ColumnFormatConfig = ColumnFormatConfig(), tagset: TagSet | None = None) -> Dataset:
    """Read a column corpus.

    Gold tags come from ``tag_column`` (BIO input is converted to BILUO per
    sentence). Observations come from ``observation_column`` when set,
    otherwise every non-O gold tag is observed.
    """
    if tagset is None:
        tagset = TagSet(scan_classes(path, config))
    blocks = _read_blocks(path, config)
    scheme = config.scheme
    if scheme == "auto" and config.tag_column is not None:
        scheme = "biluo" if any(_is_biluo([f[config.tag_column] for _, f in s])
                                for _, d in blocks for s in d) else "bio"
    documents = []
    for k, (doc_id, sents) in enumerate(blocks):
        out = []
        for sent in sents:
            tokens = tuple(f[config.token_column] for _, f in sent)
            gold = None
            if config.tag_column is not None:
                strings = [f[config.tag_column] for _, f in sent]
                try:
                    if scheme == "bio":
                        strings = bio_to_biluo(strings)
                    gold = _to_indices(strings, tagset)
                except (KeyError, ValueError) as err:
                    lineno = sent[_first_bad(strings, tagset)][0]
                    raise ConllFormatError(path, lineno, str(err)) from None
                try:
                    tags_to_spans(gold, tagset)
                except ValueError as err:
                    lineno = sent[getattr(err, "position", 1) - 1][0]
                    raise ConllFormatError(path, lineno, str(err)) from None
            if config.observation_column is not None:
                items = []
                for pos, (lineno, f) in enumerate(sent, start=1):
                    obs = f[config.observation_column]
                    if obs == LATENT:
                        continue
                    try:
                        items.append((pos, _to_indices([obs], tagset)[0]))
                    except (KeyError, ValueError) as err:
                        raise ConllFormatError(path, lineno, str(err)) from None
                observed = ObservedTags(tuple(items))
            elif gold is not None:
                observed = ObservedTags.from_tags(gold, tagset)
            else:
                observed = ObservedTags()
            out.append(AnnotatedSentence(tokens, observed, gold))
        documents.append(Document(doc_id if doc_id is not None else f"doc{k}", tuple(out)))
    return Dataset(tuple(documents), tagset)


def _to_indices(strings: Sequence[str], tagset: TagSet) -> tuple[int, ...]:
    out = []
    for s in strings:
        role, cls = _split_tag(s)
        out.append(tagset.o_index if role == "O" else tagset.tag_index(role, cls))
    return tuple(out)


def _first_bad(strings: Sequence[str], tagset: TagSet) -> int:
    for i, s in enumerate(strings):
        try:
            _to_indices([s], tagset)
        except (KeyError, ValueError):
            return i
    return 0


def write_corpus(dataset: Dataset, path, config: ColumnFormatConfig = ColumnFormatConfig()) -> None:
    """Write ``dataset`` so that :func:`read_corpus` with ``config`` restores it.

    Tags are always written in BILUO. Unobserved positions in the
    observation column are written as ``-``; a ``tag_column`` of ``None``
    omits gold tags.
    """
    sep = "\t" if config.separator == "\t" else " "
    tag_col = config.tag_column
    cols = [config.token_column] + [c for c in (tag_col, config.observation_column) if c is not None]
    if any(c < 0 for c in cols[1:]):
        # negative indices address the last columns; lay them out after the token
        width = len(cols)
        cols = [c % width if c < 0 else c for c in cols]
    width = max(cols) + 1
    names = dataset.tagset.tags
    lines: list[str] = []
    for doc in dataset.documents:
        lines.append(f"{config.docstart_marker}{sep}{doc.id}")
        lines.append("")
        for sent in doc.sentences:
            if tag_col is not None and sent.gold is None:
                raise ValueError(f"document {doc.id!r}: sentence without gold tags")
            obs = sent.observed.as_dict()
            for i, tok in enumerate(sent.tokens):
                row = ["_"] * width
                row[cols[0]] = tok
                k = 1
                if tag_col is not None:
                    row[cols[k]] = names[sent.gold[i]]
                    k += 1
                if config.observation_column is not None:
                    row[cols[k]] = names[obs[i + 1]] if i + 1 in obs else LATENT
                lines.append(sep.join(row))
            lines.append("")
    try:
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    except OSError as err:
        raise OSError(f"cannot write corpus to {path}: {err}") from err
