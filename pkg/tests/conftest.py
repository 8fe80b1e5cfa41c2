import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from eerner.corpus import AnnotatedSentence, Dataset, Document, ObservedTags, Span, TagSet, spans_to_tags  # noqa: E402


@pytest.fixture
def tagset():
    return TagSet(("PER", "LOC"))


@pytest.fixture
def tiny_corpus(tagset):
    """Two documents, five sentences, with gold tags and partial observations."""
    def sent(tokens, spans, observed_spans):
        n = len(tokens)
        gold = spans_to_tags(spans, n, tagset)
        return AnnotatedSentence(tuple(tokens), ObservedTags.from_spans(observed_spans, n, tagset), gold)

    d1 = Document("d1", (
        sent("Ann lives in Paris .".split(), [Span(1, 1, "PER"), Span(4, 4, "LOC")], [Span(1, 1, "PER")]),
        sent("She left New York today".split(), [Span(3, 4, "LOC")], [Span(3, 4, "LOC")]),
        sent("nothing here".split(), [], []),
    ))
    d2 = Document("d2", (
        sent("Bob Smith met Ann".split(), [Span(1, 2, "PER"), Span(4, 4, "PER")], []),
        sent("in Rome".split(), [Span(2, 2, "LOC")], []),
    ))
    return Dataset((d1, d2), tagset)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
