"""Named-entity tagging from partial annotations with an expected entity ratio loss."""

__version__ = "0.1.0"

from .corpus import (AnnotatedSentence, Dataset, Document, ObservedTags, Span, TagSet,
                     entity_token_ratio, spans_to_tags, tags_to_spans)
from .lattice import LatticeBatch, PotentialLattice, TransitionMask
from .objectives import EerConfig, combined_loss, eer_loss, marginal_tag_loss
from .scorer import ScorerConfig, Tagger, load_tagger, save_tagger
from .trainer import TrainConfig, train

__all__ = [
    "AnnotatedSentence", "Dataset", "Document", "ObservedTags", "Span", "TagSet",
    "entity_token_ratio", "spans_to_tags", "tags_to_spans",
    "LatticeBatch", "PotentialLattice", "TransitionMask",
    "EerConfig", "combined_loss", "eer_loss", "marginal_tag_loss",
    "ScorerConfig", "Tagger", "load_tagger", "save_tagger",
    "TrainConfig", "train",
]
