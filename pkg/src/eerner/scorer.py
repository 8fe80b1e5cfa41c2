"""Window-MLP emission scorer producing CRF potentials.

Each position is encoded by concatenating the embeddings of the tokens in
``[i - window, i + window]`` (a boundary embedding fills positions outside
the sentence), passing them through one ``tanh`` hidden layer and a linear
output layer with one row per tag. Transition scores are a free ``K x K``
matrix whose forbidden entries are pinned at zero and ignored by the
lattice.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import TagSet
from .lattice import LatticeBatch, LatticeGradients, PotentialLattice, TransitionMask

BOUNDARY = "<bnd>"
UNK = "<unk>"
CHECKPOINT_VERSION = 1
PARAM_NAMES = ("embed", "w_hidden", "b_hidden", "w_out", "b_out", "transition")


@dataclass(frozen=True)
class ScorerConfig:
    embed_dim: int = 32
    window: int = 1
    hidden_dim: int = 64
    init_scale: float = 1.0
    min_count: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if self.embed_dim < 1 or self.hidden_dim < 1 or self.window < 0:
            raise ValueError("embed_dim and hidden_dim must be >= 1 and window >= 0")


@dataclass(frozen=True)
class Vocab:
    words: tuple[str, ...]

    def __post_init__(self):
        if self.words[:2] != (BOUNDARY, UNK):
            raise ValueError("vocabulary must start with the boundary and unknown entries")
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]], min_count: int = 1) -> "Vocab":
        counts = Counter(tok for sent in sentences for tok in sent)
        kept = sorted(w for w, c in counts.items() if c >= min_count and w not in (BOUNDARY, UNK))
        return cls((BOUNDARY, UNK, *kept))

    @property
    def unk_index(self) -> int:
        return 1

    def __len__(self) -> int:
        return len(self.words)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self._index.get(t, 1) for t in tokens], dtype=np.int64)


def init_params(config: ScorerConfig, vocab_size: int, n_tags: int) -> dict[str, np.ndarray]:
    """Seeded uniform weights scaled by ``init_scale / sqrt(fan_in)``; zero biases and transitions."""
    rng = np.random.default_rng(config.rng_seed)
    d, h, w = config.embed_dim, config.hidden_dim, config.window
    fan_in = (2 * w + 1) * d

    def uniform(shape, fan):
        bound = config.init_scale / np.sqrt(fan)
        return rng.uniform(-bound, bound, size=shape)

    return {
        "embed": uniform((vocab_size, d), d),
        "w_hidden": uniform((fan_in, h), fan_in),
        "b_hidden": np.zeros(h),
        "w_out": uniform((h, n_tags), h),
        "b_out": np.zeros(n_tags),
        "transition": np.zeros((n_tags, n_tags)),
    }


@dataclass
class _Cache:
    windows: np.ndarray
    inputs: np.ndarray
    hidden: np.ndarray
    lengths: np.ndarray


class Tagger:
    """Scorer parameters together with the vocabulary and tag set they index."""

    def __init__(self, config: ScorerConfig, vocab: Vocab, tagset: TagSet,
                 params: dict[str, np.ndarray] | None = None):
        self.config = config
        self.vocab = vocab
        self.tagset = tagset
        self.mask = TransitionMask.biluo(tagset)
        self.params = init_params(config, len(vocab), len(tagset)) if params is None else params

    @classmethod
    def for_corpus(cls, config: ScorerConfig, sentences: Iterable[Sequence[str]], tagset: TagSet) -> "Tagger":
        return cls(config, Vocab.build(sentences, config.min_count), tagset)

    def _windows(self, ids: Sequence[np.ndarray]):
        w = self.config.window
        lengths = np.array([len(x) for x in ids])
        padded = np.zeros((len(ids), lengths.max() + 2 * w), dtype=np.int64)
        for b, x in enumerate(ids):
            padded[b, w: w + len(x)] = x
        offsets = np.arange(lengths.max())[:, None] + np.arange(2 * w + 1)[None, :]
        return padded[:, offsets], lengths

    def score_batch(self, ids: Sequence[np.ndarray]) -> tuple[LatticeBatch, _Cache]:
        p = self.params
        windows, lengths = self._windows(ids)
        bsz, n, _ = windows.shape
        inputs = p["embed"][windows].reshape(bsz, n, -1)
        hidden = np.tanh(inputs @ p["w_hidden"] + p["b_hidden"])
        unary = hidden @ p["w_out"] + p["b_out"]
        batch = LatticeBatch(unary, lengths, p["transition"], self.mask, self.tagset.o_index)
        return batch, _Cache(windows, inputs, hidden, lengths)

    def batch_gradients(self, cache: _Cache, grads: LatticeGradients) -> dict[str, np.ndarray]:
        p = self.params
        d_unary = grads.d_unary
        if d_unary.shape != cache.hidden.shape[:2] + (len(self.tagset),):
            raise ValueError(f"adjoint shape {d_unary.shape} does not match the batch")
        if grads.d_transition.shape != p["transition"].shape:
            raise ValueError(f"transition adjoint shape {grads.d_transition.shape} is not K x K")
        valid = np.arange(d_unary.shape[1])[None, :] < cache.lengths[:, None]
        d_unary = d_unary * valid[:, :, None]
        out = {
            "w_out": np.einsum("bnh,bnk->hk", cache.hidden, d_unary),
            "b_out": d_unary.sum(axis=(0, 1)),
            "transition": np.where(self.mask.allowed, grads.d_transition, 0.0),
        }
        d_pre = (d_unary @ p["w_out"].T) * (1.0 - cache.hidden ** 2)
        out["w_hidden"] = np.einsum("bnf,bnh->fh", cache.inputs, d_pre)
        out["b_hidden"] = d_pre.sum(axis=(0, 1))
        d_inputs = (d_pre @ p["w_hidden"].T).reshape(cache.windows.shape + (self.config.embed_dim,))
        d_embed = np.zeros_like(p["embed"])
        np.add.at(d_embed, cache.windows, d_inputs)
        out["embed"] = d_embed
        return out

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return self.vocab.encode(tokens)

    def lattices(self, sentences: Sequence[Sequence[str]]) -> LatticeBatch:
        return self.score_batch([self.encode(s) for s in sentences])[0]

    def copy(self) -> "Tagger":
        return Tagger(self.config, self.vocab, self.tagset, {k: v.copy() for k, v in self.params.items()})


def score_sentence(tagger: Tagger, tokens: Sequence[str]) -> PotentialLattice:
    return tagger.lattices([tokens]).lattice(0)


def score_gradients(tagger: Tagger, tokens: Sequence[str], adjoints: LatticeGradients) -> dict[str, np.ndarray]:
    d_unary = np.asarray(adjoints.d_unary)
    if d_unary.ndim != 2 or d_unary.shape[0] != len(tokens):
        raise ValueError(f"unary adjoint shape {d_unary.shape} does not match {len(tokens)} tokens")
    _, cache = tagger.score_batch([tagger.encode(tokens)])
    return tagger.batch_gradients(cache, LatticeGradients(d_unary[None], adjoints.d_transition))


def save_tagger(tagger: Tagger, path: str | Path) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(tagger.config),
        "classes": list(tagger.tagset.classes),
        "vocab": list(tagger.vocab.words),
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **tagger.params)


def load_tagger(path: str | Path) -> Tagger:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        params = {name: data[name].copy() for name in PARAM_NAMES}
    return Tagger(ScorerConfig(**meta["config"]), Vocab(tuple(meta["vocab"])),
                  TagSet(tuple(meta["classes"])), params)
