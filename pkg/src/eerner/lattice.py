"""Exact inference for linear-chain CRFs over BILUO tags.

All recursions run in log space over padded batches ``(B, N, K)``; the
single-lattice functions are thin wrappers around the batched kernels.
Forbidden transitions and clamped tags are scored with ``NEG`` rather than
``-inf`` so that sums and differences of masked scores stay finite.

The sentence boundary is not an explicit state: ``start``/``end`` vectors
encode that the virtual tokens before and after the sentence are O, with
transition score 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import ObservedTags, TagSet

NEG = -1e30


class NoValidPathError(ValueError):
    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


@dataclass(frozen=True)
class TransitionMask:
    allowed: np.ndarray
    start: np.ndarray
    end: np.ndarray

    @classmethod
    def biluo(cls, tagset: TagSet) -> "TransitionMask":
        k = len(tagset)
        allowed = np.array([[tagset.allowed(a, b) for b in range(k)] for a in range(k)])
        start = np.array([tagset.allowed(None, b) for b in range(k)])
        end = np.array([tagset.allowed(a, None) for a in range(k)])
        return cls(allowed, start, end)

    @classmethod
    def unmasked(cls, k: int) -> "TransitionMask":
        return cls(np.ones((k, k), bool), np.ones(k, bool), np.ones(k, bool))

    @property
    def size(self) -> int:
        return len(self.start)

    def log_start(self) -> np.ndarray:
        return np.where(self.start, 0.0, NEG)

    def log_end(self) -> np.ndarray:
        return np.where(self.end, 0.0, NEG)


@dataclass(frozen=True)
class PotentialLattice:
    """Unary scores ``(n, K)`` and transition scores ``(K, K)`` for one sentence."""

    unary: np.ndarray
    transition: np.ndarray
    mask: TransitionMask
    o_index: int = 0

    def __len__(self) -> int:
        return self.unary.shape[0]

    def log_transition(self) -> np.ndarray:
        return np.where(self.mask.allowed, self.transition, NEG)


@dataclass(frozen=True)
class LatticeGradients:
    d_unary: np.ndarray
    d_transition: np.ndarray


@dataclass(frozen=True)
class LatticeBatch:
    """Right-padded stack of lattices sharing transitions and mask."""

    unary: np.ndarray
    lengths: np.ndarray
    transition: np.ndarray
    mask: TransitionMask
    o_index: int = 0

    @classmethod
    def stack(cls, lattices: Sequence[PotentialLattice]) -> "LatticeBatch":
        first = lattices[0]
        k = first.mask.size
        lengths = np.array([len(l) for l in lattices])
        unary = np.zeros((len(lattices), lengths.max(), k))
        for b, lat in enumerate(lattices):
            unary[b, : len(lat)] = lat.unary
        return cls(unary, lengths, first.transition, first.mask, first.o_index)

    def __len__(self) -> int:
        return self.unary.shape[0]

    def lattice(self, b: int) -> PotentialLattice:
        return PotentialLattice(self.unary[b, : self.lengths[b]], self.transition, self.mask, self.o_index)

    def log_transition(self) -> np.ndarray:
        return np.where(self.mask.allowed, self.transition, NEG)

    def position_mask(self) -> np.ndarray:
        return np.arange(self.unary.shape[1])[None, :] < self.lengths[:, None]

    def with_unary(self, unary: np.ndarray) -> "LatticeBatch":
        return LatticeBatch(unary, self.lengths, self.transition, self.mask, self.o_index)


def _as_batch(lattices) -> LatticeBatch:
    if isinstance(lattices, LatticeBatch):
        return lattices
    if isinstance(lattices, PotentialLattice):
        return LatticeBatch.stack([lattices])
    return LatticeBatch.stack(list(lattices))


def _lse(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(np.exp(a - m).sum(axis=axis))


def _softmax(a: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(a - a.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def observation_mask(batch: LatticeBatch, observations: Sequence[ObservedTags]) -> np.ndarray:
    """Boolean ``(B, N, K)``: tags still permitted once observations are clamped."""
    allowed = np.ones(batch.unary.shape, bool)
    for b, obs in enumerate(observations):
        for pos, tag in obs:
            allowed[b, pos - 1] = False
            allowed[b, pos - 1, tag] = True
    return allowed


# --- batched kernels -------------------------------------------------------

def forward(batch: LatticeBatch, unary: np.ndarray | None = None):
    """Forward log-scores ``alpha (B, N, K)`` and ``log Z (B,)``.

    Past a sentence's end ``alpha`` is carried unchanged, so ``alpha[:, -1]``
    always holds the last real position.
    """
    unary = batch.unary if unary is None else unary
    log_t = batch.log_transition()
    bsz, n, k = unary.shape
    alpha = np.empty((bsz, n, k))
    alpha[:, 0] = batch.mask.log_start() + unary[:, 0]
    for i in range(1, n):
        step = _lse(alpha[:, i - 1, :, None] + log_t[None], axis=1) + unary[:, i]
        alpha[:, i] = np.where((i < batch.lengths)[:, None], step, alpha[:, i - 1])
    log_z = _lse(alpha[:, -1] + batch.mask.log_end(), axis=1)
    return alpha, log_z


def backward(batch: LatticeBatch, unary: np.ndarray | None = None) -> np.ndarray:
    unary = batch.unary if unary is None else unary
    log_t = batch.log_transition()
    log_end = batch.mask.log_end()
    bsz, n, k = unary.shape
    beta = np.empty((bsz, n, k))
    beta[:, -1] = log_end
    for i in range(n - 2, -1, -1):
        nxt = unary[:, i + 1] + beta[:, i + 1]
        step = _lse(log_t[None] + nxt[:, None, :], axis=2)
        beta[:, i] = np.where((i < batch.lengths - 1)[:, None], step, log_end)
    return beta


@dataclass
class Posteriors:
    log_z: np.ndarray  # (B,)
    alpha: np.ndarray  # (B, N, K)
    beta: np.ndarray  # (B, N, K)
    unary: np.ndarray  # (B, N, K), zero on padding
    pairwise: np.ndarray  # (B, N-1, K, K), zero on padding


def posteriors(batch: LatticeBatch, unary: np.ndarray | None = None, check: bool = True) -> Posteriors:
    unary = batch.unary if unary is None else unary
    alpha, log_z = forward(batch, unary)
    if check and np.any(log_z < NEG / 2):
        b = int(np.argmax(log_z < NEG / 2))
        raise NoValidPathError(f"lattice {b} admits no valid tag sequence")
    beta = backward(batch, unary)
    valid = batch.position_mask()
    marg = np.exp(alpha + beta - log_z[:, None, None]) * valid[:, :, None]
    log_t = batch.log_transition()
    pair_valid = valid[:, 1:, None, None]
    pair = np.exp(alpha[:, :-1, :, None] + log_t[None, None]
                  + (unary[:, 1:] + beta[:, 1:])[:, :, None, :]
                  - log_z[:, None, None, None]) * pair_valid
    return Posteriors(log_z, alpha, beta, marg, pair)


def entity_count_gradients(batch: LatticeBatch, post: Posteriors, unary: np.ndarray | None = None):
    """Expected non-O count per sentence and its gradient w.r.t. the potentials.

    The derivative of an expectation of a sum of unary features ``f`` is a
    covariance, ``dE[f]/dphi(j, y) = p(y_j = y) (E[f | y_j = y] - E[f])``.
    Conditional expectations are accumulated along the chain: ``fwd[j, y]``
    covers positions ``<= j`` and ``bwd[j, y]`` positions ``> j``, each a
    convex combination of its neighbour, so no masked score is ever
    exponentiated un-normalised.
    """
    unary = batch.unary if unary is None else unary
    bsz, n, k = unary.shape
    valid = batch.position_mask()
    g = np.ones(k)
    g[batch.o_index] = 0.0
    feat = valid[:, :, None] * g[None, None, :]
    log_t = batch.log_transition()

    fwd = np.empty((bsz, n, k))
    fwd[:, 0] = feat[:, 0]
    for i in range(1, n):
        w = _softmax(post.alpha[:, i - 1, :, None] + log_t[None], axis=1)
        step = np.einsum("bpy,bp->by", w, fwd[:, i - 1]) + feat[:, i]
        fwd[:, i] = np.where((i < batch.lengths)[:, None], step, fwd[:, i - 1])

    bwd = np.zeros((bsz, n, k))
    for i in range(n - 2, -1, -1):
        w = _softmax(log_t[None] + (unary[:, i + 1] + post.beta[:, i + 1])[:, None, :], axis=2)
        step = np.einsum("byq,bq->by", w, bwd[:, i + 1] + feat[:, i + 1])
        bwd[:, i] = np.where((i < batch.lengths - 1)[:, None], step, 0.0)

    expected = (post.unary * g).sum(axis=(1, 2))
    d_unary = post.unary * (fwd + bwd - expected[:, None, None])
    centred = fwd[:, :-1, :, None] + (bwd[:, 1:] + feat[:, 1:])[:, :, None, :] - expected[:, None, None, None]
    d_trans = (post.pairwise * centred).sum(axis=(0, 1))
    return expected, d_unary, d_trans


def viterbi_batch(batch: LatticeBatch, o_bias: float = 0.0):
    """Best path per sentence; ties go to the lowest tag index at every argmax.

    Backtracking from the end with lowest-index ties selects, among all
    optimal paths, the one whose reversed tag sequence is lexicographically
    smallest.
    """
    if o_bias < 0:
        raise ValueError("o_bias must be non-negative")
    unary = batch.unary.copy()
    unary[:, :, batch.o_index] -= o_bias
    log_t = batch.log_transition()
    bsz, n, k = unary.shape
    delta = np.empty((bsz, n, k))
    back = np.zeros((bsz, n, k), dtype=np.int64)
    delta[:, 0] = batch.mask.log_start() + unary[:, 0]
    for i in range(1, n):
        cand = delta[:, i - 1, :, None] + log_t[None]
        back[:, i] = np.argmax(cand, axis=1)
        best = np.take_along_axis(cand, back[:, i][:, None, :], axis=1)[:, 0]
        delta[:, i] = np.where((i < batch.lengths)[:, None], best + unary[:, i], delta[:, i - 1])
    final = delta[:, -1] + batch.mask.log_end()
    last = np.argmax(final, axis=1)
    scores = final[np.arange(bsz), last]
    if np.any(scores < NEG / 2):
        raise NoValidPathError("lattice admits no valid tag sequence")
    paths = []
    for b in range(bsz):
        length = batch.lengths[b]
        path = [int(last[b])]
        for i in range(length - 1, 0, -1):
            path.append(int(back[b, i, path[-1]]))
        paths.append(tuple(reversed(path)))
    return paths, scores


# --- single-lattice API ----------------------------------------------------

def log_partition(lattice: PotentialLattice) -> float:
    post_z = forward(_as_batch(lattice))[1][0]
    if post_z < NEG / 2:
        raise NoValidPathError("lattice admits no valid tag sequence")
    return float(post_z)


def tag_marginals(lattice: PotentialLattice) -> np.ndarray:
    return posteriors(_as_batch(lattice)).unary[0]


def pairwise_marginals(lattice: PotentialLattice) -> np.ndarray:
    return posteriors(_as_batch(lattice)).pairwise[0]


def first_blocking_observation(lattice: PotentialLattice, observed: ObservedTags) -> int:
    batch = _as_batch(lattice)
    kept: list[tuple[int, int]] = []
    for pos, tag in observed:
        kept.append((pos, tag))
        clamp = observation_mask(batch, [ObservedTags(tuple(kept))])
        if forward(batch, np.where(clamp, batch.unary, NEG))[1][0] < NEG / 2:
            return pos
    return 0


def constrained_log_partition(lattice: PotentialLattice, observed: ObservedTags) -> float:
    batch = _as_batch(lattice)
    clamp = observation_mask(batch, [observed])
    log_z = forward(batch, np.where(clamp, batch.unary, NEG))[1][0]
    if log_z < NEG / 2:
        pos = first_blocking_observation(lattice, observed)
        raise NoValidPathError(f"observation at position {pos} leaves no valid tag sequence", pos)
    return float(log_z)


def expected_entity_count(lattice: PotentialLattice) -> float:
    marg = tag_marginals(lattice)
    return float(len(lattice) - marg[:, lattice.o_index].sum())


def viterbi(lattice: PotentialLattice, o_bias: float = 0.0) -> tuple[tuple[int, ...], float]:
    paths, scores = viterbi_batch(_as_batch(lattice), o_bias)
    return paths[0], float(scores[0])


def backward_adjoints(lattice: PotentialLattice, output: str = "log_partition",
                      upstream: float = 1.0, observed: ObservedTags | None = None) -> LatticeGradients:
    """Gradient of ``upstream * output`` w.r.t. unary and transition scores.

    ``output`` is one of ``log_partition``, ``constrained_log_partition``
    (requires ``observed``) or ``expected_entity_count``.
    """
    batch = _as_batch(lattice)
    unary = batch.unary
    if output == "constrained_log_partition":
        if observed is None:
            raise ValueError("constrained_log_partition needs observations")
        constrained_log_partition(lattice, observed)
        unary = np.where(observation_mask(batch, [observed]), batch.unary, NEG)
    elif output not in ("log_partition", "expected_entity_count"):
        raise ValueError(f"unknown lattice output {output!r}")
    post = posteriors(batch, unary)
    if output == "expected_entity_count":
        _, d_unary, d_trans = entity_count_gradients(batch, post, unary)
        d_unary = d_unary[0]
    else:
        d_unary = post.unary[0]
        d_trans = post.pairwise[0].sum(axis=0)
    d_trans = np.where(lattice.mask.allowed, d_trans, 0.0)
    return LatticeGradients(upstream * d_unary, upstream * d_trans)
