"""Marginal tag likelihood, the expected-entity-ratio hinge, and their sum.

Every loss returns lattice adjoints shaped like the batch: ``d_unary``
``(B, N, K)`` and ``d_transition`` ``(K, K)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import ObservedTags
from .lattice import (NEG, LatticeBatch, LatticeGradients, NoValidPathError, Posteriors,
                      _as_batch, first_blocking_observation, entity_count_gradients,
                      observation_mask, posteriors)


@dataclass(frozen=True)
class EerConfig:
    rho: float = 0.15
    gamma: float = 0.05
    lambda_u: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.gamma < 0 or self.lambda_u < 0:
            raise ValueError("gamma and lambda_u must be non-negative")


@dataclass(frozen=True)
class BatchLossReport:
    marginal_loss: float
    eer_loss: float
    loss: float
    rho_hat: float
    n_tokens: int
    expected_entities: float


def _zero_grads(batch: LatticeBatch) -> LatticeGradients:
    return LatticeGradients(np.zeros_like(batch.unary), np.zeros_like(batch.transition))


def _constrained(batch: LatticeBatch, observations: Sequence[ObservedTags]) -> Posteriors:
    clamp = observation_mask(batch, observations)
    post = posteriors(batch, np.where(clamp, batch.unary, NEG), check=False)
    bad = np.flatnonzero(post.log_z < NEG / 2)
    if bad.size:
        b = int(bad[0])
        pos = first_blocking_observation(batch.lattice(b), observations[b])
        raise NoValidPathError(f"sentence {b}: observation at position {pos} is unsatisfiable", pos)
    return post


def marginal_tag_loss(lattices, observations: Sequence[ObservedTags], _post: Posteriors | None = None):
    """Mean negative log marginal likelihood of the observed tags."""
    batch = _as_batch(lattices)
    post = posteriors(batch) if _post is None else _post
    cons = _constrained(batch, observations)
    m = len(batch)
    loss = float(np.sum(post.log_z - cons.log_z) / m)
    d_unary = (post.unary - cons.unary) / m
    d_trans = (post.pairwise - cons.pairwise).sum(axis=(0, 1)) / m
    return loss, LatticeGradients(d_unary, np.where(batch.mask.allowed, d_trans, 0.0))


def batch_entity_ratio(lattices) -> float:
    batch = _as_batch(lattices)
    post = posteriors(batch)
    expected = batch.lengths.sum() - post.unary[:, :, batch.o_index].sum()
    return float(expected / batch.lengths.sum())


def eer_loss(lattices, config: EerConfig, _post: Posteriors | None = None):
    """Hinge ``max(0, |rho - rho_hat| - gamma)`` on the batch entity ratio.

    The subgradient is taken as zero on the closed margin interval,
    including its end points.
    """
    batch = _as_batch(lattices)
    post = posteriors(batch) if _post is None else _post
    n_tokens = int(batch.lengths.sum())
    expected = batch.lengths.sum() - post.unary[:, :, batch.o_index].sum()
    rho_hat = float(expected / n_tokens)
    lo, hi = config.rho - config.gamma, config.rho + config.gamma
    if lo <= rho_hat <= hi:
        return 0.0, rho_hat, _zero_grads(batch)
    gap = lo - rho_hat if rho_hat < lo else rho_hat - hi
    _, d_unary, d_trans = entity_count_gradients(batch, post)
    scale = np.sign(rho_hat - config.rho) / n_tokens
    grads = LatticeGradients(scale * d_unary, scale * np.where(batch.mask.allowed, d_trans, 0.0))
    return float(gap), rho_hat, grads


def combined_loss(lattices, observations: Sequence[ObservedTags], config: EerConfig):
    batch = _as_batch(lattices)
    post = posteriors(batch)
    lp, gp = marginal_tag_loss(batch, observations, _post=post)
    lu, rho_hat, gu = eer_loss(batch, config, _post=post)
    lam = config.lambda_u
    n_tokens = int(batch.lengths.sum())
    report = BatchLossReport(lp, lu, lp + lam * lu, rho_hat, n_tokens, rho_hat * n_tokens)
    grads = LatticeGradients(gp.d_unary + lam * gu.d_unary, gp.d_transition + lam * gu.d_transition)
    return report, grads
