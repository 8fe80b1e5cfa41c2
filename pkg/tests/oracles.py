"""Brute-force references over explicitly enumerated tag paths."""

import numpy as np

from eerner.lattice import PotentialLattice


def valid_paths(lattice: PotentialLattice) -> np.ndarray:
    n, k = lattice.unary.shape
    paths = np.stack(np.unravel_index(np.arange(k ** n), (k,) * n), axis=1)
    m = lattice.mask
    ok = m.start[paths[:, 0]] & m.end[paths[:, -1]]
    if n > 1:
        ok &= m.allowed[paths[:, :-1], paths[:, 1:]].all(axis=1)
    return paths[ok]


def path_scores(lattice: PotentialLattice, paths: np.ndarray) -> np.ndarray:
    n = lattice.unary.shape[0]
    s = lattice.unary[np.arange(n), paths].sum(axis=1)
    if n > 1:
        s = s + lattice.transition[paths[:, :-1], paths[:, 1:]].sum(axis=1)
    return s


def satisfies(paths: np.ndarray, observed) -> np.ndarray:
    ok = np.ones(len(paths), bool)
    for pos, tag in observed:
        ok &= paths[:, pos - 1] == tag
    return ok


def log_sum(scores: np.ndarray) -> float:
    m = scores.max()
    return float(m + np.log(np.exp(scores - m).sum()))


def enum_log_partition(lattice, observed=()):
    paths = valid_paths(lattice)
    keep = satisfies(paths, observed)
    return log_sum(path_scores(lattice, paths[keep]))


def enum_marginals(lattice):
    paths = valid_paths(lattice)
    s = path_scores(lattice, paths)
    p = np.exp(s - log_sum(s))
    n, k = lattice.unary.shape
    out = np.zeros((n, k))
    for i in range(n):
        np.add.at(out[i], paths[:, i], p)
    return out


def enum_expected_entities(lattice):
    paths = valid_paths(lattice)
    s = path_scores(lattice, paths)
    p = np.exp(s - log_sum(s))
    return float((p * (paths != lattice.o_index).sum(axis=1)).sum())


def enum_viterbi(lattice, o_bias=0.0):
    """Best path; exact ties resolved to the smallest reversed sequence."""
    paths = valid_paths(lattice)
    biased = PotentialLattice(lattice.unary - o_bias * (np.arange(lattice.unary.shape[1]) == lattice.o_index),
                              lattice.transition, lattice.mask, lattice.o_index)
    s = path_scores(biased, paths)
    best = s.max()
    tied = [tuple(int(t) for t in p) for p in paths[s == best]]
    return min(tied, key=lambda p: p[::-1]), float(best)


def central_difference(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + step
        hi = f()
        flat[j] = orig - step
        lo = f()
        flat[j] = orig
        g[j] = (hi - lo) / (2 * step)
    return grad


def random_lattice(rng: np.random.Generator, n: int, n_classes: int, masked: bool, scale: float = 2.0):
    """Random potentials over the BILUO tag set, with or without its grammar."""
    from eerner.corpus import TagSet
    from eerner.lattice import TransitionMask

    tagset = TagSet(tuple(f"K{c}" for c in range(n_classes)))
    k = len(tagset)
    mask = TransitionMask.biluo(tagset) if masked else TransitionMask.unmasked(k)
    lattice = PotentialLattice(scale * rng.standard_normal((n, k)), scale * rng.standard_normal((k, k)), mask)
    return lattice, tagset


def random_observations(rng: np.random.Generator, lattice: PotentialLattice, satisfiable: bool = True):
    """Reveal a random subset of positions of a random valid path.

    With ``satisfiable=False`` the tags are drawn independently and may
    contradict the grammar.
    """
    from eerner.corpus import ObservedTags

    n, k = lattice.unary.shape
    reveal = rng.random(n) < 0.5
    if satisfiable:
        paths = valid_paths(lattice)
        path = paths[rng.integers(len(paths))]
    else:
        path = rng.integers(k, size=n)
    return ObservedTags(tuple((i + 1, int(path[i])) for i in range(n) if reveal[i]))


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """Normwise relative error ``max|a - b| / max(max|a|, max|b|)`` of one tensor.

    Entrywise ratios are meaningless on entries near zero, where central
    differences carry round-off of order ``eps * |f| / step``.
    """
    a, b = np.asarray(analytic, float), np.asarray(numeric, float)
    if not a.size:
        return 0.0
    scale = max(np.abs(a).max(), np.abs(b).max(), floor)
    return float(np.abs(a - b).max() / scale)


def tiny_tagger(rng_seed: int, n_classes: int = 2, window: int = 1):
    """A small random scorer over a 6-word vocabulary."""
    from eerner.corpus import TagSet
    from eerner.scorer import ScorerConfig, Tagger, Vocab

    config = ScorerConfig(embed_dim=3, window=window, hidden_dim=4, init_scale=1.5, rng_seed=rng_seed)
    tagset = TagSet(tuple(f"K{c}" for c in range(n_classes)))
    tagger = Tagger(config, Vocab(("<bnd>", "<unk>") + tuple(f"w{j}" for j in range(6))), tagset)
    rng = np.random.default_rng(rng_seed + 7)
    tagger.params["transition"] = rng.standard_normal(tagger.params["transition"].shape)
    tagger.params["b_out"] = rng.standard_normal(tagger.params["b_out"].shape)
    return tagger


def reference_bootstrap(pred_a, pred_b, gold, tagset, iterations, confidence, seed, chunk):
    """Percentile bootstrap of the F1 difference, one resample at a time.

    Document indices are drawn in blocks of ``chunk`` rows, as the
    vectorized implementation does, so a seed pins both.
    """
    from eerner.corpus import tags_to_spans

    def counts(pred_doc, gold_doc):
        tp = fp = fn = 0
        for p, g in zip(pred_doc, gold_doc):
            ps, gs = tags_to_spans(p, tagset), tags_to_spans(g, tagset)
            tp += len(ps & gs)
            fp += len(ps - gs)
            fn += len(gs - ps)
        return tp, fp, fn

    def f1(c):
        tp, fp, fn = c
        return 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0
    ca = [counts(p, g) for p, g in zip(pred_a, gold)]
    cb = [counts(p, g) for p, g in zip(pred_b, gold)]
    rng = np.random.default_rng(seed)
    diffs = []
    remaining = iterations
    while remaining:
        rows = min(chunk, remaining)
        block = rng.integers(0, len(gold), size=(rows, len(gold)))
        for row in block:
            sa = [sum(ca[i][j] for i in row) for j in range(3)]
            sb = [sum(cb[i][j] for i in row) for j in range(3)]
            diffs.append(f1(sa) - f1(sb))
        remaining -= rows
    tail = (1 - confidence) / 2
    return np.quantile(diffs, tail), np.quantile(diffs, 1 - tail)
