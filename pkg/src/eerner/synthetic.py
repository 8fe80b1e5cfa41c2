"""Synthetic tagging tasks with a known, deterministic tag rule.

Construction of the input distribution: the vocabulary holds filler words
``f<j>`` and, for each entity class ``c``, entity words ``e<c>_<j>``. A
sentence of length ``n ~ U[min_len, max_len]`` is built left to right: with
probability ``q`` a mention of ``L ~ U[1, max_mention_len]`` entity words of
one uniformly drawn class is emitted and followed by a filler word,
otherwise a single filler word is emitted. ``q`` is set so the expected
entity-token ratio is ``target_ratio`` (ignoring truncation at the sentence
end); see ``SyntheticTaskConfig.mention_prob``.

Gold tags are a function of the 3-token window around each position: an
entity word takes its class, and its role (B/I/L/U) depends on whether the
neighbours are entity words of the same class. The rule is therefore
realizable by a window-1 scorer.

Optionally (``ambiguous_vocab > 0``) the task gets words whose tag needs
wider context. With probability ``ambiguous_rate`` per step an ambiguous
event ``[ctx, f, a<j>]`` is emitted; with probability
``ambiguous_entity_prob`` the context word is a trigger ``t<k>`` and
``a<j>`` is a unit entity of class ``j mod n_classes``, otherwise ``ctx`` is
a filler and ``a<j>`` is O. The rule then looks two tokens left, so a
window-1 scorer cannot realize it while a window-2 scorer can.

Observations reveal each entity token's gold tag independently with
probability ``reveal_prob``; O tags are never revealed.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import AnnotatedSentence, Dataset, Document, ObservedTags, TagSet, entity_token_ratio
from .evaluate import decode, gold_sequences, predicted_entity_ratio, span_prf
from .objectives import EerConfig
from .preprocess import apply_variant, raw_view
from .samplers import EeConfig, sample_ee
from .scorer import ScorerConfig
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticTaskConfig:
    n_classes: int = 2
    filler_vocab: int = 200
    entity_vocab: int = 30
    min_len: int = 8
    max_len: int = 20
    max_mention_len: int = 3
    target_ratio: float = 0.2
    reveal_prob: float = 0.3
    doc_size: int = 10
    ambiguous_vocab: int = 0
    ambiguous_rate: float = 0.1
    ambiguous_entity_prob: float = 0.25
    trigger_vocab: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 < self.reveal_prob <= 1:
            raise ValueError("reveal_prob must lie in (0, 1]: every entity tag needs positive support")
        if not 0 < self.target_ratio < 1:
            raise ValueError("target_ratio must lie in (0, 1)")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.n_classes < 1 or self.entity_vocab < 1 or self.filler_vocab < 1:
            raise ValueError("class and vocabulary sizes must be positive")
        if self.ambiguous_vocab < 0 or self.trigger_vocab < 1:
            raise ValueError("ambiguous_vocab must be >= 0 and trigger_vocab >= 1")
        if not 0 <= self.ambiguous_rate < 1 or not 0 < self.ambiguous_entity_prob <= 1:
            raise ValueError("need 0 <= ambiguous_rate < 1 and 0 < ambiguous_entity_prob <= 1")

    @property
    def tagset(self) -> TagSet:
        return TagSet(tuple(f"C{c}" for c in range(self.n_classes)))

    @property
    def event_rate(self) -> float:
        return self.ambiguous_rate if self.ambiguous_vocab else 0.0

    @property
    def rule_radius(self) -> int:
        """How far left or right the tag rule looks."""
        return 2 if self.ambiguous_vocab else 1

    @property
    def mention_prob(self) -> float:
        # per step: mention (L+1 tokens, L entity), ambiguous event (3 tokens,
        # entity_prob entity), filler (1 token); solve the token ratio for q
        mean_len = (1 + self.max_mention_len) / 2
        a, rho = self.event_rate, self.target_ratio
        q = (rho * (1 + 2 * a) - a * self.ambiguous_entity_prob) / (mean_len * (1 - rho))
        if not 0 < q < 1 - a:
            raise ValueError(f"target_ratio {rho} unreachable with these mention and ambiguity settings")
        return q


def word_class(word: str) -> int | None:
    """Entity class index of an entity word, ``None`` for filler and boundary."""
    if word.startswith("e") and "_" in word:
        return int(word[1:word.index("_")])
    return None


def tag_rule(tokens: Sequence[str], tagset: TagSet) -> tuple[int, ...]:
    """The deterministic gold tagging; looks at most ``rule_radius`` tokens away."""
    classes = [word_class(t) for t in tokens]
    padded = [None, *classes, None]
    tags = []
    for i, c in enumerate(classes, start=1):
        word = tokens[i - 1]
        if word.startswith("a"):
            trig = i >= 3 and tokens[i - 3].startswith("t")
            cls = tagset.classes[int(word[1:]) % len(tagset.classes)]
            tags.append(tagset.tag_index("U", cls) if trig else tagset.o_index)
            continue
        if c is None:
            tags.append(tagset.o_index)
            continue
        left, right = padded[i - 1] == c, padded[i + 1] == c
        role = "I" if left and right else "L" if left else "B" if right else "U"
        tags.append(tagset.tag_index(role, tagset.classes[c]))
    return tuple(tags)


def _sentence(config: SyntheticTaskConfig, rng: np.random.Generator, q: float) -> list[str]:
    n = int(rng.integers(config.min_len, config.max_len + 1))
    tokens: list[str] = []
    a = config.event_rate
    while len(tokens) < n:
        u = rng.random()
        if u >= q and u < q + a:
            if rng.random() < config.ambiguous_entity_prob:
                ctx = f"t{rng.integers(config.trigger_vocab)}"
            else:
                ctx = f"f{rng.integers(config.filler_vocab)}"
            event = [ctx, f"f{rng.integers(config.filler_vocab)}", f"a{rng.integers(config.ambiguous_vocab)}"]
            tokens.extend(event[: n - len(tokens)])
        elif u < q:
            length = min(int(rng.integers(1, config.max_mention_len + 1)), n - len(tokens))
            c = int(rng.integers(config.n_classes))
            tokens.extend(f"e{c}_{j}" for j in rng.integers(config.entity_vocab, size=length))
            if len(tokens) < n:
                tokens.append(f"f{rng.integers(config.filler_vocab)}")
        else:
            tokens.append(f"f{rng.integers(config.filler_vocab)}")
    return tokens


def generate_synthetic(config: SyntheticTaskConfig, m: int) -> tuple[Dataset, Dataset]:
    """Draw ``m`` sentences; return the fully observed gold corpus and its partial view.

    Sentences are grouped ``doc_size`` at a time into documents.
    """
    tagset = config.tagset
    rng = np.random.default_rng(config.rng_seed)
    q = config.mention_prob
    gold_sents, partial_sents = [], []
    for _ in range(m):
        tokens = _sentence(config, rng, q)
        gold = tag_rule(tokens, tagset)
        reveal = rng.random(len(tokens)) < config.reveal_prob
        observed = ObservedTags(tuple((i + 1, t) for i, t in enumerate(gold)
                                      if t != tagset.o_index and reveal[i]))
        gold_sents.append(AnnotatedSentence(tuple(tokens), ObservedTags.from_tags(gold, tagset), gold))
        partial_sents.append(AnnotatedSentence(tuple(tokens), observed, gold))

    def documents(sents):
        return tuple(Document(f"synth-{k // config.doc_size:05d}", tuple(sents[k: k + config.doc_size]))
                     for k in range(0, len(sents), config.doc_size))

    return Dataset(documents(gold_sents), tagset), Dataset(documents(partial_sents), tagset)


# --- experiments -----------------------------------------------------------

DESK_SCORER = ScorerConfig(embed_dim=16, window=1, hidden_dim=32)
DESK_TRAIN = TrainConfig(epochs=12, batch_size=64, learning_rate=2e-2)
TEST_SEED_OFFSET = 1_000_003  # test sentences come from a separate seed stream


@dataclass(frozen=True)
class RunMetrics:
    token_accuracy: float
    sequence_accuracy: float
    precision: float
    recall: float
    f1: float
    rho_hat: float
    rho_star: float

    @property
    def rho_error(self) -> float:
        return abs(self.rho_hat - self.rho_star)


def measure(tagger, test: Dataset, o_bias: float = 0.0) -> RunMetrics:
    """Token, sentence and span metrics of Viterbi output, plus the expected ratio."""
    pred = decode(tagger, test, o_bias)
    gold = gold_sequences(test)
    tok = np.concatenate([np.equal(p, g) for p, g in zip(pred, gold)])
    seq = np.mean([p == g for p, g in zip(pred, gold)])
    prf = span_prf(pred, gold, test.tagset)
    return RunMetrics(float(tok.mean()), float(seq), prf.precision, prf.recall, prf.f1,
                      predicted_entity_ratio(tagger, test), entity_token_ratio(test))


def train_test_split(task: SyntheticTaskConfig, m_train: int, m_test: int) -> tuple[Dataset, Dataset, Dataset]:
    """(gold train, partial train, gold test); the test set does not depend on ``m_train``."""
    gold, partial = generate_synthetic(task, m_train)
    test, _ = generate_synthetic(replace(task, rng_seed=task.rng_seed + TEST_SEED_OFFSET), m_test)
    return gold, partial, test


@dataclass(frozen=True)
class ConsistencyConfig:
    task: SyntheticTaskConfig = SyntheticTaskConfig()
    m_train: int = 2000
    m_test: int = 500
    scorer: ScorerConfig = DESK_SCORER
    train: TrainConfig = DESK_TRAIN
    lambda_u: float = 10.0
    runs: tuple[str, ...] = ("eer", "raw", "marginal_only")

    def __post_init__(self):
        if self.task.rule_radius > self.scorer.window:
            raise ValueError(f"tag rule looks {self.task.rule_radius} tokens away but the scorer "
                             f"window is {self.scorer.window}; the task is not realizable")
        if self.lambda_u <= 0:
            raise ValueError("the consistency run needs lambda_u > 0")
        unknown = set(self.runs) - {"eer", "raw", "marginal_only"}
        if unknown:
            raise ValueError(f"unknown runs {sorted(unknown)}")


def run_consistency_experiment(config: ConsistencyConfig = ConsistencyConfig()) -> dict:
    """Train on positive-only synthetic observations with ``rho = rho*`` and ``gamma = 0``.

    ``rho*`` is the gold ratio of the training sentences. ``eer`` uses the
    combined loss, ``marginal_only`` drops the ratio term (``lambda_u = 0``)
    and ``raw`` reads every latent tag as O.
    """
    gold, partial, test = train_test_split(config.task, config.m_train, config.m_test)
    rho_star = entity_token_ratio(gold)
    report = {"m_train": config.m_train, "m_test": config.m_test,
              "rho_star_train": rho_star, "rho_star_test": entity_token_ratio(test), "runs": {}}
    for run in config.runs:
        data = raw_view(partial) if run == "raw" else partial
        lam = config.lambda_u if run == "eer" else 0.0
        eer = EerConfig(rho=rho_star, gamma=0.0, lambda_u=lam)
        tagger, tr = train(data, config.scorer, replace(config.train, eer=eer))
        metrics = measure(tagger, test)
        report["runs"][run] = {**asdict(metrics), "rho_error": metrics.rho_error,
                               "train_rho_hat": tr.final_rho_hat}
        log.info("%s m=%d: %s", run, config.m_train, report["runs"][run])
    return report


def run_sample_size_sweep(config: ConsistencyConfig = ConsistencyConfig(),
                          sizes: Sequence[int] = (500, 2000, 8000)) -> list[dict]:
    """EER consistency runs at growing training sizes against one fixed test set."""
    return [run_consistency_experiment(replace(config, m_train=m, runs=("eer",))) for m in sizes]


@dataclass(frozen=True)
class ExperimentSpec:
    """A (rho, gamma) sweep.

    ``settings=None`` uses :func:`sweep_settings` around the measured gold
    ratio of the training documents (averaged over seeds). ``source`` is
    ``"synthetic"`` (token-reveal observations) or ``"ee"`` (gold sampled
    by the exploratory-expert scheme, then reduced with ``variant``).
    """
    settings: tuple[tuple[float, float], ...] | None = None
    seeds: tuple[int, ...] = (0, 1, 2)
    task: SyntheticTaskConfig = SyntheticTaskConfig(ambiguous_vocab=10)
    m_train: int = 1000
    m_test: int = 500
    source: str = "ee"
    ee_budget: int = 600
    ee_per_doc_cap: int | None = None
    variant: str = "short"
    scorer: ScorerConfig = DESK_SCORER
    train: TrainConfig = DESK_TRAIN
    lambda_u: float = 10.0
    output_dir: str | None = None

    def __post_init__(self):
        if self.settings is not None and not self.settings:
            raise ValueError("sweep needs at least one (rho, gamma) setting")
        if not self.seeds:
            raise ValueError("sweep needs at least one seed")
        if self.source not in ("synthetic", "ee"):
            raise ValueError(f"unknown sweep source {self.source!r}")
        if self.settings is not None and any(g < 0 for _, g in self.settings):
            raise ValueError("gamma must be >= 0")


def sweep_settings(rho_star: float) -> tuple[tuple[float, float], ...]:
    """(rho, gamma) pairs for the bands [r, r], [r-0.08, r-0.08], [r-0.1, r],
    [r, r+0.1], [0, r] and [0, r+0.1] around ``r = rho_star``."""
    r = rho_star
    return ((r, 0.0), (r - 0.08, 0.0), (r - 0.05, 0.05), (r + 0.05, 0.05),
            (r / 2, r / 2), ((r + 0.1) / 2, (r + 0.1) / 2))


def sweep_data(spec: ExperimentSpec, seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """(gold train, training view, gold test) for one seed."""
    task = replace(spec.task, rng_seed=seed)
    gold, partial, test = train_test_split(task, spec.m_train, spec.m_test)
    if spec.source == "ee":
        sampled, _ = sample_ee(gold, EeConfig(total_budget=spec.ee_budget,
                                              per_doc_cap=spec.ee_per_doc_cap, rng_seed=seed))
        partial = apply_variant(sampled, spec.variant)
    return gold, partial, test


def run_rho_gamma_sweep(spec: ExperimentSpec) -> dict:
    """Train one model per (setting, seed) and summarize F1 and ratio per setting.

    Returns ``rho_star``, the per-run ``rows`` and one ``summary`` entry per
    setting; ``high_above_rho_star`` flags bands whose upper edge exceeds
    ``rho_star``.
    """
    data = {seed: sweep_data(spec, seed) for seed in spec.seeds}
    rho_star = float(np.mean([entity_token_ratio(g) for g, _, _ in data.values()]))
    settings = spec.settings if spec.settings is not None else sweep_settings(rho_star)
    rows = []
    for seed, (_, partial, test) in data.items():
        for k, (rho, gamma) in enumerate(settings):
            eer = EerConfig(rho=rho, gamma=gamma, lambda_u=spec.lambda_u)
            tagger, _ = train(partial, replace(spec.scorer, rng_seed=seed),
                              replace(spec.train, eer=eer, rng_seed=seed))
            m = measure(tagger, test)
            rows.append({"setting": k, "rho": rho, "gamma": gamma, "low": rho - gamma,
                         "high": rho + gamma, "seed": seed, "f1": m.f1, "precision": m.precision,
                         "recall": m.recall, "rho_hat": m.rho_hat, "rho_star_test": m.rho_star})
            log.info("sweep %s", rows[-1])
    summary = []
    for k, (rho, gamma) in enumerate(settings):
        cell = [r for r in rows if r["setting"] == k]
        summary.append({
            "setting": k, "rho": rho, "gamma": gamma, "low": rho - gamma, "high": rho + gamma,
            "mean_f1": float(np.mean([r["f1"] for r in cell])),
            "std_f1": float(np.std([r["f1"] for r in cell])),
            "mean_rho_hat": float(np.mean([r["rho_hat"] for r in cell])),
            "mean_abs_rho_error": float(np.mean([abs(r["rho_hat"] - r["rho_star_test"]) for r in cell])),
            "high_above_rho_star": bool(rho + gamma > rho_star + 1e-9),
        })
    result = {"rho_star": rho_star, "rows": rows, "summary": summary}
    if spec.output_dir is not None:
        write_sweep(result, spec.output_dir)
    return result


def write_sweep(result: dict, output_dir: str | Path) -> None:
    """CSV tables (``sweep_rows.csv``, ``sweep_summary.csv``) and ``sweep.json``."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("rows", "summary"):
        with open(out / f"sweep_{name}.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(result[name][0]))
            writer.writeheader()
            writer.writerows(result[name])
    (out / "sweep.json").write_text(json.dumps(result, indent=2))


def format_sweep(result: dict) -> str:
    """Plain-text table of the sweep summary; ``!`` marks an upper edge above rho*."""
    lines = [f"rho* = {result['rho_star']:.4f}",
             f"{'band':>16} {'F1':>7} {'std':>6} {'rho_hat':>8} {'|err|':>7}"]
    for s in result["summary"]:
        band = f"[{s['low']:.3f},{s['high']:.3f}]" + ("!" if s["high_above_rho_star"] else " ")
        lines.append(f"{band:>16} {s['mean_f1']:7.4f} {s['std_f1']:6.4f} "
                     f"{s['mean_rho_hat']:8.4f} {s['mean_abs_rho_error']:7.4f}")
    return "\n".join(lines)
