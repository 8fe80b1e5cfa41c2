"""Minibatch training of a :class:`Tagger` on the combined objective."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import AnnotatedSentence, Dataset
from .lattice import posteriors
from .objectives import EerConfig, combined_loss
from .scorer import ScorerConfig, Tagger, load_tagger, save_tagger

log = logging.getLogger(__name__)

TRANSFORMER_LEARNING_RATE = 2e-5  # fine-tuning rate for pretrained transformer encoders


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    max_batch_tokens: int | None = None
    learning_rate: float = 1e-2
    schedule: str = "slanted"  # "slanted" | "constant" | "transformer"
    peak_fraction: float = 0.1
    optimizer: str = "adam"  # "adam" | "sgd"
    rng_seed: int = 0
    eer: EerConfig = field(default_factory=EerConfig)
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not 0 < self.peak_fraction < 1:
            raise ValueError("peak_fraction must lie in (0, 1)")
        if self.schedule not in ("slanted", "constant", "transformer"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        if isinstance(data.get("eer"), dict):
            data["eer"] = EerConfig(**data["eer"])
        return cls(**data)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    marginal_loss: float
    eer_loss: float
    loss: float
    rho_hat: float
    dev_f1: float | None
    wall_time: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)

    @property
    def final_rho_hat(self) -> float | None:
        return self.epochs[-1].rho_hat if self.epochs else None

    def to_json(self) -> list[dict]:
        return [asdict(e) for e in self.epochs]


def lr_at(step: int, total_steps: int, config: TrainConfig) -> float:
    """Learning rate for a 0-based step.

    The slanted-triangular schedule rises linearly from 0 to the peak at
    ``peak_fraction * total_steps`` and falls linearly to 0 at
    ``total_steps``, so the last step gets ``lr / ((1 - peak_fraction) * total_steps)``.
    """
    lr = TRANSFORMER_LEARNING_RATE if config.schedule == "transformer" else config.learning_rate
    if config.schedule == "constant":
        return lr
    peak = config.peak_fraction * total_steps
    if step < peak:
        return lr * step / peak
    return lr * (total_steps - step) / (total_steps - peak)


class Adam:
    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params, grads, lr):
        self.t += 1
        for k, g in grads.items():
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            params[k] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state(self) -> dict[str, np.ndarray]:
        out = {"t": np.array(self.t)}
        out.update({f"m.{k}": v for k, v in self.m.items()})
        out.update({f"v.{k}": v for k, v in self.v.items()})
        return out

    def load(self, state) -> None:
        self.t = int(state["t"])
        self.m = {k[2:]: state[k].copy() for k in state if k.startswith("m.")}
        self.v = {k[2:]: state[k].copy() for k in state if k.startswith("v.")}


class SGD:
    def step(self, params, grads, lr):
        for k, g in grads.items():
            params[k] -= lr * g

    def state(self) -> dict[str, np.ndarray]:
        return {}

    def load(self, state) -> None:
        pass


def make_batches(sentences: Sequence[AnnotatedSentence], config: TrainConfig,
                 rng: np.random.Generator) -> list[list[int]]:
    """Shuffle sentence indices and pack them under the size and token caps."""
    order = rng.permutation(len(sentences))
    batches: list[list[int]] = []
    cur: list[int] = []
    tokens = 0
    for idx in order:
        n = len(sentences[idx])
        full = len(cur) >= config.batch_size or (
            config.max_batch_tokens is not None and cur and tokens + n > config.max_batch_tokens)
        if full:
            batches.append(cur)
            cur, tokens = [], 0
        cur.append(int(idx))
        tokens += n
    if cur:
        batches.append(cur)
    return batches


def corpus_rho_hat(tagger: Tagger, sentences: Sequence[AnnotatedSentence], batch_size: int = 256) -> float:
    expected = 0.0
    total = 0
    for lo in range(0, len(sentences), batch_size):
        chunk = sentences[lo: lo + batch_size]
        batch = tagger.lattices([s.tokens for s in chunk])
        post = posteriors(batch)
        expected += batch.lengths.sum() - post.unary[:, :, batch.o_index].sum()
        total += batch.lengths.sum()
    return float(expected / total)


def _param_norms(params) -> dict[str, float]:
    return {k: float(np.linalg.norm(v)) for k, v in params.items()}


def _save_state(path: Path, tagger: Tagger, optimizer, epoch: int, step: int,
                train_config: TrainConfig, report: TrainReport) -> None:
    path.mkdir(parents=True, exist_ok=True)
    save_tagger(tagger, path / "model.npz")
    np.savez(path / "optimizer.npz", **optimizer.state())
    (path / "train_config.json").write_text(json.dumps(asdict(train_config), indent=2))
    (path / "state.json").write_text(json.dumps(
        {"epoch": epoch, "step": step, "report": report.to_json()}, indent=2))


def train(dataset: Dataset, scorer_config: ScorerConfig, train_config: TrainConfig,
          dev: Dataset | None = None, checkpoint_dir: str | Path | None = None,
          resume: str | Path | None = None, stop_after_epoch: int | None = None,
          dev_scorer: Callable[[Tagger, Dataset], float] | None = None,
          log_path: str | Path | None = None) -> tuple[Tagger, TrainReport]:
    """Train on the observed tags of ``dataset``; gold tags are never read.

    ``resume`` continues from a checkpoint directory written by an earlier
    call with the same configuration; ``stop_after_epoch`` ends the run early
    (after checkpointing) so a later resume can finish it. Each epoch record
    is appended to ``log_path`` as one JSON line.
    """
    sentences = dataset.sentences()
    if not sentences:
        raise ValueError("training set is empty")
    if dev is not None and dev_scorer is None:
        from .evaluate import dev_f1 as dev_scorer
    optimizer = Adam() if train_config.optimizer == "adam" else SGD()
    report = TrainReport()
    start_epoch = 0
    step = 0
    if resume is not None:
        resume = Path(resume)
        tagger = load_tagger(resume / "model.npz")
        with np.load(resume / "optimizer.npz") as st:
            optimizer.load({k: st[k] for k in st.files})
        state = json.loads((resume / "state.json").read_text())
        start_epoch, step = state["epoch"], state["step"]
        report.epochs = [EpochRecord(**e) for e in state["report"]]
    else:
        tagger = Tagger.for_corpus(scorer_config, (s.tokens for s in sentences), dataset.tagset)

    ids = [tagger.encode(s.tokens) for s in sentences]
    observed = [s.observed for s in sentences]
    steps_per_epoch = len(make_batches(sentences, train_config, np.random.default_rng(0)))
    total_steps = max(1, steps_per_epoch * train_config.epochs)
    last_epoch = train_config.epochs if stop_after_epoch is None else min(stop_after_epoch, train_config.epochs)
    ckpt = Path(checkpoint_dir) if checkpoint_dir is not None else None

    for epoch in range(start_epoch, last_epoch):
        t0 = time.perf_counter()
        rng = np.random.default_rng([train_config.rng_seed, epoch])
        sums = np.zeros(3)
        batches = make_batches(sentences, train_config, rng)
        for batch_id, idx in enumerate(batches):
            lattices, cache = tagger.score_batch([ids[i] for i in idx])
            rep, adj = combined_loss(lattices, [observed[i] for i in idx], train_config.eer)
            if not np.isfinite(rep.loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch} batch {batch_id}; "
                                       f"parameter norms {_param_norms(tagger.params)}")
            grads = tagger.batch_gradients(cache, adj)
            optimizer.step(tagger.params, grads, lr_at(step, total_steps, train_config))
            step += 1
            sums += (rep.marginal_loss, rep.eer_loss, rep.loss)
        means = sums / len(batches)
        f1 = dev_scorer(tagger, dev) if dev is not None else None
        record = EpochRecord(epoch + 1, float(means[0]), float(means[1]), float(means[2]),
                             corpus_rho_hat(tagger, sentences), f1, time.perf_counter() - t0)
        report.epochs.append(record)
        line = json.dumps(asdict(record))
        log.info(line)
        if log_path is not None:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        at_end = epoch + 1 == last_epoch
        every = train_config.checkpoint_every
        if ckpt is not None and (at_end or (every and (epoch + 1) % every == 0)):
            _save_state(ckpt, tagger, optimizer, epoch + 1, step, train_config, report)
    if ckpt is not None and last_epoch == start_epoch:
        _save_state(ckpt, tagger, optimizer, start_epoch, step, train_config, report)
    return tagger, report


def with_eer(config: TrainConfig, **changes) -> TrainConfig:
    return replace(config, eer=replace(config.eer, **changes))
