from dataclasses import replace

import numpy as np
import pytest

from eerner.objectives import EerConfig
from eerner.scorer import PARAM_NAMES, ScorerConfig
from eerner.synthetic import SyntheticTaskConfig, generate_synthetic
from eerner.trainer import (TRANSFORMER_LEARNING_RATE, TrainConfig, TrainingDiverged, lr_at, make_batches, train,
                            with_eer)

SMALL = ScorerConfig(embed_dim=4, hidden_dim=6)
QUICK = TrainConfig(epochs=3, batch_size=16, learning_rate=2e-2, eer=EerConfig(0.2, 0.0, 10.0))


@pytest.fixture(scope="module")
def data():
    return generate_synthetic(SyntheticTaskConfig(rng_seed=5), 60)[1]


def test_slanted_triangular_schedule():
    cfg = TrainConfig(learning_rate=1.0, peak_fraction=0.1)
    assert lr_at(0, 100, cfg) == 0.0
    assert lr_at(5, 100, cfg) == pytest.approx(0.5)
    assert lr_at(10, 100, cfg) == pytest.approx(1.0)
    assert lr_at(55, 100, cfg) == pytest.approx(0.5)
    assert lr_at(99, 100, cfg) == pytest.approx(1 / 90)
    assert lr_at(37, 100, replace(cfg, schedule="constant")) == 1.0
    assert lr_at(10, 100, replace(cfg, schedule="transformer")) == pytest.approx(TRANSFORMER_LEARNING_RATE)


def test_batches_cover_every_sentence_once_under_caps(data):
    sents = data.sentences()
    cfg = TrainConfig(batch_size=7, max_batch_tokens=60)
    batches = make_batches(sents, cfg, np.random.default_rng(0))
    flat = sorted(i for b in batches for i in b)
    assert flat == list(range(len(sents)))
    for b in batches:
        assert len(b) <= 7
        assert len(b) == 1 or sum(len(sents[i]) for i in b) <= 60


def test_config_validation_and_from_dict():
    with pytest.raises(ValueError):
        TrainConfig(schedule="cosine")
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")
    cfg = TrainConfig.from_dict({"epochs": 2, "eer": {"rho": 0.3, "gamma": 0.0, "lambda_u": 1.0}})
    assert cfg.eer == EerConfig(0.3, 0.0, 1.0)
    assert with_eer(cfg, gamma=0.1).eer.gamma == 0.1


def test_training_reduces_the_loss(data):
    _, report = train(data, SMALL, replace(QUICK, epochs=6))
    assert report.epochs[-1].loss < report.epochs[0].loss
    assert [e.epoch for e in report.epochs] == list(range(1, 7))


def _strip(report):
    return [{k: v for k, v in e.items() if k != "wall_time"} for e in report.to_json()]


@pytest.mark.parametrize("optimizer", ["adam", "sgd"])
def test_fixed_seed_runs_are_bit_identical(data, optimizer):
    cfg = replace(QUICK, optimizer=optimizer)
    a, ra = train(data, SMALL, cfg)
    b, rb = train(data, SMALL, cfg)
    for k in PARAM_NAMES:
        assert np.array_equal(a.params[k], b.params[k])
    assert _strip(ra) == _strip(rb)


def test_resume_matches_an_uninterrupted_run(data, tmp_path):
    full, rfull = train(data, SMALL, QUICK)
    train(data, SMALL, QUICK, checkpoint_dir=tmp_path, stop_after_epoch=1)
    resumed, rres = train(data, SMALL, QUICK, checkpoint_dir=tmp_path, resume=tmp_path)
    for k in PARAM_NAMES:
        assert np.array_equal(full.params[k], resumed.params[k])
    assert _strip(rfull) == _strip(rres)
    assert {p.name for p in tmp_path.iterdir()} >= {"model.npz", "optimizer.npz", "state.json", "train_config.json"}


def test_jsonl_log_has_one_line_per_epoch(data, tmp_path):
    log = tmp_path / "log.jsonl"
    train(data, SMALL, QUICK, log_path=log)
    assert len(log.read_text().splitlines()) == QUICK.epochs


def test_divergence_is_reported(data):
    cfg = replace(QUICK, learning_rate=1e200, schedule="constant", epochs=2)
    with pytest.raises(TrainingDiverged, match="parameter norms"):
        with np.errstate(all="ignore"):
            train(data, SMALL, cfg)


def test_empty_training_set_is_rejected(data):
    with pytest.raises(ValueError):
        train(data.replace(()), SMALL, QUICK)


def test_dev_scores_are_recorded(data):
    _, report = train(data, SMALL, replace(QUICK, epochs=1), dev=data)
    assert 0.0 <= report.epochs[0].dev_f1 <= 1.0
