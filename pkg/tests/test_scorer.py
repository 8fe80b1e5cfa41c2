import json

import numpy as np
import pytest

from eerner.corpus import TagSet
from eerner.lattice import LatticeGradients
from eerner.scorer import (PARAM_NAMES, ScorerConfig, Tagger, Vocab, load_tagger, save_tagger, score_gradients,
                           score_sentence)
from oracles import central_difference, relative_error, tiny_tagger


def test_vocab_reserves_boundary_and_unknown():
    v = Vocab.build([["b", "a", "b"], ["c"]], min_count=2)
    assert v.words == ("<bnd>", "<unk>", "b")
    assert list(v.encode(["b", "zzz", "a"])) == [2, 1, 1]
    with pytest.raises(ValueError):
        Vocab(("a", "b"))


def test_shapes_and_seeded_init():
    ts = TagSet(("A", "B"))
    cfg = ScorerConfig(embed_dim=4, window=2, hidden_dim=5, rng_seed=3)
    t1 = Tagger.for_corpus(cfg, [["x", "y"]], ts)
    t2 = Tagger.for_corpus(cfg, [["x", "y"]], ts)
    assert t1.params["w_hidden"].shape == (5 * 4, 5)
    assert t1.params["w_out"].shape == (5, 9)
    for k in PARAM_NAMES:
        assert np.array_equal(t1.params[k], t2.params[k])
    lat = score_sentence(t1, ["x", "q", "y"])
    assert lat.unary.shape == (3, 9)
    assert not lat.transition.any()


def test_padding_does_not_change_scores():
    tagger = tiny_tagger(0)
    long, short = ["w1", "w2", "w3", "w4"], ["w5", "w0"]
    batch = tagger.lattices([long, short])
    np.testing.assert_array_equal(batch.unary[1, :2], tagger.lattices([short]).unary[0])


@pytest.mark.parametrize("window", [0, 1, 2])
def test_parameter_gradients_match_central_differences(window):
    tagger = tiny_tagger(4, window=window)
    tokens = ["w0", "w3", "w5", "w3"]
    rng = np.random.default_rng(9)
    adj = LatticeGradients(rng.standard_normal((4, 9)), rng.standard_normal((9, 9)))
    grads = score_gradients(tagger, tokens, adj)

    def f():
        lat = score_sentence(tagger, tokens)
        allowed = tagger.mask.allowed
        return float((lat.unary * adj.d_unary).sum() + (lat.transition * adj.d_transition * allowed).sum())
    for name in PARAM_NAMES:
        fd = central_difference(f, tagger.params[name])
        assert relative_error(grads[name], fd) < 1e-7, name


def test_adjoint_shape_errors():
    tagger = tiny_tagger(0)
    with pytest.raises(ValueError):
        score_gradients(tagger, ["w0", "w1"], LatticeGradients(np.zeros((3, 9)), np.zeros((9, 9))))
    _, cache = tagger.score_batch([tagger.encode(["w0"])])
    with pytest.raises(ValueError):
        tagger.batch_gradients(cache, LatticeGradients(np.zeros((1, 1, 9)), np.zeros((8, 8))))


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    tagger = tiny_tagger(2)
    save_tagger(tagger, tmp_path / "m.npz")
    back = load_tagger(tmp_path / "m.npz")
    assert back.config == tagger.config
    assert back.vocab == tagger.vocab and back.tagset == tagger.tagset
    for k in PARAM_NAMES:
        assert back.params[k].dtype == tagger.params[k].dtype
        assert np.array_equal(back.params[k], tagger.params[k])


def test_checkpoint_version_is_checked(tmp_path):
    tagger = tiny_tagger(2)
    meta = {"version": 99, "config": {}, "classes": [], "vocab": []}
    np.savez(tmp_path / "old.npz", __meta__=np.array(json.dumps(meta)), **tagger.params)
    with pytest.raises(ValueError, match="version"):
        load_tagger(tmp_path / "old.npz")


def test_copy_is_independent():
    tagger = tiny_tagger(1)
    other = tagger.copy()
    other.params["embed"][0, 0] += 1.0
    assert other.params["embed"][0, 0] != tagger.params["embed"][0, 0]
