import math
import struct

import numpy as np
import pytest

from conftest import micro_config, micro_model, small_spec
from tagseq import autograd as ag
from tagseq.checkpoint import MAGIC, from_bytes, load_checkpoint, save_checkpoint, to_bytes
from tagseq.config import load_config
from tagseq.corpus import EOS_ID, PAD_ID
from tagseq.errors import CheckpointError, ContractError, TrainingDivergedError
from tagseq.model import make_batch
from tagseq.synth import synth_corpus
from tagseq.training import Adam, clip_gradients, learning_rate, teacher_forced_loss, train, write_loss_log

PAIRS = [([5, 6, 7], [5, 2, 6, 2, EOS_ID]), ([8, 9], [7, 2, EOS_ID]), ([5, 9, 10, 11], [6, 2, EOS_ID])]


@pytest.fixture(scope="module")
def corpus():
    return synth_corpus(small_spec(), seed=3)


def desk(**kw):
    return load_config(overrides={"preset": "desk", **kw}).train


def test_fresh_model_loss_is_log_vocab():
    model = micro_model("L2A", n_tgt=20)
    loss = teacher_forced_loss(model, make_batch(PAIRS)).item()
    assert loss == pytest.approx(math.log(20), abs=0.05)


def test_padding_positions_are_ignored():
    model = micro_model("A2A")
    batch = make_batch(PAIRS)
    loss = model.loss(batch).item()
    pad = np.full((3, 5), PAD_ID)
    batch.tgt_in = np.concatenate([batch.tgt_in, pad], axis=1)
    batch.tgt_out = np.concatenate([batch.tgt_out, pad], axis=1)
    batch.weights = np.concatenate([batch.weights, np.zeros((3, 5))], axis=1)
    assert model.loss(batch).item() == pytest.approx(loss, abs=1e-9)


def test_loss_invariant_to_example_order():
    model = micro_model("L2A")
    a = model.loss(make_batch(PAIRS)).item()
    b = model.loss(make_batch(PAIRS[::-1])).item()
    assert a == pytest.approx(b, abs=1e-9)


def test_empty_batch():
    with pytest.raises(ContractError):
        make_batch([])


def test_zero_learning_rate_leaves_params_bit_identical():
    model = micro_model("L2A")
    before = {k: p.data.copy() for k, p in model.params.items()}
    loss = model.loss(make_batch(PAIRS))
    ag.backward(loss, model.params.values())
    Adam(model.params).step(model.params, 0.0)
    assert all(np.array_equal(before[k], p.data) for k, p in model.params.items())


def test_learning_rate_schedule():
    cfg = micro_config(lr=1e-3, warmup=100)
    assert learning_rate(cfg, 50) == pytest.approx(5e-4)
    assert learning_rate(cfg, 100) == pytest.approx(1e-3)
    assert learning_rate(cfg, 400) == pytest.approx(5e-4)


def test_gradient_clipping():
    p = ag.parameter(np.zeros(2))
    p.grad = np.array([3.0, 4.0])
    assert clip_gradients({"p": p}, 1.0) == pytest.approx(5.0)
    assert np.linalg.norm(p.grad) == pytest.approx(1.0)


def test_loss_decreases_over_first_epochs(corpus):
    log = train(corpus.train, desk(max_epochs=5)).log
    losses = [r.train_loss for r in log]
    assert all(b < a for a, b in zip(losses, losses[1:])), losses


def test_same_seed_same_log_and_params(corpus):
    a = train(corpus.train, desk(max_epochs=2, order="random"))
    b = train(corpus.train, desk(max_epochs=2, order="random"))
    assert [r.train_loss for r in a.log] == [r.train_loss for r in b.log]
    assert all(np.array_equal(a.model.params[k].data, b.model.params[k].data) for k in a.model.params)
    c = train(corpus.train, desk(max_epochs=2, order="random", seed=1))
    assert [r.train_loss for r in c.log] != [r.train_loss for r in a.log]


def test_best_dev_checkpoint_is_kept(corpus):
    result = train(corpus.train, desk(max_epochs=4, lr=2e-2, warmup=1), corpus.dev)
    devs = [r.dev_loss for r in result.log]
    best = min(devs)
    assert devs[result.best_epoch - 1] == best <= devs[-1]
    from tagseq.training import corpus_loss, prepare_examples
    from tagseq.model import derive_rng

    m = result.model
    pairs = prepare_examples(corpus.dev, m.src_vocab, m.tgt_vocab, m.freq, "asc", derive_rng(0, "dev"))
    assert corpus_loss(m, pairs) == pytest.approx(best, abs=1e-12)


def test_divergence_names_the_step(corpus):
    from tagseq.training import fit_vocabularies
    from tagseq.model import TagModel

    cfg = desk(max_epochs=1)
    model = TagModel(cfg, *fit_vocabularies(corpus.train, cfg))
    model.params["out.b"].data[:] = np.nan
    with pytest.raises(TrainingDivergedError, match="epoch 1, step 1"):
        train(corpus.train, cfg, model=model)


def test_loss_log_csv(tmp_path, corpus):
    result = train(corpus.train[:10], desk(max_epochs=2), corpus.dev[:4])
    write_loss_log(result.log, tmp_path / "loss.csv")
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,dev_loss" and len(lines) == 3
    assert float(lines[1].split(",")[2]) == result.log[0].dev_loss


# --------------------------------------------------------------- checkpoints


@pytest.mark.parametrize("variant", ["L2A", "L2L", "A2A", "A2L"])
def test_checkpoint_round_trip(tmp_path, rng, variant):
    model = micro_model(variant)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.config == model.config and loaded.src_vocab == model.src_vocab
    batch = make_batch([(list(rng.integers(5, 12, 4)), [5, 2, EOS_ID])])
    a, b = model.logits(batch).data, loaded.logits(batch).data
    assert np.max(np.abs(a - b)) / np.max(np.abs(a)) <= 1e-5
    save_checkpoint(loaded, tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_truncated_checkpoint():
    raw = to_bytes(micro_model())
    for cut in (3, 30, len(raw) - 1):
        with pytest.raises(CheckpointError):
            from_bytes(raw[:cut])


def test_bad_magic_and_version():
    raw = to_bytes(micro_model())
    with pytest.raises(CheckpointError, match="expected .*found"):
        from_bytes(b"NOTMAGIC" + raw[8:])
    bumped = raw[:8] + struct.pack("<I", 99) + raw[12:]
    with pytest.raises(CheckpointError, match="expected 1, found 99"):
        from_bytes(bumped)
    assert raw.startswith(MAGIC)
