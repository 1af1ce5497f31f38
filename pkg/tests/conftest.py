import numpy as np
import pytest

from tagseq.config import TrainConfig
from tagseq.corpus import Vocab
from tagseq.model import TagModel
from tagseq.synth import SynthSpec

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def micro_config(variant="L2A", **kw):
    base = dict(d_model=16, heads=2, d_ff=32, dec_layers=4, variant=variant, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def micro_model(variant="L2A", n_src=12, n_tgt=10, **kw):
    src = Vocab([f"s{i}" for i in range(n_src - 5)], "source")
    tgt = Vocab([f"t{i}" for i in range(n_tgt - 5)], "target")
    return TagModel(micro_config(variant, **kw), src, tgt)


def condition_params(model, seed=0):
    """Replace the (tiny) default init with well-scaled random values.

    Finite differences need gradients well above float noise; the default
    output projection is small enough that deep gradients sit near 1e-9.
    Layer-norm gains stay near 1 so attention does not collapse.
    """
    rng = np.random.default_rng(seed)
    for name, p in model.params.items():
        if name.endswith(".g"):
            p.data = 1.0 + rng.uniform(-0.3, 0.3, p.shape)
        elif ".ln" in name:
            p.data = rng.uniform(-0.1, 0.1, p.shape)
        else:
            p.data = rng.uniform(-0.5, 0.5, p.shape)
    return model


def small_spec(**kw):
    """50-document corpus with no held-out compositions (overfit runs)."""
    base = dict(
        n_categories=4, n_entities=10, entity_pool=15, n_compositions=20,
        held_out=0.0, n_train=50, n_dev=10, n_test=0, filler_vocab=60,
    )
    base.update(kw)
    return SynthSpec(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
