import numpy as np
import pytest

from penstyle import traceio, trainer


def random_trace(rng, n_points=12, letter="X", writer="w0", rate=100.0):
    """A jittery random-walk trace with strictly increasing timestamps."""
    steps = rng.normal(0.0, 0.05, size=(n_points - 1, 2)) + np.array([0.08, 0.02])
    xy = np.vstack([[0.0, 0.0], np.cumsum(steps, axis=0)])
    t = np.arange(n_points) / rate
    return traceio.Trace(
        writer_id=writer, letter=letter, points=np.column_stack([xy, t]),
        sample_rate_hz=rate,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def memorized_run():
    """One drawing memorized to near-zero loss (shared: training is slow)."""
    tr = traceio.synth_trace(traceio.SynthStyleSpec("X", jitter=0.0, seed=0), "w0")
    tv = traceio.synth_trace(traceio.SynthStyleSpec("X", jitter=0.0, seed=0), "w1")
    corpus = traceio.Corpus((tr, tv), ("train", "val"))
    config = trainer.TrainConfig(hidden=48, d_bias=8, batch_size=1, max_epochs=800,
                                 decoder_dropout=0.0, lr=0.003, seed=3)
    checkpoint = trainer.train(corpus, config)
    return tr, checkpoint
