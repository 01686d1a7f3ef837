"""Autoregressive generation with temperature-controlled softmax sampling.

Each step samples the direction and speed codes from two independent
categorical distributions softmax(logits / temperature) and feeds the
sampled pair back as the next input. Generation ends when the direction
head emits its stop class or after n_max frames. Everything is a pure
function of (checkpoint, inputs, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels, model
from .codec import FrameSequence
from .model import STOP_CLASS, StyleVector


@dataclass(frozen=True)
class SamplerConfig:
    temperature: float = 0.5
    n_max: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")


def sample_categorical(rng, logits, temperature) -> int:
    """Draw one class index from softmax(logits / temperature)."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1) / temperature
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    idx = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    return min(idx, p.size - 1)


def _stack_step(cells, x, hs) -> list:
    """Advance every GRU layer one step; returns the new hidden list."""
    out = []
    inp = x
    for cell, h in zip(cells, hs):
        h_new, _, _, _, _ = kernels.gru_cell_forward(inp, h, *cell.raw())
        out.append(h_new)
        inp = h_new
    return out


def _generate_frames(params, bias_row, cfg: SamplerConfig) -> tuple:
    rng = np.random.default_rng(cfg.seed)
    cells = params.decoder.cells
    hs = [np.zeros((1, c.hidden_size)) for c in cells]
    embed = params.embed.data
    wd, bd = params.head_dir_w.data, params.head_dir_b.data
    ws, bs = params.head_speed_w.data, params.head_speed_b.data

    dirs, speeds = [], []
    x = bias_row.reshape(1, -1)
    while len(dirs) < cfg.n_max:
        hs = _stack_step(cells, x, hs)
        top = hs[-1]
        dir_logits = top @ wd + bd
        d = sample_categorical(rng, dir_logits, cfg.temperature)
        if d == STOP_CLASS:
            if not dirs:
                # A zero-length drawing is meaningless; resample the first
                # step from the real code classes only.
                d = sample_categorical(rng, dir_logits[:, :STOP_CLASS], cfg.temperature)
            else:
                break
        speed_logits = top @ ws + bs
        s = sample_categorical(rng, speed_logits, cfg.temperature)
        dirs.append(d)
        speeds.append(s)
        x = (embed[d] + embed[model.N_LEVELS + s]).reshape(1, -1)
    return np.array(dirs, dtype=np.int64), np.array(speeds, dtype=np.int64)


def generate(checkpoint, style: StyleVector, letter, cfg: SamplerConfig,
             init_like: FrameSequence | None = None) -> FrameSequence:
    """Sample one drawing from an autoencoder checkpoint.

    The style vector is the decoder's bias step. init_like donates the
    reconstruction metadata (origin, initial heading/speed); without it,
    neutral defaults are used.
    """
    params = checkpoint.params
    if not isinstance(params, model.AutoencoderParams):
        raise ValueError("generate needs an autoencoder checkpoint; see generate_baseline")
    if style.dim != params.d_bias:
        raise ValueError(f"style dim {style.dim} != model d_bias {params.d_bias}")
    dirs, speeds = _generate_frames(params, style.values, cfg)
    return _wrap_frames(checkpoint, letter, dirs, speeds, init_like)


def generate_baseline(checkpoint, writer_id, letter, cfg: SamplerConfig,
                      init_like: FrameSequence | None = None) -> tuple:
    """Sample from a baseline checkpoint; returns (frames, used_fallback)."""
    params = checkpoint.params
    if not isinstance(params, model.BaselineParams):
        raise ValueError("generate_baseline needs a baseline checkpoint")
    bias, fallback = model.baseline_bias_graph(params, [writer_id], [letter])
    dirs, speeds = _generate_frames(params, bias.data[0], cfg)
    return _wrap_frames(checkpoint, letter, dirs, speeds, init_like), bool(fallback[0])


def _wrap_frames(checkpoint, letter, dirs, speeds, init_like) -> FrameSequence:
    if init_like is not None:
        heading = init_like.initial_heading
        speed = init_like.initial_speed
        origin = init_like.origin
        rate = init_like.sample_rate_hz
    else:
        heading = 0.0
        speed = 0.5 * checkpoint.quantizer.v_max
        origin = (0.0, 0.0)
        rate = 100.0
    return FrameSequence(
        letter=letter, dir_codes=dirs, speed_codes=speeds,
        initial_heading=heading, initial_speed=speed, origin=origin,
        sample_rate_hz=rate, n_levels=checkpoint.quantizer.n_levels,
    )


def reconstruct_letter(checkpoint, fs: FrameSequence, cfg: SamplerConfig) -> FrameSequence:
    """Encode a ground-truth sequence and regenerate it from its own style."""
    style = model.encode_style(checkpoint.params, fs)
    return generate(checkpoint, style, fs.letter, cfg, init_like=fs)
