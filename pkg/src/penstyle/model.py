"""The conditioned sequence autoencoder and the writer/letter-bias baseline.

Autoencoder: a 2-layer GRU encoder reads the one-hot frame sequence; its
final top-layer hidden state, concatenated with the letter one-hot, is
projected down to a low-dimensional style vector. The decoder is a 2-layer
GRU whose input sequence starts with that style vector as an extra "bias"
time step, followed by the embedded ground-truth frames; two dense heads
emit per-step direction and speed logits. The direction head carries a
17th stop class so generation can terminate on its own.

Baseline ("letter + writer bias"): the bias step is built from learned
writer and letter embedding tables instead of an encoder. Writers unseen
at training time fall back to the mean writer embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import FrameSequence
from .neural import autodiff as ad
from .neural.autodiff import Tensor
from .neural.layers import GruStackParams, dense, run_stack, uniform_init
from .traceio import LETTERS

N_LEVELS = 16
FRAME_DIM = 2 * N_LEVELS
STOP_CLASS = N_LEVELS  # extra class in the direction head
DIR_CLASSES = N_LEVELS + 1
N_LETTERS = 26

WRITER_EMBED_DIM = 32
LETTER_EMBED_DIM = 16


@dataclass(frozen=True)
class StyleVector:
    """Low-dimensional style bottleneck for one trace."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.isfinite(v).all():
            raise ValueError("style vector must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.size


def letter_index(letter: str) -> int:
    idx = LETTERS.find(letter)
    if idx < 0:
        raise ValueError(f"letter must be A-Z, got {letter!r}")
    return idx


def letter_onehot(letters) -> np.ndarray:
    out = np.zeros((len(letters), N_LETTERS))
    for i, letter in enumerate(letters):
        out[i, letter_index(letter)] = 1.0
    return out


def pack_sequences(seqs) -> tuple:
    """Pad frame sequences into (dirs, speeds, lengths) batch arrays.

    dirs and speeds are (B, T_max) int64, zero-padded past each length.
    """
    lengths = np.array([fs.T for fs in seqs], dtype=np.int64)
    t_max = int(lengths.max())
    dirs = np.zeros((len(seqs), t_max), dtype=np.int64)
    speeds = np.zeros((len(seqs), t_max), dtype=np.int64)
    for i, fs in enumerate(seqs):
        dirs[i, : fs.T] = fs.dir_codes
        speeds[i, : fs.T] = fs.speed_codes
    return dirs, speeds, lengths


def _onehot_steps(dirs, speeds, lengths) -> np.ndarray:
    """Step-major (T*B, 32) one-hot encoder inputs; padded rows stay zero."""
    B, T = dirs.shape
    out = np.zeros((T * B, FRAME_DIM))
    step = np.repeat(np.arange(T), B)
    seq = np.tile(np.arange(B), T)
    valid = step < lengths[seq]
    rows = np.nonzero(valid)[0]
    out[rows, dirs[seq[valid], step[valid]]] = 1.0
    out[rows, N_LEVELS + speeds[seq[valid], step[valid]]] = 1.0
    return out


def length_mask(lengths, T) -> np.ndarray:
    """(T, B) float mask, 1 while a sequence is still running."""
    return (np.arange(T)[:, None] < np.asarray(lengths)[None, :]).astype(np.float64)


@dataclass
class AutoencoderParams:
    """All learnable weights of the conditioned autoencoder."""

    hidden: int
    d_bias: int
    encoder: GruStackParams
    proj_w: Tensor
    proj_b: Tensor
    embed: Tensor
    decoder: GruStackParams
    head_dir_w: Tensor
    head_dir_b: Tensor
    head_speed_w: Tensor
    head_speed_b: Tensor

    @classmethod
    def init(cls, rng, hidden=128, d_bias=32, encoder_layers=2, decoder_layers=2):
        if not d_bias < hidden:
            raise ValueError("d_bias must be smaller than the encoder hidden size")
        concat = hidden + N_LETTERS
        return cls(
            hidden=hidden,
            d_bias=d_bias,
            encoder=GruStackParams.init(FRAME_DIM, hidden, encoder_layers, rng),
            proj_w=Tensor(uniform_init(rng, concat, d_bias, concat), requires_grad=True),
            proj_b=Tensor(np.zeros((1, d_bias)), requires_grad=True),
            embed=Tensor(uniform_init(rng, FRAME_DIM, d_bias, FRAME_DIM), requires_grad=True),
            decoder=GruStackParams.init(d_bias, hidden, decoder_layers, rng),
            head_dir_w=Tensor(uniform_init(rng, hidden, DIR_CLASSES, hidden), requires_grad=True),
            head_dir_b=Tensor(np.zeros((1, DIR_CLASSES)), requires_grad=True),
            head_speed_w=Tensor(uniform_init(rng, hidden, N_LEVELS, hidden), requires_grad=True),
            head_speed_b=Tensor(np.zeros((1, N_LEVELS)), requires_grad=True),
        )

    def named_params(self):
        yield from self.encoder.named("encoder")
        yield "proj_w", self.proj_w
        yield "proj_b", self.proj_b
        yield "embed", self.embed
        yield from self.decoder.named("decoder")
        yield "head_dir_w", self.head_dir_w
        yield "head_dir_b", self.head_dir_b
        yield "head_speed_w", self.head_speed_w
        yield "head_speed_b", self.head_speed_b


def encode_styles_graph(params: AutoencoderParams, dirs, speeds, lengths, letters,
                        training=False, rng=None, dropout_p=0.0) -> Tensor:
    """Differentiable batched style extraction; returns a (B, d_bias) tensor."""
    B, T = dirs.shape
    onehots = Tensor(_onehot_steps(dirs, speeds, lengths))
    mask = length_mask(lengths, T)
    out = run_stack(
        params.encoder, onehots, T, B, mask=mask,
        dropout_p=dropout_p if training else 0.0, rng=rng, training=training,
    )
    final = ad.slice_rows(out, (T - 1) * B, T * B)  # frozen, so this is per-sequence final
    combined = ad.concat_cols(final, Tensor(letter_onehot(letters)))
    return dense(combined, params.proj_w, params.proj_b)


def encode_style(params: AutoencoderParams, fs: FrameSequence) -> StyleVector:
    """Style vector of one trace. Deterministic: the encoder runs without dropout."""
    dirs, speeds, lengths = pack_sequences([fs])
    bias = encode_styles_graph(params, dirs, speeds, lengths, [fs.letter])
    return StyleVector(bias.data[0].copy())


def decoder_logits_graph(params, bias: Tensor, dirs, speeds, lengths,
                         training=False, rng=None, dropout_p=0.0) -> tuple:
    """Teacher-forced decoder pass over a packed batch.

    The decoder input is the bias step followed by the embedded ground
    truth frames; step s predicts frame s+1, and the step after each
    sequence's last frame predicts the stop class. Returns
    (dir_logits, speed_logits, dir_targets, dir_mask, speed_targets,
    speed_mask); logits are step-major (T+1)*B tensors.
    """
    B, T = dirs.shape
    t_dec = T + 1
    fi = dirs.T.ravel()  # step-major frame indices for steps 1..T
    si = speeds.T.ravel()
    embeds = ad.embed_pairs(params.embed, fi, si, offset=N_LEVELS)
    inputs = ad.concat_rows(bias, embeds)
    hidden = run_stack(
        params.decoder, inputs, t_dec, B,
        dropout_p=dropout_p if training else 0.0, rng=rng, training=training,
    )
    dir_logits = dense(hidden, params.head_dir_w, params.head_dir_b)
    speed_logits = dense(hidden, params.head_speed_w, params.head_speed_b)

    s_idx = np.arange(t_dec)[:, None]
    L = np.asarray(lengths)[None, :]
    padded_d = np.zeros((t_dec, B), dtype=np.int64)
    padded_d[:T] = dirs.T
    padded_s = np.zeros((t_dec, B), dtype=np.int64)
    padded_s[:T] = speeds.T
    dir_targets = np.where(s_idx < L, padded_d, np.where(s_idx == L, STOP_CLASS, 0))
    dir_mask = (s_idx <= L).astype(np.float64)
    speed_targets = np.where(s_idx < L, padded_s, 0)
    speed_mask = (s_idx < L).astype(np.float64)
    return (dir_logits, speed_logits,
            dir_targets.ravel(), dir_mask.ravel(),
            speed_targets.ravel(), speed_mask.ravel())


def decoder_forward(params: AutoencoderParams, style: StyleVector, fs: FrameSequence,
                    training=False, rng=None, dropout_p=0.0) -> tuple:
    """Per-step prediction logits for one sequence under teacher forcing.

    Input is the bias step plus embedded frames x_1..x_{T-1}; row t of the
    output predicts frame x_{t+1}. Returns (dir, speed) arrays, each
    (T, 16); the stop logit column is internal to training and excluded
    here.
    """
    if style.dim != params.d_bias:
        raise ValueError(f"style dim {style.dim} != model d_bias {params.d_bias}")
    if fs.T < 1:
        raise ValueError("empty frame sequence")
    T = fs.T
    bias = Tensor(style.values.reshape(1, -1))
    if T == 1:
        inputs = bias
    else:
        embeds = ad.embed_pairs(
            params.embed, fs.dir_codes[:-1], fs.speed_codes[:-1], offset=N_LEVELS
        )
        inputs = ad.concat_rows(bias, embeds)
    hidden = run_stack(
        params.decoder, inputs, T, 1,
        dropout_p=dropout_p if training else 0.0, rng=rng, training=training,
    )
    dir_logits = dense(hidden, params.head_dir_w, params.head_dir_b)
    speed_logits = dense(hidden, params.head_speed_w, params.head_speed_b)
    return dir_logits.data[:, :N_LEVELS].copy(), speed_logits.data.copy()


@dataclass
class BaselineParams:
    """Letter + writer embedding bias model (benchmark)."""

    hidden: int
    d_bias: int
    writers: tuple
    writer_table: Tensor
    letter_table: Tensor
    proj_w: Tensor
    proj_b: Tensor
    embed: Tensor
    decoder: GruStackParams
    head_dir_w: Tensor
    head_dir_b: Tensor
    head_speed_w: Tensor
    head_speed_b: Tensor

    @classmethod
    def init(cls, rng, writers, hidden=128, d_bias=32, decoder_layers=2):
        writers = tuple(sorted(writers))
        concat = WRITER_EMBED_DIM + LETTER_EMBED_DIM
        return cls(
            hidden=hidden,
            d_bias=d_bias,
            writers=writers,
            writer_table=Tensor(
                uniform_init(rng, len(writers), WRITER_EMBED_DIM, WRITER_EMBED_DIM),
                requires_grad=True,
            ),
            letter_table=Tensor(
                uniform_init(rng, N_LETTERS, LETTER_EMBED_DIM, LETTER_EMBED_DIM),
                requires_grad=True,
            ),
            proj_w=Tensor(uniform_init(rng, concat, d_bias, concat), requires_grad=True),
            proj_b=Tensor(np.zeros((1, d_bias)), requires_grad=True),
            embed=Tensor(uniform_init(rng, FRAME_DIM, d_bias, FRAME_DIM), requires_grad=True),
            decoder=GruStackParams.init(d_bias, hidden, decoder_layers, rng),
            head_dir_w=Tensor(uniform_init(rng, hidden, DIR_CLASSES, hidden), requires_grad=True),
            head_dir_b=Tensor(np.zeros((1, DIR_CLASSES)), requires_grad=True),
            head_speed_w=Tensor(uniform_init(rng, hidden, N_LEVELS, hidden), requires_grad=True),
            head_speed_b=Tensor(np.zeros((1, N_LEVELS)), requires_grad=True),
        )

    def named_params(self):
        yield "writer_table", self.writer_table
        yield "letter_table", self.letter_table
        yield "proj_w", self.proj_w
        yield "proj_b", self.proj_b
        yield "embed", self.embed
        yield from self.decoder.named("decoder")
        yield "head_dir_w", self.head_dir_w
        yield "head_dir_b", self.head_dir_b
        yield "head_speed_w", self.head_speed_w
        yield "head_speed_b", self.head_speed_b

    def writer_row(self, writer_id):
        """Index of a known writer, or None for the mean-embedding fallback."""
        try:
            return self.writers.index(writer_id)
        except ValueError:
            return None


def baseline_bias_graph(params: BaselineParams, writer_ids, letters) -> tuple:
    """(B, d_bias) bias tensor plus per-sequence fallback flags.

    Unknown writers select the mean of the writer table (uniform weights),
    which keeps the op differentiable and the batch uniform.
    """
    B = len(writer_ids)
    n = len(params.writers)
    sel = np.zeros((B, n))
    fallback = np.zeros(B, dtype=bool)
    for i, w in enumerate(writer_ids):
        row = params.writer_row(w)
        if row is None:
            sel[i, :] = 1.0 / n
            fallback[i] = True
        else:
            sel[i, row] = 1.0
    writer_rows = ad.matmul(Tensor(sel), params.writer_table)
    letter_rows = ad.matmul(Tensor(letter_onehot(letters)), params.letter_table)
    combined = ad.concat_cols(writer_rows, letter_rows)
    return dense(combined, params.proj_w, params.proj_b), fallback


def baseline_forward(params: BaselineParams, writer_id, letter, fs: FrameSequence,
                     training=False, rng=None, dropout_p=0.0) -> tuple:
    """Teacher-forced logits for the baseline; contract as decoder_forward.

    Returns (dir, speed, used_fallback): used_fallback flags an unknown
    writer served by the mean embedding.
    """
    bias, fallback = baseline_bias_graph(params, [writer_id], [letter])
    style = StyleVector(bias.data[0].copy())
    # decoder_forward only touches the decoder-side fields, which both
    # parameter bundles share.
    dir_logits, speed_logits = decoder_forward(
        params, style, fs, training=training, rng=rng, dropout_p=dropout_p
    )
    return dir_logits, speed_logits, bool(fallback[0])
