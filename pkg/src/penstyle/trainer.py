"""Teacher-forced training with early stopping and binary checkpoints.

Per-feature loss is the mean step NLL over the batch's valid steps; the
total is the average of the direction and speed feature losses, so
uniform 16-class predictions score ln 16. Training stops after
early_stop_patience epochs without validation improvement and always
returns the best-validation parameter snapshot.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import codec, model
from .codec import QuantizerConfig
from .neural import autodiff as ad
from .neural.autodiff import Tensor
from .neural.optim import Adam
from .traceio import Corpus

CHECKPOINT_MAGIC = b"STYL1"
CHECKPOINT_VERSION = 1


class NonFiniteLossError(ArithmeticError):
    """Training produced a NaN or infinite loss."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    hidden: int = 128
    encoder_layers: int = 2
    decoder_layers: int = 2
    encoder_dropout: float = 0.0
    decoder_dropout: float = 0.2
    d_bias: int = 32
    batch_size: int = 32
    early_stop_patience: int = 20
    max_epochs: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.hidden <= 0 or self.batch_size <= 0:
            raise ValueError("lr, hidden and batch_size must be positive")
        if not (0 <= self.encoder_dropout < 1 and 0 <= self.decoder_dropout < 1):
            raise ValueError("dropout must lie in [0, 1)")
        if self.early_stop_patience < 1 or self.max_epochs < 1:
            raise ValueError("patience and max_epochs must be at least 1")


def sequence_loss(dir_logits, speed_logits, fs) -> float:
    """Eq.-style total loss of one sequence from per-step logits.

    Accepts (T, 16) heads, or the training-shaped (T+1, 17) direction
    logits whose extra step is scored against the stop class (the speed
    head's extra row, if present, is ignored).
    """
    from .kernels import softmax_nll_forward

    T = fs.T
    dir_logits = np.asarray(dir_logits, dtype=np.float64)
    speed_logits = np.asarray(speed_logits, dtype=np.float64)
    if dir_logits.shape == (T, model.N_LEVELS):
        dir_targets = fs.dir_codes
    elif dir_logits.shape == (T + 1, model.DIR_CLASSES):
        dir_targets = np.concatenate([fs.dir_codes, [model.STOP_CLASS]])
    else:
        raise ValueError(f"direction logits shape {dir_logits.shape} does not cover T={T}")
    if speed_logits.shape[0] == T + 1:
        speed_logits = speed_logits[:T]
    if speed_logits.shape != (T, model.N_LEVELS):
        raise ValueError(f"speed logits shape {speed_logits.shape} does not cover T={T}")
    dir_nll, _ = softmax_nll_forward(dir_logits, np.asarray(dir_targets, dtype=np.int64))
    speed_nll, _ = softmax_nll_forward(speed_logits, fs.speed_codes)
    return float((dir_nll.mean() + speed_nll.mean()) / 2.0)


def batch_loss_terms(params, batch, config: TrainConfig, training, rng):
    """Graph loss plus raw NLL sums/counts for one batch.

    batch is a list of (FrameSequence, writer_id). Returns
    (loss_tensor, dir_sum, dir_count, speed_sum, speed_count).
    """
    seqs = [fs for fs, _ in batch]
    writer_ids = [w for _, w in batch]
    letters = [fs.letter for fs in seqs]
    dirs, speeds, lengths = model.pack_sequences(seqs)
    if isinstance(params, model.BaselineParams):
        bias, _ = model.baseline_bias_graph(params, writer_ids, letters)
    else:
        bias = model.encode_styles_graph(
            params, dirs, speeds, lengths, letters,
            training=training, rng=rng, dropout_p=config.encoder_dropout,
        )
    (dir_logits, speed_logits,
     dir_t, dir_m, speed_t, speed_m) = model.decoder_logits_graph(
        params, bias, dirs, speeds, lengths,
        training=training, rng=rng, dropout_p=config.decoder_dropout,
    )
    dir_sum = ad.softmax_nll_sum(dir_logits, dir_t, dir_m)
    speed_sum = ad.softmax_nll_sum(speed_logits, speed_t, speed_m)
    n_dir = float(dir_m.sum())
    n_speed = float(speed_m.sum())
    loss = ad.scale(
        ad.add(ad.scale(dir_sum, 1.0 / n_dir), ad.scale(speed_sum, 1.0 / n_speed)), 0.5
    )
    return loss, dir_sum.item(), n_dir, speed_sum.item(), n_speed


def dataset_loss(params, data, config: TrainConfig) -> float:
    """Pooled TotalLoss over a dataset, evaluation mode (no dropout)."""
    dir_sum = dir_n = speed_sum = speed_n = 0.0
    for start in range(0, len(data), config.batch_size):
        batch = data[start : start + config.batch_size]
        _, ds, dn, ss, sn = batch_loss_terms(params, batch, config, training=False, rng=None)
        dir_sum += ds
        dir_n += dn
        speed_sum += ss
        speed_n += sn
    return 0.5 * (dir_sum / dir_n + speed_sum / speed_n)


def _prepare(corpus: Corpus, split, quantizer) -> list:
    traces = corpus.subset(split)
    return [(codec.encode(t, quantizer), t.writer_id) for t in traces]


def _train_impl(kind, corpus, config, on_epoch=None, _val_loss_fn=None):
    train_traces = corpus.subset("train")
    val_traces = corpus.subset("val")
    if not train_traces:
        raise ValueError("train split is empty")
    if not val_traces:
        raise ValueError("val split is empty")

    quantizer = codec.calibrate(train_traces, n_levels=model.N_LEVELS)
    train_data = _prepare(corpus, "train", quantizer)
    val_data = _prepare(corpus, "val", quantizer)

    seeds = np.random.SeedSequence(config.seed).spawn(3)
    init_rng = np.random.default_rng(seeds[0])
    shuffle_rng = np.random.default_rng(seeds[1])
    dropout_rng = np.random.default_rng(seeds[2])

    if kind == "baseline":
        writers = sorted({w for _, w in train_data})
        params = model.BaselineParams.init(
            init_rng, writers, hidden=config.hidden, d_bias=config.d_bias,
            decoder_layers=config.decoder_layers,
        )
    else:
        params = model.AutoencoderParams.init(
            init_rng, hidden=config.hidden, d_bias=config.d_bias,
            encoder_layers=config.encoder_layers, decoder_layers=config.decoder_layers,
        )
    named = list(params.named_params())
    opt = Adam(named, lr=config.lr)

    best_val = np.inf
    best_epoch = 0
    best_snapshot = None
    stall = 0
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(train_data))
        epoch_dir = epoch_dn = epoch_speed = epoch_sn = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [train_data[i] for i in order[start : start + config.batch_size]]
            loss, ds, dn, ss, sn = batch_loss_terms(
                params, batch, config, training=True, rng=dropout_rng
            )
            value = loss.item()
            if not np.isfinite(value):
                raise NonFiniteLossError(
                    f"non-finite training loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            ad.backward(loss)
            opt.step()
            epoch_dir += ds
            epoch_dn += dn
            epoch_speed += ss
            epoch_sn += sn
        train_loss = 0.5 * (epoch_dir / epoch_dn + epoch_speed / epoch_sn)

        if _val_loss_fn is not None:
            val_loss = float(_val_loss_fn(epoch))
        else:
            val_loss = dataset_loss(params, val_data, config)
        if not np.isfinite(val_loss):
            raise NonFiniteLossError(f"non-finite validation loss at epoch {epoch}")
        if on_epoch is not None:
            on_epoch({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})

        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_snapshot = [(name, p.data.copy()) for name, p in named]
            stall = 0
        else:
            stall += 1
            if stall >= config.early_stop_patience:
                break

    for (name, p), (snap_name, data) in zip(named, best_snapshot):
        assert name == snap_name
        p.data = data

    rng_state = {
        "shuffle": shuffle_rng.bit_generator.state,
        "dropout": dropout_rng.bit_generator.state,
    }
    return Checkpoint(
        kind=kind, params=params, quantizer=quantizer, config=config,
        epoch=best_epoch, best_val_loss=float(best_val), rng_state=rng_state,
    )


def train(corpus: Corpus, config: TrainConfig, on_epoch=None, _val_loss_fn=None):
    """Train the conditioned autoencoder; returns the best-val checkpoint."""
    return _train_impl("autoencoder", corpus, config, on_epoch, _val_loss_fn)


def train_baseline(corpus: Corpus, config: TrainConfig, on_epoch=None, _val_loss_fn=None):
    """Train the letter + writer bias benchmark model."""
    return _train_impl("baseline", corpus, config, on_epoch, _val_loss_fn)


@dataclass
class Checkpoint:
    """Best-validation model state plus everything needed to reuse it."""

    kind: str
    params: object
    quantizer: QuantizerConfig
    config: TrainConfig
    epoch: int
    best_val_loss: float
    rng_state: dict

    def save(self, path) -> None:
        named = list(self.params.named_params())
        header = {
            "version": CHECKPOINT_VERSION,
            "kind": self.kind,
            "quantizer": {"n_levels": self.quantizer.n_levels, "v_max": self.quantizer.v_max},
            "config": asdict(self.config),
            "epoch": self.epoch,
            "best_val_loss": self.best_val_loss,
            "rng_state": self.rng_state,
            "writers": list(getattr(self.params, "writers", ())),
            "params": [
                {"name": name, "rows": p.data.shape[0], "cols": p.data.shape[1]}
                for name, p in named
            ],
        }
        blob = json.dumps(header).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            for _, p in named:
                fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            magic = fh.read(len(CHECKPOINT_MAGIC))
            if magic != CHECKPOINT_MAGIC:
                raise ValueError(f"not a checkpoint file (bad magic {magic!r})")
            (header_len,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(header_len).decode("utf-8"))
            if header["version"] != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {header['version']}")
            config = TrainConfig(**header["config"])
            rng = np.random.default_rng(0)  # placeholder weights, overwritten below
            if header["kind"] == "baseline":
                params = model.BaselineParams.init(
                    rng, header["writers"], hidden=config.hidden, d_bias=config.d_bias,
                    decoder_layers=config.decoder_layers,
                )
            else:
                params = model.AutoencoderParams.init(
                    rng, hidden=config.hidden, d_bias=config.d_bias,
                    encoder_layers=config.encoder_layers,
                    decoder_layers=config.decoder_layers,
                )
            named = dict(params.named_params())
            for entry in header["params"]:
                n = entry["rows"] * entry["cols"]
                raw = fh.read(n * 8)
                if len(raw) != n * 8:
                    raise ValueError("checkpoint truncated")
                arr = np.frombuffer(raw, dtype="<f8").reshape(entry["rows"], entry["cols"])
                named[entry["name"]].data = np.ascontiguousarray(arr)
        quant = QuantizerConfig(**header["quantizer"])
        return cls(
            kind=header["kind"], params=params, quantizer=quant, config=config,
            epoch=header["epoch"], best_val_loss=header["best_val_loss"],
            rng_state=header["rng_state"],
        )
