"""Command-line pipeline: synth, ingest, train, generate, eval, latent, plot.

Every run writes its data outputs plus a manifest.json under --out. All
randomness flows from --seed, so identical invocations produce identical
data outputs (the manifest's wall-clock duration is the one exception).

Exit codes: 0 success, 1 I/O problem, 2 usage error, 3 numeric failure,
4 data mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, codec, evalmetrics, latent, model, sampler, svg, traceio, trainer
from .evalmetrics import PairingError
from .trainer import NonFiniteLossError, TrainConfig

EXIT_IO = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_DATA = 4

TEMPO_CLASSES = (0.8, 1.15)
STYLE_FACTORS = ("rotation", "tempo", "corner", "flourish")


class DataMismatchError(ValueError):
    """Inputs do not line up (exit code 4)."""


def _derive_seed(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _writer_styles(index, styles, jitter):
    rotation = "anticlockwise"
    tempo = 1.0
    corner = 0
    flourish = False
    if "rotation" in styles:
        rotation = "clockwise" if index % 2 == 0 else "anticlockwise"
    if "tempo" in styles:
        tempo = TEMPO_CLASSES[(index // 2) % len(TEMPO_CLASSES)]
    if "corner" in styles:
        corner = (index // 4) % 4
    if "flourish" in styles:
        flourish = index % 3 == 0
    return rotation, tempo, corner, flourish, jitter


def cmd_synth(args) -> dict:
    letters = [s.strip().upper() for s in args.letters.split(",") if s.strip()]
    for letter in letters:
        if letter not in traceio.TEMPLATES:
            raise DataMismatchError(
                f"unknown letter {letter!r}: templates exist for "
                f"{''.join(sorted(traceio.TEMPLATES))}"
            )
    styles = [s.strip() for s in args.styles.split(",") if s.strip()] if args.styles else []
    for s in styles:
        if s not in STYLE_FACTORS:
            raise DataMismatchError(f"unknown style factor {s!r}; choose from {STYLE_FACTORS}")

    traces, splits = [], []
    for i in range(args.writers):
        writer = f"w{i:04d}"
        rotation, tempo, corner, flourish, jitter = _writer_styles(i, styles, args.jitter)
        for j, letter in enumerate(letters):
            spec = traceio.SynthStyleSpec(
                letter=letter, rotation=rotation, tempo=tempo, jitter=jitter,
                start_corner=corner, flourish=flourish,
                seed=_derive_seed(args.seed, i, j),
            )
            traces.append(traceio.synth_trace(spec, writer_id=writer))
            splits.append("train")
    corpus = traceio.Corpus(tuple(traces), tuple(splits))
    out = Path(args.out)
    traceio.save_corpus(corpus, out / "traces.jsonl", include_split=False)
    print(f"wrote {len(corpus)} traces to {out / 'traces.jsonl'}")
    return {"outputs": ["traces.jsonl"], "n_traces": len(corpus)}


def cmd_ingest(args) -> dict:
    corpus, diagnostics = traceio.load_corpus(args.input)
    for line in diagnostics:
        print(f"rejected {line}", file=sys.stderr)
    if args.clean:
        corpus = traceio.clean(corpus)
    if args.n_transfer is not None:
        corpus = traceio.split_writers(
            corpus, args.n_transfer, seed=args.seed, val_fraction=args.val_frac
        )
    out = Path(args.out)
    traceio.save_corpus(corpus, out / "corpus.jsonl", include_split=True)
    print(f"kept {len(corpus)} traces ({len(diagnostics)} rejected)")
    return {
        "outputs": ["corpus.jsonl"],
        "n_traces": len(corpus),
        "n_rejected": len(diagnostics),
    }


def _load_corpus_checked(path) -> traceio.Corpus:
    corpus, diagnostics = traceio.load_corpus(path)
    for line in diagnostics:
        print(f"rejected {line}", file=sys.stderr)
    if len(corpus) == 0:
        raise DataMismatchError(f"no usable traces in {path}")
    return corpus


def cmd_train(args) -> dict:
    corpus = _load_corpus_checked(args.corpus)
    corpus = traceio.clean(corpus)
    if not corpus.subset("val"):
        corpus = traceio.split_writers(
            corpus, args.n_transfer, seed=args.seed, val_fraction=args.val_frac
        )
    config = TrainConfig(
        lr=args.lr, hidden=args.hidden,
        encoder_layers=args.encoder_layers, decoder_layers=args.decoder_layers,
        encoder_dropout=args.encoder_dropout, decoder_dropout=args.decoder_dropout,
        d_bias=args.bias_dim, batch_size=args.batch_size,
        early_stop_patience=args.patience, max_epochs=args.max_epochs, seed=args.seed,
    )
    out = Path(args.out)
    log_path = out / "train_log.jsonl"
    with open(log_path, "w", encoding="utf-8") as log:
        def on_epoch(record):
            log.write(json.dumps(record) + "\n")

        fit = trainer.train_baseline if args.baseline else trainer.train
        checkpoint = fit(corpus, config, on_epoch=on_epoch)
    checkpoint.save(out / "checkpoint.styl")
    (out / "quantizer.json").write_text(checkpoint.quantizer.to_json() + "\n")
    print(
        f"trained {checkpoint.kind}: best val loss {checkpoint.best_val_loss:.4f} "
        f"at epoch {checkpoint.epoch}"
    )
    return {
        "outputs": ["checkpoint.styl", "train_log.jsonl", "quantizer.json"],
        "best_val_loss": checkpoint.best_val_loss,
        "best_epoch": checkpoint.epoch,
    }


def cmd_generate(args) -> dict:
    checkpoint = trainer.Checkpoint.load(args.checkpoint)
    corpus = _load_corpus_checked(args.source)
    corpus = traceio.clean(corpus)
    letters = set(args.letters.split(",")) if args.letters else None
    selected = [
        (trace, split) for trace, split in corpus
        if (letters is None or trace.letter in letters)
        and (args.split is None or split == args.split)
    ]
    if not selected:
        raise DataMismatchError("no source traces match the letter/split filter")
    selected.sort(key=lambda pair: (pair[0].writer_id, pair[0].letter))

    gen_traces, records = [], []
    for k, (trace, _) in enumerate(selected):
        fs = codec.encode(trace, checkpoint.quantizer)
        cfg = sampler.SamplerConfig(
            temperature=args.temperature, n_max=args.n_max,
            seed=_derive_seed(args.seed, k),
        )
        if checkpoint.kind == "baseline":
            out_fs, fallback = sampler.generate_baseline(
                checkpoint, trace.writer_id, trace.letter, cfg, init_like=fs
            )
        else:
            out_fs = sampler.reconstruct_letter(checkpoint, fs, cfg)
            fallback = False
        decoded = codec.decode(out_fs, checkpoint.quantizer, writer_id=trace.writer_id)
        gen_traces.append(
            traceio.Trace(
                writer_id=trace.writer_id, letter=trace.letter,
                points=decoded.points, sample_rate_hz=decoded.sample_rate_hz,
                meta=dict(trace.meta),
            )
        )
        records.append({
            "writer_id": trace.writer_id,
            "letter": trace.letter,
            "dir": out_fs.dir_codes.tolist(),
            "speed": out_fs.speed_codes.tolist(),
            "mean_writer_fallback": fallback,
        })
    out = Path(args.out)
    generated = traceio.Corpus(tuple(gen_traces), ("train",) * len(gen_traces))
    traceio.save_corpus(generated, out / "generated.jsonl", include_split=False)
    sidecar = {
        "quantizer": json.loads(checkpoint.quantizer.to_json()),
        "temperature": args.temperature,
        "n_max": args.n_max,
        "seed": args.seed,
        "sequences": records,
    }
    (out / "generated_codes.json").write_text(json.dumps(sidecar, indent=1) + "\n")
    print(f"generated {len(records)} drawings")
    return {"outputs": ["generated.jsonl", "generated_codes.json"], "n_generated": len(records)}


def _codes_from_sidecar(obj) -> dict:
    out = {}
    for rec in obj["sequences"]:
        key = (rec["writer_id"], rec["letter"])
        out[key] = (list(rec["dir"]), list(rec["speed"]))
    return out


def _codes_from_corpus(corpus, quantizer) -> dict:
    out = {}
    for trace, _ in corpus:
        try:
            fs = codec.encode(trace, quantizer)
        except ValueError as exc:
            raise DataMismatchError(
                f"cannot encode ({trace.writer_id}, {trace.letter}): {exc}; "
                f"run ingest --clean first"
            ) from exc
        out[(trace.writer_id, trace.letter)] = (
            fs.dir_codes.tolist(), fs.speed_codes.tolist()
        )
    return out


def cmd_eval(args) -> dict:
    # Corpora are evaluated as-is (cleaning here could silently unpair them).
    reference = _load_corpus_checked(args.reference)
    gen_path = Path(args.generated)
    sidecar = None
    try:
        parsed = json.loads(gen_path.read_text())
        if isinstance(parsed, dict) and "sequences" in parsed:
            sidecar = parsed
    except json.JSONDecodeError:
        pass

    if args.quantizer:
        quantizer = codec.QuantizerConfig.from_json(Path(args.quantizer).read_text())
    elif sidecar is not None:
        quantizer = codec.QuantizerConfig(**sidecar["quantizer"])
    else:
        quantizer = codec.calibrate(reference.subset("train") or [t for t, _ in reference])

    if sidecar is not None:
        generated = _codes_from_sidecar(sidecar)
    else:
        generated = _codes_from_corpus(_load_corpus_checked(gen_path), quantizer)
    refs = _codes_from_corpus(reference, quantizer)
    report = evalmetrics.evaluate_corpus(refs, generated)

    out = Path(args.out)
    (out / "report.json").write_text(report.to_json() + "\n")
    table = evalmetrics.format_table({"generated": report})
    (out / "table.txt").write_text(table + "\n")
    print(table)
    return {
        "outputs": ["report.json", "table.txt"],
        "n_pairs": report.n_pairs,
        "eos_pearson": report.eos_pearson,
    }


def cmd_latent(args) -> dict:
    checkpoint = trainer.Checkpoint.load(args.checkpoint)
    corpus = traceio.clean(_load_corpus_checked(args.corpus))
    try:
        table = latent.extract_latents(
            checkpoint, corpus,
            letter_filter=set(args.letter.split(",")) if args.letter else None,
            split=args.split, label_key=args.label_key,
        )
    except ValueError as exc:
        raise DataMismatchError(str(exc)) from exc
    projection = latent.pca_project(table)
    out = Path(args.out)
    (out / "latents.csv").write_text(latent.latent_csv(table, projection))
    labels = ["unlabeled" if lb is None else str(lb) for lb in table.labels]
    title = f"latent projection ({args.letter or 'all letters'})"
    (out / "projection.svg").write_text(svg.scatter_svg(projection.u, projection.v, labels, title))
    result = {
        "outputs": ["latents.csv", "projection.svg"],
        "n_rows": len(table),
        "explained_variance": list(projection.explained),
    }
    if len(set(labels)) >= 2:
        score = latent.separation_score(projection, labels, k=args.clusters)
        print(f"separation score: {score:.3f}")
        result["separation_score"] = score
    else:
        print("separation score: n/a (needs at least 2 label classes)")
    return result


def cmd_plot(args) -> dict:
    corpus = _load_corpus_checked(args.corpus)
    groups = []
    overlay = None
    if args.overlay:
        overlay = _load_corpus_checked(args.overlay).by_key()
    for trace, _ in sorted(corpus, key=lambda p: (p[0].writer_id, p[0].letter)):
        layers = [(trace.points, "#2ca02c")]
        label = f"{trace.writer_id}/{trace.letter}"
        if overlay is not None:
            other = overlay.get((trace.writer_id, trace.letter))
            if other is not None:
                layers.append((other.points, "#d62728"))
        groups.append((label, layers))
    out = Path(args.out)
    (out / "letters.svg").write_text(svg.trace_grid_svg(groups))
    print(f"plotted {len(groups)} drawings")
    return {"outputs": ["letters.svg"], "n_drawings": len(groups)}


def build_parser() -> tuple:
    parser = argparse.ArgumentParser(
        prog="penstyle",
        description="Pen-trajectory style toolkit: synthesize, train, generate, evaluate.",
    )
    parser.add_argument("--version", action="version", version=f"penstyle {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    registry = {}

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", default=None, help="JSON file of flag defaults")
        registry[name] = p
        return p

    p = command("synth", "generate a synthetic trace corpus")
    p.add_argument("--letters", default="X", help="comma-separated letters")
    p.add_argument("--writers", type=int, required=True)
    p.add_argument("--styles", default="rotation",
                   help=f"comma-separated varied factors from {STYLE_FACTORS}")
    p.add_argument("--jitter", type=float, default=0.008)
    p.set_defaults(func=cmd_synth)

    p = command("ingest", "validate, clean and split a trace file")
    p.add_argument("--input", required=True)
    p.add_argument("--clean", action="store_true", default=True)
    p.add_argument("--no-clean", dest="clean", action="store_false")
    p.add_argument("--n-transfer", type=int, default=None,
                   help="assign this many writers to the transfer split")
    p.add_argument("--val-frac", type=float, default=0.1)
    p.set_defaults(func=cmd_ingest)

    p = command("train", "train the autoencoder (or --baseline) on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--baseline", action="store_true")
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--encoder-layers", type=int, default=2)
    p.add_argument("--decoder-layers", type=int, default=2)
    p.add_argument("--encoder-dropout", type=float, default=0.0)
    p.add_argument("--decoder-dropout", type=float, default=0.2)
    p.add_argument("--bias-dim", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--max-epochs", type=int, default=500)
    p.add_argument("--n-transfer", type=int, default=0)
    p.add_argument("--val-frac", type=float, default=0.1)
    p.set_defaults(func=cmd_train)

    p = command("generate", "sample drawings conditioned on a source corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--source", required=True, help="corpus supplying styles/writers")
    p.add_argument("--letters", default=None)
    p.add_argument("--split", default=None, choices=traceio.SPLITS)
    p.add_argument("--temperature", type=float, default=0.5)
    p.add_argument("--n-max", type=int, default=100)
    p.set_defaults(func=cmd_generate)

    p = command("eval", "score generated sequences against references")
    p.add_argument("--reference", required=True)
    p.add_argument("--generated", required=True,
                   help="generated_codes.json sidecar or a trace .jsonl file")
    p.add_argument("--quantizer", default=None, help="quantizer JSON override")
    p.set_defaults(func=cmd_eval)

    p = command("latent", "extract style vectors, project, export CSV + SVG")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--letter", default=None)
    p.add_argument("--split", default=None, choices=traceio.SPLITS)
    p.add_argument("--label-key", default="rotation")
    p.add_argument("--clusters", type=int, default=2)
    p.set_defaults(func=cmd_latent)

    p = command("plot", "render traces (and optional overlay) to SVG")
    p.add_argument("--corpus", required=True)
    p.add_argument("--overlay", default=None, help="second corpus drawn in red")
    p.set_defaults(func=cmd_plot)

    return parser, registry


def _validate(args, parser) -> None:
    if args.command == "synth" and args.writers < 1:
        parser.error("--writers must be at least 1")
    if args.command == "generate" and args.n_max < 1:
        parser.error("--n-max must be at least 1")
    if args.command == "generate" and args.temperature <= 0:
        parser.error("--temperature must be positive")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, registry = build_parser()

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config:
        overrides = json.loads(Path(known.config).read_text())
        cmd = next((a for a in argv if a in registry), None)
        if cmd is None:
            parser.error("--config requires a subcommand")
        valid = {a.dest for a in registry[cmd]._actions}
        bad = set(overrides) - valid
        if bad:
            parser.error(f"unknown --config keys for {cmd}: {sorted(bad)}")
        registry[cmd].set_defaults(**overrides)

    args = parser.parse_args(argv)
    _validate(args, parser)

    started = time.monotonic()
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        summary = args.func(args)
    except (PairingError, DataMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, PairingError) and exc.orphans:
            for key in exc.orphans:
                print(f"  orphan: {key}", file=sys.stderr)
        return EXIT_DATA
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    manifest = {
        "command": args.command,
        "argv": argv,
        "config": {
            k: v for k, v in sorted(vars(args).items())
            if k not in ("func", "command") and not callable(v)
        },
        "seed": args.seed,
        "tool_version": __version__,
        "duration_s": round(time.monotonic() - started, 3),
    }
    manifest.update(summary)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
