import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from penstyle import cli, traceio


def run(*argv):
    return cli.main(list(argv))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One synth -> ingest -> train -> generate chain shared by the tests."""
    root = tmp_path_factory.mktemp("pipeline")
    assert run("synth", "--letters", "X", "--writers", "14", "--styles", "rotation",
               "--seed", "1", "--out", str(root / "synth")) == 0
    assert run("ingest", "--input", str(root / "synth" / "traces.jsonl"),
               "--n-transfer", "2", "--seed", "5", "--out", str(root / "ingest")) == 0
    assert run("train", "--corpus", str(root / "ingest" / "corpus.jsonl"),
               "--hidden", "16", "--bias-dim", "8", "--batch-size", "8",
               "--max-epochs", "4", "--seed", "2", "--out", str(root / "train")) == 0
    assert run("generate", "--checkpoint", str(root / "train" / "checkpoint.styl"),
               "--source", str(root / "ingest" / "corpus.jsonl"), "--split", "transfer",
               "--seed", "3", "--out", str(root / "gen")) == 0
    return root


class TestSynth:
    def test_writes_traces_and_manifest(self, tmp_path):
        out = tmp_path / "s"
        assert run("synth", "--letters", "X", "--writers", "6", "--styles", "rotation",
                   "--seed", "1", "--out", str(out)) == 0
        corpus, diags = traceio.load_corpus(out / "traces.jsonl")
        assert diags == []
        assert len(corpus) == 6
        rotations = {t.meta["rotation"] for t, _ in corpus}
        assert rotations == {"clockwise", "anticlockwise"}
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert manifest["seed"] == 1
        assert "duration_s" in manifest

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run("synth", "--letters", "X,C", "--writers", "5", "--seed", "7",
                       "--out", str(out)) == 0
        assert (a / "traces.jsonl").read_bytes() == (b / "traces.jsonl").read_bytes()

    def test_zero_writers_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            run("synth", "--letters", "X", "--writers", "0", "--out", str(tmp_path / "x"))
        assert info.value.code == 2

    def test_unknown_letter_data_error(self, tmp_path):
        assert run("synth", "--letters", "Q", "--writers", "3",
                   "--out", str(tmp_path / "x")) == 4


class TestTrain:
    def test_missing_corpus_exit_1(self, tmp_path, capsys):
        code = run("train", "--corpus", str(tmp_path / "nope.jsonl"),
                   "--out", str(tmp_path / "t"))
        assert code == 1
        assert "nope.jsonl" in capsys.readouterr().err

    def test_outputs_exist(self, pipeline):
        out = pipeline / "train"
        assert (out / "checkpoint.styl").exists()
        assert (out / "quantizer.json").exists()
        log = [json.loads(line) for line in (out / "train_log.jsonl").read_text().splitlines()]
        assert all({"epoch", "train_loss", "val_loss"} <= set(rec) for rec in log)
        quant = json.loads((out / "quantizer.json").read_text())
        assert quant["n_levels"] == 16

    def test_config_file_defaults(self, pipeline, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"hidden": 12, "bias_dim": 6, "max_epochs": 2,
                                   "batch_size": 8}))
        out = tmp_path / "t"
        assert run("train", "--corpus", str(pipeline / "ingest" / "corpus.jsonl"),
                   "--config", str(cfg), "--seed", "1", "--out", str(out)) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["hidden"] == 12

    def test_bad_config_key_usage_error(self, pipeline, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"hiden": 12}))
        with pytest.raises(SystemExit) as info:
            run("train", "--corpus", str(pipeline / "ingest" / "corpus.jsonl"),
                "--config", str(cfg), "--out", str(tmp_path / "t"))
        assert info.value.code == 2


class TestGenerate:
    def test_sidecar_and_traces(self, pipeline):
        sidecar = json.loads((pipeline / "gen" / "generated_codes.json").read_text())
        assert sidecar["temperature"] == 0.5
        assert len(sidecar["sequences"]) == 2  # 2 transfer writers x letter X
        for rec in sidecar["sequences"]:
            assert max(rec["dir"]) <= 15
        corpus, diags = traceio.load_corpus(pipeline / "gen" / "generated.jsonl")
        assert diags == []
        assert len(corpus) == 2

    def test_deterministic_rerun(self, pipeline, tmp_path):
        out = tmp_path / "gen2"
        assert run("generate", "--checkpoint", str(pipeline / "train" / "checkpoint.styl"),
                   "--source", str(pipeline / "ingest" / "corpus.jsonl"),
                   "--split", "transfer", "--seed", "3", "--out", str(out)) == 0
        assert (out / "generated.jsonl").read_bytes() == \
            (pipeline / "gen" / "generated.jsonl").read_bytes()

    def test_empty_filter_exit_4(self, pipeline, tmp_path):
        assert run("generate", "--checkpoint", str(pipeline / "train" / "checkpoint.styl"),
                   "--source", str(pipeline / "ingest" / "corpus.jsonl"),
                   "--letters", "O", "--out", str(tmp_path / "g")) == 4


class TestEval:
    def test_reference_against_itself_scores_100(self, pipeline, tmp_path, capsys):
        ref = pipeline / "synth" / "traces.jsonl"
        out = tmp_path / "e"
        assert run("eval", "--reference", str(ref), "--generated", str(ref),
                   "--out", str(out)) == 0
        report = json.loads((out / "report.json").read_text())
        for feature in ("dir", "speed"):
            assert report["bleu"][feature] == {"b1": 100.0, "b2": 100.0, "b3": 100.0}
        assert report["eos_pearson"] == pytest.approx(1.0)
        assert "100.0" in capsys.readouterr().out

    def test_sidecar_evaluation(self, pipeline, tmp_path):
        out = tmp_path / "e"
        code = run("eval", "--reference", str(pipeline / "gen" / "generated.jsonl"),
                   "--generated", str(pipeline / "gen" / "generated_codes.json"),
                   "--out", str(out))
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["n_pairs"] == 2
        # decode -> re-encode is exact, so self-consistency scores 100
        assert report["bleu"]["dir"]["b1"] == 100.0

    def test_unpaired_exit_4(self, pipeline, tmp_path, capsys):
        assert run("eval", "--reference", str(pipeline / "synth" / "traces.jsonl"),
                   "--generated", str(pipeline / "gen" / "generated_codes.json"),
                   "--out", str(tmp_path / "e")) == 4
        assert "orphan" in capsys.readouterr().err

    def test_report_round_trips_schema(self, pipeline, tmp_path):
        out = tmp_path / "e"
        ref = pipeline / "gen" / "generated.jsonl"
        assert run("eval", "--reference", str(ref), "--generated", str(ref),
                   "--out", str(out)) == 0
        obj = json.loads((out / "report.json").read_text())
        assert set(obj) == {"bleu", "eos_pearson", "n_pairs"}


class TestLatent:
    def test_outputs_and_svg_wellformed(self, pipeline, tmp_path, capsys):
        out = tmp_path / "lat"
        assert run("latent", "--checkpoint", str(pipeline / "train" / "checkpoint.styl"),
                   "--corpus", str(pipeline / "ingest" / "corpus.jsonl"),
                   "--letter", "X", "--out", str(out)) == 0
        assert "separation score" in capsys.readouterr().out
        csv_lines = (out / "latents.csv").read_text().splitlines()
        assert csv_lines[0] == "writer_id,letter,label,u,v"
        assert len(csv_lines) == 15  # 14 writers + header
        ET.fromstring((out / "projection.svg").read_text())  # well-formed XML

    def test_no_match_exit_4(self, pipeline, tmp_path):
        assert run("latent", "--checkpoint", str(pipeline / "train" / "checkpoint.styl"),
                   "--corpus", str(pipeline / "ingest" / "corpus.jsonl"),
                   "--letter", "O", "--out", str(tmp_path / "lat")) == 4


class TestPlot:
    def test_overlay_grid(self, pipeline, tmp_path):
        out = tmp_path / "plots"
        assert run("plot", "--corpus", str(pipeline / "gen" / "generated.jsonl"),
                   "--overlay", str(pipeline / "gen" / "generated.jsonl"),
                   "--out", str(out)) == 0
        root = ET.fromstring((out / "letters.svg").read_text())
        assert root.tag.endswith("svg")


class TestManifest:
    def test_every_run_writes_manifest(self, pipeline):
        for sub in ("synth", "ingest", "train", "gen"):
            manifest = json.loads((pipeline / sub / "manifest.json").read_text())
            assert manifest["tool_version"]
            assert manifest["outputs"]
