import json

import pytest

from mixcontext.classify import DEMO_LEXICON_PATH
from mixcontext.cli import main
from mixcontext.tokenizer import build_vocab

RUN_CONFIG = {
    "name": "e2e",
    "vocab_size": 400,
    "encoder": {"num_layers": 1, "num_heads": 2, "hidden": 16, "ffn": 32, "embed_dim": 16, "max_len": 24, "seed": 1},
    "train": {"max_epochs": 2, "batch_size": 8, "seed": 1},
    "synth": {"n_threads": 20, "seed": 3, "balance_tolerance": 1.0},
}

GOLD = [
    {"id": "t1", "level": "tweet", "text": "INDIA NEEDS VACCINES", "label": "HOF"},
    {"id": "c1", "level": "comment", "parent_id": "t1", "text": "kya baat hai", "label": "HOF"},
    {"id": "t2", "level": "tweet", "text": "yaar chai pilo", "label": "NOT"},
    {"id": "c2", "level": "comment", "parent_id": "t2", "text": "haan bhai", "label": "NOT"},
    {"id": "t3", "level": "tweet", "text": "match dekha", "label": "NOT"},
    {"id": "c3", "level": "comment", "parent_id": "t3", "text": "bakwas team", "label": "HOF"},
]
PREDICTED = {"t1": "HOF", "c1": "NOT", "t2": "NOT", "c2": "NOT", "t3": "HOF", "c3": "HOF"}


def _prediction_lines(labels: dict[str, str]) -> list[dict]:
    return [
        {"id": key, "label": label, "p_not": 0.2 if label == "HOF" else 0.8, "p_hof": 0.8 if label == "HOF" else 0.2}
        for key, label in labels.items()
    ]


def _pipeline(workdir, config_path) -> dict:
    """synth -> prep -> vocab -> train -> predict -> eval в отдельной папке."""

    workdir.mkdir(parents=True, exist_ok=True)
    raw, clean, vocab = workdir / "raw.jsonl", workdir / "clean.jsonl", workdir / "vocab.txt"
    preds, metrics = workdir / "preds.jsonl", workdir / "metrics.json"
    common = ["--config", str(config_path), "--set", f"paths.output_dir={workdir / 'runs'}"]

    assert main(["synth", *common, "--out", str(raw)]) == 0
    assert main(["prep", *common, "--in", str(raw), "--out", str(clean)]) == 0
    assert main(["vocab", *common, "--corpus", str(clean), "--out", str(vocab)]) == 0
    assert main(["train", *common, "--set", f"paths.data={clean}", "--set", f"paths.vocab={vocab}"]) == 0
    checkpoint = workdir / "runs" / "e2e" / "best.ckpt"
    assert main(["predict", *common, "--checkpoint", str(checkpoint), "--data", str(clean),
                 "--out", str(preds)]) == 0
    assert main(["eval", *common, "--preds", str(preds), "--gold", str(clean), "--out", str(metrics)]) == 0
    return {"raw": raw, "clean": clean, "vocab": vocab, "checkpoint": checkpoint, "preds": preds, "metrics": metrics}


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("config") / "run.json"
    path.write_text(json.dumps(RUN_CONFIG), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory, config_path):
    return _pipeline(tmp_path_factory.mktemp("first"), config_path)


def test_pipeline_is_reproducible(pipeline_run, tmp_path, config_path):
    second = _pipeline(tmp_path / "second", config_path)
    assert second["raw"].read_bytes() == pipeline_run["raw"].read_bytes()
    assert second["preds"].read_bytes() == pipeline_run["preds"].read_bytes()
    assert second["metrics"].read_bytes() == pipeline_run["metrics"].read_bytes()


def test_pipeline_artifacts(pipeline_run):
    run_dir = pipeline_run["checkpoint"].parent
    assert (run_dir / "train_log.jsonl").exists()
    resolved = json.loads((run_dir / "resolved_config.json").read_text(encoding="utf-8"))
    assert resolved["encoder"]["vocab_size"] == len(pipeline_run["vocab"].read_text(encoding="utf-8").splitlines())
    metrics = json.loads(pipeline_run["metrics"].read_text(encoding="utf-8"))
    assert 0.0 <= metrics["macro_f1"] <= 1.0
    assert set(metrics["per_class"]) == {"NOT", "HOF"}


def test_predict_with_lexicon(pipeline_run, tmp_path, config_path):
    out = tmp_path / "lex_preds.jsonl"
    code = main([
        "predict", "--config", str(config_path), "--checkpoint", str(pipeline_run["checkpoint"]),
        "--data", str(pipeline_run["clean"]), "--lexicon", str(DEMO_LEXICON_PATH), "--out", str(out),
    ])
    assert code == 0
    records = [json.loads(line) for line in out.read_text(encoding="utf-8").splitlines()]
    lexicon_hits = [r for r in records if r["source"] == "lexicon"]
    assert lexicon_hits
    assert all(r["label"] == "HOF" and r["p_hof"] == 1.0 for r in lexicon_hits)


def test_ensemble_of_one_matches_single_model(pipeline_run, tmp_path, config_path):
    out = tmp_path / "ens.jsonl"
    code = main([
        "ensemble", "--config", str(config_path), "--checkpoints", str(pipeline_run["checkpoint"]),
        "--data", str(pipeline_run["clean"]), "--out", str(out),
    ])
    assert code == 0
    single = [json.loads(line) for line in pipeline_run["preds"].read_text(encoding="utf-8").splitlines()]
    fused = [json.loads(line) for line in out.read_text(encoding="utf-8").splitlines()]
    assert [r["label"] for r in fused] == [r["label"] for r in single]
    assert {r["source"] for r in fused} == {"ensemble"}


def test_stats(pipeline_run, capsys):
    assert main(["stats", "--corpus", str(pipeline_run["clean"])]) == 0
    assert "Avg word count" in capsys.readouterr().out


# --- eval на фиксированном примере --------------------------------------------

@pytest.fixture
def gold_and_preds(tmp_path, jsonl_writer):
    gold = jsonl_writer(tmp_path / "gold.jsonl", GOLD)
    preds = jsonl_writer(tmp_path / "preds.jsonl", _prediction_lines(PREDICTED))
    return gold, preds


def test_eval_fixture(gold_and_preds, tmp_path, capsys):
    gold, preds = gold_and_preds
    out = tmp_path / "metrics.json"
    assert main(["eval", "--preds", str(preds), "--gold", str(gold), "--out", str(out)]) == 0
    metrics = json.loads(out.read_text(encoding="utf-8"))
    assert metrics["macro_f1"] == pytest.approx(2 / 3)
    assert metrics["rounded"]["macro_f1"] == 0.67
    assert "true HOF" in capsys.readouterr().out


def test_eval_missing_predictions_file(gold_and_preds, tmp_path):
    gold, _ = gold_and_preds
    code = main(["eval", "--preds", str(tmp_path / "none.jsonl"), "--gold", str(gold),
                 "--out", str(tmp_path / "m.json")])
    assert code == 1


def test_eval_missing_id(tmp_path, jsonl_writer, capsys):
    gold = jsonl_writer(tmp_path / "gold.jsonl", GOLD)
    partial = dict(PREDICTED)
    del partial["c3"]
    preds = jsonl_writer(tmp_path / "preds.jsonl", _prediction_lines(partial))
    assert main(["eval", "--preds", str(preds), "--gold", str(gold), "--out", str(tmp_path / "m.json")]) == 1
    assert f"{preds}: нет предсказания для id 'c3'" in capsys.readouterr().err


def test_bad_override_exit_code(tmp_path):
    assert main(["synth", "--set", "train.nope=1", "--out", str(tmp_path / "x.jsonl")]) == 1


def test_train_without_data(tmp_path):
    assert main(["train", "--set", f"paths.output_dir={tmp_path}"]) == 1


# --- отладочные команды -------------------------------------------------------

def test_encode_dump(tmp_path, capsys):
    vocab_path = build_vocab(["a b c"], target_size=30).save(tmp_path / "vocab.txt")
    assert main(["encode", "--vocab", str(vocab_path), "--text", "a b", "--context", "c", "--max-len", "8"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert len(data["ids"]) == 8
    assert data["segments"][:6] == [0, 0, 0, 1, 1, 1]
    assert sum(data["mask"]) == 6


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--coords", "50"]) == 0
    assert main(["gradcheck", "--pipeline", "dual", "--coords", "50"]) == 0


def test_commands_write_resolved_config(pipeline_run, tmp_path, config_path):
    common = ["--config", str(config_path), "--set", "name=provenance"]
    data, checkpoint = str(pipeline_run["clean"]), str(pipeline_run["checkpoint"])
    outputs = {
        "predict": tmp_path / "predict" / "preds.jsonl",
        "ensemble": tmp_path / "ensemble" / "ens.jsonl",
        "eval": tmp_path / "eval" / "metrics.json",
    }
    assert main(["predict", *common, "--checkpoint", checkpoint, "--data", data,
                 "--out", str(outputs["predict"])]) == 0
    assert main(["ensemble", *common, "--checkpoints", checkpoint, "--data", data,
                 "--out", str(outputs["ensemble"])]) == 0
    assert main(["eval", *common, "--preds", str(outputs["predict"]), "--gold", data,
                 "--out", str(outputs["eval"])]) == 0
    for command, output in outputs.items():
        resolved = output.parent / "resolved_config.json"
        assert resolved.exists(), command
        assert json.loads(resolved.read_text(encoding="utf-8"))["name"] == "provenance"
    assert (pipeline_run["raw"].parent / "resolved_config.json").exists()
