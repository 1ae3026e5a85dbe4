import hashlib
import json

import pytest

from fusion_ensemble import cli
from fusion_ensemble.config import ConfigParseError, load_config
from fusion_ensemble.tensor import GradcheckReport

TINY = {
    "seed": 3,
    "model": {"num_classes": 3, "feature_dim": 8, "temporal_dim": 8, "widths": [4, 6], "rgb_size": 8, "rdm_size": 8},
    "data": {"synth": {"num_classes": 3, "frames": 4, "rgb_size": 8, "rdm_size": 8,
                       "train_per_class": 3, "valid_per_class": 1, "test_per_class": 1}},
    "train": {"epochs": 2},
}


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    doc = json.loads(out) if code == 0 else None
    return code, doc, err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "cfg.json").write_text(json.dumps(TINY))
    assert cli.main(["generate", "--config", str(root / "cfg.json"), "--out", str(root / "data")]) == 0
    assert cli.main(["train", "--config", str(root / "cfg.json"), "--data", str(root / "data"),
                     "--out", str(root / "run")]) == 0
    return root


def test_default_config_describes_the_toy_dataset():
    cfg = load_config()
    s = cfg.data.synth
    assert s.num_classes * (s.train_per_class + s.valid_per_class + s.test_per_class) == 480
    assert [st["temporal"] for st in cfg.model.streams] == ["recurrent", "recurrent", "transformer", "linear"]
    assert cfg.train.epochs == 30 and cfg.train.batch_size == 4


def test_generate_default_config_writes_480_samples(tmp_path, capsys):
    code, doc, _ = run(capsys, "generate", "--out", str(tmp_path / "d"))
    assert code == 0
    assert doc["n_samples"] == 480 and doc["splits"] == {"train": 320, "valid": 80, "test": 80}


def test_generate_rerun_gives_identical_manifest(tmp_path, capsys, workspace):
    digests = []
    for name in ("a", "b"):
        code, doc, _ = run(capsys, "generate", "--config", str(workspace / "cfg.json"), "--out", str(tmp_path / name))
        assert code == 0
        digests.append(hashlib.sha256(open(doc["manifest"], "rb").read()).hexdigest())
    assert digests[0] == digests[1]


def test_missing_config_exit_2_names_path(tmp_path, capsys):
    missing = tmp_path / "nowhere.json"
    code, _, err = run(capsys, "generate", "--config", str(missing), "--out", str(tmp_path / "o"))
    assert code == 2 and str(missing) in err


def test_json_syntax_error_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "seed": 1,\n  "model": {,}\n}')
    code, _, err = run(capsys, "generate", "--config", str(bad), "--out", str(tmp_path / "o"))
    assert code == 2 and "line 3" in err


@pytest.mark.parametrize("doc,field", [
    ({"model": {"num_clases": 8}}, "num_clases"),
    ({"train": {"epochs": 0}}, "epochs"),
    ({"model": {"streams": [{"paradigm": "Full3D"}] * 4}}, "distinct"),
    ({"extra": 1}, "extra"),
    ({"data": {"target_hw": [32, 32]}}, "target_hw"),
])
def test_invalid_fields_exit_2(tmp_path, capsys, doc, field):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigParseError, match=field):
        load_config(path)
    code, _, err = run(capsys, "generate", "--config", str(path), "--out", str(tmp_path / "o"))
    assert code == 2 and field in err


def test_unwritable_output_exit_3(tmp_path, capsys, workspace):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "generate", "--config", str(workspace / "cfg.json"), "--out", str(blocker / "sub"))
    assert code == 3 and "file" in err


def test_missing_manifest_exit_3(tmp_path, capsys, workspace):
    code, _, _ = run(capsys, "train", "--config", str(workspace / "cfg.json"), "--data", str(tmp_path / "none"),
                     "--out", str(tmp_path / "r"))
    assert code == 3


def test_train_writes_logs_and_checkpoints(workspace):
    run_dir = workspace / "run"
    lines = (run_dir / "train_log.jsonl").read_text().splitlines()
    assert len(lines) == 2
    for which in ("best", "last"):
        assert (run_dir / "checkpoints" / which / "index.json").is_file()


def test_eval_prints_report(capsys, workspace):
    code, doc, _ = run(capsys, "eval", "--checkpoint", str(workspace / "run/checkpoints/best"), "--split", "valid")
    assert code == 0
    assert doc["split"] == "valid" and doc["n_samples"] == 3
    assert sum(map(sum, doc["confusion_matrix"])) == 3


def test_eval_is_deterministic(capsys, workspace):
    ck = str(workspace / "run/checkpoints/last")
    assert run(capsys, "eval", "--checkpoint", ck)[1] == run(capsys, "eval", "--checkpoint", ck)[1]


def test_predict_top3_descending(capsys, workspace):
    code, doc, _ = run(capsys, "predict", "--checkpoint", str(workspace / "run/checkpoints/best"),
                       "--sample", "test-002-0000")
    assert code == 0 and doc["sample_id"] == "test-002-0000"
    probs = [e["probability"] for e in doc["p_final_top3"]]
    assert len(probs) == 3 and probs == sorted(probs, reverse=True) and sum(probs) <= 1.0 + 1e-6
    assert doc["y_hat"] == doc["p_final_top3"][0]["class"]


def test_predict_unknown_sample_exit_2(capsys, workspace):
    code, _, err = run(capsys, "predict", "--checkpoint", str(workspace / "run/checkpoints/best"), "--sample", "nope")
    assert code == 2 and "nope" in err


def test_checkpoint_dataset_mismatch_exit_4(tmp_path, capsys, workspace):
    other = dict(TINY, data={"synth": dict(TINY["data"]["synth"], num_classes=4)})
    (tmp_path / "c.json").write_text(json.dumps(other))
    assert cli.main(["generate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "d4")]) == 0
    capsys.readouterr()
    code, _, err = run(capsys, "eval", "--checkpoint", str(workspace / "run/checkpoints/best"),
                       "--data", str(tmp_path / "d4"))
    assert code == 4 and "num_classes" in err
    code, _, _ = run(capsys, "train", "--config", str(workspace / "cfg.json"), "--data", str(tmp_path / "d4"),
                     "--out", str(tmp_path / "r"))
    assert code == 4


def test_tampered_checkpoint_exit_4(tmp_path, capsys, workspace):
    import shutil

    ck = tmp_path / "ck"
    shutil.copytree(workspace / "run/checkpoints/best", ck)
    index = json.loads((ck / "index.json").read_text())
    index["model_config"]["temporal_dim"] = 6
    (ck / "index.json").write_text(json.dumps(index))
    code, _, _ = run(capsys, "eval", "--checkpoint", str(ck))
    assert code == 4


def test_missing_checkpoint_exit_3(tmp_path, capsys):
    code, _, _ = run(capsys, "eval", "--checkpoint", str(tmp_path / "none"))
    assert code == 3


def test_gradcheck_sampled_passes(capsys):
    code, doc, _ = run(capsys, "gradcheck", "--seed", "7", "--max-per-tensor", "2")
    assert code == 0 and doc["passed"] and doc["max_rel_error"] < 1e-4


def test_gradcheck_failure_exit_5(capsys, monkeypatch):
    import fusion_ensemble.verification as verification

    bad = GradcheckReport(max_rel_error=0.5, checked=1)
    monkeypatch.setattr(verification, "model_gradcheck", lambda *a, **k: bad)
    code, _, err = run(capsys, "gradcheck", "--seed", "1")
    assert code == 5 and "worst offenders" in err


def test_bench_appends_report(tmp_path, capsys):
    log = tmp_path / "b.jsonl"
    for _ in range(2):
        code, doc, _ = run(capsys, "bench", "--op", "conv3d", "--backend", "python", "--log", str(log))
        assert code == 0 and doc["mean_seconds"] > 0 and doc["iterations"] >= 30
    rows = [json.loads(l) for l in log.read_text().splitlines()]
    assert len(rows) == 2 and rows[0]["shape"] == rows[1]["shape"]


def test_bench_unknown_op_exit_2(tmp_path, capsys):
    code, _, err = run(capsys, "bench", "--op", "nope", "--log", str(tmp_path / "b.jsonl"))
    assert code == 2 and "nope" in err


def test_bad_flags_exit_2(capsys):
    assert cli.main(["eval"]) == 2
    assert cli.main(["frobnicate"]) == 2
