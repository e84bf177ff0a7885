import json
import subprocess
import sys

import numpy as np
import pytest

from signbart.cli import main, stratified_split
from signbart.skeleton import (
    frame_normalize,
    generate_synthetic,
    read_dataset,
    select_components,
    write_dataset,
)

TINY_RUN = {
    "model": {"d_model": 8, "ff_dim": 16, "encoder_layers": 1, "decoder_layers": 1, "heads": 2},
    "train": {"batch_size": 8, "epochs": 2, "seed": 3},
}


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--classes", "3", "--samples", "5", "--seed", "2", "--out", str(root / "raw.jsonl")]) == 0
    assert main(["preprocess", "--in", str(root / "raw.jsonl"), "--out", str(root / "pre.jsonl"),
                 "--mode", "three-box", "--parts", "right"]) == 0
    (root / "cfg.json").write_text(json.dumps(TINY_RUN))
    assert main(["train", "--config", str(root / "cfg.json"), "--train", str(root / "pre.jsonl"),
                 "--out", str(root / "run")]) == 0
    return root


# -- synth / preprocess ----------------------------------------------------

def test_synth_writes_records(tmp_path, capsys):
    code, out, _ = run(["synth", "--classes", 8, "--samples", 25, "--seed", 7, "--out", tmp_path / "d.jsonl"], capsys)
    assert code == 0 and json.loads(out)["records"] == 200
    assert len((tmp_path / "d.jsonl").read_text().splitlines()) == 200


def test_synth_is_byte_identical(tmp_path, capsys):
    for name in ("a", "b"):
        run(["synth", "--classes", 3, "--samples", 2, "--seed", 7, "--out", tmp_path / f"{name}.jsonl"], capsys)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_synth_needs_two_classes(tmp_path, capsys):
    code, _, err = run(["synth", "--classes", 1, "--samples", 2, "--out", tmp_path / "d.jsonl"], capsys)
    assert code == 1 and err.startswith("usage:") and len(err.strip().splitlines()) == 1


def test_preprocess_full_pipeline(workspace, tmp_path, capsys):
    code, out, _ = run(["preprocess", "--in", workspace / "raw.jsonl", "--out", tmp_path / "p.jsonl",
                        "--mode", "three-box", "--parts", "body,left,right"], capsys)
    assert code == 0
    seqs = read_dataset(tmp_path / "p.jsonl")
    assert seqs[0].state == "part-normalized:three-box" and seqs[0].num_keypoints == 48
    assert all(0.0 <= s.frames.min() and s.frames.max() <= 1.0 for s in seqs)


def test_preprocess_right_hand_only(workspace):
    assert read_dataset(workspace / "pre.jsonl")[0].num_keypoints == 21


def test_preprocess_none_keeps_frame_normalized_values(workspace, tmp_path, capsys):
    normalized = [frame_normalize(s) for s in read_dataset(workspace / "raw.jsonl")]
    write_dataset(normalized, tmp_path / "fn.jsonl")
    code, _, _ = run(["preprocess", "--in", tmp_path / "fn.jsonl", "--out", tmp_path / "none.jsonl",
                      "--mode", "none"], capsys)
    assert code == 0
    out = read_dataset(tmp_path / "none.jsonl")
    assert out[0].state == "part-normalized:none"
    for a, b in zip(normalized, out):
        assert np.array_equal(select_components(a, "body,left,right").frames, b.frames)


def test_preprocess_refuses_double_normalization(workspace, tmp_path, capsys):
    code, _, err = run(["preprocess", "--in", workspace / "pre.jsonl", "--out", tmp_path / "x.jsonl",
                        "--parts", "right"], capsys)
    assert code == 1 and err.startswith("state:")


def test_bad_mode_is_usage_error(workspace, tmp_path, capsys):
    code, _, err = run(["preprocess", "--in", workspace / "raw.jsonl", "--out", tmp_path / "x.jsonl",
                        "--mode", "four-box"], capsys)
    assert code == 1 and err.startswith("usage:")


# -- train -----------------------------------------------------------------

def test_train_outputs(workspace):
    run_dir = workspace / "run"
    assert {p.name for p in run_dir.iterdir()} >= {"best.ckpt", "final.ckpt", "run_log.jsonl",
                                                   "effective_config.json"}
    eff = json.loads((run_dir / "effective_config.json").read_text())
    assert eff["train"]["base_lr"] == 2e-4
    assert eff["train"]["weight_decay"] == 1e-2
    assert eff["model"]["num_keypoints"] == 21 and eff["model"]["num_classes"] == 3
    assert eff["data"]["mode"] == "three-box" and eff["data"]["parts"] == "right_hand"
    assert len((run_dir / "run_log.jsonl").read_text().splitlines()) == 2


def test_rerun_from_effective_config_is_identical(workspace, tmp_path, capsys):
    code, _, _ = run(["train", "--config", workspace / "run" / "effective_config.json",
                      "--out", tmp_path / "again"], capsys)
    assert code == 0
    assert (tmp_path / "again" / "run_log.jsonl").read_bytes() == (workspace / "run" / "run_log.jsonl").read_bytes()
    assert (tmp_path / "again" / "best.ckpt").read_bytes() == (workspace / "run" / "best.ckpt").read_bytes()


def test_unseen_validation_label_fails_before_training(workspace, tmp_path, capsys):
    seqs = read_dataset(workspace / "pre.jsonl")
    seqs[0].label = 7
    write_dataset(seqs[:3], tmp_path / "val.jsonl")
    code, _, err = run(["train", "--config", workspace / "cfg.json", "--train", workspace / "pre.jsonl",
                        "--val", tmp_path / "val.jsonl", "--out", tmp_path / "out"], capsys)
    assert code == 1 and err.startswith("schema:") and "label 7" in err
    assert not (tmp_path / "out").exists()


def test_keypoint_mismatch_is_schema_error(workspace, tmp_path, capsys):
    cfg = {**TINY_RUN, "model": {**TINY_RUN["model"], "num_keypoints": 48}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    code, _, err = run(["train", "--config", tmp_path / "c.json", "--train", workspace / "pre.jsonl",
                        "--out", tmp_path / "out"], capsys)
    assert code == 1 and err.startswith("schema:") and "21" in err


def test_unknown_config_key_is_rejected(workspace, tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"train": {"learning_rate": 0.1}}))
    code, _, err = run(["train", "--config", tmp_path / "c.json", "--train", workspace / "pre.jsonl",
                        "--out", tmp_path / "out"], capsys)
    assert code == 1 and err.startswith("schema:") and "learning_rate" in err


def test_config_mode_must_match_data(workspace, tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({**TINY_RUN, "data": {"mode": "one-box"}}))
    code, _, err = run(["train", "--config", tmp_path / "c.json", "--train", workspace / "pre.jsonl",
                        "--out", tmp_path / "out"], capsys)
    assert code == 1 and err.startswith("state:")


def test_stratified_split_keeps_every_class():
    seqs = generate_synthetic(4, 5, 0)
    tr, va = stratified_split(seqs, 0.2, seed=1)
    assert len(tr) == 16 and len(va) == 4
    assert sorted(s.label for s in va) == [0, 1, 2, 3]
    assert [s.id for s in stratified_split(seqs, 0.2, seed=1)[1]] == [s.id for s in va]


# -- eval / predict --------------------------------------------------------

def test_eval_emits_requested_metrics(workspace, tmp_path, capsys):
    code, out, _ = run(["eval", "--ckpt", workspace / "run" / "best.ckpt", "--data", workspace / "pre.jsonl",
                        "--topk", "1,2", "--out", tmp_path / "m.json"], capsys)
    assert code == 0
    metrics = json.loads(out)
    assert set(metrics) == {"recall@1", "recall@2"}
    assert json.loads((tmp_path / "m.json").read_text()) == metrics


def test_eval_k_beyond_classes(workspace, capsys):
    code, _, err = run(["eval", "--ckpt", workspace / "run" / "best.ckpt", "--data", workspace / "pre.jsonl",
                        "--topk", "1,5"], capsys)
    assert code == 1 and err.startswith("parameter:")


def test_eval_truncated_checkpoint(workspace, tmp_path, capsys):
    blob = (workspace / "run" / "best.ckpt").read_bytes()
    (tmp_path / "t.ckpt").write_bytes(blob[: len(blob) // 2])
    code, _, err = run(["eval", "--ckpt", tmp_path / "t.ckpt", "--data", workspace / "pre.jsonl"], capsys)
    assert code != 0 and err.startswith("format:") and "offset" in err
    assert len(err.strip().splitlines()) == 1


def test_missing_file_is_runtime_error(tmp_path, capsys):
    code, _, err = run(["eval", "--ckpt", tmp_path / "none.ckpt", "--data", tmp_path / "none.jsonl"], capsys)
    assert code == 2 and err.startswith("io:")


def test_predict_ranked_and_deterministic(workspace, capsys):
    argv = ["predict", "--ckpt", workspace / "run" / "best.ckpt", "--input", workspace / "pre.jsonl", "--top", 3]
    code, out, _ = run(argv, capsys)
    assert code == 0
    lines = [json.loads(line) for line in out.splitlines()]
    assert len(lines) == 15
    for rec in lines:
        probs = [p["probability"] for p in rec["predictions"]]
        assert probs == sorted(probs, reverse=True)
        assert abs(sum(probs) - 1.0) < 1e-9
        assert rec["predictions"][0]["gloss"].startswith("sign_")
    assert run(argv, capsys)[1] == out


def test_predict_single_pretty_record(workspace, tmp_path, capsys):
    line = (workspace / "pre.jsonl").read_text().splitlines()[0]
    (tmp_path / "one.json").write_text(json.dumps(json.loads(line), indent=2))
    code, out, _ = run(["predict", "--ckpt", workspace / "run" / "best.ckpt", "--input", tmp_path / "one.json",
                        "--top", 2], capsys)
    assert code == 0 and len(out.splitlines()) == 1
    assert len(json.loads(out)["predictions"]) == 2


def test_predict_state_mismatch_names_both(workspace, capsys):
    code, _, err = run(["predict", "--ckpt", workspace / "run" / "best.ckpt", "--input", workspace / "raw.jsonl"],
                       capsys)
    assert code == 1 and err.startswith("state:")
    assert "raw-pixels" in err and "part-normalized:three-box" in err


def test_predict_notes_truncation(workspace, tmp_path, capsys):
    cfg = {**TINY_RUN, "model": {**TINY_RUN["model"], "max_len": 20}, "train": {"epochs": 1, "batch_size": 8}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert run(["train", "--config", tmp_path / "c.json", "--train", workspace / "pre.jsonl",
                "--out", tmp_path / "short"], capsys)[0] == 0
    code, out, _ = run(["predict", "--ckpt", tmp_path / "short" / "best.ckpt", "--input", workspace / "pre.jsonl"],
                       capsys)
    assert code == 0
    recs = [json.loads(line) for line in out.splitlines()]
    assert any(r["truncated"] for r in recs)
    for r in recs:
        assert r["truncated"] == (r["frames"] > 20)
        assert r["frames_used"] == min(r["frames"], 20)


# -- params / gradcheck ----------------------------------------------------

def _params_rows(out):
    rows = [line.split() for line in out.splitlines()]
    return rows[:-1], rows[-1]


def test_params_tiny_example(tmp_path, capsys):
    cfg = {"model": {"d_model": 8, "ff_dim": 16, "encoder_layers": 2, "decoder_layers": 2, "heads": 2,
                     "num_keypoints": 75, "num_classes": 4}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    code, out, _ = run(["params", "--config", tmp_path / "c.json"], capsys)
    assert code == 0
    rows, total = _params_rows(out)
    assert total == ["total", "4260"]
    assert sum(int(r[-1]) for r in rows) == 4260
    assert len({r[0] for r in rows}) == len(rows)


def test_params_rejects_bad_heads(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"model": {"d_model": 10, "heads": 4, "num_keypoints": 5,
                                                           "num_classes": 3}}))
    code, _, err = run(["params", "--config", tmp_path / "c.json"], capsys)
    assert code == 1 and err.startswith("schema:")


def test_params_needs_explicit_shapes(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"model": {"d_model": 8, "heads": 2}}))
    code, _, err = run(["params", "--config", tmp_path / "c.json"], capsys)
    assert code == 1 and "num_keypoints" in err


def test_gradcheck_default_passes(capsys):
    code, out, _ = run(["gradcheck"], capsys)
    assert code == 0
    lines = out.splitlines()
    names = [line.split()[1] for line in lines[:-1]]
    assert len(names) == len(set(names)) == 48
    assert all(line.startswith("PASS") for line in lines)


def test_gradcheck_unreachable_tolerance(capsys):
    code, out, _ = run(["gradcheck", "--tolerance", "1e-12"], capsys)
    assert code == 1
    assert out.splitlines()[-1].startswith("FAIL")
    assert "max_rel_err=" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "signbart", "synth", "--classes", "1", "--samples", "1",
                           "--out", "unused.jsonl"], capture_output=True, text=True)
    assert proc.returncode == 1 and proc.stderr.startswith("usage:")
