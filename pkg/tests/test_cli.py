import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

_MICRO = {
    "lexicon": {"n_words": 40, "homonym_group_count": 8, "eval_group_count": 4,
                "seed": 3},
    "data": {
        "words_per_clip": 3, "r_videos": 4, "r_clips": 2, "cv_videos": 2,
        "cv_clips": 2, "ls_videos": 2, "ls_clips": 2, "y_videos": 4,
        "y_clips": 2, "y_dev_videos": 2, "y_dev_clips": 2,
        "y_test_videos": 2, "y_test_clips": 2, "junk_frac": 0.0, "seed": 11,
    },
    "model": {"n_layers": 1, "n_heads": 2, "d_model": 16, "d_ff": 32,
              "max_positions": 256},
    "train": {"base_lr": 1e-3, "per_device_batch": 8, "epochs": 1,
              "policy_study_epochs": 1},
}


def _run(args, **kw):
    return subprocess.run([sys.executable, "-m", "kwasr", *args],
                          capture_output=True, text=True, **kw)


@pytest.fixture(scope="module")
def micro_config(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = dict(_MICRO, out_dir=str(root / "run"))
    path = root / "config.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return str(path), cfg["out_dir"]


@pytest.fixture(scope="module")
def generated(micro_config):
    cfg_path, out_dir = micro_config
    proc = _run(["gen-data", "--config", cfg_path])
    assert proc.returncode == 0, proc.stderr
    return cfg_path, out_dir, proc


class TestGenData:
    def test_artifact_lines_name_tab_path(self, generated):
        _, out_dir, proc = generated
        lines = [l for l in proc.stdout.splitlines() if l]
        assert lines
        for line in lines:
            name, path = line.split("\t")
            assert os.path.exists(path), name

    def test_deterministic_bytes(self, micro_config, tmp_path):
        cfg_path, _ = micro_config
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            proc = _run(["gen-data", "--config", cfg_path, "--out", str(out)])
            assert proc.returncode == 0, proc.stderr
            blob = {
                p.name: p.read_bytes()
                for p in sorted(out.rglob("*")) if p.is_file()
            }
            outs.append(blob)
        assert outs[0].keys() == outs[1].keys()
        for name in outs[0]:
            assert outs[0][name] == outs[1][name], name

    def test_seed_override_changes_data(self, micro_config, tmp_path):
        cfg_path, _ = micro_config
        out_a, out_b = tmp_path / "s1", tmp_path / "s2"
        _run(["gen-data", "--config", cfg_path, "--out", str(out_a), "--seed", "1"])
        _run(["gen-data", "--config", cfg_path, "--out", str(out_b), "--seed", "2"])
        a = (out_a / "corpora" / "y_train.jsonl").read_text(encoding="utf-8")
        b = (out_b / "corpora" / "y_train.jsonl").read_text(encoding="utf-8")
        assert a != b


class TestPipeline:
    def test_train_eval_report(self, generated):
        cfg_path, out_dir, _ = generated
        proc = _run(["train", "--config", cfg_path])
        assert proc.returncode == 0, proc.stderr
        assert os.path.exists(os.path.join(out_dir, "model_main.ckpt"))

        proc = _run(["eval", "--config", cfg_path])
        assert proc.returncode == 0, proc.stderr
        data = json.loads(Path(out_dir, "eval_y_dev.json").read_text())
        assert {r["inference_keywords"] for r in data["rows"]} == {False, True}
        assert "config_hash" in data

        proc = _run(["report", "--config", cfg_path])
        assert proc.returncode == 0, proc.stderr
        report = Path(out_dir, "report.md").read_text(encoding="utf-8")
        assert "| " in report  # markdown tables present


class TestErrors:
    def test_config_error_exit_2_with_field(self, tmp_path):
        bad = dict(_MICRO, out_dir=str(tmp_path / "x"))
        bad["train"] = dict(bad["train"], epochs="many")
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(bad), encoding="utf-8")
        proc = _run(["train", "--config", str(path)])
        assert proc.returncode == 2
        assert "config.train.epochs" in proc.stderr

    def test_unknown_field_exit_2(self, tmp_path):
        bad = dict(_MICRO, out_dir=str(tmp_path / "x"), extra_section=1)
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(bad), encoding="utf-8")
        proc = _run(["gen-data", "--config", str(path)])
        assert proc.returncode == 2
        assert "extra_section" in proc.stderr

    def test_invalid_json_exit_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        proc = _run(["gen-data", "--config", str(path)])
        assert proc.returncode == 2

    def test_missing_artifacts_exit_3(self, micro_config, tmp_path):
        cfg_path, _ = micro_config
        # fresh out dir: train has no corpora to read
        proc = _run(["train", "--config", cfg_path, "--out", str(tmp_path / "empty")])
        assert proc.returncode == 3
        assert "missing artifact" in proc.stderr

    def test_missing_subcommand_usage_error(self):
        proc = _run(["--config", "x.json"])
        assert proc.returncode == 2  # argparse usage error
