"""Command-line surface: exit codes, determinism, manifests."""

import json
import os

import pytest

from lervup.cli import main
from lervup.util import read_json, write_json

SYNTH_CONFIG = {
    "n_users": 40, "n_validation": 10, "photos_per_user": 12,
    "n_objects": 16, "situations": ["ACC"],
    "label_noise_std": 0.25, "planted_k": 5.0, "planted_gamma": 2.0,
    "seed": 19,
}

TINY_GRID = {
    "k_params": [10.0], "gammas": [0, 2], "epsilons": [0.1],
    "g_percents": [100.0],
    "forest": [{"n_trees": 12, "max_depth": 5, "min_samples_leaf": 2,
                "bootstrap": True, "feature_fraction": 1.0}],
}


@pytest.fixture()
def synth_dir(tmp_path):
    config = tmp_path / "synth.json"
    write_json(str(config), SYNTH_CONFIG)
    out = tmp_path / "data"
    assert main(["synth", "--config", str(config), "--out", str(out)]) == 0
    return out


def read_bytes_tree(root):
    snapshot = {}
    for dirpath, _, files in os.walk(root):
        for name in sorted(files):
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                snapshot[os.path.relpath(path, root)] = fh.read()
    return snapshot


class TestSynthCommand:
    def test_same_seed_identical_output(self, tmp_path, capsys):
        config = tmp_path / "synth.json"
        write_json(str(config), SYNTH_CONFIG)
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert main(["synth", "--config", str(config), "--out", str(out_a)]) == 0
        hash_a = json.loads(capsys.readouterr().out)["dataset_hash"]
        assert main(["synth", "--config", str(config), "--out", str(out_b)]) == 0
        hash_b = json.loads(capsys.readouterr().out)["dataset_hash"]
        assert hash_a == hash_b
        tree_a = read_bytes_tree(out_a)
        tree_b = read_bytes_tree(out_b)
        # the manifest records per-run paths and timings; data must match
        del tree_a["manifest.json"], tree_b["manifest.json"]
        assert tree_a == tree_b

    def test_manifest_written(self, synth_dir):
        manifest = read_json(str(synth_dir / "manifest.json"))
        assert manifest["command"] == "synth"
        assert manifest["dataset_hash"]

    def test_rerun_reproduces_bytes(self, synth_dir, tmp_path, capsys):
        replay = tmp_path / "replay"
        assert main(["rerun", "--manifest", str(synth_dir / "manifest.json"),
                     "--out", str(replay)]) == 0
        capsys.readouterr()
        original = read_bytes_tree(synth_dir)
        replayed = read_bytes_tree(replay)
        del original["manifest.json"], replayed["manifest.json"]
        assert original == replayed


class TestCalibrateAndTrain:
    def test_calibrate_writes_artifact(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "calibration.json"
        code = main(["calibrate", "--situation", "ACC",
                     "--dataset", str(synth_dir), "--out", str(out),
                     "--jobs", "1"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["objects"] == 16
        data = read_json(str(out))
        assert data["situation"] == "ACC"
        assert "tau_threshold" in data

    def test_unknown_situation_exit_3(self, synth_dir, tmp_path):
        assert main(["calibrate", "--situation", "XX",
                     "--dataset", str(synth_dir),
                     "--out", str(tmp_path / "c.json"), "--jobs", "1"]) == 3

    def test_train_writes_model_and_trace(self, synth_dir, tmp_path, capsys):
        grid = tmp_path / "grid.json"
        write_json(str(grid), TINY_GRID)
        out = tmp_path / "models"
        code = main(["train", "--dataset", str(synth_dir),
                     "--situation", "ACC", "--variant", "lervup-fr",
                     "--grid", str(grid), "--seed", "3",
                     "--out", str(out), "--jobs", "1"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert os.path.exists(payload["model"])
        trace = open(payload["trace"]).read()
        assert trace.splitlines()[0].startswith("point,variant")
        assert len(trace.splitlines()) == 1 + 2  # two gamma points


class TestEvaluateCommand:
    def test_evaluate_golden_reproducible(self, synth_dir, tmp_path, capsys):
        grid = tmp_path / "grid.json"
        write_json(str(grid), TINY_GRID)
        outputs = []
        for name in ("run1", "run2"):
            out = tmp_path / name
            code = main(["evaluate", "--dataset", str(synth_dir),
                         "--methods", "base,base_eta,lervup_fr",
                         "--grid", str(grid), "--seed", "7",
                         "--out", str(out), "--format", "csv", "--jobs", "1"])
            assert code == 0
            capsys.readouterr()
            outputs.append(read_bytes_tree(out))
        del outputs[0]["manifest.json"], outputs[1]["manifest.json"]
        assert outputs[0] == outputs[1]
        assert any(name.startswith("reports/evaluation") for name in outputs[0])

    def test_matches_committed_golden_report(self, tmp_path, capsys):
        # end-to-end pin: synth + evaluate byte-for-byte against the
        # committed golden report (generated once by this same pipeline)
        root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        config = os.path.join(root, "benchmarks", "golden_config.json")
        grid = os.path.join(root, "benchmarks", "golden_grid.json")
        golden = os.path.join(root, "benchmarks", "golden_evaluation.csv")
        data = tmp_path / "data"
        assert main(["synth", "--config", config, "--out", str(data)]) == 0
        out = tmp_path / "eval"
        assert main(["evaluate", "--dataset", str(data),
                     "--methods", "base,base_eta,reg_raw,lervup_fr",
                     "--grid", grid, "--seed", "11",
                     "--out", str(out), "--format", "csv", "--jobs", "1"]) == 0
        capsys.readouterr()
        produced = open(out / "reports" / "evaluation.csv", "rb").read()
        expected = open(golden, "rb").read()
        assert produced == expected


class TestRateCommand:
    def test_detection_free_profile_rates_null(self, synth_dir, tmp_path, capsys):
        grid = tmp_path / "grid.json"
        write_json(str(grid), TINY_GRID)
        out = tmp_path / "models"
        assert main(["train", "--dataset", str(synth_dir),
                     "--situation", "ACC", "--variant", "reg-raw",
                     "--grid", str(grid), "--seed", "3",
                     "--out", str(out), "--jobs", "1"]) == 0
        capsys.readouterr()
        profile = tmp_path / "profile.json"
        write_json(str(profile), {"user_id": "lone",
                                  "photos": [{"photo_id": "p1",
                                              "detections": []}]})
        assert main(["rate", "--model", str(out / "reg_raw.json"),
                     "--profile", str(profile)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["rating"] is None
        assert payload["coverage"] == 0
        assert payload["photos"][0]["no_signal"] is True

    def test_malformed_profile_exit_3(self, synth_dir, tmp_path, capsys):
        grid = tmp_path / "grid.json"
        write_json(str(grid), TINY_GRID)
        out = tmp_path / "models"
        assert main(["train", "--dataset", str(synth_dir),
                     "--situation", "ACC", "--variant", "reg-raw",
                     "--grid", str(grid), "--seed", "3",
                     "--out", str(out), "--jobs", "1"]) == 0
        capsys.readouterr()
        bad = tmp_path / "bad.json"
        write_json(str(bad), {"user_id": "x"})
        assert main(["rate", "--model", str(out / "reg_raw.json"),
                     "--profile", str(bad)]) == 3


class TestPatternsAndAgreement:
    def build_csv(self, tmp_path):
        rows = ["user_id,situation,rater_id,rating"]
        ratings = {("u1", "ACC"): [3, 3], ("u1", "BANK"): [2, 3],
                   ("u2", "ACC"): [3, 2], ("u2", "BANK"): [3, 3],
                   ("u3", "ACC"): [-3, -2], ("u3", "BANK"): [-3, -3],
                   ("u4", "ACC"): [-2, -3], ("u4", "BANK"): [-3, -2]}
        for (user, code), values in ratings.items():
            for i, value in enumerate(values):
                rows.append(f"{user},{code},r{i},{value}")
        path = tmp_path / "ratings.csv"
        path.write_text("\n".join(rows) + "\n")
        return path

    def test_patterns_finds_two_groups(self, tmp_path, capsys):
        path = self.build_csv(tmp_path)
        assert main(["patterns", "--input", str(path), "--k", "2..3",
                     "--seed", "1"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["k"] == 2
        assert sum(p["members"] for p in payload["patterns"]) == 4

    def test_agreement_reports_per_situation(self, tmp_path, capsys):
        path = self.build_csv(tmp_path)
        assert main(["agreement", "--input", str(path)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert set(payload) == {"ACC", "BANK"}
        assert payload["ACC"]["acceptable"] is True

    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["patterns", "--nonsense"])
        assert exc.value.code == 2


class TestEnvOverride:
    def test_out_dir_env_applies(self, tmp_path, capsys, monkeypatch):
        config = tmp_path / "synth.json"
        write_json(str(config), SYNTH_CONFIG)
        target = tmp_path / "env_target"
        monkeypatch.setenv("LERVUP_OUT_DIR", str(target))
        assert main(["synth", "--config", str(config),
                     "--out", str(tmp_path / "ignored")]) == 0
        capsys.readouterr()
        assert (target / "profiles.json").exists()
