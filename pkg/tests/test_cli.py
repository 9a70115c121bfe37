import hashlib
import json
import re

import numpy as np
import pytest

from robotkit import cli, io

FAST_TRAIN = ["--hidden", "24", "--epochs", "15", "--lr", "0.1", "--num-classes", "4"]


def run_dir(capsys, out):
    text = capsys.readouterr().out
    m = re.search(r"outputs: (\S+)", text)
    assert m, text
    return m.group(1), text


@pytest.fixture(scope="module")
def csvs(tmp_path_factory, blobs):
    d = tmp_path_factory.mktemp("data")
    io.save_csv(blobs.subset(np.arange(300)), d / "train.csv")
    io.save_csv(blobs.subset(np.arange(300, 400)), d / "test.csv")
    return d


@pytest.fixture(scope="module")
def trained(csvs, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    assert cli.main(["train", "--data", str(csvs / "train.csv"), "--out", str(out), "--seed", "3", *FAST_TRAIN]) == 0
    (run,) = out.iterdir()
    return run / "model.bin"


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def test_train_writes_run_dir_and_manifest(csvs, tmp_path, capsys):
    code = cli.main(["train", "--data", str(csvs / "train.csv"), "--test-data", str(csvs / "test.csv"),
                     "--out", str(tmp_path), "--seed", "7", *FAST_TRAIN])
    assert code == 0
    path, text = run_dir(capsys, tmp_path)
    assert re.search(r"/\d{8}-\d{6}-seed7$", path)
    manifest = json.loads(open(f"{path}/manifest.json").read())
    assert manifest["subcommand"] == "train"
    assert manifest["config"]["train.hidden"] == "24"
    assert manifest["seeds"]["seed"] == 7
    assert manifest["status"] == "ok"
    report = json.loads(open(f"{path}/report.json").read())
    assert report["train_accuracy"] > 0.9
    assert not text.lstrip().startswith("{")


def test_manifest_replays_bit_exact(csvs, tmp_path, capsys):
    cli.main(["train", "--data", str(csvs / "train.csv"), "--out", str(tmp_path / "a"), *FAST_TRAIN])
    first, _ = run_dir(capsys, tmp_path)
    assert cli.main(["train", "--config", f"{first}/manifest.json", "--out", str(tmp_path / "b")]) == 0
    second, _ = run_dir(capsys, tmp_path)
    assert sha(f"{first}/model.bin") == sha(f"{second}/model.bin")


def test_attack_metrics_select_pipeline(csvs, trained, tmp_path, capsys):
    data = str(csvs / "train.csv")
    inputs = [data, str(trained)]
    before = [sha(p) for p in inputs]
    assert cli.main(["attack", "--data", data, "--model", str(trained), "--n-each", "500",
                     "--out", str(tmp_path), "--threads", "1"]) == 0
    attack_dir, _ = run_dir(capsys, tmp_path)
    suite_path = f"{attack_dir}/suite.bin"
    assert len(io.load_suite(suite_path)) == 1000

    assert cli.main(["metrics", "--suite", suite_path, "--model", str(trained), "--norm", "l2",
                     "--epsilon", "0.3", "--out", str(tmp_path)]) == 0
    metrics_dir, _ = run_dir(capsys, tmp_path)
    doc = json.loads(open(f"{metrics_dir}/metrics.json").read())
    assert len(doc["cases"]) == 1000
    assert set(doc["cases"][0]) >= {"fol", "zol", "gini"}
    assert {"mean_fol", "mean_zol", "mean_gini"} <= set(doc["summary"])

    assert cli.main(["select", "--suite", f"{metrics_dir}/suite.bin", "--strategy", "be-st", "--n", "100",
                     "--out", str(tmp_path)]) == 0
    select_dir, _ = run_dir(capsys, tmp_path)
    assert len(io.load_suite(f"{select_dir}/selected.bin")) == 100

    assert cli.main(["retrain", "--data", data, "--model", str(trained), "--suite", f"{select_dir}/selected.bin",
                     "--epochs", "2", "--out", str(tmp_path)]) == 0
    retrain_dir, _ = run_dir(capsys, tmp_path)

    assert cli.main(["eval-robustness", "--model", f"{retrain_dir}/model.bin", "--dv", suite_path,
                     "--out", str(tmp_path)]) == 0
    eval_dir, _ = run_dir(capsys, tmp_path)
    report = json.loads(open(f"{eval_dir}/report.json").read())
    assert 0 <= report["er"] <= 1 and report["n_adv"] == 1000
    assert [sha(p) for p in inputs] == before


def test_select_scores_on_the_fly(csvs, trained, tmp_path, capsys):
    cli.main(["attack", "--data", str(csvs / "train.csv"), "--model", str(trained), "--n-each", "20",
              "--out", str(tmp_path)])
    attack_dir, _ = run_dir(capsys, tmp_path)
    assert cli.main(["select", "--suite", f"{attack_dir}/suite.bin", "--n", "5", "--out", str(tmp_path)]) == 1
    capsys.readouterr()
    assert cli.main(["select", "--suite", f"{attack_dir}/suite.bin", "--model", str(trained), "--n", "5",
                     "--strategy", "km-st", "--out", str(tmp_path)]) == 0


def test_fuzz_subcommand(csvs, trained, tmp_path, capsys):
    assert cli.main(["fuzz", "--data", str(csvs / "train.csv"), "--model", str(trained), "--seeds", "20",
                     "--k", "3", "--lr", "0.5", "--out", str(tmp_path)]) == 0
    path, _ = run_dir(capsys, tmp_path)
    stats = json.loads(open(f"{path}/stats.json").read())
    assert stats["seeds_processed"] == 20
    suite = io.load_suite(f"{path}/suite.bin")
    assert len(suite) == stats["label_flips"]


def test_robot_subcommand(csvs, tmp_path, capsys):
    cfg = tmp_path / "robot.toml"
    cfg.write_text(f"""
seed = 1
[data]
train = "{csvs / 'train.csv'}"
test = "{csvs / 'test.csv'}"
num_classes = 4
[train]
hidden = [24]
epochs = 15
lr = 0.1
[retrain]
epochs = 3
lr = 0.1
[select]
fraction = 0.25
[robot]
r = 1.0
max_iterations = 2
pool_size = 200
dv_each = 50
accuracy_floor = 0.0
[attack]
epsilon = 0.1
[fuzz]
k = 3
""")
    assert cli.main(["robot", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    path, text = run_dir(capsys, tmp_path)
    lines = [json.loads(l) for l in open(f"{path}/history.jsonl")]
    assert [l["iter"] for l in lines] == [0, 1, 2]
    assert set(lines[0]) == {"iter", "er", "clean_acc", "suite_size", "strategy", "wall_ms"}
    assert max(l["er"] for l in lines) > 0
    report = json.loads(open(f"{path}/report.json").read())
    assert report["status"] == "budget_exhausted"
    manifest = json.loads(open(f"{path}/manifest.json").read())
    assert manifest["status"] == "budget_exhausted"
    assert "budget_exhausted" in text


def test_flag_beats_set_beats_config(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[select]\nn = 5\nk = 4\n")
    resolved = cli.resolve_config("select", str(cfg), ["select.n=7", "select.k=2"], {"select.n": 9})
    assert resolved["select.n"] == 9
    assert resolved["select.k"] == 2


def test_config_skips_other_sections(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[robot]\nr = 0.9\n[select]\nn = 3\n")
    assert cli.resolve_config("select", str(cfg), [], {})["select.n"] == 3


def test_threads_env_fallback(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli.resolve_threads(None) == 3
    assert cli.resolve_threads(2) == 2
    monkeypatch.delenv(cli.THREADS_ENV)
    assert cli.resolve_threads(None) == 1


def test_exit_codes(csvs, tmp_path, capsys):
    assert cli.main(["nonsense"]) == 2
    assert cli.main(["train", "--no-such-flag"]) == 2
    assert cli.main(["train", "--set", "bogus.key=1", "--out", str(tmp_path)]) == 2
    assert cli.main(["train", "--set", "train.epochs=abc", "--out", str(tmp_path)]) == 2
    assert cli.main(["train", "--out", str(tmp_path)]) == 2  # no --data
    assert cli.main(["metrics", "--suite", str(tmp_path / "missing.bin"), "--model", str(tmp_path / "m.bin"),
                     "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("9,0.5\n")
    assert cli.main(["train", "--data", str(bad), "--num-classes", "3", "--out", str(tmp_path)]) == 1
    assert cli.main(["robot", "--data", str(csvs / "train.csv"), "--out", str(tmp_path), *FAST_TRAIN]) == 2
