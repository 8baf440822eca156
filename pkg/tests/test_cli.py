import csv
import json
import socketserver
import subprocess
import sys
import threading
from pathlib import Path

import numpy as np
import pytest

from roadiri.cli import load_config, main
from roadiri.errors import ConfigError
from roadiri.geo import segment_stream
from roadiri.ingest import parse_device_log
from roadiri.road_synth import read_labels
from roadiri.spectral import extract_features, read_feature_table
from roadiri.trees import load_model


def run(*argv):
    return main([str(a) for a in argv])


def simulate(out, *extra):
    assert run("simulate", "--out-dir", out, *extra) == 0
    return Path(out)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """Three simulated routes with features, 45 labeled segments in all."""
    root = tmp_path_factory.mktemp("corpus")
    dirs = []
    for seed, gd in ((1, "2e-6"), (2, "8e-6"), (3, "3e-5")):
        d = simulate(root / f"r{seed}", "--seed", seed, "--gd", gd, "--route-len", 1.5, "--noise", 0.1)
        assert run("features", d / "stream.csv", "--out-dir", d) == 0
        dirs.append(d)
    return root, dirs


def test_simulate_minimal_config(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[synth]\nroad_class = A\nroute_len = 1\nseed = 7\n")
    a = simulate(tmp_path / "a", "--config", ini)
    b = simulate(tmp_path / "b", "--config", ini)
    assert len(read_labels(a / "labels.csv")) == 10
    for name in ("stream.csv", "labels.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    manifest = json.loads((a / "simulate.manifest.json").read_text())
    assert manifest["subcommand"] == "simulate"
    assert manifest["config"]["resolved"]["synth"]["seed"] == 7
    assert manifest["tool_version"] and manifest["wall_time_s"] >= 0


def test_flags_override_config(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[synth]\nroute_len = 1\nseed = 7\n")
    d = simulate(tmp_path / "a", "--config", ini, "--route-len", 0.5, "--seed", 8)
    assert len(read_labels(d / "labels.csv")) == 5
    assert json.loads((d / "simulate.manifest.json").read_text())["seed"] == 8


def test_rougher_class_has_higher_labels(tmp_path):
    a = simulate(tmp_path / "a", "--road-class", "A", "--seed", 3, "--route-len", 0.5)
    e = simulate(tmp_path / "e", "--road-class", "E", "--seed", 3, "--route-len", 0.5)
    assert np.mean(list(read_labels(e / "labels.csv").values())) > np.mean(list(read_labels(a / "labels.csv").values()))


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[synth]\nroute_len = 1\nspeed = 3\n")
    with pytest.raises(ConfigError, match=r"bad.ini:3: unknown key 'speed'"):
        load_config(bad)
    bad.write_text("[synth]\nwander = lots\n")
    assert run("simulate", "--config", bad, "--out-dir", tmp_path) == 1
    assert "bad.ini:2" in capsys.readouterr().err
    bad.write_text("[nope]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("[fit]\nn_trees 5\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_features_match_stream_path(corpus):
    _, dirs = corpus
    d = dirs[0]
    rows = read_feature_table(d / "features.csv")
    assert len(rows) == 15
    direct = [extract_features(w) for w in segment_stream(parse_device_log(d / "stream.csv"), include_partial=False)]
    assert rows == direct


def test_empty_and_malformed_inputs(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run("features", empty, "--out-dir", tmp_path) == 1
    src = simulate(tmp_path / "s", "--route-len", 0.3) / "stream.csv"
    lines = src.read_text().splitlines()
    lines.insert(50, "1,2,3")
    broken = tmp_path / "broken.csv"
    broken.write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert run("features", broken, "--out-dir", tmp_path) == 1
    assert "broken.csv:51" in capsys.readouterr().err
    assert run("features", broken, "--lenient", "--out-dir", tmp_path / "ok") == 0
    assert run("ingest", broken, "--lenient", "--out-dir", tmp_path / "ok") == 0
    assert "skipped 1" in capsys.readouterr().out


def train(root, dirs, mode, out, *extra):
    feats = [d / "features.csv" for d in dirs]
    labels = [d / "labels.csv" for d in dirs]
    return run("train", "--features", *feats, "--labels", *labels, "--mode", mode, "--seed", 5, "--out-dir", out, *extra)


def test_train_modes_and_determinism(corpus, tmp_path):
    root, dirs = corpus
    assert train(root, dirs, "bagged", tmp_path / "m", "--n-trees", 30) == 0
    assert train(root, dirs, "boosted", tmp_path / "m", "--n-trees", 30) == 0
    assert train(root, dirs, "boosted", tmp_path / "m2", "--n-trees", 30) == 0
    m = tmp_path / "m"
    assert (m / "model_bagged.txt").exists() and (m / "model_boosted.txt").exists()
    assert (m / "model_boosted.txt").read_bytes() == (tmp_path / "m2" / "model_boosted.txt").read_bytes()
    for mode in ("bagged", "boosted"):
        report = json.loads((m / f"train_{mode}.json").read_text())
        assert report["n"] == 9 and report["rmse"] >= 0
    assert load_model((m / "model_bagged.txt").read_bytes()).training_meta["seed"] == 5


def test_block_split(corpus, tmp_path):
    root, dirs = corpus
    assert train(root, dirs, "boosted", tmp_path, "--n-trees", 10, "--block-split") == 0
    report = json.loads((tmp_path / "train_boosted.json").read_text())
    assert report["block_split"] is True and report["n"] % 10 == 0


def test_train_errors(corpus, tmp_path):
    root, dirs = corpus
    assert train(root, dirs[:1], "boosted", tmp_path) == 1  # 15 rows < 20
    bad = tmp_path / "labels.csv"
    bad.write_text("segment_index,iri_mkm,iri_inmi\n0,1,63.36\n")
    feats = [d / "features.csv" for d in dirs[:2]]
    assert run("train", "--features", *feats, "--labels", bad, bad, "--out-dir", tmp_path) == 1


def test_predict_evaluate_plot(corpus, tmp_path):
    root, dirs = corpus
    assert train(root, dirs, "boosted", tmp_path, "--n-trees", 30) == 0
    model = tmp_path / "model_boosted.txt"
    d = dirs[1]
    assert run("predict", "--model", model, "--features", d / "features.csv", "--out-dir", tmp_path / "pf") == 0
    assert run("predict", "--model", model, "--input", d / "stream.csv", "--out-dir", tmp_path / "ps") == 0
    pf = (tmp_path / "pf" / "predictions.csv").read_text()
    assert pf == (tmp_path / "ps" / "predictions.csv").read_text()
    assert run("evaluate", "--pred", tmp_path / "pf" / "predictions.csv", "--labels", d / "labels.csv", "--out-dir", tmp_path / "ev") == 0
    rows = dict(csv.reader(open(tmp_path / "ev" / "metrics.csv")))
    assert float(rows["rmse"]) >= 0 and 0 <= float(rows["accuracy"]) <= 100
    for kind in ("scatter", "line", "pie"):
        assert run("plot-data", "--kind", kind, "--pred", tmp_path / "pf" / "predictions.csv", "--labels", d / "labels.csv", "--out-dir", tmp_path / "pl") == 0
    scatter = (tmp_path / "pl" / "plot_scatter.csv").read_text().splitlines()
    assert scatter[0] == "truth,pred" and len(scatter) - 1 == 15
    pie = list(csv.DictReader(open(tmp_path / "pl" / "plot_pie.csv")))
    assert sum(int(r["truth_count"]) for r in pie) == 15


def test_evaluate_perfect_predictions(corpus, tmp_path):
    _, dirs = corpus
    labels = read_labels(dirs[0] / "labels.csv")
    pred = tmp_path / "pred.csv"
    pred.write_text("index,iri,class\n" + "".join(f"{i},{v!r},x\n" for i, v in labels.items()))
    assert run("evaluate", "--pred", pred, "--labels", dirs[0] / "labels.csv", "--out-dir", tmp_path) == 0
    rows = dict(csv.reader(open(tmp_path / "metrics.csv")))
    assert float(rows["rmse"]) == 0.0 and float(rows["r2"]) == 1.0 and float(rows["accuracy"]) == 100.0


def test_repeatability_from_files(tmp_path):
    runs = []
    for k, vals in enumerate(([100, 50], [120, 50])):
        p = tmp_path / f"run{k}.csv"
        p.write_text("index,iri,class\n" + "".join(f"{i},{v},x\n" for i, v in enumerate(vals)))
        runs.append(p)
    assert run("repeatability", "--runs", *runs, "--out-dir", tmp_path) == 0
    rows = list(csv.DictReader(open(tmp_path / "repeatability.csv")))
    assert float(rows[0]["sd"]) == pytest.approx(10.0) and float(rows[1]["cv"]) == 0.0
    assert run("plot-data", "--kind", "repeatability", "--runs", *runs, "--out-dir", tmp_path) == 0
    assert len((tmp_path / "plot_repeatability.csv").read_text().splitlines()) == 3


def test_repeatability_experiment(corpus, tmp_path):
    root, dirs = corpus
    assert train(root, dirs, "boosted", tmp_path, "--n-trees", 30) == 0
    assert run("repeatability", "--model", tmp_path / "model_boosted.txt", "--n-runs", 3, "--out-dir", tmp_path) == 0
    summary = json.loads((tmp_path / "repeatability.json").read_text())
    assert summary["runs"] == 3 and summary["segments"] == 32 and summary["mean_cv"] >= 0


def test_pipeline_outputs(corpus, tmp_path, capsys):
    root, dirs = corpus
    assert train(root, dirs, "boosted", tmp_path, "--n-trees", 30) == 0
    model = tmp_path / "model_boosted.txt"
    stream = dirs[0] / "stream.csv"
    assert run("pipeline", "--model", model, "--input", stream, "--stats", "--include-partial", "--out-dir", tmp_path) == 0
    lines = (tmp_path / "records.ndjson").read_text().splitlines()
    assert len(lines) == 17  # 15 windows, the final partial one, and the stats line
    assert json.loads(lines[-1])["stats"]["segments"] == 16
    assert json.loads(lines[-2])["partial"] is True
    capsys.readouterr()
    assert run("pipeline", "--model", model, "--input", stream, "--output", "-", "--out-dir", tmp_path) == 0
    out = capsys.readouterr().out.splitlines()
    assert [json.loads(x)["idx"] for x in out] == list(range(15))
    assert [json.loads(x)["iri"] for x in out] == [json.loads(x)["iri"] for x in lines[:15]]


def test_pipeline_to_tcp(corpus, tmp_path):
    root, dirs = corpus
    assert train(root, dirs, "boosted", tmp_path, "--n-trees", 10) == 0
    got = []

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            got.extend(self.rfile.read().decode().splitlines())

    with socketserver.TCPServer(("127.0.0.1", 0), Handler) as server:
        t = threading.Thread(target=server.handle_request)
        t.start()
        port = server.server_address[1]
        assert run("pipeline", "--model", tmp_path / "model_boosted.txt", "--input", dirs[0] / "stream.csv",
                   "--connect", f"127.0.0.1:{port}", "--out-dir", tmp_path) == 0
        t.join(10)
    assert [json.loads(x)["idx"] for x in got] == list(range(15))


def test_missing_model_and_bad_connect(corpus, tmp_path, capsys):
    _, dirs = corpus
    assert run("pipeline", "--model", tmp_path / "none.txt", "--input", dirs[0] / "stream.csv", "--out-dir", tmp_path) == 1
    assert "none.txt" in capsys.readouterr().err


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "roadiri.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "roadiri" in out.stdout
    out = subprocess.run([sys.executable, "-m", "roadiri.cli", "frobnicate"], capture_output=True, text=True)
    assert out.returncode == 2
