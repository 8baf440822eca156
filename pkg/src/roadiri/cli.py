"""Command-line entry point: ``roadiri <subcommand> [options]``.

Every subcommand writes its outputs under ``--out-dir`` together with a
``<subcommand>.manifest.json`` holding the resolved configuration, so a run
can be repeated from the manifest alone.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import os
import re
import socket
import sys
import time
from dataclasses import asdict, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .errors import ConfigError, DegenerateData, JoinMismatch, MalformedLine, RoadIriError, StageError
from .evaluate import (
    RideThresholds,
    class_counts,
    classification_accuracy,
    classify,
    format_table,
    metric_json,
    metrics,
    repeatability,
    write_metric_csv,
    write_repeatability_csv,
)
from .geo import GeoConfig, segment_stream
from .harness import (
    BenchmarkSpec,
    RepeatSpec,
    ShiftSpec,
    block_split_indices,
    run_benchmark,
    run_repeatability,
    run_shift,
    split_indices,
    train_reference_model,
)
from .ingest import LogParser, StreamMeta, parse_device_log, write_canonical_csv
from .pipeline import PipelineConfig, PipelineStats, ReconnectingSink, emit_record, run_pipeline
from .quarter_car import write_profile_csv
from .road_synth import MPH, SynthConfig, generate_profile, read_labels, synthesize_stream, write_labels
from .spectral import SegmentFeatures, extract_features, feature_matrix, read_feature_table, write_feature_table
from .trees import FitConfig, fit_bagged, fit_boosted, fit_single, load_model, save_model

MIN_TRAIN_ROWS = 20
BLOCK_SEGMENTS = 10  # --block-split keeps each mile of road on one side

FITTERS = {"boosted": fit_boosted, "bagged": fit_bagged, "single": fit_single}


class CliError(RoadIriError):
    pass


# configuration -----------------------------------------------------------------


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else float(text)


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none") else int(text)


SECTIONS: dict[str, dict[str, Callable[[str], Any]]] = {
    "synth": {
        "road_class": str.strip,
        "gd_n0": _opt_float,
        "seed": int,
        "route_len": float,
        "speed_mph": _floats,
        "noise_sigma": float,
        "fs": float,
        "gps_rate": float,
        "run_seed": _opt_int,
        "wander": float,
        "d_thr": float,
        "start_lat": float,
        "start_lon": float,
        "heading_deg": float,
        "base_alt": float,
        "roughness_sd": float,
    },
    "ingest": {"sample_rate_hz": float, "accel_scale": float, "source_id": str.strip},
    "geo": {"d_thr": float, "earth_radius": float, "outage_ms": float},
    "fit": {
        "mode": str.strip,
        "n_trees": int,
        "max_depth": int,
        "min_samples_leaf": int,
        "feature_subsample": _opt_float,
        "row_subsample": _opt_float,
        "bootstrap": _bool,
        "learning_rate": float,
        "split_mode": str.strip,
        "n_bins": int,
        "test_fraction": float,
    },
    "ride": {"good_max": float, "fair_max": float},
    "pipeline": {"include_partial": _bool},
}


def _key_line(text: str, section: str, key: str) -> int | None:
    current = None
    for no, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip().lower()
        elif current == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line, re.IGNORECASE):
            return no
    return None


def load_config(path: str | Path | None) -> dict[str, dict[str, Any]]:
    """Parse an INI file into typed values per section; unknown names are errors."""
    out: dict[str, dict[str, Any]] = {s: {} for s in SECTIONS}
    if path is None:
        return out
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for section in cp.sections():
        sec = section.strip().lower()
        if sec not in SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in cp.items(section):
            line = _key_line(text, sec, key)
            where = f"{path}:{line}" if line else str(path)
            conv = SECTIONS[sec].get(key)
            if conv is None:
                raise ConfigError(f"{where}: unknown key {key!r} in [{sec}]")
            try:
                out[sec][key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{where}: bad value for {sec}.{key}: {exc}") from exc
    return out


def synth_config(conf: dict, args: argparse.Namespace) -> SynthConfig:
    vals = dict(conf["synth"])
    speeds = vals.pop("speed_mph", None)
    for key in ("road_class", "gd_n0", "route_len", "noise_sigma", "wander", "run_seed", "roughness_sd"):
        v = getattr(args, key, None)
        if v is not None:
            vals[key] = v
    if getattr(args, "speed_mph", None):
        speeds = tuple(args.speed_mph)
    if speeds:
        vals["speed_profile"] = tuple(s * MPH for s in speeds)
    if args.seed is not None:
        vals["seed"] = args.seed
    return SynthConfig(**vals)


def fit_config(conf: dict, args: argparse.Namespace) -> tuple[str, FitConfig, float]:
    vals = dict(conf["fit"])
    mode = args.mode or vals.pop("mode", "boosted")
    vals.pop("mode", None)
    test_fraction = vals.pop("test_fraction", 0.2)
    for key in ("n_trees", "max_depth", "learning_rate"):
        v = getattr(args, key, None)
        if v is not None:
            vals[key] = v
    if mode not in FITTERS:
        raise ConfigError(f"unknown model mode {mode!r}; choose from {sorted(FITTERS)}")
    vals["seed"] = args.seed if args.seed is not None else vals.get("seed", 0)
    return mode, FitConfig(**vals), test_fraction


def geo_config(conf: dict) -> GeoConfig:
    return GeoConfig(**conf["geo"])


def stream_meta(conf: dict) -> StreamMeta:
    return StreamMeta(**conf["ingest"])


def thresholds(conf: dict) -> RideThresholds:
    return RideThresholds(**conf["ride"])


# manifest -----------------------------------------------------------------------


def _plain(obj: Any) -> Any:
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_manifest(
    out_dir: Path, args: argparse.Namespace, config: dict, inputs: Sequence, outputs: Sequence, t0: float
) -> Path:
    manifest = {
        "subcommand": args.command,
        "argv": list(args.argv),
        "seed": args.seed,
        "config": _plain(config),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "tool_version": __version__,
        "wall_time_s": time.perf_counter() - t0,
    }
    path = out_dir / f"{args.command}.manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# input helpers -------------------------------------------------------------------


def _samples(path: str, meta: StreamMeta, lenient: bool, parser: LogParser | None = None):
    """Parse a stream file (``-`` is stdin), naming the file in errors."""
    src = sys.stdin if path == "-" else Path(path)
    try:
        yield from parse_device_log(src, meta, lenient, parser)
    except MalformedLine as exc:
        raise CliError(f"{path}:{exc.line_no}: ingest: {exc.reason}") from exc
    except RoadIriError as exc:
        raise CliError(f"{path}: ingest: {exc}") from exc
    except OSError as exc:
        raise CliError(f"{path}: cannot read: {exc}") from exc


def _features_from_stream(path: str, conf: dict, lenient: bool) -> list[SegmentFeatures]:
    wins = segment_stream(_samples(path, stream_meta(conf), lenient), geo_config(conf), include_partial=False)
    try:
        return [extract_features(w) for w in wins]
    except CliError:
        raise
    except RoadIriError as exc:
        raise CliError(f"{path}: features: {exc}") from exc


def _read_predictions(path: str) -> dict[int, float]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"index", "iri"} <= set(reader.fieldnames):
            raise CliError(f"{path}: predictions file needs index and iri columns")
        return {int(r["index"]): float(r["iri"]) for r in reader}


def _join(pred: dict[int, float], truth: dict[int, float], what: str) -> tuple[list[int], np.ndarray, np.ndarray]:
    missing = sorted(set(pred) - set(truth))
    if missing:
        raise JoinMismatch(f"{what}: {len(missing)} segment(s) without labels, first {missing[:5]}")
    idx = sorted(pred)
    return idx, np.array([pred[i] for i in idx]), np.array([truth[i] for i in idx])


def _write_predictions(path: Path, index: Sequence[int], iri: Sequence[float], th: RideThresholds) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("index", "iri", "class"))
        for i, v in zip(index, iri):
            w.writerow((i, repr(float(v)), classify(float(v), th).value))


# subcommands ------------------------------------------------------------------------


def cmd_simulate(args, conf, out: Path):
    cfg = synth_config(conf, args)
    profile = generate_profile(cfg)
    run = synthesize_stream(profile, cfg)
    stream_path, labels_path = out / "stream.csv", out / "labels.csv"
    with open(stream_path, "w", newline="", encoding="utf-8") as fh:
        write_canonical_csv(run.samples(), out=fh)
    with open(labels_path, "w", newline="", encoding="utf-8") as fh:
        write_labels(run.labels, fh)
    outputs = [stream_path, labels_path]
    if args.profile:
        write_profile_csv(profile, out / "profile.csv")
        outputs.append(out / "profile.csv")
    print(f"simulated {cfg.route_len} mi, {len(run.t_ms)} samples, {len(run.labels)} labeled segments")
    return {"synth": cfg}, [], outputs


def cmd_ingest(args, conf, out: Path):
    meta = stream_meta(conf)
    parser = LogParser(meta, args.lenient)
    dest = out / "samples.csv"
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        write_canonical_csv(_samples(args.input, meta, args.lenient, parser), meta, out=fh)
    print(f"rows {parser.rows}, samples {parser.emitted}, skipped {parser.skipped}")
    for err in parser.errors[:10]:
        print(f"{args.input}:{err.line_no}: skipped: {err.reason}", file=sys.stderr)
    return {"ingest": meta, "lenient": args.lenient}, [args.input], [dest]


def cmd_features(args, conf, out: Path):
    feats = _features_from_stream(args.input, conf, args.lenient)
    if not feats:
        raise CliError(f"{args.input}: no complete segments")
    dest = out / "features.csv"
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        write_feature_table(feats, fh)
    print(f"{len(feats)} feature rows")
    return {"ingest": stream_meta(conf), "geo": geo_config(conf)}, [args.input], [dest]


def _training_table(feature_paths, label_paths):
    if len(feature_paths) != len(label_paths):
        raise CliError("give one --labels file per --features file")
    rows, ys, groups = [], [], []
    for k, (fp, lp) in enumerate(zip(feature_paths, label_paths)):
        feats = read_feature_table(fp)
        labels = read_labels(lp)
        missing = [f.index for f in feats if f.index not in labels]
        if missing:
            raise JoinMismatch(f"{fp} vs {lp}: segments {missing[:5]} have no label")
        for f in feats:
            rows.append(f)
            ys.append(labels[f.index])
            groups.append(k * 1_000_000 + f.index // BLOCK_SEGMENTS)
    return rows, np.array(ys), np.array(groups)


def cmd_train(args, conf, out: Path):
    mode, cfg, test_fraction = fit_config(conf, args)
    rows, y, groups = _training_table(args.features, args.labels)
    if len(rows) < MIN_TRAIN_ROWS:
        raise DegenerateData(f"need at least {MIN_TRAIN_ROWS} labeled segments, got {len(rows)}")
    X = feature_matrix(rows)
    if args.block_split:
        tr, te = block_split_indices(groups, cfg.seed, test_fraction)
    else:
        tr, te = split_indices(len(y), cfg.seed, test_fraction)
    model = FITTERS[mode](X[tr], y[tr], cfg)
    report = metrics(model.predict(X[te]), y[te])
    acc = classification_accuracy(model.predict(X[te]), y[te], thresholds(conf))
    model_path = out / f"model_{mode}.txt"
    model_path.write_bytes(save_model(model))
    (out / f"train_{mode}.json").write_text(
        metric_json(report, mode=mode, accuracy=acc, n_train=int(tr.size), block_split=args.block_split) + "\n",
        encoding="utf-8",
    )
    print(format_table(report.rows() + [("accuracy", acc)]))
    config = {"mode": mode, "fit": cfg, "test_fraction": test_fraction, "block_split": args.block_split}
    return config, list(args.features) + list(args.labels), [model_path, out / f"train_{mode}.json"]


def _load_model(path: str):
    try:
        return load_model(Path(path).read_bytes())
    except OSError as exc:
        raise CliError(f"{path}: cannot read model: {exc}") from exc


def cmd_predict(args, conf, out: Path):
    model = _load_model(args.model)
    if args.features:
        feats, src = read_feature_table(args.features), args.features
    else:
        feats, src = _features_from_stream(args.input, conf, args.lenient), args.input
    if not feats:
        raise CliError(f"{src}: nothing to predict")
    iri = model.predict(feature_matrix(feats))
    dest = out / "predictions.csv"
    _write_predictions(dest, [f.index for f in feats], iri, thresholds(conf))
    print(f"{len(feats)} predictions")
    return {"ride": thresholds(conf), "geo": geo_config(conf)}, [args.model, src], [dest]


def cmd_evaluate(args, conf, out: Path):
    th = thresholds(conf)
    _, p, t = _join(_read_predictions(args.pred), read_labels(args.labels), args.pred)
    report = metrics(p, t)
    acc = classification_accuracy(p, t, th)
    rows = report.rows() + [("accuracy", acc)]
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        write_metric_csv(rows, fh)
    (out / "metrics.json").write_text(metric_json(report, accuracy=acc) + "\n", encoding="utf-8")
    print(format_table(rows))
    return {"ride": th}, [args.pred, args.labels], [out / "metrics.csv", out / "metrics.json"]


def cmd_repeatability(args, conf, out: Path):
    if args.runs:
        preds = [_read_predictions(p) for p in args.runs]
        common = sorted(set.intersection(*(set(p) for p in preds)))
        if any(len(p) != len(common) for p in preds):
            raise JoinMismatch("runs cover different segments")
        runs = [[p[i] for i in common] for p in preds]
        config: dict = {"runs": list(args.runs)}
        inputs = list(args.runs)
    else:
        spec = RepeatSpec(n_runs=args.n_runs, wander=args.wander if args.wander is not None else RepeatSpec.wander)
        if args.seed is not None:
            spec = replace(spec, profile_seed=args.seed)
        model = _load_model(args.model) if args.model else train_reference_model(spec.model_seed, spec.fit)
        outcome = run_repeatability(spec, model)
        runs = outcome.runs
        config = {"experiment": spec, "model": args.model}
        inputs = [args.model] if args.model else []
    rep = repeatability(runs)
    with open(out / "repeatability.csv", "w", newline="", encoding="utf-8") as fh:
        write_repeatability_csv(rep, fh)
    summary = {
        "segments": len(runs[0]),
        "runs": len(runs),
        "mean_cv": rep.mean_cv,
        "count_cv_over_20": rep.count_cv_over_20,
        "zero_mean_segments": list(rep.zero_mean_segments),
    }
    (out / "repeatability.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(format_table([("segments", len(runs[0])), ("mean_cv", rep.mean_cv), ("cv_over_20", rep.count_cv_over_20)]))
    return config, inputs, [out / "repeatability.csv", out / "repeatability.json"]


def _tcp_connector(addr: str) -> Callable[[], Any]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise CliError(f"--connect expects HOST:PORT, got {addr!r}")

    def connect():
        return socket.create_connection((host, int(port)), timeout=10).makefile("wb")

    return connect


def cmd_pipeline(args, conf, out: Path):
    model = _load_model(args.model)
    cfg = PipelineConfig(
        geo=geo_config(conf),
        thresholds=thresholds(conf),
        include_partial=args.include_partial or conf["pipeline"].get("include_partial", False),
        model_path=args.model,
    )
    stats = PipelineStats()
    outputs: list = []
    if args.connect:
        target: Any = ReconnectingSink(_tcp_connector(args.connect))
    elif args.output == "-":
        target = sys.stdout
    else:
        dest = Path(args.output) if args.output else out / "records.ndjson"
        target = open(dest, "w", encoding="utf-8")
        outputs.append(dest)
    try:
        for rec in run_pipeline(_samples(args.input, stream_meta(conf), args.lenient), model, cfg, stats):
            emit_record(rec, target)
        if args.stats:
            line = json.dumps({"stats": stats.summary()}) + "\n"
            if isinstance(target, ReconnectingSink):
                target.send(line.encode("utf-8"))
            else:
                target.write(line)
                target.flush()
    except StageError as exc:
        if isinstance(exc.cause, CliError):
            raise exc.cause from exc
        raise CliError(f"{args.input}: {exc}") from exc
    finally:
        if target is not sys.stdout:
            target.close()
    if target is not sys.stdout:
        print(json.dumps(stats.summary()))
    return {"pipeline": cfg}, [args.model, args.input], outputs


def cmd_plot_data(args, conf, out: Path):
    th = thresholds(conf)
    dest = out / f"plot_{args.kind.replace('-', '_')}.csv"
    inputs: list = []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if args.kind in ("scatter", "line", "pie"):
        if not (args.pred and args.labels):
            raise CliError(f"plot-data {args.kind} needs --pred and --labels")
        idx, p, t = _join(_read_predictions(args.pred), read_labels(args.labels), args.pred)
        inputs = [args.pred, args.labels]
        if args.kind == "scatter":
            w.writerow(("truth", "pred"))
            w.writerows((repr(float(a)), repr(float(b))) for a, b in zip(t, p))
        elif args.kind == "line":
            w.writerow(("index", "truth", "pred"))
            w.writerows((i, repr(float(a)), repr(float(b))) for i, a, b in zip(idx, t, p))
        else:
            ct, cp = class_counts(t, th), class_counts(p, th)
            w.writerow(("class", "truth_count", "pred_count"))
            w.writerows((c, ct[c], cp[c]) for c in ct)
    else:
        if not args.runs or len(args.runs) < 2:
            raise CliError("plot-data repeatability needs at least two --runs files")
        preds = [_read_predictions(p) for p in args.runs]
        common = sorted(set.intersection(*(set(p) for p in preds)))
        rep = repeatability([[p[i] for i in common] for p in preds])
        inputs = list(args.runs)
        w.writerow(("index", "sd", "cv"))
        for i, s, c in zip(common, rep.sd, rep.cv):
            w.writerow((i, repr(float(s)), "" if np.isnan(c) else repr(float(c))))
    dest.write_text(buf.getvalue(), encoding="utf-8")
    return {"kind": args.kind, "ride": th}, inputs, [dest]


def cmd_benchmark(args, conf, out: Path):
    spec = BenchmarkSpec() if args.seeds is None else BenchmarkSpec(seeds=tuple(args.seeds))
    results: dict[str, Any] = {}
    ok = True
    outputs = []
    if "rank" in args.only:
        rep = run_benchmark(spec)
        with open(out / "benchmark.csv", "w", newline="", encoding="utf-8") as fh:
            rep.write_csv(fh)
        results["rank"] = json.loads(rep.to_json())
        ok &= rep.passed
        outputs.append(out / "benchmark.csv")
        print(f"ranking: {rep.ranked_count}/{len(spec.seeds)} seeds, R^2 target on {rep.r2_count}")
    if "shift" in args.only:
        sh = run_shift(ShiftSpec())
        results["shift"] = json.loads(sh.to_json())
        ok &= sh.passed
        print(f"shift: in {sh.in_accuracy:.1f}%, out {sh.out_accuracy:.1f}%, drop {sh.drop:.1f}")
    if "repeat" in args.only:
        rp = run_repeatability(RepeatSpec())
        results["repeat"] = {
            "mean_cv": rp.report.mean_cv,
            "count_cv_over_20": rp.report.count_cv_over_20,
            "passed": rp.passed,
        }
        ok &= rp.passed
        print(f"repeatability: mean CV {rp.report.mean_cv:.2f}%, {rp.report.count_cv_over_20} over 20%")
    results["passed"] = bool(ok)
    (out / "benchmark.json").write_text(json.dumps(results, indent=2) + "\n", encoding="utf-8")
    outputs.append(out / "benchmark.json")
    if not ok:
        raise CliError("benchmark targets not met; see benchmark.json")
    return {"benchmark": spec, "only": list(args.only)}, [], outputs


COMMANDS = {
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
    "features": cmd_features,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "repeatability": cmd_repeatability,
    "pipeline": cmd_pipeline,
    "plot-data": cmd_plot_data,
    "benchmark": cmd_benchmark,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="single source of randomness")
    common.add_argument("--config", help="INI file; command-line flags override it")
    common.add_argument("--out-dir", default="out", help="directory for all outputs (default: out)")
    common.add_argument("--lenient", action="store_true", help="skip malformed log rows instead of failing")
    common.add_argument("--block-split", action="store_true", help="hold out whole miles of road, not segments")

    ap = argparse.ArgumentParser(prog="roadiri", description="Road roughness (IRI) estimation from vehicle sensor logs")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="synthesize a labeled sensor stream")
    p.add_argument("--road-class", dest="road_class", choices=("A", "B", "C", "D", "E"))
    p.add_argument("--gd", dest="gd_n0", type=float, help="displacement PSD at 0.1 cycles/m, m^3")
    p.add_argument("--route-len", dest="route_len", type=float, help="miles")
    p.add_argument("--speed-mph", dest="speed_mph", type=float, nargs="+")
    p.add_argument("--noise", dest="noise_sigma", type=float, help="accelerometer noise SD, m/s^2")
    p.add_argument("--wander", type=float)
    p.add_argument("--run-seed", dest="run_seed", type=int)
    p.add_argument("--roughness-sd", dest="roughness_sd", type=float)
    p.add_argument("--profile", action="store_true", help="also write the road profile")

    p = sub.add_parser("ingest", parents=[common], help="validate a device log into canonical CSV")
    p.add_argument("input", help="log file, or - for stdin")

    p = sub.add_parser("features", parents=[common], help="per-segment spectral features")
    p.add_argument("input")

    p = sub.add_parser("train", parents=[common], help="fit a model on features joined with labels")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--labels", nargs="+", required=True)
    p.add_argument("--mode", choices=sorted(FITTERS))
    p.add_argument("--n-trees", dest="n_trees", type=int)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)

    p = sub.add_parser("predict", parents=[common], help="predict IRI per segment")
    p.add_argument("--model", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--features")
    g.add_argument("--input", help="sensor stream CSV")

    p = sub.add_parser("evaluate", parents=[common], help="RMSE, MAPE, R^2 and class accuracy")
    p.add_argument("--pred", required=True)
    p.add_argument("--labels", required=True)

    p = sub.add_parser("repeatability", parents=[common], help="SD and CV across repeated runs")
    p.add_argument("--runs", nargs="+", help="prediction files, one per run")
    p.add_argument("--model", help="model for the synthetic experiment (default: train one)")
    p.add_argument("--n-runs", dest="n_runs", type=int, default=4)
    p.add_argument("--wander", type=float)

    p = sub.add_parser("pipeline", parents=[common], help="stream samples to NDJSON records")
    p.add_argument("--model", required=True)
    p.add_argument("--input", default="-", help="sensor stream CSV, or - for stdin")
    p.add_argument("--output", help="NDJSON file, or - for stdout (default: OUT_DIR/records.ndjson)")
    p.add_argument("--connect", help="send records to HOST:PORT over TCP")
    p.add_argument("--stats", action="store_true", help="append a JSON stats line")
    p.add_argument("--include-partial", action="store_true")

    p = sub.add_parser("plot-data", parents=[common], help="CSV series behind the standard charts")
    p.add_argument("--kind", choices=("scatter", "line", "pie", "repeatability"), required=True)
    p.add_argument("--pred")
    p.add_argument("--labels")
    p.add_argument("--runs", nargs="+")

    p = sub.add_parser("benchmark", parents=[common], help="seeded model-ranking and robustness experiments")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--only", nargs="+", choices=("rank", "shift", "repeat"), default=("rank", "shift", "repeat"))
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    t0 = time.perf_counter()
    try:
        conf = load_config(args.config)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        config, inputs, outputs = COMMANDS[args.command](args, conf, out)
        config = {"resolved": config, "file": conf}
        write_manifest(out, args, config, inputs, outputs, t0)
    except BrokenPipeError:
        # downstream reader went away (e.g. `| head`); stop quietly
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 141
    except (RoadIriError, ValueError, OSError) as exc:
        print(f"roadiri {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
