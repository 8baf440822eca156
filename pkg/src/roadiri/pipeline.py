"""Single-pass edge pipeline: samples -> windows -> features -> IRI -> NDJSON records.

The pipeline is pull-driven. It holds at most the samples of the open
window, and a record leaves as soon as its window closes, so a slow sink
slows ingestion instead of growing a queue.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import IO, Callable, Iterable, Iterator

import numpy as np

from .errors import RoadIriError, SinkClosed, StageError
from .evaluate import RideThresholds, classify
from .geo import GeoConfig, SegmentWindow, Segmenter
from .ingest import SensorSample
from .spectral import SegmentFeatures, extract_features
from .trees import EnsembleModel, predict, predict_batch

RECORD_FIELDS = ("idx", "lat0", "lon0", "lat1", "lon1", "len_mi", "iri", "class", "n", "speed", "lat_us", "partial")


@dataclass(frozen=True)
class SegmentPrediction:
    idx: int
    lat0: float
    lon0: float
    lat1: float
    lon1: float
    len_mi: float
    iri: float  # in/mi
    ride_class: str
    n: int
    speed: float  # m/s
    lat_us: float  # feature extraction + prediction time
    partial: bool = False

    def to_json(self) -> str:
        d = asdict(self)
        d["class"] = d.pop("ride_class")
        return json.dumps({k: d[k] for k in RECORD_FIELDS}, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "SegmentPrediction":
        d = json.loads(line)
        d["ride_class"] = d.pop("class")
        return cls(**d)

    def same_result(self, other: "SegmentPrediction") -> bool:
        """Equality ignoring the measured latency."""
        a, b = asdict(self), asdict(other)
        a.pop("lat_us")
        b.pop("lat_us")
        return a == b


@dataclass
class PipelineConfig:
    geo: GeoConfig = field(default_factory=GeoConfig)
    thresholds: RideThresholds = field(default_factory=RideThresholds)
    include_partial: bool = False
    model_path: str | None = None


@dataclass
class PipelineStats:
    samples: int = 0
    segments: int = 0
    peak_buffered: int = 0
    largest_segment: int = 0
    latencies_us: list[float] = field(default_factory=list)
    wall_us: float = 0.0

    def percentile(self, q: float) -> float:
        return float(np.percentile(self.latencies_us, q)) if self.latencies_us else 0.0

    def summary(self) -> dict:
        return {
            "segments": self.segments,
            "samples": self.samples,
            "p50_lat_us": self.percentile(50),
            "p95_lat_us": self.percentile(95),
            "peak_buffered": self.peak_buffered,
            "wall_us": self.wall_us,
        }


def _record(win: SegmentWindow, feats: SegmentFeatures, iri: float, cfg: PipelineConfig, lat_us: float):
    return SegmentPrediction(
        idx=win.index,
        lat0=win.start_lat,
        lon0=win.start_lon,
        lat1=win.end_lat,
        lon1=win.end_lon,
        len_mi=win.length,
        iri=iri,
        ride_class=classify(iri, cfg.thresholds).value,
        n=win.n_samples,
        speed=feats.mean_speed,
        lat_us=lat_us,
        partial=win.partial,
    )


def run_pipeline(
    samples: Iterable[SensorSample],
    model: EnsembleModel,
    cfg: PipelineConfig | None = None,
    stats: PipelineStats | None = None,
) -> Iterator[SegmentPrediction]:
    """Yield one prediction per closed window, in segment order."""
    cfg = cfg or PipelineConfig()
    stats = stats if stats is not None else PipelineStats()
    seg = Segmenter(cfg.geo)
    t_start = time.perf_counter_ns()

    def handle(win: SegmentWindow) -> SegmentPrediction | None:
        if win.partial and (not cfg.include_partial or win.n_samples < 2):
            return None
        t0 = time.perf_counter_ns()
        try:
            feats = extract_features(win)
        except RoadIriError as exc:
            raise StageError("features", stats.samples, exc) from exc
        iri = predict(model, feats)
        rec = _record(win, feats, iri, cfg, (time.perf_counter_ns() - t0) / 1000.0)
        stats.segments += 1
        stats.largest_segment = max(stats.largest_segment, win.n_samples)
        stats.latencies_us.append(rec.lat_us)
        return rec

    it = iter(samples)
    while True:
        try:
            s = next(it)
        except StopIteration:
            break
        except RoadIriError as exc:
            raise StageError("ingest", stats.samples, exc) from exc
        stats.samples += 1
        win = seg.push(s)
        if seg.peak_buffered > stats.peak_buffered:
            stats.peak_buffered = seg.peak_buffered
        if win is not None:
            rec = handle(win)
            if rec is not None:
                yield rec
    win = seg.finalize()
    if win is not None:
        rec = handle(win)
        if rec is not None:
            yield rec
    stats.wall_us = (time.perf_counter_ns() - t_start) / 1000.0


def batch_predictions(
    samples: Iterable[SensorSample], model: EnsembleModel, cfg: PipelineConfig | None = None
) -> list[SegmentPrediction]:
    """Stage-by-stage equivalent of :func:`run_pipeline` (latency fields are 0)."""
    cfg = cfg or PipelineConfig()
    seg = Segmenter(cfg.geo)
    windows = []
    for s in samples:
        w = seg.push(s)
        if w is not None:
            windows.append(w)
    w = seg.finalize()
    if w is not None:
        windows.append(w)
    windows = [w for w in windows if not w.partial or (cfg.include_partial and w.n_samples >= 2)]
    feats = [extract_features(w) for w in windows]
    if not feats:
        return []
    iri = predict_batch(model, feats)
    return [_record(w, f, float(v), cfg, 0.0) for w, f, v in zip(windows, feats, iri)]


# sinks ------------------------------------------------------------------------


def emit_record(rec: SegmentPrediction, target) -> None:
    """Write one NDJSON line to ``target`` and flush it.

    ``target`` may be a text stream, a binary stream or a
    :class:`ReconnectingSink`.
    """
    line = rec.to_json() + "\n"
    if isinstance(target, ReconnectingSink):
        target.send(line.encode("utf-8"))
        return
    if getattr(target, "closed", False):
        raise SinkClosed("record target is closed")
    try:
        if isinstance(target, (IO, )) or hasattr(target, "mode") and "b" in getattr(target, "mode", ""):
            target.write(line.encode("utf-8"))
        else:
            try:
                target.write(line)
            except TypeError:
                target.write(line.encode("utf-8"))
        target.flush()
    except ValueError as exc:  # write to a closed file
        raise SinkClosed(str(exc)) from exc


class ReconnectingSink:
    """Byte-stream sink that reopens its connection after a dropped write.

    A record is counted as delivered only after its write and flush both
    succeed; a failed record is re-sent once on the fresh connection and
    later records follow it, so nothing is duplicated or skipped.
    """

    def __init__(self, connect: Callable[[], IO[bytes]], max_retries: int = 3):
        self.connect = connect
        self.max_retries = max_retries
        self.conn = connect()
        self.delivered = 0
        self.reconnects = 0
        self.closed = False

    def send(self, data: bytes) -> None:
        if self.closed:
            raise SinkClosed("sink is closed")
        for attempt in range(self.max_retries + 1):
            try:
                self.conn.write(data)
                self.conn.flush()
            except (OSError, ValueError):
                if attempt == self.max_retries:
                    break
                self.reconnects += 1
                self.conn = self.connect()
                continue
            self.delivered += 1
            return
        raise SinkClosed(f"giving up after {self.max_retries} reconnects")

    def close(self) -> None:
        self.closed = True
        try:
            self.conn.close()
        except OSError:
            pass


def read_records(lines: Iterable[str]) -> list[SegmentPrediction]:
    out = []
    for line in lines:
        line = line.strip()
        if line and not line.startswith('{"stats"'):
            out.append(SegmentPrediction.from_json(line))
    return out
