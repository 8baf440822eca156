"""Great-circle distance and distance-tiled segmentation of sensor streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .ingest import SensorSample

MILES_PER_KM = 0.621371
METERS_PER_MILE = 1000.0 / MILES_PER_KM
EARTH_RADIUS_KM = 6371.0
GPS_OUTAGE_MS = 5000.0


def haversine(lat1: float, lon1: float, lat2: float, lon2: float, r: float = EARTH_RADIUS_KM) -> float:
    """Great-circle distance in km between two points given in decimal degrees."""
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * r * math.asin(math.sqrt(min(1.0, h)))


@dataclass(frozen=True)
class GeoConfig:
    d_thr: float = 0.1  # miles
    earth_radius: float = EARTH_RADIUS_KM
    outage_ms: float = GPS_OUTAGE_MS

    def __post_init__(self):
        if not (self.d_thr > 0 and self.earth_radius > 0):
            raise ValueError("d_thr and earth_radius must be positive")


@dataclass
class SegmentWindow:
    index: int
    start_lat: float
    start_lon: float
    end_lat: float
    end_lon: float
    length: float  # miles
    az_series: np.ndarray
    speeds: np.ndarray
    alts: np.ndarray
    t_start: float
    t_end: float
    partial: bool = False

    @property
    def n_samples(self) -> int:
        return len(self.az_series)


@dataclass
class Segmenter:
    """Single-pass accumulator that closes a window every ``d_thr`` miles.

    Windows tile the route from a common origin: window k closes at the
    first fresh fix whose cumulative distance reaches (k + 1) * d_thr, and
    that crossing sample is the last one in the window. Only consecutive
    fresh fixes advance distance. A gap longer than ``outage_ms`` between
    fixes closes the open window as partial and re-anchors the tiling at
    the fix after the gap.
    """

    cfg: GeoConfig = field(default_factory=GeoConfig)
    emitted: int = 0
    skipped_no_fix: int = 0
    peak_buffered: int = 0

    def __post_init__(self):
        self._az: list[float] = []
        self._spd: list[float] = []
        self._alt: list[float] = []
        self._t0 = 0.0
        self._t1 = 0.0
        self._win_len = 0.0
        self._route = 0.0
        self._boundary = self.cfg.d_thr
        self._fix: tuple[float, float, float] | None = None  # t, lat, lon
        self._start = (0.0, 0.0)

    def _close(self, partial: bool) -> SegmentWindow:
        lat, lon = (self._fix[1], self._fix[2]) if self._fix else self._start
        win = SegmentWindow(
            index=self.emitted,
            start_lat=self._start[0],
            start_lon=self._start[1],
            end_lat=lat,
            end_lon=lon,
            length=self._win_len,
            az_series=np.array(self._az),
            speeds=np.array(self._spd),
            alts=np.array(self._alt),
            t_start=self._t0,
            t_end=self._t1,
            partial=partial,
        )
        self.emitted += 1
        self._az, self._spd, self._alt = [], [], []
        self._win_len = 0.0
        self._start = (lat, lon)
        return win

    def push(self, s: SensorSample) -> SegmentWindow | None:
        if not s.gps_valid:
            self.skipped_no_fix += 1
            return None
        out = None
        if s.gps_fresh:
            if self._fix is None:
                self._start = (s.lat, s.lon)
            elif s.t - self._fix[0] > self.cfg.outage_ms:
                if self._az:
                    out = self._close(partial=True)
                self._start = (s.lat, s.lon)
                self._route = 0.0
                self._boundary = self.cfg.d_thr
            else:
                d = haversine(self._fix[1], self._fix[2], s.lat, s.lon, self.cfg.earth_radius) * MILES_PER_KM
                self._win_len += d
                self._route += d
            self._fix = (s.t, s.lat, s.lon)
        if not self._az:
            self._t0 = s.t
        self._az.append(s.az)
        self._spd.append(s.speed)
        self._alt.append(s.alt)
        self._t1 = s.t
        if len(self._az) > self.peak_buffered:
            self.peak_buffered = len(self._az)
        if s.gps_fresh and self._route >= self._boundary:
            while self._boundary <= self._route:
                self._boundary += self.cfg.d_thr
            return self._close(partial=False)
        return out

    def finalize(self) -> SegmentWindow | None:
        if not self._az:
            return None
        return self._close(partial=True)

    @property
    def buffered(self) -> int:
        return len(self._az)


def segment_stream(
    samples: Iterable[SensorSample], cfg: GeoConfig | None = None, include_partial: bool = True
) -> Iterator[SegmentWindow]:
    seg = Segmenter(cfg or GeoConfig())
    for s in samples:
        w = seg.push(s)
        if w is not None and (include_partial or not w.partial):
            yield w
    w = seg.finalize()
    if w is not None and include_partial:
        yield w
