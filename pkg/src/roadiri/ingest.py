"""Device log parsing and the canonical sensor CSV.

Row format (one line per accelerometer sample, optional header)::

    t_ms,ax,ay,az,lat,lon,speed_mps,alt_m,fix

``fix`` is 1 when the row carries a new GPS fix and 0 when the GPS fields
repeat the last fix. Only ``az`` is used downstream; ``ax``/``ay`` are
validated and dropped.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, NamedTuple, Union

from .errors import MalformedLine, NoGpsFix, TimestampRegression

HEADER = "t_ms,ax,ay,az,lat,lon,speed_mps,alt_m,fix"
N_FIELDS = 9

Source = Union[bytes, str, os.PathLike, IO[bytes], IO[str], Iterable[str]]


class SensorSample(NamedTuple):
    t: float  # ms since stream start
    az: float  # m/s^2, gravity included
    lat: float
    lon: float
    speed: float  # m/s
    alt: float  # m
    gps_fresh: bool
    gps_valid: bool = True  # False for rows logged before the first fix


@dataclass(frozen=True)
class StreamMeta:
    sample_rate_hz: float = 365.0
    accel_scale: float = 1.0
    source_id: str = ""

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        if not self.accel_scale > 0:
            raise ValueError("accel_scale must be positive")


class LogParser:
    """Incremental parser; feed lines one at a time and call :meth:`finish`.

    In lenient mode malformed rows are counted in ``skipped`` instead of
    raising, so ``emitted + skipped == rows`` always holds.
    """

    def __init__(self, meta: StreamMeta | None = None, lenient: bool = False):
        self.meta = meta or StreamMeta()
        self.lenient = lenient
        self.rows = 0
        self.emitted = 0
        self.skipped = 0
        self.errors: list[MalformedLine] = []
        self._seen_fix = False
        self._last_t = -math.inf
        self._first_line = True

    def feed(self, line: str, line_no: int) -> SensorSample | None:
        line = line.strip()
        if not line:
            return None
        if self._first_line:
            self._first_line = False
            if line.split(",", 1)[0].strip() == "t_ms":
                return None
        self.rows += 1
        try:
            sample = self._parse(line, line_no)
        except MalformedLine as exc:
            if not self.lenient:
                raise
            self.skipped += 1
            self.errors.append(exc)
            return None
        self.emitted += 1
        return sample

    def _parse(self, line: str, line_no: int) -> SensorSample:
        parts = line.split(",")
        if len(parts) != N_FIELDS:
            raise MalformedLine(line_no, f"expected {N_FIELDS} fields, got {len(parts)}")
        try:
            t, ax, ay, az, lat, lon, speed, alt = (float(p) for p in parts[:8])
            fix = int(parts[8])
        except ValueError as exc:
            raise MalformedLine(line_no, f"unparsable number ({exc})") from None
        values = (t, ax, ay, az, lat, lon, speed, alt)
        if not all(math.isfinite(v) for v in values):
            raise MalformedLine(line_no, "non-finite value")
        if fix not in (0, 1):
            raise MalformedLine(line_no, f"fix flag must be 0 or 1, got {fix}")
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise MalformedLine(line_no, "coordinates out of range")
        if speed < 0:
            raise MalformedLine(line_no, "negative speed")
        if t < self._last_t:
            raise TimestampRegression(line_no, f"timestamp {t} precedes {self._last_t}")
        self._last_t = t
        if fix:
            self._seen_fix = True
        return SensorSample(
            t=t,
            az=az * self.meta.accel_scale,
            lat=lat,
            lon=lon,
            speed=speed,
            alt=alt,
            gps_fresh=bool(fix),
            gps_valid=self._seen_fix,
        )

    def finish(self) -> None:
        if not self._seen_fix:
            raise NoGpsFix("stream contains no valid GPS fix")


def _iter_lines(source: Source) -> Iterator[str]:
    # str is log content; use a Path for file names
    if isinstance(source, bytes):
        yield from source.decode("utf-8").splitlines()
    elif isinstance(source, str):
        yield from source.splitlines()
    elif isinstance(source, os.PathLike):
        with open(source, encoding="utf-8") as fh:
            yield from fh
    elif isinstance(source, io.IOBase) or hasattr(source, "read"):
        for line in source:  # type: ignore[union-attr]
            yield line.decode("utf-8") if isinstance(line, bytes) else line
    else:
        yield from source  # type: ignore[misc]


def parse_device_log(
    source: Source,
    meta: StreamMeta | None = None,
    lenient: bool = False,
    parser: LogParser | None = None,
) -> Iterator[SensorSample]:
    """Yield samples from a device log or canonical CSV in file order.

    Raises :class:`NoGpsFix` once the input is exhausted if no row had
    ``fix == 1``. Pass your own ``parser`` to read the row counters after
    iteration.
    """
    parser = parser or LogParser(meta, lenient)
    for line_no, line in enumerate(_iter_lines(source), start=1):
        sample = parser.feed(line, line_no)
        if sample is not None:
            yield sample
    parser.finish()


def _fmt(x: float) -> str:
    return repr(float(x))


def format_row(s: SensorSample, accel_scale: float = 1.0) -> str:
    return ",".join(
        (
            _fmt(s.t),
            "0.0",
            "0.0",
            _fmt(s.az / accel_scale),
            _fmt(s.lat),
            _fmt(s.lon),
            _fmt(s.speed),
            _fmt(s.alt),
            "1" if s.gps_fresh else "0",
        )
    )


def write_canonical_csv(
    samples: Iterable[SensorSample], meta: StreamMeta | None = None, out: IO[str] | None = None
) -> bytes | None:
    """Serialize samples to the canonical CSV.

    Returns the encoded bytes, or writes to ``out`` (text stream) and
    returns None. ``az`` is written in raw units (divided by
    ``meta.accel_scale``) so that parsing with the same meta round-trips.
    """
    scale = (meta or StreamMeta()).accel_scale
    if out is not None:
        out.write(HEADER + "\n")
        for s in samples:
            out.write(format_row(s, scale) + "\n")
        return None
    lines = [HEADER]
    lines.extend(format_row(s, scale) for s in samples)
    return ("\n".join(lines) + "\n").encode("utf-8")


def read_samples(path: str | Path, meta: StreamMeta | None = None, lenient: bool = False) -> list[SensorSample]:
    return list(parse_device_log(Path(path), meta, lenient))
