"""Synthetic road profiles and labeled 365 Hz sensor streams.

Profiles follow a displacement PSD Gd(n) = gd_n0 * (n / n0)^-2 with
n0 = 0.1 cycles/m, realised as a sum of cosines at the harmonic
wavenumbers k / L inside [0.01, 10] cycles/m with seeded uniform phases.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Iterator, Sequence

import numpy as np

from .errors import ProfileTooShort
from .geo import EARTH_RADIUS_KM, METERS_PER_MILE, GeoConfig, segment_stream
from .ingest import SensorSample
from .quarter_car import GOLDEN_CAR, GoldenCarParams, RoadProfile, compute_iri, simulate, smooth_profile, to_in_per_mi
from .spectral import SegmentFeatures, extract_features

GRAVITY = 9.81
N0 = 0.1
BAND = (0.01, 10.0)
DX = 0.05
CLASS_GD = {"A": 16e-6, "B": 64e-6, "C": 256e-6, "D": 1024e-6, "E": 4096e-6}
MPH = 0.44704  # m/s


@dataclass(frozen=True)
class SynthConfig:
    road_class: str = "A"
    gd_n0: float | None = None  # m^3, overrides road_class
    seed: int = 0
    route_len: float = 1.0  # miles
    speed_profile: tuple[float, ...] = (65 * MPH,)  # m/s, equal-length pieces
    noise_sigma: float = 0.05  # m/s^2
    fs: float = 365.0
    gps_rate: float = 5.0
    run_seed: int | None = None  # noise/wander stream; defaults to seed
    wander: float = 0.0  # 0..1, fraction of the traversed profile decorrelated from the base
    d_thr: float = 0.1  # miles
    start_lat: float = 38.958542
    start_lon: float = -92.206479
    heading_deg: float = 90.0
    base_alt: float = 231.0
    dx: float = DX
    vehicle: GoldenCarParams = GOLDEN_CAR  # suspension of the sensing vehicle
    roughness_sd: float = 0.0  # SD of ln(Gd) along the route; 0 keeps the profile stationary

    def __post_init__(self):
        if not self.route_len > 0:
            raise ValueError("route_len must be positive")
        if not self.speed_profile or min(self.speed_profile) <= 0:
            raise ValueError("speeds must be positive")
        if not (self.fs > 0 and 0 < self.gps_rate <= self.fs):
            raise ValueError("need fs > 0 and 0 < gps_rate <= fs")
        if not 0 <= self.wander <= 1:
            raise ValueError("wander must be in [0, 1]")
        if self.gd_n0 is None and self.road_class not in CLASS_GD:
            raise ValueError(f"unknown road class {self.road_class!r}")

    @property
    def roughness(self) -> float:
        return CLASS_GD[self.road_class] if self.gd_n0 is None else self.gd_n0

    @property
    def n_segments(self) -> int:
        return int(math.floor(self.route_len / self.d_thr + 1e-9))

    @property
    def runout_m(self) -> float:
        # past the last boundary the next GPS fix must still land on the profile
        return 20.0 + 2.0 * max(self.speed_profile) / self.gps_rate


def synth_length_m(cfg: SynthConfig) -> float:
    return cfg.route_len * METERS_PER_MILE + cfg.runout_m


def _cosine_sum(gd_n0: float, length_m: float, dx: float, rng: np.random.Generator) -> np.ndarray:
    m = int(math.ceil(length_m / dx)) + 1
    m += m % 2
    k = np.arange(m // 2 + 1)
    n = k / (m * dx)
    phases = rng.uniform(0.0, 2 * np.pi, k.size)
    mask = (n >= BAND[0]) & (n <= BAND[1]) & (k < m // 2)
    amp = np.zeros(k.size)
    if gd_n0 > 0:
        amp[mask] = np.sqrt(2.0 * gd_n0 * (n[mask] / N0) ** -2 / (m * dx))
    # irfft(c)[j] = sum_k amp_k cos(2 pi k j / m + phase_k) with this scaling
    return np.fft.irfft(0.5 * m * amp * np.exp(1j * phases), m)


def roughness_envelope(cfg: SynthConfig, n_points: int, n_terms: int = 8) -> np.ndarray | None:
    """Amplitude multiplier sqrt(Gd_local / Gd) along the route, or None if stationary.

    ln(Gd_local / Gd) is a zero-mean sum of cosines with wavelengths between
    150 m and 2 km and standard deviation ``roughness_sd``; it has its own
    RNG stream so the wander path can reuse it without the base profile.
    """
    if cfg.roughness_sd <= 0:
        return None
    rng = np.random.default_rng([cfg.seed, 1])
    wl = np.exp(rng.uniform(np.log(150.0), np.log(2000.0), n_terms))
    ph = rng.uniform(0.0, 2 * np.pi, n_terms)
    x = np.arange(n_points) * cfg.dx
    log_gd = cfg.roughness_sd * np.sqrt(2.0 / n_terms) * np.cos(2 * np.pi * x[:, None] / wl + ph).sum(axis=1)
    return np.exp(0.5 * log_gd)


def generate_profile(cfg: SynthConfig) -> RoadProfile:
    rng = np.random.default_rng(cfg.seed)
    elev = _cosine_sum(cfg.roughness, synth_length_m(cfg), cfg.dx, rng)
    env = roughness_envelope(cfg, elev.size)
    if env is not None:
        elev = elev * env
    return RoadProfile(cfg.dx, elev)


@dataclass(frozen=True)
class SegmentLabel:
    segment_index: int
    iri_mkm: float

    @property
    def iri_inmi(self) -> float:
        return to_in_per_mi(self.iri_mkm)


def segment_labels(
    profile: RoadProfile, n_segments: int, d_thr: float = 0.1, params: GoldenCarParams = GOLDEN_CAR
) -> list[SegmentLabel]:
    """Reference IRI of each exact d_thr slice, simulated at the golden speed."""
    seg_m = d_thr * METERS_PER_MILE
    if n_segments * seg_m > profile.length + 1e-9:
        raise ProfileTooShort("profile shorter than the labeled route")
    return [
        SegmentLabel(k, compute_iri(profile.slice_m(k * seg_m, (k + 1) * seg_m), params))
        for k in range(n_segments)
    ]


def destination(lat: float, lon: float, heading_deg: float, dist_m: np.ndarray, r_km: float = EARTH_RADIUS_KM):
    """Points at great-circle distance ``dist_m`` along a fixed initial heading."""
    p1, l1, th = math.radians(lat), math.radians(lon), math.radians(heading_deg)
    delta = np.asarray(dist_m) / (r_km * 1000.0)
    p2 = np.arcsin(math.sin(p1) * np.cos(delta) + math.cos(p1) * np.sin(delta) * math.cos(th))
    l2 = l1 + np.arctan2(math.sin(th) * np.sin(delta) * math.cos(p1), np.cos(delta) - math.sin(p1) * np.sin(p2))
    lon2 = (np.degrees(l2) + 540.0) % 360.0 - 180.0
    return np.degrees(p2), lon2


@dataclass
class SyntheticRun:
    """Column arrays of a synthesized stream plus its reference labels."""

    t_ms: np.ndarray
    az: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    speed: np.ndarray
    alt: np.ndarray
    fresh: np.ndarray
    labels: list[SegmentLabel]
    config: SynthConfig = field(default_factory=SynthConfig)

    def __len__(self) -> int:
        return self.t_ms.size

    def samples(self) -> Iterator[SensorSample]:
        cols = (self.t_ms, self.az, self.lat, self.lon, self.speed, self.alt)
        for t, az, la, lo, sp, al, fr in zip(*(c.tolist() for c in cols), self.fresh.tolist()):
            yield SensorSample(t, az, la, lo, sp, al, fr)


def _interval_speeds(cfg: SynthConfig, n_points: int) -> np.ndarray:
    route_m = cfg.route_len * METERS_PER_MILE
    mid = (np.arange(n_points - 1) + 0.5) * cfg.dx
    piece = np.minimum((mid / route_m * len(cfg.speed_profile)).astype(int), len(cfg.speed_profile) - 1)
    return np.asarray(cfg.speed_profile, dtype=float)[piece]


def synthesize_stream(
    profile: RoadProfile, cfg: SynthConfig, params: GoldenCarParams = GOLDEN_CAR
) -> SyntheticRun:
    need = synth_length_m(cfg)
    if profile.length < need - cfg.dx:
        raise ProfileTooShort(f"profile is {profile.length:.1f} m, route needs {need:.1f} m")
    run_rng = np.random.default_rng(cfg.seed if cfg.run_seed is None else cfg.run_seed)
    elev = profile.elev
    if cfg.wander > 0:
        # an independent profile with the same local RMS stands in for the offset wheel path
        other = _cosine_sum(cfg.roughness, profile.length, profile.dx, run_rng)[: elev.size]
        env = roughness_envelope(cfg, elev.size)
        if env is not None:
            other = other * env
        elev = math.sqrt(1.0 - cfg.wander**2) * elev + cfg.wander * other
    traversed = smooth_profile(RoadProfile(profile.dx, elev))
    spd = _interval_speeds(cfg, elev.size)
    resp = simulate(traversed.elev, profile.dx, spd, cfg.vehicle)

    n = int(math.floor(resp.t[-1] * cfg.fs)) + 1
    t = np.arange(n) / cfg.fs
    az = np.interp(t, resp.t, resp.accel) + GRAVITY
    if cfg.noise_sigma > 0:
        az = az + run_rng.normal(0.0, cfg.noise_sigma, n)
    x_prof = np.arange(elev.size) * profile.dx
    s = np.interp(t, resp.t, x_prof)
    seg = np.minimum(np.searchsorted(resp.t, t, side="right") - 1, spd.size - 1)
    speed = spd[seg]

    gps_tick = np.floor(np.arange(n) * cfg.gps_rate / cfg.fs + 1e-9).astype(np.int64)
    fresh = np.empty(n, dtype=bool)
    fresh[0] = True
    fresh[1:] = gps_tick[1:] != gps_tick[:-1]
    held = np.maximum.accumulate(np.where(fresh, np.arange(n), 0))
    fix_idx = np.flatnonzero(fresh)
    lat_f, lon_f = destination(cfg.start_lat, cfg.start_lon, cfg.heading_deg, s[fix_idx])
    lat = np.empty(n)
    lon = np.empty(n)
    lat[fix_idx], lon[fix_idx] = lat_f, lon_f
    lat, lon = lat[held], lon[held]
    alt = (cfg.base_alt + np.interp(s, x_prof, profile.elev))[held]
    speed = speed[held]

    labels = segment_labels(profile, cfg.n_segments, cfg.d_thr, params)
    return SyntheticRun(t * 1000.0, az, lat, lon, speed, alt, fresh, labels, cfg)


@dataclass
class LabeledDataset:
    features: list[SegmentFeatures]
    labels: np.ndarray  # in/mi
    provenance: list[SynthConfig]

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels differ in length")

    def __len__(self) -> int:
        return len(self.features)

    def concat(self, other: "LabeledDataset") -> "LabeledDataset":
        return LabeledDataset(
            self.features + other.features,
            np.concatenate([self.labels, other.labels]),
            self.provenance + other.provenance,
        )


def labeled_dataset(cfg: SynthConfig, params: GoldenCarParams = GOLDEN_CAR) -> LabeledDataset:
    """Synthesize one route and join its full-window features with labels."""
    run = synthesize_stream(generate_profile(cfg), cfg, params)
    by_index = {lab.segment_index: lab for lab in run.labels}
    feats, ys = [], []
    for w in segment_stream(run.samples(), GeoConfig(d_thr=cfg.d_thr), include_partial=False):
        lab = by_index.get(w.index)
        if lab is not None:
            feats.append(extract_features(w))
            ys.append(lab.iri_inmi)
    return LabeledDataset(feats, np.array(ys), [cfg] * len(feats))


def labeled_datasets(cfgs: Sequence[SynthConfig], params: GoldenCarParams = GOLDEN_CAR) -> LabeledDataset:
    out = LabeledDataset([], np.empty(0), [])
    for cfg in cfgs:
        out = out.concat(labeled_dataset(cfg, params))
    return out


LABEL_HEADER = ("segment_index", "iri_mkm", "iri_inmi")


def write_labels(labels: Sequence[SegmentLabel], out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(LABEL_HEADER)
    for lab in labels:
        w.writerow([lab.segment_index, repr(lab.iri_mkm), repr(lab.iri_inmi)])


def read_labels(path: str | Path) -> dict[int, float]:
    """segment_index -> IRI in in/mi."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "segment_index" not in reader.fieldnames or "iri_inmi" not in reader.fieldnames:
            raise ValueError(f"{path}: labels file needs segment_index and iri_inmi columns")
        return {int(r["segment_index"]): float(r["iri_inmi"]) for r in reader}


def with_class(cfg: SynthConfig, road_class: str) -> SynthConfig:
    return replace(cfg, road_class=road_class, gd_n0=None)
