"""FFT, one-sided power spectrum and per-window spectral features."""

from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields
from functools import lru_cache
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import EmptySignal, NonpositiveRate, TooShort
from .geo import SegmentWindow

FEATURE_NAMES = ("auc", "mp", "sdp", "mxp", "df", "mean_speed", "mean_alt")
_BASE = 32  # direct-DFT block size at the bottom of the radix-2 recursion


@lru_cache(maxsize=None)
def _dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    # reduce k*j mod n before scaling so twiddles stay exact for large n
    return np.exp(-2j * np.pi * (np.outer(k, k) % n) / n)


@lru_cache(maxsize=64)
def _stage_twiddles(m: int) -> np.ndarray:
    return np.exp(-1j * np.pi * np.arange(m) / m)[:, None]


def _fft_pow2(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    b = min(n, _BASE)
    # each column is a decimated subsequence x[c::n/b]; combine upward
    X = _dft_matrix(b) @ x.reshape(b, -1)
    while X.shape[0] < n:
        half = X.shape[1] // 2
        even, odd = X[:, :half], X[:, half:]
        t = _stage_twiddles(X.shape[0]) * odd
        X = np.vstack([even + t, even - t])
    return X.ravel()


@lru_cache(maxsize=32)
def _bluestein_plan(n: int):
    m = 1 << (2 * n - 2).bit_length()
    k = np.arange(n, dtype=np.int64)
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    kernel = np.zeros(m, dtype=complex)
    kernel[:n] = np.conj(chirp)
    kernel[m - n + 1 :] = np.conj(chirp[1:])[::-1]
    return m, chirp, _fft_pow2(kernel)


def _ifft_pow2(X: np.ndarray) -> np.ndarray:
    return np.conj(_fft_pow2(np.conj(X))) / X.shape[0]


def dft(signal: Sequence[float] | np.ndarray) -> np.ndarray:
    """Exact-length discrete Fourier transform, A(k) = sum_n a(n) exp(-2j*pi*k*n/N).

    Power-of-two lengths use an iterative radix-2 transform; every other
    length goes through Bluestein's chirp-z convolution, so the cost is
    O(N log N) for all N with no zero padding of the result.
    """
    x = np.asarray(signal, dtype=complex)
    n = x.shape[0]
    if n == 0:
        raise EmptySignal("cannot transform an empty signal")
    if n & (n - 1) == 0:
        return _fft_pow2(x)
    m, chirp, kernel_f = _bluestein_plan(n)
    a = np.zeros(m, dtype=complex)
    a[:n] = x * chirp
    conv = _ifft_pow2(_fft_pow2(a) * kernel_f)
    return conv[:n] * chirp


@dataclass(frozen=True)
class Spectrum:
    freqs: np.ndarray  # Hz, k * fs / N for k = 0..N//2
    power: np.ndarray


def power_spectrum(signal: Sequence[float] | np.ndarray, fs: float) -> Spectrum:
    """One-sided power of the mean-removed signal, P(k) = |A(k)|^2 / N.

    Interior bins are doubled so that the bins sum to sum((x - mean)^2).
    """
    x = np.asarray(signal, dtype=float)
    n = x.shape[0]
    if n == 0:
        raise EmptySignal("cannot transform an empty signal")
    if not fs > 0:
        raise NonpositiveRate(f"sample rate must be positive, got {fs}")
    if n < 2:
        raise TooShort("power spectrum needs at least 2 samples")
    a = dft(x - x.mean())
    half = n // 2
    power = np.abs(a[: half + 1]) ** 2 / n
    if n % 2 == 0:
        power[1:half] *= 2
    else:
        power[1:] *= 2
    return Spectrum(freqs=np.arange(half + 1) * (fs / n), power=power)


@dataclass(frozen=True)
class SegmentFeatures:
    index: int
    auc: float
    mp: float
    sdp: float
    mxp: float
    df: float
    mean_speed: float
    mean_alt: float
    n_samples: int
    fs: float
    lat0: float = 0.0
    lon0: float = 0.0
    lat1: float = 0.0
    lon1: float = 0.0
    length_mi: float = 0.0

    def vector(self) -> np.ndarray:
        return np.array([self.auc, self.mp, self.sdp, self.mxp, self.df, self.mean_speed, self.mean_alt])


def window_rate(window: SegmentWindow) -> float:
    """Effective sample rate of a window from its first and last timestamps."""
    n = window.n_samples
    span_s = (window.t_end - window.t_start) / 1000.0
    if span_s <= 0:
        raise NonpositiveRate(f"window {window.index} has zero duration")
    return (n - 1) / span_s


def extract_features(window: SegmentWindow) -> SegmentFeatures:
    n = window.n_samples
    if n < 2:
        raise TooShort(f"window {window.index} has {n} samples, need at least 2")
    fs = window_rate(window)
    spec = power_spectrum(window.az_series, fs)
    bins = spec.power[1:]  # DC is zero after mean removal
    k = int(np.argmax(bins))
    return SegmentFeatures(
        index=window.index,
        auc=float(bins.sum()),
        mp=float(bins.mean()),
        sdp=float(bins.std()),
        mxp=float(bins[k]),
        df=float(spec.freqs[k + 1]),
        mean_speed=float(np.mean(window.speeds)),
        mean_alt=float(np.mean(window.alts)),
        n_samples=n,
        fs=fs,
        lat0=window.start_lat,
        lon0=window.start_lon,
        lat1=window.end_lat,
        lon1=window.end_lon,
        length_mi=window.length,
    )


def feature_matrix(rows: Sequence[SegmentFeatures]) -> np.ndarray:
    if not rows:
        return np.empty((0, len(FEATURE_NAMES)))
    return np.vstack([r.vector() for r in rows])


TABLE_HEADER = tuple(f.name for f in fields(SegmentFeatures))


def write_feature_table(rows: Iterable[SegmentFeatures], out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TABLE_HEADER)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in astuple(r)])


def read_feature_table(source: str | Path | IO[str]) -> list[SegmentFeatures]:
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return read_feature_table(fh)
    reader = csv.DictReader(source)
    missing = set(TABLE_HEADER) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"feature table missing columns: {sorted(missing)}")
    out = []
    for row in reader:
        vals = {}
        for f in fields(SegmentFeatures):
            vals[f.name] = int(row[f.name]) if f.name in ("index", "n_samples") else float(row[f.name])
        out.append(SegmentFeatures(**vals))
    return out


def feature_table_text(rows: Iterable[SegmentFeatures]) -> str:
    buf = io.StringIO()
    write_feature_table(rows, buf)
    return buf.getvalue()
