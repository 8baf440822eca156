import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_dft
from roadiri.errors import EmptySignal, NonpositiveRate, TooShort
from roadiri.geo import GeoConfig, SegmentWindow, segment_stream
from roadiri.road_synth import SynthConfig, generate_profile, synthesize_stream
from roadiri.spectral import (
    dft,
    extract_features,
    feature_table_text,
    power_spectrum,
    read_feature_table,
    window_rate,
)


def window(az, fs=365.0, speed=29.06, alt=200.0, index=0):
    n = len(az)
    return SegmentWindow(
        index=index,
        start_lat=38.0,
        start_lon=-92.0,
        end_lat=38.0,
        end_lon=-91.998,
        length=0.1,
        az_series=np.asarray(az, dtype=float),
        speeds=np.full(n, speed),
        alts=np.full(n, alt),
        t_start=0.0,
        t_end=(n - 1) / fs * 1000.0,
    )


def test_dft_constant_and_impulse():
    np.testing.assert_allclose(dft(np.full(8, 3.0)), [24.0] + [0.0] * 7, atol=1e-12)
    np.testing.assert_allclose(dft([1.0, 0.0, 0.0, 0.0]), np.ones(4), atol=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 31, 32, 33, 64, 97, 100, 127, 128, 255, 1000, 1024, 2020])
def test_dft_matches_brute_force(n):
    x = np.random.default_rng(n).normal(size=n)
    ref = brute_dft(x)
    err = np.max(np.abs(dft(x) - ref)) / max(np.max(np.abs(ref)), 1e-300)
    assert err <= 1e-9


def test_dft_complex_input():
    rng = np.random.default_rng(5)
    x = rng.normal(size=77) + 1j * rng.normal(size=77)
    np.testing.assert_allclose(dft(x), brute_dft(x), rtol=0, atol=1e-10)


def test_dft_empty():
    with pytest.raises(EmptySignal):
        dft(np.array([]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=300))
def test_dft_property(xs):
    ref = brute_dft(xs)
    scale = max(np.max(np.abs(ref)), np.max(np.abs(xs)), 1.0)
    assert np.max(np.abs(dft(xs) - ref)) <= 1e-9 * scale * len(xs)


def test_sinusoid_single_bin():
    fs, n = 365.0, 3650
    t = np.arange(n) / fs
    sp = power_spectrum(np.sin(2 * np.pi * 12.0 * t), fs)
    k = np.argmax(sp.power)
    assert sp.freqs[k] == pytest.approx(12.0)
    assert sp.power[k] / sp.power.sum() > 0.999


@pytest.mark.parametrize("n", [2, 3, 365, 1000, 2021])
def test_parseval(n):
    x = np.random.default_rng(n).normal(size=n)
    sp = power_spectrum(x, 365.0)
    direct = np.sum((x - x.mean()) ** 2)
    assert sp.power.sum() == pytest.approx(direct, rel=1e-6)
    assert sp.freqs[-1] <= 365.0 / 2


def test_constant_signal_has_no_power():
    assert np.all(power_spectrum(np.full(50, 9.81), 365.0).power < 1e-20)


def test_power_spectrum_errors():
    with pytest.raises(EmptySignal):
        power_spectrum([], 365.0)
    with pytest.raises(NonpositiveRate):
        power_spectrum([1.0, 2.0], 0.0)
    with pytest.raises(TooShort):
        power_spectrum([1.0], 365.0)


def test_single_tone_features():
    fs, n, f0 = 365.0, 2000, 9.3
    az = 9.81 + 0.7 * np.sin(2 * np.pi * f0 * np.arange(n) / fs)
    f = extract_features(window(az))
    assert abs(f.df - f0) <= fs / n
    on_bin = 9.125  # 50 * fs / n
    g = extract_features(window(9.81 + 0.7 * np.sin(2 * np.pi * on_bin * np.arange(n) / fs)))
    assert g.df == pytest.approx(on_bin)
    assert g.mxp >= 0.99 * g.auc


def test_two_tones():
    fs, n = 365.0, 3650
    t = np.arange(n) / fs
    f = extract_features(window(np.sin(2 * np.pi * 10 * t) + np.sin(2 * np.pi * 20 * t)))
    assert f.auc == pytest.approx(2 * f.mxp, rel=0.05)


def test_feature_invariants_and_scaling():
    rng = np.random.default_rng(3)
    az = 9.81 + rng.normal(size=1500)
    f = extract_features(window(az))
    assert f.mxp >= f.mp >= 0 and f.sdp >= 0 and f.auc >= 0
    assert 0 < f.df <= f.fs / 2
    assert f.mean_alt == 200.0 and f.mean_speed == pytest.approx(29.06)
    g = extract_features(window(9.81 + 3.0 * (az - 9.81)))
    for a, b in ((f.auc, g.auc), (f.mp, g.mp), (f.sdp, g.sdp), (f.mxp, g.mxp)):
        assert b == pytest.approx(9.0 * a, rel=1e-9)
    assert g.df == f.df
    assert extract_features(window(az)) == f


def test_window_rate_uses_effective_span():
    w = window(np.zeros(366))
    assert window_rate(w) == pytest.approx(365.0)
    w.t_end = w.t_start
    with pytest.raises(NonpositiveRate):
        window_rate(w)
    with pytest.raises(TooShort):
        extract_features(window([9.81]))


def test_rough_window_exceeds_smooth():
    feats = {}
    for cls in ("A", "D"):
        cfg = SynthConfig(road_class=cls, seed=4, route_len=0.3)
        run = synthesize_stream(generate_profile(cfg), cfg)
        w = next(segment_stream(run.samples(), GeoConfig(), include_partial=False))
        feats[cls] = extract_features(w)
    a, d = feats["A"], feats["D"]
    assert d.auc > a.auc and d.mp > a.mp and d.sdp > a.sdp and d.mxp > a.mxp


def test_feature_table_round_trip():
    rng = np.random.default_rng(1)
    rows = [extract_features(window(9.81 + rng.normal(size=400), index=i)) for i in range(4)]
    text = feature_table_text(rows)
    assert text.splitlines()[0].startswith("index,auc,mp,sdp,mxp,df,mean_speed,mean_alt")
    assert read_feature_table(io.StringIO(text)) == rows
    with pytest.raises(ValueError):
        read_feature_table(io.StringIO("index,auc\n0,1\n"))
