import io
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadiri.errors import MalformedLine, NoGpsFix, TimestampRegression
from roadiri.ingest import HEADER, LogParser, SensorSample, StreamMeta, parse_device_log, read_samples, write_canonical_csv
from roadiri.road_synth import SynthConfig, generate_profile, synthesize_stream

LINE = "1204,-0.02,0.01,9.83,38.958542,-92.206479,29.1,231.0,1"


def test_field_mapping():
    (s,) = parse_device_log(LINE, StreamMeta(accel_scale=2.0))
    assert s == SensorSample(1204.0, 9.83 * 2.0, 38.958542, -92.206479, 29.1, 231.0, True, True)


def test_header_is_optional():
    assert list(parse_device_log(HEADER + "\n" + LINE)) == list(parse_device_log(LINE))


def test_empty_input_raises_on_finish():
    it = parse_device_log("")
    with pytest.raises(NoGpsFix):
        next(it)


def test_rows_before_first_fix_are_flagged():
    text = "0,0,0,9.8,38.0,-92.0,10,200,0\n10,0,0,9.8,38.0,-92.0,10,200,1\n20,0,0,9.8,38.0,-92.0,10,200,0\n"
    got = list(parse_device_log(text))
    assert [s.gps_valid for s in got] == [False, True, True]
    assert [s.gps_fresh for s in got] == [False, True, False]


@pytest.mark.parametrize(
    "bad",
    [
        "1,2,3",
        "x,0,0,9.8,38,-92,10,200,1",
        "5,0,0,nan,38,-92,10,200,1",
        "5,0,0,9.8,38,-92,10,200,2",
        "5,0,0,9.8,91,-92,10,200,1",
        "5,0,0,9.8,38,-181,10,200,1",
        "5,0,0,9.8,38,-92,-1,200,1",
    ],
)
def test_malformed_rows(bad):
    text = LINE + "\n" + bad + "\n"
    with pytest.raises(MalformedLine) as info:
        list(parse_device_log(text))
    assert info.value.line_no == 2


def test_timestamp_regression_is_an_error():
    text = LINE + "\n" + LINE.replace("1204", "1203", 1)
    with pytest.raises(TimestampRegression):
        list(parse_device_log(text))
    # equal timestamps are allowed
    assert len(list(parse_device_log(LINE + "\n" + LINE))) == 2


def test_lenient_counts():
    rows = [LINE, "garbage", LINE.replace("1204", "1300", 1), "1,2", LINE.replace("1204", "1100", 1)]
    parser = LogParser(lenient=True)
    got = list(parse_device_log("\n".join(rows), parser=parser))
    assert len(got) == 2
    assert parser.rows == 5 and parser.emitted == 2 and parser.skipped == 3
    assert [e.line_no for e in parser.errors] == [2, 4, 5]


def test_sources(tmp_path):
    path = tmp_path / "log.csv"
    path.write_text(HEADER + "\n" + LINE + "\n", encoding="utf-8")
    expected = list(parse_device_log(LINE))
    assert read_samples(path) == expected
    assert list(parse_device_log(Path(path))) == expected
    assert list(parse_device_log(LINE.encode())) == expected
    assert list(parse_device_log(io.BytesIO(LINE.encode()))) == expected
    assert list(parse_device_log(io.StringIO(LINE))) == expected
    assert list(parse_device_log([LINE])) == expected


def test_writer_shapes():
    assert write_canonical_csv([]) == (HEADER + "\n").encode()
    one = write_canonical_csv(parse_device_log(LINE)).decode().splitlines()
    assert len(one) == 2 and one[0] == HEADER


def test_round_trip_synthetic():
    cfg = SynthConfig(route_len=0.5, seed=3)
    run = synthesize_stream(generate_profile(cfg), cfg)
    samples = list(run.samples())[:10_000]
    meta = StreamMeta(accel_scale=9.81 / 16384)
    back = list(parse_device_log(write_canonical_csv(samples, meta), meta))
    assert len(back) == len(samples)
    a = np.array([s[:6] for s in samples])
    b = np.array([s[:6] for s in back])
    np.testing.assert_allclose(b, a, rtol=0, atol=1e-9)
    assert [s.gps_fresh for s in back] == [s.gps_fresh for s in samples]


def test_3650_rows_span_ten_seconds():
    cfg = SynthConfig(route_len=0.5, seed=1)
    run = synthesize_stream(generate_profile(cfg), cfg)
    rows = list(parse_device_log(write_canonical_csv(list(run.samples())[:3650])))
    span = rows[-1].t - rows[0].t
    # 3650 rows at 365 Hz cover 3649 sample intervals
    assert span == pytest.approx(3649 / 365.0 * 1000.0, abs=1.0)
    assert abs(span - 10_000.0) < 1000.0 / 365.0 + 1.0


sample_st = st.builds(
    SensorSample,
    t=st.floats(0, 1e9),
    az=st.floats(-1e3, 1e3),
    lat=st.floats(-90, 90),
    lon=st.floats(-180, 180),
    speed=st.floats(0, 100),
    alt=st.floats(-500, 9000),
    gps_fresh=st.just(True),
    gps_valid=st.just(True),
)


@settings(max_examples=50, deadline=None)
@given(st.lists(sample_st, min_size=1, max_size=30))
def test_round_trip_property(samples):
    samples = sorted(samples, key=lambda s: s.t)
    back = list(parse_device_log(write_canonical_csv(samples)))
    assert back == samples
