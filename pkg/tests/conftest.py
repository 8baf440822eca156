import math

import numpy as np
import pytest

from roadiri.geo import MILES_PER_KM, haversine
from roadiri.ingest import SensorSample
from roadiri.road_synth import SynthConfig, generate_profile, labeled_datasets, synthesize_stream
from roadiri.spectral import feature_matrix
from roadiri.trees import FitConfig, fit_boosted


def brute_dft(x):
    """O(N^2) DFT with integer twiddle indices reduced mod N."""
    x = np.asarray(x, dtype=complex)
    n = x.size
    k = np.arange(n)
    table = np.exp(-2j * np.pi * (k / n)) if n else k
    return table[np.outer(k, k) % n] @ x if n else x


def random_track(rng, n_fix=200, hold=(0, 6), step_m=(0.0, 40.0), t_step=200.0):
    """Samples along a random walk; each fix is followed by a few held rows."""
    lat, lon = rng.uniform(-60, 60), rng.uniform(-170, 170)
    t = 0.0
    out = []
    for _ in range(n_fix):
        out.append(SensorSample(t, float(rng.normal(9.81, 1)), lat, lon, 20.0, 100.0, True))
        for _ in range(int(rng.integers(hold[0], hold[1] + 1))):
            t += t_step / 8
            out.append(SensorSample(t, float(rng.normal(9.81, 1)), lat, lon, 20.0, 100.0, False))
        t += t_step
        d_m = rng.uniform(*step_m)
        brg = rng.uniform(0, 2 * math.pi)
        lat += d_m / 111_195.0 * math.cos(brg)
        lon += d_m / (111_195.0 * math.cos(math.radians(lat))) * math.sin(brg)
    return out


def path_miles(samples):
    fixes = [(s.lat, s.lon) for s in samples if s.gps_fresh and s.gps_valid]
    return sum(haversine(*a, *b) for a, b in zip(fixes, fixes[1:])) * MILES_PER_KM


@pytest.fixture(scope="session")
def one_mile_run():
    cfg = SynthConfig(road_class="A", seed=7, route_len=1.0)
    return synthesize_stream(generate_profile(cfg), cfg)


@pytest.fixture(scope="session")
def small_model():
    cfgs = [SynthConfig(gd_n0=g, seed=s, route_len=1.0, noise_sigma=0.1) for s, g in enumerate((1e-6, 4e-6, 1.6e-5))]
    ds = labeled_datasets(cfgs)
    return fit_boosted(feature_matrix(ds.features), ds.labels, FitConfig(n_trees=30, max_depth=3, min_samples_leaf=2))


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
