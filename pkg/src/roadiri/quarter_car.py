"""Golden Car quarter-car simulation and reference IRI.

Equations per unit sprung mass, with road elevation ``p``::

    zs'' = -k2 (zs - zu) - c (zs' - zu')
    mu zu'' = k2 (zs - zu) + c (zs' - zu') - k1 (zu - p)

The profile is treated as piecewise linear between samples, so each
interval has an exact closed-form update x[i+1] = Phi x[i] + G0 p[i] + G1 p[i+1].
An RK4 integrator is provided as an independent cross-check.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import expm
from scipy.signal import lfilter

from .errors import ProfileTooShort

M_PER_KM_TO_IN_PER_MI = 63.36
SETTLE_M = 11.0
INIT_SLOPE_M = 0.5
BASELEN_M = 0.25


@dataclass(frozen=True)
class RoadProfile:
    dx: float  # m
    elev: np.ndarray  # m

    def __post_init__(self):
        elev = np.asarray(self.elev, dtype=float)
        object.__setattr__(self, "elev", elev)
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        if elev.ndim != 1 or elev.size < 2:
            raise ValueError("profile needs at least 2 points")
        if not np.all(np.isfinite(elev)):
            raise ValueError("profile contains non-finite elevations")

    @property
    def length(self) -> float:
        return (self.elev.size - 1) * self.dx

    def scaled(self, alpha: float) -> "RoadProfile":
        return RoadProfile(self.dx, self.elev * alpha)

    def slice_m(self, start: float, stop: float) -> "RoadProfile":
        i0 = int(round(start / self.dx))
        i1 = int(round(stop / self.dx))
        return RoadProfile(self.dx, self.elev[i0 : i1 + 1])


@dataclass(frozen=True)
class GoldenCarParams:
    k1: float = 653.0  # tire spring / sprung mass, 1/s^2
    k2: float = 63.3  # suspension spring / sprung mass, 1/s^2
    c: float = 6.0  # suspension damping / sprung mass, 1/s
    mu: float = 0.15  # unsprung / sprung mass
    v_sim: float = 80.0 / 3.6  # m/s

    def __post_init__(self):
        if min(self.k1, self.k2, self.c, self.mu, self.v_sim) <= 0:
            raise ValueError("quarter-car parameters must be positive")


GOLDEN_CAR = GoldenCarParams()


@dataclass
class QcResponse:
    t: np.ndarray  # s, at each profile point
    states: np.ndarray  # (n, 4): zs, zs_dot, zu, zu_dot
    accel: np.ndarray  # sprung-mass acceleration, m/s^2

    @property
    def rel_velocity(self) -> np.ndarray:
        return self.states[:, 1] - self.states[:, 3]


def smooth_profile(profile: RoadProfile, baselen: float = BASELEN_M) -> RoadProfile:
    """Moving average over ``baselen``.

    The ends are padded by point reflection (2*y[0] - y[i]), so straight
    lines pass through unchanged and no kink appears at either end.
    """
    if baselen < profile.dx:
        raise ValueError("baselen must be at least dx")
    k = max(1, int(round(baselen / profile.dx)))
    if k == 1:
        return profile
    left, right = (k - 1) // 2, k // 2
    y = profile.elev
    n = y.size
    if n <= max(left, right):
        raise ValueError("profile shorter than the smoothing base")
    ypad = np.concatenate((2 * y[0] - y[left:0:-1], y, 2 * y[-1] - y[-2 : -2 - right : -1]))
    csum = np.concatenate(([0.0], np.cumsum(ypad)))
    out = (csum[k:] - csum[:-k]) / k
    # cumulative sums leave rounding residue on constant input; keep it exact
    if np.all(y == y[0]):
        out = y.copy()
    return RoadProfile(profile.dx, out)


def _system(p: GoldenCarParams) -> tuple[np.ndarray, np.ndarray]:
    a = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [-p.k2, -p.c, p.k2, p.c],
            [0.0, 0.0, 0.0, 1.0],
            [p.k2 / p.mu, p.c / p.mu, -(p.k1 + p.k2) / p.mu, -p.c / p.mu],
        ]
    )
    b = np.array([0.0, 0.0, 0.0, p.k1 / p.mu])
    return a, b


@lru_cache(maxsize=256)
def _plan(p: GoldenCarParams, h: float):
    a, b = _system(p)
    m = np.zeros((6, 6))
    m[:4, :4] = a
    m[:4, 4] = b
    m[4, 5] = 1.0
    e = expm(m * h)
    phi = e[:4, :4]
    g1 = e[:4, 5] / h
    g0 = e[:4, 4] - g1
    lam, v = np.linalg.eig(phi)
    vinv = np.linalg.inv(v)
    return phi, g0, g1, lam, v, vinv


def transition(p: GoldenCarParams, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Phi, G0, G1) for one interval of duration ``h`` with linear input."""
    phi, g0, g1, *_ = _plan(p, h)
    return phi, g0, g1


def _run(p: GoldenCarParams, h: float, x0: np.ndarray, elev: np.ndarray) -> np.ndarray:
    # modal form of the exact recursion: each mode is a first-order IIR
    _, g0, g1, lam, v, vinv = _plan(p, h)
    u = np.outer(elev[:-1], vinv @ g0) + np.outer(elev[1:], vinv @ g1)
    w0 = vinv @ x0
    w = np.empty(u.shape, dtype=complex)
    for j in range(4):
        w[:, j] = lfilter([1.0], [1.0, -lam[j]], u[:, j], zi=[lam[j] * w0[j]])[0]
    return (w @ v.T).real


def initial_state(elev: np.ndarray, dx: float, v: float) -> np.ndarray:
    """Both masses at rest relative to the mean slope of the first 0.5 m."""
    j = min(max(1, int(round(INIT_SLOPE_M / dx))), elev.size - 1)
    slope = (elev[j] - elev[0]) / (j * dx)
    return np.array([elev[0], slope * v, elev[0], slope * v])


def simulate(
    elev: np.ndarray, dx: float, speeds: float | np.ndarray, params: GoldenCarParams = GOLDEN_CAR
) -> QcResponse:
    """Exact-discretization response at each profile point.

    ``speeds`` is either one travel speed or one speed per interval
    (length n - 1); runs of equal speed share one transition matrix.
    """
    elev = np.asarray(elev, dtype=float)
    n = elev.size
    spd = np.broadcast_to(np.asarray(speeds, dtype=float), (n - 1,))
    if np.any(spd <= 0):
        raise ValueError("speeds must be positive")
    states = np.empty((n, 4))
    states[0] = initial_state(elev, dx, float(spd[0]))
    change = np.flatnonzero(np.diff(spd)) + 1
    starts = np.concatenate(([0], change))
    stops = np.concatenate((change, [n - 1]))
    for a, b in zip(starts, stops):
        h = dx / float(spd[a])
        states[a + 1 : b + 1] = _run(params, h, states[a], elev[a : b + 1])
    t = np.concatenate(([0.0], np.cumsum(dx / spd)))
    accel = -params.k2 * (states[:, 0] - states[:, 2]) - params.c * (states[:, 1] - states[:, 3])
    return QcResponse(t=t, states=states, accel=accel)


def simulate_quarter_car(
    profile: RoadProfile, params: GoldenCarParams = GOLDEN_CAR, smooth: bool = True
) -> QcResponse:
    """Simulate at ``params.v_sim`` over the (optionally smoothed) profile."""
    _check_length(profile)
    prof = smooth_profile(profile) if smooth else profile
    return simulate(prof.elev, prof.dx, params.v_sim, params)


def _check_length(profile: RoadProfile) -> None:
    if profile.length <= SETTLE_M + profile.dx:
        raise ProfileTooShort(f"profile is {profile.length:.2f} m, need more than {SETTLE_M} m")


def _settle_index(dx: float) -> int:
    return int(np.ceil(SETTLE_M / dx - 1e-9))


def iri_from_response(rel_velocity: np.ndarray, dx: float, v: float, start: int = 0) -> float:
    """IRI in m/km from |zs' - zu'| sampled at profile points after ``start``.

    Each point i > start stands for the interval ending at it, which lasts
    dx / v seconds, so IRI = sum|dv| * (dx / v) / (count * dx) in m/m.
    """
    seg = np.abs(rel_velocity[start + 1 :])
    if seg.size == 0:
        raise ProfileTooShort("no intervals left after settle-in")
    return 1000.0 * float(seg.sum()) / (v * seg.size)


def compute_iri(profile: RoadProfile, params: GoldenCarParams = GOLDEN_CAR) -> float:
    """Reference IRI in m/km (multiply by 63.36 for in/mi)."""
    resp = simulate_quarter_car(profile, params)
    return iri_from_response(resp.rel_velocity, profile.dx, params.v_sim, _settle_index(profile.dx))


def to_in_per_mi(iri_m_km: float) -> float:
    return iri_m_km * M_PER_KM_TO_IN_PER_MI


# RK4 cross-check ---------------------------------------------------------


def simulate_rk4(
    elev: np.ndarray, dx: float, v: float, params: GoldenCarParams = GOLDEN_CAR, substeps: int = 1
) -> np.ndarray:
    """Classical RK4 with linear interpolation of the profile inside intervals.

    Returns the states at every fine step (``substeps`` per profile interval),
    shape ((n - 1) * substeps + 1, 4).
    """
    elev = np.asarray(elev, dtype=float)
    a, b = _system(params)
    h = dx / v / substeps
    # profile at fine steps and at fine half-steps
    n = elev.size
    xf = np.arange((n - 1) * 2 * substeps + 1) / (2 * substeps)
    pf = np.interp(xf, np.arange(n), elev)
    out = np.empty(((n - 1) * substeps + 1, 4))
    x = initial_state(elev, dx, v)
    out[0] = x
    for i in range(out.shape[0] - 1):
        p0, ph, p1 = pf[2 * i], pf[2 * i + 1], pf[2 * i + 2]
        k1 = a @ x + b * p0
        k2 = a @ (x + 0.5 * h * k1) + b * ph
        k3 = a @ (x + 0.5 * h * k2) + b * ph
        k4 = a @ (x + h * k3) + b * p1
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = x
    return out


def compute_iri_rk4(profile: RoadProfile, params: GoldenCarParams = GOLDEN_CAR, substeps: int = 10) -> float:
    """IRI from the RK4 path, accumulating |zs' - zu'| at every fine step."""
    _check_length(profile)
    prof = smooth_profile(profile)
    states = simulate_rk4(prof.elev, prof.dx, params.v_sim, params, substeps)
    rel = states[:, 1] - states[:, 3]
    return iri_from_response(rel, prof.dx / substeps, params.v_sim, _settle_index(prof.dx) * substeps)


# profile files -----------------------------------------------------------


def read_profile_csv(path: str | Path, tol: float = 1e-6) -> RoadProfile:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    x = np.array([float(r["x_m"]) for r in rows])
    z = np.array([float(r["elev_m"]) for r in rows])
    if x.size < 2:
        raise ValueError("profile file needs at least 2 rows")
    steps = np.diff(x)
    dx = float(steps.mean())
    if np.max(np.abs(steps - dx)) > tol:
        raise ValueError("profile spacing is not uniform")
    return RoadProfile(dx, z)


def write_profile_csv(profile: RoadProfile, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("x_m,elev_m\n")
        for i, z in enumerate(profile.elev):
            fh.write(f"{i * profile.dx!r},{float(z)!r}\n")
