"""Adaptive robust tracking of planned joint references.

Each joint is a perturbed double integrator

    chi1' = chi2 + f1(chi2) + d1(t)
    chi2' = A*u + f2(chi1) + d2(t)

driven by a two-stage backstepping law.  The position subsystem gets the
virtual control ``u_v = -(k1 + k2*phi1)/2 * z1``; the input is
``u = -z1 - (k5 + k6*phi2)/2 * z2`` with ``z2 = e2 - u_v``.  The adaptive
gains follow

    phi1' = -k3*k4*phi1 + k2*k3*z1**2/2
    phi2' = -k7*k8*phi2 + k6*k7*z2**2/2

The scalar functions below are the reference implementation.  The 2 kHz
inner loop used for whole episodes runs the same arithmetic in a compiled
kernel (:func:`run_loop`).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import NamedTuple

import numba
import numpy as np

from .jbtg import Trajectory, sample_trajectory


class SimulationFault(RuntimeError):
    """Plant state became non-finite."""

    def __init__(self, msg: str, index: int = -1):
        super().__init__(msg)
        self.index = index


@dataclass(frozen=True)
class PlantState:
    chi1: float
    chi2: float

    def __post_init__(self):
        if not (math.isfinite(self.chi1) and math.isfinite(self.chi2)):
            raise SimulationFault(f"non-finite plant state ({self.chi1}, {self.chi2})")


@dataclass(frozen=True)
class TanhTerm:
    """Bounded state-dependent uncertainty ``amplitude*tanh(gain*x)``."""

    amplitude: float = 0.0
    gain: float = 1.0

    def __call__(self, x: float) -> float:
        return self.amplitude * math.tanh(self.gain * x)


@dataclass(frozen=True)
class SineSum:
    """Seeded sum of ``n_terms`` sinusoids, bounded by ``amplitude``.

    Frequencies are drawn uniformly in ``[f_lo, f_hi]`` Hz, phases uniformly;
    every term carries ``amplitude / n_terms``.
    """

    amplitude: float = 0.0
    seed: int = 0
    n_terms: int = 3
    f_lo: float = 0.2
    f_hi: float = 2.0

    def __post_init__(self):
        if self.amplitude < 0 or self.n_terms < 1 or not 0 <= self.f_lo <= self.f_hi:
            raise ValueError(f"invalid disturbance config {self}")

    @cached_property
    def terms(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        rng = np.random.default_rng(self.seed)
        omegas = 2 * np.pi * rng.uniform(self.f_lo, self.f_hi, self.n_terms)
        phases = rng.uniform(0.0, 2 * np.pi, self.n_terms)
        amps = np.full(self.n_terms, self.amplitude / self.n_terms)
        return amps, omegas, phases

    def __call__(self, t: float) -> float:
        amps, omegas, phases = self.terms
        return sum(a * math.sin(w * t + ph) for a, w, ph in zip(amps, omegas, phases))


@dataclass(frozen=True)
class PlantParams:
    A: float = 1.0
    f1: TanhTerm = TanhTerm()
    f2: TanhTerm = TanhTerm()
    d1: SineSum = SineSum()
    d2: SineSum = SineSum()

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("input gain A must be positive")

    @classmethod
    def disturbed(cls, seed: int = 0, A: float = 1.0) -> "PlantParams":
        """Default bounded uncertainty and disturbance model."""
        return cls(A=A, f1=TanhTerm(0.01, 10.0), f2=TanhTerm(0.5, 10.0),
                   d1=SineSum(0.01, seed=2 * seed), d2=SineSum(1.0, seed=2 * seed + 1))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PlantParams":
        return cls(A=float(d.get("A", 1.0)),
                   f1=TanhTerm(**d.get("f1", {})), f2=TanhTerm(**d.get("f2", {})),
                   d1=SineSum(**d.get("d1", {})), d2=SineSum(**d.get("d2", {})))


@dataclass(frozen=True)
class ControllerGains:
    k1: float = 600.0
    k2: float = 10.0
    k3: float = 1.0
    k4: float = 0.1
    k5: float = 2400.0
    k6: float = 10.0
    k7: float = 1.0
    k8: float = 0.1

    def __post_init__(self):
        for name, val in asdict(self).items():
            if not val > 0:
                raise ValueError(f"gain {name} must be positive, got {val}")

    def as_array(self) -> np.ndarray:
        return np.array(list(asdict(self).values()), dtype=float)

    def nominal_poles(self, A: float = 1.0) -> np.ndarray:
        """Closed-loop poles with disturbances off and both adaptive gains at 0."""
        # e1'' + A*k5/2 e1' + A*(1 + k1*k5/4) e1 = 0
        return np.roots([1.0, A * self.k5 / 2, A * (1.0 + self.k1 * self.k5 / 4)])


@dataclass(frozen=True)
class ControllerState:
    phi1_hat: float = 0.0
    phi2_hat: float = 0.0


@dataclass(frozen=True)
class ReferenceSample:
    x_r: float
    x_r_dot: float


class TrackingErrors(NamedTuple):
    e1: float
    e2: float
    z1: float
    z2: float
    u_v: float


def tracking_transform(state: PlantState, ref: ReferenceSample, gains: ControllerGains,
                       ctrl: ControllerState) -> TrackingErrors:
    e1 = state.chi1 - ref.x_r
    e2 = state.chi2 - ref.x_r_dot
    u_v = -0.5 * (gains.k1 + gains.k2 * ctrl.phi1_hat) * e1
    return TrackingErrors(e1, e2, e1, e2 - u_v, u_v)


def control_law(z1: float, z2: float, gains: ControllerGains, ctrl: ControllerState) -> float:
    return -z1 - 0.5 * (gains.k5 + gains.k6 * ctrl.phi2_hat) * z2


def adaptive_rates(ctrl: ControllerState, z1: float, z2: float,
                   gains: ControllerGains) -> tuple[float, float]:
    g = gains
    return (-g.k3 * g.k4 * ctrl.phi1_hat + 0.5 * g.k2 * g.k3 * z1 * z1,
            -g.k7 * g.k8 * ctrl.phi2_hat + 0.5 * g.k6 * g.k7 * z2 * z2)


@numba.njit(cache=True)
def _leaky(phi, rate, drive, h):
    # exact step of phi' = -rate*phi + drive with drive held over h
    decay = math.exp(-rate * h)
    return max(phi * decay + drive / rate * (1.0 - decay), 0.0)


def update_adaptive(ctrl: ControllerState, z1: float, z2: float, gains: ControllerGains,
                    dt_c: float) -> ControllerState:
    """Advance both adaptive gains over one controller period.

    The tracking errors are held for the period, so the linear leaky
    integrator is stepped exactly.  Results are clamped at 0 against
    round-off.
    """
    if not dt_c > 0:
        raise ValueError("dt_c must be positive")
    g = gains
    return ControllerState(
        _leaky(ctrl.phi1_hat, g.k3 * g.k4, 0.5 * g.k2 * g.k3 * z1 * z1, dt_c),
        _leaky(ctrl.phi2_hat, g.k7 * g.k8, 0.5 * g.k6 * g.k7 * z2 * z2, dt_c))


def _deriv(c1: float, c2: float, u: float, t: float, p: PlantParams) -> tuple[float, float]:
    return (c2 + p.f1(c2) + p.d1(t), p.A * u + p.f2(c1) + p.d2(t))


def plant_step(state: PlantState, u: float, params: PlantParams, dt_c: float,
               t: float = 0.0) -> PlantState:
    """Classical RK4 step with the input held constant."""
    if not dt_c > 0:
        raise ValueError("dt_c must be positive")
    h = dt_c
    c1, c2 = state.chi1, state.chi2
    a1, a2 = _deriv(c1, c2, u, t, params)
    b1, b2 = _deriv(c1 + h / 2 * a1, c2 + h / 2 * a2, u, t + h / 2, params)
    c1_, c2_ = _deriv(c1 + h / 2 * b1, c2 + h / 2 * b2, u, t + h / 2, params)
    d1, d2 = _deriv(c1 + h * c1_, c2 + h * c2_, u, t + h, params)
    return PlantState(c1 + h / 6 * (a1 + 2 * b1 + 2 * c1_ + d1),
                      c2 + h / 6 * (a2 + 2 * b2 + 2 * c2_ + d2))


# ---------------------------------------------------------------------------
# compiled multi-joint loop

LOG_FIELDS = ("t", "x_r", "xr_dot", "chi1", "chi2", "e1", "e2", "u", "phi1", "phi2")


@dataclass(frozen=True)
class LoopParams:
    """Array form of per-joint gains and plant parameters for :func:`run_loop`."""

    k: np.ndarray        # (n, 8)
    A: np.ndarray        # (n,)
    f_amp: np.ndarray    # (n, 2) for f1, f2
    f_gain: np.ndarray   # (n, 2)
    d_amp: np.ndarray    # (n, 2, K) for d1, d2
    d_omega: np.ndarray  # (n, 2, K)
    d_phase: np.ndarray  # (n, 2, K)

    @classmethod
    def build(cls, gains: list[ControllerGains], params: list[PlantParams]) -> "LoopParams":
        n = len(params)
        K = max(max(p.d1.n_terms, p.d2.n_terms) for p in params)
        d = np.zeros((3, n, 2, K))
        for i, p in enumerate(params):
            for j, s in enumerate((p.d1, p.d2)):
                for q, arr in enumerate(s.terms):
                    d[q, i, j, :len(arr)] = arr
        return cls(np.array([g.as_array() for g in gains]),
                   np.array([p.A for p in params], dtype=float),
                   np.array([[p.f1.amplitude, p.f2.amplitude] for p in params], dtype=float),
                   np.array([[p.f1.gain, p.f2.gain] for p in params], dtype=float),
                   d[0].copy(), d[1].copy(), d[2].copy())


@numba.njit(cache=True)
def _dist(amp, omega, phase, t):
    s = 0.0
    for q in range(amp.shape[0]):
        s += amp[q] * math.sin(omega[q] * t + phase[q])
    return s


@numba.njit(cache=True)
def _kernel(chi, phi, xr, xrd, t0, h, k, A, fa, fg, da, dw, dp, log, do_log):
    n, m = xr.shape
    for i in range(n):
        c1 = chi[i, 0]
        c2 = chi[i, 1]
        p1 = phi[i, 0]
        p2 = phi[i, 1]
        k1, k2, k3, k4, k5, k6, k7, k8 = k[i, 0], k[i, 1], k[i, 2], k[i, 3], k[i, 4], k[i, 5], k[i, 6], k[i, 7]
        for s in range(m):
            t = t0 + s * h
            e1 = c1 - xr[i, s]
            e2 = c2 - xrd[i, s]
            z1 = e1
            z2 = e2 + 0.5 * (k1 + k2 * p1) * z1
            u = -z1 - 0.5 * (k5 + k6 * p2) * z2
            if do_log:
                log[i, s, 0] = t
                log[i, s, 1] = xr[i, s]
                log[i, s, 2] = xrd[i, s]
                log[i, s, 3] = c1
                log[i, s, 4] = c2
                log[i, s, 5] = e1
                log[i, s, 6] = e2
                log[i, s, 7] = u
                log[i, s, 8] = p1
                log[i, s, 9] = p2
            p1 = _leaky(p1, k3 * k4, 0.5 * k2 * k3 * z1 * z1, h)
            p2 = _leaky(p2, k7 * k8, 0.5 * k6 * k7 * z2 * z2, h)
            # RK4, disturbances at t, t+h/2, t+h
            d1a = _dist(da[i, 0], dw[i, 0], dp[i, 0], t)
            d2a = _dist(da[i, 1], dw[i, 1], dp[i, 1], t)
            d1m = _dist(da[i, 0], dw[i, 0], dp[i, 0], t + 0.5 * h)
            d2m = _dist(da[i, 1], dw[i, 1], dp[i, 1], t + 0.5 * h)
            d1b = _dist(da[i, 0], dw[i, 0], dp[i, 0], t + h)
            d2b = _dist(da[i, 1], dw[i, 1], dp[i, 1], t + h)
            Au = A[i] * u
            ka1 = c2 + fa[i, 0] * math.tanh(fg[i, 0] * c2) + d1a
            ka2 = Au + fa[i, 1] * math.tanh(fg[i, 1] * c1) + d2a
            x1 = c1 + 0.5 * h * ka1
            x2 = c2 + 0.5 * h * ka2
            kb1 = x2 + fa[i, 0] * math.tanh(fg[i, 0] * x2) + d1m
            kb2 = Au + fa[i, 1] * math.tanh(fg[i, 1] * x1) + d2m
            x1 = c1 + 0.5 * h * kb1
            x2 = c2 + 0.5 * h * kb2
            kc1 = x2 + fa[i, 0] * math.tanh(fg[i, 0] * x2) + d1m
            kc2 = Au + fa[i, 1] * math.tanh(fg[i, 1] * x1) + d2m
            x1 = c1 + h * kc1
            x2 = c2 + h * kc2
            kd1 = x2 + fa[i, 0] * math.tanh(fg[i, 0] * x2) + d1b
            kd2 = Au + fa[i, 1] * math.tanh(fg[i, 1] * x1) + d2b
            c1 = c1 + h / 6.0 * (ka1 + 2.0 * kb1 + 2.0 * kc1 + kd1)
            c2 = c2 + h / 6.0 * (ka2 + 2.0 * kb2 + 2.0 * kc2 + kd2)
            if not (math.isfinite(c1) and math.isfinite(c2)):
                return i * m + s
        chi[i, 0] = c1
        chi[i, 1] = c2
        phi[i, 0] = p1
        phi[i, 1] = p2
    return -1


def run_loop(chi: np.ndarray, phi: np.ndarray, xr: np.ndarray, xrd: np.ndarray,
             t0: float, h: float, lp: LoopParams, log: bool = False) -> np.ndarray | None:
    """Run ``m`` controller periods for ``n`` joints, updating ``chi``/``phi`` in place.

    ``xr``/``xrd`` are ``(n, m)`` reference samples at the controller times
    ``t0 + s*h``.  Returns an ``(n, m, 10)`` log in :data:`LOG_FIELDS` order
    when requested.
    """
    n, m = xr.shape
    buf = np.empty((n, m, len(LOG_FIELDS)) if log else (0, 0, 0))
    bad = _kernel(chi, phi, xr, xrd, t0, h, lp.k, lp.A, lp.f_amp, lp.f_gain,
                  lp.d_amp, lp.d_omega, lp.d_phase, buf, log)
    if bad >= 0:
        raise SimulationFault(f"non-finite plant state in joint {bad // m} at "
                              f"controller step {bad % m} (t={t0 + (bad % m) * h:.6f}s)",
                              index=int(bad % m))
    return buf if log else None


@dataclass
class TrackingLog:
    data: np.ndarray = field(repr=False)  # (m, 10) in LOG_FIELDS order
    final_state: PlantState
    final_ctrl: ControllerState

    def __getattr__(self, name):
        if name in LOG_FIELDS:
            return self.data[:, LOG_FIELDS.index(name)]
        raise AttributeError(name)

    def __len__(self) -> int:
        return self.data.shape[0]


def track_trajectory(traj: Trajectory, state: PlantState, ctrl: ControllerState,
                     gains: ControllerGains, params: PlantParams, rate: float = 2000.0,
                     ref_rate: float = 1000.0, t0: float = 0.0) -> TrackingLog:
    """Closed-loop tracking of ``traj`` sampled at ``ref_rate``.

    The controller runs at ``rate`` and linearly interpolates the reference
    samples in between.
    """
    if rate < 2 * ref_rate:
        raise ValueError(f"controller rate {rate} below twice the reference rate {ref_rate}")
    samples = sample_trajectory(traj, ref_rate)
    ts = np.array([s.t for s in samples]) - traj.start.t
    m = int(round(traj.duration * rate))
    tc = np.arange(m) / rate
    xr = np.interp(tc, ts, [s.p for s in samples])[None, :]
    xrd = np.interp(tc, ts, [s.v for s in samples])[None, :]
    chi = np.array([[state.chi1, state.chi2]])
    phi = np.array([[ctrl.phi1_hat, ctrl.phi2_hat]])
    lp = LoopParams.build([gains], [params])
    buf = run_loop(chi, phi, xr, xrd, t0, 1.0 / rate, lp, log=True)
    return TrackingLog(buf[0], PlantState(chi[0, 0], chi[0, 1]),
                       ControllerState(phi[0, 0], phi[0, 1]))


def regulate(e0: tuple[float, float], duration: float, gains: ControllerGains,
             params: PlantParams, rate: float = 2000.0, x_hold: float = 0.0,
             ctrl: ControllerState = ControllerState()) -> TrackingLog:
    """Hold ``x_hold`` from an initial error ``e0 = (e1, e2)``."""
    m = int(round(duration * rate))
    xr = np.full((1, m), x_hold)
    xrd = np.zeros((1, m))
    chi = np.array([[x_hold + e0[0], e0[1]]])
    phi = np.array([[ctrl.phi1_hat, ctrl.phi2_hat]])
    buf = run_loop(chi, phi, xr, xrd, 0.0, 1.0 / rate, LoopParams.build([gains], [params]), log=True)
    return TrackingLog(buf[0], PlantState(chi[0, 0], chi[0, 1]),
                       ControllerState(phi[0, 0], phi[0, 1]))
