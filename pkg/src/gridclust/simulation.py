"""
Linear step-response simulation of the full state model.

x' = A x + u with a constant input switched on at t = 0, integrated with the
classical fourth-order Runge-Kutta scheme. For a linear time-invariant system
one RK4 step is the fixed map x -> Phi x + Gamma u with Phi and Gamma the
fourth-order Taylor polynomials of exp(A dt), so the propagator is built
once and applied at every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import SimulationError
from .oracle import StateMatrix

DEFAULT_DT = 1e-4
DEFAULT_DURATION = 1.0
RK4_STABILITY_LIMIT = 2.5


@dataclass(frozen=True)
class Scenario:
    """Active (``dp``) and reactive (``dq``) power steps in p.u., keyed by bus id.

    A positive step is extra demand at that bus.
    """

    dp: dict = field(default_factory=dict)
    dq: dict = field(default_factory=dict)
    duration: float = DEFAULT_DURATION
    dt: float = DEFAULT_DT
    record_every: int = 1

    def __post_init__(self):
        if not self.duration > 0:
            raise SimulationError("duration must be > 0")
        if not self.dt > 0:
            raise SimulationError("time step must be > 0")
        if self.dt > self.duration / 100 * (1 + 1e-12):
            raise SimulationError("time step must not exceed duration / 100")
        if self.record_every < 1:
            raise SimulationError("record_every must be >= 1")


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    bus_ids: tuple[str, ...]

    @property
    def v(self) -> int:
        return len(self.bus_ids)

    def _block(self, k: int) -> np.ndarray:
        return self.x[:, k * self.v:(k + 1) * self.v]

    @property
    def theta(self) -> np.ndarray:
        return self._block(0)

    @property
    def omega(self) -> np.ndarray:
        return self._block(1)

    @property
    def V(self) -> np.ndarray:
        return self._block(2)

    def column(self, quantity: str, bus: str) -> np.ndarray:
        blocks = {"theta": self.theta, "omega": self.omega, "V": self.V}
        return blocks[quantity][:, self.bus_ids.index(bus)]


def input_vector(sm: StateMatrix, scenario: Scenario) -> np.ndarray:
    u = np.zeros(5 * sm.v)
    for bus, dp in scenario.dp.items():
        i = _bus_pos(sm, bus)
        u[sm.v + i] = -sm.omega0 * sm.m[i] * dp / sm.tau
    for bus, dq in scenario.dq.items():
        i = _bus_pos(sm, bus)
        u[2 * sm.v + i] = -sm.n[i] * dq / sm.tau
    return u


def _bus_pos(sm: StateMatrix, bus: str) -> int:
    try:
        return sm.bus_ids.index(bus)
    except ValueError:
        raise SimulationError(f"no inverter at bus {bus!r}") from None


def rk4_propagator(A: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """(Phi, Gamma) with x_{n+1} = Phi x_n + Gamma u for one RK4 step."""
    n = A.shape[0]
    I = np.eye(n)
    h = dt * A
    h2 = h @ h
    h3 = h2 @ h
    Phi = I + h + h2 / 2 + h3 / 6 + h3 @ h / 24
    Gamma = dt * (I + h / 2 + h2 / 6 + h3 / 24)
    return Phi, Gamma


def step_response(sm: StateMatrix, scenario: Scenario, x0=None) -> Trajectory:
    """Integrate the deviation model from equilibrium (or ``x0``) under the scenario's steps."""
    A = np.asarray(sm.A)
    lam_max = np.abs(np.linalg.eigvals(A)).max() if A.size else 0.0
    if lam_max * scenario.dt > RK4_STABILITY_LIMIT:
        raise SimulationError(
            f"time step too large for the fastest mode (|lambda| = {lam_max:.4g} 1/s); "
            f"use dt <= {RK4_STABILITY_LIMIT / lam_max:.3g} s"
        )
    n_steps = int(round(scenario.duration / scenario.dt))
    u = input_vector(sm, scenario)
    Phi, Gamma = rk4_propagator(A, scenario.dt)
    gu = Gamma @ u
    x = np.zeros(A.shape[0]) if x0 is None else np.array(x0, dtype=float)
    every = scenario.record_every
    rows = [x.copy()]
    for step in range(1, n_steps + 1):
        x = Phi @ x + gu
        if step % every == 0:
            rows.append(x.copy())
    t = np.arange(len(rows)) * scenario.dt * every
    return Trajectory(t=t, x=np.array(rows), bus_ids=sm.bus_ids)


def oscillation_signal(traj: Trajectory, m) -> np.ndarray:
    """Frequency deviations with the synchronous (common) component removed.

    The common frequency is the 1/m-weighted mean, which is exactly the
    component along the zero-eigenvalue cluster in a connected lines-only
    network.
    """
    w = 1.0 / np.asarray(m, dtype=float)
    common = traj.omega @ w / w.sum()
    return traj.omega - common[:, None]


def envelope_growth_rate(t, y, start_fraction: float = 0.5) -> float:
    """Slope of log(envelope) fitted over the tail of the record.

    ``y`` may be (T,) or (T, k); the envelope is taken from local maxima of the
    row norm.
    """
    y = np.asarray(y)
    amp = np.linalg.norm(y, axis=1) if y.ndim == 2 else np.abs(y)
    peaks, _ = find_peaks(amp)
    t0 = t[0] + start_fraction * (t[-1] - t[0])
    peaks = peaks[t[peaks] >= t0]
    if peaks.size < 3:
        raise SimulationError("too few oscillation peaks to fit an envelope")
    slope, _ = np.polyfit(t[peaks], np.log(amp[peaks]), 1)
    return float(slope)
