"""Discrete PI velocity loops, a first-order velocity plant and step metrics.

The controlled command follows ``v_c = v_actual + u`` where
``u = kp*e + ki*integral(e)``; the same structure is used for the linear and
the angular loop.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from follower.kinematics import BodyTwist

CONTROL_DT = 0.01
INTEGRAL_LIMIT = 5.0
PLANT_TAU = 0.15


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float = 0.0
    kd: float = 0.0

    def __post_init__(self):
        if self.kp < 0 or self.ki < 0:
            raise ValueError("gains must be non-negative")
        if self.kd != 0:
            raise ValueError("derivative action is not supported (PI only)")


# Result of tune_gains() over kp in [0.5, 10] x ki in [0, 50] on the
# tau=0.15 s plant at dt=1 ms (see scripts/tune_gains.py).
DEFAULT_GAINS = PidGains(kp=1.3, ki=0.0)


@dataclass
class PiState:
    dt: float = CONTROL_DT
    integral: float = 0.0
    integral_limit: float = INTEGRAL_LIMIT

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def reset(self) -> None:
        self.integral = 0.0


@dataclass
class PlantModel:
    """First-order lag from commanded to actual velocity."""

    tau: float = PLANT_TAU
    state: float = 0.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class StepMetrics:
    rise_time: Optional[float]
    settling_time: Optional[float]
    overshoot_pct: float

    def to_json(self) -> dict:
        return {
            "rise_time_10_90": self.rise_time,
            "settling_time_2pct": self.settling_time,
            "overshoot_pct": self.overshoot_pct,
        }


def pi_update(state: PiState, gains: PidGains, error: float) -> float:
    """Advance the rectangular integral by one tick and return the PI output."""
    lim = state.integral_limit
    state.integral = min(lim, max(-lim, state.integral + error * state.dt))
    return gains.kp * error + gains.ki * state.integral


def controlled_twist(
    actual: BodyTwist,
    desired: BodyTwist,
    v_pi: PiState,
    w_pi: PiState,
    gains_v: PidGains,
    gains_w: PidGains,
) -> BodyTwist:
    u_v = pi_update(v_pi, gains_v, desired.v - actual.v)
    u_w = pi_update(w_pi, gains_w, desired.w - actual.w)
    return BodyTwist(actual.v + u_v, actual.w + u_w)


def plant_step(plant: PlantModel, command: float, dt: float) -> float:
    """Zero-order-hold step of the first-order lag; returns the new state."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    plant.state += (command - plant.state) * (1.0 - math.exp(-dt / plant.tau))
    return plant.state


# ---------------------------------------------------------------- step response


def simulate_step(
    gains: PidGains,
    plant_tau: float = PLANT_TAU,
    dt: float = 0.001,
    duration: float = 2.0,
    setpoint: float = 1.0,
    integral_limit: float = INTEGRAL_LIMIT,
):
    """Closed-loop response from rest; returns arrays ``(t, output, u)``.

    ``t[0] = 0`` with the output at rest; ``u[k]`` is the control effort
    applied over ``[t[k], t[k+1])`` (the last entry repeats).
    """
    n = int(round(duration / dt))
    pi = PiState(dt=dt, integral_limit=integral_limit)
    plant = PlantModel(tau=plant_tau)
    t = np.arange(n + 1) * dt
    y = np.zeros(n + 1)
    u = np.zeros(n + 1)
    for k in range(n):
        u[k] = pi_update(pi, gains, setpoint - plant.state)
        y[k + 1] = plant_step(plant, plant.state + u[k], dt)
    u[n] = u[n - 1] if n else 0.0
    return t, y, u


def _crossing(t, y, level) -> Optional[float]:
    idx = np.nonzero(y >= level)[0]
    if idx.size == 0:
        return None
    k = int(idx[0])
    if k == 0:
        return float(t[0])
    y0, y1 = y[k - 1], y[k]
    return float(t[k - 1] + (level - y0) / (y1 - y0) * (t[k] - t[k - 1]))


def response_metrics(t, y, setpoint: float = 1.0, band: float = 0.02) -> StepMetrics:
    """10-90 % rise, last exit from the +/-band settling time, overshoot %."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    t10 = _crossing(t, y, 0.1 * setpoint)
    t90 = _crossing(t, y, 0.9 * setpoint)
    rise = None if t10 is None or t90 is None else t90 - t10

    outside = np.abs(y - setpoint) > band * abs(setpoint)
    if outside[-1]:
        settling = None
    elif not outside.any():
        settling = 0.0
    else:
        k = int(np.nonzero(outside)[0][-1])
        # interpolate where the response re-enters the band
        target = setpoint + math.copysign(band * abs(setpoint), y[k] - setpoint)
        y0, y1 = y[k], y[k + 1]
        frac = (target - y0) / (y1 - y0) if y1 != y0 else 1.0
        settling = float(t[k] + frac * (t[k + 1] - t[k]))

    overshoot = max(0.0, (float(y.max()) - setpoint) / setpoint * 100.0)
    return StepMetrics(rise, settling, overshoot)


def step_response_metrics(
    gains: PidGains,
    plant_tau: float = PLANT_TAU,
    dt: float = 0.001,
    duration: float = 2.0,
    setpoint: float = 1.0,
) -> StepMetrics:
    if dt > 0.005:
        raise ValueError("dt must be <= 5 ms for metric resolution")
    t, y, _ = simulate_step(gains, plant_tau, dt, duration, setpoint)
    return response_metrics(t, y, setpoint)


def tune_gains(
    target_rise: float = 0.254,
    target_settling: float = 0.451,
    kp_grid=None,
    ki_grid=None,
    plant_tau: float = PLANT_TAU,
    dt: float = 0.001,
    duration: float = 3.0,
    max_overshoot_pct: float = 1e-6,
):
    """Grid search for the PI pair closest to the target rise/settling times.

    Only pairs without overshoot are eligible.  Returns
    ``(best_gains, best_metrics, table)`` where ``table`` lists every
    evaluated ``(kp, ki, metrics, cost)``.
    """
    kp_grid = np.round(np.arange(0.5, 10.0 + 1e-9, 0.1), 3) if kp_grid is None else kp_grid
    ki_grid = np.round(np.arange(0.0, 50.0 + 1e-9, 0.5), 3) if ki_grid is None else ki_grid
    best = None
    table = []
    for kp, ki in itertools.product(kp_grid, ki_grid):
        gains = PidGains(float(kp), float(ki))
        m = step_response_metrics(gains, plant_tau, dt, duration)
        if m.rise_time is None or m.settling_time is None:
            cost = math.inf
        elif m.overshoot_pct > max_overshoot_pct:
            cost = math.inf
        else:
            cost = abs(m.rise_time - target_rise) + abs(m.settling_time - target_settling)
        table.append((gains.kp, gains.ki, m, cost))
        if best is None or cost < best[2]:
            best = (gains, m, cost)
    return best[0], best[1], table
