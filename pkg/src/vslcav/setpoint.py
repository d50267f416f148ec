"""Desired-speed multiplexer and the rate-limiting ramp on its output."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace


class Source(enum.Enum):
    MEASURED_VEL = "MeasuredVel"
    VSL = "Vsl"
    USER = "User"


@dataclass(frozen=True)
class MuxInputs:
    engaged: bool
    vsl_valid: bool
    user_set_point: float
    vsl_set_point: float | None
    measured_velocity: float


def mux(inp: MuxInputs) -> tuple[float, Source]:
    """Two switches: disengaged passes the measured speed through so the ramp
    tracks the vehicle; engaged picks the VSL speed when valid, else the driver's."""
    if not inp.engaged:
        return inp.measured_velocity, Source.MEASURED_VEL
    if inp.vsl_valid:
        return inp.vsl_set_point, Source.VSL
    return inp.user_set_point, Source.USER


@dataclass(frozen=True)
class RampState:
    current_output: float
    up_rate: float = 1.5  # m/s per second
    down_rate: float = 2.0

    def __post_init__(self):
        if self.up_rate <= 0 or self.down_rate <= 0:
            raise ValueError("ramp rates must be positive")


def ramp(state: RampState, target: float, dt: float) -> tuple[RampState, float]:
    if dt <= 0:
        raise ValueError("dt must be positive")
    cur = state.current_output
    lo = cur - state.down_rate * dt
    hi = cur + state.up_rate * dt
    # snap when within a step so repeated float increments land exactly on target
    if abs(target - cur) <= 1e-12 or lo - 1e-12 <= target <= hi + 1e-12:
        out = target
    else:
        out = min(max(target, lo), hi)
    return replace(state, current_output=out), out
