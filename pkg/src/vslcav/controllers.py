"""Longitudinal control: proportional speed tracking, barrier-function safety
filter, and min-selection between the two."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional


class Active(enum.Enum):
    NOMINAL = "Nominal"
    SAFETY_FILTER = "SafetyFilter"


@dataclass(frozen=True)
class ControllerParams:
    k_p: float = 0.8
    k_cbf: float = 0.1
    t_min: float = 2.0
    s_min: float = 15.0
    u_min: float = -3.5
    u_max: float = 2.0

    def __post_init__(self):
        if self.k_p <= 0 or self.t_min <= 0 or self.s_min <= 0:
            raise ValueError("k_p, t_min and s_min must be positive")
        if not self.u_min < 0 < self.u_max:
            raise ValueError("need u_min < 0 < u_max")


@dataclass(frozen=True)
class RadarReading:
    s: float  # m, bumper to bumper
    v_l: float
    valid: bool = True

    def __post_init__(self):
        if self.valid and not self.s > 0:
            raise ValueError("a valid reading needs positive spacing")


NO_LEAD = RadarReading(float("nan"), float("nan"), valid=False)


@dataclass(frozen=True)
class ControlCommand:
    u_cmd: float
    active: Active
    u_nom: float
    u_safe: Optional[float] = None


def u_nominal(v: float, v_gr: float, p: ControllerParams = ControllerParams()) -> float:
    return p.k_p * (v_gr - v)


def safe_margin(s: float, v: float, p: ControllerParams = ControllerParams()) -> float:
    """Barrier value h = s - (t_min*v + s_min); the safe set is h >= 0."""
    return s - (p.t_min * v + p.s_min)


def u_safe(r: RadarReading, v: float, p: ControllerParams = ControllerParams()) -> Optional[float]:
    if not r.valid:
        return None
    return (p.k_cbf / p.t_min) * safe_margin(r.s, v, p) + (r.v_l - v) / p.t_min


def arbitrate(u_nom: float, u_safe: Optional[float], p: ControllerParams = ControllerParams()) -> ControlCommand:
    """Take the smaller acceleration, then saturate. Ties go to Nominal."""
    if u_safe is not None and u_safe < u_nom:
        raw, active = u_safe, Active.SAFETY_FILTER
    else:
        raw, active = u_nom, Active.NOMINAL
    return ControlCommand(min(max(raw, p.u_min), p.u_max), active, u_nom, u_safe)


def control(v: float, v_des: float, reading: RadarReading, p: ControllerParams = ControllerParams()) -> ControlCommand:
    return arbitrate(u_nominal(v, v_des, p), u_safe(reading, v, p), p)
