"""Longitudinal plant, radar sensor model, scripted lead traffic and the human pilot model."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from vslcav.controllers import NO_LEAD, RadarReading
from vslcav.corridor import mph_to_ms

VEHICLE_LENGTH = 4.6


@dataclass(frozen=True)
class VehicleState:
    position: float  # m along road, increasing in the direction of travel
    v: float
    a: float = 0.0


def step_dynamics(state: VehicleState, u_cmd: float, dt: float, tau: float = 0.4) -> VehicleState:
    """Double integrator behind a first-order actuation lag (explicit Euler).

    tau == 0 applies the command directly. The lag update is capped at one
    full step so dt > tau cannot overshoot.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    a = u_cmd if tau <= 0 else state.a + (u_cmd - state.a) * min(1.0, dt / tau)
    v = max(0.0, state.v + a * dt)
    return VehicleState(state.position + v * dt, v, a)


@dataclass(frozen=True)
class RadarModel:
    max_range: float = 120.0
    vehicle_length: float = VEHICLE_LENGTH
    sigma_s: float = 0.0
    sigma_v: float = 0.0


def radar_measure(
    ego: VehicleState,
    lead: Optional[VehicleState],
    model: RadarModel = RadarModel(),
    rng: Optional[random.Random] = None,
) -> RadarReading:
    if lead is None:
        return NO_LEAD
    gap = lead.position - ego.position
    if not 0.0 < gap <= model.max_range:
        return NO_LEAD
    s = gap - model.vehicle_length
    v_l = lead.v
    if rng is not None and model.sigma_s > 0:
        s += rng.gauss(0.0, model.sigma_s)
    if rng is not None and model.sigma_v > 0:
        v_l = max(0.0, v_l + rng.gauss(0.0, model.sigma_v))
    if s <= 0:
        # overlapping bumpers; report the contact rather than an invalid read
        s = 1e-6
    return RadarReading(s, v_l, True)


# ---------------------------------------------------------------------------
# lead traffic


@dataclass(frozen=True)
class Segment:
    kind: str  # "constant" | "ramp" | "wave"
    duration: float
    speed: float = 0.0  # constant: the speed; ramp: target speed
    rate: float = 0.0  # ramp: |dv/dt|
    mean: float = 0.0
    amplitude: float = 0.0
    period: float = 1.0


class LeadTrajectory:
    """Piecewise speed profile v(t): constant holds, linear ramps and sinusoidal waves.

    Waves start at their mean and rise first. The last speed is held forever.
    """

    def __init__(self, initial_speed: float, segments: Sequence[Segment] = ()):
        self.initial_speed = initial_speed
        self.segments = tuple(segments)
        self._starts = []
        t, v = 0.0, initial_speed
        for seg in self.segments:
            self._starts.append((t, v))
            t += seg.duration
            v = self._end_speed(seg, v)
        self.end_time = t
        self.final_speed = v

    @staticmethod
    def _end_speed(seg: Segment, v0: float) -> float:
        if seg.kind == "constant":
            return seg.speed
        if seg.kind == "ramp":
            step = math.copysign(min(abs(seg.speed - v0), seg.rate * seg.duration), seg.speed - v0)
            return v0 + step
        if seg.kind == "wave":
            return seg.mean + seg.amplitude * math.sin(2 * math.pi * seg.duration / seg.period)
        raise ValueError(f"unknown segment kind {seg.kind!r}")

    def _locate(self, t: float):
        for seg, (t0, v0) in zip(self.segments, self._starts):
            if t < t0 + seg.duration:
                return seg, t - t0, v0
        return None, 0.0, self.final_speed

    def speed(self, t: float) -> float:
        seg, tau, v0 = self._locate(max(t, 0.0))
        if seg is None:
            return self.final_speed
        if seg.kind == "constant":
            return seg.speed
        if seg.kind == "ramp":
            step = min(abs(seg.speed - v0), seg.rate * tau)
            return v0 + math.copysign(step, seg.speed - v0)
        return seg.mean + seg.amplitude * math.sin(2 * math.pi * tau / seg.period)

    def acceleration(self, t: float) -> float:
        seg, tau, v0 = self._locate(max(t, 0.0))
        if seg is None or seg.kind == "constant":
            return 0.0
        if seg.kind == "ramp":
            if seg.rate * tau >= abs(seg.speed - v0):
                return 0.0
            return math.copysign(seg.rate, seg.speed - v0)
        w = 2 * math.pi / seg.period
        return seg.amplitude * w * math.cos(w * tau)

    def max_deceleration(self) -> float:
        worst = 0.0
        v = self.initial_speed
        for seg in self.segments:
            if seg.kind == "ramp" and seg.speed < v:
                worst = max(worst, seg.rate)
            elif seg.kind == "wave":
                worst = max(worst, seg.amplitude * 2 * math.pi / seg.period)
            v = self._end_speed(seg, v)
        return worst

    def discontinuities(self, tol: float = 1e-6) -> list[int]:
        """Indices of segments whose start speed jumps from the previous end speed."""
        bad = []
        v = self.initial_speed
        for i, seg in enumerate(self.segments):
            start = {"constant": seg.speed, "ramp": v, "wave": seg.mean}[seg.kind]
            if abs(start - v) > tol:
                bad.append(i)
            v = self._end_speed(seg, v)
        return bad

    def min_speed(self) -> float:
        lo = self.initial_speed
        v = self.initial_speed
        for seg in self.segments:
            if seg.kind == "wave":
                lo = min(lo, seg.mean - seg.amplitude)
            v = self._end_speed(seg, v)
            lo = min(lo, v)
        return lo


def step_lead(state: VehicleState, traj: LeadTrajectory, t: float, dt: float) -> VehicleState:
    v = traj.speed(t + dt)
    return VehicleState(state.position + v * dt, v, traj.acceleration(t + dt))


# ---------------------------------------------------------------------------
# human pilot


@dataclass(frozen=True)
class PilotDriverModel:
    """Intelligent-driver-style car following toward the 70 mph maximum.

    The pilot ignores reduced VSL postings; below 70 mph it simply follows
    the prevailing traffic. ``response_lag`` is the driver's pedal lag.
    """

    desired_speed: float = mph_to_ms(70.0)
    time_headway: float = 1.0
    min_gap: float = 2.0
    max_accel: float = 1.0
    comfortable_decel: float = 1.5
    exponent: float = 4.0
    response_lag: float = 0.5
    hard_decel: float = 8.0

    def acceleration(self, v: float, reading: RadarReading) -> float:
        free = 1.0 - (v / self.desired_speed) ** self.exponent
        if not reading.valid:
            return self.max_accel * free
        dv = v - reading.v_l
        s_star = self.min_gap + max(0.0, v * self.time_headway + v * dv / (2 * math.sqrt(self.max_accel * self.comfortable_decel)))
        acc = self.max_accel * (free - (s_star / max(reading.s, 1e-3)) ** 2)
        return max(acc, -self.hard_decel)


def step_pilot(
    state: VehicleState,
    lead_reading: RadarReading,
    model: PilotDriverModel = PilotDriverModel(),
    dt: float = 0.05,
) -> VehicleState:
    return step_dynamics(state, model.acceleration(state.v, lead_reading), dt, model.response_lag)


def perceive(follower: VehicleState, lead: Optional[VehicleState], length: float = VEHICLE_LENGTH) -> RadarReading:
    """Exact, unlimited-range perception used for the human pilot."""
    if lead is None:
        return NO_LEAD
    s = lead.position - follower.position - length
    return RadarReading(max(s, 1e-6), lead.v, True)
