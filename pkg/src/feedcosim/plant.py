"""Continuous-time robot plant.

Kinematic bicycle with first-order speed/steer actuators, differential rear
wheels, feeder arms with first-order joint tracking, and the fodder pump.
Motion is integrated with classical fixed-step RK4.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, replace
from typing import Mapping, NamedTuple

from .geometry import penetration, wrap_angle
from .kernel import ContractSchema, NumericFault, Signal, SignalKind
from .world import (
    ArmCandidate,
    JointType,
    SensorParams,
    Side,
    VehicleParams,
    Violation,
    WorldScenario,
    candidate_violations,
)

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


class NonFiniteState(NumericFault):
    pass


class HopperEmpty(RuntimeWarning):
    pass


class ScenarioInvalid(ValueError):
    def __init__(self, violations):
        super().__init__(", ".join(map(str, violations)))
        self.violations = list(violations)


@dataclass(frozen=True)
class DispenseEvent:
    t: float
    position: tuple[float, float]
    side: Side
    amount_kg: float
    row_index: int
    candidate_id: str


@dataclass(frozen=True)
class Pulse:
    t_start: float
    mass: float = 0.0
    wx: float = 0.0
    wy: float = 0.0
    # mass of the last substep whose closing endpoint is still owed
    pending: float = 0.0


@dataclass(frozen=True)
class PlantState:
    x: float
    y: float
    heading: float
    speed: float
    steer_angle: float
    arm_joints: Mapping[Side, tuple[float, ...]]
    hopper_kg: float
    wheel_angle_left: float = 0.0
    wheel_angle_right: float = 0.0
    pump_active: Mapping[Side, bool] = None
    pulse_accumulator: Mapping[Side, Pulse | None] = None


class Commands(NamedTuple):
    speed: float
    steer: float
    arm: dict
    pumps: dict


# --- contract -------------------------------------------------------------


def joint_names(candidate: ArmCandidate, side: Side) -> list[str]:
    return [f"arm_{side.key}_j{i + 1}" for i in range(candidate.joints_per_side)]


def robot_schema(candidate: ArmCandidate) -> ContractSchema:
    R, I, B, T = SignalKind.REAL, SignalKind.INTEGER, SignalKind.BOOLEAN, SignalKind.OPTIONAL_TAG
    joint_unit = "rad" if candidate.joint_type is JointType.ROTARY else "m"
    monitored = [
        Signal("enc_left", "ticks", I),
        Signal("enc_right", "ticks", I),
        Signal("kingpin_angle", "rad", R),
        Signal("vision_lateral", "m", R),
        Signal("vision_heading", "rad", R),
        Signal("rfid_tag", "", T),
        Signal("imu_yaw_rate", "rad/s", R),
        Signal("hopper_kg", "kg", R),
    ]
    controlled = [Signal("speed_set", "m/s", R), Signal("steer_set", "rad", R)]
    for side in candidate.fitted_sides:
        for name in joint_names(candidate, side):
            monitored.append(Signal(name, joint_unit, R))
            controlled.append(Signal(name + "_set", joint_unit, R))
        controlled.append(Signal(f"pump_{side.key}", "", B))
    return ContractSchema(tuple(monitored), tuple(controlled))


def commands(controlled: Mapping | Commands, candidate: ArmCandidate) -> Commands:
    """Parse a controlled-values mapping (already parsed commands pass through)."""
    if isinstance(controlled, Commands):
        return controlled
    arm, pumps = {}, {}
    for side in candidate.fitted_sides:
        arm[side] = tuple(float(controlled[n + "_set"]) for n in joint_names(candidate, side))
        pumps[side] = bool(controlled[f"pump_{side.key}"])
    return Commands(float(controlled["speed_set"]), float(controlled["steer_set"]), arm, pumps)


# --- arm kinematics -------------------------------------------------------


def nozzle_body(candidate: ArmCandidate, side: Side, joints, cage_length_m: float = 0.0):
    """Nozzle position in the body frame for given joint positions."""
    bx, by = candidate.base_offset(side)
    if candidate.half_cage_shift and side is Side.RIGHT:
        bx += cage_length_m / 2.0
    if candidate.joint_type is JointType.ROTARY:
        l1, l2 = candidate.link_lengths_m
        q1, q2 = joints
        return (
            bx + l1 * math.cos(q1) + l2 * math.cos(q1 + q2),
            by + l1 * math.sin(q1) + l2 * math.sin(q1 + q2),
        )
    return bx, by + side.sign * joints[0]


def nozzle_position(state: PlantState, candidate: ArmCandidate, side: Side, cage_length_m: float = 0.0):
    """World position of one side's nozzle."""
    bx, by = nozzle_body(candidate, side, state.arm_joints[side], cage_length_m)
    c, s = math.cos(state.heading), math.sin(state.heading)
    return state.x + c * bx - s * by, state.y + s * bx + c * by


def feeding_setpoints(candidate: ArmCandidate, side: Side, lateral_gap: float) -> tuple[float, ...]:
    """Joint positions putting the nozzle ``lateral_gap`` outboard of the base,
    level with it longitudinally."""
    if candidate.joint_type is JointType.TRANSLATORY:
        return (lateral_gap,)
    l1, l2 = candidate.link_lengths_m
    c2 = (lateral_gap**2 - l1**2 - l2**2) / (2 * l1 * l2)
    if not -1.0 <= c2 <= 1.0:
        raise ValueError(f"rotary arm cannot reach {lateral_gap:.3f} m")
    # elbow pointing backwards on both sides
    q2 = side.sign * math.acos(c2)
    q1 = side.sign * math.pi / 2 - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
    return q1, q2


def stowed_setpoints(candidate: ArmCandidate, side: Side) -> tuple[float, ...]:
    if candidate.joint_type is JointType.TRANSLATORY:
        return (candidate.travel_limits_m[0],)
    # first link trailing, second link folded back over it
    return side.sign * math.pi, side.sign * math.pi


def _clamp_joints(candidate: ArmCandidate, q: tuple[float, ...]) -> tuple[float, ...]:
    if candidate.joint_type is JointType.TRANSLATORY:
        lo, hi = candidate.travel_limits_m
        return (min(hi, max(lo, q[0])),)
    return q


# --- state transition -----------------------------------------------------


def initial_state(pose, vehicle: VehicleParams, candidate: ArmCandidate) -> PlantState:
    x, y, th = pose
    return PlantState(
        x=float(x),
        y=float(y),
        heading=float(th),
        speed=0.0,
        steer_angle=0.0,
        arm_joints={s: stowed_setpoints(candidate, s) for s in candidate.fitted_sides},
        hopper_kg=vehicle.hopper_kg,
        pump_active={s: False for s in candidate.fitted_sides},
        pulse_accumulator={s: None for s in candidate.fitted_sides},
    )


def step_plant(state: PlantState, controlled: Mapping, vehicle: VehicleParams,
               candidate: ArmCandidate, dt: float) -> PlantState:
    """Advance pose, actuators, wheel angles and arm joints by one RK4 step.

    Setpoints are clamped to actuator limits first.  The hopper and pulse
    bookkeeping live in :func:`dispense_update`.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    cmd = commands(controlled, candidate)
    max_d = vehicle.max_steer_rad
    vs = max(0.0, cmd.speed)
    ds = min(max_d, max(-max_d, cmd.steer))
    tv, td = vehicle.speed_time_constant_s, vehicle.steer_time_constant_s
    a_lim, r_lim = vehicle.accel_limit_m_s2, vehicle.steer_rate_limit_rad_s
    inv_L = 1.0 / vehicle.wheelbase_m
    half_w = vehicle.track_width_m / 2.0
    inv_r = 1.0 / vehicle.wheel_radius_m
    cos, sin, tan = math.cos, math.sin, math.tan

    th, v, d = state.heading, state.speed, state.steer_angle
    h2 = dt / 2.0

    # stage derivatives; x, y and wheel angles do not feed back.  Actuator
    # lags are first order with a magnitude clamp on the rate.
    dv1 = (vs - v) / tv
    dv1 = a_lim if dv1 > a_lim else (-a_lim if dv1 < -a_lim else dv1)
    dd1 = (ds - d) / td
    dd1 = r_lim if dd1 > r_lim else (-r_lim if dd1 < -r_lim else dd1)
    k1 = tan(d) * inv_L
    th2, v2, d2 = th + h2 * v * k1, v + h2 * dv1, d + h2 * dd1
    dv2 = (vs - v2) / tv
    dv2 = a_lim if dv2 > a_lim else (-a_lim if dv2 < -a_lim else dv2)
    dd2 = (ds - d2) / td
    dd2 = r_lim if dd2 > r_lim else (-r_lim if dd2 < -r_lim else dd2)
    k2 = tan(d2) * inv_L
    th3, v3, d3 = th + h2 * v2 * k2, v + h2 * dv2, d + h2 * dd2
    dv3 = (vs - v3) / tv
    dv3 = a_lim if dv3 > a_lim else (-a_lim if dv3 < -a_lim else dv3)
    dd3 = (ds - d3) / td
    dd3 = r_lim if dd3 > r_lim else (-r_lim if dd3 < -r_lim else dd3)
    k3 = tan(d3) * inv_L
    th4, v4, d4 = th + dt * v3 * k3, v + dt * dv3, d + dt * dd3
    dv4 = (vs - v4) / tv
    dv4 = a_lim if dv4 > a_lim else (-a_lim if dv4 < -a_lim else dv4)
    dd4 = (ds - d4) / td
    dd4 = r_lim if dd4 > r_lim else (-r_lim if dd4 < -r_lim else dd4)
    k4 = tan(d4) * inv_L

    w6 = dt / 6.0
    x = state.x + w6 * (v * cos(th) + 2 * v2 * cos(th2) + 2 * v3 * cos(th3) + v4 * cos(th4))
    y = state.y + w6 * (v * sin(th) + 2 * v2 * sin(th2) + 2 * v3 * sin(th3) + v4 * sin(th4))
    heading = th + w6 * (v * k1 + 2 * v2 * k2 + 2 * v3 * k3 + v4 * k4)
    speed = v + w6 * (dv1 + 2 * dv2 + 2 * dv3 + dv4)
    steer = d + w6 * (dd1 + 2 * dd2 + 2 * dd3 + dd4)
    # differential: each rear wheel runs at v * (1 -/+ (w/2) tan(delta) / L) / r
    sum_v = v + 2 * v2 + 2 * v3 + v4
    sum_vk = v * k1 + 2 * v2 * k2 + 2 * v3 * k3 + v4 * k4
    wl = state.wheel_angle_left + w6 * (sum_v - half_w * sum_vk) * inv_r
    wr = state.wheel_angle_right + w6 * (sum_v + half_w * sum_vk) * inv_r

    # first-order joint tracking; RK4 of a linear lag reduces to this factor
    a = dt / candidate.arm_time_constant_s
    gain = a - a * a / 2 + a**3 / 6 - a**4 / 24
    joints = {}
    for side, q in state.arm_joints.items():
        qs = _clamp_joints(candidate, cmd.arm[side])
        joints[side] = tuple(qi + (si - qi) * gain for qi, si in zip(q, qs))

    if speed < 0.0:
        speed = 0.0
    steer = min(max_d, max(-max_d, steer))
    for val in (x, y, heading, speed, steer, wl, wr):
        if not math.isfinite(val):
            raise NonFiniteState(f"non-finite plant state near t with x={x}, y={y}")
    return PlantState(x, y, heading, speed, steer, joints, state.hopper_kg, wl, wr,
                      state.pump_active, state.pulse_accumulator)


def dispense_update(state: PlantState, controlled: Mapping, candidate: ArmCandidate, dt: float,
                    t: float, *, pump_rate_kg_s: float, scenario: WorldScenario | None = None,
                    cage_length_m: float | None = None):
    """Run the pump over ``[t, t + dt]`` from the state at ``t``.

    Pulse centroids use the trapezoid rule on nozzle positions sampled at
    substep boundaries.  A pulse closes (and its event is emitted) at the
    first call that sees its pump command off.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    cmd = commands(controlled, candidate)
    if cage_length_m is None:
        cage_length_m = scenario.rows[0].cage_length_m if scenario is not None else 0.0
    on = [s for s in candidate.fitted_sides if cmd.pumps[s]]
    pulses = state.pulse_accumulator
    if not on and not any(pulses.values()):
        if any(state.pump_active.values()):
            return replace(state, pump_active={s: False for s in candidate.fitted_sides}), []
        return state, []

    flow = pump_rate_kg_s if not candidate.half_cage_shift else pump_rate_kg_s / max(1, len(on))
    hopper = state.hopper_kg
    new_pulses = dict(pulses)
    events = []
    for side in candidate.fitted_sides:
        pulse = pulses[side]
        if pulse is None and not cmd.pumps[side]:
            continue
        px, py = nozzle_position(state, candidate, side, cage_length_m)
        if pulse is not None and pulse.pending:
            half = pulse.pending / 2.0
            pulse = replace(pulse, wx=pulse.wx + half * px, wy=pulse.wy + half * py, pending=0.0)
        if cmd.pumps[side]:
            if pulse is None:
                pulse = Pulse(t_start=t)
            m = min(flow * dt, hopper)
            if m < flow * dt and hopper > 0.0:
                log.warning("hopper empty at t=%.3f", t)
            hopper -= m
            half = m / 2.0
            pulse = replace(pulse, mass=pulse.mass + m, wx=pulse.wx + half * px,
                            wy=pulse.wy + half * py, pending=m)
            new_pulses[side] = pulse
        else:
            new_pulses[side] = None
            if pulse.mass > 0.0:
                pos = (pulse.wx / pulse.mass, pulse.wy / pulse.mass)
                row = scenario.row_of_point(*pos) if scenario is not None else 0
                events.append(DispenseEvent(t, pos, side, pulse.mass, row, candidate.id.value))
    state = replace(
        state,
        hopper_kg=hopper,
        pump_active={s: cmd.pumps[s] for s in candidate.fitted_sides},
        pulse_accumulator=new_pulses,
    )
    return state, events


# --- sensors --------------------------------------------------------------


def rfid_in_range(x: float, y: float, scenario: WorldScenario, range_m: float) -> str | None:
    """Nearest tag within reading range of a reader at ``(x, y)``."""
    best, best_d = None, range_m
    for row in scenario.rows:
        for tag, s in row.rfid_tags:
            tx, ty = row.to_world(s, 0.0)
            d = math.hypot(x - tx, y - ty)
            if d <= best_d:
                best, best_d = tag, d
    return best


def rfid_passed(prev: tuple[float, float], cur: tuple[float, float], scenario: WorldScenario,
                range_m: float) -> str | None:
    """Tag whose station the reader passed abeam, within range, between two
    positions.  If several were passed, the last one."""
    found, found_s = None, -math.inf
    for row in scenario.rows:
        s0, l0 = row.to_row(*prev)
        s1, l1 = row.to_row(*cur)
        if s1 <= s0:
            continue
        for tag, s in row.rfid_tags:
            if s0 < s <= s1:
                lat = l0 + (l1 - l0) * (s - s0) / (s1 - s0)
                if abs(lat) <= range_m and s - s0 > found_s:
                    found, found_s = tag, s - s0
    return found


def sample_sensors(state: PlantState, scenario: WorldScenario, sensors: SensorParams,
                   vehicle: VehicleParams, rng: random.Random | None = None,
                   prev_state: PlantState | None = None, candidate: ArmCandidate | None = None) -> dict:
    """Monitored values for the current plant state.

    With ``prev_state`` the RFID reading is the tag passed since that state
    (detections inside an interval are latched to its end); without it the
    reader reports the nearest tag in range.
    """
    ticks = sensors.encoder_ticks_per_rev
    q = sensors.kingpin_quantization_rad
    row = scenario.rows[scenario.active_row(state.x, state.y)]
    _, lateral = row.to_row(state.x, state.y)
    heading_err = wrap_angle(state.heading - row.heading)
    yaw_rate = state.speed * math.tan(state.steer_angle) / vehicle.wheelbase_m
    if rng is not None and sensors.vision_noise_std_m > 0:
        lateral += rng.gauss(0.0, sensors.vision_noise_std_m)
    if rng is not None and sensors.imu_noise_std_rad_s > 0:
        yaw_rate += rng.gauss(0.0, sensors.imu_noise_std_rad_s)
    if prev_state is None:
        tag = rfid_in_range(state.x, state.y, scenario, sensors.rfid_range_m)
    else:
        tag = rfid_passed((prev_state.x, prev_state.y), (state.x, state.y), scenario, sensors.rfid_range_m)
    out = {
        "enc_left": math.floor(state.wheel_angle_left / TWO_PI * ticks),
        "enc_right": math.floor(state.wheel_angle_right / TWO_PI * ticks),
        "kingpin_angle": round(state.steer_angle / q) * q if q > 0 else state.steer_angle,
        "vision_lateral": lateral,
        "vision_heading": heading_err,
        "rfid_tag": tag,
        "imu_yaw_rate": yaw_rate,
        "hopper_kg": state.hopper_kg,
    }
    sides = candidate.fitted_sides if candidate is not None else state.arm_joints.keys()
    for side in sides:
        for i, qv in enumerate(state.arm_joints[side]):
            out[f"arm_{side.key}_j{i + 1}"] = qv
    return out


# --- validation -----------------------------------------------------------


def _row_footprint(scenario: WorldScenario, row):
    half = scenario.corridor_half_width_m + row.feed_line_offset_m + row.area_width_m / 2.0
    return [row.to_world(0, half), row.to_world(row.length_m, half),
            row.to_world(row.length_m, -half), row.to_world(0, -half)]


def validate_scenario(scenario: WorldScenario, vehicle: VehicleParams, candidate: ArmCandidate) -> list[Violation]:
    """Check scenario, vehicle and candidate invariants, arm reach included."""
    out: list[Violation] = []
    if not scenario.rows:
        out.append(Violation("NoRows"))
    hw = scenario.corridor_half_width_m
    if not hw > vehicle.body_width_m / 2.0:
        out.append(Violation("CorridorTooNarrow", f"{hw} <= {vehicle.body_width_m / 2.0}"))
    vals = [getattr(vehicle, f) for f in vehicle.__dataclass_fields__]
    if not all(math.isfinite(v) and v > 0 for v in vals):
        out.append(Violation("BadVehicleParams", "all must be positive"))
    if not vehicle.max_steer_rad < math.pi / 2:
        out.append(Violation("BadVehicleParams", "max_steer_rad"))
    if not all(math.isfinite(v) for v in scenario.start_pose_nominal):
        out.append(Violation("BadStartPose"))
    seen: set[str] = set()
    for ri, row in enumerate(scenario.rows):
        name = f"row {ri}"
        if not (row.cage_length_m > 0 and row.cage_count > 0):
            out.append(Violation("BadRow", name))
            continue
        if abs(math.hypot(*row.axis_direction) - 1.0) > 1e-9:
            out.append(Violation("BadRow", f"{name}: axis_direction is not a unit vector"))
        if not (row.feed_line_offset_m >= 0 and row.area_length_m > 0 and row.area_width_m > 0):
            out.append(Violation("BadRow", f"{name}: placement area"))
        for tag, s in row.rfid_tags:
            if tag in seen:
                out.append(Violation("DuplicateTag", tag))
            seen.add(tag)
            if not 0.0 <= s <= row.length_m:
                out.append(Violation("TagOutsideRow", tag))
    for i in range(len(scenario.rows)):
        for j in range(i + 1, len(scenario.rows)):
            a, b = scenario.rows[i], scenario.rows[j]
            if a.cage_length_m > 0 and b.cage_length_m > 0 and a.cage_count > 0 and b.cage_count > 0:
                if penetration(_row_footprint(scenario, a), _row_footprint(scenario, b)) > 0:
                    out.append(Violation("RowsOverlap", f"row {i} / row {j}"))

    cand = candidate_violations(candidate)
    out.extend(cand)
    if cand:
        return out
    if candidate.half_cage_shift and len({r.cage_length_m for r in scenario.rows}) > 1:
        out.append(Violation("InconsistentCageLength", candidate.id.value))
    for ri, row in enumerate(scenario.rows):
        for side in candidate.fitted_sides:
            if side not in row.side.sides:
                continue
            gap = hw + row.feed_line_offset_m - abs(candidate.base_offset(side)[1])
            if candidate.joint_type is JointType.TRANSLATORY:
                lo, hi = candidate.travel_limits_m
                ok = lo <= gap <= hi
            else:
                l1, l2 = candidate.link_lengths_m
                ok = abs(l1 - l2) <= gap <= l1 + l2
            if not ok:
                out.append(Violation("ArmCannotReach", f"{candidate.id.value} {side.value} row {ri}: gap {gap:.3f} m"))
    return out


def lateral_gap(scenario: WorldScenario, candidate: ArmCandidate, side: Side, row_index: int = 0) -> float:
    row = scenario.rows[row_index]
    return scenario.corridor_half_width_m + row.feed_line_offset_m - abs(candidate.base_offset(side)[1])


# --- plant object for the kernel -----------------------------------------


class RobotPlant:
    """The feeding robot as a co-simulation CT unit."""

    def __init__(self, scenario: WorldScenario, vehicle: VehicleParams, sensors: SensorParams,
                 candidate: ArmCandidate, pump_rate_kg_s: float, start_pose=None):
        self.scenario = scenario
        self.vehicle = vehicle
        self.sensors = sensors
        self.candidate = candidate
        self.pump_rate_kg_s = pump_rate_kg_s
        self.start_pose = tuple(start_pose or scenario.start_pose_nominal)
        self.schema = robot_schema(candidate)
        self.cage_length_m = scenario.rows[0].cage_length_m
        self.reset(0)

    def reset(self, seed: int) -> None:
        self.rng = random.Random(seed)
        self.state = initial_state(self.start_pose, self.vehicle, self.candidate)
        self._initial_hopper = self.state.hopper_kg
        self._last_sample = self.state
        self._held = self._cmd = None

    def pose(self):
        s = self.state
        return s.x, s.y, s.heading, s.speed

    def sample(self) -> dict:
        out = sample_sensors(self.state, self.scenario, self.sensors, self.vehicle, self.rng,
                             prev_state=self._last_sample, candidate=self.candidate)
        self._last_sample = self.state
        return out

    def substep(self, controlled, t: float, dt: float):
        if controlled is not self._held:
            self._held, self._cmd = controlled, commands(controlled, self.candidate)
        controlled = self._cmd
        state, events = dispense_update(self.state, controlled, self.candidate, dt, t,
                                        pump_rate_kg_s=self.pump_rate_kg_s, scenario=self.scenario,
                                        cage_length_m=self.cage_length_m)
        self.state = step_plant(state, controlled, self.vehicle, self.candidate, dt)
        return events

    def hopper_ledger(self):
        residue = sum(p.mass for p in self.state.pulse_accumulator.values() if p is not None)
        return self._initial_hopper, self.state.hopper_kg, residue
