"""Discrete-event feeding controller.

The controller keeps its own event queue in integer ticks of the
communication interval.  Each call to :func:`controller_step` first takes
the delivered sensor snapshot, then runs every event due at or before the
current tick in (tick, insertion) order.  The periodic control event runs
the mission mode machine and re-schedules itself one tick later; pulse-end
events switch a pump off.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping

from .plant import feeding_setpoints, joint_names, lateral_gap, nozzle_body, robot_schema, stowed_setpoints
from .world import ArmCandidate, CageRow, SensorParams, Side, VehicleParams, WorldScenario


class Mode(str, Enum):
    APPROACH = "Approach"
    DEPLOY_ARM = "DeployArm"
    FEED_ROW = "FeedRow"
    STOW_ARM = "StowArm"
    BETWEEN_ROWS = "BetweenRows"
    DONE = "Done"


ALLOWED_TRANSITIONS = {
    Mode.APPROACH: {Mode.DEPLOY_ARM},
    Mode.DEPLOY_ARM: {Mode.FEED_ROW},
    Mode.FEED_ROW: {Mode.STOW_ARM},
    Mode.STOW_ARM: {Mode.BETWEEN_ROWS, Mode.DONE},
    Mode.BETWEEN_ROWS: {Mode.DEPLOY_ARM},
    Mode.DONE: set(),
}

SPEED_CAP_M_S = 0.25

CONTROL = "control"
PULSE_END = "pulse_end"


class UnknownTag(KeyError):
    pass


class OverlappingPulses(ValueError):
    pass


@dataclass(frozen=True)
class ControllerParams:
    cruise_speed_m_s: float = 0.20
    speed_cap_m_s: float = SPEED_CAP_M_S
    steer_gain_lateral: float = 4.0
    steer_gain_heading: float = 3.0
    pulse_duration_s: float = 0.5
    pump_rate_kg_s: float = 0.2
    trigger_lead_m: float = 0.001
    deploy_zone_m: float = 1.0
    # joint error below which the arm counts as settled (rad or m)
    arm_settle_tol: float = 0.002
    vision_guidance: bool = True

    def __post_init__(self):
        if self.speed_cap_m_s > SPEED_CAP_M_S:
            raise ValueError(f"speed cap above {SPEED_CAP_M_S} m/s")
        if self.cruise_speed_m_s > self.speed_cap_m_s:
            raise ValueError("cruise_speed_m_s exceeds speed_cap_m_s")
        for name in ("cruise_speed_m_s", "steer_gain_lateral", "steer_gain_heading", "pulse_duration_s",
                     "pump_rate_kg_s", "deploy_zone_m", "arm_settle_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.trigger_lead_m < 0 or not math.isfinite(self.trigger_lead_m):
            raise ValueError("trigger_lead_m must be non-negative")


@dataclass(frozen=True)
class ControllerState:
    mode: Mode = Mode.APPROACH
    row_index: int = 0
    s_est: float = 0.0
    last_ticks: tuple[int, int] | None = None
    next_target_index: Mapping[Side, int] = field(default_factory=dict)
    pumps: Mapping[Side, bool] = field(default_factory=dict)
    pulse_timer: Mapping[Side, float] = field(default_factory=dict)
    arm_setpoints: Mapping[Side, tuple[float, ...]] = field(default_factory=dict)
    event_queue: tuple = ()
    seq: int = 0
    tick: int = 0


@dataclass(frozen=True)
class Plan:
    """Everything about the mission fixed before the run starts."""

    candidate: ArmCandidate
    params: ControllerParams
    vehicle: VehicleParams
    sensors: SensorParams
    rows: tuple[CageRow, ...]
    tag_table: Mapping[str, tuple[int, float]]
    triggers: tuple[Mapping[Side, tuple[float, ...]], ...]
    feed_pose: tuple[Mapping[Side, tuple[float, ...]], ...]
    stowed: Mapping[Side, tuple[float, ...]]
    # along-row shift of the next row's frame relative to the current one
    row_offsets: tuple[float, ...]
    comm_interval_s: float
    pulse_ticks: int


def steering_law(vision: tuple[float, float], params: ControllerParams, max_steer_rad: float) -> float:
    lateral, heading = vision
    delta = -(params.steer_gain_lateral * lateral + params.steer_gain_heading * heading)
    return min(max_steer_rad, max(-max_steer_rad, delta))


def update_odometry(s_est: float, last_ticks, ticks: tuple[int, int], rfid: str | None,
                    tag_map: Mapping[str, float], sensors: SensorParams, wheel_radius_m: float,
                    known_tags=None) -> float:
    """Integrate mean rear-wheel travel, then snap to an observed tag.

    ``tag_map`` holds the tags of the current row; tags known elsewhere in
    the scenario (``known_tags``) are ignored, anything else is an error.
    """
    if last_ticks is not None:
        dl = ticks[0] - last_ticks[0]
        dr = ticks[1] - last_ticks[1]
        s_est += (dl + dr) / 2.0 * 2.0 * math.pi * wheel_radius_m / sensors.encoder_ticks_per_rev
    if rfid is not None:
        if rfid in tag_map:
            s_est = tag_map[rfid]
        elif known_tags is None or rfid not in known_tags:
            raise UnknownTag(rfid)
    return s_est


def pulse_path_m(params: ControllerParams) -> float:
    return params.cruise_speed_m_s * params.pulse_duration_s


def plan_dispense(candidate: ArmCandidate, row: CageRow, params: ControllerParams,
                  corridor_half_width_m: float, row_index: int = 0) -> dict[Side, tuple[float, ...]]:
    """Reference-point positions at which each fed side's pump starts.

    A pulse started at ``s`` drags its centroid half a pulse path forward,
    and the nozzle leads the reference point by its body-frame longitudinal
    offset; both are subtracted from the cage-centre targets.
    """
    path = pulse_path_m(params)
    scenario = WorldScenario((row,), (0.0, 0.0, 0.0), corridor_half_width_m)
    plan = {}
    for side in candidate.fitted_sides:
        if side not in row.side.sides:
            continue
        q = feeding_setpoints(candidate, side, lateral_gap(scenario, candidate, side))
        lead = nozzle_body(candidate, side, q, row.cage_length_m)[0]
        plan[side] = tuple(s - lead - params.trigger_lead_m - path / 2.0 for s in row.cage_centers())
    for side, trig in plan.items():
        if any(b - a < path - 1e-12 for a, b in zip(trig, trig[1:])):
            raise OverlappingPulses(f"row {row_index} {side.value}: pulses longer than cage spacing")
    if candidate.half_cage_shift and len(plan) == 2:
        merged = sorted(s for trig in plan.values() for s in trig)
        for a, b in zip(merged, merged[1:]):
            if b - a < path - 1e-12:
                raise OverlappingPulses(
                    f"row {row_index}: pulse path {path:.3f} m exceeds shared-pump gap {b - a:.3f} m")
    return plan


def arm_plan(mode: Mode, plan: Plan, row_index: int) -> dict[Side, tuple[float, ...]]:
    """Joint setpoints for a mode: the feeding pose while deploying or
    feeding, stowed otherwise."""
    if mode in (Mode.DEPLOY_ARM, Mode.FEED_ROW):
        return dict(plan.feed_pose[row_index])
    return dict(plan.stowed)


def make_plan(scenario: WorldScenario, vehicle: VehicleParams, sensors: SensorParams,
              params: ControllerParams, candidate: ArmCandidate, comm_interval_s: float) -> Plan:
    hw = scenario.corridor_half_width_m
    triggers, feed_pose, offsets = [], [], []
    for ri, row in enumerate(scenario.rows):
        triggers.append(plan_dispense(candidate, row, params, hw, ri))
        local = WorldScenario((row,), (0.0, 0.0, 0.0), hw)
        feed_pose.append({
            side: (feeding_setpoints(candidate, side, lateral_gap(local, candidate, side))
                   if side in row.side.sides else stowed_setpoints(candidate, side))
            for side in candidate.fitted_sides
        })
        if ri + 1 < len(scenario.rows):
            offsets.append(row.to_row(*scenario.rows[ri + 1].axis_origin)[0])
    return Plan(
        candidate=candidate,
        params=params,
        vehicle=vehicle,
        sensors=sensors,
        rows=scenario.rows,
        tag_table=scenario.tag_table(),
        triggers=tuple(triggers),
        feed_pose=tuple(feed_pose),
        stowed={side: stowed_setpoints(candidate, side) for side in candidate.fitted_sides},
        row_offsets=tuple(offsets),
        comm_interval_s=comm_interval_s,
        pulse_ticks=math.ceil(params.pulse_duration_s / comm_interval_s - 1e-9),
    )


def initial_controller_state(plan: Plan, start_pose) -> ControllerState:
    sides = plan.candidate.fitted_sides
    s0 = plan.rows[0].to_row(start_pose[0], start_pose[1])[0]
    return ControllerState(
        s_est=s0,
        next_target_index={s: 0 for s in sides},
        pumps={s: False for s in sides},
        pulse_timer={s: 0.0 for s in sides},
        arm_setpoints=arm_plan(Mode.APPROACH, plan, 0),
        event_queue=((0, 0, CONTROL, None),),
        seq=1,
    )


def _controlled(plan: Plan, speed: float, steer: float, arm, pumps) -> dict:
    out = {"speed_set": min(speed, plan.params.speed_cap_m_s, SPEED_CAP_M_S), "steer_set": steer}
    for side in plan.candidate.fitted_sides:
        for name, q in zip(joint_names(plan.candidate, side), arm[side]):
            out[name + "_set"] = q
        out[f"pump_{side.key}"] = pumps[side]
    return out


def _settled(monitored: Mapping, plan: Plan, setpoints) -> bool:
    tol = plan.params.arm_settle_tol
    for side in plan.candidate.fitted_sides:
        for name, q in zip(joint_names(plan.candidate, side), setpoints[side]):
            if abs(monitored[name] - q) > tol:
                return False
    return True


def controller_step(monitored: Mapping, state: ControllerState, plan: Plan, t: float):
    """One DE activation at sync time ``t``.

    Returns ``(controlled, new_state, done)``.
    """
    tick = round(t / plan.comm_interval_s)
    queue = list(state.event_queue)
    st = {
        "mode": state.mode,
        "row": state.row_index,
        "s": state.s_est,
        "ticks": state.last_ticks,
        "next": dict(state.next_target_index),
        "pumps": dict(state.pumps),
        "timer": dict(state.pulse_timer),
        "arm": dict(state.arm_setpoints),
        "seq": state.seq,
        "speed": 0.0,
        "steer": 0.0,
    }

    def schedule(at_tick, kind, payload=None):
        heapq.heappush(queue, (at_tick, st["seq"], kind, payload))
        st["seq"] += 1

    while queue and queue[0][0] <= tick:
        _, _, kind, payload = heapq.heappop(queue)
        if kind == PULSE_END:
            st["pumps"][payload] = False
            st["timer"][payload] = 0.0
        elif kind == CONTROL:
            _control(monitored, st, plan, tick, schedule)
            schedule(tick + 1, CONTROL)

    for side, on in st["pumps"].items():
        if on:
            st["timer"][side] = max(0.0, st["timer"][side] - plan.comm_interval_s)

    done = st["mode"] is Mode.DONE
    new_state = ControllerState(
        mode=st["mode"],
        row_index=st["row"],
        s_est=st["s"],
        last_ticks=st["ticks"],
        next_target_index=st["next"],
        pumps=st["pumps"],
        pulse_timer=st["timer"],
        arm_setpoints=st["arm"],
        event_queue=tuple(queue),
        seq=st["seq"],
        tick=tick,
    )
    if done:
        zero = {side: tuple(0.0 for _ in q) for side, q in plan.stowed.items()}
        pumps = {side: False for side in plan.candidate.fitted_sides}
        return _controlled(plan, 0.0, 0.0, zero, pumps), new_state, True
    return _controlled(plan, st["speed"], st["steer"], st["arm"], st["pumps"]), new_state, False


def _control(monitored: Mapping, st: dict, plan: Plan, tick: int, schedule) -> None:
    params = plan.params
    row_i = st["row"]
    row_tags = {tag: s for tag, (ri, s) in plan.tag_table.items() if ri == row_i}
    ticks = (monitored["enc_left"], monitored["enc_right"])
    st["s"] = update_odometry(st["s"], st["ticks"], ticks, monitored["rfid_tag"], row_tags,
                              plan.sensors, plan.vehicle.wheel_radius_m, plan.tag_table)
    st["ticks"] = ticks

    mode = st["mode"]
    if mode is Mode.DONE:
        st["speed"] = st["steer"] = 0.0
        return
    s = st["s"]
    row = plan.rows[row_i]
    new_mode = mode
    if mode in (Mode.APPROACH, Mode.BETWEEN_ROWS):
        if s >= -params.deploy_zone_m:
            new_mode = Mode.DEPLOY_ARM
    elif mode is Mode.DEPLOY_ARM:
        if _settled(monitored, plan, plan.feed_pose[row_i]):
            new_mode = Mode.FEED_ROW
    elif mode is Mode.FEED_ROW:
        _fire(st, plan, tick, schedule)
        finished = all(st["next"][side] >= len(trig) for side, trig in plan.triggers[row_i].items())
        if finished and not any(st["pumps"].values()):
            new_mode = Mode.STOW_ARM
    elif mode is Mode.STOW_ARM:
        if _settled(monitored, plan, plan.stowed):
            if row_i + 1 < len(plan.rows):
                new_mode = Mode.BETWEEN_ROWS
                st["s"] = s - plan.row_offsets[row_i]
                st["row"] = row_i + 1
                st["next"] = {side: 0 for side in st["next"]}
            else:
                new_mode = Mode.DONE
    if new_mode is not mode:
        assert new_mode in ALLOWED_TRANSITIONS[mode], (mode, new_mode)
        st["mode"] = new_mode
        st["arm"] = arm_plan(new_mode, plan, st["row"])
        if new_mode is Mode.FEED_ROW:
            # triggers may already be due on the first feeding tick
            _fire(st, plan, tick, schedule)
    if st["mode"] is Mode.DONE:
        st["speed"] = st["steer"] = 0.0
        return
    st["speed"] = min(params.cruise_speed_m_s, params.speed_cap_m_s)
    if params.vision_guidance:
        st["steer"] = steering_law((monitored["vision_lateral"], monitored["vision_heading"]),
                                   params, plan.vehicle.max_steer_rad)
    else:
        st["steer"] = 0.0


def _fire(st: dict, plan: Plan, tick: int, schedule) -> None:
    triggers = plan.triggers[st["row"]]
    shared = plan.candidate.half_cage_shift
    # earliest-due side first so alternating shared-pump pulses keep order
    due = sorted(
        (trig[st["next"][side]], side.value, side)
        for side, trig in triggers.items()
        if st["next"][side] < len(trig) and st["s"] >= trig[st["next"][side]]
    )
    for _, _, side in due:
        if st["pumps"][side]:
            continue
        if shared and any(st["pumps"].values()):
            break
        st["pumps"][side] = True
        st["timer"][side] = plan.params.pulse_duration_s
        st["next"][side] += 1
        schedule(tick + plan.pulse_ticks, PULSE_END, side)


class FeedingController:
    """The feeding controller as a co-simulation DE unit."""

    def __init__(self, scenario: WorldScenario, vehicle: VehicleParams, sensors: SensorParams,
                 params: ControllerParams, candidate: ArmCandidate, comm_interval_s: float = 0.01):
        self.plan = make_plan(scenario, vehicle, sensors, params, candidate, comm_interval_s)
        self.start_pose = scenario.start_pose_nominal
        self.schema = robot_schema(candidate)
        self.reset()

    def reset(self) -> None:
        self.state = initial_controller_state(self.plan, self.start_pose)

    def step(self, monitored: Mapping, t: float):
        controlled, self.state, done = controller_step(monitored, self.state, self.plan, t)
        return controlled, done
