import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import LEFT, RIGHT
from feedcosim.controller import (
    ALLOWED_TRANSITIONS,
    ControllerParams,
    Mode,
    OverlappingPulses,
    UnknownTag,
    arm_plan,
    controller_step,
    initial_controller_state,
    make_plan,
    plan_dispense,
    steering_law,
    update_odometry,
)
from feedcosim.dse import run_single
from feedcosim.plant import joint_names
from feedcosim.world import (
    CageRow,
    CandidateId,
    RowSide,
    SensorParams,
    VehicleParams,
    default_candidates,
    default_scenario,
)

VEH, SENS = VehicleParams(), SensorParams()
PARAMS = ControllerParams()


def monitored(cand, joints, ticks=(0, 0), rfid=None, lateral=0.0, heading=0.0):
    out = {"enc_left": ticks[0], "enc_right": ticks[1], "kingpin_angle": 0.0, "vision_lateral": lateral,
           "vision_heading": heading, "rfid_tag": rfid, "imu_yaw_rate": 0.0, "hopper_kg": 20.0}
    for side in cand.fitted_sides:
        for name, q in zip(joint_names(cand, side), joints[side]):
            out[name] = q
    return out


def feeding_state(plan, s_est):
    st0 = initial_controller_state(plan, (-2.0, 0.0, 0.0))
    return replace(st0, mode=Mode.FEED_ROW, s_est=s_est, last_ticks=(0, 0),
                   arm_setpoints=arm_plan(Mode.FEED_ROW, plan, 0))


@pytest.fixture
def plan(translatory):
    return make_plan(default_scenario(), VEH, SENS, PARAMS, translatory, 0.01)


def test_done_outputs_zero(plan, translatory):
    st0 = replace(initial_controller_state(plan, (-2.0, 0.0, 0.0)), mode=Mode.DONE, last_ticks=(0, 0))
    ctl, _, done = controller_step(monitored(translatory, plan.stowed), st0, plan, 1.0)
    assert done
    assert all(v == 0.0 or v is False for v in ctl.values())


def test_trigger_fires_and_pulse_ends_after_duration(plan, translatory):
    trig = plan.triggers[0][LEFT][0]
    state = feeding_state(plan, trig + 1e-6)
    mon = monitored(translatory, plan.feed_pose[0])
    ctl, state, _ = controller_step(mon, replace(state, event_queue=((100, 0, "control", None),)), plan, 1.0)
    assert ctl["pump_left"] is True
    assert state.next_target_index[LEFT] == 1
    t = 1.0
    for k in range(1, 51):
        t = 1.0 + k * 0.01
        ctl, state, _ = controller_step(mon, state, plan, t)
        assert ctl["pump_left"] is (k < 50), k
    assert t == pytest.approx(1.5)


def test_control_event_order_is_fifo(plan, translatory):
    """A pulse end and the control event due on the same tick run in
    insertion order; a pump switched off there may be re-armed by the
    control event that follows."""
    state = feeding_state(plan, plan.triggers[0][LEFT][1] + 1e-6)
    state = replace(state, pumps={LEFT: True}, next_target_index={LEFT: 1},
                    event_queue=((100, 0, "pulse_end", LEFT), (100, 1, "control", None)), seq=2)
    ctl, new, _ = controller_step(monitored(translatory, plan.feed_pose[0]), state, plan, 1.0)
    assert ctl["pump_left"] is True and new.next_target_index[LEFT] == 2


@settings(max_examples=200, deadline=None)
@given(mode=st.sampled_from(list(Mode)), s=st.floats(-5, 6), lat=st.floats(-0.5, 0.5),
       head=st.floats(-1, 1), cruise=st.floats(0.01, 0.25), ticks=st.integers(0, 10**6))
def test_speed_never_exceeds_cap(mode, s, lat, head, cruise, ticks):
    cand = default_candidates()[1]
    params = ControllerParams(cruise_speed_m_s=cruise, pulse_duration_s=0.05)
    pl = make_plan(default_scenario(), VEH, SENS, params, cand, 0.01)
    state = replace(initial_controller_state(pl, (-2.0, 0.0, 0.0)), mode=mode, s_est=s, last_ticks=(0, 0))
    ctl, _, _ = controller_step(monitored(cand, pl.feed_pose[0], (ticks, ticks), lateral=lat, heading=head),
                                state, pl, 0.0)
    assert 0.0 <= ctl["speed_set"] <= 0.25
    assert abs(ctl["steer_set"]) <= VEH.max_steer_rad


def test_params_reject_cap_above_limit():
    with pytest.raises(ValueError):
        ControllerParams(speed_cap_m_s=0.3)
    with pytest.raises(ValueError):
        ControllerParams(cruise_speed_m_s=0.24, speed_cap_m_s=0.2)


def test_odometry_integrates_ticks():
    s = update_odometry(0.0, (0, 0), (500, 500), None, {}, SENS, 0.15)
    assert s == pytest.approx(500 / 2048 * 2 * math.pi * 0.15, abs=1e-12)
    assert s == pytest.approx(0.2301, abs=1e-4)


def test_odometry_snaps_to_tag():
    assert update_odometry(10.4, (0, 0), (0, 0), "t20", {"t20": 10.0}, SENS, 0.15) == 10.0
    # a tag belonging to another row is ignored
    assert update_odometry(1.0, None, (0, 0), "x", {}, SENS, 0.15, known_tags={"x"}) == 1.0
    with pytest.raises(UnknownTag):
        update_odometry(1.0, None, (0, 0), "ghost", {}, SENS, 0.15, known_tags={"x"})


@pytest.mark.parametrize("vision,expected", [((0.0, 0.0), 0.0), ((0.025, 0.0), -0.1), ((1.0, 1.0), -0.5)])
def test_steering_law(vision, expected):
    assert steering_law(vision, PARAMS, 0.5) == pytest.approx(expected)


def test_plan_single_side(translatory):
    row = default_scenario().rows[0]
    trig = plan_dispense(translatory, row, PARAMS, 0.6)
    assert list(trig) == [LEFT] and len(trig[LEFT]) == 10
    lead = translatory.base_offset(LEFT)[0]
    # centre 0.25 minus nozzle lead, trigger lead and half a 0.1 m pulse path
    assert trig[LEFT][0] == pytest.approx(0.25 - lead - 0.001 - 0.05)
    assert all(b - a == pytest.approx(0.5) for a, b in zip(trig[LEFT], trig[LEFT][1:]))


def test_plan_double_alternates(candidates):
    cand = candidates[CandidateId.DOUBLE_TRANSLATORY]
    row = replace(default_scenario().rows[0], side=RowSide.BOTH)
    trig = plan_dispense(cand, row, PARAMS, 0.6)
    merged = sorted([(s, "L") for s in trig[LEFT]] + [(s, "R") for s in trig[RIGHT]])
    assert [k for _, k in merged] == ["R", "L"] * 10
    assert all(b[0] - a[0] == pytest.approx(0.25) for a, b in zip(merged, merged[1:]))


def test_plan_rejects_overlap(translatory, candidates):
    row = default_scenario().rows[0]
    with pytest.raises(OverlappingPulses):
        plan_dispense(translatory, row, replace(PARAMS, pulse_duration_s=3.0), 0.6)
    both = replace(row, side=RowSide.BOTH)
    # 0.3 m pulse path fits a 0.5 m cage but not the 0.25 m shared-pump gap
    with pytest.raises(OverlappingPulses):
        plan_dispense(candidates[CandidateId.DOUBLE_TRANSLATORY], both, replace(PARAMS, pulse_duration_s=1.5), 0.6)


@settings(max_examples=60, deadline=None)
@given(length=st.floats(0.3, 1.5), count=st.integers(1, 20), lead=st.floats(0.0, 0.05),
       duration=st.floats(0.05, 1.0))
def test_triggers_strictly_increasing(length, count, lead, duration):
    cand = default_candidates()[3]
    row = CageRow((0.0, 0.0), (1.0, 0.0), length, count, RowSide.BOTH)
    params = replace(PARAMS, trigger_lead_m=lead, pulse_duration_s=duration)
    try:
        trig = plan_dispense(cand, row, params, 0.6)
    except OverlappingPulses:
        return
    for seq in trig.values():
        assert all(b > a for a, b in zip(seq, seq[1:]))


def test_arm_plan_by_mode(plan):
    assert arm_plan(Mode.APPROACH, plan, 0) == plan.stowed
    assert arm_plan(Mode.FEED_ROW, plan, 0) == plan.feed_pose[0]
    assert arm_plan(Mode.DONE, plan, 0) == plan.stowed


def _both_sides_setup(setup):
    scen = setup.scenario
    return replace(setup, scenario=replace(scen, rows=(replace(scen.rows[0], side=RowSide.BOTH),)))


def test_mission_modes_and_shared_pump(setup, candidates):
    setup = _both_sides_setup(setup)
    cand = candidates[CandidateId.DOUBLE_TRANSLATORY]
    ctrl_modes = []
    from feedcosim.controller import FeedingController
    from feedcosim.kernel import run_cosim
    from feedcosim.plant import RobotPlant

    class Spy(FeedingController):
        def step(self, mon, t):
            out = super().step(mon, t)
            ctrl_modes.append(self.state.mode)
            return out

    plant = RobotPlant(setup.scenario, setup.vehicle, setup.sensors, cand, setup.controller.pump_rate_kg_s)
    ctrl = Spy(setup.scenario, setup.vehicle, setup.sensors, setup.controller, cand)
    log = run_cosim(plant, ctrl, setup.scenario, setup.cosim)
    seq = [m for i, m in enumerate(ctrl_modes) if i == 0 or m is not ctrl_modes[i - 1]]
    assert seq == [Mode.APPROACH, Mode.DEPLOY_ARM, Mode.FEED_ROW, Mode.STOW_ARM, Mode.DONE]
    for a, b in zip(seq, seq[1:]):
        assert b in ALLOWED_TRANSITIONS[a]
    for snap in log.snapshots:
        assert not (snap.controlled_values["pump_left"] and snap.controlled_values["pump_right"])
    assert len(log.dispense_events) == 20


def test_two_row_mission(setup, translatory):
    scen = setup.scenario
    row0 = scen.rows[0]
    row1 = CageRow((7.0, 0.0), (1.0, 0.0), 0.5, 4, RowSide.LEFT, CageRow.default_tags(1, 4, 0.5))
    setup = replace(setup, scenario=replace(scen, rows=(row0, row1)))
    log, report = run_single(setup, translatory)
    assert log.termination.value == "ControllerDone"
    assert [e.row_index for e in log.dispense_events] == [0] * 10 + [1] * 4
    assert report.precision_ok and report.overall_pass
