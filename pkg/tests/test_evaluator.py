import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st


from feedcosim.evaluator import (
    EmptyTrace,
    body_clearance,
    check_collision,
    check_precision,
    check_speed,
    evaluate_run,
)
from feedcosim.kernel import RunLog, Termination
from feedcosim.plant import DispenseEvent
from feedcosim.world import VehicleParams, default_scenario

VEH = VehicleParams()
SCEN = default_scenario()


def perfect_events(shift=0.0, lateral_shift=0.0, drop=()):
    return [DispenseEvent(1.0 + i, (t.x + shift, t.y + lateral_shift), t.side, 0.1, 0, "SingleTranslatory")
            for i, t in enumerate(SCEN.targets()) if i not in drop]


def test_speed_examples():
    trace = [(0.0, 0, 0, 0, 0.0), (0.01, 0, 0, 0, 0.20)]
    assert check_speed(trace) == (0.20, True)
    assert check_speed(trace + [(0.02, 0, 0, 0, 0.26)]) == (0.26, False)
    assert check_speed([(0.0, 0, 0, 0, 0.25)])[1] is True
    with pytest.raises(EmptyTrace):
        check_speed([])


@pytest.mark.parametrize("shift,ok", [(0.0, True), (0.05, True), (-0.05, True), (0.0501, False), (-0.06, False)])
def test_precision_threshold(shift, ok):
    res = check_precision(perfect_events(shift), SCEN)
    assert res["precision_ok"] is ok
    assert res["worst_abs_error_m"] == pytest.approx(abs(shift), abs=1e-12)
    assert res["missed_targets"] == 0


def test_precision_outside_area_laterally():
    res = check_precision(perfect_events(lateral_shift=0.11), SCEN)
    assert res["worst_abs_error_m"] == pytest.approx(0.0, abs=1e-12)
    assert not res["precision_ok"]
    assert not any(c.inside_area for c in res["dispense_checks"])


def test_missed_target_fails():
    res = check_precision(perfect_events(drop=(3,)), SCEN)
    assert res["missed_targets"] == 1 and not res["precision_ok"]


def test_extra_event_unmatched():
    evs = perfect_events()
    evs.append(replace(evs[0], t=99.0))
    res = check_precision(evs, SCEN)
    assert res["dispense_checks"][-1].target_id is None
    assert not res["precision_ok"]


def test_wrong_side_never_matches():
    from feedcosim.world import Side

    evs = [replace(e, side=Side.RIGHT) for e in perfect_events()]
    res = check_precision(evs, SCEN)
    assert all(c.target_id is None for c in res["dispense_checks"])


@settings(max_examples=50, deadline=None)
@given(shifts=st.lists(st.floats(-0.3, 0.3), min_size=10, max_size=10), order=st.permutations(range(10)))
def test_matching_is_injective(shifts, order):
    base = perfect_events()
    evs = [replace(base[i], position=(base[i].position[0] + shifts[i], base[i].position[1])) for i in order]
    res = check_precision(evs, SCEN)
    ids = [c.target_id for c in res["dispense_checks"] if c.target_id is not None]
    assert len(ids) == len(set(ids))
    assert res["missed_targets"] == 10 - len(ids)


def brute_clearance(x, y, th, hw, length=5.0, n=4001):
    """Sampled body-outline to wall distance; negative depth when a wall
    passes through the body."""
    c, s = math.cos(th), math.sin(th)
    hl, hb = VEH.body_length_m / 2, VEH.body_width_m / 2
    u = np.linspace(-1, 1, n)
    edges = [(u * hl, np.full(n, hb)), (u * hl, np.full(n, -hb)), (np.full(n, hl), u * hb), (np.full(n, -hl), u * hb)]
    bx = np.concatenate([x + c * dx - s * dy for dx, dy in edges])
    by = np.concatenate([y + s * dx + c * dy for dx, dy in edges])
    best = math.inf
    for wy in (hw, -hw):
        wx = np.linspace(0.0, length, n)
        d = np.min(np.hypot(bx[:, None] - wx[None, ::20], by[:, None] - wy))
        # a wall crossing the body has body points on both sides of it
        if (by > wy).any() and (by < wy).any() and bx.min() < length and bx.max() > 0:
            depth = min(np.max(by - wy), np.max(wy - by))
            best = min(best, -depth)
        else:
            best = min(best, d)
    return best


def test_collision_centred_corridor():
    scen = replace(SCEN, corridor_half_width_m=1.0)
    trace = [(0.0, 2.0, 0.0, 0.0, 0.2)]
    clearance, ok = check_collision(trace, VEH, scen)
    assert clearance == pytest.approx(0.6, abs=1e-12) and ok
    assert clearance == pytest.approx(brute_clearance(2.0, 0.0, 0.0, 1.0), abs=2e-3)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(0.8, 4.2), y=st.floats(-0.5, 0.5), th=st.floats(-0.6, 0.6))
def test_clearance_matches_sampling_oracle(x, y, th):
    got = body_clearance(x, y, th, VEH, SCEN)
    assert got == pytest.approx(brute_clearance(x, y, th, 0.6), abs=5e-3)


def test_overlap_detected():
    clearance, ok = check_collision([(0.0, 2.0, 0.3, 0.0, 0.1)], VEH, SCEN)
    assert clearance == pytest.approx(-0.1, abs=1e-12) and not ok


def test_single_pose_nearest_wall():
    clearance, _ = check_collision([(0.0, 2.0, 0.1, 0.0, 0.0)], VEH, SCEN)
    assert clearance == pytest.approx(0.6 - 0.1 - 0.4)


def test_collision_empty_trace():
    with pytest.raises(EmptyTrace):
        check_collision([], VEH, SCEN)


def test_overall_is_conjunction():
    trace = [(0.0, 2.0, 0.0, 0.0, 0.2)]
    base = RunLog(snapshots=[], pose_trace=trace, dispense_events=perfect_events(),
                  termination=Termination.CONTROLLER_DONE)
    assert evaluate_run(base, SCEN, VEH).overall_pass
    fast = replace(base, pose_trace=[(0.0, 2.0, 0.0, 0.0, 0.3)])
    off = replace(base, dispense_events=perfect_events(0.06))
    crash = replace(base, pose_trace=[(0.0, 2.0, 0.3, 0.0, 0.2)])  # y = 0.3: 0.1 m into the wall
    for log, field in ((fast, "speed_ok"), (off, "precision_ok"), (crash, "collision_ok")):
        rep = evaluate_run(log, SCEN, VEH)
        assert getattr(rep, field) is False and rep.overall_pass is False
        assert sum(not getattr(rep, f) for f in ("speed_ok", "precision_ok", "collision_ok")) == 1
