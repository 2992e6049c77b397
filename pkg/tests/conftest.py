import pytest

from feedcosim.config import default_setup
from feedcosim.plant import initial_state, joint_names, stowed_setpoints
from feedcosim.world import CandidateId, Side, default_candidates


@pytest.fixture
def setup():
    return default_setup()


@pytest.fixture
def candidates():
    return {c.id: c for c in default_candidates()}


@pytest.fixture
def translatory(candidates):
    return candidates[CandidateId.SINGLE_TRANSLATORY]


def controlled_values(candidate, speed=0.0, steer=0.0, arm=None, pumps=()):
    """Controlled mapping for a candidate; arm defaults to stowed."""
    out = {"speed_set": speed, "steer_set": steer}
    for side in candidate.fitted_sides:
        q = (arm or {}).get(side, stowed_setpoints(candidate, side))
        for name, v in zip(joint_names(candidate, side), q):
            out[name + "_set"] = v
        out[f"pump_{side.key}"] = side in pumps
    return out


def moving_state(vehicle, candidate, x=0.0, y=0.0, heading=0.0, speed=0.0, steer=0.0, arm=None):
    st = initial_state((x, y, heading), vehicle, candidate)
    from dataclasses import replace

    joints = dict(st.arm_joints)
    joints.update(arm or {})
    return replace(st, speed=speed, steer_angle=steer, arm_joints=joints)


LEFT, RIGHT = Side.LEFT, Side.RIGHT


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
