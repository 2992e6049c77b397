"""Post-run evaluation of a run log against the three performance demands."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .geometry import point_segment_distance, rect_corners, segment_polygon_signed_distance
from .world import VehicleParams, WorldScenario

SPEED_LIMIT_M_S = 0.25
SPEED_TOL = 1e-9
PRECISION_M = 0.05
# absorbs rounding in the position arithmetic at the inclusive limit
PRECISION_TOL = 1e-9


class EmptyTrace(ValueError):
    pass


@dataclass(frozen=True)
class DispenseCheck:
    event_index: int
    target_id: str | None
    along_row_error_m: float | None
    inside_area: bool


@dataclass
class DemandReport:
    max_speed_m_s: float
    speed_ok: bool
    dispense_checks: list[DispenseCheck] = field(default_factory=list)
    missed_targets: int = 0
    worst_abs_error_m: float = 0.0
    precision_ok: bool = True
    min_clearance_m: float = math.inf
    collision_ok: bool = True
    overall_pass: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def check_speed(pose_trace) -> tuple[float, bool]:
    if not pose_trace:
        raise EmptyTrace("pose trace is empty")
    vmax = max(p[4] for p in pose_trace)
    return vmax, vmax <= SPEED_LIMIT_M_S + SPEED_TOL


def check_precision(events, scenario: WorldScenario) -> dict:
    """Match events to placement targets and score them.

    Matching is greedy over all (event, target) pairs on the same row and
    side, closest first; each target and each event is used at most once.
    """
    targets = scenario.targets()
    pairs = []
    for ei, ev in enumerate(events):
        for ti, tg in enumerate(targets):
            if tg.row_index == ev.row_index and tg.side is ev.side:
                d = math.hypot(ev.position[0] - tg.x, ev.position[1] - tg.y)
                pairs.append((d, ei, ti))
    pairs.sort()
    ev_match: dict[int, int] = {}
    claimed: set[int] = set()
    for _, ei, ti in pairs:
        if ei in ev_match or ti in claimed:
            continue
        ev_match[ei] = ti
        claimed.add(ti)

    checks = []
    worst = 0.0
    ok = True
    for ei, ev in enumerate(events):
        ti = ev_match.get(ei)
        if ti is None:
            checks.append(DispenseCheck(ei, None, None, False))
            ok = False
            continue
        tg = targets[ti]
        row = scenario.rows[tg.row_index]
        s, lat = row.to_row(*ev.position)
        err = s - tg.s
        inside = abs(err) <= row.area_length_m / 2.0 and abs(lat - tg.lateral) <= row.area_width_m / 2.0
        checks.append(DispenseCheck(ei, tg.target_id, err, inside))
        worst = max(worst, abs(err))
        if abs(err) > PRECISION_M + PRECISION_TOL or not inside:
            ok = False
    missed = len(targets) - len(claimed)
    return {
        "dispense_checks": checks,
        "missed_targets": missed,
        "worst_abs_error_m": worst,
        "precision_ok": ok and missed == 0,
    }


def body_clearance(x: float, y: float, heading: float, vehicle: VehicleParams, scenario: WorldScenario) -> float:
    body = rect_corners(x, y, heading, vehicle.body_length_m, vehicle.body_width_m)
    return min(segment_polygon_signed_distance(a, b, body) for a, b in scenario.wall_segments())


def check_collision(pose_trace, vehicle: VehicleParams, scenario: WorldScenario) -> tuple[float, bool]:
    """Smallest signed body-to-wall distance over all pose samples.

    The body rectangle is centred on the rear-axle midpoint.
    """
    if not pose_trace:
        raise EmptyTrace("pose trace is empty")
    segs = scenario.wall_segments()
    L, W = vehicle.body_length_m, vehicle.body_width_m
    reach = math.hypot(L, W) / 2.0
    clearance = math.inf
    for _, x, y, th, _ in pose_trace:
        body = None
        for a, b in segs:
            # cheap bound first: segment farther than the body's circumradius
            lower = point_segment_distance((x, y), a, b) - reach
            if lower >= clearance:
                continue
            if body is None:
                body = rect_corners(x, y, th, L, W)
            clearance = min(clearance, segment_polygon_signed_distance(a, b, body))
    return clearance, clearance > 0.0


def evaluate_run(log, scenario: WorldScenario, vehicle: VehicleParams) -> DemandReport:
    vmax, speed_ok = check_speed(log.pose_trace)
    prec = check_precision(log.dispense_events, scenario)
    clearance, collision_ok = check_collision(log.pose_trace, vehicle, scenario)
    return DemandReport(
        max_speed_m_s=vmax,
        speed_ok=speed_ok,
        min_clearance_m=clearance,
        collision_ok=collision_ok,
        overall_pass=speed_ok and prec["precision_ok"] and collision_ok,
        **prec,
    )
