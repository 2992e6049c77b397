"""Scenario geometry and robot parameter records.

Coordinates are planar metres in a fixed world frame.  Each cage row has a
guidance line (its axis); along-row position ``s`` is measured from the row
origin in the axis direction and ``lateral`` is positive to the left of it.
Cage fronts sit at ``±corridor_half_width_m`` from the axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import NamedTuple


class Side(str, Enum):
    LEFT = "Left"
    RIGHT = "Right"

    @property
    def sign(self) -> float:
        return 1.0 if self is Side.LEFT else -1.0

    @property
    def key(self) -> str:
        return self.value.lower()


class RowSide(str, Enum):
    LEFT = "Left"
    RIGHT = "Right"
    BOTH = "Both"

    @property
    def sides(self) -> tuple[Side, ...]:
        if self is RowSide.BOTH:
            return (Side.LEFT, Side.RIGHT)
        return (Side(self.value),)


class JointType(str, Enum):
    ROTARY = "Rotary"
    TRANSLATORY = "Translatory"


class CandidateId(str, Enum):
    SINGLE_ROTARY = "SingleRotary"
    SINGLE_TRANSLATORY = "SingleTranslatory"
    DOUBLE_ROTARY = "DoubleRotary"
    DOUBLE_TRANSLATORY = "DoubleTranslatory"

    @property
    def order(self) -> int:
        return list(CandidateId).index(self)


class Violation(NamedTuple):
    """One failed invariant; ``subject`` names the offending item."""

    kind: str
    subject: str = ""

    def __str__(self) -> str:
        return f"{self.kind}({self.subject})" if self.subject else self.kind


class Target(NamedTuple):
    target_id: str
    row_index: int
    side: Side
    cage: int
    s: float
    lateral: float
    x: float
    y: float


@dataclass(frozen=True)
class CageRow:
    axis_origin: tuple[float, float]
    axis_direction: tuple[float, float]
    cage_length_m: float
    cage_count: int
    side: RowSide
    rfid_tags: tuple[tuple[str, float], ...] = ()
    # distance from the cage front to the line the fodder is placed on
    feed_line_offset_m: float = 0.15
    area_length_m: float = 0.3
    area_width_m: float = 0.2

    @property
    def length_m(self) -> float:
        return self.cage_count * self.cage_length_m

    @property
    def heading(self) -> float:
        return math.atan2(self.axis_direction[1], self.axis_direction[0])

    def to_row(self, x: float, y: float) -> tuple[float, float]:
        dx = x - self.axis_origin[0]
        dy = y - self.axis_origin[1]
        ux, uy = self.axis_direction
        return dx * ux + dy * uy, -dx * uy + dy * ux

    def to_world(self, s: float, lateral: float) -> tuple[float, float]:
        ux, uy = self.axis_direction
        return (
            self.axis_origin[0] + s * ux - lateral * uy,
            self.axis_origin[1] + s * uy + lateral * ux,
        )

    def cage_centers(self) -> list[float]:
        return [(i + 0.5) * self.cage_length_m for i in range(self.cage_count)]

    @staticmethod
    def default_tags(row_index: int, cage_count: int, cage_length_m: float):
        """One tag per cage, at the cage start."""
        return tuple((f"r{row_index}-t{i}", i * cage_length_m) for i in range(cage_count))


@dataclass(frozen=True)
class StartArea:
    lateral_m: float = 0.1
    longitudinal_m: float = 0.1
    heading_rad: float = 0.0873


@dataclass(frozen=True)
class WorldScenario:
    rows: tuple[CageRow, ...]
    start_pose_nominal: tuple[float, float, float]
    corridor_half_width_m: float
    start_area: StartArea = field(default_factory=StartArea)

    def targets(self) -> list[Target]:
        out = []
        hw = self.corridor_half_width_m
        for ri, row in enumerate(self.rows):
            for side in row.side.sides:
                lat = side.sign * (hw + row.feed_line_offset_m)
                for ci, s in enumerate(row.cage_centers()):
                    x, y = row.to_world(s, lat)
                    out.append(Target(f"r{ri}-{side.key}-c{ci}", ri, side, ci, s, lat, x, y))
        return out

    def tag_table(self) -> dict[str, tuple[int, float]]:
        return {tag: (ri, s) for ri, row in enumerate(self.rows) for tag, s in row.rfid_tags}

    def active_row(self, x: float, y: float) -> int:
        """Index of the first row whose end the point has not yet passed."""
        for ri, row in enumerate(self.rows):
            s, _ = row.to_row(x, y)
            if s < row.length_m:
                return ri
        return len(self.rows) - 1

    def row_of_point(self, x: float, y: float) -> int:
        """Row whose feeding strip is nearest to a ground point."""
        best, best_d = 0, math.inf
        for ri, row in enumerate(self.rows):
            s, lat = row.to_row(x, y)
            gap = max(0.0, -s, s - row.length_m)
            d = math.hypot(gap, max(0.0, abs(lat) - self.corridor_half_width_m - row.feed_line_offset_m))
            if d < best_d:
                best, best_d = ri, d
        return best

    def wall_segments(self) -> list[tuple[tuple[float, float], tuple[float, float]]]:
        """Cage fronts and corridor walls: one segment per row side."""
        segs = []
        hw = self.corridor_half_width_m
        for row in self.rows:
            for lat in (hw, -hw):
                segs.append((row.to_world(0.0, lat), row.to_world(row.length_m, lat)))
        return segs


@dataclass(frozen=True)
class VehicleParams:
    wheelbase_m: float = 1.0
    track_width_m: float = 0.8
    wheel_radius_m: float = 0.15
    body_length_m: float = 1.2
    body_width_m: float = 0.8
    max_steer_rad: float = 0.5
    steer_rate_limit_rad_s: float = 1.0
    accel_limit_m_s2: float = 0.5
    speed_time_constant_s: float = 0.3
    steer_time_constant_s: float = 0.2
    hopper_kg: float = 20.0


@dataclass(frozen=True)
class SensorParams:
    encoder_ticks_per_rev: int = 2048
    rfid_range_m: float = 0.25
    vision_noise_std_m: float = 0.0
    imu_noise_std_rad_s: float = 0.0
    kingpin_quantization_rad: float = 0.001


@dataclass(frozen=True)
class ArmCandidate:
    """A feeder-arm configuration.

    ``base_offsets`` maps each fitted side to the arm base position in the
    body frame (longitudinal, lateral) measured from the rear-axle midpoint.
    Rotary arms use ``link_lengths_m``; translatory arms extend along the
    body lateral axis within ``travel_limits_m``.
    """

    id: CandidateId
    sides: int
    joint_type: JointType
    base_offsets: tuple[tuple[Side, tuple[float, float]], ...]
    link_lengths_m: tuple[float, float] = (0.4, 0.3)
    travel_limits_m: tuple[float, float] = (0.0, 0.5)
    half_cage_shift: bool = False
    arm_time_constant_s: float = 0.2

    @cached_property
    def fitted_sides(self) -> tuple[Side, ...]:
        return tuple(side for side, _ in self.base_offsets)

    def base_offset(self, side: Side) -> tuple[float, float]:
        for s, off in self.base_offsets:
            if s is side:
                return off
        raise SideUnavailable(f"{self.id.value} has no {side.value} arm")

    @property
    def joints_per_side(self) -> int:
        return 2 if self.joint_type is JointType.ROTARY else 1


class SideUnavailable(LookupError):
    pass


class InvalidCandidate(ValueError):
    pass


def default_candidates() -> list[ArmCandidate]:
    left = (Side.LEFT, (0.3, 0.4))
    right = (Side.RIGHT, (0.3, -0.4))
    return [
        ArmCandidate(CandidateId.SINGLE_ROTARY, 1, JointType.ROTARY, (left,)),
        ArmCandidate(CandidateId.SINGLE_TRANSLATORY, 1, JointType.TRANSLATORY, (left,)),
        ArmCandidate(CandidateId.DOUBLE_ROTARY, 2, JointType.ROTARY, (left, right), half_cage_shift=True),
        ArmCandidate(CandidateId.DOUBLE_TRANSLATORY, 2, JointType.TRANSLATORY, (left, right), half_cage_shift=True),
    ]


def default_scenario() -> WorldScenario:
    row = CageRow(
        axis_origin=(0.0, 0.0),
        axis_direction=(1.0, 0.0),
        cage_length_m=0.5,
        cage_count=10,
        side=RowSide.LEFT,
        rfid_tags=CageRow.default_tags(0, 10, 0.5),
    )
    return WorldScenario(rows=(row,), start_pose_nominal=(-2.0, 0.0, 0.0), corridor_half_width_m=0.6)


def candidate_violations(candidate: ArmCandidate) -> list[Violation]:
    out = []
    cid = candidate.id
    double = cid in (CandidateId.DOUBLE_ROTARY, CandidateId.DOUBLE_TRANSLATORY)
    if candidate.sides not in (1, 2) or (candidate.sides == 2) != double:
        out.append(Violation("InvalidCandidate", f"{cid.value}: sides={candidate.sides}"))
    if len(candidate.base_offsets) != candidate.sides or len(set(candidate.fitted_sides)) != len(candidate.base_offsets):
        out.append(Violation("InvalidCandidate", f"{cid.value}: base offsets do not match sides"))
    expected_joint = JointType.ROTARY if "Rotary" in cid.value else JointType.TRANSLATORY
    if candidate.joint_type is not expected_joint:
        out.append(Violation("InvalidCandidate", f"{cid.value}: joint_type={candidate.joint_type.value}"))
    if candidate.half_cage_shift and candidate.sides != 2:
        out.append(Violation("InvalidCandidate", f"{cid.value}: half_cage_shift needs two sides"))
    lo, hi = candidate.travel_limits_m
    if not 0 <= lo < hi:
        out.append(Violation("InvalidCandidate", f"{cid.value}: travel limits"))
    if min(candidate.link_lengths_m) <= 0 or candidate.arm_time_constant_s <= 0:
        out.append(Violation("InvalidCandidate", f"{cid.value}: non-positive arm parameter"))
    return out
