"""Scenario file parsing and serialisation.

A scenario file is a JSON object with the sections ``scenario``,
``vehicle``, ``sensors``, ``controller``, ``candidates``, ``cosim`` and
``sweep``.  Only ``scenario`` is required, and inside it the row layout,
start pose and corridor width must be given; everything else falls back to
defaults.  Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .controller import ControllerParams
from .kernel import CoSimConfig
from .world import (
    ArmCandidate,
    CageRow,
    CandidateId,
    JointType,
    RowSide,
    SensorParams,
    Side,
    StartArea,
    VehicleParams,
    WorldScenario,
    default_candidates,
    default_scenario,
)


class ParseError(ValueError):
    """Unreadable file, malformed JSON, unknown or missing keys, wrong types."""


class ValidationError(ValueError):
    """Well-formed input that violates a model invariant."""


@dataclass(frozen=True)
class SweepSpec:
    candidates: tuple[CandidateId, ...] = tuple(CandidateId)
    lateral_offsets_m: tuple[float, ...] = (-0.1, 0.0, 0.1)
    heading_offsets_rad: tuple[float, ...] = (-0.087, 0.0, 0.087)
    seeds: tuple[int, ...] = (42,)


@dataclass(frozen=True)
class Setup:
    """Everything one scenario file describes."""

    scenario: WorldScenario
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    sensors: SensorParams = field(default_factory=SensorParams)
    controller: ControllerParams = field(default_factory=ControllerParams)
    candidates: tuple[ArmCandidate, ...] = field(default_factory=lambda: tuple(default_candidates()))
    cosim: CoSimConfig = field(default_factory=CoSimConfig)
    sweep: SweepSpec = field(default_factory=SweepSpec)

    def candidate(self, cid) -> ArmCandidate:
        cid = CandidateId(cid)
        for c in self.candidates:
            if c.id is cid:
                return c
        raise KeyError(cid.value)


def default_setup() -> Setup:
    return Setup(scenario=default_scenario())


# --- parsing --------------------------------------------------------------


def _check_keys(data, allowed, required, path):
    if not isinstance(data, dict):
        raise ParseError(f"{path}: expected an object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ParseError(f"{path}: unknown key(s) {', '.join(unknown)}")
    missing = [k for k in required if k not in data]
    if missing:
        raise ParseError(f"{path}: missing required key(s) {', '.join(missing)}")


def _num(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"{path}: expected a number")
    return float(v)


def _int(v, path):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"{path}: expected an integer")
    return v


def _vec(v, n, path):
    if not isinstance(v, list) or len(v) != n:
        raise ParseError(f"{path}: expected {n} numbers")
    return tuple(_num(x, f"{path}[{i}]") for i, x in enumerate(v))


def _enum(cls, v, path):
    try:
        return cls(v)
    except ValueError:
        raise ParseError(f"{path}: {v!r} is not one of {[e.value for e in cls]}") from None


def _construct(cls, kwargs, path):
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"{path}: {exc}") from None


def _flat(cls, data, path):
    """Parse a section whose fields are all scalars with defaults."""
    data = {} if data is None else data
    fields = {f.name: f for f in dataclasses.fields(cls)}
    _check_keys(data, fields, (), path)
    kw = {}
    for name, value in data.items():
        default = fields[name].default
        p = f"{path}.{name}"
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ParseError(f"{p}: expected true/false")
            kw[name] = value
        elif isinstance(default, int):
            kw[name] = _int(value, p)
        else:
            kw[name] = _num(value, p)
    return _construct(cls, kw, path)


def _row(data, ri, path):
    _check_keys(
        data,
        ("axis_origin", "axis_direction", "cage_length_m", "cage_count", "side", "rfid_tags",
         "feed_line_offset_m", "area_length_m", "area_width_m"),
        ("axis_origin", "axis_direction", "cage_length_m", "cage_count", "side"),
        path,
    )
    kw = {
        "axis_origin": _vec(data["axis_origin"], 2, f"{path}.axis_origin"),
        "axis_direction": _vec(data["axis_direction"], 2, f"{path}.axis_direction"),
        "cage_length_m": _num(data["cage_length_m"], f"{path}.cage_length_m"),
        "cage_count": _int(data["cage_count"], f"{path}.cage_count"),
        "side": _enum(RowSide, data["side"], f"{path}.side"),
    }
    for name in ("feed_line_offset_m", "area_length_m", "area_width_m"):
        if name in data:
            kw[name] = _num(data[name], f"{path}.{name}")
    if "rfid_tags" in data:
        tags = data["rfid_tags"]
        if not isinstance(tags, list):
            raise ParseError(f"{path}.rfid_tags: expected a list")
        parsed = []
        for ti, tag in enumerate(tags):
            tp = f"{path}.rfid_tags[{ti}]"
            _check_keys(tag, ("id", "s_m"), ("id", "s_m"), tp)
            if not isinstance(tag["id"], str) or not tag["id"]:
                raise ParseError(f"{tp}.id: expected a non-empty string")
            parsed.append((tag["id"], _num(tag["s_m"], f"{tp}.s_m")))
        kw["rfid_tags"] = tuple(parsed)
    else:
        kw["rfid_tags"] = CageRow.default_tags(ri, kw["cage_count"], kw["cage_length_m"])
    return _construct(CageRow, kw, path)


def _scenario(data, path="scenario"):
    _check_keys(data, ("rows", "start_pose_nominal", "corridor_half_width_m", "start_area"),
                ("rows", "start_pose_nominal", "corridor_half_width_m"), path)
    rows = data["rows"]
    if not isinstance(rows, list) or not rows:
        raise ParseError(f"{path}.rows: expected a non-empty list")
    return WorldScenario(
        rows=tuple(_row(r, i, f"{path}.rows[{i}]") for i, r in enumerate(rows)),
        start_pose_nominal=_vec(data["start_pose_nominal"], 3, f"{path}.start_pose_nominal"),
        corridor_half_width_m=_num(data["corridor_half_width_m"], f"{path}.corridor_half_width_m"),
        start_area=_flat(StartArea, data.get("start_area"), f"{path}.start_area"),
    )


def _candidate(data, path):
    _check_keys(data, ("id", "sides", "joint_type", "base_offsets", "link_lengths_m", "travel_limits_m",
                       "half_cage_shift", "arm_time_constant_s"), ("id",), path)
    cid = _enum(CandidateId, data["id"], f"{path}.id")
    base = {c.id: c for c in default_candidates()}[cid]
    kw = {}
    if "sides" in data:
        kw["sides"] = _int(data["sides"], f"{path}.sides")
    if "joint_type" in data:
        kw["joint_type"] = _enum(JointType, data["joint_type"], f"{path}.joint_type")
    if "base_offsets" in data:
        offs = data["base_offsets"]
        _check_keys(offs, [s.value for s in Side], (), f"{path}.base_offsets")
        kw["base_offsets"] = tuple((Side(k), _vec(offs[k], 2, f"{path}.base_offsets.{k}"))
                                   for k in (s.value for s in Side) if k in offs)
    for name in ("link_lengths_m", "travel_limits_m"):
        if name in data:
            kw[name] = _vec(data[name], 2, f"{path}.{name}")
    if "half_cage_shift" in data:
        if not isinstance(data["half_cage_shift"], bool):
            raise ParseError(f"{path}.half_cage_shift: expected true/false")
        kw["half_cage_shift"] = data["half_cage_shift"]
    if "arm_time_constant_s" in data:
        kw["arm_time_constant_s"] = _num(data["arm_time_constant_s"], f"{path}.arm_time_constant_s")
    return dataclasses.replace(base, **kw)


def _sweep(data, path="sweep"):
    data = {} if data is None else data
    _check_keys(data, ("candidates", "lateral_offsets_m", "heading_offsets_rad", "seeds"), (), path)
    kw = {}

    def seq(name):
        v = data[name]
        if not isinstance(v, list) or not v:
            raise ParseError(f"{path}.{name}: expected a non-empty list")
        return v

    if "candidates" in data:
        kw["candidates"] = tuple(_enum(CandidateId, v, f"{path}.candidates") for v in seq("candidates"))
    for name in ("lateral_offsets_m", "heading_offsets_rad"):
        if name in data:
            kw[name] = tuple(_num(v, f"{path}.{name}") for v in seq(name))
    if "seeds" in data:
        kw["seeds"] = tuple(_int(v, f"{path}.seeds") for v in seq("seeds"))
    return SweepSpec(**kw)


def parse_setup(doc: dict) -> Setup:
    _check_keys(doc, ("scenario", "vehicle", "sensors", "controller", "candidates", "cosim", "sweep"),
                ("scenario",), "document")
    kw = {
        "scenario": _scenario(doc["scenario"]),
        "vehicle": _flat(VehicleParams, doc.get("vehicle"), "vehicle"),
        "sensors": _flat(SensorParams, doc.get("sensors"), "sensors"),
        "controller": _flat(ControllerParams, doc.get("controller"), "controller"),
        "cosim": _flat(CoSimConfig, doc.get("cosim"), "cosim"),
        "sweep": _sweep(doc.get("sweep")),
    }
    if "candidates" in doc:
        cands = doc["candidates"]
        if not isinstance(cands, list) or not cands:
            raise ParseError("candidates: expected a non-empty list")
        kw["candidates"] = tuple(_candidate(c, f"candidates[{i}]") for i, c in enumerate(cands))
        ids = [c.id for c in kw["candidates"]]
        if len(set(ids)) != len(ids):
            raise ValidationError("candidates: duplicate id")
    return Setup(**kw)


def load_setup(path) -> Setup:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    return parse_setup(doc)


# --- serialisation --------------------------------------------------------


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "value") and isinstance(obj.value, str):
        return obj.value
    return obj


def setup_to_dict(setup: Setup) -> dict:
    """Serialise with every default written out."""
    sc = setup.scenario
    rows = []
    for row in sc.rows:
        d = _plain(row)
        d["rfid_tags"] = [{"id": tag, "s_m": s} for tag, s in row.rfid_tags]
        rows.append(d)
    cands = []
    for c in setup.candidates:
        d = _plain(c)
        d["base_offsets"] = {side.value: list(off) for side, off in c.base_offsets}
        cands.append(d)
    return {
        "scenario": {
            "rows": rows,
            "start_pose_nominal": list(sc.start_pose_nominal),
            "corridor_half_width_m": sc.corridor_half_width_m,
            "start_area": _plain(sc.start_area),
        },
        "vehicle": _plain(setup.vehicle),
        "sensors": _plain(setup.sensors),
        "controller": _plain(setup.controller),
        "candidates": cands,
        "cosim": _plain(setup.cosim),
        "sweep": _plain(setup.sweep),
    }


def dump_setup(setup: Setup, path) -> None:
    Path(path).write_text(json.dumps(setup_to_dict(setup), indent=2) + "\n")
