"""Lock-step DE/CT co-simulation master.

The master owns time.  At every communication point ``t = k * comm_interval``
it hands the latched sensor snapshot to the controller, receives actuator
values back, holds them constant while the plant integrates up to the next
communication point in fixed substeps, then samples the sensors again.

A plant must provide ``schema``, ``reset(seed)``, ``sample()``,
``substep(controlled, t, dt)`` (returning dispense events) and ``pose()``.
A controller must provide ``schema``, ``reset()`` and
``step(monitored, t) -> (controlled, done)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

from .world import Violation

log = logging.getLogger(__name__)


class SignalKind(str, Enum):
    REAL = "real"
    INTEGER = "integer"
    BOOLEAN = "boolean"
    OPTIONAL_TAG = "optional-tag"


@dataclass(frozen=True)
class Signal:
    name: str
    unit: str = ""
    kind: SignalKind = SignalKind.REAL


@dataclass(frozen=True)
class ContractSchema:
    monitored: tuple[Signal, ...]
    controlled: tuple[Signal, ...]

    @property
    def monitored_names(self) -> frozenset[str]:
        return frozenset(s.name for s in self.monitored)

    @property
    def controlled_names(self) -> frozenset[str]:
        return frozenset(s.name for s in self.controlled)


@dataclass(frozen=True)
class ContractSnapshot:
    t: float
    monitored_values: Mapping[str, Any]
    controlled_values: Mapping[str, Any]


@dataclass(frozen=True)
class CoSimConfig:
    comm_interval_s: float = 0.01
    ct_substep_s: float = 0.001
    t_max_s: float = 120.0
    seed: int = 42

    def __post_init__(self):
        if not 0 < self.ct_substep_s <= self.comm_interval_s:
            raise ValueError("need 0 < ct_substep_s <= comm_interval_s")
        ratio = self.comm_interval_s / self.ct_substep_s
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError("comm_interval_s must be a whole number of ct_substep_s")
        if not self.t_max_s > 0:
            raise ValueError("t_max_s must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def substeps(self) -> int:
        return round(self.comm_interval_s / self.ct_substep_s)

    @property
    def sync_steps(self) -> int:
        return math.ceil(self.t_max_s / self.comm_interval_s - 1e-9)


class Termination(str, Enum):
    CONTROLLER_DONE = "ControllerDone"
    TIME_LIMIT = "TimeLimit"
    FAULT = "Fault"


@dataclass
class RunLog:
    snapshots: list[ContractSnapshot] = field(default_factory=list)
    pose_trace: list[tuple[float, float, float, float, float]] = field(default_factory=list)
    dispense_events: list = field(default_factory=list)
    termination: Termination = Termination.TIME_LIMIT
    fault: str = ""
    initial_hopper_kg: float = 0.0
    final_hopper_kg: float = 0.0
    # fodder already pumped into a pulse that had not closed when the run ended
    residue_kg: float = 0.0


class ContractMismatch(ValueError):
    pass


class NumericFault(ArithmeticError):
    pass


class ExchangeError(ValueError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"{type(self).__name__}({self.name!r})"


class MissingSignal(ExchangeError):
    pass


class UnknownSignal(ExchangeError):
    pass


class NonFiniteValue(ExchangeError, NumericFault):
    pass


def validate_contract(schema: ContractSchema) -> list[Violation]:
    """Return every violation of the schema invariants; empty means valid."""
    if not schema.monitored and not schema.controlled:
        return [Violation("EmptySchema")]
    out = []
    for signals in (schema.monitored, schema.controlled):
        seen = set()
        for sig in signals:
            if not sig.name:
                out.append(Violation("EmptyName"))
            elif sig.name in seen:
                out.append(Violation("DuplicateName", sig.name))
            seen.add(sig.name)
    for name in sorted(schema.monitored_names & schema.controlled_names):
        out.append(Violation("RoleOverlap", name))
    return out


def _check_values(values: Mapping[str, Any], signals: tuple[Signal, ...]) -> None:
    names = {s.name for s in signals}
    for sig in signals:
        if sig.name not in values:
            raise MissingSignal(sig.name)
    for name in values:
        if name not in names:
            raise UnknownSignal(name)
    for sig in signals:
        v = values[sig.name]
        if sig.kind is SignalKind.REAL and not math.isfinite(v):
            raise NonFiniteValue(sig.name)


def exchange(snapshot: ContractSnapshot, schema: ContractSchema) -> ContractSnapshot:
    """Check that a snapshot carries exactly the schema's signals, all finite."""
    _check_values(snapshot.monitored_values, schema.monitored)
    _check_values(snapshot.controlled_values, schema.controlled)
    return snapshot


def run_cosim(plant, controller, scenario, config: CoSimConfig) -> RunLog:
    """Run one co-simulation to completion and return its log.

    ``scenario`` may be None for generic plants; otherwise it is checked
    with the plant's vehicle and candidate before anything runs.
    """
    schema = plant.schema
    if schema != controller.schema:
        raise ContractMismatch("plant and controller declare different contracts")
    problems = validate_contract(schema)
    if problems:
        raise ContractMismatch(", ".join(map(str, problems)))
    if scenario is not None:
        from .plant import ScenarioInvalid, validate_scenario

        problems = validate_scenario(scenario, plant.vehicle, plant.candidate)
        if problems:
            raise ScenarioInvalid(problems)

    plant.reset(config.seed)
    controller.reset()
    dc = config.comm_interval_s
    di = config.ct_substep_s
    n_sub = config.substeps
    result = RunLog()
    ledger = getattr(plant, "hopper_ledger", None)
    if ledger:
        result.initial_hopper_kg = ledger()[0]

    result.pose_trace.append((0.0, *plant.pose()))
    monitored = plant.sample()
    termination = Termination.TIME_LIMIT
    try:
        for k in range(config.sync_steps):
            t = k * dc
            _check_values(monitored, schema.monitored)
            controlled, done = controller.step(monitored, t)
            _check_values(controlled, schema.controlled)
            result.snapshots.append(ContractSnapshot(t, monitored, controlled))
            if done:
                termination = Termination.CONTROLLER_DONE
                break
            # zero-order hold: the same controlled mapping for every substep
            for i in range(n_sub):
                events = plant.substep(controlled, t + i * di, di)
                if events:
                    result.dispense_events.extend(events)
            result.pose_trace.append(((k + 1) * dc, *plant.pose()))
            monitored = plant.sample()
    except NumericFault as exc:
        log.warning("run aborted at t=%.3f: %s", t, exc)
        termination = Termination.FAULT
        result.fault = str(exc)
    result.termination = termination
    if ledger:
        _, result.final_hopper_kg, result.residue_kg = ledger()
    return result
