"""Design-space exploration over arm candidates and start-pose errors."""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .config import Setup, SweepSpec, ValidationError
from .controller import FeedingController, OverlappingPulses
from .evaluator import DemandReport, evaluate_run
from .kernel import CoSimConfig, RunLog, Termination, run_cosim
from .outputs import write_run
from .plant import RobotPlant, validate_scenario
from .world import ArmCandidate, CandidateId, InvalidCandidate, candidate_violations, default_candidates

log = logging.getLogger(__name__)


class EmptyResults(ValueError):
    pass


@dataclass(frozen=True)
class RunResult:
    candidate_id: str
    lateral_offset_m: float
    heading_offset_rad: float
    seed: int
    report: DemandReport | None
    failed: bool
    reason: str
    dispense_count: int
    log_ref: str

    @property
    def passed(self) -> bool:
        return not self.failed and self.report is not None and self.report.overall_pass


@dataclass(frozen=True)
class CandidateSummary:
    id: str
    runs: int
    pass_rate: float
    worst_abs_error_m: float
    max_speed_m_s: float
    min_clearance_m: float
    dispenses_per_pass: int
    pass_: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("pass_")
        return d


@dataclass(frozen=True)
class CandidateOverview:
    candidates: tuple[CandidateSummary, ...]

    def to_dict(self) -> dict:
        return {"candidates": [c.to_dict() for c in self.candidates]}

    @property
    def any_pass(self) -> bool:
        return any(c.pass_ for c in self.candidates)


def enumerate_candidates(catalog=None, only=None) -> list[ArmCandidate]:
    """Validated candidates from a catalog, optionally filtered by id, in
    catalog order."""
    catalog = list(default_candidates() if catalog is None else catalog)
    for cand in catalog:
        problems = candidate_violations(cand)
        if problems:
            raise InvalidCandidate(", ".join(map(str, problems)))
    if only is None:
        return catalog
    wanted = {CandidateId(c) for c in only}
    return [c for c in catalog if c.id in wanted]


def perturbed_pose(nominal, lateral_m: float, heading_rad: float):
    x, y, th = nominal
    return x - lateral_m * math.sin(th), y + lateral_m * math.cos(th), th + heading_rad


def run_single(setup: Setup, candidate: ArmCandidate, start_pose=None, config: CoSimConfig | None = None):
    """One co-simulation plus evaluation; returns ``(log, report)``."""
    config = config or setup.cosim
    plant = RobotPlant(setup.scenario, setup.vehicle, setup.sensors, candidate,
                       setup.controller.pump_rate_kg_s, start_pose=start_pose)
    ctrl = FeedingController(setup.scenario, setup.vehicle, setup.sensors, setup.controller, candidate,
                             config.comm_interval_s)
    run_log = run_cosim(plant, ctrl, setup.scenario, config)
    return run_log, evaluate_run(run_log, setup.scenario, setup.vehicle)


def run_id(cid: str, lat: float, head: float, seed: int) -> str:
    return f"{cid}_lat{lat:+.3f}_head{head:+.3f}_seed{seed}"


def _job(args) -> RunResult:
    setup, cid, lat, head, seed, out_dir = args
    cand = setup.candidate(cid)
    rid = run_id(cid, lat, head, seed)
    pose = perturbed_pose(setup.scenario.start_pose_nominal, lat, head)
    config = replace(setup.cosim, seed=seed)
    try:
        run_log, report = run_single(setup, cand, pose, config)
    except OverlappingPulses as exc:
        return RunResult(cid, lat, head, seed, None, True, f"OverlappingPulses: {exc}", 0, rid)
    ref = rid
    if out_dir is not None:
        ref = str(Path("runs") / rid)
        write_run(Path(out_dir) / ref, run_log, report)
    failed = run_log.termination is Termination.FAULT
    reason = run_log.fault if failed else ""
    return RunResult(cid, lat, head, seed, report, failed, reason, len(run_log.dispense_events), ref)


def sweep_points(spec: SweepSpec, setup: Setup):
    cands = enumerate_candidates(setup.candidates, spec.candidates)
    return list(itertools.product([c.id.value for c in cands], spec.lateral_offsets_m,
                                  spec.heading_offsets_rad, spec.seeds))


def check_sweep(spec: SweepSpec, setup: Setup) -> None:
    if not (spec.candidates and spec.lateral_offsets_m and spec.heading_offsets_rad and spec.seeds):
        raise ValidationError("sweep: every sequence must be non-empty")
    area = setup.scenario.start_area
    if any(abs(v) > area.lateral_m + 1e-12 for v in spec.lateral_offsets_m):
        raise ValidationError("sweep: lateral offset outside the start area")
    if any(abs(v) > area.heading_rad + 1e-12 for v in spec.heading_offsets_rad):
        raise ValidationError("sweep: heading offset outside the start area")
    for cid in spec.candidates:
        try:
            cand = setup.candidate(cid)
        except KeyError:
            raise ValidationError(f"sweep: candidate {CandidateId(cid).value} not in catalog") from None
        problems = validate_scenario(setup.scenario, setup.vehicle, cand)
        if problems:
            raise ValidationError(f"{cand.id.value}: " + ", ".join(map(str, problems)))


def _order(r: RunResult):
    return (CandidateId(r.candidate_id).order, r.lateral_offset_m, r.heading_offset_rad, r.seed)


def run_sweep(setup: Setup, spec: SweepSpec | None = None, workers: int = 1, out_dir=None) -> list[RunResult]:
    """Run every (candidate, lateral, heading, seed) combination.

    Results come back sorted by candidate catalog order, then lateral
    offset, heading offset and seed, whatever the worker count.
    """
    spec = spec or setup.sweep
    check_sweep(spec, setup)
    jobs = [(setup, *pt, None if out_dir is None else str(out_dir)) for pt in sweep_points(spec, setup)]
    if workers <= 1:
        results = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_job, jobs))
    return sorted(results, key=_order)


def aggregate(results) -> CandidateOverview:
    results = list(results)
    if not results:
        raise EmptyResults("no run results to aggregate")
    by_cand: dict[str, list[RunResult]] = {}
    for r in sorted(results, key=_order):
        by_cand.setdefault(r.candidate_id, []).append(r)
    out = []
    for cid, rs in by_cand.items():
        ok = [r for r in rs if r.report is not None and not r.failed]
        reps = [r.report for r in ok]
        out.append(CandidateSummary(
            id=cid,
            runs=len(rs),
            pass_rate=sum(r.passed for r in rs) / len(rs),
            worst_abs_error_m=max((p.worst_abs_error_m for p in reps), default=math.nan),
            max_speed_m_s=max((p.max_speed_m_s for p in reps), default=math.nan),
            min_clearance_m=min((p.min_clearance_m for p in reps), default=math.nan),
            dispenses_per_pass=min((r.dispense_count for r in ok), default=0),
            pass_=all(r.passed for r in rs),
        ))
    return CandidateOverview(tuple(out))
