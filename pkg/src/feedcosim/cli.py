"""Command line: ``feedcosim simulate | dse | report``.

Exit codes: 0 demands met, 1 demands not met, 2 file or parse error,
3 validation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import ParseError, ValidationError, load_setup
from .controller import OverlappingPulses
from .dse import aggregate, perturbed_pose, run_single, run_sweep
from .kernel import ContractMismatch
from .outputs import dumps_json, write_run
from .plant import ScenarioInvalid, validate_scenario

EXIT_OK, EXIT_DEMANDS, EXIT_IO, EXIT_INVALID = 0, 1, 2, 3

OVERVIEW_COLUMNS = ["id", "pass_rate", "worst_abs_error_m", "max_speed_m_s", "min_clearance_m",
                    "dispenses_per_pass", "pass"]

log = logging.getLogger("feedcosim")


def _fail(code: int, msg: str) -> int:
    print(f"feedcosim: {msg}", file=sys.stderr)
    return code


def cmd_simulate(args) -> int:
    setup = load_setup(args.scenario)
    try:
        cand = setup.candidate(args.candidate)
    except (KeyError, ValueError):
        raise ValidationError(f"candidate {args.candidate!r} is not in the catalog") from None
    cosim = setup.cosim
    if args.dt is not None:
        cosim = replace(cosim, ct_substep_s=args.dt)
    if args.seed is not None:
        cosim = replace(cosim, seed=args.seed)
    problems = validate_scenario(setup.scenario, setup.vehicle, cand)
    if problems:
        raise ScenarioInvalid(problems)
    run_log, report = run_single(setup, cand, perturbed_pose(setup.scenario.start_pose_nominal, 0.0, 0.0), cosim)
    write_run(args.out, run_log, report, setup.scenario, setup.vehicle, plot=args.plot)
    print(f"{cand.id.value}: {run_log.termination.value}, {len(run_log.dispense_events)} dispenses, "
          f"max speed {report.max_speed_m_s:.3f} m/s, worst error {report.worst_abs_error_m * 1000:.1f} mm, "
          f"min clearance {report.min_clearance_m:.3f} m -> {'PASS' if report.overall_pass else 'FAIL'}")
    return EXIT_OK if report.overall_pass else EXIT_DEMANDS


def write_overview(out: Path, overview) -> None:
    (out / "overview.json").write_text(dumps_json(overview.to_dict()))
    with open(out / "overview.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OVERVIEW_COLUMNS)
        for c in overview.to_dict()["candidates"]:
            w.writerow([repr(v) if isinstance(v, float) else str(v).lower() if isinstance(v, bool) else v
                        for v in (c[k] for k in OVERVIEW_COLUMNS)])


def cmd_dse(args) -> int:
    setup = load_setup(args.scenario)
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("COSIM_WORKERS", "1"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_sweep(setup, workers=workers, out_dir=out)
    overview = aggregate(results)
    write_overview(out, overview)
    print(format_overview(overview.to_dict()))
    return EXIT_OK if overview.any_pass else EXIT_DEMANDS


def format_overview(doc: dict) -> str:
    rows = [["candidate", "pass rate", "worst err [mm]", "max v [m/s]", "min clear [m]", "dispenses", "demands"]]
    for c in doc["candidates"]:
        def f(v, fmt):
            return "-" if v is None else format(v, fmt)

        rows.append([
            c["id"],
            f(c["pass_rate"], ".3f"),
            f(None if c["worst_abs_error_m"] is None else c["worst_abs_error_m"] * 1000, ".1f"),
            f(c["max_speed_m_s"], ".3f"),
            f(c["min_clearance_m"], ".3f"),
            str(c["dispenses_per_pass"]),
            "PASS" if c["pass"] else "FAIL",
        ])
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def cmd_report(args) -> int:
    path = Path(args.in_dir) / "overview.json"
    try:
        doc = json.loads(path.read_text())
    except OSError:
        return _fail(EXIT_IO, f"no sweep overview at {path}")
    except json.JSONDecodeError as exc:
        return _fail(EXIT_IO, f"{path}: invalid JSON ({exc})")
    print(format_overview(doc))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="feedcosim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one co-simulation and evaluate it")
    s.add_argument("--scenario", required=True)
    s.add_argument("--candidate", required=True)
    s.add_argument("--dt", type=float, help="CT integration substep [s]")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--plot", action="store_true", help="also write trajectory.svg")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("dse", help="run the design-space sweep")
    d.add_argument("--scenario", required=True)
    d.add_argument("--workers", type=int, help="parallel runs (default: $COSIM_WORKERS or 1)")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_dse)

    r = sub.add_parser("report", help="print a stored sweep overview")
    r.add_argument("--in", dest="in_dir", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ParseError as exc:
        return _fail(EXIT_IO, str(exc))
    except (ValidationError, ScenarioInvalid, ContractMismatch, OverlappingPulses, ValueError) as exc:
        return _fail(EXIT_INVALID, str(exc))


if __name__ == "__main__":
    sys.exit(main())
