"""Run artefacts: CSV traces, JSON reports and an SVG plan view."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .world import VehicleParams, WorldScenario

TRACE_HEADER = ["t_s", "x_m", "y_m", "heading_rad", "speed_m_s"]
EVENTS_HEADER = ["t_s", "x_m", "y_m", "side", "amount_kg", "row", "candidate"]


def _finite_or_none(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite_or_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_or_none(v) for v in obj]
    return obj


def dumps_json(obj) -> str:
    """Stable JSON text; non-finite floats become null."""
    return json.dumps(_finite_or_none(obj), indent=2, allow_nan=False) + "\n"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_trace_csv(path, pose_trace) -> None:
    _write_csv(Path(path), TRACE_HEADER, ([repr(v) for v in p] for p in pose_trace))


def write_events_csv(path, events) -> None:
    _write_csv(
        Path(path),
        EVENTS_HEADER,
        ([repr(e.t), repr(e.position[0]), repr(e.position[1]), e.side.value, repr(e.amount_kg),
          e.row_index, e.candidate_id] for e in events),
    )


def write_report_json(path, report) -> None:
    Path(path).write_text(dumps_json(report.to_dict()))


def write_run(out_dir, log, report, scenario=None, vehicle=None, plot=False) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "events.csv", out / "report.json", out / "trace.csv"]
    write_events_csv(paths[0], log.dispense_events)
    write_report_json(paths[1], report)
    write_trace_csv(paths[2], log.pose_trace)
    if plot:
        paths.append(out / "trajectory.svg")
        paths[-1].write_text(trajectory_svg(scenario, log, vehicle))
    return paths


def trajectory_svg(scenario: WorldScenario, log, vehicle: VehicleParams | None = None,
                   px_per_m: float = 100.0) -> str:
    """Plan view: cages, walls, targets, driven path and dispense markers."""
    pts = [(p[1], p[2]) for p in log.pose_trace]
    geom = []
    for row in scenario.rows:
        hw = scenario.corridor_half_width_m
        depth = row.feed_line_offset_m * 2
        for side in row.side.sides:
            for i in range(row.cage_count):
                s0 = i * row.cage_length_m
                lat0 = side.sign * hw
                lat1 = side.sign * (hw + depth)
                geom.append([row.to_world(s0, lat0), row.to_world(s0 + row.cage_length_m, lat0),
                             row.to_world(s0 + row.cage_length_m, lat1), row.to_world(s0, lat1)])
    xs = [p[0] for p in pts] + [c[0] for g in geom for c in g]
    ys = [p[1] for p in pts] + [c[1] for g in geom for c in g]
    for a, b in scenario.wall_segments():
        xs += [a[0], b[0]]
        ys += [a[1], b[1]]
    margin = 0.5
    x0, x1 = min(xs) - margin, max(xs) + margin
    y0, y1 = min(ys) - margin, max(ys) + margin
    W, H = (x1 - x0) * px_per_m, (y1 - y0) * px_per_m

    def P(x, y):
        return f"{(x - x0) * px_per_m:.1f},{(y1 - y) * px_per_m:.1f}"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" '
        f'viewBox="0 0 {W:.0f} {H:.0f}">',
        f'<rect width="{W:.0f}" height="{H:.0f}" fill="white"/>',
    ]
    for g in geom:
        out.append(f'<polygon points="{" ".join(P(*c) for c in g)}" fill="#e8dcc0" stroke="#8a7a50"/>')
    for a, b in scenario.wall_segments():
        out.append(f'<line x1="{P(*a).split(",")[0]}" y1="{P(*a).split(",")[1]}" '
                   f'x2="{P(*b).split(",")[0]}" y2="{P(*b).split(",")[1]}" stroke="black" stroke-width="2"/>')
    for tg in scenario.targets():
        row = scenario.rows[tg.row_index]
        hl, hw = row.area_length_m / 2, row.area_width_m / 2
        corners = [row.to_world(tg.s + ds, tg.lateral + dl) for ds, dl in ((-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw))]
        out.append(f'<polygon points="{" ".join(P(*c) for c in corners)}" fill="none" stroke="#2a7" '
                   f'stroke-dasharray="4 2"/>')
        cx, cy = P(tg.x, tg.y).split(",")
        out.append(f'<circle cx="{cx}" cy="{cy}" r="2" fill="#2a7"/>')
    if pts:
        out.append(f'<polyline points="{" ".join(P(*p) for p in pts)}" fill="none" stroke="#36c" '
                   f'stroke-width="1.5"/>')
    for e in log.dispense_events:
        cx, cy = P(*e.position).split(",")
        out.append(f'<circle cx="{cx}" cy="{cy}" r="4" fill="#c33" fill-opacity="0.7"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
