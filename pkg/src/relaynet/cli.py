"""Batch front-end: scenario files, single runs, four-way comparisons,
random-scenario sweeps, and static SVG renderings.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path as FsPath

import numpy as np

from . import mission
from .connectivity import InfeasibleRelayError, check_feasibility
from .gridmap import FREE, GLASS, WALL, GridMap, MapParseError, WorldPoint, parse_map
from .mission import (
    DeadlockError,
    DeploymentPlan,
    GoalConnectivityStallError,
    InfeasibleScenarioError,
    Metrics,
    MissionTrace,
    Scenario,
    compute_metrics,
    execute_mission,
    normalize_mode,
    plan_deployment,
    replan,
)
from .radio import CoverageBook, InfeasibleRadioError, RadioConfigError, RadioParams

log = logging.getLogger("relaynet")

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_INFEASIBLE = 3
EXIT_RUNTIME = 4
EXIT_IO = 5

REPLAN_BUDGET = 5


class SchemaError(ValueError):
    pass


class ReplanBudgetError(RuntimeError):
    pass


_RADIO_KEYS = {f.name for f in dataclasses.fields(RadioParams)} - {"seed"}
_SCENARIO_KEYS = {"map", "bs", "robot_starts", "goals", "radio", "w_c", "speed", "seed", "knobs"}
_KNOB_KEYS = {"relay_stride", "visit_cap"}
_EXPERIMENT_KEYS = {"map_size", "obstacle_density", "goal_counts", "trials", "modes", "seed_base", "radio"}


def _point(value, what: str) -> WorldPoint:
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(v, (int, float)) for v in value)):
        raise SchemaError(f"{what} must be an [x, y] pair, got {value!r}")
    return (float(value[0]), float(value[1]))


def load_scenario(path: str | FsPath) -> Scenario:
    """Read and validate a scenario JSON file; unknown keys are rejected."""
    path = FsPath(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: scenario must be a JSON object")
    unknown = set(data) - _SCENARIO_KEYS
    if unknown:
        raise SchemaError(f"{path}: unknown keys {sorted(unknown)}")
    for key in ("map", "bs", "robot_starts", "goals"):
        if key not in data:
            raise SchemaError(f"{path}: missing required key {key!r}")

    map_path = path.parent / data["map"]
    grid = parse_map(map_path.read_text())

    radio_block = data.get("radio", {})
    if not isinstance(radio_block, dict):
        raise SchemaError(f"{path}: radio must be an object")
    unknown = set(radio_block) - _RADIO_KEYS
    if unknown:
        raise SchemaError(f"{path}: unknown radio keys {sorted(unknown)}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise SchemaError(f"{path}: seed must be a nonnegative integer")
    try:
        radio = RadioParams(seed=seed, **radio_block)
    except (TypeError, RadioConfigError) as e:
        raise SchemaError(f"{path}: bad radio parameters: {e}") from e

    knobs = data.get("knobs", {})
    unknown = set(knobs) - _KNOB_KEYS
    if unknown:
        raise SchemaError(f"{path}: unknown knob keys {sorted(unknown)}")

    sc = Scenario(
        map=grid,
        bs=_point(data["bs"], "bs"),
        robot_starts=[_point(p, "robot_starts entry") for p in data["robot_starts"]],
        goals=[_point(p, "goals entry") for p in data["goals"]],
        radio=radio,
        w_c=float(data.get("w_c", 1.0)),
        robot_speed=float(data["speed"]) if "speed" in data else None,
        relay_stride=int(knobs.get("relay_stride", 2)),
        visit_cap=int(knobs.get("visit_cap", 9)),
    )
    try:
        sc.validate(initial=True)
    except ValueError as e:
        raise SchemaError(f"{path}: {e}") from e
    return sc


def load_experiment(path: str | FsPath) -> dict:
    path = FsPath(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: invalid JSON: {e}") from e
    unknown = set(data) - _EXPERIMENT_KEYS
    if unknown:
        raise SchemaError(f"{path}: unknown keys {sorted(unknown)}")
    spec = {
        "map_size": data.get("map_size", [32, 32]),
        "obstacle_density": float(data.get("obstacle_density", 0.5)),
        "goal_counts": data.get("goal_counts", [6]),
        "trials": int(data.get("trials", 1)),
        "modes": [normalize_mode(m) for m in data.get("modes", list(mission.MODES))],
        "seed_base": int(data.get("seed_base", 0)),
        "radio": data.get("radio", {}),
    }
    if spec["trials"] < 1:
        raise SchemaError(f"{path}: trials must be >= 1")
    if not spec["goal_counts"] or any(int(g) < 1 for g in spec["goal_counts"]):
        raise SchemaError(f"{path}: goal counts must be >= 1")
    unknown = set(spec["radio"]) - _RADIO_KEYS
    if unknown:
        raise SchemaError(f"{path}: unknown radio keys {sorted(unknown)}")
    return spec


# ---------------------------------------------------------------------------
# random scenario generation (rooms and corridors)


def generate_map(width: int, height: int, density: float, rng: np.random.Generator,
                 resolution: float = 0.5) -> GridMap:
    """Axis-aligned rooms: border walls plus interior wall lines with door gaps."""
    mats = np.zeros((height, width), dtype=np.uint8)
    mats[0, :] = WALL
    mats[-1, :] = WALL
    mats[:, 0] = WALL
    mats[:, -1] = WALL
    n_lines = max(1, int(round(density * (width + height) / 12)))
    for k in range(n_lines):
        vertical = bool(rng.integers(0, 2)) if k > 0 else True
        if vertical:
            col = int(rng.integers(3, width - 3))
            door = int(rng.integers(1, height - 3))
            for row in range(1, height - 1):
                if door <= row < door + 2:
                    continue
                mats[row, col] = WALL
        else:
            row = int(rng.integers(3, height - 3))
            door = int(rng.integers(1, width - 3))
            for col in range(1, width - 1):
                if door <= col < door + 2:
                    continue
                mats[row, col] = WALL
    return GridMap(width=width, height=height, resolution=resolution, materials=mats)


def _reachable_cells(grid: GridMap, start: tuple[int, int]) -> list[tuple[int, int]]:
    seen = {start}
    queue = [start]
    while queue:
        c, r = queue.pop()
        for nc, nr in ((c + 1, r), (c - 1, r), (c, r + 1), (c, r - 1)):
            if (0 <= nc < grid.width and 0 <= nr < grid.height
                    and grid.materials[nr, nc] == FREE and (nc, nr) not in seen):
                seen.add((nc, nr))
                queue.append((nc, nr))
    return sorted(seen)


def random_scenario(seed: int, width: int = 32, height: int = 32, n_goals: int = 6,
                    density: float = 0.5, radio: RadioParams | None = None,
                    resolution: float = 0.5) -> Scenario:
    """Seeded random indoor scenario: BS in a corner region, robots beside it,
    goals rejection-sampled on free cells with minimum pairwise separation."""
    rng = np.random.default_rng(seed)
    grid = generate_map(width, height, density, rng, resolution)
    params = radio if radio is not None else RadioParams(seed=seed)

    all_free = [(c, r) for r in range(height) for c in range(width) if grid.materials[r, c] == FREE]
    if len(all_free) < 2 * n_goals + 1:
        raise InfeasibleScenarioError("generated map has too few free cells")
    corner = (2.0 * resolution, 2.0 * resolution)
    bs_cell = min(all_free, key=lambda c: (math.hypot(grid.to_world(c)[0] - corner[0],
                                                      grid.to_world(c)[1] - corner[1]), c))
    bs = grid.to_world(bs_cell)
    free = _reachable_cells(grid, bs_cell)
    if len(free) < 2 * n_goals + 1:
        raise InfeasibleScenarioError("base station room is too small")

    by_dist = sorted(free, key=lambda c: (math.hypot(grid.to_world(c)[0] - bs[0],
                                                     grid.to_world(c)[1] - bs[1]), c))
    starts = [grid.to_world(c) for c in by_dist[1:n_goals + 1]]

    min_sep = 2.0 * resolution
    min_bs_dist = 4.0 * resolution
    goals: list[WorldPoint] = []
    candidates = list(free)
    for _ in range(4000):
        if len(goals) == n_goals:
            break
        cell = candidates[int(rng.integers(0, len(candidates)))]
        p = grid.to_world(cell)
        if math.hypot(p[0] - bs[0], p[1] - bs[1]) < min_bs_dist:
            continue
        if any(abs(p[0] - s[0]) < 1e-9 and abs(p[1] - s[1]) < 1e-9 for s in starts):
            continue
        if all(math.hypot(p[0] - g[0], p[1] - g[1]) >= min_sep for g in goals):
            goals.append(p)
    if len(goals) < n_goals:
        raise InfeasibleScenarioError("could not sample enough separated goals")
    return Scenario(map=grid, bs=bs, robot_starts=starts, goals=goals, radio=params)


# ---------------------------------------------------------------------------
# rendering

_PALETTE = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
            "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]
_CELL_PX = 8


def render_svg(scenario: Scenario, plan: DeploymentPlan | None = None) -> str:
    """Deterministic SVG: map cells, coverage shading, per-robot paths,
    goals as circles, relay posts as crosses, BS as a square."""
    grid = scenario.map
    s = _CELL_PX / grid.resolution
    w_px = grid.width * _CELL_PX
    h_px = grid.height * _CELL_PX
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w_px}" height="{h_px}" '
        f'viewBox="0 0 {w_px} {h_px}">',
        f'<rect x="0" y="0" width="{w_px}" height="{h_px}" fill="#ffffff"/>',
    ]

    sources: list[WorldPoint] = [scenario.bs]
    posts: list[WorldPoint] = []
    if plan is not None:
        for segs in plan.robots:
            for seg in segs:
                if seg.purpose == "relay-move" and seg.post is not None:
                    post = grid.to_world(tuple(seg.post))
                    posts.append(post)
                    sources.append(post)
    book = CoverageBook(grid, scenario.radio)
    mask = book.combined(sources).mask
    for r in range(grid.height):
        for c in range(grid.width):
            if mask[r, c] and grid.materials[r, c] == FREE:
                out.append(f'<rect x="{c * _CELL_PX}" y="{r * _CELL_PX}" '
                           f'width="{_CELL_PX}" height="{_CELL_PX}" fill="#d6eaff"/>')
    for r in range(grid.height):
        for c in range(grid.width):
            m = grid.materials[r, c]
            if m == WALL:
                fill = "#222222"
            elif m == GLASS:
                fill = "#7fd4d4"
            else:
                continue
            out.append(f'<rect x="{c * _CELL_PX}" y="{r * _CELL_PX}" '
                       f'width="{_CELL_PX}" height="{_CELL_PX}" fill="{fill}"/>')

    if plan is not None:
        for ri, segs in enumerate(plan.robots):
            color = _PALETTE[ri % len(_PALETTE)]
            for seg in segs:
                if seg.path is None or len(seg.path.points) < 2:
                    continue
                pts = " ".join(f"{x * s:.2f},{y * s:.2f}" for x, y in seg.path.points)
                dash = ' stroke-dasharray="4,3"' if seg.purpose == "relay-move" else ""
                out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                           f'stroke-width="1.5"{dash}/>')

    for g in scenario.goals:
        out.append(f'<circle cx="{g[0] * s:.2f}" cy="{g[1] * s:.2f}" r="3.5" '
                   f'fill="none" stroke="#1f3fbf" stroke-width="1.5"/>')
    for p in posts:
        x, y = p[0] * s, p[1] * s
        out.append(f'<path d="M {x - 3.5:.2f} {y - 3.5:.2f} L {x + 3.5:.2f} {y + 3.5:.2f} '
                   f'M {x - 3.5:.2f} {y + 3.5:.2f} L {x + 3.5:.2f} {y - 3.5:.2f}" '
                   f'stroke="#d62728" stroke-width="1.8"/>')
    for st in scenario.robot_starts:
        out.append(f'<circle cx="{st[0] * s:.2f}" cy="{st[1] * s:.2f}" r="2.0" fill="#444444"/>')
    bx, by = scenario.bs[0] * s, scenario.bs[1] * s
    out.append(f'<rect x="{bx - 4:.2f}" y="{by - 4:.2f}" width="8" height="8" fill="#2ca02c"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# metrics tables


def _fmt(v: float | None) -> str:
    return "NA" if v is None else f"{v:.4f}"


def metrics_csv_rows(results: dict[str, Metrics | None]) -> list[str]:
    """Raw metrics per mode plus T/C/O columns normalized to the cross-mode max."""
    header = ("mode,d_max,d_tot,T,C_mean,C_min,O_mean,R,"
              "T_norm,C_mean_norm,C_min_norm,O_mean_norm")
    rows = [header]
    ok = {m: r for m, r in results.items() if r is not None}
    t_max = max((r.time_ticks for r in ok.values()), default=0) or 1
    c_max = max((r.c_mean for r in ok.values()), default=0.0) or 1.0
    cmin_max = max((r.c_min for r in ok.values()), default=0.0) or 1.0
    o_max = max((r.o_mean for r in ok.values()), default=0.0) or 1.0
    for m in mission.MODES:
        if m not in results:
            continue
        r = results[m]
        if r is None:
            rows.append(f"{m},NA,NA,NA,NA,NA,NA,NA,NA,NA,NA,NA")
            continue
        rows.append(
            f"{m},{_fmt(r.d_max)},{_fmt(r.d_tot)},{r.time_ticks},{_fmt(r.c_mean)},"
            f"{_fmt(r.c_min)},{_fmt(r.o_mean)},{r.robots_used},"
            f"{_fmt(r.time_ticks / t_max)},{_fmt(r.c_mean / c_max)},"
            f"{_fmt(r.c_min / cmin_max)},{_fmt(r.o_mean / o_max)}"
        )
    return rows


# ---------------------------------------------------------------------------
# commands


def _merge_traces(traces: list[MissionTrace], goal_maps: list[list[int]]) -> MissionTrace:
    """Concatenate partial traces, translating per-attempt goal indices back
    to the original goal list via goal_maps."""
    positions, parents, connected, active = [], [], [], []
    events = []
    reached: set[int] = set()
    offset = 0
    for i, tr in enumerate(traces):
        gmap = goal_maps[i]
        skip = 1 if i > 0 else 0  # boundary tick duplicates the previous state
        positions.extend(tr.positions[skip:])
        parents.extend(tr.parents[skip:])
        connected.extend(tr.connected[skip:])
        active.extend(tr.active[skip:])
        for e in tr.events:
            data = dict(e.data)
            if "goal" in data:
                data["goal"] = gmap[data["goal"]]
            events.append(mission.MissionEvent(e.tick + offset, e.kind, e.robot, data))
        reached |= {gmap[g] for g in tr.reached_goals}
        offset = len(positions) - 1
    return MissionTrace(positions=positions, parents=parents, connected=connected,
                        active=active, events=events, reached_goals=reached,
                        completed=traces[-1].completed)


def run_with_replan(scenario: Scenario, mode: str, noise_seed: int | None,
                    budget: int = REPLAN_BUDGET) -> tuple[MissionTrace, DeploymentPlan, int]:
    """Plan and execute; on a goal-connectivity stall under noise, replan from
    the stalled state (up to budget times) and continue."""
    plan = plan_deployment(scenario, mode)
    merged_plan = [list(segs) for segs in plan.robots]
    traces: list[MissionTrace] = []
    goal_maps: list[list[int]] = [list(range(len(scenario.goals)))]
    sc = scenario
    cur_plan = plan
    replans = 0
    while True:
        try:
            tr = execute_mission(cur_plan, sc, noise_seed=noise_seed)
            traces.append(tr)
            break
        except GoalConnectivityStallError as stall:
            replans += 1
            if replans > budget:
                raise ReplanBudgetError(
                    f"replan budget of {budget} exhausted under noise seed {noise_seed}"
                ) from stall
            # same seed and plan, so the prefix re-executes identically
            traces.append(execute_mission(cur_plan, sc, noise_seed=noise_seed,
                                          until_tick=stall.tick))
            gmap = goal_maps[-1]
            reached_local = stall.reached
            remaining = [g for i, g in enumerate(sc.goals) if i not in reached_local]
            remaining_ids = [gmap[i] for i in range(len(sc.goals)) if i not in reached_local]
            log.info("replan %d: %d goals remain", replans, len(remaining))
            sc = dataclasses.replace(sc, robot_starts=stall.positions, goals=remaining)
            goal_maps.append(remaining_ids)
            cur_plan = plan_deployment(sc, "DPA-FMM")
            for r in range(len(merged_plan)):
                merged_plan[r].extend(cur_plan.robots[r])
    used = sum(1 for segs in merged_plan if any(s.purpose != "wait-until" for s in segs))
    full_plan = DeploymentPlan(mode=plan.mode, robots=merged_plan, robots_used=used)
    if len(traces) == 1:
        trace = traces[0]
        trace = MissionTrace(positions=trace.positions, parents=trace.parents,
                             connected=trace.connected, active=trace.active,
                             events=trace.events,
                             reached_goals={goal_maps[0][g] for g in trace.reached_goals},
                             completed=trace.completed)
    else:
        trace = _merge_traces(traces, goal_maps)
    return trace, full_plan, replans


def _do_plan(sc: Scenario, mode: str, out_dir: str) -> int:
    plan = plan_deployment(sc, mode)
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "plan.json").write_text(plan.to_json())
    (out / "plan.svg").write_text(render_svg(sc, plan))
    log.info("wrote %s and %s", out / "plan.json", out / "plan.svg")
    return EXIT_OK


def _do_run(sc: Scenario, mode: str, noise_seed: int | None, out_dir: str,
            scenario_name: str) -> int:
    trace, plan, replans = run_with_replan(sc, mode, noise_seed)
    metrics = compute_metrics(trace, plan)
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.json").write_text(trace.to_json())
    header = "scenario,mode,noise_seed,replans," + ",".join(Metrics.COLUMNS)
    row = (f"{scenario_name},{plan.mode},"
           f"{'' if noise_seed is None else noise_seed},{replans},"
           + ",".join(_fmt(v) for v in metrics.row()))
    (out / "metrics.csv").write_text(header + "\n" + row + "\n")
    return EXIT_OK


def _do_compare(sc: Scenario, out_dir: str) -> int:
    results, plans = compare_scenario(sc)
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.csv").write_text("\n".join(metrics_csv_rows(results)) + "\n")
    for m, plan in plans.items():
        (out / f"plan_{m.lower()}.svg").write_text(render_svg(sc, plan))
    return EXIT_OK


def cmd_plan(scenario_path: str, mode: str, out_dir: str) -> int:
    return _do_plan(load_scenario(scenario_path), mode, out_dir)


def cmd_run(scenario_path: str, mode: str, noise_seed: int | None, out_dir: str) -> int:
    return _do_run(load_scenario(scenario_path), mode, noise_seed, out_dir,
                   FsPath(scenario_path).name)


def cmd_compare(scenario_path: str, out_dir: str) -> int:
    return _do_compare(load_scenario(scenario_path), out_dir)


def compare_scenario(sc: Scenario) -> tuple[dict[str, Metrics | None], dict[str, DeploymentPlan]]:
    results: dict[str, Metrics | None] = {}
    plans: dict[str, DeploymentPlan] = {}
    for m in mission.MODES:
        try:
            plan = plan_deployment(sc, m)
            trace = execute_mission(plan, sc)
            results[m] = compute_metrics(trace, plan)
            plans[m] = plan
        except (InfeasibleScenarioError, InfeasibleRelayError, InfeasibleRadioError,
                DeadlockError) as e:
            log.warning("mode %s failed: %s", m, e)
            results[m] = None
    return results, plans


def cmd_sweep(experiment_path: str, out_dir: str) -> int:
    spec = load_experiment(experiment_path)
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width, height = int(spec["map_size"][0]), int(spec["map_size"][1])
    trial_rows = ["goal_count,trial,seed,mode," + ",".join(Metrics.COLUMNS)]
    agg: dict[tuple[int, str], list[Metrics]] = {}
    for gc in spec["goal_counts"]:
        gc = int(gc)
        for trial in range(spec["trials"]):
            base = spec["seed_base"] * 1_000_000 + gc * 1_000 + trial * 37
            sc = None
            for attempt in range(20):
                seed = base + attempt
                try:
                    radio = RadioParams(seed=seed, **spec["radio"])
                    cand = random_scenario(seed, width, height, gc,
                                           spec["obstacle_density"], radio)
                    report = check_feasibility(cand.map, cand.bs, cand.goals,
                                               len(cand.robot_starts), cand.radio)
                    if not report.feasible:
                        continue
                    plan_deployment(cand, "DPA-FMM")  # probe plannability
                    sc = cand
                    break
                except (InfeasibleScenarioError, InfeasibleRelayError, InfeasibleRadioError) as e:
                    log.info("resampling trial (seed %d): %s", seed, e)
            if sc is None:
                log.warning("skipping goal_count=%d trial=%d: no feasible scenario in 20 tries",
                            gc, trial)
                continue
            results, _ = compare_scenario(sc)
            for m in spec["modes"]:
                r = results.get(m)
                if r is None:
                    trial_rows.append(f"{gc},{trial},{seed},{m}," + ",".join(["NA"] * len(Metrics.COLUMNS)))
                    continue
                trial_rows.append(f"{gc},{trial},{seed},{m},"
                                  + ",".join(_fmt(v) for v in r.row()))
                agg.setdefault((gc, m), []).append(r)
    (out / "trials.csv").write_text("\n".join(trial_rows) + "\n")

    agg_rows = ["goal_count,mode,trials," + ",".join(Metrics.COLUMNS)]
    for (gc, m) in sorted(agg.keys(), key=lambda k: (k[0], mission.MODES.index(k[1]))):
        rs = agg[(gc, m)]
        means = [sum(r.row()[i] for r in rs) / len(rs) for i in range(len(Metrics.COLUMNS))]
        agg_rows.append(f"{gc},{m},{len(rs)}," + ",".join(_fmt(v) for v in means))
    (out / "aggregate.csv").write_text("\n".join(agg_rows) + "\n")
    return EXIT_OK


def cmd_render(scenario_path: str, out_path: str) -> int:
    sc = load_scenario(scenario_path)
    FsPath(out_path).write_text(render_svg(sc, None))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def _apply_overrides(sc: Scenario, args) -> Scenario:
    radio = sc.radio
    if getattr(args, "seed", None) is not None:
        radio = radio.with_(seed=args.seed)
    if getattr(args, "margin_k", None) is not None:
        radio = radio.with_(margin_k=args.margin_k)
    updates: dict = {"radio": radio}
    if getattr(args, "w_c", None) is not None:
        updates["w_c"] = args.w_c
    return dataclasses.replace(sc, **updates)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="relaynet",
                                 description="communication-aware robot team deployment planner")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, mode=True):
        p.add_argument("scenario")
        if mode:
            p.add_argument("--mode", default="dpa", help="fmm | ca-fmm | dp-fmm | dpa-fmm")
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--w-c", dest="w_c", type=float, default=None)
        p.add_argument("--margin-k", dest="margin_k", type=float, default=None)

    common(sub.add_parser("plan", help="plan a deployment and render it"))
    runp = sub.add_parser("run", help="plan, execute, and write trace + metrics")
    common(runp)
    runp.add_argument("--noise-seed", dest="noise_seed", type=int, default=None)
    common(sub.add_parser("compare", help="run all four pipelines and tabulate"), mode=False)
    sw = sub.add_parser("sweep", help="random-scenario experiment sweep")
    sw.add_argument("experiment")
    sw.add_argument("--out", required=True)
    rd = sub.add_parser("render", help="render a scenario to SVG")
    rd.add_argument("scenario")
    rd.add_argument("--out", required=True)
    return ap


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("RELAYNET_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "plan":
            sc = _apply_overrides(load_scenario(args.scenario), args)
            return _do_plan(sc, args.mode, args.out)
        if args.command == "run":
            sc = _apply_overrides(load_scenario(args.scenario), args)
            return _do_run(sc, args.mode, args.noise_seed, args.out, FsPath(args.scenario).name)
        if args.command == "compare":
            sc = _apply_overrides(load_scenario(args.scenario), args)
            return _do_compare(sc, args.out)
        if args.command == "sweep":
            return cmd_sweep(args.experiment, args.out)
        if args.command == "render":
            return cmd_render(args.scenario, args.out)
        raise SchemaError(f"unknown command {args.command!r}")
    except (SchemaError, MapParseError, ValueError) as e:
        log.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except (InfeasibleScenarioError, InfeasibleRadioError, InfeasibleRelayError) as e:
        print(f"infeasible: {e}", file=sys.stderr)
        if isinstance(e, InfeasibleScenarioError) and e.report is not None:
            print(f"  ratio {e.report.ratio:.3f} vs {e.report.d_cov:.2f} m coverage distance",
                  file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DeadlockError, GoalConnectivityStallError, ReplanBudgetError) as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
