"""Fast-marching eikonal solver on occupancy grids, gradient-descent path
extraction, and the coverage-aware single-robot planner built on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from heapq import heappop, heappush
from typing import Callable, Sequence

import numpy as np

from .gridmap import FREE, CellIndex, GridMap, WorldPoint
from .radio import CoverageBook, RadioConfigError, RadioParams, RssField, combine_coverage, coverage_field, empty_field


class UnreachableError(ValueError):
    pass


class PathExtractionError(RuntimeError):
    def __init__(self, message: str, last_point: WorldPoint):
        super().__init__(f"{message} (last point {last_point})")
        self.last_point = last_point


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Wavefront speed per cell: 0 on blocked cells, >= 1 on traversable ones."""

    grid: GridMap
    F: np.ndarray  # shape (height, width), float64

    def __post_init__(self):
        self.F.flags.writeable = False


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Cost-to-go D from a source cell; +inf marks unreachable cells."""

    grid: GridMap
    D: np.ndarray
    source: CellIndex
    velocity: VelocityField

    def __post_init__(self):
        self.D.flags.writeable = False

    def at(self, c: CellIndex) -> float:
        return float(self.D[c[1], c[0]])

    def to_csv(self) -> str:
        return "\n".join(",".join(f"{v:.6f}" for v in row) for row in self.D) + "\n"


@dataclass
class Path:
    """Polyline from start to goal in world coordinates."""

    points: list[WorldPoint]
    length: float
    coverage_fraction: float = 0.0

    def to_text(self) -> str:
        return "\n".join(f"{x:.4f} {y:.4f}" for x, y in self.points) + "\n"


def _polyline_length(points: Sequence[WorldPoint]) -> float:
    return sum(
        math.hypot(points[i + 1][0] - points[i][0], points[i + 1][1] - points[i][1])
        for i in range(len(points) - 1)
    )


def base_velocity(grid: GridMap) -> VelocityField:
    """Unit speed on free cells, zero on walls and glass (robots cannot pass glass)."""
    F = (grid.materials == FREE).astype(np.float64)
    return VelocityField(grid=grid, F=F)


def comm_velocity(grid: GridMap, cov: RssField, other_robots: Sequence[CellIndex],
                  w_c: float = 1.0) -> VelocityField:
    """Velocity boosted inside the coverage area.

    The boost is w_c * clamp((rss - gamma) / (rss_ref - gamma), 0, 1): zero
    outside coverage, w_c at the strongest plausible signal. Cells occupied
    by other robots are blocked outright.
    """
    if cov.grid is not grid and cov.grid != grid:
        raise ValueError("coverage field does not match the map")
    if w_c < 0:
        raise ValueError("w_c must be >= 0")
    if cov.rss_ref <= cov.gamma:
        raise RadioConfigError(
            f"degenerate coverage normalization: rss_ref {cov.rss_ref} <= gamma {cov.gamma}"
        )
    F = (grid.materials == FREE).astype(np.float64)
    boost = w_c * np.clip((cov.rss - cov.gamma) / (cov.rss_ref - cov.gamma), 0.0, 1.0)
    Fc = F + np.where(F > 0, boost, 0.0)
    for c in other_robots:
        if grid.cell_in_bounds(c):
            Fc[c[1], c[0]] = 0.0
    return VelocityField(grid=grid, F=Fc)


def solve_eikonal(velocity: VelocityField, source: CellIndex,
                  on_accept: Callable[[int, int, float], None] | None = None) -> DistanceField:
    """First-order upwind fast marching over the 4-neighborhood.

    Trial values use the two-axis-neighbor quadratic update from accepted
    cells only, so values are finalized in non-decreasing order (the
    on_accept hook observes that order). Cells with zero velocity keep +inf.
    """
    grid = velocity.grid
    W, H = grid.width, grid.height
    h = grid.resolution
    sc, sr = source
    if not grid.cell_in_bounds(source):
        raise UnreachableError(f"source cell {source} outside grid")
    if velocity.F[sr, sc] <= 0.0:
        raise UnreachableError(f"source cell {source} has zero velocity")

    F = velocity.F.ravel().tolist()
    INF = math.inf
    D = [INF] * (W * H)
    state = bytearray(W * H)  # 0 far, 1 narrow, 2 accepted
    src = sr * W + sc
    D[src] = 0.0
    heap: list[tuple[float, int]] = [(0.0, src)]
    sqrt = math.sqrt

    # exact-distance seeding of a small ball around the source kills the
    # rarefaction-fan error of the first-order scheme at the point source;
    # a cell is seeded only if it is 4-connected to the source inside the
    # ball and the straight segment to it stays on F > 0 cells, the seed
    # being the line integral of 1/F along that segment
    ball: set[tuple[int, int]] = {(sc, sr)}
    frontier = [(sc, sr)]
    while frontier:
        bc, br = frontier.pop()
        for nc, nr in ((bc + 1, br), (bc - 1, br), (bc, br + 1), (bc, br - 1)):
            if (abs(nc - sc) <= 2 and abs(nr - sr) <= 2 and 0 <= nc < W and 0 <= nr < H
                    and F[nr * W + nc] > 0.0 and (nc, nr) not in ball):
                ball.add((nc, nr))
                frontier.append((nc, nr))
    for dr in range(-2, 3):
        for dc in range(-2, 3):
            if dr == 0 and dc == 0:
                continue
            nc, nr = sc + dc, sr + dr
            if (nc, nr) not in ball:
                continue
            nidx = nr * W + nc
            dist = h * sqrt(dc * dc + dr * dr)
            k = max(2, math.ceil(dist / (h * 0.5)))
            seed = 0.0
            clear = True
            for i in range(k):
                t = (i + 0.5) / k
                mc_ = sc + 0.5 + t * dc
                mr_ = sr + 0.5 + t * dr
                fmid = F[int(mr_) * W + int(mc_)]
                if fmid <= 0.0:
                    clear = False
                    break
                seed += (dist / k) / fmid
            if clear and seed < D[nidx]:
                D[nidx] = seed
                state[nidx] = 1
                heappush(heap, (seed, nidx))

    while heap:
        d, idx = heappop(heap)
        if state[idx] == 2 or d > D[idx]:
            continue
        state[idx] = 2
        if on_accept is not None:
            on_accept(idx % W, idx // W, d)
        r, c = divmod(idx, W)
        if c > 0:
            nbrs = [idx - 1]
        else:
            nbrs = []
        if c < W - 1:
            nbrs.append(idx + 1)
        if r > 0:
            nbrs.append(idx - W)
        if r < H - 1:
            nbrs.append(idx + W)
        for nidx in nbrs:
            if state[nidx] == 2:
                continue
            f = F[nidx]
            if f <= 0.0:
                continue
            nc = nidx % W
            # accepted-only axis minima around the trial cell
            ux = INF
            if nc > 0 and state[nidx - 1] == 2:
                ux = D[nidx - 1]
            if nc < W - 1 and state[nidx + 1] == 2 and D[nidx + 1] < ux:
                ux = D[nidx + 1]
            uy = INF
            if nidx >= W and state[nidx - W] == 2:
                uy = D[nidx - W]
            if nidx < W * H - W and state[nidx + W] == 2 and D[nidx + W] < uy:
                uy = D[nidx + W]
            hf = h / f
            if ux > uy:
                ux, uy = uy, ux
            if uy - ux < hf and uy < INF:
                disc = 2.0 * hf * hf - (ux - uy) * (ux - uy)
                nd = 0.5 * (ux + uy + sqrt(disc))
            else:
                nd = ux + hf
            if nd < D[nidx]:
                D[nidx] = nd
                state[nidx] = 1
                heappush(heap, (nd, nidx))

    arr = np.array(D, dtype=np.float64).reshape(H, W)
    return DistanceField(grid=grid, D=arr, source=(sc, sr), velocity=velocity)


_RING = [
    (1.0, 0.0), (0.70710678118654752, 0.70710678118654752),
    (0.0, 1.0), (-0.70710678118654752, 0.70710678118654752),
    (-1.0, 0.0), (-0.70710678118654752, -0.70710678118654752),
    (0.0, -1.0), (0.70710678118654752, -0.70710678118654752),
]


def _make_interp(dfield: DistanceField):
    """Bilinear interpolation of D on cell centers; +inf corners are dropped
    with weight renormalization so values next to obstacles stay usable."""
    D = dfield.D
    W, H = dfield.grid.width, dfield.grid.height
    res = dfield.grid.resolution

    def interp(x: float, y: float) -> float:
        gx = min(max(x / res - 0.5, 0.0), W - 1.0)
        gy = min(max(y / res - 0.5, 0.0), H - 1.0)
        c0 = min(int(gx), W - 1)
        r0 = min(int(gy), H - 1)
        c1 = min(c0 + 1, W - 1)
        r1 = min(r0 + 1, H - 1)
        fx = gx - c0
        fy = gy - r0
        total = 0.0
        wsum = 0.0
        for v, w in (
            (D[r0, c0], (1.0 - fx) * (1.0 - fy)),
            (D[r0, c1], fx * (1.0 - fy)),
            (D[r1, c0], (1.0 - fx) * fy),
            (D[r1, c1], fx * fy),
        ):
            if w > 0.0 and v < math.inf:
                total += w * v
                wsum += w
        if wsum == 0.0:
            return math.inf
        return total / wsum

    return interp


def _metric_cost(grid: GridMap, F: np.ndarray, a: WorldPoint, b: WorldPoint) -> float:
    """Line integral of 1/F along a-b, sampled at quarter-cell steps."""
    d = math.hypot(b[0] - a[0], b[1] - a[1])
    if d == 0.0:
        return 0.0
    n = max(1, math.ceil(d / (grid.resolution * 0.25)))
    res = grid.resolution
    total = 0.0
    for i in range(n):
        t = (i + 0.5) / n
        x = a[0] + t * (b[0] - a[0])
        y = a[1] + t * (b[1] - a[1])
        c = min(int(x / res), grid.width - 1)
        r = min(int(y / res), grid.height - 1)
        f = F[r, c]
        if f <= 0.0:
            return math.inf
        total += (d / n) / f
    return total


def _shortcut(grid: GridMap, F: np.ndarray, pts: list[WorldPoint]) -> list[WorldPoint]:
    """Metric-aware string pulling: replace a stretch of the descent polyline
    by its chord only when the chord is no more expensive under the same
    velocity metric, so coverage detours survive while zigzag does not. The
    result is resampled to keep consecutive points within half a cell."""
    if len(pts) < 3:
        return pts
    step = grid.resolution * 0.5
    res = grid.resolution

    def resample(a: WorldPoint, b: WorldPoint) -> list[WorldPoint] | None:
        d = math.hypot(b[0] - a[0], b[1] - a[1])
        k = max(1, math.ceil(d / step))
        seg = []
        for s in range(1, k + 1):
            t = s / k
            q = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
            c = min(int(q[0] / res), grid.width - 1)
            r = min(int(q[1] / res), grid.height - 1)
            if F[r, c] <= 0.0:
                return None
            seg.append(q)
        return seg

    prefix = [0.0]
    for a, b in zip(pts, pts[1:]):
        seg_cost = _metric_cost(grid, F, a, b)
        if not math.isfinite(seg_cost):
            seg_cost = 1e9  # corner-clipping raw segment; any finite chord beats it
        prefix.append(prefix[-1] + seg_cost)
    out: list[WorldPoint] = [pts[0]]
    i = 0
    n = len(pts)
    while i < n - 1:
        j = n - 1
        chosen = None
        while j > i + 1:
            direct = _metric_cost(grid, F, pts[i], pts[j])
            if direct <= prefix[j] - prefix[i] + 1e-9:
                chosen = resample(pts[i], pts[j])
                if chosen is not None:
                    break
            j -= 1
        if chosen is None:
            j = i + 1
            chosen = [pts[j]]
        out.extend(chosen)
        i = j
    return out


def extract_path(dfield: DistanceField, start: CellIndex) -> Path:
    """Steepest-descent walk on interpolated D from start down to the source.

    Step size is resolution/2; candidate moves are the finite-difference
    gradient direction plus an 8-direction ring, keeping the best strictly
    improving move. Stagnation for 8 consecutive steps is an extraction error.
    The raw walk is then tightened by metric-aware string pulling.
    """
    grid = dfield.grid
    res = grid.resolution
    step = res * 0.5
    if not grid.cell_in_bounds(start):
        raise UnreachableError(f"start cell {start} outside grid")
    if not math.isfinite(dfield.at(start)):
        raise UnreachableError(f"start cell {start} unreachable from source {dfield.source}")

    interp = _make_interp(dfield)
    F = dfield.velocity.F
    src_center = grid.to_world(dfield.source)
    p = grid.to_world(start)
    points: list[WorldPoint] = [p]
    cur = interp(*p)
    plateau = 0
    max_steps = 8 * (grid.width + grid.height)

    def passable(q: WorldPoint) -> bool:
        if not grid.in_bounds(q):
            return False
        c = grid.to_cell(q)
        return F[c[1], c[0]] > 0.0

    for _ in range(max_steps):
        if math.hypot(p[0] - src_center[0], p[1] - src_center[1]) <= res:
            break
        candidates: list[WorldPoint] = []
        eps = step * 0.5
        dpx = interp(p[0] + eps, p[1]) - interp(p[0] - eps, p[1])
        dpy = interp(p[0], p[1] + eps) - interp(p[0], p[1] - eps)
        if math.isfinite(dpx) and math.isfinite(dpy):
            norm = math.hypot(dpx, dpy)
            if norm > 0.0:
                candidates.append((p[0] - step * dpx / norm, p[1] - step * dpy / norm))
        for ux, uy in _RING:
            candidates.append((p[0] + step * ux, p[1] + step * uy))
        best_q = None
        best_v = math.inf
        for q in candidates:
            if not passable(q):
                continue
            v = interp(*q)
            if v < best_v:
                best_v = v
                best_q = q
        if best_q is None:
            raise PathExtractionError("descent blocked on all sides", p)
        if best_v < cur - 1e-12:
            plateau = 0
        else:
            plateau += 1
            if plateau >= 8:
                raise PathExtractionError("descent stagnated on a plateau", p)
        p = best_q
        cur = best_v
        points.append(p)
    else:
        raise PathExtractionError("descent exceeded the step budget", p)

    if points[-1] != src_center:
        points.append(src_center)
    points = _shortcut(grid, F, points)
    return Path(points=points, length=_polyline_length(points))


def coverage_fraction(grid: GridMap, points: Sequence[WorldPoint], mask: np.ndarray) -> float:
    """Fraction of the polyline arc length whose midpoint cell is covered."""
    if len(points) < 2:
        c = grid.to_cell(points[0])
        return 1.0 if bool(mask[c[1], c[0]]) else 0.0
    total = 0.0
    covered = 0.0
    for i in range(len(points) - 1):
        ax, ay = points[i]
        bx, by = points[i + 1]
        seg = math.hypot(bx - ax, by - ay)
        if seg == 0.0:
            continue
        total += seg
        mid = grid.to_cell(((ax + bx) * 0.5, (ay + by) * 0.5))
        if mask[mid[1], mid[0]]:
            covered += seg
    if total == 0.0:
        c = grid.to_cell(points[0])
        return 1.0 if bool(mask[c[1], c[0]]) else 0.0
    return covered / total


def ca_fmm_path(grid: GridMap, start: CellIndex, goal: CellIndex,
                relay_sources: Sequence[WorldPoint], params: RadioParams,
                w_c: float = 1.0, blocked: Sequence[CellIndex] = (),
                book: CoverageBook | None = None) -> Path:
    """Plan one start->goal path biased into the coverage of relay_sources.

    The eikonal front expands from the goal over the boosted velocity, so the
    descent from start flows toward the goal. With no relay sources this is
    exactly the plain shortest-path solve. blocked lists cells held by other
    robots, which are excluded from the velocity field.
    """
    if not grid.cell_in_bounds(start) or not grid.cell_in_bounds(goal):
        raise UnreachableError(f"start {start} or goal {goal} outside grid")
    if relay_sources:
        if book is not None:
            cov = book.combined(list(relay_sources))
        else:
            cov = combine_coverage([coverage_field(grid, s, params) for s in relay_sources])
    else:
        cov = empty_field(grid, params)
    blocked_eff = [c for c in blocked if tuple(c) not in (tuple(start), tuple(goal))]
    vel = comm_velocity(grid, cov, blocked_eff, w_c)
    if vel.F[goal[1], goal[0]] <= 0.0:
        raise UnreachableError(f"goal cell {goal} is blocked")
    if vel.F[start[1], start[0]] <= 0.0:
        raise UnreachableError(f"start cell {start} is blocked")
    mask = cov.mask
    if start == goal:
        center = grid.to_world(start)
        return Path(points=[center], length=0.0,
                    coverage_fraction=coverage_fraction(grid, [center], mask))
    dfield = solve_eikonal(vel, goal)
    if not math.isfinite(dfield.at(start)):
        raise UnreachableError(f"goal {goal} unreachable from start {start}")
    path = extract_path(dfield, start)
    path.coverage_fraction = coverage_fraction(grid, path.points, mask)
    return path
