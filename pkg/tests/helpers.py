"""Independent oracles used by the test suite: a grid-graph Dijkstra, a
permutation assignment solver, a BFS hop counter, and a recursive tour
enumerator. These deliberately share no code with the package internals."""

import heapq
import itertools
import math

from relaynet.eikonal import VelocityField
from relaynet.gridmap import GridMap


def dijkstra8(velocity: VelocityField, source: tuple[int, int]) -> dict[tuple[int, int], float]:
    """8-neighbor Dijkstra with edge cost step * 2 / (F(u) + F(v)).

    Diagonal moves require both adjacent orthogonal cells to be free (strict
    no-corner-cutting), which keeps both reachability and squeeze-through
    costs consistent with a 4-neighborhood front.
    """
    grid = velocity.grid
    F = velocity.F
    h = grid.resolution
    W, H = grid.width, grid.height
    sc, sr = source
    dist: dict[tuple[int, int], float] = {(sc, sr): 0.0}
    heap = [(0.0, (sc, sr))]
    diag = h * math.sqrt(2.0)
    while heap:
        d, (c, r) = heapq.heappop(heap)
        if d > dist.get((c, r), math.inf):
            continue
        fu = F[r, c]
        for dc, dr in ((1, 0), (-1, 0), (0, 1), (0, -1),
                       (1, 1), (1, -1), (-1, 1), (-1, -1)):
            nc, nr = c + dc, r + dr
            if not (0 <= nc < W and 0 <= nr < H):
                continue
            fv = F[nr, nc]
            if fv <= 0.0:
                continue
            if dc != 0 and dr != 0:
                if F[r, nc] <= 0.0 or F[nr, c] <= 0.0:
                    continue
                step = diag
            else:
                step = h
            nd = d + step * 2.0 / (fu + fv)
            if nd < dist.get((nc, nr), math.inf):
                dist[(nc, nr)] = nd
                heapq.heappush(heap, (nd, (nc, nr)))
    return dist


def brute_force_assignment(costs: list[list[float]]) -> tuple[list[int], float]:
    """Minimal-cost assignment by enumerating every bijection; among ties the
    lexicographically smallest assignment vector wins. Square matrices only."""
    n = len(costs)
    best_perm = None
    best_cost = math.inf
    for perm in itertools.permutations(range(n)):
        total = sum(costs[i][perm[i]] for i in range(n))
        if total < best_cost - 1e-9:
            best_cost = total
            best_perm = perm
        elif abs(total - best_cost) <= 1e-9 and perm < best_perm:
            best_perm = perm
    return list(best_perm), best_cost


def bfs_hops(n: int, edges: set[tuple[int, int]], root: int = 0) -> list[int | None]:
    """Shortest hop counts from root by plain breadth-first search."""
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    depth: list[int | None] = [None] * n
    depth[root] = 0
    frontier = [root]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if depth[v] is None:
                    depth[v] = depth[u] + 1
                    nxt.append(v)
        frontier = nxt
    return depth


def enumerate_tours(cost, n_waypoints: int):
    """Recursive enumeration of waypoint orders. cost is an (n+2)x(n+2)
    matrix over [start, w1..wn, dest]. Yields (order, total) pairs."""
    dest = n_waypoints + 1

    def rec(prefix, left, total):
        if not left:
            yield prefix, round(total + cost[prefix[-1] + 1 if prefix else 0][dest], 9)
            return
        for w in left:
            prev = prefix[-1] + 1 if prefix else 0
            yield from rec(prefix + [w], [x for x in left if x != w],
                           total + cost[prev][w + 1])

    if n_waypoints == 0:
        yield [], round(cost[0][dest], 9)
        return
    yield from rec([], list(range(n_waypoints)), 0.0)


def best_tour(cost, n_waypoints: int) -> tuple[list[int], float]:
    best_order = None
    best_total = math.inf
    for order, total in enumerate_tours(cost, n_waypoints):
        if total < best_total or (total == best_total and tuple(order) < tuple(best_order)):
            best_order = order
            best_total = total
    return best_order, best_total
