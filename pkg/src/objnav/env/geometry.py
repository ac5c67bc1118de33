"""Distances on the house grid and the exact motion lattice.

The agent only ever moves by 0.25 m along one of twelve 30-degree headings,
so every reachable position is ``origin + 0.25 * sum(n_k * u_k)``.  The unit
vectors span a rank-4 integer lattice (basis 1, w, w^2, w^3 with
w = exp(i*pi/6) and w^4 = w^2 - 1); positions are stored as four integers and
converted to floats by one fixed formula, so the simulator and the planner
always agree bit for bit.
"""
from __future__ import annotations

import heapq
import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

from ..errors import ContractError, Unreachable
from .house import CELL, House

HALF_SQRT3 = math.sqrt(3.0) / 2.0
HEADINGS = 12

_BASE = [(1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1), (-1, 0, 1, 0), (0, -1, 0, 1)]
LATTICE_STEP = tuple(_BASE + [tuple(-v for v in b) for b in _BASE])

# exact sin/cos of k * 30 degrees
SIN_TABLE = (0.0, 0.5, HALF_SQRT3, 1.0, HALF_SQRT3, 0.5, 0.0, -0.5, -HALF_SQRT3, -1.0, -HALF_SQRT3, -0.5)
COS_TABLE = tuple(SIN_TABLE[(k + 3) % 12] for k in range(12))

SUBDIVISION = 3
REACH = 3


def lattice_position(origin: tuple[float, float], lattice: tuple[int, int, int, int]) -> tuple[float, float]:
    a, b, c, d = lattice
    return (origin[0] + CELL * (a + b * HALF_SQRT3 + c * 0.5),
            origin[1] + CELL * (b * 0.5 + c * HALF_SQRT3 + d))


def lattice_advance(lattice: tuple, heading: int) -> tuple:
    s = LATTICE_STEP[heading % HEADINGS]
    return (lattice[0] + s[0], lattice[1] + s[1], lattice[2] + s[2], lattice[3] + s[3])


def point_cell(x: float, y: float) -> tuple[int, int]:
    return int(math.floor(y / CELL)), int(math.floor(x / CELL))


def cell_center(r: int, c: int) -> tuple[float, float]:
    return (c + 0.5) * CELL, (r + 0.5) * CELL


def euclidean_distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def point_square_distance(x: float, y: float, r: int, c: int) -> float:
    """Distance from a point to the closed square of cell (r, c)."""
    x0, y0 = c * CELL, r * CELL
    dx = max(x0 - x, 0.0, x - (x0 + CELL))
    dy = max(y0 - y, 0.0, y - (y0 + CELL))
    return math.hypot(dx, dy)


def crossed_cells(dr: int, dc: int) -> tuple[tuple[int, int], ...]:
    """Cells strictly between two cell centers that the joining segment passes through.

    Cells the segment only touches at a corner are excluded.
    """
    crossed = []
    for i in range(min(0, dr), max(0, dr) + 1):
        for j in range(min(0, dc), max(0, dc) + 1):
            if (i, j) in ((0, 0), (dr, dc)):
                continue
            # clip the segment (0.5, 0.5) + t * (dc, dr) against the square [j, j+1] x [i, i+1]
            lo, hi = Fraction(0), Fraction(1)
            for start, delta, low in ((Fraction(1, 2), dc, j), (Fraction(1, 2), dr, i)):
                if delta == 0:
                    if not low < start < low + 1:
                        lo, hi = Fraction(1), Fraction(0)
                    continue
                t0, t1 = (low - start) / delta, (low + 1 - start) / delta
                lo, hi = max(lo, min(t0, t1)), min(hi, max(t0, t1))
            if hi > lo:
                crossed.append((i, j))
    return tuple(crossed)


def _offsets(reach: int):
    out = []
    for dr in range(-reach, reach + 1):
        for dc in range(-reach, reach + 1):
            if (dr or dc) and math.gcd(dr, dc) == 1:
                out.append((dr, dc, math.hypot(dr, dc), crossed_cells(dr, dc)))
    return out


class NavGraph:
    """Free space as a graph of sub-cell nodes joined by straight segments.

    Every free cell is split into ``subdivision`` x ``subdivision`` nodes
    (3 x 3 by default, so each cell center is a node).  A node links to every
    node at offset (dr, dc) with max(|dr|, |dc|) <= ``reach`` and coprime
    components (32 directions for reach 3); the edge weight is the segment
    length and every node the segment crosses must be free.  Corner touches
    do not count as crossings: the agent is a point and collisions only test
    the destination cell, so it can slip past a blocked corner.
    """

    def __init__(self, blocked: np.ndarray, subdivision: int = SUBDIVISION, reach: int = REACH):
        if subdivision < 1 or subdivision % 2 == 0:
            raise ContractError("subdivision must be a positive odd number")
        self.blocked = blocked
        self.subdivision = subdivision
        self.step = CELL / subdivision
        s = subdivision
        free = np.repeat(np.repeat(~blocked, s, axis=0), s, axis=1)
        self.free = free
        self.shape = free.shape
        h, w = free.shape
        adjacency: list[list] = [[] for _ in range(h * w)]
        for dr, dc, length, crossed in _offsets(reach):
            ok = free & _shifted(free, dr, dc)
            for a, b in crossed:
                ok &= _shifted(free, a, b)
            weight = length * self.step
            rows, cols = np.nonzero(ok)
            src = rows * w + cols
            dst = (rows + dr) * w + (cols + dc)
            for u, v in zip(src.tolist(), dst.tolist()):
                adjacency[u].append((v, weight))
        self.adjacency = adjacency

    def node_of(self, x: float, y: float) -> tuple[int, int]:
        """Sub-cell containing a point, always inside the point's own cell."""
        r, c = point_cell(x, y)
        s = self.subdivision
        i = min(max(int(math.floor((y - r * CELL) / self.step)), 0), s - 1)
        j = min(max(int(math.floor((x - c * CELL) / self.step)), 0), s - 1)
        return r * s + i, c * s + j

    def center(self, node) -> tuple[float, float]:
        r, c = node
        s = self.subdivision
        return (c // s) * CELL + (c % s + 0.5) * self.step, (r // s) * CELL + (r % s + 0.5) * self.step

    def is_node(self, node) -> bool:
        r, c = node
        return 0 <= r < self.shape[0] and 0 <= c < self.shape[1] and bool(self.free[r, c])

    def edges(self):
        w = self.shape[1]
        for u, nbs in enumerate(self.adjacency):
            for v, weight in nbs:
                yield divmod(u, w), divmod(v, w), weight

    def dijkstra(self, sources: dict) -> np.ndarray:
        """Shortest distances from weighted sources ``{node: initial cost}``."""
        w = self.shape[1]
        dist = [math.inf] * (self.shape[0] * w)
        heap = []
        for (r, c), d0 in sources.items():
            u = r * w + c
            if d0 < dist[u]:
                dist[u] = d0
                heap.append((d0, u))
        heapq.heapify(heap)
        adjacency = self.adjacency
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            for v, weight in adjacency[u]:
                nd = d + weight
                if nd < dist[v]:
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        return np.array(dist).reshape(self.shape)


def _shifted(mask: np.ndarray, dr: int, dc: int) -> np.ndarray:
    """``out[r, c] = mask[r + dr, c + dc]``, False outside the grid."""
    h, w = mask.shape
    out = np.zeros_like(mask)
    out[max(0, -dr):min(h, h - dr), max(0, -dc):min(w, w - dc)] = \
        mask[max(0, dr):min(h, h + dr), max(0, dc):min(w, w + dc)]
    return out


@lru_cache(maxsize=64)
def navgraph(house: House) -> NavGraph:
    return NavGraph(house.blocked)


@lru_cache(maxsize=2048)
def _node_field(house: House, node: tuple[int, int]) -> np.ndarray:
    return navgraph(house).dijkstra({node: 0.0})


def geodesic_distance(house: House, a, b) -> float:
    """Shortest free-space path length between two points.

    Each endpoint is joined by a straight segment to the center of the
    sub-cell node containing it, and the two nodes by the shortest NavGraph
    path.  Points in the same node are joined directly.  Raises
    ``Unreachable`` for disconnected points.
    """
    if not house.is_free_point(*a) or not house.is_free_point(*b):
        raise ContractError(f"geodesic endpoints must be free: {a}, {b}")
    graph = navgraph(house)
    na, nb = graph.node_of(*a), graph.node_of(*b)
    if na == nb:
        return euclidean_distance(a, b)
    if nb < na:  # fixed summation order keeps the result exactly symmetric
        a, b, na, nb = b, a, nb, na
    d = float(_node_field(house, na)[nb])
    if math.isinf(d):
        raise Unreachable(f"{a} and {b} are disconnected")
    return euclidean_distance(a, graph.center(na)) + d + euclidean_distance(graph.center(nb), b)


class GoalField:
    """Distances from any free point to the footprints of one object class.

    Nodes whose sub-cell touches a goal cell are sources, seeded with the
    straight distance from their center to that goal cell.  A query point is
    joined to the best neighboring node, or straight to a goal cell within
    one cell when the segment is clear.
    """

    def __init__(self, house: House, cls: int):
        self.house = house
        self.cls = cls
        goal = house.object_grid == cls
        if not goal.any():
            raise ContractError(f"class {cls} is not present in {house.house_id}")
        self.goal_cells = [tuple(int(v) for v in rc) for rc in np.argwhere(goal)]
        graph = navgraph(house)
        self.graph = graph
        s = graph.subdivision
        # free cells within one cell of a goal cell, with the goal cells they touch
        near: dict[tuple[int, int], list] = {}
        for r, c in self.goal_cells:
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr, cc = r + dr, c + dc
                    if house.in_bounds(rr, cc) and not house.blocked[rr, cc]:
                        near.setdefault((rr, cc), []).append((r, c))
        self.near = near
        sources: dict[tuple[int, int], float] = {}
        for r, c in self.goal_cells:
            for i in range(r * s - 1, (r + 1) * s + 1):
                for j in range(c * s - 1, (c + 1) * s + 1):
                    if graph.is_node((i, j)):
                        d = point_square_distance(*graph.center((i, j)), r, c)
                        sources[(i, j)] = min(d, sources.get((i, j), math.inf))
        self.field = graph.dijkstra(sources)

    def boundary_distance(self, x: float, y: float) -> float:
        """Euclidean distance to the nearest goal footprint boundary."""
        return min(point_square_distance(x, y, r, c) for r, c in self.goal_cells)

    def direct_distance(self, x: float, y: float) -> float:
        """Straight distance to an adjacent goal cell whose nearest point is in clear view, else inf."""
        best = math.inf
        for r, c in self.near.get(point_cell(x, y), ()):
            qx = min(max(x, c * CELL), (c + 1) * CELL)
            qy = min(max(y, r * CELL), (r + 1) * CELL)
            if _segment_clear(self.house, (x, y), (qx, qy), (r, c)):
                best = min(best, math.hypot(x - qx, y - qy))
        return best

    def geodesic(self, x: float, y: float) -> float:
        graph = self.graph
        i, j = graph.node_of(x, y)
        best = self.direct_distance(x, y)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                n = (i + di, j + dj)
                if not graph.is_node(n):
                    continue
                if di and dj and not (graph.is_node((i + di, j)) and graph.is_node((i, j + dj))):
                    continue
                best = min(best, euclidean_distance((x, y), graph.center(n)) + float(self.field[n]))
        return best


def _segment_clear(house: House, p, q, target) -> bool:
    """True if no blocked cell other than ``target`` lies on the segment p -> q."""
    for t in np.linspace(0.0, 1.0, 17)[:-1]:
        cell = point_cell(p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))
        if cell != target and house.blocked[cell]:
            return False
    return True


@lru_cache(maxsize=512)
def goal_field(house: House, cls: int) -> GoalField:
    return GoalField(house, cls)
