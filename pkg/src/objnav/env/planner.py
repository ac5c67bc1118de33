"""Optimal action plans over the exact pose lattice.

A state is (lattice position, heading); forward, left and right each cost
one action.  Planning and simulation share the same lattice arithmetic, so
replaying a plan reproduces the planned poses exactly.
"""
from __future__ import annotations

import heapq
import math
from functools import lru_cache

import numpy as np

from ..errors import Unreachable
from .geometry import (COS_TABLE, HEADINGS, SIN_TABLE, goal_field, lattice_advance,
                       lattice_position, point_cell, point_square_distance)
from .house import CELL, House
from .sim import FORWARD, TURN_LEFT, TURN_RIGHT, EnvConfig

MAX_EXPANSIONS = 200_000
UNSET = np.iinfo(np.int64).max


RELAX = 3  # sub-cells per cell side in the relaxed model


def _offsets(v: float) -> tuple[int, ...]:
    """Offsets of the unit squares a unit square overlaps after shifting by ``v``."""
    if v == math.floor(v):
        return (int(v),)
    return (math.floor(v), math.floor(v) + 1)


def relaxed_index(x: float, y: float) -> tuple[int, int]:
    # lattice points on a sub-cell edge are exact dyadic floats, so this rounding is exact
    return int(math.floor(y * RELAX / CELL)), int(math.floor(x * RELAX / CELL))


def _shift(a: np.ndarray, dr: int, dc: int) -> np.ndarray:
    """``out[i, j] = a[i + dr, j + dc]``, False outside the grid."""
    out = np.zeros_like(a)
    h, w = a.shape
    out[max(-dr, 0):min(h - dr, h), max(-dc, 0):min(w - dc, w)] = \
        a[max(dr, 0):min(h + dr, h), max(dc, 0):min(w + dc, w)]
    return out


@lru_cache(maxsize=512)
def action_distance_bound(house: House, goal: int, radius: float = 0.1) -> np.ndarray:
    """Lower bound on remaining actions for every (sub-row, sub-col, heading).

    Exact action counts in a relaxed model on a grid of ``RELAX`` x ``RELAX``
    sub-cells per cell: a forward move from a sub-cell may land in any free
    sub-cell overlapped by the shifted sub-cell square, and any sub-cell
    closer than ``radius`` to a goal cell counts as arrived.  Every real move
    maps onto a relaxed move, so the counts never overestimate.
    """
    field = goal_field(house, goal)
    free = np.repeat(np.repeat(~house.blocked, RELAX, axis=0), RELAX, axis=1)
    h, w = free.shape
    unit = CELL / RELAX
    lo_r, lo_c = np.mgrid[0:h, 0:w] * unit
    arrived = np.zeros((h, w), dtype=bool)
    for r, c in field.goal_cells:
        gy = np.maximum.reduce([r * CELL - (lo_r + unit), np.zeros_like(lo_r), lo_r - (r + 1) * CELL])
        gx = np.maximum.reduce([c * CELL - (lo_c + unit), np.zeros_like(lo_c), lo_c - (c + 1) * CELL])
        arrived |= np.hypot(gx, gy) < radius
    arrived &= free
    moves = [[(dr, dc) for dr in _offsets(RELAX * SIN_TABLE[k]) for dc in _offsets(RELAX * COS_TABLE[k])]
             for k in range(HEADINGS)]
    dist = np.full((h, w, HEADINGS), UNSET, dtype=np.int64)
    frontier = np.repeat(arrived[:, :, None], HEADINGS, axis=2)
    d = 0
    while frontier.any():
        dist[frontier] = d
        reach = np.roll(frontier, 1, axis=2) | np.roll(frontier, -1, axis=2)
        for k in range(HEADINGS):
            for dr, dc in moves[k]:
                # a forward move from (i, j) lands on (i + dr, j + dc)
                reach[:, :, k] |= _shift(frontier[:, :, k], dr, dc)
        frontier = reach & free[:, :, None] & (dist == UNSET)
        d += 1
    return dist


@lru_cache(maxsize=512)
def goal_candidates(house: House, goal: int) -> dict:
    """For every free cell, the goal cells that can be nearest to a point inside it.

    A point's distance to a goal cell lies between the cell-to-cell gap and
    the gap plus one cell diagonal, so only goal cells within that margin of
    the smallest gap can attain the minimum.
    """
    h, w = house.shape
    rows, cols = np.mgrid[0:h, 0:w]
    cells = goal_field(house, goal).goal_cells
    gaps = np.stack([CELL * np.hypot(np.maximum(np.abs(rows - r) - 1, 0),
                                     np.maximum(np.abs(cols - c) - 1, 0)) for r, c in cells])
    keep = gaps <= gaps.min(axis=0) + CELL * math.sqrt(2.0) + 1e-12
    out = {}
    for r, c in np.argwhere(~house.blocked):
        out[(int(r), int(c))] = tuple(cells[k] for k in np.flatnonzero(keep[:, r, c]))
    return out


def shortest_path_plan(house: House, start: tuple[float, float, int], goal: int,
                       config: EnvConfig | None = None,
                       max_expansions: int = MAX_EXPANSIONS) -> list[int]:
    """Fewest {forward, left, right} actions after which ``stop`` succeeds.

    A* with the larger of two consistent lower bounds on the actions still
    needed: the relaxed cell-and-heading count from
    :func:`action_distance_bound`, and the straight-line distance left to
    cover in forward moves.
    """
    config = config or EnvConfig()
    field = goal_field(house, goal)
    x0, y0, h0 = float(start[0]), float(start[1]), int(start[2])
    origin = (x0, y0)
    radius = config.success_distance
    bound = action_distance_bound(house, goal, radius)
    candidates = goal_candidates(house, goal)
    near = field.near

    def goal_distance(x, y, cell):
        return min(point_square_distance(x, y, r, c) for r, c in candidates[cell])

    def heuristic(x, y, heading):
        cell = point_cell(x, y)
        relaxed = bound[relaxed_index(x, y) + (heading,)]
        if relaxed == UNSET:
            return None
        remaining = (goal_distance(x, y, cell) - radius) / CELL
        return max(int(relaxed), math.ceil(remaining - 1e-9), 0)

    root = ((0, 0, 0, 0), h0)
    h = heuristic(x0, y0, h0)
    if h is None:
        raise Unreachable(f"goal class {goal} is unreachable from {start}")
    best = {root: 0}
    parent: dict = {root: None}
    heap = [(h, 0, 0, root, x0, y0)]
    counter = 0
    expansions = 0
    while heap:
        f, neg_g, _, state, x, y = heapq.heappop(heap)
        g = -neg_g
        if g > best[state]:
            continue
        cell = point_cell(x, y)
        if cell in near and goal_distance(x, y, cell) < radius:
            return _unwind(parent, state)
        expansions += 1
        if expansions > max_expansions:
            raise Unreachable(f"plan search exceeded {max_expansions} expansions from {start}")
        lat, heading = state
        moves = [(TURN_LEFT, (lat, (heading + 1) % HEADINGS), x, y),
                 (TURN_RIGHT, (lat, (heading - 1) % HEADINGS), x, y)]
        nlat = lattice_advance(lat, heading)
        nx, ny = lattice_position(origin, nlat)
        if house.is_free_point(nx, ny):
            moves.insert(0, (FORWARD, (nlat, heading), nx, ny))
        for action, nxt, px, py in moves:
            ng = g + 1
            if ng >= best.get(nxt, math.inf):
                continue
            hh = heuristic(px, py, nxt[1])
            if hh is None:
                continue
            best[nxt] = ng
            parent[nxt] = (state, action)
            counter += 1
            heapq.heappush(heap, (ng + hh, -ng, counter, nxt, px, py))
    raise Unreachable(f"goal class {goal} is unreachable from {start}")


def _unwind(parent: dict, state) -> list[int]:
    plan = []
    while parent[state] is not None:
        state, action = parent[state]
        plan.append(action)
    return plan[::-1]


def shortest_path_steps(house: House, start, goal: int, config: EnvConfig | None = None) -> int:
    return len(shortest_path_plan(house, start, goal, config))


def plan_path_length(plan: list[int]) -> float:
    return CELL * sum(1 for a in plan if a == FORWARD)
