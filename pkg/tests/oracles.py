"""Independent reference implementations shared by the test modules."""
import math
from types import SimpleNamespace

import networkx as nx
import numpy as np

from objnav.env import CELL
from objnav.env.geometry import point_cell


def episode(house, x, y, heading, goal):
    return SimpleNamespace(start=(x, y, heading), goal=goal, house_id=house.house_id, episode_id="t")


def random_free_point(house, rng):
    free = np.argwhere(~house.blocked)
    r, c = free[rng.integers(len(free))]
    return (c + rng.random()) * CELL, (r + rng.random()) * CELL


def oracle_graph(house, subdivision=3, reach=3):
    """Independent construction: sampled-segment clearance, networkx Dijkstra."""
    s = subdivision
    step = CELL / s
    free = np.repeat(np.repeat(~house.blocked, s, axis=0), s, axis=1)
    h, w = free.shape
    g = nx.Graph()
    # t = (2k + 1) / 256 never equals a grid-corner crossing (2n - 1) / (2 d) for d <= 3
    samples = (np.arange(128) + 0.5) / 128
    for r, c in np.argwhere(free):
        g.add_node((int(r), int(c)))
        for dr in range(-reach, reach + 1):
            for dc in range(0, reach + 1):
                if (dc == 0 and dr <= 0) or math.gcd(dr, dc) != 1:
                    continue
                rr, cc = r + dr, c + dc
                if not (0 <= rr < h and 0 <= cc < w and free[rr, cc]):
                    continue
                ys = np.floor(r + 0.5 + samples * dr).astype(int)
                xs = np.floor(c + 0.5 + samples * dc).astype(int)
                if free[ys, xs].all():
                    g.add_edge((int(r), int(c)), (int(rr), int(cc)), weight=math.hypot(dr, dc) * step)
    return g


def oracle_geodesic(house, g, a, b):
    s = 3
    step = CELL / s

    def node(p):
        r, c = point_cell(*p)
        i = min(int((p[1] - r * CELL) // step), s - 1)
        j = min(int((p[0] - c * CELL) // step), s - 1)
        return r * s + i, c * s + j

    def center(n):
        return (n[1] // s) * CELL + (n[1] % s + 0.5) * step, (n[0] // s) * CELL + (n[0] % s + 0.5) * step

    na, nb = node(a), node(b)
    if na == nb:
        return math.dist(a, b)
    d = nx.dijkstra_path_length(g, na, nb)
    return math.dist(a, center(na)) + d + math.dist(center(nb), b)
