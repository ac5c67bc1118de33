"""Synthetic sensors: ray-cast visibility, egocentric class patch, room histogram."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import COS_TABLE, HEADINGS, SIN_TABLE
from .house import CELL, OBJECT_CLASSES, House, RoomType

N_CLASSES = len(OBJECT_CLASSES)
WALL_CHANNEL = N_CLASSES
FREE_CHANNEL = N_CLASSES + 1
SEG_CHANNELS = N_CLASSES + 2
N_ROOM_TYPES = len(RoomType)
NO_ACTION = 4
SUPERSAMPLE = 3


@dataclass(frozen=True)
class Observation:
    seg_grid: np.ndarray   # K x K x 7, row 0 is farthest ahead, column 0 is leftmost
    scene_vec: np.ndarray  # room-type histogram of visible floor cells
    pose: np.ndarray       # (x, y, sin dtheta, cos dtheta) in the episode start frame
    prev_action: int
    goal: int


def ray_angles(heading: int, hfov: float) -> np.ndarray:
    """One ray per degree across the field of view, symmetric about the heading."""
    n = int(round(hfov)) + 1
    half = (n - 1) / 2.0
    return np.deg2rad(heading * 30.0 + np.linspace(-half, half, n))


def visible_cells(walls: np.ndarray, x: float, y: float, heading: int,
                  hfov: float, sensor_range: float) -> np.ndarray:
    """Boolean mask of cells seen by the ray fan.

    Each ray walks the grid cell by cell (Amanatides-Woo traversal).  A cell
    is visible if the ray enters it within ``sensor_range``; the first wall
    cell hit is visible and ends the ray.
    """
    h, w = walls.shape
    seen = np.zeros((h, w), dtype=bool)
    angles = ray_angles(heading, hfov)
    dx, dy = np.cos(angles), np.sin(angles)
    r0, c0 = int(math.floor(y / CELL)), int(math.floor(x / CELL))
    seen[r0, c0] = True
    n = len(angles)
    row = np.full(n, r0)
    col = np.full(n, c0)
    step_c = np.where(dx > 0, 1, -1)
    step_r = np.where(dy > 0, 1, -1)
    with np.errstate(divide="ignore"):
        delta_c = np.where(dx != 0, CELL / np.abs(dx), np.inf)
        delta_r = np.where(dy != 0, CELL / np.abs(dy), np.inf)
        next_x = np.where(dx > 0, (c0 + 1) * CELL, c0 * CELL)
        next_y = np.where(dy > 0, (r0 + 1) * CELL, r0 * CELL)
        t_c = np.where(dx != 0, (next_x - x) / dx, np.inf)
        t_r = np.where(dy != 0, (next_y - y) / dy, np.inf)
    alive = np.ones(n, dtype=bool)
    if walls[r0, c0]:
        alive[:] = False
    while alive.any():
        along_c = t_c < t_r
        t_enter = np.where(along_c, t_c, t_r)
        alive &= t_enter <= sensor_range
        col = np.where(alive & along_c, col + step_c, col)
        row = np.where(alive & ~along_c, row + step_r, row)
        t_c = np.where(alive & along_c, t_c + delta_c, t_c)
        t_r = np.where(alive & ~along_c, t_r + delta_r, t_r)
        inside = (row >= 0) & (row < h) & (col >= 0) & (col < w)
        alive &= inside
        rr, cc = row[alive], col[alive]
        seen[rr, cc] = True
        alive[alive] = ~walls[rr, cc]
    return seen


@lru_cache(maxsize=64)
def _patch_offsets(k: int, heading: int) -> tuple[np.ndarray, np.ndarray]:
    """World-frame offsets of the K*K*S*S sample points for one heading."""
    half = (k - 1) / 2.0
    sub = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE - 0.5
    ahead = ((half - np.arange(k))[:, None] + sub[None, :]).reshape(-1) * CELL
    left = ((half - np.arange(k))[:, None] + sub[None, :]).reshape(-1) * CELL
    fa, fl = np.meshgrid(ahead, left, indexing="ij")
    c, s = COS_TABLE[heading % HEADINGS], SIN_TABLE[heading % HEADINGS]
    ox = fa * c - fl * s
    oy = fa * s + fl * c
    return ox, oy


def seg_patch(house: House, seen: np.ndarray, x: float, y: float, heading: int, k: int) -> np.ndarray:
    """Fraction of each window cell's sample points that fall on each class."""
    ox, oy = _patch_offsets(k, heading)
    rows = np.floor((y + oy) / CELL).astype(np.int64)
    cols = np.floor((x + ox) / CELL).astype(np.int64)
    h, w = house.shape
    inside = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    rows_c, cols_c = np.clip(rows, 0, h - 1), np.clip(cols, 0, w - 1)
    valid = inside & seen[rows_c, cols_c]
    obj = house.object_grid[rows_c, cols_c]
    channel = np.where(obj >= 0, obj, np.where(house.walls[rows_c, cols_c], WALL_CHANNEL, FREE_CHANNEL))
    onehot = (channel[..., None] == np.arange(SEG_CHANNELS)) & valid[..., None]
    s = SUPERSAMPLE
    grid = onehot.reshape(k, s, k, s, SEG_CHANNELS).sum(axis=(1, 3))
    return grid / float(s * s)


def scene_histogram(house: House, seen: np.ndarray) -> np.ndarray:
    types = house.room_type_grid[seen & ~house.walls]
    types = types[types >= 0]
    hist = np.bincount(types, minlength=N_ROOM_TYPES).astype(np.float64)
    total = hist.sum()
    return hist / total if total > 0 else hist


def relative_pose(dx: float, dy: float, start_heading: int, heading: int) -> np.ndarray:
    """Offset (dx, dy) and heading expressed in the frame of the start pose."""
    c, s = COS_TABLE[start_heading % HEADINGS], SIN_TABLE[start_heading % HEADINGS]
    rel = (heading - start_heading) % HEADINGS
    return np.array([c * dx + s * dy, -s * dx + c * dy, SIN_TABLE[rel], COS_TABLE[rel]])
