"""Procedural multi-room houses with typed rooms and placed objects."""
from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from ..errors import ContractError, GenerationError

CELL = 0.25  # meters per grid cell
HOUSE_FORMAT = "objnav-house"
HOUSE_VERSION = 1

OBJECT_CLASSES = ("Chair", "Cushion", "Table", "Cabinet", "Sink")


class RoomType(enum.IntEnum):
    KITCHEN = 0
    BATHROOM = 1
    BEDROOM = 2
    LIVING_ROOM = 3
    HALLWAY = 4
    STORAGE = 5

    @property
    def label(self) -> str:
        return {"LIVING_ROOM": "LivingRoom"}.get(self.name, self.name.title())

    @classmethod
    def from_label(cls, label: str) -> "RoomType":
        for t in cls:
            if t.label == label:
                return t
        raise ContractError(f"unknown room type {label!r}")


# P(room type | object class); columns follow RoomType order.
PLACEMENT_PRIOR = np.array([
    # Kitchen Bathroom Bedroom Living Hallway Storage
    [0.35, 0.00, 0.10, 0.45, 0.05, 0.05],   # Chair
    [0.05, 0.00, 0.40, 0.55, 0.00, 0.00],   # Cushion
    [0.45, 0.00, 0.05, 0.45, 0.05, 0.00],   # Table
    [0.20, 0.25, 0.15, 0.05, 0.10, 0.25],   # Cabinet
    [0.50, 0.50, 0.00, 0.00, 0.00, 0.00],   # Sink
])

FOOTPRINTS = {"Chair": (1, 1), "Cushion": (1, 1), "Table": (2, 2), "Cabinet": (1, 2), "Sink": (1, 1)}

# Room types guaranteed first, in order, before the rest are drawn at random.
_REQUIRED_TYPES = (RoomType.KITCHEN, RoomType.LIVING_ROOM, RoomType.BATHROOM, RoomType.BEDROOM)


def class_index(name_or_index) -> int:
    if isinstance(name_or_index, str):
        try:
            return OBJECT_CLASSES.index(name_or_index)
        except ValueError:
            raise ContractError(f"unknown object class {name_or_index!r}") from None
    idx = int(name_or_index)
    if not 0 <= idx < len(OBJECT_CLASSES):
        raise ContractError(f"object class index {idx} out of range")
    return idx


@dataclass(frozen=True)
class ObjectInstance:
    cls: int
    cells: tuple[tuple[int, int], ...]

    @property
    def name(self) -> str:
        return OBJECT_CLASSES[self.cls]

    @property
    def centroid(self) -> tuple[float, float]:
        rows = [r for r, _ in self.cells]
        cols = [c for _, c in self.cells]
        return (float(np.mean(cols)) + 0.5) * CELL, (float(np.mean(rows)) + 0.5) * CELL


@dataclass(frozen=True)
class HouseParams:
    height: int = 20
    width: int = 20
    rooms: tuple[int, int] = (3, 5)
    objects_per_class: tuple[int, int] = (1, 2)
    classes: tuple[int, ...] = (0, 1, 2, 3, 4)
    min_room_side: int = 4
    max_attempts: int = 25

    def __post_init__(self):
        if min(self.height, self.width) < 3 or self.rooms[0] < 1 or self.rooms[1] < self.rooms[0]:
            raise GenerationError(f"invalid house params {self}")
        if self.objects_per_class[0] < 0 or self.objects_per_class[1] < self.objects_per_class[0]:
            raise GenerationError(f"invalid objects_per_class {self.objects_per_class}")
        for c in self.classes:
            class_index(c)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HouseParams":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(eq=False)
class House:
    """Occupancy grid, room map and object placements.

    ``walls`` marks structural cells; object cells are floor inside a room
    but still block motion, so ``blocked`` is walls plus object footprints.
    Row index grows with y, column index with x.
    """

    walls: np.ndarray
    room_map: np.ndarray
    rooms: dict[int, RoomType]
    objects: list[ObjectInstance]
    seed: int
    params: HouseParams = field(default_factory=HouseParams)
    house_id: str = ""

    def __post_init__(self):
        self.walls = np.asarray(self.walls, dtype=bool)
        self.room_map = np.asarray(self.room_map, dtype=np.int64)
        if not self.house_id:
            self.house_id = f"house-{self.seed}"

    @property
    def shape(self) -> tuple[int, int]:
        return self.walls.shape

    @cached_property
    def object_grid(self) -> np.ndarray:
        grid = np.full(self.shape, -1, dtype=np.int64)
        for obj in self.objects:
            for r, c in obj.cells:
                grid[r, c] = obj.cls
        return grid

    @cached_property
    def blocked(self) -> np.ndarray:
        return self.walls | (self.object_grid >= 0)

    @cached_property
    def room_type_grid(self) -> np.ndarray:
        lut = np.full(max(self.rooms, default=0) + 2, -1, dtype=np.int64)
        for rid, rtype in self.rooms.items():
            lut[rid] = int(rtype)
        return np.where(self.room_map >= 0, lut[self.room_map], -1)

    def classes_present(self) -> set[int]:
        return {o.cls for o in self.objects}

    def cells_of_class(self, cls: int) -> np.ndarray:
        return np.argwhere(self.object_grid == cls)

    def in_bounds(self, r: int, c: int) -> bool:
        return 0 <= r < self.shape[0] and 0 <= c < self.shape[1]

    def is_free_point(self, x: float, y: float) -> bool:
        r, c = int(np.floor(y / CELL)), int(np.floor(x / CELL))
        return self.in_bounds(r, c) and not self.blocked[r, c]

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": HOUSE_FORMAT,
            "version": HOUSE_VERSION,
            "house_id": self.house_id,
            "seed": self.seed,
            "params": self.params.to_dict(),
            "height": self.shape[0],
            "width": self.shape[1],
            "grid": [_rle_chars(row) for row in self.walls],
            "room_map": [_rle_ints(row) for row in self.room_map],
            "rooms": [{"id": rid, "type": self.rooms[rid].label} for rid in sorted(self.rooms)],
            "objects": [{"class": o.name, "cells": [list(c) for c in o.cells]} for o in self.objects],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "House":
        if d.get("format") != HOUSE_FORMAT:
            raise ContractError("not a house file")
        if d.get("version") != HOUSE_VERSION:
            raise ContractError(f"unsupported house version {d.get('version')}")
        walls = np.array([_unrle_chars(row) for row in d["grid"]], dtype=bool)
        room_map = np.array([_unrle_ints(row) for row in d["room_map"]], dtype=np.int64)
        if walls.shape != (d["height"], d["width"]) or room_map.shape != walls.shape:
            raise ContractError("house grid dimensions do not match header")
        rooms = {int(r["id"]): RoomType.from_label(r["type"]) for r in d["rooms"]}
        objects = [ObjectInstance(class_index(o["class"]), tuple(tuple(c) for c in o["cells"]))
                   for o in d["objects"]]
        return cls(walls, room_map, rooms, objects, int(d["seed"]),
                   HouseParams.from_dict(d["params"]), d["house_id"])

    @classmethod
    def from_json(cls, text: str) -> "House":
        return cls.from_dict(json.loads(text))


def _rle_chars(row) -> str:
    out, prev, n = [], None, 0
    for v in row:
        ch = "#" if v else "."
        if ch == prev:
            n += 1
        else:
            if prev is not None:
                out.append(f"{n}{prev}")
            prev, n = ch, 1
    out.append(f"{n}{prev}")
    return "".join(out)


def _unrle_chars(text: str) -> list[bool]:
    out, num = [], ""
    for ch in text:
        if ch.isdigit():
            num += ch
        else:
            out.extend([ch == "#"] * int(num))
            num = ""
    return out


def _rle_ints(row) -> str:
    runs = []
    for v in row:
        v = int(v)
        if runs and runs[-1][1] == v:
            runs[-1][0] += 1
        else:
            runs.append([1, v])
    return ",".join(f"{n}*{v}" for n, v in runs)


def _unrle_ints(text: str) -> list[int]:
    out = []
    for run in text.split(","):
        n, v = run.split("*")
        out.extend([int(v)] * int(n))
    return out


# generation -----------------------------------------------------------------

def generate_house(seed: int, params: HouseParams | None = None, house_id: str = "") -> House:
    """Generate a house; identical (seed, params) always give the same house."""
    params = params or HouseParams()
    rng = np.random.default_rng(seed)
    last = None
    for _ in range(params.max_attempts):
        try:
            return _attempt(rng, seed, params, house_id)
        except GenerationError as exc:
            last = exc
    raise GenerationError(f"no valid house after {params.max_attempts} attempts: {last}")


def _attempt(rng, seed, params: HouseParams, house_id: str) -> House:
    h, w = params.height, params.width
    n_rooms = int(rng.integers(params.rooms[0], params.rooms[1] + 1))
    rects, splits = _partition(rng, h, w, n_rooms, params.min_room_side)
    walls = np.ones((h, w), dtype=bool)
    room_map = np.full((h, w), -1, dtype=np.int64)
    for rid, (r0, c0, r1, c1) in enumerate(rects):
        walls[r0:r1 + 1, c0:c1 + 1] = False
        room_map[r0:r1 + 1, c0:c1 + 1] = rid
    doors = _cut_doors(rng, walls, room_map, splits)

    order = rng.permutation(n_rooms)
    rooms = {}
    for i, rid in enumerate(order):
        rooms[int(rid)] = _REQUIRED_TYPES[i] if i < len(_REQUIRED_TYPES) else RoomType(int(rng.integers(6)))

    keep_clear = np.zeros((h, w), dtype=bool)
    for r, c in doors:
        keep_clear[max(r - 1, 0):r + 2, max(c - 1, 0):c + 2] = True

    occupied = walls.copy()
    objects = []
    for cls in sorted(class_index(c) for c in params.classes):
        count = int(rng.integers(params.objects_per_class[0], params.objects_per_class[1] + 1))
        for _ in range(count):
            objects.append(_place(rng, cls, rects, rooms, walls, occupied, keep_clear))
    return House(walls, room_map, rooms, objects, seed, params, house_id)


def _partition(rng, h, w, n_rooms, min_side):
    """Binary space partition of the interior into ``n_rooms`` rectangles."""
    rects = [(1, 1, h - 2, w - 2)]
    splits = []
    while len(rects) < n_rooms:
        options = []
        for i, (r0, c0, r1, c1) in enumerate(rects):
            rows, cols = r1 - r0 + 1, c1 - c0 + 1
            if rows >= 2 * min_side + 1:
                options.append((rows * cols, i, "h"))
            if cols >= 2 * min_side + 1:
                options.append((rows * cols, i, "v"))
        if not options:
            raise GenerationError(f"cannot fit {n_rooms} rooms of side {min_side} in {h}x{w}")
        areas = np.array([o[0] for o in options], dtype=float)
        _, i, axis = options[int(rng.choice(len(options), p=areas / areas.sum()))]
        r0, c0, r1, c1 = rects.pop(i)
        if axis == "h":
            k = int(rng.integers(r0 + min_side, r1 - min_side + 1))
            rects[i:i] = [(r0, c0, k - 1, c1), (k + 1, c0, r1, c1)]
            splits.append(("h", k, c0, c1))
        else:
            k = int(rng.integers(c0 + min_side, c1 - min_side + 1))
            rects[i:i] = [(r0, c0, r1, k - 1), (r0, k + 1, r1, c1)]
            splits.append(("v", k, r0, r1))
    return rects, splits


def _cut_doors(rng, walls, room_map, splits):
    doors = []
    for axis, k, lo, hi in splits:
        if axis == "h":
            ok = [c for c in range(lo, hi + 1) if room_map[k - 1, c] >= 0 and room_map[k + 1, c] >= 0]
            cells = [(k, c) for c in ok]
        else:
            ok = [r for r in range(lo, hi + 1) if room_map[r, k - 1] >= 0 and room_map[r, k + 1] >= 0]
            cells = [(r, k) for r in ok]
        if not cells:
            raise GenerationError("no door position on a partition wall")
        wide = [i for i in range(len(ok) - 1) if ok[i + 1] == ok[i] + 1]
        if wide:
            i = wide[int(rng.integers(len(wide)))]
            chosen = cells[i:i + 2]
        else:
            chosen = [cells[int(rng.integers(len(cells)))]]
        for r, c in chosen:
            walls[r, c] = False
            # door cells belong to the room on the lower-index side
            room_map[r, c] = room_map[k - 1, c] if axis == "h" else room_map[r, k - 1]
            doors.append((r, c))
    return doors


def _place(rng, cls, rects, rooms, walls, occupied, keep_clear) -> ObjectInstance:
    prior = PLACEMENT_PRIOR[cls]
    weights = np.array([prior[int(rooms[rid])] for rid in range(len(rects))])
    if weights.sum() <= 0:
        raise GenerationError(f"no room can hold a {OBJECT_CLASSES[cls]}")
    rid = int(rng.choice(len(rects), p=weights / weights.sum()))
    r0, c0, r1, c1 = rects[rid]
    fh, fw = FOOTPRINTS[OBJECT_CLASSES[cls]]
    if rng.random() < 0.5:
        fh, fw = fw, fh
    anchors = [(r, c) for r in range(r0, r1 - fh + 2) for c in range(c0, c1 - fw + 2)]
    for j in rng.permutation(len(anchors))[:40]:
        r, c = anchors[j]
        cells = [(r + dr, c + dc) for dr in range(fh) for dc in range(fw)]
        if any(occupied[rc] or keep_clear[rc] for rc in cells):
            continue
        for rc in cells:
            occupied[rc] = True
        if _navigable_connected(occupied) and _has_free_neighbor(occupied, cells):
            return ObjectInstance(cls, tuple(cells))
        for rc in cells:
            occupied[rc] = False
    raise GenerationError(f"could not place a {OBJECT_CLASSES[cls]} in room {rid}")


def _has_free_neighbor(occupied, cells) -> bool:
    h, w = occupied.shape
    for r, c in cells:
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and not occupied[rr, cc]:
                return True
    return False


def _navigable_connected(blocked: np.ndarray) -> bool:
    free = np.argwhere(~blocked)
    if len(free) == 0:
        return False
    return len(connected_component(blocked, tuple(free[0]))) == len(free)


def connected_component(blocked: np.ndarray, start) -> set:
    """4-connected component of free cells containing ``start``."""
    h, w = blocked.shape
    seen = {tuple(start)}
    queue = deque([tuple(start)])
    while queue:
        r, c = queue.popleft()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nb = (r + dr, c + dc)
            if 0 <= nb[0] < h and 0 <= nb[1] < w and not blocked[nb] and nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return seen


def open_room(height: int, width: int, objects=(), room_type: RoomType = RoomType.LIVING_ROOM,
              seed: int = 0, house_id: str = "") -> House:
    """A single rectangular room of ``height`` x ``width`` free cells inside a one-cell wall.

    ``objects`` holds ``(class, [(row, col), ...])`` pairs in grid coordinates,
    where the interior spans rows and columns ``1..height`` and ``1..width``.
    """
    walls = np.ones((height + 2, width + 2), dtype=bool)
    walls[1:-1, 1:-1] = False
    room_map = np.where(walls, -1, 0)
    placed = [ObjectInstance(class_index(cls), tuple((int(r), int(c)) for r, c in cells))
              for cls, cells in objects]
    for obj in placed:
        if any(walls[rc] for rc in obj.cells):
            raise ContractError(f"{obj.name} footprint overlaps the wall")
    params = HouseParams(height=height + 2, width=width + 2, rooms=(1, 1),
                         objects_per_class=(0, 1), min_room_side=1)
    return House(walls, room_map, {0: room_type}, placed, seed, params, house_id or f"room-{height}x{width}-{seed}")
