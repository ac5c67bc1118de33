"""Episode sampling, dataset profiles and the per-split statistics table."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..artifacts import FORMAT_VERSION, config_hash, dump_json, load_json
from ..env import CELL, EnvConfig, House, OBJECT_CLASSES, generate_house, HouseParams
from ..env.geometry import goal_field
from ..env.planner import plan_path_length, shortest_path_plan
from ..errors import ConfigError, ContractError, GenerationError, SamplingError, Unreachable

MANIFEST_FORMAT = "objnav-episodes"
SNAP_TOLERANCE = CELL * math.sqrt(2.0)
SPLITS = ("train", "val_seen", "test_seen", "val_unseen", "test_unseen")
SEEN_SPLITS = SPLITS[:3]
UNSEEN_SPLITS = SPLITS[3:]


@dataclass(frozen=True)
class Episode:
    episode_id: str
    house_id: str
    start: tuple[float, float, int]
    goal: int
    euclidean: float
    geodesic: float
    shortest_path_steps: int      # optimal action count, stop excluded
    shortest_path_length: float  # forward length of the optimal plan, the SPL reference
    split: str = ""

    @property
    def goal_name(self) -> str:
        return OBJECT_CLASSES[self.goal]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start"] = list(self.start)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Episode":
        d = dict(d)
        x, y, h = d.pop("start")
        return cls(start=(float(x), float(y), int(h)), **d)


@dataclass(frozen=True)
class DatasetProfile:
    """Episodes per (house, class) for each split, and house counts."""

    name: str = "full"
    seen_houses: int = 6
    unseen_houses: int = 2
    per_class: dict = field(default_factory=lambda: {
        "train": 100, "val_seen": 20, "test_seen": 20, "val_unseen": 10, "test_unseen": 10})

    def __post_init__(self):
        unknown = set(self.per_class) - set(SPLITS)
        if unknown:
            raise ConfigError(f"unknown splits in profile: {sorted(unknown)}")
        if self.seen_houses < 0 or self.unseen_houses < 0 or min(self.per_class.values(), default=0) < 0:
            raise ConfigError("profile counts must be non-negative")

    def count(self, split: str) -> int:
        return int(self.per_class.get(split, 0))

    def expected_total(self, split: str) -> int:
        houses = self.seen_houses if split in SEEN_SPLITS else self.unseen_houses
        return houses * len(OBJECT_CLASSES) * self.count(split)

    def to_dict(self) -> dict:
        return {"name": self.name, "seen_houses": self.seen_houses,
                "unseen_houses": self.unseen_houses, "per_class": dict(self.per_class)}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetProfile":
        return cls(d["name"], int(d["seen_houses"]), int(d["unseen_houses"]), dict(d["per_class"]))


PROFILES = {
    "full": DatasetProfile(),
    "smoke": DatasetProfile("smoke", 1, 0, {"train": 10}),
}


def profile_by_name(name: str) -> DatasetProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None


def sample_episode(house: House, goal: int, rng: np.random.Generator, config: EnvConfig | None = None,
                   split: str = "", episode_id: str = "", max_tries: int = 200) -> Episode:
    """Draw a start cell centre and heading uniformly, keep the first valid one.

    A candidate is rejected unless the goal is reachable, the start is at
    least ``success_distance`` from the goal, a successful stop is reachable
    within the step cap, and the Episode invariants (geodesic >= euclidean -
    snap tolerance, steps >= ceil(geodesic / 0.25)) hold.
    """
    config = config or EnvConfig()
    if goal not in house.classes_present():
        raise ContractError(f"{OBJECT_CLASSES[goal]} is not present in {house.house_id}")
    gf = goal_field(house, goal)
    free = np.argwhere(~house.blocked)
    for _ in range(max_tries):
        r, c = free[rng.integers(len(free))]
        heading = int(rng.integers(12))
        x, y = (c + 0.5) * CELL, (r + 0.5) * CELL
        euclid = gf.boundary_distance(x, y)
        geo = gf.geodesic(x, y)
        if euclid < config.success_distance or not math.isfinite(geo):
            continue
        try:
            plan = shortest_path_plan(house, (x, y, heading), goal, config)
        except Unreachable:
            continue
        steps = len(plan)
        if steps + 1 > config.max_steps:
            continue
        if geo < euclid - SNAP_TOLERANCE or steps < math.ceil(geo / config.forward_step):
            continue
        return Episode(episode_id, house.house_id, (float(x), float(y), heading), int(goal),
                       float(euclid), float(geo), steps, plan_path_length(plan), split)
    raise SamplingError(f"no valid {OBJECT_CLASSES[goal]} episode in {house.house_id} "
                        f"after {max_tries} tries")


@dataclass
class DatasetManifest:
    seed: int
    profile: DatasetProfile
    seen: list[str]
    unseen: list[str]
    house_seeds: dict[str, int]
    splits: dict[str, list[Episode]]
    env: dict = field(default_factory=lambda: EnvConfig().to_dict())

    def episodes(self, split: str) -> list[Episode]:
        if split not in SPLITS:
            raise ConfigError(f"unknown split {split!r}; choose from {list(SPLITS)}")
        return self.splits.get(split, [])

    def config(self) -> dict:
        return {"profile": self.profile.to_dict(), "env": self.env, "houses": self.house_seeds}

    def to_dict(self) -> dict:
        return {
            "format": MANIFEST_FORMAT,
            "format_version": FORMAT_VERSION,
            "seed": self.seed,
            "config_hash": config_hash(self.config()),
            "profile": self.profile.to_dict(),
            "env": self.env,
            "houses": {"seen": self.seen, "unseen": self.unseen, "seeds": self.house_seeds},
            "splits": {s: [e.to_dict() for e in eps] for s, eps in self.splits.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        if d.get("format") != MANIFEST_FORMAT:
            raise ContractError("not an episode manifest")
        if d.get("format_version") != FORMAT_VERSION:
            raise ContractError(f"unsupported manifest version {d.get('format_version')}")
        houses = d["houses"]
        return cls(int(d["seed"]), DatasetProfile.from_dict(d["profile"]), list(houses["seen"]),
                   list(houses["unseen"]), {k: int(v) for k, v in houses["seeds"].items()},
                   {s: [Episode.from_dict(e) for e in eps] for s, eps in d["splits"].items()},
                   dict(d.get("env", EnvConfig().to_dict())))


def _split_rng(seed: int, house_index: int, goal: int, split: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, house_index, goal, SPLITS.index(split)]))


def require_all_classes(house: House) -> None:
    missing = [OBJECT_CLASSES[c] for c in range(len(OBJECT_CLASSES)) if c not in house.classes_present()]
    if missing:
        raise GenerationError(f"{house.house_id} has no {', '.join(missing)}")


def generate_dataset(seen: list[House], unseen: list[House], profile: DatasetProfile | None = None,
                     seed: int = 0, config: EnvConfig | None = None) -> DatasetManifest:
    """Sample every (split, house, class) cell of the profile independently.

    Each cell draws from its own generator seeded by (seed, house index,
    class, split), so the result does not depend on iteration order.
    """
    profile = profile or PROFILES["full"]
    config = config or EnvConfig()
    if len(seen) != profile.seen_houses or len(unseen) != profile.unseen_houses:
        raise ConfigError(f"profile {profile.name} needs {profile.seen_houses} seen and "
                          f"{profile.unseen_houses} unseen houses, got {len(seen)} and {len(unseen)}")
    ids = [h.house_id for h in seen + unseen]
    if len(set(ids)) != len(ids):
        raise ContractError("house ids must be unique and seen/unseen houses disjoint")
    for h in seen + unseen:
        require_all_classes(h)
    splits: dict[str, list[Episode]] = {}
    for split in SPLITS:
        n = profile.count(split)
        if n == 0:
            continue
        pool = seen if split in SEEN_SPLITS else unseen
        offset = 0 if split in SEEN_SPLITS else len(seen)
        eps = []
        for i, house in enumerate(pool):
            for goal in range(len(OBJECT_CLASSES)):
                rng = _split_rng(seed, offset + i, goal, split)
                for k in range(n):
                    eid = f"{split}/{house.house_id}/{OBJECT_CLASSES[goal]}/{k:03d}"
                    eps.append(sample_episode(house, goal, rng, config, split, eid))
        splits[split] = eps
    return DatasetManifest(seed, profile, [h.house_id for h in seen], [h.house_id for h in unseen],
                           {h.house_id: int(h.seed) for h in seen + unseen}, splits, config.to_dict())


def house_suite(seed: int, count: int, params: HouseParams | None = None) -> list[House]:
    """``count`` houses with seeds derived from ``seed``; ids are stable per position."""
    params = params or HouseParams()
    seeds = np.random.SeedSequence(seed).generate_state(max(count, 1), dtype=np.uint32)[:count]
    houses = []
    for i, s in enumerate(seeds):
        h = generate_house(int(s), params, house_id=f"house-{seed}-{i:02d}")
        houses.append(h)
    return houses


# statistics -------------------------------------------------------------------

STAT_COLUMNS = ("Euc", "Geo", "Steps")


def stats_report(manifest: DatasetManifest) -> dict:
    """Mean Euclidean, geodesic and step counts per split and class.

    Returns ``{split: {class name or "Total Average": {"Euc", "Geo", "Steps", "n"}}}``
    with classes as column groups and splits as rows.
    """
    table = {}
    for split in SPLITS:
        eps = manifest.splits.get(split)
        if not eps:
            continue
        row = {}
        groups = [(name, [e for e in eps if e.goal == c]) for c, name in enumerate(OBJECT_CLASSES)]
        groups.append(("Total Average", eps))
        for name, group in groups:
            if not group:
                continue
            row[name] = {
                "Euc": float(np.mean([e.euclidean for e in group])),
                "Geo": float(np.mean([e.geodesic for e in group])),
                "Steps": float(np.mean([e.shortest_path_steps for e in group])),
                "n": len(group),
            }
        table[split] = row
    return table


def format_stats(table: dict) -> str:
    """Aligned plain-text rendering of :func:`stats_report`."""
    groups = [g for g in (*OBJECT_CLASSES, "Total Average") if any(g in row for row in table.values())]
    split_w = max([len("Split")] + [len(s) for s in table])
    cell_w = 6
    group_w = 3 * cell_w + 2
    head1 = " " * split_w + " | " + " | ".join(g.center(group_w) for g in groups)
    head2 = "Split".ljust(split_w) + " | " + " | ".join(
        " ".join(c.rjust(cell_w) for c in STAT_COLUMNS) for _ in groups)
    lines = [head1, head2, "-" * len(head2)]
    for split, row in table.items():
        cells = []
        for g in groups:
            if g in row:
                cells.append(" ".join(f"{row[g][c]:{cell_w}.2f}" for c in STAT_COLUMNS))
            else:
                cells.append(" ".join("-".rjust(cell_w) for _ in STAT_COLUMNS))
        lines.append(split.ljust(split_w) + " | " + " | ".join(cells))
    return "\n".join(lines) + "\n"


def save_manifest(manifest: DatasetManifest, path) -> None:
    dump_json(manifest.to_dict(), path)


def load_manifest(path) -> DatasetManifest:
    return DatasetManifest.from_dict(load_json(path))
