"""Pinned training experiments.

``run_single_room``: a reactive policy learns to reach one object in an empty
room.  ``run_comparison``: every trainable kind gets the same PPO budget,
dataset and seeds on a fixed seen-house suite, the baselines without
parameters are evaluated as they are, and the result records mean greedy
success per kind and whether the expected ordering holds.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .env import EnvConfig, HouseParams, class_index
from .env.house import open_room
from .episodes import DatasetProfile, evaluate_agent, generate_dataset, house_suite, sample_episode
from .policy import TRAINABLE, PolicyConfig, build_policy
from .training import PpoConfig, train

@dataclass(frozen=True)
class SingleRoomConfig:
    rows: int = 5
    cols: int = 5
    goal: str = "Chair"
    goal_cell: tuple[int, int] = (3, 3)
    train_episodes: int = 200
    test_episodes: int = 50
    episode_seed: int = 0
    seed: int = 0
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoConfig = field(default_factory=lambda: PpoConfig(learning_rate=3e-4, episodes_per_update=32,
                                                             updates=300))
    target: float = 0.9


@dataclass
class SingleRoomResult:
    success: float
    log: list[dict]
    wall_time: float

    def holds(self, target: float) -> bool:
        return self.success >= target


def run_single_room(config: SingleRoomConfig | None = None, progress=None) -> SingleRoomResult:
    """Train a reactive policy in one room with one goal; greedy success on held-out starts."""
    config = config or SingleRoomConfig()
    house = open_room(config.rows, config.cols, [(config.goal, [config.goal_cell])], house_id="room")
    goal = class_index(config.goal)
    rng = np.random.default_rng(config.episode_seed)
    train_eps = [sample_episode(house, goal, rng, config.env, episode_id=f"train/{i:03d}")
                 for i in range(config.train_episodes)]
    test_eps = [sample_episode(house, goal, rng, config.env, episode_id=f"test/{i:03d}")
                for i in range(config.test_episodes)]
    t0 = time.perf_counter()
    policy = build_policy(PolicyConfig(kind="reactive", patch_size=config.env.patch_size,
                                       max_steps=config.env.max_steps), config.seed)
    result = train(policy, train_eps, {"room": house}, config.ppo, seed=config.seed, env_config=config.env,
                   progress=progress)
    report, _ = evaluate_agent(result.policy, test_eps, {"room": house}, config=config.env, greedy=True,
                               seed=config.seed)
    return SingleRoomResult(report.success, result.log, time.perf_counter() - t0)


ORDER = ("smtsc", "smt_wo_sc", "lstm", "reactive")
BLIND = ("random", "forward_only")


@dataclass(frozen=True)
class ComparisonConfig:
    house_seed: int = 7
    houses: int = 6
    house_params: HouseParams = field(default_factory=lambda: HouseParams(height=12, width=12, rooms=(2, 3)))
    dataset_seed: int = 0
    train_per_class: int = 20
    test_per_class: int = 10
    seeds: tuple[int, ...] = (0, 1, 2)
    kinds: tuple[str, ...] = ORDER
    memory_window: int = 16
    stop_init_logit: float = 0.0
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoConfig = field(default_factory=lambda: PpoConfig(learning_rate=3e-4, episodes_per_update=32,
                                                             updates=150))
    margin: float = 0.05
    blind_ceiling: float = 0.05

    def to_dict(self) -> dict:
        return {"house_seed": self.house_seed, "houses": self.houses, "house_params": self.house_params.to_dict(),
                "dataset_seed": self.dataset_seed, "train_per_class": self.train_per_class,
                "test_per_class": self.test_per_class, "seeds": list(self.seeds), "kinds": list(self.kinds),
                "memory_window": self.memory_window,
                "stop_init_logit": self.stop_init_logit, "env": self.env.to_dict(), "ppo": self.ppo.to_dict(),
                "margin": self.margin, "blind_ceiling": self.blind_ceiling}


@dataclass
class ComparisonResult:
    success: dict[str, list[float]]
    wall_time: dict[str, float]
    config: ComparisonConfig

    def mean(self, kind: str) -> float:
        return float(np.mean(self.success[kind]))

    def checks(self) -> dict[str, bool]:
        """Each ordering claim separately."""
        m = {k: self.mean(k) for k in self.success}
        out = {}
        trained = [k for k in ORDER if k in m]
        for a, b in zip(trained, trained[1:]):
            out[f"{a} >= {b}"] = m[a] >= m[b]
        if "smtsc" in m and "smt_wo_sc" in m:
            out[f"smtsc - smt_wo_sc >= {self.config.margin:g}"] = m["smtsc"] - m["smt_wo_sc"] >= self.config.margin
        for k in BLIND:
            if k in m:
                out[f"{k} < {self.config.blind_ceiling:g}"] = m[k] < self.config.blind_ceiling
        return out

    def holds(self) -> bool:
        return all(self.checks().values())

    def to_dict(self) -> dict:
        return {"success": self.success, "mean": {k: self.mean(k) for k in self.success},
                "checks": self.checks(), "holds": self.holds(), "config": self.config.to_dict()}


def comparison_dataset(config: ComparisonConfig):
    houses = house_suite(config.house_seed, config.houses, config.house_params)
    profile = DatasetProfile("comparison", config.houses, 0,
                             {"train": config.train_per_class, "test_seen": config.test_per_class})
    manifest = generate_dataset(houses, [], profile, seed=config.dataset_seed, config=config.env)
    return manifest, {h.house_id: h for h in houses}


def run_comparison(config: ComparisonConfig | None = None, progress=None) -> ComparisonResult:
    """Train every kind for every seed, then report greedy success on ``test_seen``."""
    config = config or ComparisonConfig()
    manifest, houses = comparison_dataset(config)
    train_eps = manifest.episodes("train")
    test_eps = manifest.episodes("test_seen")
    success: dict[str, list[float]] = {}
    wall: dict[str, float] = {}
    for kind in tuple(config.kinds) + BLIND:
        success[kind] = []
        t0 = time.perf_counter()
        for seed in config.seeds:
            pcfg = PolicyConfig(kind=kind, memory_window=config.memory_window,
                                stop_init_logit=config.stop_init_logit, patch_size=config.env.patch_size,
                                max_steps=config.env.max_steps)
            policy = build_policy(pcfg, seed)
            if kind in TRAINABLE:
                policy = train(policy, train_eps, houses, config.ppo, seed=seed, env_config=config.env).policy
            report, _ = evaluate_agent(policy, test_eps, houses, config=config.env, greedy=True, seed=seed)
            success[kind].append(report.success)
            if progress is not None:
                progress(kind, seed, report)
        wall[kind] = time.perf_counter() - t0
    return ComparisonResult(success, wall, config)


def with_updates(config: ComparisonConfig, updates: int) -> ComparisonConfig:
    return replace(config, ppo=replace(config.ppo, updates=updates))
