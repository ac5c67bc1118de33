"""Run agents over episode lists and write per-episode trajectory logs.

An agent is any object with ``reset(env, episode)`` and
``act(obs, rng, greedy) -> action or PolicyOutput``.  Agents that consume
observations may expose ``patch_size``; it must match the environment.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..artifacts import canonical_json, stamp
from ..env import STOP, EnvConfig, House, NavEnv, shortest_path_plan
from ..errors import ContractError
from .dataset import Episode
from .metrics import EpisodeOutcome, MetricsReport

LOG_FORMAT = "objnav-trajectory"


class OracleAgent:
    """Replays the optimal plan, then stops."""

    def reset(self, env: NavEnv, episode: Episode) -> None:
        self._plan = shortest_path_plan(env.house, episode.start, episode.goal, env.config)
        self._t = 0

    def act(self, obs, rng=None, greedy: bool = True) -> int:
        action = self._plan[self._t] if self._t < len(self._plan) else STOP
        self._t += 1
        return action


@dataclass(frozen=True)
class EpisodeResult:
    episode: Episode
    outcome: EpisodeOutcome
    records: list

    @property
    def success(self) -> bool:
        return self.outcome.success


def _action_of(out) -> int:
    return int(getattr(out, "action", out))


def check_agent(agent, config: EnvConfig) -> None:
    if not getattr(agent, "uses_observations", True):
        return
    k = getattr(agent, "patch_size", None)
    if k is not None and k != config.patch_size:
        raise ContractError(f"agent expects a {k}x{k} segmentation patch, environment gives "
                            f"{config.patch_size}x{config.patch_size}")


def episode_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, index])


def run_episode(agent, env: NavEnv, episode: Episode, rng: np.random.Generator,
                greedy: bool = True) -> EpisodeResult:
    """Run one episode to termination (stop or the step cap).

    Agents with ``uses_observations = False`` are handed ``None`` and the
    environment skips rendering.
    """
    observe = getattr(agent, "uses_observations", True)
    obs = env.reset(episode, observe=observe)
    agent.reset(env, episode)
    records = []
    while not env.done:
        action = _action_of(agent.act(obs, rng=rng, greedy=greedy))
        out = env.step(action, observe=observe)
        a = env.agent
        records.append({"t": env.steps, "x": a.x, "y": a.y, "heading": a.heading, "action": action,
                        "reward": out.reward, "collided": out.info["collided"]})
        obs = out.observation
    success = bool(out.info["success"]) if records else False
    outcome = EpisodeOutcome(success, episode.shortest_path_length, env.path_length,
                             env.dts(), episode.goal, env.steps)
    return EpisodeResult(episode, outcome, records)


def trajectory_records(result: EpisodeResult, seed: int, config: EnvConfig) -> list[dict]:
    ep = result.episode
    o = result.outcome
    header = {"format": LOG_FORMAT, **stamp(seed, config.to_dict()), "env": config.to_dict(),
              "episode": ep.to_dict()}
    end = {"success": o.success, "spl_term": o.spl_term, "dts": o.dts, "steps": o.steps,
           "path_length": o.path}
    return [header, *result.records, end]


def log_name(episode: Episode) -> str:
    return episode.episode_id.replace("/", "__") + ".jsonl"


def evaluate_agent(agent, episodes: list[Episode], houses: dict[str, House], *,
                   config: EnvConfig | None = None, greedy: bool = True, seed: int = 0,
                   log_dir: str | os.PathLike | None = None) -> tuple[MetricsReport, list[EpisodeResult]]:
    """Run every episode to termination and aggregate Success, SPL and DTS.

    Episode ``i`` draws actions from a generator seeded by ``(seed, i)``, so
    results do not depend on evaluation order.
    """
    config = config or EnvConfig()
    if not episodes:
        raise ContractError("cannot evaluate an empty split")
    check_agent(agent, config)
    envs: dict[str, NavEnv] = {}
    results = []
    for i, ep in enumerate(episodes):
        if ep.house_id not in houses:
            raise ContractError(f"episode {ep.episode_id} needs house {ep.house_id}")
        env = envs.setdefault(ep.house_id, NavEnv(houses[ep.house_id], config))
        rng = np.random.default_rng(episode_seed(seed, i))
        results.append(run_episode(agent, env, ep, rng, greedy))
    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        for r in results:
            with (log_dir / log_name(r.episode)).open("w") as fh:
                for rec in trajectory_records(r, seed, config):
                    fh.write(canonical_json(rec) + "\n")
    return MetricsReport.from_outcomes([r.outcome for r in results]), results


def replay_log(records: list[dict], house: House) -> list[tuple[float, float, int]]:
    """Re-run a trajectory log's actions and return the visited poses, start first.

    Every simulated pose must equal the logged one exactly; a log that does
    not belong to ``house`` or was edited fails with ContractError.
    """
    if not records or records[0].get("format") != LOG_FORMAT:
        raise ContractError("not a trajectory log")
    header = records[0]
    episode = Episode.from_dict(header["episode"])
    if episode.house_id != house.house_id:
        raise ContractError(f"log is for {episode.house_id}, not {house.house_id}")
    steps = [r for r in records[1:] if "action" in r]
    env = NavEnv(house, EnvConfig.from_dict(header["env"]) if "env" in header else EnvConfig())
    env.reset(episode, observe=False)
    poses = [episode.start]
    for rec in steps:
        env.step(rec["action"], observe=False)
        a = env.agent
        if (a.x, a.y, a.heading) != (rec["x"], rec["y"], rec["heading"]):
            raise ContractError(f"log diverges from the simulator at step {rec['t']}")
        poses.append((a.x, a.y, a.heading))
    return poses


def oracle_positions(house: House, episode: Episode, config: EnvConfig | None = None) -> list[tuple[float, float]]:
    """Positions visited by the shortest plan, start first."""
    config = config or EnvConfig()
    env = NavEnv(house, config)
    env.reset(episode, observe=False)
    points = [(env.agent.x, env.agent.y)]
    for action in shortest_path_plan(house, episode.start, episode.goal, config):
        env.step(action, observe=False)
        points.append((env.agent.x, env.agent.y))
    return points
