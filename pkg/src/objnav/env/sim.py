"""Deterministic ObjectGoal simulator.

Actions are ``0 go_forward``, ``1 turn_left``, ``2 turn_right``, ``3 stop``.
Positions live on an exact integer lattice (see :mod:`.geometry`), so any
action sequence replays to the same pose bit for bit.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

from ..errors import ConfigError, ContractError
from .geometry import HEADINGS, goal_field, lattice_advance, lattice_position
from .house import CELL, House
from .sensing import NO_ACTION, Observation, relative_pose, scene_histogram, seg_patch, visible_cells

FORWARD, TURN_LEFT, TURN_RIGHT, STOP = 0, 1, 2, 3
ACTIONS = ("go_forward", "turn_left", "turn_right", "stop")
N_ACTIONS = len(ACTIONS)


@dataclass(frozen=True)
class EnvConfig:
    forward_step: float = 0.25
    turn_angle: float = 30.0
    success_distance: float = 0.1
    max_steps: int = 500
    hfov: float = 79.0
    sensor_range: float = 3.0
    patch_size: int = 11
    success_bonus: float = 2.5
    step_penalty: float = 0.01
    shaping: bool = True

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("success_bonus", "step_penalty"):
                if not v >= 0:
                    raise ConfigError(f"{f.name} must be non-negative, got {v}")
            elif f.type in ("float", "int") and not v > 0:
                raise ConfigError(f"{f.name} must be positive, got {v}")
        if self.forward_step != CELL or self.turn_angle != 360.0 / HEADINGS:
            raise ConfigError("the motion lattice requires forward_step 0.25 and turn_angle 30")
        if self.patch_size % 2 == 0:
            raise ConfigError("patch_size must be odd so the agent sits in the center cell")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown env settings: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    heading: int
    collided: bool = False
    lattice: tuple = (0, 0, 0, 0)


@dataclass(frozen=True)
class StepOutcome:
    observation: Observation | None
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


def shaped_reward(prev_geo: float, new_geo: float, success: bool, config: EnvConfig = EnvConfig()) -> float:
    progress = prev_geo - new_geo if config.shaping else 0.0
    return progress + (config.success_bonus if success else 0.0) - config.step_penalty


def render_observation(house: House, agent: AgentState, config: EnvConfig, *,
                       origin: tuple[float, float], start_heading: int,
                       prev_action: int, goal: int) -> Observation:
    seen = visible_cells(house.walls, agent.x, agent.y, agent.heading, config.hfov, config.sensor_range)
    return Observation(
        seg_grid=seg_patch(house, seen, agent.x, agent.y, agent.heading, config.patch_size),
        scene_vec=scene_histogram(house, seen),
        pose=relative_pose(agent.x - origin[0], agent.y - origin[1], start_heading, agent.heading),
        prev_action=prev_action,
        goal=goal,
    )


class NavEnv:
    """One agent in one house; reusable across episodes via :meth:`reset`."""

    def __init__(self, house: House, config: EnvConfig | None = None):
        self.house = house
        self.config = config or EnvConfig()
        self.agent: AgentState | None = None
        self.done = True
        self.steps = 0
        self.path_length = 0.0

    def reset(self, episode, observe: bool = True) -> Observation | None:
        x, y, heading = episode.start
        if getattr(episode, "house_id", self.house.house_id) != self.house.house_id:
            raise ContractError(f"episode {episode.episode_id} belongs to {episode.house_id}")
        if not self.house.is_free_point(x, y):
            raise ContractError(f"start ({x}, {y}) is not in free space")
        if not 0 <= int(heading) < HEADINGS:
            raise ContractError(f"heading index {heading} out of range")
        if episode.goal not in self.house.classes_present():
            raise ContractError(f"goal class {episode.goal} is not in {self.house.house_id}")
        self.origin = (float(x), float(y))
        self.start_heading = int(heading)
        self.goal = int(episode.goal)
        self.field = goal_field(self.house, self.goal)
        self.agent = AgentState(self.origin[0], self.origin[1], self.start_heading)
        self.steps = 0
        self.path_length = 0.0
        self.done = False
        self.geo = self.field.geodesic(self.agent.x, self.agent.y)
        return self.observe(NO_ACTION) if observe else None

    def observe(self, prev_action: int) -> Observation:
        return render_observation(self.house, self.agent, self.config, origin=self.origin,
                                  start_heading=self.start_heading, prev_action=prev_action, goal=self.goal)

    def goal_distance(self) -> float:
        return self.field.boundary_distance(self.agent.x, self.agent.y)

    def step(self, action: int, observe: bool = True) -> StepOutcome:
        if self.done or self.agent is None:
            raise ContractError("step called on a finished episode; call reset first")
        action = int(action)
        if not 0 <= action < N_ACTIONS:
            raise ContractError(f"unknown action {action}")
        a = self.agent
        collided = False
        if action == FORWARD:
            lat = lattice_advance(a.lattice, a.heading)
            x, y = lattice_position(self.origin, lat)
            if a.collided or not self.house.is_free_point(x, y):
                collided = True
                a = replace(a, collided=True)
            else:
                a = replace(a, x=x, y=y, lattice=lat)
                self.path_length += self.config.forward_step
        elif action in (TURN_LEFT, TURN_RIGHT):
            turn = 1 if action == TURN_LEFT else -1
            a = replace(a, heading=(a.heading + turn) % HEADINGS, collided=False)
        self.agent = a
        self.steps += 1
        success = False
        if action == STOP:
            self.done = True
            success = self.goal_distance() < self.config.success_distance
        elif self.steps >= self.config.max_steps:
            self.done = True
        new_geo = self.field.geodesic(a.x, a.y)
        reward = shaped_reward(self.geo, new_geo, success, self.config)
        self.geo = new_geo
        info = {"success": success, "geo_to_goal": new_geo, "collided": collided,
                "steps": self.steps, "path_length": self.path_length}
        obs = self.observe(action) if observe else None
        return StepOutcome(obs, reward, self.done, info)

    def dts(self) -> float:
        return max(self.geo - self.config.success_distance, 0.0)

