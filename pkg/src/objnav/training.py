"""PPO: rollout collection, GAE, the clipped surrogate update and the training loop."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .artifacts import canonical_json, config_hash
from .autodiff import tensor as T
from .autodiff.checkpoint import dumps, loads
from .encoders import ObservationBatch, stack_observations
from .env import EnvConfig, House, NavEnv
from .episodes import Episode, evaluate_agent
from .errors import ConfigError, ContractError
from .policy import NeuralPolicy, load_policy, save_policy


@dataclass(frozen=True)
class PpoConfig:
    clip: float = 0.2
    epochs: int = 4
    minibatch: int = 64
    learning_rate: float = 1e-5
    gamma: float = 0.99
    lam: float = 0.95
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    episodes_per_update: int = 8
    updates: int = 100
    max_grad_norm: float | None = 0.5
    eval_every: int = 0
    eval_episodes: int = 0

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0 <= self.lam <= 1:
            raise ConfigError(f"lam must be in [0, 1], got {self.lam}")
        if not self.clip > 0:
            raise ConfigError(f"clip must be positive, got {self.clip}")
        if self.epochs < 1 or self.minibatch < 1 or self.episodes_per_update < 1 or self.updates < 0:
            raise ConfigError("epochs, minibatch and episodes_per_update must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.max_grad_norm is not None and not self.max_grad_norm > 0:
            raise ConfigError("max_grad_norm must be positive or None")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PpoConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown ppo settings: {sorted(unknown)}")
        return cls(**d)


# rollouts ----------------------------------------------------------------------

@dataclass
class EpisodeRollout:
    episode: Episode
    observations: ObservationBatch
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    context: dict
    success: bool

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class RolloutBuffer:
    episodes: list[EpisodeRollout] = field(default_factory=list)

    def __len__(self) -> int:
        return sum(len(e) for e in self.episodes)

    def index(self) -> tuple[np.ndarray, np.ndarray]:
        """(episode, step) index of every stored step, in storage order."""
        e = np.concatenate([np.full(len(r), i) for i, r in enumerate(self.episodes)])
        t = np.concatenate([np.arange(len(r)) for r in self.episodes])
        return e, t

    def flat(self, name: str) -> np.ndarray:
        return np.concatenate([getattr(r, name) for r in self.episodes])

    @property
    def success_rate(self) -> float:
        return float(np.mean([r.success for r in self.episodes])) if self.episodes else 0.0

    @property
    def mean_reward(self) -> float:
        """Mean undiscounted episode return."""
        return float(np.mean([r.rewards.sum() for r in self.episodes])) if self.episodes else 0.0


def collect_rollouts(policy: NeuralPolicy, episodes: list[Episode], houses: dict[str, House],
                     n_episodes: int, seed, env_config: EnvConfig | None = None) -> RolloutBuffer:
    """Run ``n_episodes`` episodes drawn uniformly from ``episodes`` with the sampling policy.

    All episodes advance in lockstep so the policy acts on one batch per step.
    """
    env_config = env_config or EnvConfig()
    if not episodes:
        raise ContractError("no episodes to collect rollouts from")
    rng = np.random.default_rng(seed)
    chosen = [episodes[i] for i in rng.integers(len(episodes), size=n_episodes)]
    envs = []
    for ep in chosen:
        if ep.house_id not in houses:
            raise ContractError(f"episode {ep.episode_id} needs house {ep.house_id}")
        envs.append(NavEnv(houses[ep.house_id], env_config))
    obs = [env.reset(ep) for env, ep in zip(envs, chosen)]
    states = [policy.initial_state() for _ in chosen]
    logs = [{"obs": [], "actions": [], "log_probs": [], "rewards": [], "values": [], "dones": []}
            for _ in chosen]
    success = [False] * n_episodes
    active = list(range(n_episodes))
    while active:
        outs = policy.act_batch([obs[i] for i in active], [states[i] for i in active], rng, greedy=False)
        still = []
        for i, out in zip(active, outs):
            step = envs[i].step(out.action)
            log = logs[i]
            log["obs"].append(obs[i])
            log["actions"].append(out.action)
            log["log_probs"].append(out.log_prob)
            log["values"].append(out.value)
            log["rewards"].append(step.reward)
            log["dones"].append(step.done)
            obs[i] = step.observation
            if step.done:
                success[i] = bool(step.info["success"])
            else:
                still.append(i)
        active = still
    buffer = RolloutBuffer()
    for i, ep in enumerate(chosen):
        log = logs[i]
        buffer.episodes.append(EpisodeRollout(
            ep, stack_observations(log["obs"]), np.array(log["actions"], dtype=np.int64),
            np.array(log["log_probs"]), np.array(log["rewards"]), np.array(log["values"]),
            np.array(log["dones"], dtype=bool), policy.episode_context(states[i]), success[i]))
    return buffer


# advantages ----------------------------------------------------------------------

def compute_gae(rewards, values, dones, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and returns for one or more concatenated episodes.

    ``delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t``; the value after
    the final step is taken as zero.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    n = len(rewards)
    adv = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        next_value = 0.0 if dones[t] or t == n - 1 else values[t + 1]
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return adv, adv + values


def normalize(adv: np.ndarray) -> np.ndarray:
    if len(adv) < 2:
        return adv - adv.mean()
    return (adv - adv.mean()) / (adv.std() + 1e-8)


# update ----------------------------------------------------------------------------

def ppo_loss(logits, values, actions, old_log_probs, advantages, returns, config: PpoConfig):
    """Clipped surrogate + value + entropy loss and its diagnostics."""
    dist = ad.categorical(logits)
    new_log_probs = dist.log_prob(actions)
    ratio = T.exp(new_log_probs - old_log_probs)
    unclipped = ratio * advantages
    clipped = T.clip(ratio, 1.0 - config.clip, 1.0 + config.clip) * advantages
    surrogate = T.mean(T.minimum(unclipped, clipped))
    value_loss = T.mean(T.square(values - returns))
    entropy = T.mean(dist.entropy())
    loss = -surrogate + config.value_coef * value_loss - config.entropy_coef * entropy
    r = ratio.data
    stats = {
        "policy_loss": -float(surrogate.data),
        "value_loss": float(value_loss.data),
        "entropy": float(entropy.data),
        "clip_fraction": float(np.mean(np.abs(r - 1.0) > config.clip)),
        "approx_kl": float(np.mean(old_log_probs - new_log_probs.data)),
    }
    return loss, stats


def ppo_update(policy: NeuralPolicy, buffer: RolloutBuffer, config: PpoConfig, optimizer: ad.AdamState,
               rng: np.random.Generator) -> dict:
    """``config.epochs`` passes over the buffer in shuffled minibatches of steps."""
    if len(buffer) == 0:
        raise ContractError("ppo_update on an empty buffer")
    adv_parts, ret_parts = [], []
    for r in buffer.episodes:
        a, ret = compute_gae(r.rewards, r.values, r.dones, config.gamma, config.lam)
        adv_parts.append(a)
        ret_parts.append(ret)
    advantages = normalize(np.concatenate(adv_parts))
    returns = np.concatenate(ret_parts)
    ep_idx, step_idx = buffer.index()
    actions = buffer.flat("actions")
    old_log_probs = buffer.flat("log_probs")
    observations = [r.observations for r in buffer.episodes]
    contexts = [r.context for r in buffer.episodes]
    totals: dict[str, float] = {}
    batches = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(actions))
        for start in range(0, len(order), config.minibatch):
            mb = order[start:start + config.minibatch]
            policy.params.zero_grad()
            with ad.Tape() as tape:
                logits, values = policy.forward_steps(observations, contexts, ep_idx[mb], step_idx[mb])
                loss, stats = ppo_loss(logits, values, actions[mb], old_log_probs[mb],
                                       advantages[mb], returns[mb], config)
                tape.backward(loss)
            if config.max_grad_norm is not None:
                stats["grad_norm"] = ad.clip_grad_norm(policy.params, config.max_grad_norm)
            ad.adam_step(policy.params, optimizer)
            for k, v in stats.items():
                totals[k] = totals.get(k, 0.0) + v
            batches += 1
    return {k: v / batches for k, v in totals.items()}


# optimizer state -------------------------------------------------------------------

def save_optimizer(state: ad.AdamState, path) -> None:
    arrays = {f"first/{k}": v for k, v in state.first.items()}
    arrays.update({f"second/{k}": v for k, v in state.second.items()})
    meta = {k: getattr(state, k) for k in ("learning_rate", "beta1", "beta2", "epsilon", "step")}
    Path(path).write_bytes(dumps(arrays))
    Path(str(path) + ".json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_optimizer(path) -> ad.AdamState:
    meta = json.loads(Path(str(path) + ".json").read_text())
    arrays = loads(Path(path).read_bytes())
    state = ad.AdamState(**meta)
    for key, value in arrays.items():
        which, name = key.split("/", 1)
        (state.first if which == "first" else state.second)[name] = value
    return state


# training loop ---------------------------------------------------------------------

def update_seed(seed: int, update: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, update, stream])


@dataclass
class TrainResult:
    policy: NeuralPolicy
    log: list[dict]


def train(policy: NeuralPolicy, train_episodes: list[Episode], houses: dict[str, House],
          config: PpoConfig, *, seed: int = 0, env_config: EnvConfig | None = None,
          val_episodes: list[Episode] | None = None, out_dir=None, resume: bool = False,
          checkpoint_every: int = 10, progress=None) -> TrainResult:
    """Alternate rollout collection and PPO updates for ``config.updates`` updates.

    Every random stream is derived from ``(seed, update)``, so a run resumed
    from a checkpoint continues exactly as an uninterrupted run would.  With
    ``out_dir`` set, a JSONL log and checkpoints are written there.
    """
    env_config = env_config or EnvConfig()
    if not isinstance(policy, NeuralPolicy):
        raise ContractError(f"{policy.kind} policies have nothing to train")
    if policy.patch_size != env_config.patch_size:
        raise ContractError(f"policy patch {policy.patch_size} != environment patch {env_config.patch_size}")
    optimizer = ad.AdamState(learning_rate=config.learning_rate)
    start = 0
    log: list[dict] = []
    out = Path(out_dir) if out_dir is not None else None
    run_hash = config_hash({"ppo": config.to_dict(), "policy": policy.config.to_dict(),
                            "env": env_config.to_dict(), "seed": seed})
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if resume and (out / "checkpoint" / "train_state.json").exists():
            policy, optimizer, start, log = _load_training(out / "checkpoint", run_hash)
            # drop log lines written after the checkpoint
            (out / "train_log.jsonl").write_text("".join(canonical_json(r) + "\n" for r in log))
    for update in range(start, config.updates):
        t0 = time.perf_counter()
        buffer = collect_rollouts(policy, train_episodes, houses, config.episodes_per_update,
                                  update_seed(seed, update, 0), env_config)
        stats = ppo_update(policy, buffer, config, optimizer, np.random.default_rng(update_seed(seed, update, 1)))
        record = {"update": update, "mean_reward": buffer.mean_reward, "success_rate": buffer.success_rate,
                  "steps": len(buffer), **stats}
        if val_episodes and config.eval_every and (update + 1) % config.eval_every == 0:
            subset = val_episodes[:config.eval_episodes] if config.eval_episodes else val_episodes
            report, _ = evaluate_agent(policy, subset, houses, config=env_config, greedy=True, seed=seed)
            record["val_success"] = report.success
            record["val_spl"] = report.spl
        record["wall_time"] = time.perf_counter() - t0
        log.append(record)
        if out is not None:
            with (out / "train_log.jsonl").open("a" if update > 0 else "w") as fh:
                fh.write(canonical_json(record) + "\n")
            last = update + 1 == config.updates
            if last or (checkpoint_every and (update + 1) % checkpoint_every == 0):
                _save_training(out / "checkpoint", policy, optimizer, update + 1, log, run_hash)
        if progress is not None:
            progress(record)
    return TrainResult(policy, log)


def _save_training(directory: Path, policy, optimizer, next_update: int, log, run_hash: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    save_policy(policy, directory)
    save_optimizer(optimizer, directory / "adam.onl")
    state = {"next_update": next_update, "run_hash": run_hash,
             "log": [{k: v for k, v in r.items() if k != "wall_time"} for r in log]}
    (directory / "train_state.json").write_text(json.dumps(state, sort_keys=True, indent=1) + "\n")


def _load_training(directory: Path, run_hash: str):
    state = json.loads((directory / "train_state.json").read_text())
    if state["run_hash"] != run_hash:
        raise ContractError("checkpoint was written by a run with a different configuration")
    policy = load_policy(directory)
    optimizer = load_optimizer(directory / "adam.onl")
    return policy, optimizer, int(state["next_update"]), list(state["log"])


def entropy_of_uniform() -> float:
    return math.log(4.0)
