"""Navigation policies: the scene-memory transformer and the baselines.

Every policy acts on a batch of environments at once through
:meth:`Policy.act_batch`, and single-agent evaluation goes through
``reset``/``act``.  Trainable policies can also recompute action logits and
values for stored steps with :meth:`NeuralPolicy.forward_steps`; the
recomputation uses the same arithmetic as acting, so stored log-probs are
reproduced exactly under unchanged parameters.

The transformer attends over the ``memory_window`` most recent memory rows
(the whole memory while the episode is shorter than the window).  Windows
are zero-padded to a fixed number of rows and padding is masked out, which
keeps every array shape independent of the batch.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import tensor as T
from .autodiff.params import ParameterSet
from .encoders import PHI_WIDTH, EncoderStack, ObservationBatch, concat_batches, stack_observations
from .env.sim import FORWARD, N_ACTIONS, STOP
from .errors import ConfigError, ContractError

KINDS = ("smtsc", "smt_wo_sc", "lstm", "reactive", "random", "forward_only")
TRAINABLE = KINDS[:4]
POLICY_FORMAT = "objnav-policy"


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "smtsc"
    heads: int = 8
    memory_window: int = 64
    ff_hidden: int = 256
    layer_norm: bool = True
    encoder_layers: int = 1
    decoder_layers: int = 1
    lstm_hidden: int = 256
    stop_probability: float = 0.01
    patch_size: int = 11
    max_steps: int = 500
    head_init_scale: float = 0.01
    stop_init_logit: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown policy kind {self.kind!r}; choose from {list(KINDS)}")
        if PHI_WIDTH % self.heads:
            raise ConfigError(f"width {PHI_WIDTH} is not divisible by {self.heads} heads")
        if self.memory_window < 1 or self.encoder_layers < 0 or self.decoder_layers < 1:
            raise ConfigError("memory_window and decoder_layers must be >= 1, encoder_layers >= 0")
        if not 0.0 <= self.stop_probability <= 1.0:
            raise ConfigError("stop_probability must lie in [0, 1]")

    @property
    def scene_conditioning(self) -> bool:
        return self.kind == "smtsc"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown policy settings: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class PolicyOutput:
    probs: np.ndarray
    value: float
    action: int
    log_prob: float


class SceneMemory:
    """Fused step embeddings of the current episode, oldest first."""

    def __init__(self, capacity: int, width: int = PHI_WIDTH):
        self.capacity = capacity
        self.width = width
        self.rows: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, row: np.ndarray) -> None:
        if len(self.rows) >= self.capacity:
            raise ContractError(f"scene memory is full ({self.capacity} rows)")
        self.rows.append(np.asarray(row, dtype=np.float64))

    def clear(self) -> None:
        self.rows.clear()

    def as_array(self) -> np.ndarray:
        return np.stack(self.rows) if self.rows else np.zeros((0, self.width))

    def window(self, size: int) -> tuple[np.ndarray, np.ndarray]:
        """Most recent ``size`` rows, zero-padded at the end, and the validity mask."""
        recent = self.rows[-size:]
        out = np.zeros((size, self.width))
        if recent:
            out[:len(recent)] = np.stack(recent)
        mask = np.arange(size) < len(recent)
        return out, mask


@dataclass
class EpisodeState:
    memory: SceneMemory | None = None
    h: np.ndarray | None = None
    c: np.ndarray | None = None
    h_before: list = field(default_factory=list)
    c_before: list = field(default_factory=list)
    steps: int = 0


def _outputs(logits: np.ndarray, values: np.ndarray, rng, greedy: bool) -> list[PolicyOutput]:
    out = []
    dist = ad.categorical(logits)
    probs = dist.probs
    log_probs = dist.log_probs.data
    for i in range(len(logits)):
        if greedy:
            a = int(np.argmax(log_probs[i]))
        else:
            if rng is None:
                raise ContractError("sampling needs a random generator")
            cdf = np.cumsum(probs[i])
            a = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), N_ACTIONS - 1)
        out.append(PolicyOutput(probs[i], float(values[i]), a, float(log_probs[i, a])))
    return out


class Policy:
    """Common single-agent adapter over :meth:`act_batch`."""

    config: PolicyConfig
    uses_observations = True

    @property
    def kind(self) -> str:
        return self.config.kind

    @property
    def patch_size(self) -> int:
        return self.config.patch_size

    def initial_state(self) -> EpisodeState:
        return EpisodeState()

    def act_batch(self, observations, states: list[EpisodeState], rng=None,
                  greedy: bool = False) -> list[PolicyOutput]:
        raise NotImplementedError

    def reset(self, env=None, episode=None) -> None:
        self.state = self.initial_state()

    def act(self, obs, rng=None, greedy: bool = True) -> PolicyOutput:
        return self.act_batch([obs], [self.state], rng, greedy)[0]


class RandomPolicy(Policy):
    """Uniform over the four actions, whatever the mode."""

    uses_observations = False

    def __init__(self, config: PolicyConfig | None = None):
        self.config = config or PolicyConfig(kind="random")

    def act_batch(self, observations, states, rng=None, greedy=False):
        if rng is None:
            raise ContractError("the random baseline needs a random generator")
        out = []
        for s in states:
            a = int(rng.integers(N_ACTIONS))
            s.steps += 1
            out.append(PolicyOutput(np.full(N_ACTIONS, 0.25), 0.0, a, float(np.log(0.25))))
        return out


class ForwardOnlyPolicy(Policy):
    """Moves forward, calling stop with a fixed probability each step."""

    uses_observations = False

    def __init__(self, config: PolicyConfig | None = None):
        self.config = config or PolicyConfig(kind="forward_only")

    def act_batch(self, observations, states, rng=None, greedy=False):
        if rng is None:
            raise ContractError("the forward-only baseline needs a random generator")
        p = self.config.stop_probability
        probs = np.zeros(N_ACTIONS)
        probs[FORWARD], probs[STOP] = 1.0 - p, p
        out = []
        for s in states:
            a = STOP if rng.random() < p else FORWARD
            s.steps += 1
            out.append(PolicyOutput(probs, 0.0, a, float(np.log(probs[a]))))
        return out


def _as_batch(observations) -> ObservationBatch:
    if isinstance(observations, ObservationBatch):
        return observations
    return stack_observations(list(observations))


class NeuralPolicy(Policy):
    """Encoders plus a core (memory transformer, LSTM or none) plus action and value heads."""

    def __init__(self, config: PolicyConfig, seed: int = 0):
        if config.kind not in TRAINABLE:
            raise ConfigError(f"{config.kind} has no trainable parameters")
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.params = ParameterSet()
        self.encoder = EncoderStack(self.params.scope("enc"), rng, config.patch_size,
                                    config.scene_conditioning)
        p = self.params
        width = PHI_WIDTH
        if config.kind == "lstm":
            ad.init_lstm(p.scope("lstm"), PHI_WIDTH, config.lstm_hidden, rng)
            width = config.lstm_hidden
        elif config.kind in ("smtsc", "smt_wo_sc"):
            for i in range(config.encoder_layers):
                ad.init_transformer_block(p.scope(f"smt.enc{i}"), PHI_WIDTH, config.heads, rng,
                                          config.ff_hidden, config.layer_norm)
            for i in range(config.decoder_layers):
                ad.init_transformer_block(p.scope(f"smt.dec{i}"), PHI_WIDTH, config.heads, rng,
                                          config.ff_hidden, config.layer_norm)
        ad.init_linear(p.scope("action_head"), width, N_ACTIONS, rng)
        ad.init_linear(p.scope("value_head"), width, 1, rng)
        p["action_head.weight"].data *= config.head_init_scale
        p["action_head.bias"].data[STOP] = config.stop_init_logit

    # acting ------------------------------------------------------------------

    def initial_state(self) -> EpisodeState:
        cfg = self.config
        if cfg.kind == "lstm":
            return EpisodeState(h=np.zeros(cfg.lstm_hidden), c=np.zeros(cfg.lstm_hidden))
        if cfg.kind == "reactive":
            return EpisodeState()
        return EpisodeState(memory=SceneMemory(cfg.max_steps + 1))

    def act_batch(self, observations, states, rng=None, greedy=False):
        batch = _as_batch(observations)
        if len(batch) != len(states):
            raise ContractError(f"{len(batch)} observations for {len(states)} episode states")
        phi = self.encoder(batch)
        kind = self.config.kind
        if kind == "reactive":
            logits, values = self._heads(phi)
        elif kind == "lstm":
            h = np.stack([s.h for s in states])
            c = np.stack([s.c for s in states])
            for i, s in enumerate(states):
                s.h_before.append(s.h)
                s.c_before.append(s.c)
            h2, c2 = ad.lstm_cell(phi, h, c, self.params.scope("lstm"))
            for i, s in enumerate(states):
                s.h, s.c = h2.data[i], c2.data[i]
            logits, values = self._heads(h2)
        else:
            w = self.config.memory_window
            mem = np.zeros((len(states), w, PHI_WIDTH))
            mask = np.zeros((len(states), w), dtype=bool)
            for i, s in enumerate(states):
                s.memory.append(phi.data[i])
                mem[i], mask[i] = s.memory.window(w)
            logits, values = self._smt(T.reshape(phi, (len(states), 1, PHI_WIDTH)), mem, mask)
        for s in states:
            s.steps += 1
        return _outputs(logits.data, values.data, rng, greedy)

    # shared forward pieces -----------------------------------------------------

    def _heads(self, features) -> tuple[ad.Tensor, ad.Tensor]:
        logits = ad.linear(features, self.params.scope("action_head"))
        values = ad.linear(features, self.params.scope("value_head"))
        return logits, T.reshape(values, (values.shape[0],))

    def encode_memory(self, memory, mask=None) -> ad.Tensor:
        """Self-attention over memory rows, (B, W, 256) -> (B, W, 256)."""
        x = T.as_tensor(memory)
        if x.ndim < 2 or x.shape[-2] == 0:
            raise ContractError("scene memory is empty")
        for i in range(self.config.encoder_layers):
            x = ad.transformer_block(x, x, self.params.scope(f"smt.enc{i}"), self.config.heads, mask)
        return x

    def decode(self, current, encoded, mask=None) -> ad.Tensor:
        """Cross-attention of the current step over encoded memory, (B, 1, 256)."""
        q = T.as_tensor(current)
        for i in range(self.config.decoder_layers):
            q = ad.transformer_block(q, encoded, self.params.scope(f"smt.dec{i}"), self.config.heads, mask)
        return q

    def _smt(self, current, memory, mask) -> tuple[ad.Tensor, ad.Tensor]:
        q = self.decode(current, self.encode_memory(memory, mask), mask)
        return self._heads(T.reshape(q, (q.shape[0], PHI_WIDTH)))

    # training ----------------------------------------------------------------

    def episode_context(self, state: EpisodeState) -> dict:
        """Per-step data beyond observations needed to recompute the episode's outputs."""
        if self.config.kind == "lstm":
            return {"h_before": np.stack(state.h_before), "c_before": np.stack(state.c_before)}
        return {}

    def forward_steps(self, observations: list[ObservationBatch], contexts: list[dict],
                      episode_index: np.ndarray, step_index: np.ndarray) -> tuple[ad.Tensor, ad.Tensor]:
        """Logits (B, 4) and values (B,) for stored steps, differentiable.

        ``observations[e]`` holds every observation of episode ``e`` and
        ``(episode_index[i], step_index[i])`` names the i-th step.  Steps
        older than the memory window take no part, which bounds the unrolled
        graph.
        """
        episode_index = np.asarray(episode_index, dtype=np.int64)
        step_index = np.asarray(step_index, dtype=np.int64)
        kind = self.config.kind
        w = 1 if kind == "reactive" else self.config.memory_window
        starts = np.maximum(step_index - w + 1, 0)
        lengths = step_index - starts + 1
        # encode each needed step once
        keys = sorted({(int(e), int(t)) for e, s, n in zip(episode_index, starts, lengths)
                       for t in range(s, s + n)})
        slot = {k: i for i, k in enumerate(keys)}
        parts = []
        for e in sorted({k[0] for k in keys}):
            ts = [t for ee, t in keys if ee == e]
            parts.append(observations[e].take(np.array(ts)))
        phi = self.encoder(concat_batches(parts))
        table = T.concat([phi, np.zeros((1, PHI_WIDTH))], axis=0)
        pad = len(keys)
        b = len(step_index)
        index = np.full((b, w), pad, dtype=np.int64)
        for i, (e, s, n) in enumerate(zip(episode_index, starts, lengths)):
            index[i, :n] = [slot[(int(e), int(t))] for t in range(s, s + n)]
        current = T.take_rows(table, np.array([slot[(int(e), int(t))]
                                               for e, t in zip(episode_index, step_index)]))
        if kind == "reactive":
            return self._heads(current)
        mask = np.arange(w)[None, :] < lengths[:, None]
        if kind == "lstm":
            return self._unroll_lstm(table, index, mask, contexts, episode_index, starts)
        memory = T.take_rows(table, index)
        return self._smt(T.reshape(current, (b, 1, PHI_WIDTH)), memory, mask)

    def _unroll_lstm(self, table, index, mask, contexts, episode_index, starts):
        h = np.stack([contexts[e]["h_before"][s] for e, s in zip(episode_index, starts)])
        c = np.stack([contexts[e]["c_before"][s] for e, s in zip(episode_index, starts)])
        h, c = T.as_tensor(h), T.as_tensor(c)
        layer = self.params.scope("lstm")
        for j in range(index.shape[1]):
            active = mask[:, j]
            if not active.any():
                break
            h2, c2 = ad.lstm_cell(T.take_rows(table, index[:, j]), h, c, layer)
            h = T.where(active[:, None], h2, h)
            c = T.where(active[:, None], c2, c)
        return self._heads(h)


def build_policy(config: PolicyConfig | str, seed: int = 0) -> Policy:
    if isinstance(config, str):
        config = PolicyConfig(kind=config)
    if config.kind == "random":
        return RandomPolicy(config)
    if config.kind == "forward_only":
        return ForwardOnlyPolicy(config)
    return NeuralPolicy(config, seed)


def baseline_act(kind: str, obs, state: EpisodeState, rng=None, policy: Policy | None = None) -> PolicyOutput:
    """One action of a baseline policy; ``policy`` supplies the parameters of reactive/lstm."""
    if kind not in ("random", "forward_only", "reactive", "lstm"):
        raise ConfigError(f"unknown baseline {kind!r}")
    policy = policy or build_policy(kind)
    if policy.kind != kind:
        raise ConfigError(f"policy is {policy.kind}, not {kind}")
    return policy.act_batch([obs], [state], rng, greedy=rng is None)[0]


# persistence -------------------------------------------------------------------

def policy_manifest(policy: Policy) -> dict:
    d = {"format": POLICY_FORMAT, "config": policy.config.to_dict(),
         "seed": getattr(policy, "seed", 0)}
    if isinstance(policy, NeuralPolicy):
        d["parameters"] = {name: list(t.shape) for name, t in policy.params.named()}
    return d


def save_policy(policy: Policy, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "policy.json").write_text(json.dumps(policy_manifest(policy), sort_keys=True, indent=1) + "\n")
    if isinstance(policy, NeuralPolicy):
        ad.save_checkpoint(policy.params, directory / "params.onl")
    return directory


def load_policy(directory) -> Policy:
    directory = Path(directory)
    meta = json.loads((directory / "policy.json").read_text())
    if meta.get("format") != POLICY_FORMAT:
        raise ContractError(f"{directory} does not hold a policy")
    policy = build_policy(PolicyConfig.from_dict(meta["config"]), meta.get("seed", 0))
    if isinstance(policy, NeuralPolicy):
        policy.params.load_state(ad.load_checkpoint(directory / "params.onl"))
    return policy


