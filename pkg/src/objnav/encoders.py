"""Per-step feature encoders and the fused step embedding.

Five modality encoders map one observation to fixed-width vectors::

    sem_seg      seg patch (K*K*7)   -> 256   FC + ReLU
    scene_class  room histogram (6)  -> 128   FC + ReLU
    goal         class index         -> 32    embedding
    pos          pose quadruple (4)  -> 32    FC + ReLU
    act          previous action     -> 32    embedding (4 actions + none)

The goal-scene joint vector is ``delta = FC([scene ‖ goal])`` (160 -> 128) and
the step embedding is ``phi = FC([seg ‖ pos ‖ act ‖ delta])`` (448 -> 256), both
linear.  With scene conditioning off, ``delta`` is a linear projection of the
goal embedding alone and the scene encoder does not exist.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ParameterSet, Tensor, concat, embedding, init_embedding, init_linear, linear, relu
from .env.sensing import N_CLASSES, N_ROOM_TYPES, NO_ACTION, SEG_CHANNELS, Observation
from .errors import ContractError, DimensionError

SEG_WIDTH = 256
SCENE_WIDTH = 128
GOAL_WIDTH = 32
POSE_WIDTH = 32
ACTION_WIDTH = 32
DELTA_WIDTH = 128
PHI_WIDTH = 256
POSE_SIZE = 4


@dataclass(frozen=True)
class ObservationBatch:
    """Observations stacked along a leading axis."""

    seg: np.ndarray          # (B, K*K*7)
    scene: np.ndarray        # (B, 6)
    pose: np.ndarray         # (B, 4)
    prev_action: np.ndarray  # (B,)
    goal: np.ndarray         # (B,)

    def __len__(self) -> int:
        return len(self.goal)

    def take(self, index) -> "ObservationBatch":
        return ObservationBatch(self.seg[index], self.scene[index], self.pose[index],
                                self.prev_action[index], self.goal[index])


def stack_observations(observations: list[Observation]) -> ObservationBatch:
    if not observations:
        raise ContractError("cannot stack an empty observation list")
    return ObservationBatch(
        seg=np.stack([o.seg_grid.reshape(-1) for o in observations]).astype(np.float64),
        scene=np.stack([o.scene_vec for o in observations]).astype(np.float64),
        pose=np.stack([o.pose for o in observations]).astype(np.float64),
        prev_action=np.array([o.prev_action for o in observations], dtype=np.int64),
        goal=np.array([o.goal for o in observations], dtype=np.int64),
    )


def concat_batches(batches: list[ObservationBatch]) -> ObservationBatch:
    return ObservationBatch(*(np.concatenate([getattr(b, f) for b in batches])
                              for f in ("seg", "scene", "pose", "prev_action", "goal")))


@dataclass
class Modalities:
    seg: Tensor
    scene: Tensor | None
    goal: Tensor
    pose: Tensor
    action: Tensor


class EncoderStack:
    """Parameters and forward passes of the feature encoders."""

    def __init__(self, params: ParameterSet, rng: np.random.Generator, patch_size: int = 11,
                 scene_conditioning: bool = True):
        self.params = params
        self.patch_size = patch_size
        self.scene_conditioning = scene_conditioning
        self.seg_size = patch_size * patch_size * SEG_CHANNELS
        init_linear(params.scope("sem_seg"), self.seg_size, SEG_WIDTH, rng)
        if scene_conditioning:
            init_linear(params.scope("scene_class"), N_ROOM_TYPES, SCENE_WIDTH, rng)
        init_embedding(params.scope("goal"), N_CLASSES, GOAL_WIDTH, rng)
        init_linear(params.scope("pos"), POSE_SIZE, POSE_WIDTH, rng)
        init_embedding(params.scope("act"), NO_ACTION + 1, ACTION_WIDTH, rng)
        if scene_conditioning:
            init_linear(params.scope("delta"), SCENE_WIDTH + GOAL_WIDTH, DELTA_WIDTH, rng)
        else:
            init_linear(params.scope("goal_proj"), GOAL_WIDTH, DELTA_WIDTH, rng)
        init_linear(params.scope("phi"), SEG_WIDTH + POSE_WIDTH + ACTION_WIDTH + DELTA_WIDTH, PHI_WIDTH, rng)

    def encode_modalities(self, obs: ObservationBatch | Observation) -> Modalities:
        if isinstance(obs, Observation):
            obs = stack_observations([obs])
        if obs.seg.shape[-1] != self.seg_size:
            raise DimensionError(f"seg patch has {obs.seg.shape[-1]} values, encoder expects {self.seg_size}")
        p = self.params
        return Modalities(
            seg=relu(linear(obs.seg, p.scope("sem_seg"))),
            scene=relu(linear(obs.scene, p.scope("scene_class"))) if self.scene_conditioning else None,
            goal=embedding(obs.goal, p.scope("goal")),
            pose=relu(linear(obs.pose, p.scope("pos"))),
            action=embedding(obs.prev_action, p.scope("act")),
        )

    def delta(self, scene: Tensor | None, goal: Tensor) -> Tensor:
        """Goal-scene joint vector, scene features first."""
        if not self.scene_conditioning:
            return linear(goal, self.params.scope("goal_proj"))
        return linear(concat([scene, goal], axis=-1), self.params.scope("delta"))

    def phi(self, seg: Tensor, pose: Tensor, action: Tensor, delta: Tensor) -> Tensor:
        return linear(concat([seg, pose, action, delta], axis=-1), self.params.scope("phi"))

    def __call__(self, obs: ObservationBatch | Observation) -> Tensor:
        """Fused step embeddings, shape (B, 256)."""
        m = self.encode_modalities(obs)
        return self.phi(m.seg, m.pose, m.action, self.delta(m.scene, m.goal))


def encode_modalities(obs: ObservationBatch | Observation, stack: EncoderStack) -> Modalities:
    """Per-modality features of a batch of observations."""
    return stack.encode_modalities(obs)


def delta_joint(scene: Tensor | None, goal: Tensor, stack: EncoderStack) -> Tensor:
    """Goal-scene joint vector (B, 128)."""
    if stack.scene_conditioning and scene is None:
        raise ContractError("scene-conditioned delta needs scene features")
    return stack.delta(scene, goal)


def phi_fuse(seg: Tensor, pose: Tensor, action: Tensor, delta: Tensor, stack: EncoderStack) -> Tensor:
    """Fused step embedding (B, 256)."""
    widths = (seg.shape[-1], pose.shape[-1], action.shape[-1], delta.shape[-1])
    if widths != (SEG_WIDTH, POSE_WIDTH, ACTION_WIDTH, DELTA_WIDTH):
        raise DimensionError(f"phi expects widths {(SEG_WIDTH, POSE_WIDTH, ACTION_WIDTH, DELTA_WIDTH)}, got {widths}")
    return stack.phi(seg, pose, action, delta)
