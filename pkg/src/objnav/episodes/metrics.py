"""Success, SPL and DTS, per episode and aggregated."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..env import OBJECT_CLASSES, House
from ..env.geometry import goal_field
from ..errors import ContractError, Unreachable


@dataclass(frozen=True)
class EpisodeOutcome:
    success: bool
    shortest: float   # l_i, metres
    path: float       # p_i, metres actually travelled
    dts: float = 0.0
    goal: int = 0
    steps: int = 0

    @property
    def spl_term(self) -> float:
        return spl_term(self.success, self.shortest, self.path)


def spl_term(success: bool, shortest: float, path: float) -> float:
    if not shortest > 0:
        raise ContractError(f"shortest path length must be positive, got {shortest}")
    if path < 0:
        raise ContractError(f"path length must be non-negative, got {path}")
    return float(success) * shortest / max(path, shortest)


def spl(outcomes) -> float:
    """Mean of S_i * l_i / max(p_i, l_i) over ``(success, l, p)`` triples or outcomes."""
    terms = []
    for o in outcomes:
        s, l, p = (o.success, o.shortest, o.path) if isinstance(o, EpisodeOutcome) else o
        terms.append(spl_term(s, l, p))
    if not terms:
        raise ContractError("spl of an empty episode set")
    return float(np.mean(terms))


def dts(x: float, y: float, house: House, goal: int, d: float = 0.1) -> float:
    """Goal distance from (x, y) minus ``d``, clamped at zero."""
    geo = goal_field(house, goal).geodesic(x, y)
    if not np.isfinite(geo):
        raise Unreachable(f"goal class {goal} is unreachable from ({x}, {y})")
    return max(geo - d, 0.0)


def _summary(outcomes: list[EpisodeOutcome]) -> dict:
    return {
        "success": float(np.mean([o.success for o in outcomes])),
        "spl": spl(outcomes),
        "dts": float(np.mean([o.dts for o in outcomes])),
        "episodes": len(outcomes),
    }


@dataclass
class MetricsReport:
    success: float
    spl: float
    dts: float
    episodes: int
    per_class: dict = field(default_factory=dict)

    @classmethod
    def from_outcomes(cls, outcomes: list[EpisodeOutcome]) -> "MetricsReport":
        if not outcomes:
            raise ContractError("cannot report on zero episodes")
        total = _summary(outcomes)
        per_class = {}
        for c, name in enumerate(OBJECT_CLASSES):
            group = [o for o in outcomes if o.goal == c]
            if group:
                per_class[name] = _summary(group)
        return cls(total["success"], total["spl"], total["dts"], total["episodes"], per_class)

    def to_dict(self) -> dict:
        return {"success": self.success, "spl": self.spl, "dts": self.dts,
                "episodes": self.episodes, "per_class": self.per_class}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(d["success"], d["spl"], d["dts"], d["episodes"], dict(d.get("per_class", {})))

    def format(self, label: str = "agent") -> str:
        rows = [(label, self.to_dict())] + [(f"  {k}", v) for k, v in self.per_class.items()]
        w = max(len(r[0]) for r in rows + [("Model", None)])
        lines = [f"{'Model':<{w}}  {'SPL↑':>7}  {'Success↑':>8}  {'DTS↓':>7}  {'N':>5}"]
        for name, m in rows:
            lines.append(f"{name:<{w}}  {m['spl']:7.3f}  {m['success']:8.3f}  {m['dts']:7.3f}  "
                         f"{m['episodes']:5d}")
        return "\n".join(lines) + "\n"
