"""Figures: trajectory replays (SVG) and report charts (PNG).

Output bytes depend only on the inputs: SVG ids use a fixed hash salt and
no creation date is embedded.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle, Rectangle  # noqa: E402

from .env import CELL, OBJECT_CLASSES, House  # noqa: E402

CLASS_COLORS = ("#e6a040", "#c05090", "#8c5a2b", "#6a6acd", "#30a0a0")
AGENT_COLOR = "#1f4fd8"
ORACLE_COLOR = "#1a9c3a"
ROOM_TINTS = ("#fbf3e4", "#e8f4fb", "#f3ecfa", "#fdf8e1", "#eeeeee", "#f0ede6")
RC = {"svg.hashsalt": "objnav", "svg.fonttype": "none", "font.size": 8}


def _save(fig, path, fmt: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"Date": None} if fmt == "svg" else {"Software": None}
    fig.savefig(path, format=fmt, metadata=meta)
    plt.close(fig)
    return path


def draw_house(ax, house: House) -> None:
    h, w = house.shape
    tint = np.ones((h, w, 3))
    for r, c in np.argwhere(house.room_type_grid >= 0):
        tint[r, c] = matplotlib.colors.to_rgb(ROOM_TINTS[house.room_type_grid[r, c]])
    tint[house.walls] = (0.25, 0.25, 0.25)
    ax.imshow(tint, origin="lower", extent=(0, w * CELL, 0, h * CELL), interpolation="nearest")
    for obj in house.objects:
        for r, c in obj.cells:
            ax.add_patch(Rectangle((c * CELL, r * CELL), CELL, CELL, color=CLASS_COLORS[obj.cls], lw=0))
    ax.set_xlim(0, w * CELL)
    ax.set_ylim(0, h * CELL)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")


def render_replay(house: House, agent_path, oracle_path, path, *, goal: int | None = None,
                  success: bool | None = None, success_distance: float = 0.1, title: str = "") -> Path:
    """Agent path in blue, shortest path in green, start circle and stop cross.

    ``agent_path`` and ``oracle_path`` are sequences of (x, y) points starting
    at the start pose.  With ``success`` true, the stop point is ringed with a
    circle of radius ``success_distance``.
    """
    agent_path = np.asarray(agent_path, dtype=float).reshape(-1, 2)
    oracle_path = np.asarray(oracle_path, dtype=float).reshape(-1, 2)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5, 5))
        draw_house(ax, house)
        if len(oracle_path) > 1:
            ax.plot(oracle_path[:, 0], oracle_path[:, 1], color=ORACLE_COLOR, lw=1.5, label="shortest path")
        if len(agent_path) > 1:
            ax.plot(agent_path[:, 0], agent_path[:, 1], color=AGENT_COLOR, lw=1.5, label="agent")
        start = agent_path[0]
        ax.plot(*start, marker="o", color=AGENT_COLOR, ms=6, label="start")
        if len(agent_path) > 1:
            stop = agent_path[-1]
            ax.plot(*stop, marker="X", color="#d02020", ms=7, label="stop")
            if success:
                ax.add_patch(Circle(stop, success_distance, fill=False, color="#d02020", lw=0.8))
        if goal is not None:
            title = title or f"goal: {OBJECT_CLASSES[goal]}"
        ax.set_title(title)
        ax.legend(loc="upper right", fontsize=6)
        return _save(fig, path, "svg")


def plot_metrics(report, path, label: str = "") -> Path:
    """Per-class Success and SPL bars with the overall values in the title."""
    classes = list(report.per_class)
    x = np.arange(len(classes))
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(6, 3))
        ax.bar(x - 0.2, [report.per_class[c]["success"] for c in classes], 0.4, label="Success")
        ax.bar(x + 0.2, [report.per_class[c]["spl"] for c in classes], 0.4, label="SPL")
        ax.set_xticks(x, classes)
        ax.set_ylim(0, 1)
        ax.set_title(f"{label} Success {report.success:.3f}  SPL {report.spl:.3f}  DTS {report.dts:.3f}".strip())
        ax.legend()
        fig.tight_layout()
        return _save(fig, path, "png")


def plot_training(log: list[dict], path) -> Path:
    """Rollout success rate and mean episode reward per update."""
    upd = [r["update"] for r in log]
    with plt.rc_context(RC):
        fig, (a, b) = plt.subplots(2, 1, figsize=(6, 4), sharex=True)
        a.plot(upd, [r["success_rate"] for r in log], color=AGENT_COLOR)
        val = [(r["update"], r["val_success"]) for r in log if "val_success" in r]
        if val:
            a.plot(*zip(*val), "o-", color=ORACLE_COLOR, ms=3, label="val_seen (greedy)")
            a.legend()
        a.set_ylabel("success")
        b.plot(upd, [r["mean_reward"] for r in log], color="#444444")
        b.set_ylabel("mean reward")
        b.set_xlabel("update")
        fig.tight_layout()
        return _save(fig, path, "png")


def plot_stats(table: dict, path) -> Path:
    """Mean geodesic distance per class for each split."""
    splits = list(table)
    classes = [c for c in OBJECT_CLASSES if any(c in table[s] for s in splits)]
    x = np.arange(len(classes))
    width = 0.8 / max(len(splits), 1)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(6, 3))
        for i, s in enumerate(splits):
            ax.bar(x + (i - (len(splits) - 1) / 2) * width,
                   [table[s].get(c, {}).get("Geo", 0.0) for c in classes], width, label=s)
        ax.set_xticks(x, classes)
        ax.set_ylabel("mean geodesic (m)")
        ax.legend(fontsize=6)
        fig.tight_layout()
        return _save(fig, path, "png")
