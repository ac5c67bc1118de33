"""Episode datasets, metrics and the evaluation harness."""
from .dataset import (PROFILES, SPLITS, DatasetManifest, DatasetProfile, Episode, format_stats,
                      generate_dataset, house_suite, load_manifest, profile_by_name,
                      require_all_classes, sample_episode, save_manifest, stats_report)
from .evaluation import (LOG_FORMAT, EpisodeResult, OracleAgent, evaluate_agent, log_name, oracle_positions,
                         replay_log, run_episode, trajectory_records)
from .metrics import EpisodeOutcome, MetricsReport, dts, spl, spl_term
from ..env.planner import shortest_path_steps

__all__ = [
    "PROFILES", "SPLITS", "DatasetManifest", "DatasetProfile", "Episode", "format_stats",
    "generate_dataset", "house_suite", "load_manifest", "profile_by_name", "require_all_classes",
    "sample_episode", "save_manifest", "stats_report", "EpisodeResult", "OracleAgent",
    "evaluate_agent", "run_episode", "trajectory_records", "LOG_FORMAT", "log_name", "oracle_positions",
    "replay_log", "EpisodeOutcome", "MetricsReport",
    "dts", "spl", "spl_term", "shortest_path_steps",
]
