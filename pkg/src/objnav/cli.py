"""``objnav`` command line: world-gen, dataset, stats, train, eval, replay.

Exit codes: 0 success, 1 usage or configuration error, 2 contract or data
error, 3 I/O error.  ``--seed`` falls back to ``$OBJNAV_SEED``, then 0.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .artifacts import config_hash, dump_json, load_json, load_jsonl, stamp
from .config import RunConfig, load_config
from .env import EnvConfig, House
from .episodes import (SPLITS, DatasetManifest, Episode, evaluate_agent, format_stats, generate_dataset,
                       house_suite, load_manifest, oracle_positions, profile_by_name, replay_log, save_manifest,
                       stats_report)
from .errors import ConfigError, ContractError, ObjNavError
from .policy import TRAINABLE, build_policy, load_policy

SUITE_FORMAT = "objnav-house-suite"
SUITE_FILE = "houses.json"
# changing these would invalidate the episodes of a manifest
EPISODE_KEYS = ("forward_step", "turn_angle", "success_distance", "max_steps")


class UsageError(ConfigError):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def default_seed() -> int:
    raw = os.environ.get("OBJNAV_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"OBJNAV_SEED must be an integer, got {raw!r}") from None


def _out(text: str = "") -> None:
    sys.stdout.write(text + ("\n" if not text.endswith("\n") else ""))


# houses and manifests ----------------------------------------------------------

def load_houses(directory) -> dict[str, House]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"house directory {directory} does not exist")
    index = directory / SUITE_FILE
    if index.exists():
        names = [f"{h}.json" for h in load_json(index)["seen"] + load_json(index)["unseen"]]
    else:
        names = sorted(p.name for p in directory.glob("*.json"))
    houses = {}
    for name in names:
        house = House.from_json((directory / name).read_text())
        houses[house.house_id] = house
    return houses


def suite_split(directory) -> tuple[list[str], list[str]]:
    d = load_json(Path(directory) / SUITE_FILE)
    if d.get("format") != SUITE_FORMAT:
        raise ContractError(f"{directory} has no house suite index")
    return list(d["seen"]), list(d["unseen"])


def manifest_env(manifest: DatasetManifest, cfg: RunConfig) -> EnvConfig:
    env = cfg.env_config(manifest.env)
    for key in EPISODE_KEYS:
        if getattr(env, key) != manifest.env.get(key, getattr(env, key)):
            raise ContractError(f"env.{key} = {getattr(env, key)} differs from the manifest's "
                                f"{manifest.env[key]}; regenerate the dataset instead")
    return env


def manifest_houses(manifest: DatasetManifest, directory) -> dict[str, House]:
    houses = load_houses(directory)
    missing = [h for h in manifest.seen + manifest.unseen if h not in houses]
    if missing:
        raise ContractError(f"houses {missing} of the manifest are not in {directory}")
    for hid, seed in manifest.house_seeds.items():
        if houses[hid].seed != seed:
            raise ContractError(f"house {hid} has seed {houses[hid].seed}, manifest expects {seed}")
    return houses


# commands ------------------------------------------------------------------------

def cmd_world_gen(args, cfg: RunConfig) -> int:
    profile = profile_by_name(args.profile)
    params = cfg.house_params()
    houses = house_suite(args.seed, args.count, params)
    if not houses:
        _out("generated 0 houses")
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for h in houses:
        (out / f"{h.house_id}.json").write_text(h.to_json())
    n_seen = min(profile.seen_houses, len(houses))
    index = {"format": SUITE_FORMAT, **stamp(args.seed, {"house": params.to_dict(), "count": args.count}),
             "profile": profile.name, "seen": [h.house_id for h in houses[:n_seen]],
             "unseen": [h.house_id for h in houses[n_seen:]]}
    dump_json(index, out / SUITE_FILE)
    _out("house\tsplit\tseed\trooms\tobjects")
    for i, h in enumerate(houses):
        _out(f"{h.house_id}\t{'seen' if i < n_seen else 'unseen'}\t{h.seed}\t{len(h.rooms)}\t{len(h.objects)}")
    return 0


def write_stats(manifest: DatasetManifest, prefix) -> str:
    from .plotting import plot_stats

    table = stats_report(manifest)
    text = format_stats(table)
    prefix = Path(prefix)
    dump_json({**stamp(manifest.seed, manifest.config()), "stats": table}, f"{prefix}.stats.json")
    Path(f"{prefix}.stats.txt").write_text(text)
    rows = ["split\tclass\tEuc\tGeo\tSteps\tn"]
    for split, per in table.items():
        for name, v in per.items():
            rows.append(f"{split}\t{name}\t{v['Euc']:.4f}\t{v['Geo']:.4f}\t{v['Steps']:.4f}\t{v['n']}")
    Path(f"{prefix}.stats.tsv").write_text("\n".join(rows) + "\n")
    plot_stats(table, f"{prefix}.stats.png")
    return text


def _prefix(path) -> Path:
    path = Path(path)
    name = path.name
    for suffix in (".episodes.json", ".json"):
        if name.endswith(suffix):
            return path.with_name(name[: -len(suffix)])
    return path


def cmd_dataset(args, cfg: RunConfig) -> int:
    profile = profile_by_name(args.profile)
    houses = load_houses(args.houses)
    seen_ids, unseen_ids = suite_split(args.houses)
    seen = [houses[h] for h in seen_ids][: profile.seen_houses]
    unseen = [houses[h] for h in unseen_ids][: profile.unseen_houses]
    env = cfg.env_config()
    manifest = generate_dataset(seen, unseen, profile, seed=args.seed, config=env)
    out = Path(args.out)
    save_manifest(manifest, out)
    _out(write_stats(manifest, _prefix(out)))
    _out("split\tepisodes")
    for split in SPLITS:
        if manifest.splits.get(split):
            _out(f"{split}\t{len(manifest.splits[split])}")
    return 0


def cmd_stats(args, cfg: RunConfig) -> int:
    manifest = load_manifest(args.manifest)
    if args.out:
        _out(write_stats(manifest, args.out))
    else:
        _out(format_stats(stats_report(manifest)))
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    from .plotting import plot_training
    from .training import train

    manifest = load_manifest(args.manifest)
    houses = manifest_houses(manifest, args.houses)
    env = manifest_env(manifest, cfg)
    ppo = cfg.ppo_config()
    fixed = {"max_steps": env.max_steps}
    if "patch_size" not in cfg.policy:
        fixed["patch_size"] = env.patch_size
    policy = build_policy(cfg.policy_config(args.model, **fixed), args.seed)
    train_eps = manifest.episodes("train")
    if not train_eps:
        raise ContractError("the manifest has no train episodes")
    out = Path(args.out)

    def progress(r):
        val = f"\t{r['val_success']:.3f}" if "val_success" in r else "\t"
        _out(f"{r['update']}\t{r['success_rate']:.3f}\t{r['mean_reward']:.4f}\t{r['entropy']:.4f}"
             f"\t{r['clip_fraction']:.3f}{val}")

    _out("update\tsuccess\tmean_reward\tentropy\tclip_fraction\tval_success")
    result = train(policy, train_eps, houses, ppo, seed=args.seed, env_config=env,
                   val_episodes=manifest.episodes("val_seen"), out_dir=out, resume=args.resume,
                   checkpoint_every=args.checkpoint_every, progress=progress)
    run = {**stamp(args.seed, {"ppo": ppo.to_dict(), "policy": result.policy.config.to_dict(),
                               "env": env.to_dict(), "manifest": config_hash(manifest.config())}),
           "model": args.model, "updates": ppo.updates}
    dump_json(run, out / "run.json")
    if result.log:
        plot_training(result.log, out / "training.png")
    return 0


def _checkpoint_dir(path) -> Path:
    path = Path(path)
    if (path / "checkpoint" / "policy.json").exists():
        return path / "checkpoint"
    if not (path / "policy.json").exists():
        raise FileNotFoundError(f"no policy checkpoint in {path}")
    return path


def cmd_eval(args, cfg: RunConfig) -> int:
    from .plotting import plot_metrics

    if args.split not in SPLITS:
        raise ConfigError(f"unknown split {args.split!r}; choose from {list(SPLITS)}")
    manifest = load_manifest(args.manifest)
    houses = manifest_houses(manifest, args.houses)
    env = manifest_env(manifest, cfg)
    if args.baseline:
        policy = build_policy(cfg.policy_config(args.baseline, patch_size=env.patch_size,
                                                max_steps=env.max_steps), args.seed)
        label = args.baseline
    else:
        policy = load_policy(_checkpoint_dir(args.checkpoint))
        label = policy.kind
    episodes = manifest.episodes(args.split)
    if args.limit:
        episodes = episodes[: args.limit]
    out = Path(args.out)
    report, _ = evaluate_agent(policy, episodes, houses, config=env, greedy=not args.sample, seed=args.seed,
                               log_dir=out / "logs")
    text = report.format(label)
    (out / "report.txt").write_text(text)
    dump_json({**stamp(args.seed, {"env": env.to_dict(), "policy": policy.config.to_dict(),
                                   "split": args.split, "greedy": not args.sample}),
               "model": label, "split": args.split, "report": report.to_dict()}, out / "report.json")
    rows = ["model\tclass\tSPL\tSuccess\tDTS\tN", f"{label}\tall\t{report.spl:.4f}\t{report.success:.4f}"
            f"\t{report.dts:.4f}\t{report.episodes}"]
    for name, m in report.per_class.items():
        rows.append(f"{label}\t{name}\t{m['spl']:.4f}\t{m['success']:.4f}\t{m['dts']:.4f}\t{m['episodes']}")
    (out / "report.tsv").write_text("\n".join(rows) + "\n")
    plot_metrics(report, out / "metrics.png", label)
    _out(text)
    return 0


def cmd_replay(args, cfg: RunConfig) -> int:
    from .plotting import render_replay

    records = load_jsonl(args.log)
    houses = load_houses(args.houses)
    if not records or "episode" not in records[0]:
        raise ContractError(f"{args.log} is not a trajectory log")
    episode = Episode.from_dict(records[0]["episode"])
    if episode.house_id not in houses:
        raise ContractError(f"log is for {episode.house_id}, which is not in {args.houses}")
    house = houses[episode.house_id]
    poses = replay_log(records, house)
    env = EnvConfig.from_dict(records[0]["env"]) if "env" in records[0] else EnvConfig()
    end = records[-1] if "success" in records[-1] else {}
    render_replay(house, [(x, y) for x, y, _ in poses], oracle_positions(house, episode, env), args.out,
                  goal=episode.goal, success=end.get("success"), success_distance=env.success_distance)
    x, y, heading = poses[-1]
    _out("episode\tsteps\tsuccess\tx\ty\theading")
    _out(f"{episode.episode_id}\t{len(poses) - 1}\t{end.get('success')}\t{x:.4f}\t{y:.4f}\t{heading}")
    return 0


# parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = Parser(prog="objnav", description="Object-goal navigation: worlds, datasets, training, evaluation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help="global seed (default $OBJNAV_SEED or 0)")
        sp.add_argument("--config", help="INI file with [env], [house], [ppo], [policy] sections")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value; repeatable")

    sp = sub.add_parser("world-gen", help="generate a house suite")
    common(sp)
    sp.add_argument("--count", type=int, default=8)
    sp.add_argument("--profile", default="full", help="decides how many houses are seen (rest unseen)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_world_gen)

    sp = sub.add_parser("dataset", help="sample episodes and write the manifest and statistics")
    common(sp)
    sp.add_argument("--houses", required=True)
    sp.add_argument("--profile", default="full")
    sp.add_argument("--out", required=True, help="manifest path, e.g. data/full.episodes.json")
    sp.set_defaults(func=cmd_dataset)

    sp = sub.add_parser("stats", help="print the statistics table of a manifest")
    common(sp)
    sp.add_argument("manifest")
    sp.add_argument("--out", help="prefix for .stats.{txt,tsv,json,png}")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("train", help="train a policy with PPO")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--houses", required=True)
    sp.add_argument("--model", required=True, choices=TRAINABLE)
    sp.add_argument("--out", required=True)
    sp.add_argument("--resume", action="store_true")
    sp.add_argument("--checkpoint-every", type=int, default=10)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint or a baseline on one split")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--houses", required=True)
    who = sp.add_mutually_exclusive_group(required=True)
    who.add_argument("--checkpoint")
    who.add_argument("--baseline", choices=("random", "forward_only"))
    sp.add_argument("--split", default="test_seen")
    sp.add_argument("--limit", type=int, default=0, help="evaluate only the first N episodes")
    sp.add_argument("--sample", action="store_true", help="sample actions instead of greedy")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("replay", help="render a trajectory log as SVG")
    common(sp)
    sp.add_argument("--log", required=True)
    sp.add_argument("--houses", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.seed is None:
            args.seed = default_seed()
        cfg = load_config(args.config, args.set)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ObjNavError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
