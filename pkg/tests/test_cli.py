import json

import pytest

from objnav.artifacts import load_json, load_jsonl
from objnav.cli import main

TRAIN = ["--set", "ppo.updates=2", "--set", "ppo.episodes_per_update=2", "--set", "ppo.learning_rate=3e-4",
         "--set", "policy.memory_window=4"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("world-gen", "--count", 1, "--profile", "smoke", "--seed", 3, "--out", root / "houses") == 0
    assert run("dataset", "--houses", root / "houses", "--profile", "smoke", "--seed", 1,
               "--out", root / "data" / "smoke.episodes.json") == 0
    return root


def manifest(world):
    return world / "data" / "smoke.episodes.json"


def strip_wall_time(records):
    return [{k: v for k, v in r.items() if k != "wall_time"} for r in records]


# world-gen -----------------------------------------------------------------------

def test_world_gen_zero_count(tmp_path):
    assert run("world-gen", "--count", 0, "--out", tmp_path / "h") == 0
    assert not (tmp_path / "h").exists()


def test_world_gen_is_idempotent(tmp_path):
    for d in ("a", "b"):
        assert run("world-gen", "--count", 2, "--profile", "smoke", "--seed", 4, "--out", tmp_path / d) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_world_gen_seen_unseen_split(tmp_path):
    assert run("world-gen", "--count", 8, "--seed", 2, "--out", tmp_path) == 0
    index = load_json(tmp_path / "houses.json")
    assert len(index["seen"]) == 6 and len(index["unseen"]) == 2
    assert len(list(tmp_path.glob("*.json"))) == 9


# dataset and stats ---------------------------------------------------------------------

def test_dataset_outputs(world):
    for suffix in ("episodes.json", "stats.json", "stats.txt", "stats.tsv", "stats.png"):
        assert (world / "data" / f"smoke.{suffix}").exists()
    rows = (world / "data" / "smoke.stats.tsv").read_text().splitlines()
    assert rows[0].split("\t") == ["split", "class", "Euc", "Geo", "Steps", "n"]


def test_dataset_is_deterministic(world, tmp_path):
    assert run("dataset", "--houses", world / "houses", "--profile", "smoke", "--seed", 1,
               "--out", tmp_path / "again.episodes.json") == 0
    assert (tmp_path / "again.episodes.json").read_bytes() == manifest(world).read_bytes()


def test_stats_prints_table(world, capsys):
    assert run("stats", manifest(world)) == 0
    out = capsys.readouterr().out
    assert "Geo" in out and "train" in out


# train and eval --------------------------------------------------------------------------

def test_train_and_eval_reruns_are_identical(world, tmp_path):
    for d in ("a", "b"):
        assert run("train", "--manifest", manifest(world), "--houses", world / "houses", "--model", "smtsc",
                   "--seed", 5, "--out", tmp_path / d, *TRAIN) == 0
        assert run("eval", "--manifest", manifest(world), "--houses", world / "houses", "--checkpoint",
                   tmp_path / d, "--split", "train", "--limit", 3, "--seed", 5, "--out", tmp_path / f"ev{d}") == 0
    for name in ("params.onl", "adam.onl", "policy.json", "train_state.json"):
        assert (tmp_path / "a" / "checkpoint" / name).read_bytes() == \
            (tmp_path / "b" / "checkpoint" / name).read_bytes()
    assert strip_wall_time(load_jsonl(tmp_path / "a" / "train_log.jsonl")) == \
        strip_wall_time(load_jsonl(tmp_path / "b" / "train_log.jsonl"))
    for name in ("report.txt", "report.json", "report.tsv"):
        assert (tmp_path / "eva" / name).read_bytes() == (tmp_path / "evb" / name).read_bytes()
    assert (tmp_path / "a" / "training.png").exists() and (tmp_path / "eva" / "metrics.png").exists()
    assert len(list((tmp_path / "eva" / "logs").glob("*.jsonl"))) == 3


def test_eval_baseline(world, tmp_path, capsys):
    assert run("eval", "--manifest", manifest(world), "--houses", world / "houses", "--baseline", "random",
               "--split", "train", "--limit", 4, "--out", tmp_path) == 0
    report = load_json(tmp_path / "report.json")
    assert report["model"] == "random" and report["report"]["episodes"] == 4
    assert "random" in capsys.readouterr().out


def test_seed_falls_back_to_environment(world, tmp_path, monkeypatch):
    monkeypatch.setenv("OBJNAV_SEED", "11")
    common = ["--manifest", manifest(world), "--houses", world / "houses", "--baseline", "random",
              "--split", "train", "--limit", 2]
    assert run("eval", *common, "--out", tmp_path / "env") == 0
    monkeypatch.delenv("OBJNAV_SEED")
    assert run("eval", *common, "--seed", 11, "--out", tmp_path / "flag") == 0
    assert load_json(tmp_path / "env" / "report.json")["seed"] == 11
    assert (tmp_path / "env" / "report.json").read_bytes() == (tmp_path / "flag" / "report.json").read_bytes()


# exit codes ---------------------------------------------------------------------------------

def test_usage_errors_exit_one(world, tmp_path, monkeypatch):
    assert run("bogus") == 1
    assert run("eval", "--manifest", manifest(world), "--houses", world / "houses", "--baseline", "random",
               "--split", "nope", "--out", tmp_path) == 1
    assert run("world-gen", "--out", tmp_path, "--set", "nosection") == 1
    assert run("world-gen", "--out", tmp_path, "--config", tmp_path / "missing.ini") == 1
    monkeypatch.setenv("OBJNAV_SEED", "abc")
    assert run("stats", manifest(world)) == 1


def test_contract_errors_exit_two(world, tmp_path):
    # the smoke profile has no val_seen episodes
    assert run("eval", "--manifest", manifest(world), "--houses", world / "houses", "--baseline", "random",
               "--split", "val_seen", "--out", tmp_path) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("stats", bad) == 2
    assert run("train", "--manifest", manifest(world), "--houses", world / "houses", "--model", "lstm",
               "--out", tmp_path / "t", "--set", "env.max_steps=100") == 2


def test_io_errors_exit_three(world, tmp_path):
    assert run("stats", tmp_path / "missing.json") == 3
    assert run("eval", "--manifest", manifest(world), "--houses", tmp_path / "nowhere", "--baseline", "random",
               "--out", tmp_path) == 3


# replay ----------------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def logs(world):
    out = world / "ev"
    assert run("eval", "--manifest", manifest(world), "--houses", world / "houses", "--baseline",
               "forward_only", "--split", "train", "--limit", 3, "--out", out) == 0
    return sorted((out / "logs").glob("*.jsonl"))


def test_replay_renders_deterministic_svg(world, logs, tmp_path, capsys):
    for name in ("a.svg", "b.svg"):
        assert run("replay", "--log", logs[0], "--houses", world / "houses", "--out", tmp_path / name) == 0
    a = (tmp_path / "a.svg").read_bytes()
    assert a == (tmp_path / "b.svg").read_bytes()
    text = a.decode()
    assert "#1f4fd8" in text and "#1a9c3a" in text


def test_replay_reports_the_logged_final_pose(world, logs, capsys):
    records = load_jsonl(logs[1])
    capsys.readouterr()
    assert run("replay", "--log", logs[1], "--houses", world / "houses", "--out", world / "r.svg") == 0
    line = capsys.readouterr().out.strip().splitlines()[-1].split("\t")
    steps = [r for r in records if "action" in r]
    assert int(line[1]) == len(steps)
    last = steps[-1]
    assert (float(line[3]), float(line[4]), int(line[5])) == \
        pytest.approx((round(last["x"], 4), round(last["y"], 4), last["heading"]), abs=1e-4)


def test_replay_of_zero_step_log(world, logs, tmp_path):
    records = load_jsonl(logs[0])
    header = [r for r in records if "action" not in r and "success" not in r]
    path = tmp_path / "empty.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in header))
    assert run("replay", "--log", path, "--houses", world / "houses", "--out", tmp_path / "e.svg") == 0
    assert (tmp_path / "e.svg").exists()


def test_replay_mismatch_exits_two(world, logs, tmp_path):
    records = load_jsonl(logs[0])
    for r in records:
        if "action" in r:
            r["x"] = r["x"] + 1.0
    path = tmp_path / "tampered.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    assert run("replay", "--log", path, "--houses", world / "houses", "--out", tmp_path / "t.svg") == 2
    other = tmp_path / "other"
    assert run("world-gen", "--count", 1, "--seed", 99, "--out", other) == 0
    assert run("replay", "--log", logs[0], "--houses", other, "--out", tmp_path / "o.svg") == 2
