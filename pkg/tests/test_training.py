import json
import math

import numpy as np
import pytest

from objnav import autodiff as ad
from objnav.autodiff import tensor as T
from objnav.env import EnvConfig, class_index
from objnav.env.house import open_room
from objnav.episodes import sample_episode
from objnav.errors import ConfigError, ContractError
from objnav.policy import PolicyConfig, build_policy
from objnav.training import (PpoConfig, RolloutBuffer, collect_rollouts, compute_gae, load_optimizer,
                             normalize, ppo_loss, ppo_update, save_optimizer, train)

K = 3
ENV = EnvConfig(patch_size=K, max_steps=40)
ROOM = open_room(4, 4, [("Chair", [(2, 2)])], house_id="room")
HOUSES = {"room": ROOM}
EPISODES = [sample_episode(ROOM, class_index("Chair"), np.random.default_rng(i), ENV, episode_id=f"e{i}")
            for i in range(8)]


def policy(kind="reactive", seed=0, **kw):
    return build_policy(PolicyConfig(kind=kind, patch_size=K, max_steps=ENV.max_steps, memory_window=8, **kw), seed)


# config ---------------------------------------------------------------------------

def test_defaults():
    c = PpoConfig()
    assert (c.clip, c.epochs, c.minibatch, c.learning_rate, c.gamma, c.lam, c.value_coef, c.entropy_coef) == \
        (0.2, 4, 64, 1e-5, 0.99, 0.95, 0.5, 0.01)


@pytest.mark.parametrize("bad", [{"gamma": 0.0}, {"gamma": 1.5}, {"lam": -0.1}, {"lam": 1.1}, {"clip": 0.0},
                                 {"epochs": 0}, {"minibatch": 0}, {"learning_rate": 0.0},
                                 {"max_grad_norm": 0.0}])
def test_invalid_config(bad):
    with pytest.raises(ConfigError):
        PpoConfig(**bad)


def test_config_round_trip():
    c = PpoConfig(updates=7, max_grad_norm=None)
    assert PpoConfig.from_dict(c.to_dict()) == c
    with pytest.raises(ConfigError):
        PpoConfig.from_dict({"learning_rat": 1.0})


# advantages -----------------------------------------------------------------------

TRACE_R = np.array([0.3, -0.1, 0.2, 0.0, 1.0])
TRACE_V = np.array([0.5, 0.4, -0.2, 0.1, 0.7])
TRACE_D = np.array([False, False, False, False, True])


def test_single_step_episode():
    adv, ret = compute_gae([1.5], [0.4], [True], 0.99, 0.95)
    assert adv[0] == pytest.approx(1.1, abs=1e-15)
    assert ret[0] == pytest.approx(1.5, abs=1e-15)


def test_lambda_zero_is_td_residual():
    g = 0.9
    adv, _ = compute_gae(TRACE_R, TRACE_V, TRACE_D, g, 0.0)
    nxt = np.append(TRACE_V[1:], 0.0)
    np.testing.assert_allclose(adv, TRACE_R + g * nxt - TRACE_V, rtol=0, atol=1e-14)


def test_lambda_one_is_monte_carlo():
    g = 0.9
    adv, ret = compute_gae(TRACE_R, TRACE_V, TRACE_D, g, 1.0)
    mc = np.array([sum(g ** k * TRACE_R[t + k] for k in range(5 - t)) for t in range(5)])
    np.testing.assert_allclose(adv, mc - TRACE_V, rtol=0, atol=1e-14)
    np.testing.assert_allclose(ret, mc, rtol=0, atol=1e-14)


def test_no_bootstrap_across_episodes():
    r = np.concatenate([TRACE_R, TRACE_R])
    v = np.concatenate([TRACE_V, TRACE_V])
    d = np.concatenate([TRACE_D, TRACE_D])
    adv, _ = compute_gae(r, v, d, 0.99, 0.95)
    single, _ = compute_gae(TRACE_R, TRACE_V, TRACE_D, 0.99, 0.95)
    np.testing.assert_array_equal(adv[:5], single)
    np.testing.assert_array_equal(adv[5:], single)


def test_normalize():
    x = normalize(np.array([1.0, 2.0, 3.0, 6.0]))
    assert abs(x.mean()) < 1e-12 and x.std() == pytest.approx(1.0, abs=1e-6)


# loss ------------------------------------------------------------------------------

def test_clipped_objective_hand_value():
    logits = T.as_tensor(np.log(np.array([[0.6, 0.2, 0.1, 0.1]])))
    old = np.array([math.log(0.4)])  # ratio 0.6 / 0.4 = 1.5
    _, stats = ppo_loss(logits, T.as_tensor([0.0]), np.array([0]), old, np.array([1.0]), np.array([0.0]),
                        PpoConfig(clip=0.2, value_coef=0.0, entropy_coef=0.0))
    assert -stats["policy_loss"] == pytest.approx(1.2, abs=1e-12)
    assert stats["clip_fraction"] == 1.0


def test_identical_parameters_ratio_one():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(6, 4))
    actions = rng.integers(4, size=6)
    old = ad.categorical(logits).log_prob(actions).data
    adv = rng.normal(size=6)
    _, stats = ppo_loss(T.as_tensor(logits), T.as_tensor(np.zeros(6)), actions, old, adv, np.zeros(6), PpoConfig())
    assert -stats["policy_loss"] == pytest.approx(adv.mean(), abs=1e-14)
    assert stats["clip_fraction"] == 0.0


def test_huge_clip_equals_unclipped_gradient():
    rng = np.random.default_rng(1)
    base = rng.normal(size=(8, 4))
    actions = rng.integers(4, size=8)
    old = ad.categorical(base + rng.normal(scale=0.5, size=(8, 4))).log_prob(actions).data
    adv = rng.normal(size=8)
    cfg = PpoConfig(clip=1e12, value_coef=0.0, entropy_coef=0.0)

    def grad(fn):
        x = T.Tensor(base.copy(), requires_grad=True)
        with ad.Tape() as tape:
            loss = fn(x)
        tape.backward(loss)
        return x.grad

    clipped = grad(lambda x: ppo_loss(x, T.as_tensor(np.zeros(8)), actions, old, adv, np.zeros(8), cfg)[0])
    plain = grad(lambda x: -T.mean(T.exp(ad.categorical(x).log_prob(actions) - old) * adv))
    np.testing.assert_allclose(clipped, plain, rtol=0, atol=1e-10)


def test_value_and_entropy_terms():
    logits = T.as_tensor(np.zeros((2, 4)))
    old = np.full(2, math.log(0.25))
    loss, stats = ppo_loss(logits, T.as_tensor([1.0, 3.0]), np.array([0, 1]), old, np.zeros(2),
                           np.array([0.0, 1.0]), PpoConfig())
    assert stats["value_loss"] == pytest.approx(2.5)
    assert stats["entropy"] == pytest.approx(math.log(4))
    assert float(loss.data) == pytest.approx(0.5 * 2.5 - 0.01 * math.log(4))


# rollouts ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["smtsc", "lstm", "reactive"])
def test_rollouts_terminate_and_recompute(kind):
    pol = policy(kind, stop_init_logit=-2.0)
    buf = collect_rollouts(pol, EPISODES, HOUSES, 4, seed=3, env_config=ENV)
    for r in buf.episodes:
        assert r.dones[-1] and not r.dones[:-1].any()
        assert len(r) <= ENV.max_steps
        assert r.actions[-1] == 3 or len(r) == ENV.max_steps
    e, t = buf.index()
    logits, values = pol.forward_steps([r.observations for r in buf.episodes], [r.context for r in buf.episodes],
                                       e, t)
    np.testing.assert_array_equal(ad.categorical(logits).log_prob(buf.flat("actions")).data, buf.flat("log_probs"))
    np.testing.assert_array_equal(values.data, buf.flat("values"))


def test_rollouts_are_deterministic():
    a = collect_rollouts(policy(), EPISODES, HOUSES, 5, seed=7, env_config=ENV)
    b = collect_rollouts(policy(), EPISODES, HOUSES, 5, seed=7, env_config=ENV)
    for name in ("actions", "log_probs", "rewards", "values"):
        np.testing.assert_array_equal(a.flat(name), b.flat(name))
    c = collect_rollouts(policy(), EPISODES, HOUSES, 5, seed=8, env_config=ENV)
    assert not np.array_equal(a.flat("log_probs"), c.flat("log_probs"))


def test_rollout_needs_episodes_and_houses():
    with pytest.raises(ContractError):
        collect_rollouts(policy(), [], HOUSES, 2, 0, ENV)
    with pytest.raises(ContractError):
        collect_rollouts(policy(), EPISODES, {}, 2, 0, ENV)


def test_update_on_empty_buffer():
    with pytest.raises(ContractError):
        ppo_update(policy(), RolloutBuffer(), PpoConfig(), ad.AdamState(), np.random.default_rng(0))


def test_update_statistics():
    pol = policy()
    buf = collect_rollouts(pol, EPISODES, HOUSES, 6, seed=1, env_config=ENV)
    opt = ad.AdamState(learning_rate=1e-3)
    stats = ppo_update(pol, buf, PpoConfig(), opt, np.random.default_rng(0))
    assert 0.0 <= stats["clip_fraction"] <= 1.0
    assert set(stats) >= {"policy_loss", "value_loss", "entropy", "clip_fraction"}
    assert opt.step == 4 * math.ceil(len(buf) / 64)


# training loop ------------------------------------------------------------------------

def small_config(**kw):
    base = dict(updates=3, episodes_per_update=3, learning_rate=1e-3, minibatch=16, epochs=2)
    base.update(kw)
    return PpoConfig(**base)


def test_train_log_fields(tmp_path):
    train(policy(), EPISODES, HOUSES, small_config(), seed=0, env_config=ENV, out_dir=tmp_path)
    lines = (tmp_path / "train_log.jsonl").read_text().splitlines()
    assert len(lines) == 3
    rec = json.loads(lines[0])
    assert {"update", "mean_reward", "success_rate", "policy_loss", "value_loss", "entropy", "clip_fraction",
            "wall_time"} <= set(rec)


@pytest.mark.parametrize("kind", ["smtsc", "lstm"])
def test_training_is_bit_identical(tmp_path, kind):
    for run in ("a", "b"):
        train(policy(kind), EPISODES, HOUSES, small_config(), seed=5, env_config=ENV, out_dir=tmp_path / run)
    a = (tmp_path / "a" / "checkpoint" / "params.onl").read_bytes()
    b = (tmp_path / "b" / "checkpoint" / "params.onl").read_bytes()
    assert a == b
    assert a != (tmp_path / "a" / "checkpoint" / "params.onl").parent.joinpath("adam.onl").read_bytes()


class Interrupt(Exception):
    pass


def interrupt_after(update):
    def progress(record):
        if record["update"] == update:
            raise Interrupt
    return progress


def test_resume_matches_uninterrupted_run(tmp_path):
    cfg = small_config(updates=4)
    full = train(policy(), EPISODES, HOUSES, cfg, seed=2, env_config=ENV, out_dir=tmp_path / "full")
    with pytest.raises(Interrupt):
        train(policy(), EPISODES, HOUSES, cfg, seed=2, env_config=ENV, out_dir=tmp_path / "cut",
              checkpoint_every=2, progress=interrupt_after(2))
    resumed = train(policy(), EPISODES, HOUSES, cfg, seed=2, env_config=ENV, out_dir=tmp_path / "cut",
                    resume=True)
    for (_, a), (_, b) in zip(full.policy.params.named(), resumed.policy.params.named()):
        np.testing.assert_array_equal(a.data, b.data)
    assert [r["update"] for r in resumed.log] == [0, 1, 2, 3]
    lines = (tmp_path / "cut" / "train_log.jsonl").read_text().splitlines()
    assert [json.loads(x)["update"] for x in lines] == [0, 1, 2, 3]
    for name in ("params.onl", "adam.onl", "train_state.json"):
        assert (tmp_path / "full" / "checkpoint" / name).read_bytes() == \
            (tmp_path / "cut" / "checkpoint" / name).read_bytes()


def test_resume_rejects_other_configuration(tmp_path):
    train(policy(), EPISODES, HOUSES, small_config(updates=2), seed=2, env_config=ENV, out_dir=tmp_path)
    with pytest.raises(ContractError):
        train(policy(), EPISODES, HOUSES, small_config(updates=2, clip=0.3), seed=2, env_config=ENV,
              out_dir=tmp_path, resume=True)


def test_optimizer_round_trip(tmp_path):
    pol = policy()
    buf = collect_rollouts(pol, EPISODES, HOUSES, 3, seed=1, env_config=ENV)
    opt = ad.AdamState(learning_rate=1e-3)
    ppo_update(pol, buf, PpoConfig(epochs=1), opt, np.random.default_rng(0))
    save_optimizer(opt, tmp_path / "adam.onl")
    back = load_optimizer(tmp_path / "adam.onl")
    assert back.step == opt.step and back.learning_rate == opt.learning_rate
    for k in opt.first:
        np.testing.assert_array_equal(back.first[k], opt.first[k])
        np.testing.assert_array_equal(back.second[k], opt.second[k])


def test_untrainable_policy_rejected():
    with pytest.raises(ContractError):
        train(build_policy("random"), EPISODES, HOUSES, small_config(), env_config=ENV)


def test_large_entropy_bonus_drives_policy_to_uniform():
    env = EnvConfig(patch_size=K, max_steps=10, shaping=False, step_penalty=0.0, success_bonus=0.0)
    pol = build_policy(PolicyConfig(kind="reactive", patch_size=K, max_steps=10, stop_init_logit=-3.0), 0)
    cfg = PpoConfig(updates=200, episodes_per_update=2, entropy_coef=10.0, learning_rate=1e-3, epochs=1)
    result = train(pol, EPISODES, HOUSES, cfg, seed=0, env_config=env)
    assert result.log[0]["entropy"] < math.log(4) - 0.1
    assert abs(result.log[-1]["entropy"] - math.log(4)) < 0.05
