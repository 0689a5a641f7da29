"""Agent tests: bootstrap-target algebra against hand-built forwards, update
isolation, soft-update contraction, OU schedule, replay uniformity, and
end-to-end training determinism."""

import numpy as np
import pytest

from crx_isac.array import ArrayConfig
from crx_isac.env import EnvConfig
from crx_isac.errors import DivergenceError
from crx_isac.td3 import (
    DEFAULT_EVAL_SEEDS,
    OUProcess,
    ReplayBuffer,
    TD3Agent,
    TD3Config,
    TrainResult,
    actor_update,
    compute_targets,
    critic_update,
    evaluate_policy,
    smooth_target_action,
    soft_update,
    train,
    uniform_random_policy,
    write_training_log,
)

TINY_ARR = ArrayConfig(n_elements=4, wavelength=0.01, p_min=0.0, p_max=0.04, d0=0.005)


def tiny_env(**kw):
    kw.setdefault("array", TINY_ARR)
    kw.setdefault("n_users", 2)
    kw.setdefault("n_paths", 2)
    kw.setdefault("steps_per_episode", 4)
    return EnvConfig(**kw)


def tiny_agent(cfg=None, seed=0, state_dim=6, action_dim=3):
    cfg = cfg or TD3Config(hidden=(8, 8))
    return TD3Agent(state_dim, action_dim, cfg, np.random.default_rng(seed))


def random_batch(rng, n, state_dim=6, action_dim=3):
    return (
        rng.standard_normal((n, state_dim)),
        rng.standard_normal((n, action_dim)),
        rng.standard_normal((n, 1)),
        rng.standard_normal((n, state_dim)),
        np.zeros((n, 1)),
    )


def flatten_params(net):
    return np.concatenate([p.ravel() for p in net.parameters()])


# ----------------------------------------------------------------------
# target computation


def test_zero_discount_targets_equal_rewards():
    agent = tiny_agent(TD3Config(hidden=(8, 8), discount=0.0, smoothing_var=0.0))
    batch = random_batch(np.random.default_rng(1), 5)
    y = compute_targets(agent, batch, np.random.default_rng(2))
    np.testing.assert_allclose(y, batch[2], atol=1e-15)


def test_targets_match_hand_computation():
    cfg = TD3Config(hidden=(8, 8), smoothing_var=0.0, discount=0.98)
    agent = tiny_agent(cfg, seed=3)
    rng = np.random.default_rng(4)
    s = rng.standard_normal((2, 6))
    a = rng.standard_normal((2, 3))
    r = np.array([[1.0], [2.0]])
    s2 = rng.standard_normal((2, 6))
    done = np.array([[0.0], [1.0]])
    a2 = cfg.logit_bound * agent.target_actor.forward(s2)
    x2 = np.concatenate([s2, a2], axis=1)
    q_min = np.minimum(
        agent.target_critic1.forward(x2), agent.target_critic2.forward(x2)
    )
    expected = np.array([[1.0 + 0.98 * q_min[0, 0]], [2.0]])
    y = compute_targets(agent, (s, a, r, s2, done), np.random.default_rng(5))
    np.testing.assert_allclose(y, expected, atol=1e-10)


def test_targets_use_twin_minimum():
    agent = tiny_agent(TD3Config(hidden=(8, 8), smoothing_var=0.0, discount=0.5))
    for net, const in ((agent.target_critic1, 2.0), (agent.target_critic2, -1.0)):
        for p in net.parameters():
            p[...] = 0.0
        net.biases[-1][...] = const
    batch = random_batch(np.random.default_rng(6), 4)
    y = compute_targets(agent, batch, np.random.default_rng(7))
    np.testing.assert_allclose(y, batch[2] + 0.5 * (-1.0), atol=1e-12)


def test_identical_twins_reduce_to_single_critic():
    agent = tiny_agent(TD3Config(hidden=(8, 8), smoothing_var=0.0))
    agent.target_critic2 = agent.target_critic1.copy()
    batch = random_batch(np.random.default_rng(8), 4)
    _, _, r, s2, done = batch
    a2 = smooth_target_action(agent, s2, np.random.default_rng(9))
    q1 = agent.target_critic1.forward(np.concatenate([s2, a2], axis=1))
    expected = r + agent.cfg.discount * (1 - done) * q1
    y = compute_targets(agent, batch, np.random.default_rng(10))
    np.testing.assert_allclose(y, expected, atol=1e-14)


# ----------------------------------------------------------------------
# smoothing noise


def test_zero_smoothing_noise_is_exact_target_action():
    agent = tiny_agent(TD3Config(hidden=(8, 8), smoothing_var=0.0))
    s2 = np.random.default_rng(11).standard_normal((3, 6))
    a2 = smooth_target_action(agent, s2, np.random.default_rng(12))
    np.testing.assert_array_equal(
        a2, agent.cfg.logit_bound * agent.target_actor.forward(s2)
    )


def test_smoothing_noise_is_clipped_and_usually_saturated():
    agent = tiny_agent()  # defaults: var 0.15, clip 0.01
    s2 = np.zeros((100_000 // 3 + 1, 6))
    rng = np.random.default_rng(13)
    base = agent.cfg.logit_bound * agent.target_actor.forward(s2)
    eps = (smooth_target_action(agent, s2, rng) - base).ravel()
    assert np.max(np.abs(eps)) <= 0.01 + 1e-15
    # sqrt(0.15) >> 0.01, so nearly every draw hits the clip boundary
    assert np.mean(np.abs(np.abs(eps) - 0.01) < 1e-12) > 0.95


def test_smoothing_noise_reproducible():
    agent = tiny_agent()
    s2 = np.random.default_rng(14).standard_normal((4, 6))
    a = smooth_target_action(agent, s2, np.random.default_rng(99))
    b = smooth_target_action(agent, s2, np.random.default_rng(99))
    np.testing.assert_array_equal(a, b)


# ----------------------------------------------------------------------
# critic and actor updates


def test_critics_regress_immediate_reward_at_zero_discount():
    agent = tiny_agent(TD3Config(hidden=(16, 16), discount=0.0, critic_lr=1e-2))
    batch = random_batch(np.random.default_rng(15), 4)
    rng = np.random.default_rng(16)
    for _ in range(2500):
        critic_update(agent, batch, rng)
    x = np.concatenate([batch[0], batch[1]], axis=1)
    np.testing.assert_allclose(agent.critic1.forward(x), batch[2], atol=0.05)
    np.testing.assert_allclose(agent.critic2.forward(x), batch[2], atol=0.05)


def test_critic_update_returns_finite_losses_and_moves_critics_only():
    agent = tiny_agent()
    before_actor = flatten_params(agent.actor)
    before_c1 = flatten_params(agent.critic1)
    batch = random_batch(np.random.default_rng(17), 16)
    l1, l2 = critic_update(agent, batch, np.random.default_rng(18))
    assert np.isfinite(l1) and np.isfinite(l2)
    assert not np.array_equal(flatten_params(agent.critic1), before_c1)
    np.testing.assert_array_equal(flatten_params(agent.actor), before_actor)


class AnalyticCritic:
    """Q(s, a) = -||a - a_star||^2, with the backward interface of a network."""

    def __init__(self, state_dim, a_star):
        self.state_dim = state_dim
        self.a_star = a_star

    def forward_cache(self, x):
        a = x[:, self.state_dim :]
        q = -np.sum((a - self.a_star) ** 2, axis=1, keepdims=True)
        return q, x

    def backward(self, cache, upstream):
        x = cache
        a = x[:, self.state_dim :]
        gx = np.zeros_like(x)
        gx[:, self.state_dim :] = upstream * (-2.0 * (a - self.a_star))
        return [], gx


def test_actor_ascends_analytic_critic():
    cfg = TD3Config(hidden=(16, 16), actor_lr=5e-3)
    agent = tiny_agent(cfg, seed=20)
    a_star = np.array([0.8, -1.2, 0.3])
    agent.critic1 = AnalyticCritic(6, a_star)
    s = np.random.default_rng(21).standard_normal((16, 6))
    batch = (s, None, None, None, None)
    for _ in range(800):
        actor_update(agent, batch)
    out = agent.act_batch(s)
    err = np.max(np.linalg.norm(out - a_star, axis=1))
    assert err < 0.1


def test_flat_critic_leaves_actor_unchanged():
    agent = tiny_agent(seed=22)
    for p in agent.critic1.parameters():
        p[...] = 0.0
    before = flatten_params(agent.actor)
    batch = random_batch(np.random.default_rng(23), 8)
    actor_update(agent, batch)
    np.testing.assert_array_equal(flatten_params(agent.actor), before)


def test_actor_update_leaves_critics_untouched():
    agent = tiny_agent(seed=24)
    c1 = flatten_params(agent.critic1)
    c2 = flatten_params(agent.critic2)
    actor_update(agent, random_batch(np.random.default_rng(25), 8))
    np.testing.assert_array_equal(flatten_params(agent.critic1), c1)
    np.testing.assert_array_equal(flatten_params(agent.critic2), c2)


# ----------------------------------------------------------------------
# soft updates


def test_soft_update_extremes_and_contraction():
    rng = np.random.default_rng(26)
    agent = tiny_agent(seed=27)
    online, target = agent.critic1, agent.target_critic1
    for p in online.parameters():
        p += rng.standard_normal(p.shape)
    snapshot = flatten_params(target)
    soft_update(online, target, 0.0)
    np.testing.assert_array_equal(flatten_params(target), snapshot)
    gap0 = np.linalg.norm(flatten_params(target) - flatten_params(online))
    for k in range(1, 11):
        soft_update(online, target, 0.003)
        gap = np.linalg.norm(flatten_params(target) - flatten_params(online))
        assert gap == pytest.approx((1 - 0.003) ** k * gap0, rel=1e-9)
    soft_update(online, target, 1.0)
    np.testing.assert_allclose(flatten_params(target), flatten_params(online), atol=1e-15)


# ----------------------------------------------------------------------
# exploration noise


def test_ou_schedule_endpoints_and_monotonicity():
    cfg = TD3Config()
    ou = OUProcess(3, cfg, np.random.default_rng(28))
    assert ou.decay(0) == pytest.approx(0.105)
    sigmas = [ou.decay(z) for z in range(0, 2000, 10)]
    assert np.all(np.diff(sigmas) <= 0)
    assert sigmas[-1] == pytest.approx(0.005, abs=1e-6)


def test_ou_stationary_mean_near_zero():
    cfg = TD3Config()
    ou = OUProcess(1, cfg, np.random.default_rng(29))
    ou.decay(0)
    samples = np.array([ou.sample()[0] for _ in range(100_000)])
    # stationary variance sigma^2/(2 theta - theta^2 dt); correlated draws
    # widen the standard error by (1+rho)/(1-rho) with rho = 1-theta
    var = ou.sigma**2 / (2 * ou.theta - ou.theta**2 * ou.dt)
    se = np.sqrt(var * (2 - ou.theta) / ou.theta / samples.size)
    assert abs(samples.mean()) < 3 * se


def test_ou_reset_zeroes_state():
    ou = OUProcess(4, TD3Config(), np.random.default_rng(30))
    ou.sample()
    ou.reset()
    np.testing.assert_array_equal(ou.x, 0.0)


# ----------------------------------------------------------------------
# replay buffer


def test_buffer_overwrites_oldest():
    buf = ReplayBuffer(3, 2, 1)
    for i in range(5):
        buf.add(np.full(2, i), [i], i, np.full(2, i), False)
    assert len(buf) == 3
    stored = sorted(buf.r.ravel().tolist())
    assert stored == [2.0, 3.0, 4.0]


def test_buffer_sampling_uniform():
    buf = ReplayBuffer(1000, 1, 1)
    for i in range(1000):
        buf.add([i], [0.0], 0.0, [0.0], False)
    rng = np.random.default_rng(31)
    s, _, _, _, _ = buf.sample(rng, 20_000)
    counts, _ = np.histogram(s.ravel(), bins=10, range=(0, 1000))
    expected = 2000.0
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    # 99% critical value for 9 degrees of freedom
    assert chi2 < 21.666


# ----------------------------------------------------------------------
# training loop


def test_warmup_only_training_keeps_initial_parameters():
    env_cfg = tiny_env()
    cfg = TD3Config(hidden=(8, 8), warmup_episodes=2, batch_size=4)
    result = train(env_cfg, cfg, episodes=2, seed=5, eval_every=0)
    fresh = TD3Agent(
        env_cfg.state_dim, env_cfg.action_dim, cfg,
        np.random.default_rng(np.random.SeedSequence(5).spawn(6)[0]),
    )
    np.testing.assert_array_equal(
        flatten_params(result.agent.actor), flatten_params(fresh.actor)
    )
    np.testing.assert_array_equal(
        flatten_params(result.agent.critic1), flatten_params(fresh.critic1)
    )


def test_huge_policy_delay_blocks_actor_updates():
    env_cfg = tiny_env()
    cfg = TD3Config(hidden=(8, 8), warmup_episodes=1, batch_size=4,
                    policy_delay=10**9)
    result = train(env_cfg, cfg, episodes=3, seed=6, eval_every=0)
    fresh = TD3Agent(
        env_cfg.state_dim, env_cfg.action_dim, cfg,
        np.random.default_rng(np.random.SeedSequence(6).spawn(6)[0]),
    )
    np.testing.assert_array_equal(
        flatten_params(result.agent.actor), flatten_params(fresh.actor)
    )
    # critics did move
    assert not np.array_equal(
        flatten_params(result.agent.critic1), flatten_params(fresh.critic1)
    )


def test_training_deterministic_and_log_bytes_identical(tmp_path):
    env_cfg = tiny_env()
    cfg = TD3Config(hidden=(8, 8), warmup_episodes=1, batch_size=8)
    kw = dict(eval_every=2, eval_seeds=DEFAULT_EVAL_SEEDS[:2], clock=lambda: 0.0)
    r1 = train(env_cfg, cfg, episodes=4, seed=7, log_path=tmp_path / "a.csv", **kw)
    r2 = train(env_cfg, cfg, episodes=4, seed=7, log_path=tmp_path / "b.csv", **kw)
    np.testing.assert_array_equal(r1.rewards, r2.rewards)
    assert r1.episode_seeds == r2.episode_seeds
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == "episode,mean_step_reward,eval_crb_db,eval_min_sinr_db,sigma_ou,wall_time_s,episode_reward"


def test_training_seed_changes_trace():
    env_cfg = tiny_env()
    cfg = TD3Config(hidden=(8, 8), warmup_episodes=1, batch_size=8)
    r1 = train(env_cfg, cfg, episodes=2, seed=8, eval_every=0)
    r2 = train(env_cfg, cfg, episodes=2, seed=9, eval_every=0)
    assert not np.array_equal(r1.rewards, r2.rewards)


def test_lr_anneal_hits_floor_on_last_episode():
    env_cfg = tiny_env()
    cfg = TD3Config(hidden=(8, 8), warmup_episodes=1, batch_size=4,
                    lr_decay_floor=0.4)
    result = train(env_cfg, cfg, episodes=5, seed=13, eval_every=0)
    assert result.agent.actor_opt.lr == pytest.approx(0.4 * cfg.actor_lr)
    assert result.agent.critic1_opt.lr == pytest.approx(0.4 * cfg.critic_lr)
    assert result.agent.critic2_opt.lr == pytest.approx(0.4 * cfg.critic_lr)


def test_lr_constant_without_anneal():
    env_cfg = tiny_env()
    cfg = TD3Config(hidden=(8, 8), warmup_episodes=1, batch_size=4)
    result = train(env_cfg, cfg, episodes=3, seed=14, eval_every=0)
    assert result.agent.actor_opt.lr == cfg.actor_lr
    assert result.agent.critic1_opt.lr == cfg.critic_lr


def test_lr_decay_floor_out_of_range_rejected():
    with pytest.raises(ValueError, match="lr_decay_floor"):
        TD3Config(lr_decay_floor=0.0)
    with pytest.raises(ValueError, match="lr_decay_floor"):
        TD3Config(lr_decay_floor=1.2)


def test_evaluate_policy_deterministic_for_fixed_policy():
    env_cfg = tiny_env()
    rng = np.random.default_rng(32)
    fixed = rng.uniform(-3, 3, env_cfg.action_dim)
    ev1 = evaluate_policy(lambda s: fixed, env_cfg, [1, 2, 3])
    ev2 = evaluate_policy(lambda s: fixed, env_cfg, [1, 2, 3])
    np.testing.assert_array_equal(ev1.crb_db, ev2.crb_db)
    np.testing.assert_array_equal(ev1.mean_reward, ev2.mean_reward)
    assert ev1.seeds == (1, 2, 3)
    assert 0.0 <= ev1.feasibility_rate <= 1.0


def test_uniform_random_policy_bounds():
    policy = uniform_random_policy(10, 3.0, np.random.default_rng(33))
    draws = np.array([policy(None) for _ in range(100)])
    assert np.all(np.abs(draws) <= 3.0)
    assert draws.std() > 0


def test_agent_checkpoint_roundtrip(tmp_path):
    env_cfg = tiny_env()
    cfg = TD3Config(hidden=(8, 8), warmup_episodes=0, batch_size=4)
    result = train(env_cfg, cfg, episodes=1, seed=10, eval_every=0)
    path = tmp_path / "agent.npz"
    result.agent.save(path, extra={"episodes": 1})
    loaded, _, extra = TD3Agent.load(path)
    assert extra["episodes"] == 1
    assert loaded.cfg == cfg
    x = np.random.default_rng(34).standard_normal(env_cfg.state_dim)
    np.testing.assert_array_equal(loaded.act(x), result.agent.act(x))
    assert loaded.critic1_opt.t == result.agent.critic1_opt.t


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_error_reports_location():
    env_cfg = tiny_env()
    cfg = TD3Config(hidden=(8, 8), warmup_episodes=0, batch_size=2,
                    critic_lr=np.inf)  # guaranteed blow-up
    with pytest.raises(DivergenceError, match="episode 0"):
        train(env_cfg, cfg, episodes=1, seed=11, eval_every=0)


def test_write_training_log_empty_eval_cells(tmp_path):
    env_cfg = tiny_env()
    cfg = TD3Config(hidden=(8, 8), warmup_episodes=1, batch_size=8)
    result = train(env_cfg, cfg, episodes=3, seed=12, eval_every=2,
                   eval_seeds=[1], clock=lambda: 0.0)
    path = tmp_path / "log.csv"
    write_training_log(path, result.logs)
    lines = path.read_text().splitlines()
    # episode 0 (row 1) has no eval; episode 1 (row 2) does
    assert lines[1].split(",")[2] == ""
    assert lines[2].split(",")[2] != ""
