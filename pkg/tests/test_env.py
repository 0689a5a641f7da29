"""Environment tests: feasibility-by-construction of the action decoding,
reward algebra against the closed-form CRB, episode stepping, and the trace
export format."""

import numpy as np
import pytest

from crx_isac.array import ArrayConfig, check_positions
from crx_isac.channel import CrosstalkParams, coupling_matrix, effective_sensing_channel
from crx_isac.env import (
    EnvConfig,
    TRACE_COLUMNS,
    decode_action,
    reset,
    reward,
    reward_components,
    state_from_scenario,
    step,
    trace_row,
    write_episode_trace,
)
from crx_isac.errors import EpisodeFinished
from crx_isac.metrics import crb_theta

ARR8 = ArrayConfig(n_elements=8, wavelength=0.01, p_min=0.0, p_max=0.08, d0=0.005)


def make_cfg(**kw):
    kw.setdefault("array", ARR8)
    kw.setdefault("n_users", 2)
    kw.setdefault("n_paths", 2)
    return EnvConfig(**kw)


# ----------------------------------------------------------------------
# action decoding


def test_zero_logits_decode_symmetric():
    cfg = make_cfg()
    F, p = decode_action(np.zeros(cfg.action_dim), cfg)
    m, n = cfg.n_streams, cfg.array.n_elements
    np.testing.assert_allclose(
        F.F, np.full((n, m), np.sqrt(cfg.p_sum / (m * n))), atol=1e-15
    )
    delta = np.diff(p) - cfg.array.d0
    np.testing.assert_allclose(delta, cfg.array.delta_max / (2 * n), rtol=1e-12)


def test_saturated_power_logit_takes_whole_budget():
    cfg = make_cfg()
    raw = np.zeros(cfg.action_dim)
    n, m = cfg.array.n_elements, cfg.n_streams
    raw[n * m] = 40.0  # first power logit
    F, _ = decode_action(raw, cfg)
    col_power = np.sum(np.abs(F.F) ** 2, axis=0)
    assert col_power[0] > 0.999 * cfg.p_sum
    assert col_power[1:].sum() < 1e-3 * cfg.p_sum


def test_random_actions_always_feasible():
    cfg = make_cfg()
    rng = np.random.default_rng(0)
    n, m = cfg.array.n_elements, cfg.n_streams
    for _ in range(1000):
        raw = rng.normal(scale=3.0, size=cfg.action_dim)
        F, p = decode_action(raw, cfg)
        # power budget met with equality
        assert np.sum(np.abs(F.F) ** 2) == pytest.approx(cfg.p_sum, rel=1e-12)
        # constant modulus within each column
        mags = np.abs(F.F)
        np.testing.assert_allclose(mags, np.broadcast_to(mags[0], mags.shape), rtol=1e-12)
        # geometry feasible
        check_positions(p, cfg.array)
        assert np.all(np.diff(p) >= cfg.array.d0 - 1e-12)
        assert p[0] >= cfg.array.p_min - 1e-12 and p[-1] <= cfg.array.p_max + 1e-12


def test_decode_rejects_wrong_length():
    cfg = make_cfg()
    with pytest.raises(ValueError):
        decode_action(np.zeros(cfg.action_dim + 1), cfg)


# ----------------------------------------------------------------------
# reward


def test_reward_equals_core_when_thresholds_met():
    cfg = make_cfg(gamma_k=1e-12)
    _, scenario = reset(1, cfg)
    rng = np.random.default_rng(2)
    F, p = decode_action(rng.normal(size=cfg.action_dim), cfg)
    comps = reward_components(F, p, scenario, cfg)
    assert comps.penalty == 0.0
    assert comps.reward == comps.core


def test_penalty_nonpositive_and_zero_iff_met():
    cfg = make_cfg(gamma_k=1e6)  # unreachable threshold
    _, scenario = reset(3, cfg)
    rng = np.random.default_rng(4)
    F, p = decode_action(rng.normal(size=cfg.action_dim), cfg)
    comps = reward_components(F, p, scenario, cfg)
    assert comps.penalty < 0.0
    assert np.all(comps.sinrs < cfg.gamma_lin)


def test_reward_core_consistent_with_crb():
    cfg = make_cfg()
    _, scenario = reset(5, cfg)
    rng = np.random.default_rng(6)
    for _ in range(10):
        F, p = decode_action(rng.normal(size=cfg.action_dim), cfg)
        comps = reward_components(F, p, scenario, cfg)
        C = coupling_matrix(p, cfg.crosstalk)
        g, g_dot = effective_sensing_channel(p, C, scenario.theta_s, cfg.array.wavelength)
        crb = crb_theta(g, g_dot, F, scenario.alpha_s, scenario.sigma2_n, scenario.n_samples)
        expected_core = scenario.sigma2_n / (
            2 * scenario.n_samples * abs(scenario.alpha_s) ** 2 * crb
        )
        assert abs(comps.core - expected_core) / expected_core < 1e-10
        assert comps.crb == pytest.approx(crb, rel=1e-10)


def test_reward_orders_inversely_to_crb():
    cfg = make_cfg(gamma_k=1e-12)  # zero penalty everywhere
    _, scenario = reset(7, cfg)
    rng = np.random.default_rng(8)
    prev = None
    for _ in range(20):
        F, p = decode_action(rng.normal(size=cfg.action_dim), cfg)
        comps = reward_components(F, p, scenario, cfg)
        if prev is not None:
            assert (comps.reward > prev.reward) == (comps.crb < prev.crb)
        prev = comps


def test_disabled_crosstalk_reward_uses_identity_coupling():
    cfg_on = make_cfg()
    cfg_off = make_cfg(crosstalk=CrosstalkParams(enabled=False))
    _, scenario = reset(9, cfg_on)
    rng = np.random.default_rng(10)
    F, p = decode_action(rng.normal(size=cfg_on.action_dim), cfg_on)
    assert reward(F, p, scenario, cfg_on) != reward(F, p, scenario, cfg_off)


# ----------------------------------------------------------------------
# episode protocol


def test_reset_deterministic_and_seed_sensitive():
    cfg = make_cfg()
    s1, sc1 = reset(42, cfg)
    s2, sc2 = reset(42, cfg)
    np.testing.assert_array_equal(s1.vector(), s2.vector())
    for ua, ub in zip(sc1.users, sc2.users):
        np.testing.assert_array_equal(ua.gains, ub.gains)
    s3, sc3 = reset(43, cfg)
    assert np.any(sc3.users[0].gains != sc1.users[0].gains)


def test_state_dimensions():
    arr16 = ArrayConfig(n_elements=16, wavelength=0.01, p_min=0.0, p_max=0.15, d0=0.005)
    cfg = EnvConfig(array=arr16, n_users=4, n_paths=3)
    assert cfg.action_dim == 16 * 20 + 20 + 16  # 356
    assert cfg.state_dim == 36 + 356  # 392
    state, _ = reset(0, cfg)
    assert state.dim == cfg.state_dim
    assert state.vector().shape == (392,)
    np.testing.assert_array_equal(state.prev_action, 0.0)


def test_step_pure_and_done_flag():
    cfg = make_cfg(steps_per_episode=3)
    state, scenario = reset(11, cfg)
    raw = np.random.default_rng(12).normal(size=cfg.action_dim)
    n1, r1, d1 = step(state, raw, scenario, cfg, 0)
    n2, r2, d2 = step(state, raw, scenario, cfg, 0)
    assert r1 == r2 and d1 == d2 is False
    np.testing.assert_array_equal(n1.vector(), n2.vector())
    np.testing.assert_array_equal(n1.prev_action, raw)
    _, _, done = step(n1, raw, scenario, cfg, 2)
    assert done is True


def test_same_action_same_reward_within_episode():
    cfg = make_cfg(steps_per_episode=5)
    state, scenario = reset(13, cfg)
    raw = np.random.default_rng(14).normal(size=cfg.action_dim)
    _, r1, _ = step(state, raw, scenario, cfg, 0)
    nxt, _, _ = step(state, raw, scenario, cfg, 0)
    _, r2, _ = step(nxt, raw, scenario, cfg, 1)
    assert r1 == r2


def test_step_past_horizon_raises():
    cfg = make_cfg(steps_per_episode=2)
    state, scenario = reset(15, cfg)
    raw = np.zeros(cfg.action_dim)
    with pytest.raises(EpisodeFinished):
        step(state, raw, scenario, cfg, 2)


# ----------------------------------------------------------------------
# trace export


def test_episode_trace_format(tmp_path):
    cfg = make_cfg(steps_per_episode=4)
    state, scenario = reset(16, cfg)
    rng = np.random.default_rng(17)
    rows = []
    for t in range(cfg.steps_per_episode):
        raw = rng.normal(size=cfg.action_dim)
        F, p = decode_action(raw, cfg)
        comps = reward_components(F, p, scenario, cfg)
        rows.append(trace_row(t, comps))
        state, _, _ = step(state, raw, scenario, cfg, t)
    path = tmp_path / "trace.csv"
    write_episode_trace(path, rows)
    text = path.read_text().splitlines()
    assert text[0] == "step index,reward,penalty,CRB in dB,per-user SINR in dB"
    assert len(text) == 5
    first = text[1].split(",")
    assert first[0] == "0"
    assert len(first[4].split(";")) == cfg.n_users
    # identical rows give identical bytes
    path2 = tmp_path / "trace2.csv"
    write_episode_trace(path2, rows)
    assert path.read_bytes() == path2.read_bytes()


def test_state_from_scenario_layout():
    cfg = make_cfg()
    _, scenario = reset(18, cfg)
    state = state_from_scenario(scenario, cfg)
    gains = np.concatenate([u.gains for u in scenario.users])
    np.testing.assert_array_equal(state.rho_re, gains.real)
    np.testing.assert_array_equal(state.rho_im, gains.imag)
