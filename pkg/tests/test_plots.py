"""Figure rendering on synthetic inputs: each plot function writes a
nonempty PNG and tolerates strategies without a registered style."""

import numpy as np

from crx_isac.env import TRACE_COLUMNS, decode_action, reset, \
    reward_components, trace_row
from crx_isac.harness import desk_profile, env_config
from crx_isac.plots import (
    plot_episode_trace,
    plot_region_sweep,
    plot_snr_sweep,
    plot_training_curve,
)
from crx_isac.td3 import EpisodeLog


def synthetic_logs(n=40):
    rng = np.random.default_rng(0)
    logs = []
    for ep in range(n):
        log = EpisodeLog(
            episode=ep,
            mean_step_reward=float(0.1 + 0.01 * ep + rng.normal(0, 0.02)),
            episode_reward=float(4.0 + 0.4 * ep),
            sigma_ou=float(0.1 * np.exp(-0.006 * ep)),
            wall_time_s=0.05 * ep,
        )
        if ep % 10 == 0:
            log.eval_crb_db = float(-30.0 - 0.2 * ep)
            log.eval_min_sinr_db = -12.0
            log.eval_reward = 0.2
        logs.append(log)
    return logs


def test_training_curve_png(tmp_path):
    path = tmp_path / "curve.png"
    out = plot_training_curve(synthetic_logs(), str(path), title="demo")
    assert out == str(path)
    assert path.stat().st_size > 1000


def test_short_run_skips_smoothing(tmp_path):
    path = tmp_path / "short.png"
    plot_training_curve(synthetic_logs(5), str(path))
    assert path.stat().st_size > 1000


def sweep_rows(x_key, grid):
    rows = []
    for tag in ("FPA_RBF", "CR_MA_TD3", "NOVEL_TAG"):
        for x in grid:
            for seed in (0, 1):
                rows.append({"strategy": tag, x_key: x, "seed": seed,
                             "crb_db": -30.0 - x - seed})
    return rows


def test_snr_sweep_png(tmp_path):
    path = tmp_path / "snr.png"
    plot_snr_sweep(sweep_rows("snr_db", (0.0, 10.0, 20.0)), str(path))
    assert path.stat().st_size > 1000


def test_region_sweep_png(tmp_path):
    path = tmp_path / "region.png"
    plot_region_sweep(sweep_rows("region_lambda", (4.0, 8.0)), str(path))
    assert path.stat().st_size > 1000


def test_episode_trace_png(tmp_path):
    cfg = env_config(desk_profile(n_elements=4))
    state, scenario = reset(0, cfg)
    rng = np.random.default_rng(1)
    rows = []
    for t in range(6):
        F, p = decode_action(rng.uniform(-1, 1, cfg.action_dim), cfg)
        comps = reward_components(F, p, scenario, cfg)
        rows.append(dict(zip(TRACE_COLUMNS, trace_row(t, comps))))
    path = tmp_path / "trace.png"
    plot_episode_trace(rows, str(path))
    assert path.stat().st_size > 1000
