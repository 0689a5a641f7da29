"""Matplotlib renderings of training logs and sweep tables.

Every function takes rows/records already in memory, draws one figure, and
writes it to a file, returning the path. The Agg backend is forced so the
plots render identically headless.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

STRATEGY_STYLE = {
    "FPA_RBF": dict(color="tab:gray", marker="s"),
    "FPA_TD3": dict(color="tab:green", marker="^"),
    "MA_TD3": dict(color="tab:orange", marker="o"),
    "CR_MA_TD3": dict(color="tab:blue", marker="d"),
}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_training_curve(logs, path, *, title="TD3 training"):
    """Per-episode reward plus the periodic greedy-evaluation CRB."""
    episodes = [log.episode for log in logs]
    rewards = [log.mean_step_reward for log in logs]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(episodes, rewards, lw=0.8, color="tab:blue")
    if len(rewards) >= 20:
        kernel = np.ones(20) / 20.0
        smooth = np.convolve(rewards, kernel, mode="valid")
        ax1.plot(episodes[19:], smooth, lw=2.0, color="tab:red",
                 label="20-episode mean")
        ax1.legend()
    ax1.set_xlabel("episode")
    ax1.set_ylabel("mean step reward")
    ax1.set_title(title)
    ev = [(log.episode, log.eval_crb_db) for log in logs
          if log.eval_crb_db is not None]
    if ev:
        ax2.plot(*zip(*ev), marker="o", ms=3, color="tab:blue")
    ax2.set_xlabel("episode")
    ax2.set_ylabel("evaluated CRB (dB)")
    ax2.set_title("greedy evaluation")
    return _finish(fig, path)


def _sweep_axes(rows, x_key):
    """Group sweep rows into strategy -> (x grid, seed-mean y) arrays."""
    out = {}
    for tag in sorted({r["strategy"] for r in rows}):
        xs = sorted({r[x_key] for r in rows if r["strategy"] == tag})
        means = [
            np.mean([r["crb_db"] for r in rows
                     if r["strategy"] == tag and r[x_key] == x])
            for x in xs
        ]
        out[tag] = (np.array(xs, dtype=float), np.array(means))
    return out


def plot_snr_sweep(rows, path):
    """Seed-averaged CRB (dB) versus SNR for every strategy present."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for tag, (xs, ys) in _sweep_axes(rows, "snr_db").items():
        ax.plot(xs, ys, label=tag, **STRATEGY_STYLE.get(tag, {}))
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("mean CRB (dB)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)


def plot_region_sweep(rows, path):
    """Seed-averaged CRB (dB) versus aperture size in wavelengths."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for tag, (xs, ys) in _sweep_axes(rows, "region_lambda").items():
        ax.plot(xs, ys, label=tag, **STRATEGY_STYLE.get(tag, {}))
    ax.set_xlabel("movement region (wavelengths)")
    ax.set_ylabel("mean CRB (dB)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)


def plot_episode_trace(rows, path):
    """Reward and CRB across one episode's steps (trace_row dictionaries)."""
    steps = [r["step index"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(steps, [r["reward"] for r in rows], color="tab:blue")
    ax1.set_xlabel("step")
    ax1.set_ylabel("reward")
    ax2.plot(steps, [r["CRB in dB"] for r in rows], color="tab:orange")
    ax2.set_xlabel("step")
    ax2.set_ylabel("CRB (dB)")
    return _finish(fig, path)
