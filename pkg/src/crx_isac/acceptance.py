"""Eleven numbered acceptance checks, each returning (name, passed, detail).

Checks 1-7 and 11 are oracle or plumbing checks that finish in seconds and
back the `verify` subcommand's default mode. Checks 8-10 train desk-scale
agents and take minutes; `verify --full` and the slow-marked tests run them.
Every check is self-contained: it builds its own inputs and, where it
validates a closed form, recomputes the target through an independent route
(numerical inversion, finite differences, per-symbol simulation, or brute
re-evaluation).
"""

import os
import tempfile
import time
from filecmp import cmp as files_equal

import numpy as np

from .array import ArrayConfig, steering_derivative, steering_vector
from .channel import (
    CrosstalkParams,
    coupling_matrix,
    effective_sensing_channel,
    sample_scenario,
    user_channel,
)
from .env import EnvConfig, decode_action
from .errors import ConstraintViolation
from .harness import (
    desk_profile,
    env_config,
    eval_seeds_for,
    parallel_map,
    run_strategy,
    snr_sweep,
    write_rows_csv,
    SWEEP_SNR_COLUMNS,
)
from .metrics import crb_theta, fisher_matrix, simulate_sinr, sinr
from .nn import DenseNetwork
from .td3 import evaluate_policy, train, uniform_random_policy

LAM = 0.01


def _random_positions(rng, n, p_max=0.2):
    cfg = ArrayConfig(n_elements=n, wavelength=LAM, p_min=0.0, p_max=p_max,
                      d0=LAM / 2)
    raw = rng.random(n)
    delta = raw / raw.sum() * rng.random() * cfg.delta_max
    return cfg.p_min + np.arange(n) * cfg.d0 + np.cumsum(delta)


def _random_precoder(rng, n, m, p_sum=0.01):
    F = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
    return F * np.sqrt(p_sum / np.sum(np.abs(F) ** 2))


# ----------------------------------------------------------------------


def criterion_01_crb_fim_equivalence():
    """Closed-form CRB vs numerically inverted 3x3 Fisher matrix."""
    rng = np.random.default_rng(101)
    worst = 0.0
    for i in range(100):
        n = (4, 8, 16)[i % 3]
        k = (1, 2, 4)[(i // 3) % 3]
        p = _random_positions(rng, n)
        C = coupling_matrix(p, CrosstalkParams())
        F = _random_precoder(rng, n, k + n)
        theta = rng.uniform(0.2, np.pi - 0.2)
        alpha = complex(rng.normal(), rng.normal())
        g, g_dot = effective_sensing_channel(p, C, theta, LAM)
        M = fisher_matrix(g, g_dot, F, alpha, 1e-3, 128)
        direct = crb_theta(g, g_dot, F, alpha, 1e-3, 128)
        inverted = np.linalg.inv(M)[0, 0]
        worst = max(worst, abs(direct - inverted) / inverted)
    return "CRB equals inverted-FIM (1,1) entry", worst < 1e-8, (
        f"max rel err {worst:.2e} over 100 instances (tol 1e-8)")


def criterion_02_likelihood_fd_fim():
    """Fisher matrix vs finite differences of the observation mean."""
    rng = np.random.default_rng(102)
    h = 1e-6
    worst = 0.0
    for _ in range(20):
        n, k, L = 8, 3, 16
        p = _random_positions(rng, n)
        C = coupling_matrix(p, CrosstalkParams())
        F = _random_precoder(rng, n, k + n)
        theta = rng.uniform(0.3, np.pi - 0.3)
        alpha = complex(rng.normal(), rng.normal())
        sigma2 = 1e-3
        S = np.sqrt(L) * (np.fft.fft(np.eye(L)) / np.sqrt(L))[: k + n, :]

        def ybar(th, a, b):
            g = effective_sensing_channel(p, C, th, LAM)[0]
            return np.conj(complex(a, b)) * (S.conj().T @ (F.conj().T @ g))

        a0, b0 = alpha.real, alpha.imag
        d = [
            (ybar(theta + h, a0, b0) - ybar(theta - h, a0, b0)) / (2 * h),
            (ybar(theta, a0 + h, b0) - ybar(theta, a0 - h, b0)) / (2 * h),
            (ybar(theta, a0, b0 + h) - ybar(theta, a0, b0 - h)) / (2 * h),
        ]
        M_fd = np.empty((3, 3))
        for i in range(3):
            for j in range(3):
                M_fd[i, j] = (2.0 / sigma2) * np.real(d[i].conj() @ d[j])
        g, g_dot = effective_sensing_channel(p, C, theta, LAM)
        M = fisher_matrix(g, g_dot, F, alpha, sigma2, L)
        scale = np.max(np.abs(M))
        worst = max(worst, float(np.max(np.abs(M_fd - M)) / scale))
    return "FIM matches likelihood finite differences", worst < 1e-4, (
        f"max entrywise rel err {worst:.2e} over 20 instances (tol 1e-4)")


def criterion_03_derivative_oracles():
    """Steering derivative and composed coupled derivative vs central FD."""
    rng = np.random.default_rng(103)
    h = 1e-7
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(4, 17))
        p = _random_positions(rng, n)
        theta = rng.uniform(0.2, np.pi - 0.2)
        da = steering_derivative(p, theta, LAM)
        fd = (steering_vector(p, theta + h, LAM)
              - steering_vector(p, theta - h, LAM)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(da - fd)) / np.max(np.abs(da))))
        C = coupling_matrix(p, CrosstalkParams())
        _, g_dot = effective_sensing_channel(p, C, theta, LAM)
        fd_g = (effective_sensing_channel(p, C, theta + h, LAM)[0]
                - effective_sensing_channel(p, C, theta - h, LAM)[0]) / (2 * h)
        worst = max(worst, float(np.max(np.abs(g_dot - fd_g)) / np.max(np.abs(g_dot))))
    return "angle derivatives match finite differences", worst < 1e-5, (
        f"max rel err {worst:.2e} over 100 pairs (tol 1e-5)")


def criterion_04_sinr_monte_carlo():
    """Closed-form SINR vs per-symbol simulation."""
    rng = np.random.default_rng(104)
    worst = 0.0
    for i in range(10):
        n, k_users = 8, 3
        p = _random_positions(rng, n)
        C = coupling_matrix(p, CrosstalkParams())
        sc = sample_scenario(rng, n_users=k_users, n_paths=3)
        F = _random_precoder(rng, n, k_users + n)
        k = i % k_users
        hk = user_channel(p, sc.users[k], LAM)
        closed = sinr(hk, C, F, k, 1e-3)
        mc = simulate_sinr(hk, C, F, k, 1e-3, np.random.default_rng(4000 + i),
                           n_symbols=100_000)
        worst = max(worst, abs(mc - closed) / closed)
    return "SINR matches symbol-level Monte Carlo", worst < 0.015, (
        f"max rel err {worst:.2%} over 10 instances at 1e5 symbols (tol 1.5%)")


def criterion_05_feasibility_by_construction():
    """Random raw actions always decode to feasible precoders/positions."""
    cfg = EnvConfig(
        array=ArrayConfig(n_elements=16, wavelength=LAM, p_min=0.0,
                          p_max=0.15, d0=LAM / 2),
        crosstalk=CrosstalkParams(),
    )
    rng = np.random.default_rng(105)
    violations = 0
    worst_power = 0.0
    for _ in range(10_000):
        raw = rng.uniform(-3.0, 3.0, cfg.action_dim)
        try:
            F, p = decode_action(raw, cfg)
        except ConstraintViolation:
            violations += 1
            continue
        power_err = abs(np.sum(np.abs(F.F) ** 2) - cfg.p_sum)
        worst_power = max(worst_power, power_err)
        if (p[0] < cfg.array.p_min - 1e-12 or p[-1] > cfg.array.p_max + 1e-12
                or np.min(np.diff(p)) < cfg.array.d0 - 1e-12):
            violations += 1
    ok = violations == 0 and worst_power < 1e-9
    return "random actions decode feasibly", ok, (
        f"{violations} violations in 1e4 draws, max power err {worst_power:.2e} "
        "(tol 1e-9)")


def criterion_06_snr_linearity():
    """CRB dB vs SNR dB has slope exactly -1 for frozen F and p."""
    rng = np.random.default_rng(106)
    p = _random_positions(rng, 8)
    C = coupling_matrix(p, CrosstalkParams())
    F = _random_precoder(rng, 8, 10)
    g, g_dot = effective_sensing_channel(p, C, np.deg2rad(60.0), LAM)
    p_sum = 0.01
    snrs = np.arange(0.0, 21.0, 4.0)
    crbs = []
    for s in snrs:
        n0 = p_sum / 10 ** (s / 10.0)
        crbs.append(10 * np.log10(crb_theta(g, g_dot, F, 0.4, n0, 128)))
    slopes = np.diff(crbs) / np.diff(snrs)
    worst = float(np.max(np.abs(slopes + 1.0)))
    return "CRB dB slope is -1 per SNR dB", worst < 1e-9, (
        f"max |slope+1| = {worst:.2e} across 0-20 dB (tol 1e-9)")


def criterion_07_network_gradients():
    """Manual backprop vs finite differences for every activation tag."""
    rng = np.random.default_rng(107)
    worst = 0.0
    for hidden_act in ("relu", "tanh"):
        net = DenseNetwork(
            [5, 12, 10],
            hidden=hidden_act,
            terminal=[(3, "tanh"), (4, "softmax-segment"), (2, "sigmoid"),
                      (1, "identity")],
            rng=rng,
        )
        x = rng.standard_normal(5)
        t = rng.standard_normal(10)
        y, cache = net.forward_cache(x)
        grads, _ = net.backward(cache, y - t)
        params = net.parameters()
        h = 1e-6
        for arr, g_arr in zip(params, grads):
            flat, g_flat = arr.ravel(), np.asarray(g_arr).ravel()
            picks = rng.choice(flat.size, size=min(12, flat.size), replace=False)
            for i in picks:
                orig = flat[i]
                flat[i] = orig + h
                lp = 0.5 * np.sum((net.forward(x) - t) ** 2)
                flat[i] = orig - h
                lm = 0.5 * np.sum((net.forward(x) - t) ** 2)
                flat[i] = orig
                fd = (lp - lm) / (2 * h)
                ref = max(abs(fd), abs(g_flat[i]), 1e-8)
                worst = max(worst, abs(fd - g_flat[i]) / ref)
    return "network gradients match finite differences", worst < 1e-4, (
        f"max rel err {worst:.2e} across all activation tags (tol 1e-4)")


# ----------------------------------------------------------------------
# training-based checks (slow)


def _learning_task(seed):
    cfg = desk_profile()
    eval_seeds = eval_seeds_for(cfg)
    res = run_strategy("CR_MA_TD3", cfg, seed, eval_seeds=eval_seeds)
    finals = [log.eval_reward for log in res.train_result.logs
              if log.eval_reward is not None
              and log.episode >= cfg.episodes - 20]
    ecfg = env_config(cfg)
    rng = np.random.default_rng(seed)
    rand = evaluate_policy(
        uniform_random_policy(ecfg.action_dim, cfg.logit_bound, rng),
        ecfg, eval_seeds)
    return seed, float(np.mean(finals)), float(np.mean(rand.mean_reward))


def criterion_08_learning_signal():
    """Trained desk agent at least doubles the uniform-random reward."""
    rows = parallel_map(_learning_task, (0, 1, 2))
    ratios = {s: trained / rand for s, trained, rand in rows}
    ok = all(r >= 2.0 for r in ratios.values())
    detail = ", ".join(f"seed {s}: {r:.2f}x" for s, r in ratios.items())
    return "trained agent doubles the random-policy reward", ok, (
        detail + " (need >= 2x on every seed)")


def _ordering_task(seed):
    cfg = desk_profile()
    eval_seeds = eval_seeds_for(cfg)
    crbs = {}
    for tag in ("FPA_RBF", "FPA_TD3", "MA_TD3", "CR_MA_TD3"):
        crbs[tag] = run_strategy(tag, cfg, seed,
                                 eval_seeds=eval_seeds).eval.mean_crb_db
    return seed, crbs


def criterion_09_strategy_ordering():
    """CR_MA_TD3 <= MA_TD3 <= FPA_TD3 <= FPA_RBF on >= 8 of 10 seeds."""
    results = parallel_map(_ordering_task, range(10))
    holds = 0
    for _, c in results:
        if (c["CR_MA_TD3"] <= c["MA_TD3"] <= c["FPA_TD3"] <= c["FPA_RBF"]):
            holds += 1
    return "strategy CRB ordering holds", holds >= 8, (
        f"full chain on {holds}/10 seeds (need >= 8)")


def _region_task(args):
    seed, region_lambda = args
    cfg = desk_profile()
    p_max = cfg.p_min + region_lambda * cfg.wavelength
    res = run_strategy("CR_MA_TD3", cfg, seed,
                       eval_seeds=eval_seeds_for(cfg), p_max=p_max)
    return region_lambda, res.eval.mean_crb_db


def criterion_10_region_monotonicity():
    """Mean CRB dB nonincreasing over the aperture grid (<= 1 inversion)."""
    cfg = desk_profile()
    grid = cfg.region_grid_lambda
    tasks = [(seed, r) for r in grid for seed in (0, 1, 2)]
    results = parallel_map(_region_task, tasks)
    means = []
    for r in grid:
        vals = [crb for rl, crb in results if rl == r]
        means.append(float(np.mean(vals)))
    inversions = sum(1 for a, b in zip(means, means[1:]) if b > a)
    detail = " -> ".join(f"{r:g}lam {m:.1f}dB" for r, m in zip(grid, means))
    return "CRB improves with aperture", inversions <= 1, (
        f"{detail}; {inversions} adjacent inversion(s) (allow <= 1)")


def criterion_11_determinism():
    """Same config + seed give byte-identical training-log and sweep CSVs."""
    micro = desk_profile(
        episodes=6, steps_per_episode=6, warmup_episodes=2, batch_size=8,
        hidden=(8, 8), n_eval_scenarios=2, rbf_draws=40,
        snr_grid_db=(0.0, 10.0), seeds=(0,), eval_every=3,
    )
    ecfg = env_config(micro)
    tcfg_kwargs = dict(
        episodes=micro.episodes, seed=0, eval_every=micro.eval_every,
        eval_seeds=eval_seeds_for(micro), clock=lambda: 0.0,
    )
    from .harness import td3_config

    with tempfile.TemporaryDirectory() as tmp:
        log_a = os.path.join(tmp, "a.csv")
        log_b = os.path.join(tmp, "b.csv")
        train(ecfg, td3_config(micro), log_path=log_a, **tcfg_kwargs)
        train(ecfg, td3_config(micro), log_path=log_b, **tcfg_kwargs)
        logs_same = files_equal(log_a, log_b, shallow=False)
        sweep_a = os.path.join(tmp, "sa.csv")
        sweep_b = os.path.join(tmp, "sb.csv")
        write_rows_csv(sweep_a, SWEEP_SNR_COLUMNS, snr_sweep(micro), micro)
        write_rows_csv(sweep_b, SWEEP_SNR_COLUMNS, snr_sweep(micro), micro)
        sweeps_same = files_equal(sweep_a, sweep_b, shallow=False)
    ok = logs_same and sweeps_same
    return "identical config and seed give identical CSVs", ok, (
        f"training logs identical: {logs_same} (fixed clock), "
        f"sweep CSVs identical: {sweeps_same}")


FAST_CRITERIA = (
    (1, criterion_01_crb_fim_equivalence, 5.0),
    (2, criterion_02_likelihood_fd_fim, 30.0),
    (3, criterion_03_derivative_oracles, 2.0),
    (4, criterion_04_sinr_monte_carlo, 60.0),
    (5, criterion_05_feasibility_by_construction, 5.0),
    (6, criterion_06_snr_linearity, None),
    (7, criterion_07_network_gradients, 10.0),
    (11, criterion_11_determinism, None),
)

SLOW_CRITERIA = (
    (8, criterion_08_learning_signal, None),
    (9, criterion_09_strategy_ordering, None),
    (10, criterion_10_region_monotonicity, None),
)


def run_one(number, fn, budget=None):
    """Execute one criterion, enforce its runtime budget, print one line."""
    t0 = time.perf_counter()
    name, ok, detail = fn()
    elapsed = time.perf_counter() - t0
    if budget is not None and elapsed > budget:
        ok = False
        detail += f"; runtime {elapsed:.1f}s exceeded budget {budget:.0f}s"
    line = (f"criterion {number:02d} {'PASS' if ok else 'FAIL'}  "
            f"{name}  [{detail}] ({elapsed:.1f}s)")
    print(line)
    return name, ok, detail


def run_criteria(full=False):
    """Run the fast checks, plus the training checks when full=True."""
    chosen = FAST_CRITERIA + (SLOW_CRITERIA if full else ())
    results = [run_one(num, fn, budget) for num, fn, budget in
               sorted(chosen, key=lambda t: t[0])]
    n_pass = sum(1 for _, ok, _ in results if ok)
    print(f"{n_pass}/{len(results)} criteria passed"
          + ("" if full else " (training criteria skipped; use --full)"))
    return results
