"""Markov decision process for joint precoder and antenna-position design.

The agent emits one flat real vector of logits per step, partitioned as

    [phase logits: N*(K+N) | power logits: K+N | displacement logits: N].

Decoding maps logits to a feasible precoder and feasible positions with no
projection step: phases through pi*tanh, per-column power fractions through
softmax (so the transmit power meets the budget with equality), and
displacements through a sigmoid/softmax composition whose sum never exceeds
the displacement budget. The reward is the Schur-complement core of the
angle Fisher information plus a nonpositive SINR shortfall penalty; larger
reward means smaller CRB on the same scenario.

The channel scenario is frozen within an episode and resampled at reset;
the state exposes the user-channel parameters and the previous action.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .array import ArrayConfig, displacements_to_positions, uniform_positions
from .channel import (
    CrosstalkParams,
    Scenario,
    coupling_matrix,
    effective_sensing_channel,
    sample_scenario,
    user_channel,
)
from .errors import EpisodeFinished
from .metrics import Precoder, sinr
from .nn import sigmoid, softmax

TRACE_COLUMNS = ("step index", "reward", "penalty", "CRB in dB", "per-user SINR in dB")


@dataclass(frozen=True)
class EnvConfig:
    """Environment parameters: geometry, channel statistics, constraints.

    gamma_k holds the per-user SINR thresholds on a linear scale (scalar
    broadcasts to all users). The crosstalk parameters here define the
    coupling the environment applies when computing rewards; a scheme that
    ignores crosstalk during training simply runs with enabled=False and is
    judged later under a truthful configuration.
    """

    array: ArrayConfig
    crosstalk: CrosstalkParams = field(default_factory=CrosstalkParams)
    n_users: int = 4
    n_paths: int = 3
    gamma_k: float | np.ndarray = 10 ** 0.5  # 5 dB
    p_sum: float = 0.01  # 10 dBm
    upsilon: float = 0.1
    steps_per_episode: int = 100
    theta_s: float = np.deg2rad(60.0)
    alpha_s: complex = 0.4 + 0.0j
    sigma2_s: float = 1e-3
    sigma2_c: float = 0.0
    sigma2_k: float = 1e-3
    n_samples: int = 128
    # With frozen positions the displacement logits are inert and the array
    # stays at the minimum-spacing grid (the fixed-antenna baselines).
    freeze_positions: bool = False

    def __post_init__(self):
        if self.steps_per_episode < 1:
            raise ValueError("steps_per_episode must be >= 1")
        if self.upsilon < 0:
            raise ValueError("upsilon must be >= 0")
        if self.n_users < 1 or self.n_paths < 1:
            raise ValueError("need at least one user and one path")

    @property
    def n_streams(self) -> int:
        """Total precoder columns: K communication + N sensing."""
        return self.n_users + self.array.n_elements

    @property
    def action_dim(self) -> int:
        n = self.array.n_elements
        return n * self.n_streams + self.n_streams + n

    @property
    def state_dim(self) -> int:
        return 3 * self.n_users * self.n_paths + self.action_dim

    @property
    def gamma_lin(self) -> np.ndarray:
        return np.broadcast_to(
            np.asarray(self.gamma_k, dtype=float), (self.n_users,)
        ).copy()


@dataclass(frozen=True)
class EnvState:
    """Observed state: channel gains (re/im), departure angles, previous action."""

    rho_re: np.ndarray
    rho_im: np.ndarray
    theta_flat: np.ndarray
    prev_action: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate(
            [self.rho_re, self.rho_im, self.theta_flat, self.prev_action]
        )

    @property
    def dim(self) -> int:
        return (
            self.rho_re.size + self.rho_im.size + self.theta_flat.size
            + self.prev_action.size
        )


def state_from_scenario(scenario: Scenario, cfg: EnvConfig, prev_action=None) -> EnvState:
    gains = np.concatenate([u.gains for u in scenario.users])
    angles = np.concatenate([u.angles for u in scenario.users])
    if prev_action is None:
        prev_action = np.zeros(cfg.action_dim)
    return EnvState(
        rho_re=gains.real.copy(),
        rho_im=gains.imag.copy(),
        theta_flat=angles.copy(),
        prev_action=np.asarray(prev_action, dtype=float),
    )


def split_action(raw: np.ndarray, cfg: EnvConfig):
    """Partition the flat logit vector into (phase, power, displacement) parts."""
    raw = np.asarray(raw, dtype=float).ravel()
    if raw.size != cfg.action_dim:
        raise ValueError(f"action has {raw.size} entries, expected {cfg.action_dim}")
    n, m = cfg.array.n_elements, cfg.n_streams
    return raw[: n * m].reshape(n, m), raw[n * m : n * m + m], raw[n * m + m :]


def decode_action(raw: np.ndarray, cfg: EnvConfig):
    """Map logits to a feasible (Precoder, positions) pair.

    Every raw vector decodes to a feasible point: column powers are a
    softmax split of the exact budget, entries have unit modulus within a
    column, and displacements are nonnegative with total
    delta_max * mean(sigmoid(logits)) < delta_max.
    """
    phase_logits, power_logits, disp_logits = split_action(raw, cfg)
    n = cfg.array.n_elements
    phases = np.pi * np.tanh(phase_logits)
    q = softmax(power_logits)
    F = np.sqrt(cfg.p_sum * q / n) * np.exp(1j * phases)
    if cfg.freeze_positions:
        p = uniform_positions(cfg.array)
    else:
        delta = cfg.array.delta_max * float(np.mean(sigmoid(disp_logits))) * softmax(disp_logits)
        p = displacements_to_positions(delta, cfg.array)
    return Precoder(F=F, p_sum=cfg.p_sum), p


@dataclass(frozen=True)
class RewardComponents:
    """Reward breakdown: Fisher core, SINR penalty, per-user SINRs, and the
    CRB implied by the core."""

    core: float
    penalty: float
    sinrs: np.ndarray
    crb: float

    @property
    def reward(self) -> float:
        return self.core + self.penalty


def reward_components(F, p, scenario: Scenario, cfg: EnvConfig) -> RewardComponents:
    """Evaluate one decoded action on a scenario.

    The core term is g_dot^H FF^H g_dot - |g^H FF^H g_dot|^2 / (g^H FF^H g),
    i.e. the Schur complement whose reciprocal (after constants) is the
    angle CRB. The penalty is upsilon * sum_k min(0, gamma_k - Gamma_k),
    zero exactly when every user meets its threshold.
    """
    Fm = np.asarray(getattr(F, "F", F), dtype=complex)
    lam = cfg.array.wavelength
    C = coupling_matrix(p, cfg.crosstalk)
    g, g_dot = effective_sensing_channel(p, C, scenario.theta_s, lam)
    u = Fm.conj().T @ g
    w = Fm.conj().T @ g_dot
    gu = float(np.real(u.conj() @ u))
    gw = float(np.real(w.conj() @ w))
    core = gw - abs(u.conj() @ w) ** 2 / gu if gu > 0 else 0.0
    gammas = np.array([
        sinr(user_channel(p, spec, lam), C, Fm, k, scenario.sigma2_k[k])
        for k, spec in enumerate(scenario.users)
    ])
    shortfall = np.minimum(0.0, gammas - cfg.gamma_lin)
    penalty = cfg.upsilon * float(shortfall.sum())
    if core > 0:
        crb = scenario.sigma2_n / (
            2.0 * scenario.n_samples * abs(scenario.alpha_s) ** 2 * core
        )
    else:
        crb = np.inf
    return RewardComponents(core=core, penalty=penalty, sinrs=gammas, crb=crb)


def reward(F, p, scenario: Scenario, cfg: EnvConfig) -> float:
    return reward_components(F, p, scenario, cfg).reward


def reset(seed, cfg: EnvConfig):
    """Sample a fresh scenario and build the initial state (zero prev_action)."""
    rng = np.random.default_rng(seed)
    scenario = sample_scenario(
        rng,
        cfg.n_users,
        cfg.n_paths,
        theta_s=cfg.theta_s,
        alpha_s=cfg.alpha_s,
        sigma2_s=cfg.sigma2_s,
        sigma2_c=cfg.sigma2_c,
        sigma2_k=cfg.sigma2_k,
        crosstalk=cfg.crosstalk,
        n_samples=cfg.n_samples,
    )
    return state_from_scenario(scenario, cfg), scenario


def step(state: EnvState, raw: np.ndarray, scenario: Scenario, cfg: EnvConfig, t: int):
    """One transition: decode, score, carry the action into the next state.

    The scenario is static within the episode, so only prev_action changes.
    Raises EpisodeFinished when t is already past the horizon.
    """
    if t >= cfg.steps_per_episode:
        raise EpisodeFinished(
            f"step {t} requested but the episode has {cfg.steps_per_episode} steps"
        )
    F, p = decode_action(raw, cfg)
    r = reward(F, p, scenario, cfg)
    nxt = EnvState(
        rho_re=state.rho_re,
        rho_im=state.rho_im,
        theta_flat=state.theta_flat,
        prev_action=np.asarray(raw, dtype=float).copy(),
    )
    return nxt, r, t + 1 == cfg.steps_per_episode


def trace_row(t: int, comps: RewardComponents) -> tuple:
    """Episode-trace row matching TRACE_COLUMNS."""
    sinrs_db = ";".join(repr(float(10.0 * np.log10(g))) for g in comps.sinrs)
    crb_db_val = float(10.0 * np.log10(comps.crb)) if np.isfinite(comps.crb) else np.inf
    return (t, comps.reward, comps.penalty, crb_db_val, sinrs_db)


def write_episode_trace(path, rows) -> None:
    """Write trace rows as CSV with the exact TRACE_COLUMNS header.

    Floats are rendered with repr so identical runs produce identical bytes.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for t, rew, pen, crb_db_val, sinrs_db in rows:
            writer.writerow([t, repr(float(rew)), repr(float(pen)), repr(float(crb_db_val)), sinrs_db])
