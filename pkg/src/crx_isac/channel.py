"""Channel models: multipath user channels, inter-element crosstalk coupling,
and the effective coupled sensing channel with its angle derivative.

The coupling between elements m and n follows a distance power law with a
linear phase term,

    c_mn = eta * d_mn**(-iota) * exp(-1j * (nu * d_mn + xi)),   d_mn = |p_m - p_n|,

and the self-coupling c_nn is unity (each RF branch passes its own signal).
The matrix is symmetric, not Hermitian, because d_mn = d_nm.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .array import steering_derivative, steering_vector
from .errors import GeometryError

DEG60 = np.deg2rad(60.0)


@dataclass(frozen=True)
class CrosstalkParams:
    """Power-law coupling model parameters.

    eta is the dimensionless amplitude scale, iota the decay exponent,
    nu the phase slope in rad/m, xi the phase offset in rad. With
    enabled=False the coupling matrix degenerates to the identity.
    """

    eta: float = 3.5e-5
    iota: float = 1.9
    nu: float = 600.4
    xi: float = 252.8
    enabled: bool = True
    self_coupling: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if self.iota <= 0:
            raise ValueError(f"iota must be > 0, got {self.iota}")


@dataclass(frozen=True)
class UserChannelSpec:
    """Per-user multipath description: L_p complex gains and L_p departure angles."""

    gains: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=complex)
        angles = np.asarray(self.angles, dtype=float)
        if gains.shape != angles.shape or gains.ndim != 1:
            raise ValueError(
                f"gains {gains.shape} and angles {angles.shape} must be equal-length vectors"
            )
        if np.any(angles < 0) or np.any(angles > np.pi):
            raise ValueError("departure angles must lie in [0, pi]")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "angles", angles)

    @property
    def n_paths(self) -> int:
        return self.gains.shape[0]


@dataclass(frozen=True)
class Scenario:
    """One random draw of the communication/sensing environment.

    Holds the K user channel specs, the target angle and RCS coefficient,
    the noise powers, the crosstalk parameters, and the estimation frame
    length L used by the Fisher information.
    """

    users: tuple
    theta_s: float
    alpha_s: complex
    sigma2_s: float
    sigma2_c: float
    sigma2_k: np.ndarray
    crosstalk: CrosstalkParams = field(default_factory=CrosstalkParams)
    n_samples: int = 128

    def __post_init__(self):
        sigma2_k = np.asarray(self.sigma2_k, dtype=float)
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "sigma2_k", sigma2_k)
        if self.sigma2_s <= 0:
            raise ValueError(f"sigma2_s must be > 0, got {self.sigma2_s}")
        if self.sigma2_c < 0:
            raise ValueError(f"sigma2_c must be >= 0, got {self.sigma2_c}")
        if np.any(sigma2_k <= 0):
            raise ValueError("all per-user noise powers must be > 0")
        if len(self.users) != sigma2_k.shape[0]:
            raise ValueError(
                f"{len(self.users)} users but {sigma2_k.shape[0]} noise powers"
            )
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def sigma2_n(self) -> float:
        """Effective sensing noise power: AWGN plus absorbed clutter."""
        return self.sigma2_s + self.sigma2_c


def sample_scenario(
    rng: np.random.Generator,
    n_users: int,
    n_paths: int,
    *,
    theta_s: float = DEG60,
    alpha_s: complex = 0.4 + 0.0j,
    sigma2_s: float = 1e-3,
    sigma2_c: float = 0.0,
    sigma2_k: float | np.ndarray = 1e-3,
    crosstalk: CrosstalkParams | None = None,
    n_samples: int = 128,
) -> Scenario:
    """Draw a random scenario: path gains CN(0,1), departure angles U(0, pi).

    The target angle and all powers are taken from the keyword arguments;
    only the user channels are random. Identical generator states produce
    identical scenarios.
    """
    if n_users < 1 or n_paths < 1:
        raise ValueError("need at least one user and one path")
    users = []
    for _ in range(n_users):
        gains = (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) / np.sqrt(2.0)
        angles = rng.uniform(0.0, np.pi, size=n_paths)
        users.append(UserChannelSpec(gains=gains, angles=angles))
    sigma2_k = np.broadcast_to(np.asarray(sigma2_k, dtype=float), (n_users,)).copy()
    return Scenario(
        users=tuple(users),
        theta_s=theta_s,
        alpha_s=alpha_s,
        sigma2_s=sigma2_s,
        sigma2_c=sigma2_c,
        sigma2_k=sigma2_k,
        crosstalk=crosstalk if crosstalk is not None else CrosstalkParams(),
        n_samples=n_samples,
    )


def coupling_matrix(p: np.ndarray, params: CrosstalkParams) -> np.ndarray:
    """Build the N x N coupling matrix for element positions `p`.

    Off-diagonal entries follow the power-law model above; the diagonal is
    the configured self-coupling (unity by default). Coincident elements
    would make the power law diverge, so they raise GeometryError.
    """
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    if not params.enabled:
        return np.eye(n, dtype=complex)
    d = np.abs(p[:, None] - p[None, :])
    off = ~np.eye(n, dtype=bool)
    if np.any(d[off] == 0.0):
        raise GeometryError("coincident antenna positions give a divergent coupling")
    c = np.empty((n, n), dtype=complex)
    c[off] = params.eta * d[off] ** (-params.iota) * np.exp(-1j * (params.nu * d[off] + params.xi))
    c[~off] = params.self_coupling
    return c


def user_channel(p: np.ndarray, spec: UserChannelSpec, wavelength: float) -> np.ndarray:
    """Multipath downlink channel sqrt(N/L_p) * sum_l rho_l * a(theta_l)."""
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    h = np.zeros(n, dtype=complex)
    for rho, theta in zip(spec.gains, spec.angles):
        h += rho * steering_vector(p, theta, wavelength)
    return np.sqrt(n / spec.n_paths) * h


def user_channel_matrix(p: np.ndarray, scenario: Scenario, wavelength: float) -> np.ndarray:
    """Stack all K user channels into an N x K matrix."""
    return np.stack(
        [user_channel(p, spec, wavelength) for spec in scenario.users], axis=1
    )


def effective_sensing_channel(
    p: np.ndarray,
    C: np.ndarray,
    theta_s: float,
    wavelength: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Coupled sensing channel g = C^H a(theta_s) and its angle derivative.

    C does not depend on theta_s, so the derivative is C^H applied to the
    analytic steering derivative.
    """
    a = steering_vector(p, theta_s, wavelength)
    a_dot = steering_derivative(p, theta_s, wavelength)
    ch = C.conj().T
    return ch @ a, ch @ a_dot


def scenario_to_dict(scenario: Scenario) -> dict:
    """Plain-dict form of a scenario (complex numbers as re/im pairs)."""
    return {
        "users": [
            {
                "gains": [[float(g.real), float(g.imag)] for g in spec.gains],
                "angles_rad": [float(t) for t in spec.angles],
            }
            for spec in scenario.users
        ],
        "theta_s_rad": float(scenario.theta_s),
        "alpha_s": [float(scenario.alpha_s.real), float(scenario.alpha_s.imag)],
        "sigma2_s": float(scenario.sigma2_s),
        "sigma2_c": float(scenario.sigma2_c),
        "sigma2_k": [float(s) for s in scenario.sigma2_k],
        "crosstalk": {
            "eta": scenario.crosstalk.eta,
            "iota": scenario.crosstalk.iota,
            "nu": scenario.crosstalk.nu,
            "xi": scenario.crosstalk.xi,
            "enabled": scenario.crosstalk.enabled,
        },
        "n_samples": int(scenario.n_samples),
    }


def scenario_from_dict(d: dict) -> Scenario:
    """Inverse of scenario_to_dict."""
    users = tuple(
        UserChannelSpec(
            gains=np.array([complex(re, im) for re, im in u["gains"]]),
            angles=np.array(u["angles_rad"], dtype=float),
        )
        for u in d["users"]
    )
    ct = d["crosstalk"]
    return Scenario(
        users=users,
        theta_s=float(d["theta_s_rad"]),
        alpha_s=complex(d["alpha_s"][0], d["alpha_s"][1]),
        sigma2_s=float(d["sigma2_s"]),
        sigma2_c=float(d["sigma2_c"]),
        sigma2_k=np.array(d["sigma2_k"], dtype=float),
        crosstalk=CrosstalkParams(
            eta=float(ct["eta"]),
            iota=float(ct["iota"]),
            nu=float(ct["nu"]),
            xi=float(ct["xi"]),
            enabled=bool(ct["enabled"]),
        ),
        n_samples=int(d["n_samples"]),
    )


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))
