"""Performance metrics: per-user SINR, the 3x3 Fisher information matrix for
the target parameters, and the closed-form angle CRB.

The estimation model is an L-sample frame y ~ CN(ybar, sigma2_n * I_L) with
mean ybar = conj(alpha_s) * S^H F^H g, where g is the coupled sensing channel
and S is any pilot matrix with S S^H = L*I. The Fisher information over
psi = [theta_s, Re(alpha_s), Im(alpha_s)] then depends on F only through
F F^H, which the closed forms below exploit via u = F^H g and w = F^H g_dot:

    M_tt = (2 |alpha|^2 L / sigma2_n) * ||w||^2
    M_ta = (2 L / sigma2_n) * [Re(z1), Im(z1)],   z1 = alpha * w^H u
    M_aa = (2 L / sigma2_n) * ||u||^2 * I_2

and the angle CRB is the (1,1) entry of M^{-1}, available in closed form
through the Schur complement:

    CRB = sigma2_n / (2 L |alpha|^2 (||w||^2 - |u^H w|^2 / ||u||^2)).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConstraintViolation, UnobservableGeometry

POWER_TOL = 1e-9

# Schur denominators at or below this floor are treated as genuinely
# degenerate geometry rather than underflow.
DEGENERACY_FLOOR = 1e-300


@dataclass(frozen=True)
class Precoder:
    """Transmit precoder [F_c | F_s] with its power budget.

    F has K + N columns: K communication streams followed by N dedicated
    sensing streams. The Frobenius power trace(F F^H) must not exceed p_sum.
    """

    F: np.ndarray
    p_sum: float

    def __post_init__(self):
        F = np.asarray(self.F, dtype=complex)
        object.__setattr__(self, "F", F)
        if F.ndim != 2:
            raise ConstraintViolation(f"precoder must be a matrix, got shape {F.shape}")
        power = float(np.sum(np.abs(F) ** 2))
        if power > self.p_sum + POWER_TOL:
            raise ConstraintViolation(
                f"precoder power {power:.9e} W exceeds budget {self.p_sum:.9e} W"
            )

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.F) ** 2))


def _matrix(F) -> np.ndarray:
    """Accept either a Precoder or a bare complex matrix."""
    return np.asarray(getattr(F, "F", F), dtype=complex)


def sinr(h: np.ndarray, C: np.ndarray, F, k: int, sigma2: float) -> float:
    """SINR of user k: |h^H C f_k|^2 over interference from every other
    column of F plus noise.

    Passing the full [F_c | F_s] matrix accounts for the dedicated sensing
    streams as interference, which is how the reward and evaluation paths
    use it; passing only F_c reproduces the communication-only ratio.
    """
    F = _matrix(F)
    r = h.conj() @ (C @ F)
    p = np.abs(r) ** 2
    interference = float(p.sum() - p[k])
    return float(p[k] / (interference + sigma2))


def simulate_sinr(
    h: np.ndarray,
    C: np.ndarray,
    F,
    k: int,
    sigma2: float,
    rng: np.random.Generator,
    n_symbols: int = 100_000,
) -> float:
    """Monte-Carlo SINR from per-symbol received samples.

    Draws i.i.d. unit-variance circular Gaussian symbols for every stream,
    forms user k's received samples, and estimates signal and
    interference-plus-noise powers empirically. Serves as an independent
    oracle for `sinr`; the optimization path never calls it.
    """
    F = _matrix(F)
    m = F.shape[1]
    r = h.conj() @ (C @ F)
    s = (rng.standard_normal((m, n_symbols)) + 1j * rng.standard_normal((m, n_symbols))) / np.sqrt(2.0)
    noise = np.sqrt(sigma2 / 2.0) * (
        rng.standard_normal(n_symbols) + 1j * rng.standard_normal(n_symbols)
    )
    signal = r[k] * s[k]
    others = np.delete(r, k) @ np.delete(s, k, axis=0) + noise
    return float(np.mean(np.abs(signal) ** 2) / np.mean(np.abs(others) ** 2))


def fisher_matrix(
    g: np.ndarray,
    g_dot: np.ndarray,
    F,
    alpha_s: complex,
    sigma2_n: float,
    L: int,
) -> np.ndarray:
    """Assemble the real 3x3 Fisher information matrix over
    [theta_s, Re(alpha_s), Im(alpha_s)]."""
    F = _matrix(F)
    u = F.conj().T @ g
    w = F.conj().T @ g_dot
    scale = 2.0 * L / sigma2_n
    m_tt = scale * abs(alpha_s) ** 2 * float(np.real(w.conj() @ w))
    z1 = alpha_s * (w.conj() @ u)
    m_ta = scale * np.array([z1.real, z1.imag])
    m_aa = scale * float(np.real(u.conj() @ u))
    M = np.zeros((3, 3))
    M[0, 0] = m_tt
    M[0, 1:] = m_ta
    M[1:, 0] = m_ta
    M[1, 1] = M[2, 2] = m_aa
    return M


def crb_theta(
    g: np.ndarray,
    g_dot: np.ndarray,
    F,
    alpha_s: complex,
    sigma2_n: float,
    L: int,
) -> float:
    """Closed-form CRB of the target angle (Schur complement of the FIM)."""
    F = _matrix(F)
    u = F.conj().T @ g
    w = F.conj().T @ g_dot
    gu = float(np.real(u.conj() @ u))
    gw = float(np.real(w.conj() @ w))
    if gu <= DEGENERACY_FLOOR:
        raise UnobservableGeometry("sensing channel carries no transmit power")
    cross = abs(u.conj() @ w) ** 2
    denom = gw - cross / gu
    if denom <= DEGENERACY_FLOOR:
        raise UnobservableGeometry(
            "angle is unobservable: derivative projection is degenerate"
        )
    return float(sigma2_n / (2.0 * L * abs(alpha_s) ** 2 * denom))


def crb_db(crb: float) -> float:
    """CRB on a decibel scale, 10*log10(crb)."""
    if crb <= 0:
        raise ValueError(f"CRB must be positive, got {crb}")
    return float(10.0 * np.log10(crb))


def min_sinr_db(gammas: np.ndarray) -> float:
    """Worst-user SINR in dB, a convenience for logs and reports."""
    g = float(np.min(gammas))
    if g <= 0:
        return -np.inf
    return float(10.0 * np.log10(g))
