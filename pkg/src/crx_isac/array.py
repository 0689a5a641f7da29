"""Movable-antenna geometry along a line.

Positions are encoded through nonnegative displacement variables stacked on
top of a minimum-spacing grid, so that the pairwise-separation and moving
region constraints hold by construction; steering vectors and their analytic
angle derivative are evaluated for arbitrary element positions.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConstraintViolation


@dataclass(frozen=True)
class ArrayConfig:
    """Geometry of the movable transmit array.

    Attributes
    ----------
    n_elements : int
        Number of movable elements.
    wavelength : float
        Carrier wavelength in meters.
    p_min, p_max : float
        Boundaries of the movable region in meters.
    d0 : float
        Minimum allowed separation between any two elements in meters.
    """

    n_elements: int
    wavelength: float
    p_min: float
    p_max: float
    d0: float

    def __post_init__(self):
        if self.n_elements < 1:
            raise ConstraintViolation(f"n_elements must be >= 1, got {self.n_elements}")
        if self.wavelength <= 0:
            raise ConstraintViolation(f"wavelength must be positive, got {self.wavelength}")
        if self.d0 <= 0:
            raise ConstraintViolation(f"d0 must be positive, got {self.d0}")
        if self.p_max - self.p_min < (self.n_elements - 1) * self.d0:
            raise ConstraintViolation(
                f"region [{self.p_min}, {self.p_max}] cannot hold {self.n_elements} "
                f"elements at minimum spacing {self.d0}"
            )

    @property
    def delta_max(self) -> float:
        """Total displacement budget beyond the minimum-spacing grid."""
        return self.p_max - self.p_min - (self.n_elements - 1) * self.d0


# Numerical slack for feasibility checks on meter-scale quantities.
POSITION_TOL = 1e-9


def check_displacements(delta: np.ndarray, cfg: ArrayConfig) -> None:
    """Raise ConstraintViolation unless `delta` is a feasible displacement vector."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (cfg.n_elements,):
        raise ConstraintViolation(
            f"expected {cfg.n_elements} displacements, got shape {delta.shape}"
        )
    neg = np.nonzero(delta < -POSITION_TOL)[0]
    if neg.size:
        raise ConstraintViolation(
            f"displacement {neg[0]} is negative ({delta[neg[0]]:.3e} m)"
        )
    total = float(delta.sum())
    if total > cfg.delta_max + POSITION_TOL:
        raise ConstraintViolation(
            f"displacement sum {total:.6e} m exceeds budget {cfg.delta_max:.6e} m"
        )


def check_positions(p: np.ndarray, cfg: ArrayConfig, tol: float = POSITION_TOL) -> None:
    """Raise ConstraintViolation unless positions satisfy spacing and region bounds."""
    p = np.asarray(p, dtype=float)
    if p.shape != (cfg.n_elements,):
        raise ConstraintViolation(f"expected {cfg.n_elements} positions, got shape {p.shape}")
    gaps = np.diff(p)
    bad = np.nonzero(gaps < cfg.d0 - tol)[0]
    if bad.size:
        raise ConstraintViolation(
            f"elements {bad[0]} and {bad[0] + 1} are {gaps[bad[0]]:.6e} m apart, "
            f"below the minimum spacing {cfg.d0:.6e} m"
        )
    if p[0] < cfg.p_min - tol or p[-1] > cfg.p_max + tol:
        raise ConstraintViolation(
            f"positions [{p[0]:.6e}, {p[-1]:.6e}] leave the region "
            f"[{cfg.p_min}, {cfg.p_max}]"
        )


def displacements_to_positions(delta: np.ndarray, cfg: ArrayConfig) -> np.ndarray:
    """Map displacement variables to element positions.

    The n-th position is p_min + (n-1)*d0 + sum of the first n displacements,
    so nonnegative displacements with a bounded sum yield positions that meet
    the spacing and region constraints exactly.
    """
    check_displacements(delta, cfg)
    delta = np.asarray(delta, dtype=float)
    n = np.arange(cfg.n_elements)
    return cfg.p_min + n * cfg.d0 + np.cumsum(delta)


def uniform_positions(cfg: ArrayConfig, spacing: float | None = None) -> np.ndarray:
    """Fixed uniform array anchored at p_min (default spacing: d0)."""
    spacing = cfg.d0 if spacing is None else spacing
    p = cfg.p_min + spacing * np.arange(cfg.n_elements)
    check_positions(p, cfg)
    return p


def steering_vector(p: np.ndarray, theta: float, wavelength: float) -> np.ndarray:
    """Unit-norm array response for a plane wave departing at angle `theta`.

    Entry n is exp(j*(2*pi/wavelength)*p_n*cos(theta)) / sqrt(N).
    """
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    phase = (2.0 * np.pi / wavelength) * p * np.cos(theta)
    return np.exp(1j * phase) / np.sqrt(n)


def steering_derivative(p: np.ndarray, theta: float, wavelength: float) -> np.ndarray:
    """Analytic derivative of `steering_vector` with respect to `theta`.

    Entry n is -j*(2*pi/wavelength)*sin(theta)*p_n times the response entry.
    """
    p = np.asarray(p, dtype=float)
    a = steering_vector(p, theta, wavelength)
    return -1j * (2.0 * np.pi / wavelength) * np.sin(theta) * p * a
