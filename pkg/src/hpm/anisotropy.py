"""Anisotropy profiles, the frequency manifold P, its quasi-norm,
the projection pi_P and the scaling fibres.

For derivative orders alpha = (alpha_1, ..., alpha_d) and the minimal
integer l with l*alpha_k > d for all k, the manifold is

    P = { xi : sum_k |xi_k|^(l alpha_k) = 1 },

the quasi-norm is (sum_k |xi_k|^(l alpha_k))^(1/l), and the fibre through
a point xi of P is eta_k(t) = xi_k t^(1/(l alpha_k)), t > 0.  Projection
along fibres divides component k by the constraint sum raised to
1/(l alpha_k); absolute values are used inside the sum so the map is real
for all sign patterns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularPointError


def compute_l(alpha, d: int) -> int:
    """Minimal integer l >= 1 with l*alpha_k > d for every k."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size == 0:
        raise DomainError("alpha must be a non-empty vector")
    if np.any(alpha <= 0):
        raise DomainError("all derivative orders must be positive")
    return int(math.floor(d / float(alpha.min()))) + 1


@dataclass(frozen=True)
class AnisotropyProfile:
    """Derivative orders alpha with the derived exponent l.

    l is always computed from alpha, never user-supplied."""

    alpha: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if len(self.alpha) == 0:
            raise DomainError("alpha must be non-empty")
        if any(a <= 0 for a in self.alpha):
            raise DomainError("all derivative orders must be positive")

    @property
    def d(self) -> int:
        return len(self.alpha)

    @property
    def l(self) -> int:
        return compute_l(self.alpha, self.d)

    @property
    def exponents(self) -> tuple[float, ...]:
        """The powers l*alpha_k defining the P-constraint."""
        l = self.l
        return tuple(l * a for a in self.alpha)

    @property
    def isotropic(self) -> bool:
        return all(a == self.alpha[0] for a in self.alpha)


def constraint_sum(xi: np.ndarray, profile: AnisotropyProfile) -> np.ndarray:
    """sum_k |xi_k|^(l alpha_k), vectorized over leading axes of xi (..., d)."""
    xi = np.asarray(xi, dtype=float)
    ex = np.asarray(profile.exponents)
    return np.sum(np.abs(xi) ** ex, axis=-1)


def quasi_norm(xi, profile: AnisotropyProfile):
    """(sum_k |xi_k|^(l alpha_k))^(1/l); zero iff xi = 0."""
    s = constraint_sum(xi, profile)
    return s ** (1.0 / profile.l)


def project_to_P(xi, profile: AnisotropyProfile) -> np.ndarray:
    """Project nonzero xi to P along its fibre.

    Component k is xi_k / S^(1/(l alpha_k)) with S the constraint sum; the
    denominator is positive, so each component keeps the sign of xi_k."""
    xi = np.asarray(xi, dtype=float)
    s = constraint_sum(xi, profile)
    if np.any(s == 0):
        raise SingularPointError("projection to P is undefined at the origin")
    ex = np.asarray(profile.exponents)
    return xi / s[..., None] ** (1.0 / ex)


def project_lattice(xi: np.ndarray, profile: AnisotropyProfile) -> np.ndarray:
    """Like project_to_P but maps zero vectors to zero instead of raising;
    used on frequency lattices that contain the origin."""
    xi = np.asarray(xi, dtype=float)
    s = constraint_sum(xi, profile)
    safe = np.where(s == 0, 1.0, s)
    ex = np.asarray(profile.exponents)
    out = xi / safe[..., None] ** (1.0 / ex)
    out[s == 0] = 0.0
    return out


def fibre_point(xi_P, t, profile: AnisotropyProfile) -> np.ndarray:
    """Point eta on the fibre through xi_P at parameter t > 0:
    eta_k = (xi_P)_k * t^(1/(l alpha_k))."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("fibre parameter t must be positive")
    xi_P = np.asarray(xi_P, dtype=float)
    ex = np.asarray(profile.exponents)
    return xi_P * t[..., None] ** (1.0 / ex) if t.ndim else xi_P * t ** (1.0 / ex)


@dataclass(frozen=True)
class PMeshPoint:
    """A quadrature node on P.  The weight is inherited from the Euclidean
    sphere mesh the node was projected from (a fixed reference measure)."""

    xi: tuple[float, ...]
    weight: float

    def as_array(self) -> np.ndarray:
        return np.asarray(self.xi)


def _sphere_mesh(d: int, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint mesh of the Euclidean unit sphere S^{d-1}: points (N, d)
    and surface-measure weights (N,)."""
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        ang = 2 * np.pi * np.arange(resolution) / resolution
        pts = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        w = np.full(resolution, 2 * np.pi / resolution)
        return pts, w
    # hyperspherical midpoint product grid: d-2 polar angles in (0, pi),
    # one azimuthal angle in [0, 2 pi)
    polar = [(np.arange(resolution) + 0.5) * np.pi / resolution] * (d - 2)
    azim = 2 * np.pi * np.arange(resolution) / resolution
    grids = np.meshgrid(*polar, azim, indexing="ij")
    shape = grids[0].shape
    pts = np.empty(shape + (d,))
    sin_prod = np.ones(shape)
    for j in range(d - 2):
        pts[..., j] = sin_prod * np.cos(grids[j])
        sin_prod = sin_prod * np.sin(grids[j])
    pts[..., d - 2] = sin_prod * np.cos(grids[d - 2])
    pts[..., d - 1] = sin_prod * np.sin(grids[d - 2])
    w = np.ones(shape)
    for j in range(d - 2):
        w = w * np.sin(grids[j]) ** (d - 2 - j)
    w = w * (np.pi / resolution) ** (d - 2) * (2 * np.pi / resolution)
    return pts.reshape(-1, d), w.reshape(-1)


def mesh_P(profile: AnisotropyProfile, resolution: int) -> list[PMeshPoint]:
    """Quadrature mesh on P obtained by projecting a uniform Euclidean
    sphere mesh through pi_P.  Covers both signs of every axis."""
    if resolution < 8:
        raise DomainError("mesh resolution must be at least 8")
    pts, w = _sphere_mesh(profile.d, resolution)
    proj = project_to_P(pts, profile)
    return [PMeshPoint(tuple(p), float(wt)) for p, wt in zip(proj, w)]
