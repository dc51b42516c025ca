"""Discretized Dirac sea on the lower mass shell.

Gamma matrices are in the Dirac representation with ``gamma0 = diag(1, 1, -1, -1)``,
which coincides with the signature matrix for ``n = 2``. The lower mass shell
``k0 = -omega(k)``, ``omega(k) = sqrt(|k|^2 + m^2)``, carries the density
``d^3k / (2 omega)``; the spatial ball ``|k| <= kmax`` is covered by a
cell-centred Cartesian grid.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .krein import SignatureSpace
from .measure import CompactBox, NegativeDefiniteMeasure

SPACE = SignatureSpace(2)

_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)

METRIC = np.diag([1.0, -1.0, -1.0, -1.0])


class GammaSet(NamedTuple):
    g0: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray

    def anticommutator_defect(self):
        """max |{g_mu, g_nu} - 2 eta_mu_nu I| over all index pairs."""
        worst = 0.0
        for mu, a in enumerate(self):
            for nu, b in enumerate(self):
                target = 2 * METRIC[mu, nu] * np.eye(4)
                worst = max(worst, float(np.abs(a @ b + b @ a - target).max()))
        return worst


def dirac_gammas():
    z = np.zeros((2, 2), dtype=complex)
    one = np.eye(2, dtype=complex)
    g0 = np.block([[one, z], [z, -one]])
    gs = [np.block([[z, s], [-s, z]]) for s in _PAULI]
    return GammaSet(g0, *gs)


GAMMA = dirac_gammas()


def slash(k, gamma=GAMMA):
    """Feynman slash ``k0 g0 - k1 g1 - k2 g2 - k3 g3``."""
    k = np.asarray(k, dtype=float)
    return k[0] * gamma.g0 - k[1] * gamma.g1 - k[2] * gamma.g2 - k[3] * gamma.g3


def omega(kvec, m):
    kvec = np.asarray(kvec, dtype=float)
    return np.sqrt((kvec * kvec).sum(axis=-1) + m * m)


def shell_projectors(kvec, m, gamma=GAMMA):
    """Spectral projectors ``p_+`` and ``p_-`` for spatial momentum ``kvec``.

    ``p_pm = (kslash + m) g0 / (2 k0)`` evaluated at ``k0 = +-omega``. These are
    the Euclidean-orthogonal projectors onto the positive and negative
    frequency eigenspaces and satisfy ``p(k) g0 = g0 p(-k)``.
    """
    if m <= 0:
        raise ValueError("mass must be positive")
    kvec = np.asarray(kvec, dtype=float)
    w = float(omega(kvec, m))
    out = []
    for k0 in (w, -w):
        k = np.concatenate([[k0], kvec])
        out.append((slash(k, gamma) + m * np.eye(4)) @ gamma.g0 / (2 * k0))
    return tuple(out)


@dataclass(frozen=True)
class ShellGrid:
    """Discretization parameters for the lower mass shell.

    ``kmax = 0`` is accepted only with ``nk = 1`` and yields the single atom at
    rest. ``cell_volume`` overrides the cell volume ``(2 kmax / nk)^3`` and is
    required in that degenerate case (defaults to 1).
    """

    m: float
    kmax: float
    nk: int
    two_pi_normalization: bool = False
    cell_volume: float = None

    def __post_init__(self):
        if not (self.m > 0 and math.isfinite(self.m)):
            raise ValueError("mass must be positive")
        if int(self.nk) != self.nk or self.nk < 1:
            raise ValueError("nk must be a positive integer")
        if not (self.kmax >= 0 and math.isfinite(self.kmax)):
            raise ValueError("kmax must be non-negative")
        if self.kmax == 0 and self.nk != 1:
            raise ValueError("kmax = 0 requires nk = 1")
        if self.cell_volume is not None and not self.cell_volume > 0:
            raise ValueError("cell_volume must be positive")

    @property
    def spacing(self):
        return 2 * self.kmax / self.nk

    @property
    def volume(self):
        if self.cell_volume is not None:
            return float(self.cell_volume)
        if self.kmax == 0:
            return 1.0
        return self.spacing**3

    @property
    def kappa(self):
        return (2 * math.pi) ** -4 if self.two_pi_normalization else 1.0

    def spatial_points(self):
        """Cell centres inside the closed ball ``|k| <= kmax``."""
        h = self.spacing
        axis = -self.kmax + (np.arange(self.nk) + 0.5) * h
        grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
        keep = (grid * grid).sum(axis=1) <= self.kmax**2 * (1 + 1e-12)
        return grid[keep]

    def default_domain(self):
        top = math.sqrt(self.kmax**2 + self.m**2)
        r = self.kmax
        return CompactBox((-top * (1 + 1e-12), -r, -r, -r), (-self.m, r, r, r))


def sea_weight(kvec, grid, gamma=GAMMA):
    """Weight ``kappa (kslash + m) |_{k0=-omega} d^3k / (2 omega)`` of one cell."""
    w = float(omega(kvec, grid.m))
    k = np.concatenate([[-w], np.asarray(kvec, dtype=float)])
    return grid.kappa * (slash(k, gamma) + grid.m * np.eye(4)) * grid.volume / (2 * w)


def build_dirac_sea(grid, domain=None, gamma=GAMMA):
    """Negative definite measure of the discretized Dirac sea.

    Raises ``ValidationError`` naming the first atom that leaves ``domain``.
    """
    domain = grid.default_domain() if domain is None else domain
    kvecs = grid.spatial_points()
    points = np.column_stack([-omega(kvecs, grid.m), kvecs])
    weights = np.array([sea_weight(kv, grid, gamma) for kv in kvecs])
    return NegativeDefiniteMeasure(SPACE, domain, points, weights)
