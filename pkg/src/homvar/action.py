"""Fermionic projector, closed chain, Lagrangian and the truncated action.

All spacetime integrals are taken over a box ``Lambda = prod [-R_mu, R_mu]``
with tensor-product trapezoid weights. Grid sums use a fixed pairwise tree
(:func:`homvar.kernels.pairwise_sum`), so results do not depend on how
nodes were evaluated.
"""

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .errors import EigenSolverError, ValidationError
from .krein import column_sum_norm, eigenvalues, spectral_weight
from .measure import measure_to_json

LAGRANGIAN_CLAMP = 1e-10
TRACE_IMAG_TOL = 1e-10
MODES = ("trace+f", "trace+swf", "trace+boundedness")

_METRIC = np.array([1.0, -1.0, -1.0, -1.0])


@dataclass(frozen=True)
class QuadratureBox:
    """Spacetime box with a tensor trapezoid rule.

    An axis with a single point uses the midpoint rule (weight ``2 R``).
    """

    half_widths: tuple
    points_per_axis: tuple

    def __post_init__(self):
        hw = tuple(float(r) for r in self.half_widths)
        pts = tuple(int(p) for p in self.points_per_axis)
        if len(hw) != 4 or len(pts) != 4:
            raise ValueError("need four half widths and four point counts")
        if not all(r > 0 and math.isfinite(r) for r in hw):
            raise ValueError(f"half widths must be positive, got {hw}")
        if any(p < 1 or p != q for p, q in zip(pts, self.points_per_axis)):
            raise ValueError(f"points per axis must be positive integers, got {self.points_per_axis}")
        object.__setattr__(self, "half_widths", hw)
        object.__setattr__(self, "points_per_axis", pts)

    @property
    def volume(self):
        return float(np.prod([2 * r for r in self.half_widths]))

    @property
    def size(self):
        return int(np.prod(self.points_per_axis))

    def axis(self, mu):
        """Nodes and weights of axis ``mu``."""
        R, N = self.half_widths[mu], self.points_per_axis[mu]
        if N == 1:
            return np.zeros(1), np.array([2 * R])
        x = np.linspace(-R, R, N)
        h = 2 * R / (N - 1)
        w = np.full(N, h)
        w[0] = w[-1] = h / 2
        return x, w

    def nodes(self):
        """``(G, 4)`` nodes in C order and their ``(G,)`` weights."""
        xs, ws = zip(*(self.axis(mu) for mu in range(4)))
        X = np.stack(np.meshgrid(*xs, indexing="ij"), axis=-1).reshape(-1, 4)
        W = ws[0][:, None, None, None] * ws[1][None, :, None, None]
        W = (W * ws[2][None, None, :, None] * ws[3][None, None, None, :]).reshape(-1)
        return X, W

    def metadata(self):
        out = []
        for mu in range(4):
            x, w = self.axis(mu)
            out.append({
                "axis": mu,
                "half_width": self.half_widths[mu],
                "points": self.points_per_axis[mu],
                "spacing": float(x[1] - x[0]) if len(x) > 1 else 2 * self.half_widths[mu],
                "weight_sum": float(w.sum()),
            })
        return out


@dataclass(frozen=True)
class ConstraintSet:
    """Trace constraint ``c`` plus one inequality selected by ``mode``.

    ``trace+f`` bounds ``Tr(-S nu(K))`` by ``f``, ``trace+swf`` bounds the
    spectral weight ``|nu(K)|`` by ``f``, ``trace+boundedness`` bounds
    ``T_Lambda`` by ``C``.
    """

    c: float
    mode: str = "trace+f"
    f: Optional[float] = None
    C: Optional[float] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (math.isfinite(self.c) and self.c != 0):
            raise ValueError("c must be a finite nonzero number")
        needs_f = self.mode != "trace+boundedness"
        given, missing = ("f", "C") if needs_f else ("C", "f")
        value = getattr(self, given)
        if value is None or not (value > 0 and math.isfinite(value)):
            raise ValueError(f"mode {self.mode} needs a positive {given}")
        if getattr(self, missing) is not None:
            raise ValueError(f"mode {self.mode} does not use {missing}")

    @property
    def bound(self):
        return self.C if self.mode == "trace+boundedness" else self.f

    def to_dict(self):
        d = {"mode": self.mode, "c": self.c}
        d["C" if self.mode == "trace+boundedness" else "f"] = self.bound
        return d


def phases(points, xi):
    """``exp(i <k_a, xi>)`` for every atom; ``xi`` may be ``(4,)`` or ``(G, 4)``."""
    xi = np.asarray(xi, dtype=float)
    return np.exp(1j * (xi @ (np.asarray(points) * _METRIC).T))


def fermionic_projector(nu, xi):
    """``P(xi) = sum_a exp(i <k_a, xi>) M_a`` (stacked if ``xi`` is 2-D)."""
    xi = np.asarray(xi, dtype=float)
    d = nu.space.dim
    if len(nu) == 0:
        return np.zeros(xi.shape[:-1] + (d, d), dtype=complex)
    return np.tensordot(phases(nu.points, xi), nu.weights, axes=(-1, 0))


def closed_chain(nu, xi):
    """``A(xi) = P(xi) P(-xi)``."""
    xi = np.asarray(xi, dtype=float)
    return fermionic_projector(nu, xi) @ fermionic_projector(nu, -xi)


def lagrangian_from_eigenvalues(lam, n, clamp=True):
    """``|A^2| - |A|^2 / 2n`` from the eigenvalues of ``A``.

    The eigenvalues of ``A^2`` are the squares of those of ``A``, so
    ``|A^2| = sum |lambda|^2``.
    """
    mod = np.abs(np.asarray(lam))
    s1 = mod.sum(axis=-1)
    L = (mod * mod).sum(axis=-1) - s1 * s1 / (2 * n)
    if clamp:
        L = np.where((L < 0) & (L > -LAGRANGIAN_CLAMP), 0.0, L)
    return L


def lagrangian(nu, xi, clamp=True):
    """Lagrangian at a single spacetime point."""
    A = closed_chain(nu, np.asarray(xi, dtype=float).reshape(4))
    return float(lagrangian_from_eigenvalues(eigenvalues(A), nu.space.n, clamp))


def _grid_terms(points, weights, nodes):
    L, t, info = kernels.lagrangian_grid(points, weights, nodes)
    if np.any(info):
        g = int(np.flatnonzero(info)[0])
        A = kernels.closed_chains(points, weights, nodes[g:g + 1])[0]
        raise EigenSolverError(
            column_sum_norm(A), 30 * max(10, A.shape[0]), f"at grid point xi={nodes[g].tolist()}"
        )
    L = np.where((L < 0) & (L > -LAGRANGIAN_CLAMP), 0.0, L)
    return L, t


def integrals(points, weights, box, nodes=None):
    """``(S_Lambda, T_Lambda)`` for raw atom arrays."""
    if len(points) == 0:
        return 0.0, 0.0
    X, W = box.nodes() if nodes is None else nodes
    L, t = _grid_terms(np.asarray(points, dtype=float), np.asarray(weights, dtype=complex), X)
    return kernels.pairwise_sum(W * L), kernels.pairwise_sum(W * t)


def action(nu, box):
    """Truncated causal action ``S_Lambda``."""
    return integrals(nu.points, nu.weights, box)[0]


def t_functional(nu, box):
    """Truncated ``T_Lambda = int |A(xi)|^2``."""
    return integrals(nu.points, nu.weights, box)[1]


def lagrangian_profile(nu, nodes):
    """Clamped ``L`` and ``|A|^2`` at arbitrary nodes, shape ``(G,)`` each."""
    nodes = np.asarray(nodes, dtype=float).reshape(-1, 4)
    if len(nu) == 0:
        return np.zeros(len(nodes)), np.zeros(len(nodes))
    return _grid_terms(nu.points, nu.weights, nodes)


class ConstraintReport(NamedTuple):
    trace: float
    straceS: float
    sweight: float
    t_value: Optional[float]
    residuals: dict

    def to_dict(self):
        return dict(self._asdict())


def total_trace(nu):
    """Real trace of ``nu(K)``; raises if the imaginary part is not negligible."""
    tr = complex(np.trace(nu.total()))
    if abs(tr.imag) > TRACE_IMAG_TOL * max(1.0, abs(tr.real)):
        raise ValidationError("real_trace", f"Tr nu(K) has imaginary part {tr.imag:.3e}")
    return tr.real


def constraint_report(nu, cs, box=None):
    """Trace, ``Tr(-S nu(K))``, spectral weight and residuals of the active constraints.

    ``box`` is required for the boundedness mode (to evaluate ``T_Lambda``).
    """
    total = nu.total()
    trace = total_trace(nu)
    straceS = float(-(nu.space.signs * np.diag(total)).sum().real)
    sweight = spectral_weight(total)
    t_value = None
    if box is not None:
        t_value = t_functional(nu, box)
    elif cs.mode == "trace+boundedness":
        raise ValueError("boundedness mode needs a quadrature box")
    residuals = {"trace": abs(trace - cs.c)}
    if cs.mode == "trace+f":
        residuals["f"] = max(0.0, straceS - cs.f)
    elif cs.mode == "trace+swf":
        residuals["swf"] = max(0.0, sweight - cs.f)
    else:
        residuals["boundedness"] = max(0.0, t_value - cs.C)
    return ConstraintReport(trace, straceS, sweight, t_value, residuals)


def measure_hash(nu):
    blob = json.dumps(measure_to_json(nu), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def evaluation_report(nu, box, cs=None):
    """JSON-ready evaluation record; ``cs`` adds residuals."""
    S, T = integrals(nu.points, nu.weights, box)
    total = nu.total()
    out = {
        "inputs": {
            "measure_sha256": measure_hash(nu),
            "n": nu.space.n,
            "atoms": len(nu),
            "box": {"half_widths": list(box.half_widths)},
            "grid": {"points_per_axis": list(box.points_per_axis), "rule": "trapezoid"},
            "kernel_backend": kernels.BACKEND,
        },
        "outputs": {
            "S": S,
            "S_per_volume": S / box.volume,
            "T": T,
            "trace": total_trace(nu),
            "straceS": float(-(nu.space.signs * np.diag(total)).sum().real),
            "sweight": spectral_weight(total),
        },
        "grid_axes": box.metadata(),
    }
    if cs is not None:
        rep = constraint_report(nu, cs, box)
        out["inputs"]["constraints"] = cs.to_dict()
        out["outputs"]["residuals"] = rep.residuals
    return out


def write_profile_csv(fh, nu, axis, half_width, points):
    """Write ``L`` and ``|A|^2`` along one coordinate axis (others zero)."""
    if axis not in range(4):
        raise ValueError("axis must be 0..3")
    s = np.linspace(-half_width, half_width, int(points))
    nodes = np.zeros((len(s), 4))
    nodes[:, axis] = s
    L, t = lagrangian_profile(nu, nodes)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([f"xi{axis}", "L", "t"])
    for row in zip(s, L, t):
        w.writerow([repr(float(v)) for v in row])
