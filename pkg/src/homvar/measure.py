"""Finitely supported operator-valued measures on a compact momentum box.

An :class:`AtomicMeasure` is a list of atoms ``(k_a, M_a)`` with momentum
points ``k_a`` in R^4 and ``2n x 2n`` complex weights ``M_a``. All scalar
measures ``d<u | omega v>`` are then finite sums of point masses, so norms,
integrals and weak-convergence distances are computed exactly.

Canonical form: coincident atoms are merged by adding weights, atoms whose
weight is exactly zero are dropped, and the remaining atoms are sorted
lexicographically by momentum.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    DimensionError,
    NotConvergedError,
    UnboundedSequenceError,
    ValidationError,
)
from .krein import (
    PREDICATE_TOL,
    SignatureSpace,
    adjoint,
    column_sum_norm,
    is_positive_wrt_ssp,
    is_s_unitary,
    operator_from_json,
    operator_to_json,
)


@dataclass(frozen=True)
class CompactBox:
    """Axis-aligned box ``prod [lo_mu, hi_mu]`` in momentum space."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        if len(lo) != 4 or len(hi) != 4:
            raise ValueError("box corners must be 4-vectors")
        if not all(np.isfinite(lo + hi)) or any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"invalid box lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, points):
        p = np.atleast_2d(points)
        return np.all((p >= np.array(self.lo)) & (p <= np.array(self.hi)), axis=1)

    @classmethod
    def cube(cls, half_width):
        h = float(half_width)
        return cls((-h,) * 4, (h,) * 4)


class ScalarMeasure(NamedTuple):
    """Complex (or real) point masses ``weights[a]`` at ``points[a]``."""

    points: np.ndarray
    weights: np.ndarray

    def total(self):
        return self.weights.sum()


def _canonicalize(points, weights):
    if len(points) == 0:
        return points, weights
    uniq, inverse = np.unique(points, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    merged = np.zeros((len(uniq),) + weights.shape[1:], dtype=complex)
    np.add.at(merged, inverse, weights)
    keep = np.any(merged != 0, axis=(1, 2))
    return uniq[keep], merged[keep]


class AtomicMeasure:
    """Operator-valued measure with finitely many atoms.

    Parameters
    ----------
    space : SignatureSpace
    domain : CompactBox
        The compact momentum set; every atom must lie inside it.
    points : array_like, shape (N, 4)
    weights : array_like, shape (N, 2n, 2n)
    """

    def __init__(self, space, domain, points=(), weights=()):
        if not isinstance(space, SignatureSpace):
            space = SignatureSpace(int(space))
        d = space.dim
        points = np.asarray(points, dtype=float).reshape(-1, 4)
        weights = np.asarray(weights, dtype=complex).reshape(-1, d, d)
        if len(points) != len(weights):
            raise DimensionError(f"{len(points)} points but {len(weights)} weights")
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(weights))):
            raise ValidationError("finite", "atom points and weights must be finite")
        outside = ~domain.contains(points) if len(points) else np.zeros(0, bool)
        if outside.any():
            i = int(np.argmax(outside))
            raise ValidationError("domain", f"atom at k={points[i].tolist()} lies outside {domain}")
        points, weights = _canonicalize(points, weights)
        points.flags.writeable = False
        weights.flags.writeable = False
        self.space = space
        self.domain = domain
        self.points = points
        self.weights = weights

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return f"{type(self).__name__}(n={self.space.n}, atoms={len(self)})"

    @property
    def n(self):
        return self.space.n

    def total(self):
        """The operator ``omega(K)`` of the whole domain."""
        if len(self) == 0:
            return np.zeros((self.space.dim,) * 2, dtype=complex)
        return self.weights.sum(axis=0)

    def with_weights(self, weights):
        return type(self)(self.space, self.domain, self.points, weights)

    def as_atomic(self):
        return AtomicMeasure(self.space, self.domain, self.points, self.weights)

    def _check_compatible(self, other):
        if self.space != other.space:
            raise DimensionError("measures live on different spaces")

    def __add__(self, other):
        self._check_compatible(other)
        cls = type(self) if type(self) is type(other) else AtomicMeasure
        return cls(
            self.space,
            self.domain,
            np.concatenate([self.points, other.points]),
            np.concatenate([self.weights, other.weights]),
        )

    def __neg__(self):
        return AtomicMeasure(self.space, self.domain, self.points, -self.weights)

    def __sub__(self, other):
        return self.as_atomic() + (-other)

    def __mul__(self, t):
        t = complex(t)
        if isinstance(self, NegativeDefiniteMeasure) and t.imag == 0 and t.real >= 0:
            return type(self)(self.space, self.domain, self.points, t.real * self.weights)
        return AtomicMeasure(self.space, self.domain, self.points, t * self.weights)

    __rmul__ = __mul__

    def same_as(self, other, atol=0.0):
        """Equal atom lists up to ``atol`` on the weights."""
        return (
            self.space == other.space
            and self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
            and np.allclose(self.weights, other.weights, rtol=0.0, atol=atol)
        )


def _negative_definite_tol(M):
    return PREDICATE_TOL * max(1.0, column_sum_norm(M))


def is_negative_definite(measure, tol=None):
    """True iff every atom weight ``M`` has ``-M`` positive w.r.t. the spin product."""
    for M in measure.weights:
        t = _negative_definite_tol(M) if tol is None else tol
        if not is_positive_wrt_ssp(measure.space, -M, tol=t):
            return False
    return True


class NegativeDefiniteMeasure(AtomicMeasure):
    """Atomic measure whose weights all satisfy ``S (-M) >= 0``.

    Construction raises :class:`ValidationError` naming the first offending atom.
    """

    def __init__(self, space, domain, points=(), weights=()):
        super().__init__(space, domain, points, weights)
        for a, M in enumerate(self.weights):
            if not is_positive_wrt_ssp(self.space, -M, tol=_negative_definite_tol(M)):
                raise ValidationError(
                    "negative_definite",
                    f"-M is not positive at atom {a} (k={self.points[a].tolist()})",
                )

    @classmethod
    def from_measure(cls, measure):
        return cls(measure.space, measure.domain, measure.points, measure.weights)


def evaluate(omega, region):
    """``omega(region)`` for a predicate ``region(k) -> bool`` on momentum points."""
    total = np.zeros((omega.space.dim,) * 2, dtype=complex)
    for k, M in zip(omega.points, omega.weights):
        if region(k):
            total = total + M
    return total


def _quadratic_form(omega, w):
    # d<w | omega w> per atom
    s = omega.space.signs
    return np.einsum("i,aij,j->a", w.conj(), s[:, None] * omega.weights, w)


def scalar_measure(omega, u, v, method="direct"):
    """The complex measure ``d<u | omega v>``.

    ``method="polarization"`` assembles the same weights from the four
    quadratic forms ``d<w | omega w>`` with ``w = u + i^k v``. The identity is
    arranged for a product that is conjugate-linear in its first slot.
    """
    d = omega.space.dim
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != (d,) or v.shape != (d,):
        raise DimensionError(f"vectors must have length {d}")
    if len(omega) == 0:
        return ScalarMeasure(omega.points, np.zeros(0, dtype=complex))
    if method == "direct":
        s = omega.space.signs
        w = np.einsum("i,aij,j->a", u.conj(), s[:, None] * omega.weights, v)
    elif method == "polarization":
        q = _quadratic_form
        w = 0.25 * (
            q(omega, u + v)
            - q(omega, u - v)
            - 1j * q(omega, u + 1j * v)
            + 1j * q(omega, u - 1j * v)
        )
    else:
        raise ValueError(f"unknown method {method!r}")
    return ScalarMeasure(omega.points, w)


def entry_measures(omega):
    """Array ``E[a, i, j] = <e_i | M_a e_j> = (S M_a)_ij``."""
    return omega.space.signs[None, :, None] * omega.weights


def variation(omega):
    """The variation measure ``d|omega|``: sum over (i, j) of ``|(S M_a)_ij|`` per atom."""
    return ScalarMeasure(omega.points, np.abs(entry_measures(omega)).sum(axis=(1, 2)))


def total_variation(omega):
    return float(variation(omega).weights.sum())


def entry_variation(omega):
    """Matrix of total variations ``d||<e_i | omega e_j>||``."""
    if len(omega) == 0:
        return np.zeros((omega.space.dim,) * 2)
    return np.abs(entry_measures(omega)).sum(axis=0)


def integrate(omega, f):
    """``sum_a f(k_a) M_a`` for a function ``f`` of one momentum point."""
    values = np.array([complex(f(k)) for k in omega.points], dtype=complex)
    if not np.all(np.isfinite(values)):
        raise ValueError("integrand returned non-finite values")
    if len(omega) == 0:
        return np.zeros((omega.space.dim,) * 2, dtype=complex)
    return np.einsum("a,aij->ij", values, omega.weights)


def conjugate(omega, U, tol=1e-8):
    """Measure with weights ``U M_a U^-1``; points are unchanged."""
    space = omega.space
    U = np.asarray(U, dtype=complex)
    if U.shape != (space.dim, space.dim):
        raise DimensionError(f"U must be {space.dim}x{space.dim}")
    try:
        Uinv = np.linalg.inv(U)
    except np.linalg.LinAlgError as exc:
        raise ValueError("U is not invertible") from exc
    if not is_s_unitary(space, U, tol=tol * max(1.0, column_sum_norm(U) ** 2)):
        raise ValueError("U is not unitary with respect to the spin scalar product")
    weights = U[None] @ omega.weights @ Uinv[None]
    if isinstance(omega, NegativeDefiniteMeasure):
        # restore exact S-selfadjointness lost to rounding
        weights = 0.5 * (weights + np.array([adjoint(space, W) for W in weights]))
    return type(omega)(space, omega.domain, omega.points, weights)


def support(omega):
    """Atom points carrying strictly positive variation."""
    var = variation(omega)
    return var.points[var.weights > 0]


def _default_probe_points():
    corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * 4, indexing="ij")).reshape(4, -1).T
    return np.concatenate([0.5 * corners, corners])


DEFAULT_PROBES = _default_probe_points()


def minkowski(k, xi):
    """``<k, xi> = k0 xi0 - k.xi`` broadcast over leading axes."""
    k = np.asarray(k, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return k[..., 0] * xi[..., 0] - (k[..., 1:] * xi[..., 1:]).sum(axis=-1)


def plane_wave(xi):
    """Test function ``k -> exp(i <k, xi>)``."""
    xi = np.asarray(xi, dtype=float)

    def f(k):
        return np.exp(1j * minkowski(k, xi))

    f.xi = xi
    return f


def default_family():
    return [lambda k: 1.0] + [plane_wave(xi) for xi in DEFAULT_PROBES]


def _integrals(omega, family):
    E = entry_measures(omega)
    out = []
    for f in family:
        vals = np.array([complex(f(k)) for k in omega.points], dtype=complex)
        out.append(np.einsum("a,aij->ij", vals, E) if len(omega) else np.zeros(E.shape[1:]))
    return np.array(out)


def weak_distance(omega1, omega2, family=None):
    """Largest discrepancy of ``int f d<e_i | omega e_j>`` over the test family."""
    if omega1.space != omega2.space:
        raise DimensionError("measures live on different spaces")
    family = default_family() if family is None else list(family)
    if not family:
        raise ValueError("test function family is empty")
    diff = _integrals(omega1, family) - _integrals(omega2, family)
    return float(np.abs(diff).max()) if diff.size else 0.0


class JordanSplit(NamedTuple):
    re_plus: ScalarMeasure
    re_minus: ScalarMeasure
    im_plus: ScalarMeasure
    im_minus: ScalarMeasure

    def recombine(self):
        parts = [
            (self.re_plus, 1.0),
            (self.re_minus, -1.0),
            (self.im_plus, 1j),
            (self.im_minus, -1j),
        ]
        pts = np.concatenate([p.points for p, _ in parts])
        w = np.concatenate([c * p.weights for p, c in parts])
        if len(pts) == 0:
            return ScalarMeasure(pts.reshape(0, 4), w.astype(complex))
        uniq, inv = np.unique(pts, axis=0, return_inverse=True)
        acc = np.zeros(len(uniq), dtype=complex)
        np.add.at(acc, inv.reshape(-1), w)
        return ScalarMeasure(uniq, acc)


def jordan_split(sm):
    """Split a complex atomic measure into four mutually-singular positive parts."""
    pts = np.asarray(sm.points, dtype=float).reshape(-1, 4)
    w = np.asarray(sm.weights, dtype=complex)

    def part(values):
        keep = values > 0
        return ScalarMeasure(pts[keep], values[keep])

    return JordanSplit(part(w.real), part(-w.real), part(w.imag), part(-w.imag))


class Subsequence(NamedTuple):
    indices: list
    limit: AtomicMeasure


def _stack_on_union(seq):
    space = seq[0].space
    pts = np.concatenate([m.points for m in seq]) if seq else np.zeros((0, 4))
    union = np.unique(pts, axis=0) if len(pts) else pts.reshape(0, 4)
    X = np.zeros((len(seq), len(union), space.dim, space.dim), dtype=complex)
    for j, m in enumerate(seq):
        if m.space != space:
            raise DimensionError("sequence mixes signature spaces")
        if len(m):
            idx = np.array([np.flatnonzero((union == p).all(axis=1))[0] for p in m.points])
            X[j, idx] = entry_measures(m)
    return union, X


def extract_convergent_subsequence(seq, tol, bound=None):
    """Pick a subsequence whose stacked weight entries converge.

    Finite-sequence analogue of the bounded-subsequence argument: a cluster
    point of the tail is chosen as anchor (the latest term with another term
    within ``tol``) and indices are selected greedily inside balls around it
    whose radii halve down to ``tol / 2``.

    Parameters
    ----------
    seq : list of AtomicMeasure
    tol : float
        Required distance (entrywise sup) between the last two selected terms.
    bound : float, optional
        Uniform bound on the total variations; violating it raises
        :class:`UnboundedSequenceError`.

    Returns
    -------
    Subsequence
        Strictly increasing ``indices`` and the ``limit`` measure (the last
        selected term, re-validated as negative definite when all inputs are).
    """
    seq = list(seq)
    if not seq:
        raise ValueError("empty sequence")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if bound is not None:
        for j, m in enumerate(seq):
            tv = total_variation(m)
            if tv > bound:
                raise UnboundedSequenceError(j, tv, bound)

    _, X = _stack_on_union(seq)
    L = len(seq)
    flat = X.reshape(L, -1)
    dist = np.abs(flat[:, None, :] - flat[None, :, :]).max(axis=2) if flat.shape[1] else np.zeros((L, L))

    # anchor: the latest term that has another term within tol; failing
    # that, the tail term with the most near neighbours
    counts = (dist < tol).sum(axis=1)
    near = np.flatnonzero(counts >= 2)
    if len(near) and near[-1] >= L // 2:
        anchor = int(near[-1])
    else:
        tail = range(L // 2, L)
        best = max(int(counts[j]) for j in tail)
        anchor = max(j for j in tail if counts[j] == best)

    d = dist[anchor]
    radius = max(d.max() / 2, tol / 2)
    chosen = []
    for j in range(L):
        if d[j] <= radius:
            chosen.append(j)
            radius = max(radius / 2, tol / 2)
    if len(chosen) >= 2:
        gap = dist[chosen[-1], chosen[-2]]
        if not gap < tol:
            raise NotConvergedError(f"successive distance {gap:.3e} is not below {tol:.3e}")

    limit = seq[chosen[-1]]
    if all(isinstance(m, NegativeDefiniteMeasure) for m in seq):
        limit = NegativeDefiniteMeasure.from_measure(limit)
    return Subsequence(chosen, limit)


def measure_to_json(measure):
    return {
        "n": measure.space.n,
        "domain": {"lo": list(measure.domain.lo), "hi": list(measure.domain.hi)},
        "atoms": [
            {"k": k.tolist(), "M": operator_to_json(M)}
            for k, M in zip(measure.points, measure.weights)
        ],
    }


def measure_from_json(obj, negative_definite=True):
    """Parse the measure file schema; atoms are re-canonicalized on read."""
    try:
        space = SignatureSpace(int(obj["n"]))
        domain = CompactBox(obj["domain"]["lo"], obj["domain"]["hi"])
        atoms = obj["atoms"]
        points = np.array([a["k"] for a in atoms], dtype=float).reshape(-1, 4)
        weights = np.array(
            [operator_from_json(a["M"], space) for a in atoms], dtype=complex
        ).reshape(-1, space.dim, space.dim)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError("schema", str(exc)) from exc
    cls = NegativeDefiniteMeasure if negative_definite else AtomicMeasure
    return cls(space, domain, points, weights)
