"""Linear algebra on the indefinite inner product space (C^2n, <u|Sv>).

Operators are plain complex ``numpy`` arrays expressed in the standard basis.
The signature matrix is ``S = diag(1, ..., 1, -1, ..., -1)`` with ``n`` entries
of each sign, so ``S = S^-1 = S^dagger``.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, EigenSolverError, NeutralDegeneracyError

PREDICATE_TOL = 1e-9
DIAG_EPS = 1e-6
NEUTRAL_PIVOT = 1e-8


@dataclass(frozen=True)
class SignatureSpace:
    """The space C^2n with signature (n, n)."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")

    @property
    def dim(self):
        return 2 * self.n

    @cached_property
    def signs(self):
        s = np.ones(self.dim)
        s[self.n:] = -1.0
        s.flags.writeable = False
        return s

    @cached_property
    def S(self):
        s = np.diag(self.signs).astype(complex)
        s.flags.writeable = False
        return s

    def identity(self):
        return np.eye(self.dim, dtype=complex)


def as_operator(space, A):
    """Validate ``A`` as a finite ``2n x 2n`` operator and return a complex copy."""
    A = np.array(A, dtype=complex)
    if A.shape != (space.dim, space.dim):
        raise DimensionError(f"expected a {space.dim}x{space.dim} operator, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("operator has non-finite entries")
    return A


def _as_vector(space, u):
    u = np.asarray(u, dtype=complex)
    if u.shape != (space.dim,):
        raise DimensionError(f"expected a vector of length {space.dim}, got shape {u.shape}")
    return u


def _check_square(A, space=None):
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    if space is not None and A.shape[0] != space.dim:
        raise DimensionError(f"expected dimension {space.dim}, got {A.shape[0]}")
    return A


def ssp(space, u, v):
    """Spin scalar product ``<u | S v>``, conjugate-linear in ``u``."""
    u = _as_vector(space, u)
    v = _as_vector(space, v)
    return complex(np.vdot(u, space.signs * v))


def adjoint(space, A):
    """Adjoint with respect to the spin scalar product, ``S A^dagger S``."""
    A = _check_square(A, space)
    s = space.signs
    return s[:, None] * A.conj().T * s[None, :]


def column_sum_norm(A):
    """Maximum absolute column sum."""
    A = _check_square(A)
    return float(np.abs(A).sum(axis=0).max()) if A.size else 0.0


def is_s_selfadjoint(space, A, tol=PREDICATE_TOL):
    A = _check_square(A, space)
    return column_sum_norm(A - adjoint(space, A)) <= tol


def is_s_unitary(space, U, tol=PREDICATE_TOL):
    U = _check_square(U, space)
    return column_sum_norm(U @ adjoint(space, U) - np.eye(space.dim)) <= tol


def is_positive_wrt_ssp(space, B, tol=PREDICATE_TOL):
    """True iff ``<u | B u> >= 0`` for all ``u``.

    Equivalent to ``S B`` being Hermitian positive semidefinite.
    """
    B = _check_square(B, space)
    H = space.signs[:, None] * B
    if column_sum_norm(H - H.conj().T) > tol:
        return False
    H = 0.5 * (H + H.conj().T)
    return bool(np.linalg.eigvalsh(H).min() >= -tol)


def _lapack_iteration_cap(dim):
    # zlahqr gives up after 30 * max(10, nh) sweeps
    return 30 * max(10, dim)


def canonical_order(values):
    """Indices sorting eigenvalues descending by real part, then imaginary part."""
    values = np.asarray(values)
    return np.lexsort((-values.imag, -values.real), axis=-1)


def eigenvalues(A):
    """All eigenvalues with algebraic multiplicity, canonically ordered."""
    A = _check_square(A)
    if not np.all(np.isfinite(A)):
        raise ValueError("operator has non-finite entries")
    try:
        w = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(column_sum_norm(A), _lapack_iteration_cap(A.shape[0]), str(exc)) from exc
    return w[canonical_order(w)]


def eigenvalues_batch(stack):
    """Eigenvalues of a stack of square matrices (unordered along the last axis)."""
    try:
        return np.linalg.eigvals(stack)
    except np.linalg.LinAlgError:
        # locate the offender for a useful error
        flat = stack.reshape(-1, *stack.shape[-2:])
        for A in flat:
            eigenvalues(A)
        raise


def spectral_weight(A):
    """Sum of absolute values of the eigenvalues."""
    return float(np.abs(eigenvalues(A)).sum())


class Diagonalization(NamedTuple):
    U: np.ndarray
    D: np.ndarray
    Delta: np.ndarray


class _NeutralPivot(Exception):
    def __init__(self, pivot):
        self.pivot = pivot


def _fix_phase(v):
    # make the first dominant component real positive; keeps gauges continuous along sequences
    a = np.abs(v)
    k = int(np.argmax(a >= 0.5 * a.max()))
    return v * (np.conj(v[k]) / a[k])


def _s_orthonormal_eigenbasis(space, M, eps):
    """Eigenvectors of ``M`` S-orthonormalized within eigenvalue clusters.

    Returns ``(V, lam, sigma)`` with columns of ``V`` satisfying
    ``V^dagger S V = diag(sigma)``.
    """
    dim = space.dim
    scale = 1.0 + column_sum_norm(M)
    w, V = np.linalg.eig(M)
    if np.abs(w.imag).max() > 1e-7 * scale:
        raise _NeutralPivot(0.0)
    lam = w.real
    order = np.argsort(-lam, kind="stable")
    lam, V = lam[order], V[:, order]

    gap = eps / (4 * space.n)
    clusters, start = [], 0
    for i in range(1, dim + 1):
        if i == dim or lam[i - 1] - lam[i] > gap:
            clusters.append(range(start, i))
            start = i

    s = space.signs
    cols, lams, sigmas = [], [], []
    for cl in clusters:
        work = [V[:, i] / np.linalg.norm(V[:, i]) for i in cl]
        cl_lam = [lam[i] for i in cl]
        while work:
            norms = [np.vdot(x, s * x).real for x in work]
            k = int(np.argmax(np.abs(norms)))
            if abs(norms[k]) < NEUTRAL_PIVOT:
                raise _NeutralPivot(abs(norms[k]))
            v = work.pop(k)
            sig = 1.0 if norms[k] > 0 else -1.0
            v = _fix_phase(v / np.sqrt(abs(norms[k])))
            cols.append(v)
            lams.append(cl_lam.pop(k))
            sigmas.append(sig)
            work = [x - sig * np.vdot(v, s * x) * v for x in work]
            lengths = [np.linalg.norm(x) for x in work]
            if lengths and min(lengths) < 1e-12:
                raise _NeutralPivot(0.0)
            work = [x / r for x, r in zip(work, lengths)]
    return np.column_stack(cols), np.array(lams), np.array(sigmas)


def _diagonalize_once(space, M, eps):
    V, lam, sigma = _s_orthonormal_eigenbasis(space, M, eps)
    if int((sigma > 0).sum()) != space.n:
        raise _NeutralPivot(0.0)
    # positive-norm columns first, each block by descending -lambda
    order = np.lexsort((lam, -sigma))
    V, lam = V[:, order], lam[order]
    U = np.linalg.inv(V)
    D = -lam + 0.0
    return U, D


def approximate_diagonalize(space, M, eps=DIAG_EPS):
    """S-unitary ``U`` with ``U M U^-1 = -diag(D) + Delta`` and ``||Delta||_1 < eps``.

    ``-M`` must be positive with respect to the spin scalar product. ``D`` is
    returned as a real vector sorted in descending order. When a cluster has
    no non-neutral pivot, ``M`` is shifted by ``-eps/(8n) S`` and the
    construction is retried once.

    Raises
    ------
    NeutralDegeneracyError
        If no admissible ``U`` is found, or the result misses a postcondition.
    """
    M = as_operator(space, M)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not is_positive_wrt_ssp(space, -M, tol=PREDICATE_TOL * (1.0 + column_sum_norm(M))):
        raise ValueError("-M is not positive with respect to the spin scalar product")

    try:
        U, D = _diagonalize_once(space, M, eps)
    except _NeutralPivot:
        shifted = M - (eps / (8 * space.n)) * space.S
        try:
            U, D = _diagonalize_once(space, shifted, eps)
        except _NeutralPivot as exc:
            raise NeutralDegeneracyError(exc.pivot, "after perturbation fallback") from None

    Uinv = adjoint(space, U)
    Delta = U @ M @ np.linalg.inv(U) + np.diag(D)
    unitary_err = column_sum_norm(U @ Uinv - np.eye(space.dim))
    if unitary_err > eps / 10:
        raise NeutralDegeneracyError(0.0, f"U is s-unitary only within {unitary_err:.3e}")
    delta_norm = column_sum_norm(Delta)
    if not delta_norm < eps:
        raise NeutralDegeneracyError(0.0, f"||Delta||_1 = {delta_norm:.3e} >= {eps:.3e}")
    spec = np.sort(eigenvalues(M).real)
    drift = np.abs(np.sort(-D) - spec).sum()
    if drift > eps:
        raise NeutralDegeneracyError(0.0, f"spectral drift {drift:.3e} exceeds {eps:.3e}")
    return Diagonalization(U, D, Delta)


def operator_to_json(A):
    A = np.asarray(A, dtype=complex)
    return {"re": A.real.tolist(), "im": A.imag.tolist()}


def operator_from_json(obj, space=None):
    A = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
    if space is not None:
        return as_operator(space, A)
    return A
