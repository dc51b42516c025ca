"""Penalized, trace-projected descent on the truncated causal action.

Atom locations are fixed. Each weight is parameterized by a factor
``B_a`` (``r x 2n``) through ``M_a = -S B_a^dagger B_a``, which keeps every
iterate negative definite. Gradients are central finite differences; steps
are taken along the normalized gradient with a length relative to the
parameter norm, so runs are equivariant under rescaling of the constraints.
"""

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .action import ConstraintSet, QuadratureBox, evaluation_report, integrals
from .errors import TraceProjectionError, ValidationError
from .krein import SignatureSpace, approximate_diagonalize, spectral_weight, DIAG_EPS
from .measure import CompactBox, NegativeDefiniteMeasure, conjugate
from .parallel import ordered_map

TIE_TOL = 1e-14


class FactorParameterization:
    """Per-atom factors ``B`` of shape ``(N, r, 2n)`` at fixed points."""

    def __init__(self, space, domain, points, B):
        if not isinstance(space, SignatureSpace):
            space = SignatureSpace(int(space))
        points = np.asarray(points, dtype=float).reshape(-1, 4)
        B = np.asarray(B, dtype=complex)
        if B.ndim != 3 or B.shape[0] != len(points) or B.shape[2] != space.dim:
            raise ValueError(f"B must have shape (N, r, {space.dim}) with N={len(points)}, got {B.shape}")
        if not 1 <= B.shape[1] <= space.dim:
            raise ValueError(f"rank budget must be in 1..{space.dim}")
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(B))):
            raise ValueError("non-finite parameters")
        self.space = space
        self.domain = domain
        self.points = points
        self.B = B

    @property
    def rank(self):
        return self.B.shape[1]

    @property
    def size(self):
        return 2 * self.B.size

    def weights(self):
        return weights_from_factors(self.space, self.B)

    def trace(self):
        # Tr M_a = -sum_i s_i (B^dagger B)_ii
        col = (np.abs(self.B) ** 2).sum(axis=(0, 1))
        return float(-(self.space.signs * col).sum())

    def to_measure(self):
        return NegativeDefiniteMeasure(self.space, self.domain, self.points, self.weights())

    def vector(self):
        return np.concatenate([self.B.real.ravel(), self.B.imag.ravel()])

    def with_vector(self, x):
        h = len(x) // 2
        B = (x[:h] + 1j * x[h:]).reshape(self.B.shape)
        return FactorParameterization(self.space, self.domain, self.points, B)

    def scaled(self, t):
        return FactorParameterization(self.space, self.domain, self.points, t * self.B)

    @classmethod
    def from_measure(cls, nu, rank=None):
        """Factor each weight via the PSD square root of ``S (-M_a)``."""
        if not isinstance(nu, NegativeDefiniteMeasure):
            nu = NegativeDefiniteMeasure.from_measure(nu)
        space = nu.space
        r = space.dim if rank is None else int(rank)
        H = -space.signs[None, :, None] * nu.weights
        H = 0.5 * (H + np.conj(np.swapaxes(H, 1, 2)))
        w, V = np.linalg.eigh(H)
        w, V = w[:, ::-1][:, :r], V[:, :, ::-1][:, :, :r]
        B = np.sqrt(np.clip(w, 0.0, None))[:, :, None] * np.conj(np.swapaxes(V, 1, 2))
        return cls(space, nu.domain, nu.points, B)

    @classmethod
    def random(cls, space, domain, atoms, rng, rank=None):
        """Uniform points in ``domain`` and standard complex Gaussian factors."""
        if not isinstance(space, SignatureSpace):
            space = SignatureSpace(int(space))
        r = space.dim if rank is None else int(rank)
        lo, hi = np.array(domain.lo), np.array(domain.hi)
        points = lo + (hi - lo) * rng.random((atoms, 4))
        B = rng.standard_normal((atoms, r, space.dim)) + 1j * rng.standard_normal((atoms, r, space.dim))
        return cls(space, domain, points, B / math.sqrt(2))


def weights_from_factors(space, B):
    H = np.einsum("ari,arj->aij", B.conj(), B)
    return -space.signs[None, :, None] * H


@dataclass(frozen=True)
class RunConfig:
    """Optimizer settings. ``rho`` in epoch ``e`` is ``rho0 * rho_growth**e``."""

    constraints: ConstraintSet
    box: QuadratureBox
    max_iterations: int = 200
    initial_step: float = 0.05
    shrink: float = 0.5
    grow: float = 2.0
    max_step: float = 0.5
    min_step: float = 1e-12
    fd_step: float = 1e-6
    rho0: float = 10.0
    rho_growth: float = 10.0
    epochs: int = 5
    tol_action: float = 1e-10
    tol_grad: float = 1e-8
    tol_residual: float = 1e-6
    seed: int = 0
    rank: Optional[int] = None

    def __post_init__(self):
        for name in ("initial_step", "max_step", "min_step", "fd_step", "rho0",
                     "tol_action", "tol_grad", "tol_residual"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v}")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not self.grow >= 1:
            raise ValueError("grow must be >= 1")
        if not self.rho_growth >= 1:
            raise ValueError("rho_growth must be >= 1")
        if self.max_iterations < 0 or self.epochs < 1:
            raise ValueError("max_iterations must be >= 0 and epochs >= 1")

    def rho(self, epoch):
        return self.rho0 * self.rho_growth**epoch

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "constraints":
                v = v.to_dict()
            elif f.name == "box":
                v = {"half_widths": list(v.half_widths), "points_per_axis": list(v.points_per_axis)}
            out[f.name] = v
        return out


# key-value run file: "key = value", '#' starts a comment
_CONFIG_SCALARS = {
    "max_iterations": int, "initial_step": float, "shrink": float, "grow": float,
    "max_step": float, "min_step": float, "fd_step": float, "rho0": float,
    "rho_growth": float, "epochs": int, "tol_action": float, "tol_grad": float,
    "tol_residual": float, "seed": int, "rank": int,
}
_CONFIG_EXTRA = ("initial", "output", "history", "n", "atoms", "domain_lo", "domain_hi")
CONFIG_KEYS = ("mode", "c", "f", "C", "box", "grid") + tuple(_CONFIG_SCALARS) + _CONFIG_EXTRA


def _floats(text, count):
    vals = [float(v) for v in text.replace(",", " ").split()]
    if len(vals) != count:
        raise ValueError(f"expected {count} numbers, got {text!r}")
    return vals


def parse_config(text, base_dir="."):
    """Parse a run file into ``(RunConfig, extras)``.

    Required keys: ``mode``, ``c``, ``f`` or ``C``, ``box`` (four half widths),
    ``grid`` (four point counts). ``extras`` carries the start specification
    (``initial`` measure path, or ``n``/``atoms``/``domain_lo``/``domain_hi``
    for a seeded random start) and the ``output``/``history`` paths, resolved
    relative to ``base_dir``.
    """
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError("config", f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValidationError("config", f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ValidationError("config", f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    try:
        cs = ConstraintSet(
            c=float(raw["c"]),
            mode=raw.get("mode", "trace+f"),
            f=float(raw["f"]) if "f" in raw else None,
            C=float(raw["C"]) if "C" in raw else None,
        )
        box = QuadratureBox(_floats(raw["box"], 4), [int(v) for v in _floats(raw["grid"], 4)])
        kw = {k: conv(raw[k]) for k, conv in _CONFIG_SCALARS.items() if k in raw}
        cfg = RunConfig(constraints=cs, box=box, **kw)
        extras = {}
        base = Path(base_dir)
        for key in ("initial", "output", "history"):
            if key in raw:
                extras[key] = base / raw[key]
        if "initial" not in raw:
            extras["n"] = int(raw.get("n", 1))
            extras["atoms"] = int(raw.get("atoms", 5))
            lo = _floats(raw.get("domain_lo", "-2 -1 -1 -1"), 4)
            hi = _floats(raw.get("domain_hi", "-1 1 1 1"), 4)
            extras["domain"] = CompactBox(lo, hi)
    except KeyError as exc:
        raise ValidationError("config", f"missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError("config", str(exc)) from None
    return cfg, extras


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


class State(NamedTuple):
    objective: float
    S: float
    T: float
    trace: float
    residual_trace: float
    residual_ineq: float


def _inequality_value(space, B, cs, T):
    if cs.mode == "trace+f":
        return float((np.abs(B) ** 2).sum())  # Tr(-S M) = ||B||_F^2
    if cs.mode == "trace+swf":
        return spectral_weight(weights_from_factors(space, B).sum(axis=0))
    return T


def evaluate_state(params, cfg, rho, nodes=None):
    """Objective and its ingredients at ``params`` for penalty weight ``rho``."""
    cs = cfg.constraints
    M = params.weights()
    S, T = integrals(params.points, M, cfg.box, nodes)
    trace = float(np.trace(M.sum(axis=0)).real) if len(M) else 0.0
    r_tr = abs(trace - cs.c)
    r_in = max(0.0, _inequality_value(params.space, params.B, cs, T) - cs.bound)
    obj = S + rho * r_tr**2 + rho * r_in**2
    return State(obj, S, T, trace, r_tr, r_in)


def objective(params, cfg, rho=None):
    """``S_Lambda + rho (trace - c)^2 + rho (inequality excess)^2``."""
    rho = cfg.rho0 if rho is None else rho
    return evaluate_state(params, cfg, rho).objective


def project_trace(params, c):
    """Rescale all factors by ``sqrt(c / tau)`` so the trace becomes ``c``."""
    tau = params.trace()
    if abs(tau) <= 1e-12 or math.copysign(1.0, tau) != math.copysign(1.0, c):
        raise TraceProjectionError(tau, c)
    return params.scaled(math.sqrt(c / tau))


def _try_project(params, c):
    try:
        return project_trace(params, c)
    except TraceProjectionError:
        return params


def fd_gradient(params, cfg, rho, nodes=None):
    """Central finite-difference gradient of the trace-reduced objective.

    Each probe is projected onto the trace surface (when the projection is
    defined) before evaluation, so the gradient matches the way trial steps
    are formed in :func:`minimize`.
    """
    x = params.vector()
    h = cfg.fd_step * max(float(np.sqrt(np.mean(x * x))), 1e-300)

    def probe(i):
        e = np.zeros_like(x)
        e[i] = h
        c = cfg.constraints.c
        fp = evaluate_state(_try_project(params.with_vector(x + e), c), cfg, rho, nodes).objective
        fm = evaluate_state(_try_project(params.with_vector(x - e), c), cfg, rho, nodes).objective
        return (fp - fm) / (2 * h)

    return np.array(ordered_map(probe, range(len(x))))


class HistoryRow(NamedTuple):
    iteration: int
    epoch: int
    rho: float
    S: float
    T: float
    trace: float
    residual_trace: float
    residual_ineq: float
    objective: float
    step: float


HISTORY_HEADER = HistoryRow._fields


class MinimizeResult(NamedTuple):
    measure: NegativeDefiniteMeasure
    params: FactorParameterization
    report: dict
    history: list
    status: str
    converged: bool
    iterates: list


def is_feasible(state, cfg):
    cs = cfg.constraints
    return (
        state.residual_trace <= cfg.tol_residual * abs(cs.c)
        and state.residual_ineq <= cfg.tol_residual * max(1.0, cs.bound)
    )


def minimize(initial, cfg, keep_iterates=False):
    """Minimize ``S_Lambda`` under ``cfg.constraints`` starting from ``initial``.

    A trial step is accepted only if the objective drops by more than the tie
    tolerance and ``S_Lambda`` does not increase, so both columns of the
    history are non-increasing within an epoch. The penalty weight grows
    between epochs; the objective column restarts at each epoch boundary.

    Returns
    -------
    MinimizeResult
        ``status`` is one of ``action_tol``, ``grad_tol``, ``stalled``,
        ``max_iterations``, ``infeasible``, ``non_finite``.
    """
    if isinstance(initial, FactorParameterization):
        params = initial
    else:
        params = FactorParameterization.from_measure(initial, rank=cfg.rank)
    cs = cfg.constraints
    nodes = cfg.box.nodes()
    if cfg.max_iterations > 0:
        params = _try_project(params, cs.c)

    rho = cfg.rho(0)
    state = evaluate_state(params, cfg, rho, nodes)
    history = [HistoryRow(0, 0, rho, *state[1:], state.objective, 0.0)]
    iterates = [params] if keep_iterates else []
    it, alpha, status = 0, cfg.initial_step, "max_iterations"

    for epoch in range(cfg.epochs):
        rho = cfg.rho(epoch)
        state = evaluate_state(params, cfg, rho, nodes)
        if not math.isfinite(state.objective):
            status = "non_finite"
            break
        epoch_status = "max_iterations"
        while it < cfg.max_iterations:
            g = fd_gradient(params, cfg, rho, nodes)
            gn = float(np.linalg.norm(g))
            x = params.vector()
            xn = float(np.linalg.norm(x))
            if not np.all(np.isfinite(g)):
                epoch_status = "non_finite"
                break
            if gn * xn <= cfg.tol_grad * max(abs(state.objective), 1e-300):
                epoch_status = "grad_tol"
                break
            direction = (xn if xn > 0 else 1.0) * g / gn
            accepted = None
            while alpha >= cfg.min_step:
                cand = _try_project(params.with_vector(x - alpha * direction), cs.c)
                st = evaluate_state(cand, cfg, rho, nodes)
                tie = TIE_TOL * max(1.0, abs(state.objective))
                if st.objective < state.objective - tie and st.S <= state.S:
                    accepted = (cand, st)
                    break
                alpha *= cfg.shrink
            if accepted is None:
                epoch_status = "stalled"
                alpha = cfg.initial_step
                break
            it += 1
            decrease = state.objective - accepted[1].objective
            params, state = accepted
            history.append(HistoryRow(it, epoch, rho, *state[1:], state.objective, alpha))
            if keep_iterates:
                iterates.append(params)
            alpha = min(alpha * cfg.grow, cfg.max_step)
            if decrease <= cfg.tol_action * max(abs(state.objective), 1e-300):
                epoch_status = "action_tol"
                break
        status = epoch_status
        if status in ("non_finite", "max_iterations") or is_feasible(state, cfg):
            break
    else:
        status = "infeasible"

    converged = status in ("action_tol", "grad_tol", "stalled") and is_feasible(state, cfg)
    if it == 0 and cfg.max_iterations == 0 and isinstance(initial, NegativeDefiniteMeasure):
        measure = initial  # nothing moved; avoid a round trip through the factors
    else:
        measure = params.to_measure()
    report = evaluation_report(measure, cfg.box, cs)
    report["run"] = {
        "status": status,
        "converged": converged,
        "iterations": it,
        "config": cfg.to_dict(),
    }
    return MinimizeResult(measure, params, report, history, status, converged, iterates)


def write_history_csv(fh, history):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(HISTORY_HEADER)
    for row in history:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])


class GaugeResult(NamedTuple):
    U: np.ndarray
    measure: NegativeDefiniteMeasure


def gauge_normalize(nu, eps=DIAG_EPS):
    """Conjugate ``nu`` by the s-unitary that nearly diagonalizes ``nu(K)``.

    Afterwards the total variation is bounded by ``(2n)^3 (|nu(K)| + 1)``.
    """
    if not isinstance(nu, NegativeDefiniteMeasure):
        nu = NegativeDefiniteMeasure.from_measure(nu)
    U = approximate_diagonalize(nu.space, nu.total(), eps).U
    return GaugeResult(U, conjugate(nu, U))


def variation_bound(n, f):
    return (2 * n) ** 3 * (f + 1)
