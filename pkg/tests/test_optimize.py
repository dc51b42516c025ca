import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from homvar.action import ConstraintSet, QuadratureBox, action
from homvar.errors import TraceProjectionError, ValidationError
from homvar.harness import DEFAULT_DOMAIN, random_nd_measure, random_s_unitary
from homvar.krein import SignatureSpace, approximate_diagonalize, is_positive_wrt_ssp, spectral_weight
from homvar.measure import NegativeDefiniteMeasure, conjugate, is_negative_definite, total_variation
from homvar.optimize import (
    HISTORY_HEADER,
    FactorParameterization,
    RunConfig,
    evaluate_state,
    fd_gradient,
    gauge_normalize,
    is_feasible,
    load_config,
    minimize,
    objective,
    parse_config,
    project_trace,
    variation_bound,
    weights_from_factors,
    write_history_csv,
)

S1, S2 = SignatureSpace(1), SignatureSpace(2)
BOX = QuadratureBox((2.0,) * 4, (3, 3, 3, 3))
seeds = st.integers(0, 2**32 - 1)


def cfg_for(c=1.0, mode="trace+f", bound=3.0, **kw):
    key = "C" if mode == "trace+boundedness" else "f"
    return RunConfig(ConstraintSet(c, mode, **{key: bound}), BOX, **kw)


def random_params(seed, n=1, atoms=3, rank=None):
    return FactorParameterization.random(SignatureSpace(n), DEFAULT_DOMAIN, atoms, np.random.default_rng(seed), rank)


@given(seeds, st.integers(1, 3))
def test_factor_weights_in_cone(seed, n):
    p = random_params(seed, n, rank=1 + seed % (2 * n))
    for M in p.weights():
        assert is_positive_wrt_ssp(p.space, -M)
    assert p.trace() == pytest.approx(np.trace(p.weights().sum(axis=0)).real, rel=1e-12, abs=1e-12)
    assert isinstance(p.to_measure(), NegativeDefiniteMeasure)


def test_factor_roundtrip_from_measure():
    rng = np.random.default_rng(0)
    nu = random_nd_measure(rng, 2, 3)
    p = FactorParameterization.from_measure(nu)
    assert np.abs(p.weights() - nu.weights).max() <= 1e-12 * np.abs(nu.weights).max()
    assert p.rank == 4
    assert np.array_equal(p.with_vector(p.vector()).B, p.B)


def test_factor_validation():
    with pytest.raises(ValueError):
        FactorParameterization(S1, DEFAULT_DOMAIN, np.zeros((2, 4)), np.zeros((2, 3, 2)))
    with pytest.raises(ValueError):
        FactorParameterization(S1, DEFAULT_DOMAIN, np.zeros((2, 4)), np.zeros((1, 2, 2)))
    with pytest.raises(ValueError):
        FactorParameterization(S1, DEFAULT_DOMAIN, np.zeros((1, 4)), np.full((1, 2, 2), np.nan))


def test_run_config_validation():
    with pytest.raises(ValueError):
        cfg_for(tol_action=0.0)
    with pytest.raises(ValueError):
        cfg_for(shrink=1.0)
    with pytest.raises(ValueError):
        cfg_for(max_iterations=-1)
    cfg = cfg_for()
    assert cfg.rho(0) == 10 and cfg.rho(2) == 1000
    assert cfg.to_dict()["constraints"] == {"mode": "trace+f", "c": 1.0, "f": 3.0}


def test_objective_zero_params_is_trace_penalty():
    p = FactorParameterization(S1, DEFAULT_DOMAIN, [[-1.5, 0, 0, 0]], np.zeros((1, 2, 2)))
    for c in (1.0, -2.5):
        cfg = cfg_for(c=c)
        assert objective(p, cfg) == pytest.approx(cfg.rho0 * c * c, rel=1e-15)


def test_objective_zero_action_measure():
    # a single atom M = -a S has A = a^2 I, so L = 0, but its trace vanishes
    a = 0.8
    p = FactorParameterization(S1, DEFAULT_DOMAIN, [[-1.5, 0, 0, 0]], math.sqrt(a) * np.eye(2)[None])
    assert np.allclose(p.weights()[0], -a * S1.S)
    st_ = evaluate_state(p, cfg_for(c=1.0, mode="trace+swf", bound=5.0), 10.0)
    assert st_.S == pytest.approx(0.0, abs=1e-12) and st_.trace == 0.0
    assert st_.objective == pytest.approx(10.0)
    assert st_.residual_ineq == 0.0


def test_objective_monotone_in_rho():
    p = random_params(1)
    cfg = cfg_for(c=1.0, bound=0.1)
    s = evaluate_state(p, cfg, 10.0)
    assert s.residual_trace > 0 or s.residual_ineq > 0
    assert objective(p, cfg, 20.0) > objective(p, cfg, 10.0)


def test_project_trace_examples():
    rng = np.random.default_rng(2)
    for _ in range(50):
        p = random_params(int(rng.integers(1 << 30)), n=int(rng.integers(1, 3)))
        tau = p.trace()
        c = math.copysign(rng.uniform(0.1, 10), tau)
        q = project_trace(p, c)
        assert abs(q.trace() - c) <= 1e-12 * abs(c)
        assert is_negative_definite(q.to_measure())
    p = random_params(3)
    tau = p.trace()
    same = project_trace(p, tau)
    assert np.allclose(same.B, p.B, rtol=1e-15)
    q = project_trace(p, tau / 4)
    assert np.allclose(q.B, p.B / 2) and np.allclose(q.weights(), p.weights() / 4)


def test_project_trace_errors():
    p = random_params(4)
    with pytest.raises(TraceProjectionError):
        project_trace(p, -p.trace())
    neutral = FactorParameterization(S1, DEFAULT_DOMAIN, [[-1.5, 0, 0, 0]], np.eye(2)[None])
    with pytest.raises(TraceProjectionError):
        project_trace(neutral, 1.0)


def test_fd_gradient_matches_directional_derivative():
    p = random_params(5)
    p = project_trace(p, math.copysign(1.0, p.trace()))
    cfg = cfg_for(c=math.copysign(1.0, p.trace()), bound=100.0)
    g = fd_gradient(p, cfg, 10.0)
    rng = np.random.default_rng(5)
    d = rng.standard_normal(len(g))
    h = 1e-5
    x = p.vector()
    from homvar.optimize import _try_project
    f = lambda y: evaluate_state(_try_project(p.with_vector(y), cfg.constraints.c), cfg, 10.0).objective  # noqa: E731
    num = (f(x + h * d) - f(x - h * d)) / (2 * h)
    assert g @ d == pytest.approx(num, rel=1e-3, abs=1e-6 * np.abs(g).sum())


def _run(seed, mode="trace+f", bound=3.0, iters=25):
    p = random_params(seed)
    c = math.copysign(1.0, p.trace())
    return minimize(p, cfg_for(c=c, mode=mode, bound=bound, max_iterations=iters, seed=seed))


@pytest.mark.parametrize("mode,bound", [("trace+f", 3.0), ("trace+swf", 3.0), ("trace+boundedness", 50.0)])
def test_minimize_contract(mode, bound):
    for seed in range(3):
        res = _run(seed, mode, bound)
        S = [r.S for r in res.history]
        assert all(b <= a for a, b in zip(S, S[1:]))
        by_epoch = {}
        for r in res.history[1:]:
            by_epoch.setdefault(r.epoch, []).append(r.objective)
        for obj in by_epoch.values():
            assert all(b < a for a, b in zip(obj, obj[1:]))
        assert is_negative_definite(res.measure)
        assert res.status in ("action_tol", "grad_tol", "stalled", "max_iterations", "infeasible", "non_finite")
        assert set(res.report["outputs"]["residuals"]) >= {"trace"}
        if res.converged:
            cs = res.report["run"]["config"]["constraints"]
            assert res.report["outputs"]["residuals"]["trace"] <= 1e-6 * abs(cs["c"])


def test_minimize_deterministic():
    a, b = _run(7), _run(7)
    assert a.history == b.history
    assert np.array_equal(a.measure.weights, b.measure.weights)


def test_minimize_reduces_action():
    res = _run(8, iters=40)
    assert res.history[-1].S < 0.5 * res.history[0].S


def test_minimize_zero_iterations_echoes_measure():
    rng = np.random.default_rng(9)
    nu = random_nd_measure(rng, 1, 3)
    res = minimize(nu, cfg_for(c=1.0, max_iterations=0))
    assert res.measure is nu
    assert res.status == "max_iterations" and not res.converged
    assert len(res.history) == 1


def test_minimize_degenerate_trace_start():
    a = 0.5
    p = FactorParameterization(S1, DEFAULT_DOMAIN, [[-1.5, 0, 0, 0], [-1.2, 0.3, 0, 0]],
                               math.sqrt(a) * np.stack([np.eye(2), np.eye(2)]))
    res = minimize(p, cfg_for(c=1.0, mode="trace+swf", bound=5.0, max_iterations=15))
    # S = 0 is the global minimum of the action, so no step can keep S from
    # increasing; the run must end cleanly without claiming convergence
    assert res.history[0].S == pytest.approx(0.0, abs=1e-12)
    assert not res.converged and res.status == "infeasible"
    assert is_negative_definite(res.measure)


def test_minimize_scaling_sanity():
    t = 2.0
    for seed in range(3):
        finals = []
        for s in (1.0, t):
            p = random_params(seed)
            c = math.copysign(1.0, p.trace())
            res = minimize(p, RunConfig(ConstraintSet(s * c, "trace+f", f=s * 3.0), BOX, max_iterations=40))
            finals.append(res.history[-1].S)
        assert abs(finals[1] / finals[0] - t**4) <= 0.05 * t**4


def test_history_csv():
    res = _run(10, iters=3)
    buf = io.StringIO()
    write_history_csv(buf, res.history)
    lines = buf.getvalue().splitlines()
    assert lines[0].split(",") == list(HISTORY_HEADER)
    assert len(lines) == len(res.history) + 1
    assert float(lines[-1].split(",")[3]) == res.history[-1].S


def test_is_feasible():
    cfg = cfg_for(c=2.0, bound=3.0)
    from homvar.optimize import State
    assert is_feasible(State(0, 0, 0, 2.0, 1e-7, 0.0), cfg)
    assert not is_feasible(State(0, 0, 0, 2.0, 1e-5, 0.0), cfg)
    assert not is_feasible(State(0, 0, 0, 2.0, 0.0, 1e-4), cfg)


def test_gauge_diagonal_is_identity():
    nu = NegativeDefiniteMeasure(S1, DEFAULT_DOMAIN, [[-1.5, 0, 0, 0]], [np.diag([-2.0, 1.0])])
    g = gauge_normalize(nu)
    assert np.allclose(g.U, np.eye(2))
    assert g.measure.same_as(nu, atol=1e-15)


def test_gauge_bound_and_invariance():
    rng = np.random.default_rng(11)
    done = 0
    while done < 100:
        n = int(rng.integers(1, 3))
        nu = random_nd_measure(rng, n)
        try:
            g = gauge_normalize(nu)
        except Exception:  # neutral degeneracy has measure zero for Gaussian factors
            continue
        done += 1
        bound = variation_bound(n, spectral_weight(nu.total()))
        assert total_variation(g.measure) <= bound + 1e-6
        S0 = action(nu, BOX)
        assert abs(action(g.measure, BOX) - S0) <= 1e-7 * max(S0, 1e-300) + 1e-12 * total_variation(nu) ** 4


def test_variation_bound_value():
    assert variation_bound(1, 1.0) == 16
    assert variation_bound(2, 0.5) == 64 * 1.5


CONFIG = """
# run file
mode = trace+swf
c = -1.5
f = 4
box = 1 1 1 1
grid = 3, 3, 3, 3
max_iterations = 7
seed = 3
history = h.csv
"""


def test_parse_config(tmp_path):
    cfg, extras = parse_config(CONFIG, tmp_path)
    assert cfg.constraints.mode == "trace+swf" and cfg.constraints.c == -1.5 and cfg.constraints.f == 4
    assert cfg.box.points_per_axis == (3, 3, 3, 3) and cfg.max_iterations == 7 and cfg.seed == 3
    assert extras["history"] == tmp_path / "h.csv"
    assert extras["n"] == 1 and extras["atoms"] == 5
    path = tmp_path / "run.cfg"
    path.write_text(CONFIG)
    cfg2, _ = load_config(path)
    assert cfg2 == cfg


@pytest.mark.parametrize("text", [
    "c = 1\nf = 1\nbox = 1 1 1 1\n",                      # missing grid
    "c = 1\nf = 1\nbox = 1 1 1\ngrid = 2 2 2 2\n",        # short box
    "c = 1\nf = 1\nbox = 1 1 1 1\ngrid = 2 2 2 2\nbogus = 1\n",
    "c = 1\nc = 2\nf = 1\nbox = 1 1 1 1\ngrid = 2 2 2 2\n",
    "c = 0\nf = 1\nbox = 1 1 1 1\ngrid = 2 2 2 2\n",
    "c = 1\nf = 1\nbox = 1 1 1 1\ngrid = 2 2 2 2\nshrink = 2\n",
    "just words\n",
])
def test_parse_config_errors(text):
    with pytest.raises(ValidationError) as e:
        parse_config(text)
    assert e.value.invariant == "config"
