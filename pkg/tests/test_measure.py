import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from homvar.action import fermionic_projector
from homvar.errors import DimensionError, NotConvergedError, UnboundedSequenceError, ValidationError
from homvar.harness import DEFAULT_DOMAIN, random_atomic_measure, random_nd_measure, random_s_unitary
from homvar.krein import SignatureSpace, adjoint, spectral_weight
from homvar.measure import (
    AtomicMeasure,
    CompactBox,
    NegativeDefiniteMeasure,
    ScalarMeasure,
    conjugate,
    default_family,
    entry_variation,
    evaluate,
    extract_convergent_subsequence,
    integrate,
    is_negative_definite,
    jordan_split,
    measure_from_json,
    measure_to_json,
    plane_wave,
    scalar_measure,
    support,
    total_variation,
    variation,
    weak_distance,
)

S1, S2 = SignatureSpace(1), SignatureSpace(2)
BOX = CompactBox((-2, -1, -1, -1), (-1, 1, 1, 1))
seeds = st.integers(0, 2**32 - 1)


def atom(space, k, M, nd=False):
    cls = NegativeDefiniteMeasure if nd else AtomicMeasure
    return cls(space, BOX, [k], [M])


K0, K1 = (-1.5, 0, 0, 0), (-1.2, 0.5, 0, 0)


def test_box_validation():
    with pytest.raises(ValueError):
        CompactBox((0, 0, 0), (1, 1, 1))
    with pytest.raises(ValueError):
        CompactBox((1, 0, 0, 0), (0, 1, 1, 1))
    assert BOX.contains([-1, 1, 1, 1]).all()  # closed box


def test_atoms_outside_domain_rejected():
    with pytest.raises(ValidationError) as e:
        atom(S1, (0, 0, 0, 0), np.eye(2))
    assert e.value.invariant == "domain"


def test_canonical_merge_and_prune():
    M = np.array([[1, 2], [3, 4]], dtype=complex)
    nu = AtomicMeasure(S1, BOX, [K1, K0, K1, (-1.1, 0, 0, 0)], [M, M, M, np.zeros((2, 2))])
    assert len(nu) == 2
    assert np.array_equal(nu.points, [K0, K1])
    assert np.array_equal(nu.weights[1], 2 * M)


def test_negative_definite_validation():
    assert len(atom(S1, K0, -S1.S, nd=True)) == 1
    with pytest.raises(ValidationError) as e:
        atom(S1, K0, S1.S, nd=True)
    assert e.value.invariant == "negative_definite"


def test_evaluate_examples():
    empty = AtomicMeasure(S1, BOX)
    assert np.array_equal(evaluate(empty, lambda k: True), np.zeros((2, 2)))
    M1, M2 = np.diag([1.0, 2.0]), np.diag([3.0, 5.0])
    nu = AtomicMeasure(S1, BOX, [K0, K1], [M1, M2])
    assert np.array_equal(evaluate(nu, lambda k: np.array_equal(k, K0)), M1)
    assert np.array_equal(evaluate(nu, lambda k: True), M1 + M2)
    assert np.array_equal(evaluate(nu, lambda k: True), nu.total())


def test_scalar_measure_basis_vector():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    nu = atom(S2, K0, M)
    for i in range(4):
        e = np.eye(4)[i]
        assert scalar_measure(nu, e, e).weights[0] == pytest.approx((S2.S @ M)[i, i])


def test_scalar_measure_orthogonal_to_rank_one():
    w = np.array([1, 1j, 0, 0])
    M = -S2.S @ np.outer(w, w.conj())
    nu = atom(S2, K0, M, nd=True)
    u = np.array([1j, 1, 0, 0])  # u orthogonal to w in the Euclidean product
    assert np.allclose(scalar_measure(nu, u, np.array([0.3, 1, 2, 0])).weights, 0)


def test_polarization_matches_direct():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 3))
        nu = random_atomic_measure(rng, n, 1)
        u = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
        v = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
        a = scalar_measure(nu, u, v).weights
        b = scalar_measure(nu, u, v, method="polarization").weights
        worst = max(worst, float(np.abs(a - b).max()))
    assert worst <= 1e-12


def test_variation_example():
    nu = atom(S1, K0, S1.S @ np.ones((2, 2)))
    assert total_variation(nu) == 4
    assert total_variation(AtomicMeasure(S1, BOX)) == 0
    assert variation(nu).weights[0] == 4


# scale factors stay clear of the subnormal range, where products lose relative precision
scales = st.just(0.0) | st.floats(1e-100, 5) | st.floats(-5, -1e-100)


@given(seeds, scales)
def test_norm_axioms(seed, t):
    rng = np.random.default_rng(seed)
    a = random_atomic_measure(rng, 1 + seed % 2)
    b = random_atomic_measure(rng, 1 + seed % 2)
    shared = AtomicMeasure(a.space, BOX, a.points, rng.standard_normal(a.weights.shape))  # same atoms as a
    assert total_variation(t * a) == pytest.approx(abs(t) * total_variation(a), rel=1e-15, abs=0)
    for other in (b, shared):
        assert total_variation(a + other) <= total_variation(a) + total_variation(other) + 1e-12
    assert (total_variation(a - a) == 0) and len(a - a) == 0


def test_definition_equivalence_random_vectors():
    rng = np.random.default_rng(3)
    nu = random_nd_measure(rng, 2, 3)
    for _ in range(1000):
        u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        w = scalar_measure(-nu, u, u).weights
        assert np.all(np.abs(w.imag) <= 1e-10) and np.all(w.real >= -1e-10)
    # an indefinite weight fails for some vector
    bad = AtomicMeasure(S2, BOX, [K0], [np.eye(4)])
    assert not is_negative_definite(bad)
    vals = [scalar_measure(-bad, u, u).weights[0].real for u in rng.standard_normal((50, 4))]
    assert min(vals) < 0


def test_integrate_examples():
    rng = np.random.default_rng(4)
    nu = random_atomic_measure(rng, 2, 3)
    assert np.allclose(integrate(nu, lambda k: 1.0), nu.total())
    single = atom(S2, K0, nu.weights[0])
    assert np.allclose(integrate(single, lambda k: 2 - 1j), (2 - 1j) * nu.weights[0])
    with pytest.raises(ValueError):
        integrate(nu, lambda k: np.nan)


def test_integrate_commutes_with_scalarization():
    rng = np.random.default_rng(5)
    nu = random_atomic_measure(rng, 2, 4)
    f = plane_wave([0.3, -1.0, 0.2, 2.0])
    u, v = rng.standard_normal(4) + 0j, rng.standard_normal(4) + 1j
    lhs = np.vdot(u, S2.signs * (integrate(nu, f) @ v))
    sm = scalar_measure(nu, u, v)
    rhs = sum(f(k) * w for k, w in zip(sm.points, sm.weights))
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))


def test_integrate_plane_wave_is_fermionic_projector():
    rng = np.random.default_rng(6)
    nu = random_nd_measure(rng, 2, 4)
    for _ in range(20):
        xi = rng.uniform(-3, 3, 4)
        assert np.abs(integrate(nu, plane_wave(xi)) - fermionic_projector(nu, xi)).max() <= 1e-12


def test_conjugate_examples():
    rng = np.random.default_rng(7)
    nu = random_nd_measure(rng, 2, 3)
    assert conjugate(nu, np.eye(4)).same_as(nu, atol=0)
    U = random_s_unitary(rng, 2)
    mu = conjugate(nu, U)
    assert isinstance(mu, NegativeDefiniteMeasure)
    assert abs(spectral_weight(mu.total()) - spectral_weight(nu.total())) <= 1e-8 * (1 + spectral_weight(nu.total()))
    back = conjugate(mu, adjoint(S2, U))
    assert back.same_as(nu, atol=1e-10 * max(1, np.abs(nu.weights).max()))
    region = lambda k: k[0] < -1.5  # noqa: E731
    assert np.allclose(evaluate(mu, region), U @ evaluate(nu, region) @ np.linalg.inv(U))
    with pytest.raises(ValueError):
        conjugate(nu, np.zeros((4, 4)))
    with pytest.raises(ValueError):
        conjugate(nu, 2 * np.eye(4))


def test_support():
    assert len(support(AtomicMeasure(S1, BOX))) == 0
    nu = AtomicMeasure(S1, BOX, [K0, K1], [np.zeros((2, 2)), np.eye(2)])
    assert np.array_equal(support(nu), [K1])
    two = AtomicMeasure(S1, BOX, [K0, K1], [np.eye(2), np.eye(2)])
    assert len(support(two)) == 2


def test_weak_distance_examples():
    rng = np.random.default_rng(8)
    nu = random_atomic_measure(rng, 1, 3)
    assert weak_distance(nu, nu) == 0
    const = [lambda k: 1.0]
    gap = np.abs(S1.signs[:, None] * nu.total()).max()
    assert weak_distance(nu, 2 * nu, const) == pytest.approx(gap, rel=1e-14)
    with pytest.raises(ValueError):
        weak_distance(nu, nu, [])
    assert len(default_family()) == 33


def test_weak_distance_monotone_sequence():
    rng = np.random.default_rng(9)
    nu = random_nd_measure(rng, 1, 2)
    d = [weak_distance(nu * (1 + 1 / j), nu) for j in range(1, 30)]
    assert all(b < a for a, b in zip(d, d[1:]))
    assert d[-1] < d[0] / 20


def test_jordan_split_examples():
    pts = np.array([K0, K1], dtype=float)
    js = jordan_split(ScalarMeasure(pts, np.array([1.0, 2.0], dtype=complex)))
    assert len(js.re_minus.weights) == len(js.im_plus.weights) == len(js.im_minus.weights) == 0
    js = jordan_split(ScalarMeasure(pts[:1], np.array([-2 + 3j])))
    assert len(js.re_plus.weights) == 0 and js.re_minus.weights[0] == 2
    assert js.im_plus.weights[0] == 3 and len(js.im_minus.weights) == 0


def test_jordan_split_recombination_exact():
    rng = np.random.default_rng(10)
    for _ in range(1000):
        a = int(rng.integers(1, 6))
        pts = np.unique(rng.uniform(-1, 1, (a, 4)), axis=0)
        w = rng.standard_normal(len(pts)) + 1j * rng.standard_normal(len(pts))
        js = jordan_split(ScalarMeasure(pts, w))
        rec = js.recombine()
        assert np.array_equal(rec.points, pts) and np.array_equal(rec.weights, w)
        for p, m in ((js.re_plus, js.re_minus), (js.im_plus, js.im_minus)):
            assert np.all(p.weights > 0) and np.all(m.weights > 0)
            assert not set(map(tuple, p.points)) & set(map(tuple, m.points))


def test_extract_constant_sequence():
    rng = np.random.default_rng(11)
    nu = random_nd_measure(rng, 1, 3)
    sub = extract_convergent_subsequence([nu] * 6, 1e-9)
    assert sub.indices == list(range(6))
    assert sub.limit.same_as(nu)


def test_extract_alternating_sequence():
    rng = np.random.default_rng(12)
    a = random_nd_measure(rng, 1, 2)
    b = a.with_weights(a.weights * 3)
    seq = [a if j % 2 == 0 else b for j in range(10)]
    sub = extract_convergent_subsequence(seq, 1e-9)
    parity = {i % 2 for i in sub.indices}
    assert len(parity) == 1
    assert sub.limit.same_as(a if parity == {0} else b)


def test_extract_oscillating_to_limit():
    rng = np.random.default_rng(13)
    nu = random_nd_measure(rng, 2, 2)
    seq = [nu * (1 + (-1) ** j / j) for j in range(1, 200)]
    tol = 1e-2 * np.abs(nu.weights).max()
    sub = extract_convergent_subsequence(seq, tol)
    assert all(b > a for a, b in zip(sub.indices, sub.indices[1:]))
    assert np.abs(sub.limit.weights - nu.weights).max() <= 2 * tol
    assert isinstance(sub.limit, NegativeDefiniteMeasure)


def test_extract_errors():
    rng = np.random.default_rng(14)
    nu = random_nd_measure(rng, 1, 2)
    with pytest.raises(UnboundedSequenceError) as e:
        extract_convergent_subsequence([nu, nu * 10], 1e-3, bound=total_variation(nu) * 2)
    assert e.value.index == 1
    with pytest.raises(NotConvergedError):
        extract_convergent_subsequence([nu * j for j in range(1, 8)], 1e-6)
    with pytest.raises(ValueError):
        extract_convergent_subsequence([], 1e-3)


@given(seeds)
def test_weak_limit_of_negative_definite_is_negative_definite(seed):
    rng = np.random.default_rng(seed)
    nu = random_nd_measure(rng, 1 + seed % 2, 3)
    seq = [nu * (1 + 0.5 / j) for j in range(1, 60)]
    sub = extract_convergent_subsequence(seq, 0.05 * np.abs(nu.weights).max())
    assert is_negative_definite(sub.limit)


@given(seeds)
def test_json_roundtrip_canonical_bytes(seed):
    rng = np.random.default_rng(seed)
    nu = random_nd_measure(rng, 1 + seed % 3, 4)
    blob = json.dumps(measure_to_json(nu), sort_keys=True)
    back = measure_from_json(json.loads(blob))
    assert json.dumps(measure_to_json(back), sort_keys=True) == blob


def test_json_reader_canonicalizes_and_validates():
    obj = {
        "n": 1, "domain": {"lo": list(BOX.lo), "hi": list(BOX.hi)},
        "atoms": [
            {"k": list(K1), "M": {"re": [[-1, 0], [0, 1]], "im": [[0, 0], [0, 0]]}},
            {"k": list(K0), "M": {"re": [[-1, 0], [0, 1]], "im": [[0, 0], [0, 0]]}},
        ],
    }
    nu = measure_from_json(obj)
    assert np.array_equal(nu.points, [K0, K1])
    with pytest.raises(ValidationError) as e:
        measure_from_json({"n": 1})
    assert e.value.invariant == "schema"
    obj["atoms"][0]["M"]["re"] = [[1, 0], [0, -1]]
    with pytest.raises(ValidationError) as e:
        measure_from_json(obj)
    assert e.value.invariant == "negative_definite"
    obj["atoms"][0]["M"]["re"] = [[1, 0, 0]]
    with pytest.raises(ValidationError):
        measure_from_json(obj)


def test_entry_variation_uniform_bound():
    rng = np.random.default_rng(15)
    for f in (0.5, 1.0, 10.0):
        for _ in range(200):
            n = int(rng.integers(1, 3))
            nu = random_nd_measure(rng, n)
            tr = float(-(nu.space.signs * np.diag(nu.total())).sum().real)
            nu = nu * (f / tr)
            assert entry_variation(nu).max() <= f + 1e-9
            assert total_variation(nu) <= (2 * n) ** 2 * f + 1e-8


def test_mixed_spaces_rejected():
    a = AtomicMeasure(S1, BOX, [K0], [np.eye(2)])
    b = AtomicMeasure(S2, BOX, [K0], [np.eye(4)])
    with pytest.raises(DimensionError):
        a + b
    with pytest.raises(DimensionError):
        weak_distance(a, b)
