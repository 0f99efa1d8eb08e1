from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradedmech import algebroid as al
from gradedmech import graded as gr
from oracles import random_epsilon_inputs

seeds = st.integers(0, 2**32 - 1)


def random_point(rng, n, m, k, convention="plain"):
    return gr.HigherPoint(rng.normal(size=n), [rng.normal(size=m) for _ in range(k)], convention)


# --- holonomic embedding ---------------------------------------------------------


def test_embedding_homogeneous_k2():
    p = gr.HigherPoint([0.5], [[1.0, 2.0], [3.0, -1.0]], "homogeneous")
    v = gr.holonomic_embed(p)
    np.testing.assert_array_equal(v.Y[0], [1.0, 2.0])
    np.testing.assert_array_equal(v.Y[1], [6.0, -2.0])


def test_embedding_homogeneous_k3_multipliers():
    p = gr.HigherPoint([], [[1.0], [1.0], [1.0]], "homogeneous")
    assert [float(b[0]) for b in gr.holonomic_embed(p).Y] == [1.0, 2.0, 3.0]


def test_embedding_plain_is_identity_on_fibers():
    p = gr.HigherPoint([0.1], [[1.0], [2.0], [3.0]], "plain")
    assert [float(b[0]) for b in gr.holonomic_embed(p).Y] == [1.0, 2.0, 3.0]


def test_embedding_of_zero_point():
    p = gr.HigherPoint([0.0, 0.0], [[0.0, 0.0]] * 2, "homogeneous")
    assert all(not b.any() for b in gr.holonomic_embed(p).Y)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 4), st.sampled_from(gr.CONVENTIONS))
def test_embedding_base_is_projection(seed, k, convention):
    p = random_point(np.random.default_rng(seed), 2, 3, k, convention)
    base = gr.holonomic_embed(p).base
    proj = gr.project_to_level(p, k - 1)
    np.testing.assert_array_equal(base.as_vector(), proj.as_vector())


# --- vertical lift ----------------------------------------------------------------


def test_vertical_lift_k1():
    a = np.array([[1.0], [2.0]])
    dq = np.array([[0.5], [-1.5]])
    b = np.array([[1.0], [2.0], [7.0]])
    np.testing.assert_array_equal(gr.vertical_lift(1, (a, dq), b), [[0.0], [0.5], [-3.0]])


def test_vertical_lift_zero_variation():
    a = np.ones((3, 2))
    b = np.vstack([a, [[4.0, 5.0]]])
    assert not gr.vertical_lift(2, (a, np.zeros((3, 2))), b).any()


def test_vertical_lift_base_mismatch():
    a = np.ones((2, 1))
    with pytest.raises(ValueError):
        gr.vertical_lift(1, (a, a), np.array([[1.0], [2.0], [3.0]]))


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(0, 4), st.floats(-3, 3), st.floats(-3, 3))
def test_vertical_lift_linear_and_injective(seed, k, alpha, beta):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(k + 1, 2))
    b = np.vstack([a, rng.normal(size=(1, 2))])
    v1, v2 = rng.normal(size=a.shape), rng.normal(size=a.shape)
    lhs = gr.vertical_lift(k, (a, alpha * v1 + beta * v2), b)
    rhs = alpha * gr.vertical_lift(k, (a, v1), b) + beta * gr.vertical_lift(k, (a, v2), b)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    assert np.abs(gr.vertical_lift(k, (a, v1), b)).max() > 0


# --- epsilon ------------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 4), st.integers(1, 3))
def test_epsilon_tangent_is_identity_pairing(seed, k, n):
    ws = gr.tangent_structure(k, n)
    X, Y, P, Pi = random_epsilon_inputs(np.random.default_rng(seed), ws)
    dX, dPi = gr.epsilon_apply(ws, X, Y, P, Pi)
    for U in range(1, k + 1):
        np.testing.assert_allclose(dX[U - 1], Y[U - 1], atol=1e-15)
        np.testing.assert_allclose(dPi[U - 1], P[U + 1], atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_epsilon_first_order_lie_algebroid(seed):
    rng = np.random.default_rng(seed)
    spec = al.AlgebroidSpec(2, 3, [["1", "x2", "0"], ["0", "0", "exp(x1)"]],
                            {(0, 1, 2): "x1", (1, 2, 0): "1", (0, 2, 1): "-x2"})
    ws = gr.lie_algebroid_structure(spec, 1)
    x, y, p, xi = rng.normal(size=2), rng.normal(size=3), rng.normal(size=2), rng.normal(size=3)
    dX, dPi = gr.epsilon_apply(ws, [x], [y], {2: p}, [xi])
    rho, C = spec.evaluate(x)
    want = np.zeros(3)
    for j in range(3):
        want[j] = sum(C[i, j, k] * y[i] * xi[k] for i in range(3) for k in range(3))
        want[j] += sum(rho[a, j] * p[a] for a in range(2))
    np.testing.assert_allclose(dX[0], rho @ y, atol=1e-14)
    np.testing.assert_allclose(dPi[0], want, atol=1e-14)


def test_epsilon_zero_momenta_zero_bracket():
    ws = gr.tangent_structure(3, 2)
    rng = np.random.default_rng(0)
    X, Y, _, _ = random_epsilon_inputs(rng, ws)
    _, dPi = gr.epsilon_apply(ws, X, Y, {}, [np.zeros(2)] * 3)
    assert all(not b.any() for b in dPi)


def test_epsilon_dimension_mismatch():
    ws = gr.tangent_structure(2, 2)
    with pytest.raises(ValueError):
        gr.epsilon_apply(ws, [np.zeros(3), np.zeros(2)], [np.zeros(2)] * 2, {}, [np.zeros(2)] * 2)


EQUIVARIANCE_CASES = [gr.tangent_structure(k, n) for k in (1, 2, 3) for n in (1, 2)] + [
    gr.lie_algebroid_structure(al.lie_algebra(al.so3_constants()), k) for k in (1, 2, 3)
] + [
    gr.lie_algebroid_structure(al.atiyah_trivial(2, al.so3_constants()), k) for k in (1, 2)
] + [
    gr.lie_algebroid_structure(al.AlgebroidSpec(1, 2, [["1", "exp(x1)"]], {(0, 1, 1): "1"}), 2)
]


@pytest.mark.parametrize("ws", EQUIVARIANCE_CASES, ids=repr)
@settings(max_examples=20, deadline=None)
@given(seed=seeds, t=st.floats(0.1, 3.0))
def test_epsilon_weight_equivariance(ws, seed, t):
    X, Y, P, Pi = random_epsilon_inputs(np.random.default_rng(seed), ws)
    assert gr.equivariance_error(ws, X, Y, P, Pi, t) <= 1e-12


def test_equivariance_detects_mislabelled_weight():
    # rho[1] must be of weight one in X; a constant entry at that label is inconsistent
    ws = gr.WeightedStructure(2, 1, 1, {(0, 1): lambda X: np.eye(1), (1, 2): lambda X: X[1].reshape(1, 1)})
    X, Y, P, Pi = random_epsilon_inputs(np.random.default_rng(1), ws)
    ws_bad = gr.WeightedStructure(2, 1, 1, {(0, 1): lambda X: np.eye(1), (1, 2): lambda X: np.eye(1)})
    assert gr.equivariance_error(ws, X, Y, P, Pi, 2.0) <= 1e-12
    assert gr.equivariance_error(ws_bad, X, Y, P, Pi, 2.0) > 1e-3


# --- admissibility ------------------------------------------------------------------


def test_prolongation_of_base_curve_is_admissible():
    rng = np.random.default_rng(2)
    k, n = 3, 2
    q = rng.normal(size=(n, k + 3))
    ys = gr.lift_fiber_jets(gr.differentiate_coeffs(q), k, "plain")
    assert np.abs(gr.admissibility_residual(al.tangent(n), q, ys, "plain")).max() < 1e-12


@pytest.mark.parametrize("convention, factor", [("plain", 1.0), ("homogeneous", 2.0)])
def test_lie_algebra_second_order_residual(convention, factor):
    rng = np.random.default_rng(4)
    y1, z = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    res = gr.admissibility_residual(al.lie_algebra(al.so3_constants()), np.zeros((0, 3)), [y1, z], convention)
    np.testing.assert_allclose(res, y1[:, 1] - factor * z[:, 0], atol=1e-15)


def test_admissibility_needs_first_order_jets():
    with pytest.raises(ValueError):
        gr.admissibility_residual(al.tangent(1), np.zeros((1, 1)), [np.zeros((1, 1))], "plain")


def test_membership_accepts_admissible_jet():
    spec = al.AlgebroidSpec(2, 2, [["1", "x2"], ["0", "exp(x1)"]], {(0, 1, 1): "1"})
    rng = np.random.default_rng(6)
    y = rng.normal(size=(2, 4))
    x = gr.base_jet_from_anchor(spec, rng.normal(size=2), y)
    assert gr.higher_admissible_membership(spec, x, y, 3)


def test_membership_rejects_perturbed_jet():
    spec = al.tangent(2)
    rng = np.random.default_rng(7)
    y = rng.normal(size=(2, 3))
    x = gr.base_jet_from_anchor(spec, np.zeros(2), y)
    x[0, 1] += 0.1
    assert not gr.higher_admissible_membership(spec, x, y, 2, tol=1e-6)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(2, 4), st.booleans())
def test_membership_on_tangent_equals_holonomy_chain(seed, k, holonomic):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, k + 1))
    y = gr.differentiate_coeffs(x)[:, :k] if holonomic else rng.normal(size=(2, k))
    direct = np.allclose(gr.differentiate_coeffs(x)[:, : k - 1], y[:, : k - 1], atol=1e-9, rtol=0)
    assert gr.higher_admissible_membership(al.tangent(2), x, y, k) == direct


def test_membership_needs_order():
    with pytest.raises(ValueError):
        gr.higher_admissible_membership(al.tangent(1), np.zeros((1, 1)), np.zeros((1, 1)), 3)


# --- tower, homogeneity, conventions ---------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 4), st.data())
def test_projection_tower(seed, k, data):
    p = random_point(np.random.default_rng(seed), 2, 2, k)
    l2 = data.draw(st.integers(0, k))
    l1 = data.draw(st.integers(0, l2))
    a = gr.project_to_level(gr.project_to_level(p, l2), l1)
    np.testing.assert_array_equal(a.as_vector(), gr.project_to_level(p, l1).as_vector())
    assert gr.project_to_level(p, k).as_vector().tolist() == p.as_vector().tolist()
    assert gr.project_to_level(p, 0).k == 0


def test_projection_above_order():
    with pytest.raises(ValueError):
        gr.project_to_level(random_point(np.random.default_rng(0), 1, 1, 2), 3)


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(0, 3), st.floats(0, 3))
def test_homogeneity_is_monoid_action(seed, s, t):
    p = random_point(np.random.default_rng(seed), 2, 2, 3)
    lhs = gr.homogeneity_scale(gr.homogeneity_scale(p, t), s).as_vector()
    np.testing.assert_allclose(lhs, gr.homogeneity_scale(p, s * t).as_vector(), rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(gr.homogeneity_scale(p, 1.0).as_vector(), p.as_vector())
    zero = gr.homogeneity_scale(p, 0.0)
    np.testing.assert_array_equal(zero.x, p.x)
    assert all(not b.any() for b in zero.y)


def test_convert_k2_factor():
    p = gr.HigherPoint([0.0], [[1.0], [3.0]], "homogeneous")
    assert gr.convert_convention(p, "plain").y[1][0] == 6.0


def test_convert_k1_identity():
    p = gr.HigherPoint([0.4], [[1.5]], "plain")
    q = gr.convert_convention(p, "homogeneous")
    np.testing.assert_array_equal(q.as_vector(), p.as_vector())


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 4), st.sampled_from(gr.CONVENTIONS))
def test_convert_round_trip(seed, k, convention):
    rng = np.random.default_rng(seed)
    other = "plain" if convention == "homogeneous" else "homogeneous"
    p = random_point(rng, 2, 3, k, convention)
    back = gr.convert_convention(gr.convert_convention(p, other), convention)
    np.testing.assert_allclose(back.as_vector(), p.as_vector(), rtol=1e-14)
    pp = gr.PhasePoint(p.x, p.y[:-1], [rng.normal(size=3) for _ in range(k)], convention)
    back = gr.convert_convention(gr.convert_convention(pp, other), convention)
    for a, b in zip(back.pi, pp.pi):
        np.testing.assert_allclose(a, b, rtol=1e-14)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 4))
def test_convert_preserves_ladder_pairing(seed, k):
    rng = np.random.default_rng(seed)
    p = random_point(rng, 1, 2, k, "homogeneous")
    pis = [rng.normal(size=2) for _ in range(k)]

    def pairing(point, ladder):
        Y = gr.holonomic_embed(point).Y
        return sum(float(ladder[U - 1] @ Y[k - U]) for U in range(1, k + 1))

    pp = gr.PhasePoint(p.x, p.y[:-1], pis, "homogeneous")
    q, qq = gr.convert_convention(p, "plain"), gr.convert_convention(pp, "plain")
    assert pairing(q, qq.pi) == pytest.approx(pairing(p, pp.pi), rel=1e-12)
    mp = gr.MironianPoint(p.x, p.y[:-1], rng.normal(size=2), "homogeneous")
    mq = gr.convert_convention(mp, "plain")
    assert float(mq.theta @ q.z) == pytest.approx(float(mp.theta @ p.z), rel=1e-12)


def test_fiber_jet_lift_factors():
    y1 = np.array([[0.0, 1.0, 0.5, 2.0]])
    plain = gr.lift_fiber_jets(y1, 3, "plain")
    homog = gr.lift_fiber_jets(y1, 3, "homogeneous")
    for w in (1, 2, 3):
        np.testing.assert_allclose(plain[w - 1], factorial(w) * homog[w - 1])
