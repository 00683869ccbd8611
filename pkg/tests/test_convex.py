import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial import ConvexHull

from weightlab import spd
from weightlab.convex import (
    DirectionSet, NonAbsorbingError, NormFunction, apply_matrix, contains, dual_norm, ellipsoid,
    hull_union, john_ellipsoid, john_from_constraints, magnitude, minkowski_sum, p_average_norm,
    reducing_matrix, sampled, sampled_dual, scale, segment, support, tight_supports, unit_ball,
    zero_body,
)
from weightlab.grid import Cube, DomainError, DyadicGrid, Field
from weightlab.lab.experiments import random_body

E1, E2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
D2 = DirectionSet.default(2)
U = D2.dirs


def square():
    return minkowski_sum(segment(E1), segment(E2))


def diamond():
    return sampled(np.abs(U).max(axis=1), D2)


def test_direction_sets():
    for d, m in ((2, 180), (3, 512)):
        D = DirectionSet.default(d)
        assert len(D) == m
        np.testing.assert_allclose(np.linalg.norm(D.dirs, axis=1), 1.0, atol=1e-14)
        G = D.dirs @ D.dirs.T - np.eye(m)
        assert np.all(np.abs(np.abs(G) - 1.0) > 1e-9)
    with pytest.raises(DomainError):
        DirectionSet(np.array([[1.0, 1.0]]))


def test_support_examples():
    assert support(segment(E1), E1) == 1.0
    assert support(ellipsoid(np.diag([2.0, 3.0])), E2) == pytest.approx(3.0)
    assert support(segment([1.0, 1.0]), np.array([1.0, -1.0]) / np.sqrt(2)) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(DomainError):
        support(segment(E1), [2.0, 0.0])


def test_sampled_support_between_directions():
    # exact polytope support, also off the sample grid
    u = np.array([np.cos(0.0123), np.sin(0.0123)])
    assert support(square(), u) == pytest.approx(abs(u[0]) + abs(u[1]), rel=1e-12)


def test_minkowski_examples():
    K = ellipsoid(np.diag([2.0, 0.5]))
    assert minkowski_sum(K, zero_body(2)) is K
    assert hull_union(K, K) is K
    np.testing.assert_allclose(square().support_on(D2), np.abs(U).sum(axis=1), atol=1e-15)
    assert minkowski_sum(segment(E1), segment(3 * E1)).kind == "segment"
    assert minkowski_sum(K, scale(2.0, K)).kind == "ellipsoid"


@given(st.integers(0, 10_000), st.floats(0, 5))
def test_support_laws(seed, alpha):
    r = np.random.default_rng(seed)
    K, L = random_body(2, r), random_body(2, r)
    hK, hL = K.support_on(D2), L.support_on(D2)
    np.testing.assert_allclose(minkowski_sum(K, L).support_on(D2), hK + hL, rtol=1e-12)
    np.testing.assert_allclose(scale(alpha, K).support_on(D2), alpha * hK, rtol=1e-12)
    np.testing.assert_allclose(hull_union(K, L).support_on(D2), np.maximum(hK, hL), rtol=1e-12)
    A = spd.random_spd(r, 2, 10.0)
    lhs = apply_matrix(A, minkowski_sum(K, L)).support_on(D2)
    rhs = minkowski_sum(apply_matrix(A, K), apply_matrix(A, L)).support_on(D2)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10)


def test_dimension_mismatch():
    with pytest.raises(DomainError):
        minkowski_sum(segment(E1), unit_ball(3))


def test_contains_examples():
    K = square()
    assert contains(K, scale(0.5, K), 0.0)
    assert not contains(unit_ball(2), ellipsoid(np.diag([1.0, 2.0])), 0.0)
    assert contains(K, unit_ball(2), 1e-9)
    assert not contains(unit_ball(2), K, 1e-9)
    assert contains(ellipsoid(np.sqrt(2) * np.eye(2)), K, 1e-12)


def test_magnitude_examples():
    assert magnitude(ellipsoid(np.diag([2.0, 3.0]))) == pytest.approx(3.0)
    assert magnitude(segment([3.0, 4.0])) == pytest.approx(5.0)
    assert magnitude(square()) == pytest.approx(np.sqrt(2), rel=1e-12)


def test_apply_matrix_examples():
    K = random_body(2, np.random.default_rng(3))
    np.testing.assert_allclose(apply_matrix(np.eye(2), K).support_on(D2), K.support_on(D2), rtol=1e-12)
    E = apply_matrix(np.diag([2.0, 1.0]), unit_ball(2))
    np.testing.assert_allclose(E.data, np.diag([2.0, 1.0]), atol=1e-12)
    S = apply_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]), segment(E1))
    np.testing.assert_allclose(S.data, [2.0, 1.0])


def _matrix_rho(Ws):
    g = DyadicGrid(1, int(np.log2(len(Ws))))
    return NormFunction.from_matrix_field(Field(g, np.asarray(Ws, dtype=float), "matrix"))


def test_dual_norm_examples():
    assert dual_norm(_matrix_rho([np.eye(2)]), 0, [3.0, 4.0]) == pytest.approx(5.0)
    assert dual_norm(_matrix_rho([np.diag([2.0, 1.0])]), 0, E1) == pytest.approx(0.5)
    g = DyadicGrid(1, 0)
    rho = NormFunction.from_body_field(Field(g, diamond().data[None], "body", D2))
    assert rho([1.0, 1.0])[0] == pytest.approx(2.0)
    assert dual_norm(rho, 0, [1.0, 1.0]) == pytest.approx(1.0)
    V = np.random.default_rng(0).standard_normal((20, 2))
    np.testing.assert_allclose(rho.dual_values(V)[0], np.abs(V).max(axis=1), rtol=1e-12)


def test_dual_involution_and_sampled_dual(rng):
    Ws = spd.random_spd(rng, 2, 20.0, 4)
    rho = _matrix_rho(Ws)
    rho_star = _matrix_rho(spd.power(Ws, -1.0))
    V = rng.standard_normal((30, 2))
    np.testing.assert_allclose(rho_star.dual_values(V), rho.values(V), rtol=1e-8)
    brute = sampled_dual(rho, V)  # max over sampled directions: a lower estimate
    exact = rho.dual_values(V)
    assert np.all(brute <= exact * (1 + 1e-12)) and np.all(brute >= exact * (1 - 1e-3))


def test_degenerate_norm_names_direction():
    rho = _matrix_rho([np.diag([0.0, 1.0])])
    with pytest.raises(DomainError, match="direction"):
        sampled_dual(rho, [[1.0, 0.0]])


@given(st.integers(0, 10_000))
def test_norm_axioms(seed):
    r = np.random.default_rng(seed)
    rho = _matrix_rho(spd.random_spd(r, 2, 30.0, 2))
    body = NormFunction.from_body_field(Field(DyadicGrid(1, 0), random_body(2, r).data[None], "body", D2))
    v, w = r.standard_normal((2, 2))
    c = r.uniform(-3, 3)
    for n in (rho, body):
        assert np.all(n(np.zeros(2)) == 0) and np.all(n(v) > 0)
        assert np.all(n(v + w) <= (n(v) + n(w)) * (1 + 1e-12))
        np.testing.assert_allclose(n(c * v), abs(c) * n(v), rtol=1e-12)


def test_p_average_norm_examples(rng):
    g = DyadicGrid(1, 2)
    W = np.tile(np.diag([2.0, 3.0]), (4, 1, 1))
    rho = NormFunction.from_matrix_field(Field(g, W, "matrix"))
    v = rng.standard_normal(2)
    assert p_average_norm(rho, Cube(0, (0,)), 3.0, v) == pytest.approx(np.linalg.norm(W[0] @ v))
    rho1 = NormFunction.from_scalar_weight(Field(DyadicGrid(1, 1), [2.0, 1.0]))
    assert p_average_norm(rho1, Cube(0, (0,)), 2.0, [1.0]) == pytest.approx(np.sqrt(2.5))
    assert p_average_norm(rho, Cube(1, (1,)), 2.0, np.zeros(2)) == 0.0
    with pytest.raises(DomainError):
        p_average_norm(rho, Cube(0, (0,)), 0.5, v)


@given(st.integers(0, 10_000), st.sampled_from([1.0, 1.5, 2.0, 4.0]))
def test_p_average_triangle(seed, p):
    r = np.random.default_rng(seed)
    g = DyadicGrid(1, 3)
    rho = NormFunction.from_matrix_field(Field(g, spd.random_spd(r, 3, 50.0, 8), "matrix"))
    v, w = r.standard_normal((2, 3))
    Q = Cube(1, (int(r.integers(2)),))
    assert p_average_norm(rho, Q, p, v + w) <= (p_average_norm(rho, Q, p, v) + p_average_norm(rho, Q, p, w)) * (1 + 1e-12)


def test_john_examples():
    A = spd.random_spd(np.random.default_rng(1), 2, 5.0)
    np.testing.assert_allclose(john_ellipsoid(ellipsoid(A)), A)
    J = john_ellipsoid(square())
    np.testing.assert_allclose(J, np.eye(2), atol=1e-6)
    assert contains(ellipsoid(np.sqrt(2) * J), square(), 1e-6)
    with pytest.raises(NonAbsorbingError):
        john_ellipsoid(segment(E1))
    with pytest.raises(NonAbsorbingError):
        john_ellipsoid(sampled(np.abs(U[:, 0]), D2))


@pytest.mark.parametrize("d", [2, 3])
def test_john_sandwich_random(d):
    r = np.random.default_rng(d)
    for _ in range(4):
        K = random_body(d, r)
        A = john_ellipsoid(K)
        assert contains(K, ellipsoid(A), 1e-6)
        assert contains(ellipsoid(np.sqrt(d) * A), K, 1e-6)


def test_john_maximal_volume_against_perturbations():
    K = random_body(2, np.random.default_rng(7))
    A = john_ellipsoid(K)
    base = np.linalg.slogdet(A)[1]
    r = np.random.default_rng(0)
    for _ in range(50):
        B = spd.power(A @ A + 0.05 * spd.random_spd(r, 2, 3.0) * np.linalg.norm(A) ** 2 * r.uniform(-1, 1), 0.5)
        if contains(K, ellipsoid(B), 0.0):
            assert np.linalg.slogdet(B)[1] <= base + 1e-7


def test_reducing_matrix_examples():
    g = DyadicGrid(1, 3)
    Q = Cube(0, (0,))
    for p in (1.5, 2.0, 3.0):
        W = Field(g, np.tile(4.0 * np.eye(2), (8, 1, 1)), "matrix")
        np.testing.assert_allclose(reducing_matrix(W, Q, p), 0.25 * np.eye(2), atol=1e-14)
        w = np.random.default_rng(0).uniform(0.5, 3.0, 8)
        R = reducing_matrix(Field(g, w[:, None, None], "matrix"), Q, p)
        assert R[0, 0] == pytest.approx(np.mean(w ** p) ** (-1 / p))


def test_reducing_matrix_p2_exact_vs_sampled_john():
    g = DyadicGrid(1, 3)
    r = np.random.default_rng(2)
    w1, w2 = r.uniform(0.5, 3.0, (2, 8))
    W = Field(g, np.stack([np.diag([a, b]) for a, b in zip(w1, w2)]), "matrix")
    Q = Cube(0, (0,))
    exact = reducing_matrix(W, Q, 2.0)
    np.testing.assert_allclose(exact, np.diag([np.mean(w1 ** 2) ** -0.5, np.mean(w2 ** 2) ** -0.5]), rtol=1e-12)
    # inner polygon through boundary points of the p = 2 unit ball
    rad = np.sqrt(np.mean((w1[:, None] * U[:, 0]) ** 2 + (w2[:, None] * U[:, 1]) ** 2, axis=0))
    pts = U / rad[:, None]
    hull = ConvexHull(np.concatenate([pts, -pts]))
    sampled_john = john_from_constraints(hull.equations[:, :-1], -hull.equations[:, -1])
    np.testing.assert_allclose(sampled_john, exact, atol=1e-4 * np.abs(exact).max())


def test_reducing_matrix_general_p_sandwich():
    g = DyadicGrid(1, 3)
    r = np.random.default_rng(5)
    W = Field(g, spd.random_spd(r, 2, 20.0, 8), "matrix")
    Q = Cube(0, (0,))
    A = reducing_matrix(W, Q, 3.0)
    rho = NormFunction.from_matrix_field(W)
    for v in r.standard_normal((20, 2)):
        # the ellipsoid AB sits in the unit ball of the averaged norm
        x = A @ v / np.linalg.norm(v)
        assert p_average_norm(rho, Q, 3.0, x) <= 1 + 1e-9


def test_tight_supports():
    h = np.abs(U).sum(axis=1)
    h[45] *= 3.0  # a constraint that does not touch
    t = tight_supports(h, D2)
    assert t[45] == pytest.approx(np.abs(U[45]).sum(), rel=1e-9)
    np.testing.assert_array_equal(np.delete(t, 45), np.delete(h, 45))
