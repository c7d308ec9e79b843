import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaylmi.lmi import (FULL, SYMMETRIC, AffineMatrixExpr, LinExpr, ShapeError, VariableBlock,
                          affine_in_d, block_diag, bmat, congruence, he, kron_block)
from delaylmi.selectors import build_appendix_a


def _P(n=3):
    return VariableBlock("P", SYMMETRIC, n, n, True)


def _X(n=3):
    return VariableBlock("X", FULL, n, n)


def _random_expr(rng, dim=4):
    """Affine symmetric expression in a symmetric and a full block."""
    P, X = _P(), _X()
    L = rng.normal(size=(dim, 3))
    R = rng.normal(size=(3, dim))
    C = rng.normal(size=(dim, dim))
    E = LinExpr.constant(C + C.T) + L @ LinExpr.var(P) @ L.T + L @ LinExpr.var(X) @ R
    return AffineMatrixExpr(E)


def _random_values(rng):
    S = rng.normal(size=(3, 3))
    return {"P": S + S.T, "X": rng.normal(size=(3, 3))}


def test_scalar_counts():
    assert _P(4).n_scalars == 10
    assert VariableBlock("K", FULL, 2, 3).n_scalars == 6
    with pytest.raises(ShapeError):
        VariableBlock("S", SYMMETRIC, 2, 3)


def test_vector_roundtrip(rng):
    M = rng.normal(size=(3, 3))
    M = M + M.T
    np.testing.assert_array_equal(_P().to_matrix(_P().to_vector(M)), M)
    F = rng.normal(size=(3, 3))
    np.testing.assert_array_equal(_X().to_matrix(_X().to_vector(F)), F)


def test_congruence_identity(rng):
    E = _random_expr(rng)
    v = _random_values(rng)
    np.testing.assert_allclose(congruence(np.eye(4), E).evaluate(v), E.evaluate(v), atol=1e-14)


def test_congruence_selector_column():
    E = AffineMatrixExpr.from_block(_P())
    e1 = np.eye(3)[:, :1]
    S = congruence(e1, E)
    assert S.dim == 1
    P = np.arange(9.0).reshape(3, 3)
    P = P + P.T
    assert S.evaluate({"P": P})[0, 0] == P[0, 0]


def test_congruence_dense_oracle(rng):
    E = AffineMatrixExpr.from_block(VariableBlock("P5", SYMMETRIC, 5, 5))
    W = rng.normal(size=(5, 3))
    S = rng.normal(size=(5, 5))
    P = S + S.T
    got = congruence(W, E).evaluate({"P5": P})
    want = W.T @ P @ W
    assert np.abs(got - want).max() <= 1e-13 * np.abs(want).max()


def test_congruence_shape_error(rng):
    with pytest.raises(ShapeError):
        congruence(np.eye(3), _random_expr(rng, dim=4))


def test_he_constants():
    K = np.array([[0.0, 1.0], [-1.0, 0.0]])
    assert not np.any(he(LinExpr.constant(K)).evaluate({}))
    C = np.array([[1.0, 2.0], [2.0, 5.0]])
    np.testing.assert_array_equal(he(LinExpr.constant(C)).evaluate({}), 2 * C)
    with pytest.raises(ShapeError):
        he(LinExpr.constant(np.ones((2, 3))))


def test_he_dense_oracle(rng):
    X = _X()
    L, R = rng.normal(size=(4, 3)), rng.normal(size=(3, 4))
    E = L @ LinExpr.var(X) @ R
    v = _random_values(rng)
    dense = L @ v["X"] @ R
    np.testing.assert_allclose(he(E).evaluate(v), dense + dense.T, rtol=1e-14, atol=1e-14)


def test_block_diag_constants():
    out = block_diag(np.array([[2.0]]), np.array([[3.0]])).evaluate({})
    np.testing.assert_array_equal(out, np.diag([2.0, 3.0]))


def test_q_placement_zero_rows():
    """The Q part of the bound is zero exactly on blocks 1, 4, 6, 7, 8."""
    from delaylmi.conditions import _place

    sel = build_appendix_a(1, 1, 3)
    Q1 = VariableBlock("Q1", SYMMETRIC, 1, 1)
    Q2 = VariableBlock("Q2", SYMMETRIC, 1, 1)
    q1, q2 = LinExpr.var(Q1), LinExpr.var(Q2)
    Q = _place(sel, 1, q1) + _place(sel, 2, q2 - q1) + _place(sel, 4, -q2)
    M = Q.evaluate({"Q1": np.array([[2.0]]), "Q2": np.array([[5.0]])})
    np.testing.assert_array_equal(np.diag(M), [0, 2, 3, 0, -5, 0, 0, 0])
    assert not np.any(M - np.diag(np.diag(M)))


def test_affine_in_d_interpolates(rng):
    E0, E1 = _random_expr(rng), _random_expr(rng)
    v = _random_values(rng)
    d_m, d_M = 2, 7
    lo = affine_in_d(E0, E1, d_m).evaluate(v)
    hi = affine_in_d(E0, E1, d_M).evaluate(v)
    for d in range(d_m, d_M + 1):
        want = ((d_M - d) * lo + (d - d_m) * hi) / (d_M - d_m)
        np.testing.assert_allclose(affine_in_d(E0, E1, d).evaluate(v), want, atol=1e-12)


def test_coefficients_symmetric_and_exact(rng):
    E = _random_expr(rng)
    v = _random_values(rng)
    total = E.constant.copy()
    for name, T in E.coefficient_tensors().items():
        block = {"P": _P(), "X": _X()}[name]
        x = block.to_vector(v[name])
        assert np.array_equal(T, T.transpose(0, 2, 1))
        total += np.tensordot(x, T, axes=1)
    np.testing.assert_allclose(total, E.evaluate(v), atol=1e-12)


def test_bmat_and_kron(rng):
    P = _P(2)
    B = bmat([[P, None], [None, np.eye(1)]])
    M = np.array([[1.0, 2.0], [2.0, 4.0]])
    np.testing.assert_array_equal(B.evaluate({"P": M}), np.block([[M, np.zeros((2, 1))],
                                                                   [np.zeros((1, 2)), np.eye(1)]]))
    C = np.array([[1.0, -1.0], [-1.0, 2.0]])
    np.testing.assert_array_equal(kron_block(C, P).evaluate({"P": M}), np.kron(C, M))


def test_evaluation_symmetric_exactly(rng):
    M = _random_expr(rng, dim=6).evaluate(_random_values(rng))
    assert np.array_equal(M, M.T)


seeds = st.integers(min_value=0, max_value=2**32 - 1)
scalars = st.floats(min_value=-3, max_value=3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(seed=seeds, a=scalars, b=scalars)
def test_affine_superposition(seed, a, b):
    rng = np.random.default_rng(seed)
    E = _random_expr(rng)
    v1, v2 = _random_values(rng), _random_values(rng)
    mix = {k: a * v1[k] + b * v2[k] for k in v1}
    want = a * E.evaluate(v1) + b * E.evaluate(v2) - (a + b - 1) * E.constant
    got = E.evaluate(mix)
    np.testing.assert_allclose(got, want, atol=1e-10 * (1 + np.abs(want).max()))


@settings(max_examples=60, deadline=None)
@given(seed=seeds)
def test_congruence_associative(seed):
    rng = np.random.default_rng(seed)
    E = _random_expr(rng, dim=5)
    W1, W2 = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))
    v = _random_values(rng)
    a = congruence(W2, congruence(W1, E)).evaluate(v)
    b = congruence(W1 @ W2, E).evaluate(v)
    np.testing.assert_allclose(a, b, atol=1e-11 * (1 + np.abs(b).max()))
