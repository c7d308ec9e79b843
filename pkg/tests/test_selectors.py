from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import PARAMETER_SETS, delta_v_errors, dual_eval_errors, random_certificate
from delaylmi.model import DelaySystem, split_switched
from delaylmi.selectors import (build_appendix_a, build_appendix_b, finsler_history,
                                finsler_history_perp, gamma, history_patterns, xi_assemble)


def test_gamma():
    assert gamma(1) == 1
    assert gamma(2) == 3
    assert gamma(5) == Fraction(3, 2)
    assert isinstance(gamma(4), Fraction)
    with pytest.raises(ValueError):
        gamma(0)


def test_w3_scalar():
    np.testing.assert_array_equal(build_appendix_a(1, 1, 3).W3, [[1, -1, 0, 0, 0, 0, 0, 0]])


def test_w_of_d_scalar():
    sel = build_appendix_a(1, 1, 6)
    W = sel.W(4)
    assert W.shape == (3, 8)
    slope_part = W - sel.W_d0
    np.testing.assert_array_equal(slope_part[:2], 0)
    np.testing.assert_array_equal(slope_part[2], [0, 0, 0, 0, 0, 0, 4, -4])


def test_w4_rows():
    W4 = build_appendix_a(1, 2, 5).W4
    np.testing.assert_array_equal(W4[1], [3, 0, 0])
    np.testing.assert_array_equal(W4[2], [0, -1, 6])


def test_shapes_plain_and_extended():
    n = 2
    a = build_appendix_a(n, 1, 4)
    assert a.dim == 8 * n and a.W_psi.shape == (4 * n, 8 * n) and a.W_s.shape == (2 * n, 8 * n)
    assert a.W1.shape == (3 * n, 8 * n) and a.W4.shape == (3 * n, 3 * n)
    b1 = build_appendix_b(n, 1, 2, 5, 1)
    b2 = build_appendix_b(n, 1, 2, 5, 2)
    assert b1.dim == 10 * n and b1.W1.shape == (4 * n, 10 * n) and b1.W_z.shape == (2 * n, 10 * n)
    assert b2.dim == 8 * n and b2.W_z is None
    assert b1.W5.shape == (4 * n, 6 * n) and b2.W5.shape == (3 * n, 6 * n)
    # when d_n = d_M mode 1 has no tail and uses the plain layout
    assert build_appendix_b(n, 1, 5, 5, 1).dim == 8 * n


def test_mode2_has_no_tail_blocks():
    sel = build_appendix_b(1, 1, 2, 4, 2)
    assert set(history_patterns(sel)) == {"Q1", "Q2", "Z1", "Z2"}


def test_mode1_pattern_values():
    """j=1, n=1, (1,1,2): the lead entry is z1 and entry 1 is q1 + z1 (Q3 = Z3 = 0)."""
    sel = build_appendix_b(1, 1, 1, 2, 1)
    pats = history_patterns(sel)
    z1, z2, q1, q2 = 0.7, 0.3, 1.9, 0.4
    S = pats["Z1"] * z1 + pats["Z2"] * z2 + pats["Q1"] * q1 + pats["Q2"] * q2
    assert S[0, 0] == pytest.approx(z1)
    assert S[1, 1] == pytest.approx(q1 + z1)


def test_finsler_null_space(rng):
    n, d_n, d_M = 2, 2, 5
    A, A_n, A_d = (rng.normal(size=(n, n)) for _ in range(3))
    for l in range(1, d_M + 1):
        L = finsler_history(n, d_n, d_M, A, A_n, A_d, l)
        Lp = finsler_history_perp(n, d_n, d_M, A, A_n, A_d, l)
        assert L.shape == (n, n * (d_M + 2)) and Lp.shape == (n * (d_M + 2), n * (d_M + 1))
        assert not np.any(L @ Lp)


def test_dynamics_encoding(rng):
    n = 2
    A, A_n, A_d = (rng.normal(size=(n, n)) for _ in range(3))
    sys = DelaySystem(A, A_n, A_d, 1, 2, 4)
    for l in range(1, 5):
        h = rng.normal(size=(5, n))
        kappa = np.concatenate([sys.step(h, l), h.reshape(-1)])
        L = finsler_history(n, 2, 4, A, A_n, A_d, l)
        np.testing.assert_allclose(L @ kappa, 0, atol=1e-12)


def test_gamma_perp_null_space(rng):
    n = 2
    for sel in (build_appendix_a(n, 1, 3), build_appendix_b(n, 1, 2, 4, 1)):
        mats = [rng.normal(size=(n, n)) for _ in range(4)]
        assert not np.any(sel.finsler_row(*mats) @ sel.gamma_perp(*mats))


def test_xi_constant_history():
    sel = build_appendix_b(2, 1, 2, 5, 1)
    c = np.array([1.5, -2.0])
    xi = xi_assemble(sel, c, np.tile(c, (6, 1)), 2).reshape(-1, 2)
    for v in xi[5:]:                      # v1 .. v4 and x(k - d_M)
        np.testing.assert_allclose(v, c)


def test_xi_averages(rng):
    sel = build_appendix_a(1, 1, 3)
    h = rng.normal(size=(4, 1))
    xi = xi_assemble(sel, [0.0], h, 2)
    assert xi[7] == pytest.approx((h[3, 0] + h[2, 0]) / 2)
    xi = xi_assemble(sel, [0.0], h, 1)
    assert xi[6] == pytest.approx(h[1, 0])   # d(k) = d_m: single-sample average
    with pytest.raises(ValueError):
        xi_assemble(sel, [0.0], h[:3], 2)
    with pytest.raises(ValueError):
        xi_assemble(sel, [0.0], h, 4)


def test_split_selectors_match_subsystems():
    from delaylmi.model import BoundedDelaySubsystem  # noqa: F401

    z = np.zeros((1, 1))
    s1, s2 = split_switched(DelaySystem(z, z, z, 1, 2, 4))
    assert (build_appendix_b(1, 1, 2, 4, 2).lo, build_appendix_b(1, 1, 2, 4, 2).hi) == (s2.d_m, s2.d_M)
    assert (build_appendix_b(1, 1, 2, 4, 1).lo, build_appendix_b(1, 1, 2, 4, 1).hi) == (s1.d_m, s1.d_M)


params = st.sampled_from(PARAMETER_SETS + [(1, 3, 3), (2, 2, 2), (1, 1, 1)])
seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=40, deadline=None)
@given(p=params, seed=seeds, n=st.integers(1, 2), j=st.sampled_from([1, 2]))
def test_quadratic_form_matches_direct_sum(p, seed, n, j):
    rng = np.random.default_rng(seed)
    cert = random_certificate(rng, n, *p)
    assert dual_eval_errors(cert, j, rng, 10).max() <= 1e-9


@settings(max_examples=30, deadline=None)
@given(p=params, seed=seeds, n=st.integers(1, 2), j=st.sampled_from([1, 2]))
def test_difference_identities_and_bound(p, seed, n, j):
    rng = np.random.default_rng(seed)
    cert = random_certificate(rng, n, *p)
    e = delta_v_errors(cert, j, rng, 8)
    assert e[:, 0].max() <= 1e-9          # V_a difference identity
    assert e[:, 1].max() <= 1e-9          # V_b difference identity
    assert e[:, 2].max() <= 1e-9          # V_c one-sided bound


def test_lkf_homogeneous_and_zero(rng):
    from delaylmi.simverify import eval_lkf

    cert = random_certificate(rng, 2, 1, 2, 4)
    assert eval_lkf(cert, 1, np.zeros((5, 2))) == (0.0, 0.0)
    h = rng.normal(size=(5, 2))
    for j in (1, 2):
        d1, q1 = eval_lkf(cert, j, h)
        d2, q2 = eval_lkf(cert, j, 3 * h)
        assert d2 == pytest.approx(9 * d1, rel=1e-12) and q2 == pytest.approx(9 * q1, rel=1e-12)
