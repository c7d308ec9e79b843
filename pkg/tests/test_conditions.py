import numpy as np
import pytest

from delaylmi.conditions import (GainRecoveryError, corollary1_problem, design_closed_loop,
                                 expected_condition_count, lemma2_problem, phi_matrix,
                                 recover_gains, theorem1_problem, unbar_certificate)
from delaylmi.lmi import congruence
from delaylmi.model import BoundedDelaySubsystem, DelaySystem, PlantModel, split_switched
from delaylmi.sdp import FEASIBLE, INFEASIBLE, normalize, solve
from delaylmi.selectors import build_appendix_a


def s(a):
    return np.array([[float(a)]])


def bounded(a, a_d, d_m, d_M, a_m=0.0, a_M=0.0):
    return BoundedDelaySubsystem(s(a), s(a_m), s(a_M), s(a_d), d_m, d_M)


def switched(a, a_n, a_d, d_m, d_n, d_M):
    return DelaySystem(s(a), s(a_n), s(a_d), d_m, d_n, d_M)


def status(problem):
    return solve(normalize(problem)).status


def test_bounded_structure():
    p = lemma2_problem(bounded(0.5, 0.1, 1, 2))
    assert len(p.conditions) == 3
    sizes = {v.name: v.shape for v in p.variables}
    assert sizes == {"P": (3, 3), "Q1": (1, 1), "Q2": (1, 1), "Z1": (1, 1), "Z2": (1, 1),
                     "X": (2, 2)}
    assert [c.dim for c in p.conditions] == [4, 7, 7]
    # degenerate interval: the coupling condition is dropped
    assert len(lemma2_problem(bounded(0.5, 0.1, 2, 2)).conditions) == 2


@pytest.mark.parametrize("bounds", [(1, 1, 1), (1, 1, 3), (1, 3, 3), (1, 2, 4), (2, 3, 5)])
def test_switched_condition_count(bounds):
    d_m, d_n, d_M = bounds
    p = theorem1_problem(switched(0.2, 0.1, 0.1, *bounds))
    assert len(p.conditions) == expected_condition_count(*bounds)
    full = 6 + (d_n - d_m + 1) + (d_M - d_n + 1)
    dropped = (d_n == d_m) + (d_M == d_n)
    assert len(p.conditions) == full - dropped
    declared = {v.name for v in p.variables}
    for c in p.constraints:
        assert set(c.expr.blocks()) <= declared


def test_switched_block_shapes():
    n = 2
    sys = DelaySystem(np.eye(n) * 0.1, np.zeros((n, n)), np.zeros((n, n)), 1, 2, 4)
    shapes = {v.name: v.shape for v in theorem1_problem(sys).variables}
    assert shapes["P_1"] == (4 * n, 4 * n) and shapes["P_2"] == (3 * n, 3 * n)
    assert shapes["Q3"] == (n, n) and shapes["Z3"] == (n, n) and shapes["X_1"] == (2 * n, 2 * n)


def test_bounded_examples():
    assert status(lemma2_problem(bounded(0.5, 0.1, 1, 2))) == FEASIBLE
    assert status(lemma2_problem(bounded(1.2, 0.0, 1, 2))) == INFEASIBLE
    assert status(lemma2_problem(bounded(0.0, 0.0, 2, 6))) == FEASIBLE


@pytest.mark.parametrize("a", [1.05, 1.2, 2.0])
def test_unstable_scalar_infeasible(a):
    assert status(theorem1_problem(switched(a, 0, 0, 1, 1, 3))) == INFEASIBLE
    assert status(lemma2_problem(bounded(a, 0, 1, 3))) == INFEASIBLE


def test_vertex_sufficiency():
    sub = bounded(0.5, 0.2, 1, 4, a_M=0.1)
    p = lemma2_problem(sub)
    r = solve(normalize(p))
    assert r.feasible
    sel = build_appendix_a(1, 1, 4)
    G = sel.gamma_perp(sub.A, sub.A_m, sub.A_d, sub.A_M)
    blocks = {v.name: v for v in p.variables}
    for d in range(1, 5):
        M = congruence(G, phi_matrix(sel, blocks, d)).evaluate(r.assignment)
        assert np.linalg.eigvalsh(M).max() < 0


def test_switched_matches_bounded_on_collapsed_mode():
    """With A_n = 0 and d_n = d_m the switched test reduces to the bounded one."""
    rng = np.random.default_rng(7)
    agree = 0
    for _ in range(20):
        a = rng.uniform(-1, 1)
        a_d = rng.uniform(-1, 1) * (1 - abs(a))
        d_M = int(rng.integers(2, 5))
        t1 = status(theorem1_problem(switched(a, 0, a_d, 1, 1, d_M)))
        l2 = status(lemma2_problem(bounded(a, a_d, 1, d_M)))
        agree += t1 == l2
    assert agree == 20


def test_split_feeds_switched_modes():
    sys = switched(0.3, 0.2, 0.1, 1, 2, 4)
    s1, s2 = split_switched(sys)
    names = [c.name for c in theorem1_problem(sys).conditions]
    assert f"phi_1[d={s1.d_m}]" in names and f"phi_1[d={s1.d_M}]" in names
    assert f"phi_2[d={s2.d_m}]" in names and f"phi_2[d={s2.d_M}]" in names


def test_epsilon_range(example_plant):
    for eps in (-1.0, 0.1):
        with pytest.raises(ValueError):
            corollary1_problem(example_plant, 1, 1, 2, eps)


def test_design_unreachable_unstable():
    plant = PlantModel([[2.0]], [[0.0]])
    assert status(corollary1_problem(plant, 1, 1, 2, 0.0)) == INFEASIBLE


def test_recover_gains_scaling():
    g = recover_gains({"U": np.eye(2), "Kbar": np.array([[1.0, 2.0]]),
                       "Fbar": np.array([[3.0, 4.0]]), "Lbar": np.eye(2)})
    np.testing.assert_array_equal(g.K, [[1.0, 2.0]])
    g = recover_gains({"U": 2 * np.eye(2), "Kbar": np.array([[2.0, 4.0]]),
                       "Fbar": np.zeros((1, 2)), "Lbar": np.zeros((2, 2))})
    np.testing.assert_allclose(g.K, [[1.0, 2.0]])
    with pytest.raises(GainRecoveryError):
        recover_gains({"U": np.array([[1.0, 0.0], [0.0, 1e-14]]), "Kbar": np.zeros((1, 2)),
                       "Fbar": np.zeros((1, 2)), "Lbar": np.zeros((2, 2))})


def test_design_small_round_trip(example_plant):
    """Feasible design at d_M = 2; the unbarred certificate certifies the recovered loop."""
    p = corollary1_problem(example_plant, 1, 1, 2, -0.995)
    r = solve(normalize(p))
    assert r.feasible
    sys = design_closed_loop(p, r.assignment)
    analysis = theorem1_problem(sys)
    vals = unbar_certificate(p, r.assignment)
    for c in analysis.constraints:
        M = c.normalized(vals)
        scale = 1.0 + np.linalg.norm(M)
        assert np.linalg.eigvalsh(M)[0] >= -1e-7 * scale, c.name
    assert status(analysis) == FEASIBLE
