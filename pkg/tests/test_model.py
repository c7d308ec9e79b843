import numpy as np
import pytest

from delaylmi.model import (BoundedDelaySubsystem, ControllerGains, DelaySystem, HistoryVector,
                            ModelError, PlantModel, build_closed_loop, sigma, split_switched)


def scalar(a):
    return np.array([[float(a)]])


def test_delay_system_bounds():
    z = scalar(0)
    DelaySystem(z, z, z, 1, 1, 1)
    with pytest.raises(ModelError):
        DelaySystem(z, z, z, 2, 1, 3)
    with pytest.raises(ModelError):
        DelaySystem(z, z, z, 0, 1, 3)
    with pytest.raises(ModelError):
        DelaySystem(np.zeros((2, 2)), z, z, 1, 1, 2)
    with pytest.raises(ModelError):
        DelaySystem(np.zeros((2, 3)), z, z, 1, 1, 2)


def test_bounded_subsystem_delta():
    z = scalar(0)
    assert BoundedDelaySubsystem(z, z, z, z, 2, 5).d_delta == 3
    assert BoundedDelaySubsystem(z, z, z, z, 2, 2).d_delta == 0
    with pytest.raises(ModelError):
        BoundedDelaySubsystem(z, z, z, z, 3, 2)


def test_split_switched_table():
    N = np.array([[0.3, 0.1], [0.0, 0.2]])
    A = np.eye(2) * 0.5
    A_d = np.eye(2) * 0.1
    s1, s2 = split_switched(DelaySystem(A, N, A_d, 1, 3, 5))
    assert (s1.d_m, s1.d_M) == (1, 3) and (s2.d_m, s2.d_M) == (3, 5)
    assert not s1.A_m.any() and np.array_equal(s1.A_M, N)
    assert np.array_equal(s2.A_m, N) and not s2.A_M.any()
    for s in (s1, s2):
        assert np.array_equal(s.A, A) and np.array_equal(s.A_d, A_d)


def test_split_collapsed_interval():
    z = scalar(0)
    s1, s2 = split_switched(DelaySystem(z, z, z, 2, 2, 2))
    assert s1.d_delta == 0 and s2.d_delta == 0


def test_sigma_boundary():
    z = scalar(0)
    sys1 = DelaySystem(z, z, z, 1, 1, 4)
    assert sigma(1, sys1) == 1
    assert sigma(2, sys1) == 2
    sys3 = DelaySystem(z, z, z, 1, 3, 4)
    assert sigma(3, sys3) == 1 and sigma(4, sys3) == 2
    with pytest.raises(ModelError):
        sigma(5, sys3)
    with pytest.raises(ModelError):
        sigma(0, sys3)


def test_active_mode_bounds_hold(rng):
    for _ in range(50):
        d_m = int(rng.integers(1, 4))
        d_n = d_m + int(rng.integers(0, 4))
        d_M = d_n + int(rng.integers(0, 4))
        z = scalar(0)
        sys = DelaySystem(z, z, z, d_m, d_n, d_M)
        subs = split_switched(sys)
        for d in range(d_m, d_M + 1):
            s = subs[sigma(d, sys) - 1]
            assert s.d_m <= d <= s.d_M


def test_switched_steps_match_original(rng):
    n = 2
    for _ in range(30):
        d_m = int(rng.integers(1, 3))
        d_n = d_m + int(rng.integers(0, 3))
        d_M = d_n + int(rng.integers(0, 3))
        A, A_n, A_d = (rng.normal(size=(n, n)) for _ in range(3))
        sys = DelaySystem(A, A_n, A_d, d_m, d_n, d_M)
        subs = split_switched(sys)
        h = rng.normal(size=(d_M + 1, n))
        for d in range(d_m, d_M + 1):
            sub = subs[sigma(d, sys) - 1]
            np.testing.assert_allclose(sub.step(h, d), sys.step(h, d), rtol=1e-13, atol=1e-13)


def test_closed_loop_top_left(example_plant):
    gains = ControllerGains([[-0.1925, -0.1702]], [[0.0, 0.0]], np.zeros((2, 2)))
    sys = build_closed_loop(example_plant, gains, 1, 1, 17)
    np.testing.assert_allclose(sys.A[:2, :2], [[0.6376, -0.0322], [0.4046, 1.0338]], atol=1e-4)


def test_closed_loop_open_loop(example_plant):
    z = np.zeros((1, 2))
    sys = build_closed_loop(example_plant, ControllerGains(z, z, np.zeros((2, 2))), 1, 1, 3)
    A_p = example_plant.A_p
    np.testing.assert_array_equal(sys.A, np.block([[A_p, np.zeros((2, 2))],
                                                   [np.zeros((2, 2)), A_p]]))
    assert not sys.A_d.any() and not sys.A_n.any()


def test_closed_loop_structure_without_f(example_plant, example_gains):
    g = ControllerGains(example_gains.K, np.zeros((1, 2)), example_gains.L)
    sys = build_closed_loop(example_plant, g, 1, 1, 3)
    L = g.L
    np.testing.assert_array_equal(sys.A_d[:2], 0)
    np.testing.assert_array_equal(sys.A_d[2:, :2], -L)
    np.testing.assert_array_equal(sys.A_d[2:, 2:], 0)
    np.testing.assert_array_equal(sys.A_n[:2], 0)
    np.testing.assert_array_equal(sys.A_n[2:, :2], L)
    np.testing.assert_array_equal(sys.A_n[2:, 2:], -L)


def test_closed_loop_dimension_errors(example_plant):
    with pytest.raises(ModelError):
        build_closed_loop(example_plant, ControllerGains([[1.0, 2.0, 3.0]], [[0, 0, 0]],
                                                         np.zeros((3, 3))), 1, 1, 2)
    with pytest.raises(ModelError):
        ControllerGains([[1.0, 2.0]], [[1.0]], np.zeros((2, 2)))
    with pytest.raises(ModelError):
        PlantModel(np.eye(2), np.ones((3, 1)))


def test_history_vector():
    h = HistoryVector([[3.0], [2.0], [0.5]])
    assert h.d_M == 2 and h.n == 1
    np.testing.assert_array_equal(h.eta(0), [1.0])
    np.testing.assert_array_equal(HistoryVector.constant([1, 2], 3).samples, [[1, 2]] * 4)
