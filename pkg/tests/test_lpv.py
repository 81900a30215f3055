import numpy as np
import pytest

from lpvtube.errors import ConfigMismatch, DimensionMismatch, ThetaOutOfRange
from lpvtube.lpv import (FULL, RATE_BOUNDED, LpvSystem, check_continuity, check_well_posed,
                         make_scheduling_sequence, validate)
from lpvtube.polytope import Polytope, vrep_from_hrep


def test_a_of_theta_origin(example):
    np.testing.assert_array_equal(example.sys.a_of_theta([0.0, 0.0]), example.sys.A0)


def test_a_of_theta_vertex(example):
    # A0 + A1 - A2, entry by entry
    expected = np.array([[1 + 0.08 - 0.23, 1 - 0.6 - 0.0],
                         [0 + 0.4 - 0.0, 1 + 0.1 + 0.32]])
    np.testing.assert_allclose(example.sys.a_of_theta([1.0, -1.0]), expected, atol=1e-15)
    np.testing.assert_allclose(expected, [[0.85, 0.4], [0.4, 1.42]], atol=1e-15)


def test_affinity(example, rng):
    s = example.sys
    for _ in range(20):
        t1, t2 = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
        np.testing.assert_allclose(s.a_of_theta((t1 + t2) / 2),
                                   (s.a_of_theta(t1) + s.a_of_theta(t2)) / 2, atol=1e-14)


def test_vertex_interpolation(example, rng):
    s = example.sys
    Av = s.vertex_matrices()
    for _ in range(20):
        eta = rng.dirichlet(np.ones(s.q))
        theta = eta @ s.theta_vertices
        np.testing.assert_allclose(s.a_of_theta(theta), np.tensordot(eta, Av, axes=1), atol=1e-14)


def test_outside_theta_warns(example):
    with pytest.warns(UserWarning):
        example.sys.a_of_theta([2.0, 0.0])


def test_dimension_checks(example):
    s = example.sys
    with pytest.raises(DimensionMismatch):
        s.a_of_theta([1.0])
    with pytest.raises(DimensionMismatch):
        LpvSystem(s.A0, s.Ai, np.ones((3, 1)), s.Theta, s.X, s.U)
    with pytest.raises(DimensionMismatch):
        LpvSystem(s.A0, s.Ai[:1], s.B, s.Theta, s.X, s.U)
    with pytest.raises(DimensionMismatch):
        LpvSystem(s.A0, s.Ai, s.B, s.Theta, s.U, s.U)


def test_step(example):
    s = example.sys
    x = np.array([4.0, -6.0])
    np.testing.assert_allclose(s.step(x, [1.0], [1.0, -1.0]),
                               s.a_of_theta([1.0, -1.0]) @ x + [0.0, 1.0])


def test_validate(example):
    rep = validate(example.sys)
    assert rep.ok and rep.q == 4
    s = example.sys
    shifted = Polytope.box([1.0, -10.0], [5.0, 10.0])
    bad = LpvSystem(s.A0, s.Ai, s.B, s.Theta, shifted, s.U)
    rep = validate(bad)
    assert not rep.ok and not rep.checks["X_pc_set"]


def test_theta_from_halfspaces():
    T = vrep_from_hrep([[1, 0], [-1, 0], [0, 1], [0, -1]], [1, 1, 1, 1])
    s = LpvSystem(np.eye(2), np.zeros((2, 2, 2)), np.ones((2, 1)), T,
                  Polytope.inf_ball(2), Polytope.inf_ball(1))
    assert validate(s).q == 4


def test_full_scheduling(example):
    seq = make_scheduling_sequence(example.sys, [1.0, -1.0], 8)
    assert seq.N == 8 and seq.mode == FULL
    assert seq.sets[0].n_vertices == 1
    np.testing.assert_array_equal(seq.vertices(0), [[1.0, -1.0]])
    assert all(S is example.sys.Theta for S in seq.sets[1:])
    assert check_well_posed(example.sys, seq)


def test_frozen_scheduling(example):
    seq = make_scheduling_sequence(example.sys, [0.2, 0.3], 5, RATE_BOUNDED, 0.0)
    for i in range(5):
        np.testing.assert_allclose(seq.vertices(i), [[0.2, 0.3]])


def test_rate_bounded_continuity(example, rng):
    s = example.sys
    r = 0.1
    theta = np.zeros(2)
    prev = make_scheduling_sequence(s, theta, 6, RATE_BOUNDED, r)
    for _ in range(30):
        theta = np.clip(theta + rng.uniform(-r, r, 2), -1, 1)
        nxt = make_scheduling_sequence(s, theta, 6, RATE_BOUNDED, r)
        assert check_continuity(prev, nxt)
        assert check_well_posed(s, nxt)
        prev = nxt


def test_full_mode_continuity(example, rng):
    s = example.sys
    prev = make_scheduling_sequence(s, rng.uniform(-1, 1, 2), 8)
    for _ in range(10):
        nxt = make_scheduling_sequence(s, rng.uniform(-1, 1, 2), 8)
        assert check_continuity(prev, nxt)
        prev = nxt


def test_scheduling_errors(example):
    with pytest.raises(ThetaOutOfRange):
        make_scheduling_sequence(example.sys, [1.5, 0.0], 4)
    with pytest.raises(ConfigMismatch):
        make_scheduling_sequence(example.sys, [0.0, 0.0], 4, RATE_BOUNDED)
    with pytest.raises(ConfigMismatch):
        make_scheduling_sequence(example.sys, [0.0, 0.0], 4, "psychic")
    with pytest.raises(ValueError):
        make_scheduling_sequence(example.sys, [0.0, 0.0], 0)
