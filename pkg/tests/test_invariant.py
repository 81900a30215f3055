import logging

import numpy as np
import pytest

from conftest import scalar_system
from lpvtube.errors import NoContraction, StateConstraintViolated
from lpvtube.invariant import (ContractiveSequence, VertexController, choose_initial_set,
                               forward_propagation_synthesis, maximal_contractive_set,
                               pre_contractive, smallest_m_search, theta_multipliers, tree_size,
                               verify_sequence)
from lpvtube.polytope import (Polytope, contains_set, gauge, hrep_from_vrep, same_set, scale,
                              set_gauge, vrep_from_hrep)


def interval(a):
    return Polytope.box([-a], [a])


# ---------------------------------------------------------------------------
# verification

def test_verify_deadbeat_scalar():
    sys = scalar_system()
    rep = verify_sequence(sys, ContractiveSequence((interval(2.0),), 0.0))
    assert rep.ok
    S0 = interval(2.0)
    th = sys.theta_vertices[:, 0]
    for j, x in enumerate(S0.vertices[:, 0]):
        np.testing.assert_allclose(rep.controls[0][j, :, 0], -x * th, atol=1e-9)


def test_verify_scaled_sequence():
    sys = scalar_system()
    rep = verify_sequence(sys, ContractiveSequence((interval(2.0),), 0.0))
    scaled = ContractiveSequence((interval(1.6),), 0.0, (0.8 * rep.controls[0],))
    assert verify_sequence(sys, scaled).ok


def test_verify_reports_failing_vertex():
    sys = scalar_system(u_max=0.5)
    rep = verify_sequence(sys, ContractiveSequence((interval(2.0),), 0.0))
    assert not rep.ok
    S0 = interval(2.0)
    j = int(np.argmax(S0.vertices[:, 0]))
    l = int(np.argmax(sys.theta_vertices[:, 0]))
    assert ("successor", 0, j, l) in rep.failures


def test_verify_flags_bad_controls():
    sys = scalar_system()
    C = np.zeros((2, 2, 1))
    rep = verify_sequence(sys, ContractiveSequence((interval(2.0),), 0.5, (C,)))
    assert any(f[0] == "successor" for f in rep.failures)
    C = np.full((2, 2, 1), 10.0)
    rep = verify_sequence(sys, ContractiveSequence((interval(2.0),), 0.5, (C,)))
    assert any(f[0] == "input" for f in rep.failures)
    rep = verify_sequence(sys, ContractiveSequence((interval(3.0),), 0.5))
    assert ("outside_X", 0) in rep.failures


def test_sequence_dict_round_trip(fs_seq):
    d = fs_seq.to_dict()
    back = ContractiveSequence.from_dict(d)
    assert back.M == fs_seq.M
    for a, b in zip(back.sets, fs_seq.sets):
        np.testing.assert_allclose(a.vertices, b.vertices)
    for a, b in zip(back.controls, fs_seq.controls):
        np.testing.assert_allclose(a, b)


# ---------------------------------------------------------------------------
# maximal contractive set

def test_maxset_scalar_whole_box():
    sys = scalar_system()
    Om = maximal_contractive_set(sys, 0.9)
    assert same_set(Om, interval(2.0))


def test_maxset_example(example, omega):
    assert omega.n_vertices == 8
    assert verify_sequence(example.sys, ContractiveSequence((omega,), example.lam)).ok
    # point symmetry of the data carries over to the set
    assert same_set(omega, hrep_from_vrep(-omega.vertices))


def test_maxset_fixed_point(example, omega):
    A, b = pre_contractive(example.sys, omega, example.lam)
    pre = vrep_from_hrep(np.vstack([A, omega.A]), np.r_[b, omega.b])
    assert contains_set(pre, omega)


def test_maxset_is_maximal(example, omega, rng):
    # points just outside the set have no contractive input for some vertex
    lam = example.lam
    sys = example.sys
    outside = 1.02 * omega.vertices
    for x in outside:
        ok = True
        for Al in sys.vertex_matrices():
            y = Al @ x
            # best scalar input: minimize gauge of y + B u over u in U
            us = np.linspace(-6, 6, 2401)
            g = gauge(omega, y[None] + us[:, None] * sys.B[:, 0][None])
            ok &= g.min() <= lam + 1e-6
        assert not ok


def test_maxset_rejects_bad_lambda(example):
    with pytest.raises(ValueError):
        maximal_contractive_set(example.sys, 1.0)


def test_maxset_weak_input_scalar():
    # |theta x + u| <= lam |x| with |u| <= c at theta = 3 gives |x| <= c / (3 - lam)
    sys = scalar_system(u_max=0.01, theta=(2.0, 3.0))
    Om = maximal_contractive_set(sys, 0.5)
    assert same_set(Om, interval(0.01 / 2.5))


# ---------------------------------------------------------------------------
# forward propagation

def test_forward_propagation_deadbeat_flags_degenerate(caplog):
    sys = scalar_system()
    with caplog.at_level(logging.WARNING):
        seq = forward_propagation_synthesis(sys, interval(2.0), 0.5, 3,
                                            controller=lambda x, th: -th[0] * x)
    assert seq.M == 1
    assert "lower-dimensional" in caplog.text


def test_forward_propagation_scalar_gain():
    sys = scalar_system()
    seq = forward_propagation_synthesis(sys, interval(2.0), 0.5, 3,
                                        controller=lambda x, th: -0.8 * th[0] * x)
    assert seq.M == 1
    # successors 0.2 * theta * x span [-0.6, 0.6], inside 0.5 * [-2, 2]
    succ = [0.2 * t * x for t in (0.5, 1.5) for x in (-2, 2)]
    assert max(succ) == pytest.approx(0.6)
    assert contains_set(scale(interval(2.0), 0.5), np.array(succ)[:, None])


def test_forward_propagation_multi_step():
    sys = scalar_system()
    seq = forward_propagation_synthesis(sys, interval(2.0), 0.3, 5,
                                        controller=lambda x, th: -0.5 * th[0] * x)
    # closed loop 0.5 theta x, worst factor 0.75 per step: 0.75^M <= 0.3 at M = 5
    assert seq.M == 5
    assert verify_sequence(sys, seq).ok


def test_forward_propagation_no_contraction():
    sys = scalar_system()
    with pytest.raises(NoContraction):
        forward_propagation_synthesis(sys, interval(2.0), 0.1, 2,
                                      controller=lambda x, th: -0.5 * th[0] * x)


def test_forward_propagation_state_violation():
    sys = scalar_system()
    with pytest.raises(StateConstraintViolated):
        forward_propagation_synthesis(sys, interval(2.0), 0.5, 3, controller=lambda x, th: 0.0 * x)


def test_forward_propagation_example(example, omega, fs_seq):
    assert fs_seq.M <= 5
    assert verify_sequence(example.sys, fs_seq).ok
    again = forward_propagation_synthesis(example.sys, fs_seq.sets[0], example.lam, 5,
                                          reference=omega)
    assert again.M == fs_seq.M
    for a, b in zip(again.sets, fs_seq.sets):
        np.testing.assert_array_equal(a.vertices, b.vertices)
    for a, b in zip(again.controls, fs_seq.controls):
        np.testing.assert_array_equal(a, b)


def test_forward_propagation_longer_sequence(example, omega):
    S0 = hrep_from_vrep(omega.vertices[[0, 2, 4, 6]])
    seq = forward_propagation_synthesis(example.sys, S0, example.lam, 5, reference=omega)
    assert 1 < seq.M <= 5
    assert verify_sequence(example.sys, seq).ok


# ---------------------------------------------------------------------------
# tree search

def test_tree_size():
    assert [tree_size(4, 4, d) for d in range(4)] == [4, 16, 64, 256]


def test_tree_search_deadbeat():
    seq = smallest_m_search(scalar_system(), interval(2.0), 0.0, 3)
    assert seq.M == 1


def test_tree_search_weak_input():
    # x = 2, theta = 1.5: |3 + u| >= 2 > 1.9 for |u| <= 1, and x = 2 is a fixed point
    sys = scalar_system(u_max=1.0)
    with pytest.raises(NoContraction):
        smallest_m_search(sys, interval(2.0), 0.95, 1)
    with pytest.raises(NoContraction):
        smallest_m_search(sys, interval(2.0), 0.95, 3)


def test_tree_search_needs_two_steps():
    # |u| <= 1.6: one step reaches at best 3 - 1.6 = 1.4 > 0.6 * 2, two steps suffice
    sys = scalar_system(u_max=1.6)
    seq = smallest_m_search(sys, interval(2.0), 0.6, 4)
    assert seq.M == 2
    assert verify_sequence(sys, seq).ok


def test_tree_search_example(example, omega):
    S0 = choose_initial_set(omega)
    seq = smallest_m_search(example.sys, S0, example.lam, 3)
    assert verify_sequence(example.sys, seq).ok


def test_literal_angular_spread_subset_has_no_short_sequence(example, omega):
    # the four vertices with the widest angular gaps do not contract within 5 steps
    ang = np.arctan2(omega.vertices[:, 1], omega.vertices[:, 0])
    idx = [1, 3, 5, 7]
    a = np.sort(ang[idx])
    assert np.diff(np.r_[a, a[0] + 2 * np.pi]).min() > np.radians(86)
    with pytest.raises(NoContraction):
        smallest_m_search(example.sys, hrep_from_vrep(omega.vertices[idx]), example.lam, 3)


# ---------------------------------------------------------------------------
# initial set and vertex controller

def test_choose_initial_set(omega):
    S0 = choose_initial_set(omega)
    assert S0.n_vertices == 4 and S0.is_pc_set()
    assert contains_set(omega, S0)
    assert set(map(tuple, S0.vertices)) <= set(map(tuple, omega.vertices))


def test_theta_multipliers(example, rng):
    V = example.sys.theta_vertices
    for _ in range(10):
        th = rng.uniform(-1, 1, 2)
        eta = theta_multipliers(V, th)
        assert eta.min() >= 0 and eta.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(eta @ V, th, atol=1e-9)
    with pytest.raises(ValueError):
        theta_multipliers(V, [2.0, 0.0])


def test_vertex_controller_interpolates(example, fs_seq, rng):
    K = VertexController(example.sys, fs_seq)
    S = fs_seq.sets[0]
    for j, v in enumerate(S.vertices):
        for l in range(example.sys.q):
            np.testing.assert_allclose(K.control_at_vertex(0, v, l), fs_seq.controls[0][j, l],
                                       atol=1e-9)
    for _ in range(20):
        x = rng.dirichlet(np.ones(S.n_vertices)) @ S.vertices
        a = rng.uniform(0, 1)
        for l in range(example.sys.q):
            np.testing.assert_allclose(K.control_at_vertex(0, a * x, l),
                                       a * K.control_at_vertex(0, x, l), atol=1e-9)
    np.testing.assert_allclose(K.control_at_vertex(0, np.zeros(2), 0), 0.0)


def test_vertex_controller_keeps_points_in_next_set(example, fs_seq, rng):
    sys = example.sys
    K = VertexController(sys, fs_seq)
    for k in range(2 * fs_seq.M):
        i = fs_seq.sigma(k)
        S = fs_seq.sets[i]
        H, h = fs_seq.target(i)
        for _ in range(20):
            x = rng.dirichlet(np.ones(S.n_vertices)) @ S.vertices
            th = rng.uniform(-1, 1, 2)
            u = K.control(i, x, th)
            assert sys.U.contains(u, 1e-8)
            y = sys.a_of_theta(th) @ x + sys.B @ u
            assert np.all(H @ y <= h + 1e-7)


def test_gauge_decrease_under_set_propagation(example, fs_seq, rng):
    sys, lam, M = example.sys, fs_seq.lam, fs_seq.M
    K = VertexController(sys, fs_seq)
    for trial in range(100):
        k = trial % (2 * M)
        i = fs_seq.sigma(k)
        S = fs_seq.sets[i]
        W = rng.dirichlet(np.ones(S.n_vertices), size=5) @ S.vertices * rng.uniform(0.1, 1.0)
        X = hrep_from_vrep(W)
        G = K.propagate(k, X)
        nxt = fs_seq.sets[fs_seq.sigma(k + 1)]
        factor = 1.0 if i < M - 1 else lam
        assert set_gauge(nxt, G) <= factor * set_gauge(S, X) + 1e-7
