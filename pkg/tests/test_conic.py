import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noma_uav.conic import (
    ConeProgram,
    bilinear_lower_bound,
    rate_lower_bound,
    taylor_distance_lower_bound,
)
from noma_uav.errors import Infeasible, InvariantViolation


def test_ball_boundary_minimum():
    p = ConeProgram()
    x = p.add_var("x", 1)
    p.add_objective([x], [1.0])
    # ||x - 1|| <= 0.5
    p.norm_bound([([x], [1.0], -1.0)], [], [], 0.5)
    rep = p.solve()
    assert rep.objective == pytest.approx(0.5, abs=1e-7)
    assert rep.feasibility_residual <= 1e-7
    assert rep.optimality_gap <= 1e-6


def test_speed_epigraph_seed():
    # min t s.t. ||q2 - q1|| <= v t with both endpoints fixed
    q1 = np.array([3.0, -4.0])
    q2 = np.array([-9.0, 1.0])
    v = 7.0
    p = ConeProgram()
    t = p.add_var("t", 1)
    p.add_objective([t], [1.0])
    rows = [([], [], q2[0] - q1[0]), ([], [], q2[1] - q1[1])]
    p.norm_bound(rows, [t], [v], 0.0)
    rep = p.solve()
    assert rep.objective == pytest.approx(np.linalg.norm(q2 - q1) / v, rel=1e-7)


def test_equality_rows_and_value_accessor():
    p = ConeProgram()
    x = p.add_var("x", 2)
    p.add_objective([x, x + 1], [1.0, 1.0])
    p.lin_eq([x], [1.0], 2.5)
    p.lin_ineq([x + 1], [-1.0], -1.0)  # x1 >= 1
    rep = p.solve()
    assert rep.value("x")[0] == pytest.approx(2.5, abs=1e-8)
    assert rep.value("x")[1] == pytest.approx(1.0, abs=1e-6)


def test_quad_upper_matches_closed_form():
    # min u s.t. (x-3)^2/2 <= u, x fixed at 1 by equality -> u* = 2
    p = ConeProgram()
    x = p.add_var("x", 1)
    u = p.add_var("u", 1)
    p.add_objective([u], [1.0])
    p.lin_eq([x], [1.0], 1.0)
    p.quad_upper([(x, 1.0, 3.0)], [u], [1.0], 0.0)
    rep = p.solve()
    assert rep.objective == pytest.approx(2.0, rel=1e-6)


def test_infeasible_certified():
    p = ConeProgram()
    x = p.add_var("x", 1)
    p.add_objective([x], [1.0])
    p.lin_ineq([x], [1.0], 0.0)
    p.lin_ineq([x], [-1.0], -1.0)  # x >= 1 contradicts x <= 0
    with pytest.raises(Infeasible):
        p.solve()


def test_dump_lists_every_constraint():
    p = ConeProgram()
    x = p.add_var("x", 2)
    p.add_objective([x], [1.0])
    p.lin_eq([x], [1.0], 1.0)
    p.lin_ineq([x + 1], [2.0], 3.0)
    p.norm_bound([([x], [1.0], 0.0)], [x + 1], [1.0], 0.5)
    text = p.dump()
    assert text.count("\n") == 3
    assert "eq:" in text and "ineq:" in text and "norm:" in text


def test_tolerances_must_be_positive():
    p = ConeProgram()
    x = p.add_var("x", 1)
    p.add_objective([x], [1.0])
    p.lin_ineq([x], [-1.0], 0.0)
    with pytest.raises(InvariantViolation):
        p.solve(feas_tol=0.0)


# ---------------------------------------------------------------------------
# Surrogate bounds
# ---------------------------------------------------------------------------


@given(
    st.floats(-500, 500), st.floats(-500, 500),
    st.floats(-500, 500), st.floats(-500, 500),
    st.floats(-800, 800), st.floats(-800, 800),
)
@settings(max_examples=120, deadline=None)
def test_distance_bound_dominated(qx, qy, bx, by, rx, ry):
    q_ref = np.array([rx, ry])
    b = np.array([bx, by])
    q = np.array([qx, qy])
    bound = taylor_distance_lower_bound(q_ref, b)
    true_val = float(np.sum((q - b) ** 2))
    assert bound(q) <= true_val + 1e-6
    assert bound(q_ref) == pytest.approx(float(np.sum((q_ref - b) ** 2)), abs=1e-9)


def test_distance_bound_degenerate_anchor():
    b = np.array([10.0, -2.0])
    bound = taylor_distance_lower_bound(b, b)
    assert bound(b) == pytest.approx(0.0, abs=1e-12)
    assert bound(np.array([100.0, 100.0])) == pytest.approx(0.0, abs=1e-9)


@given(st.floats(0, 50), st.floats(0, 12), st.floats(0, 50), st.floats(0, 12))
@settings(max_examples=120, deadline=None)
def test_bilinear_bound_dominated(t, pi, t_ref, pi_ref):
    bound = bilinear_lower_bound(t_ref, pi_ref)
    assert bound.product_lower(t, pi) <= t * pi + 1e-9
    assert bound.product_lower(t_ref, pi_ref) == pytest.approx(t_ref * pi_ref, abs=1e-10)


def test_bilinear_bound_zero_reference():
    bound = bilinear_lower_bound(0.0, 0.0)
    t, pi = 3.0, 4.0
    assert bound.product_lower(t, pi) == pytest.approx(-(t**2) / 2 - pi**2 / 2)


@given(st.floats(0, 4e6), st.floats(0, 4e6))
@settings(max_examples=120, deadline=None)
def test_rate_bound_dominated(z, z_ref):
    eta, h, alpha = 1.6e6, 85.0, 2.2
    b = np.zeros(2)
    q_ref = np.array([math.sqrt(z_ref), 0.0])
    bound = rate_lower_bound(q_ref, b, eta, h, alpha)
    true_rate = math.log2(1 + eta / (z + h * h) ** (alpha / 2))
    assert bound(z) <= true_rate + 1e-9
    true_ref = math.log2(1 + eta / (z_ref + h * h) ** (alpha / 2))
    assert bound(z_ref) == pytest.approx(true_ref, abs=1e-10)
    assert bound.slope > 0


def test_rate_bound_far_distance_goes_negative():
    bound = rate_lower_bound(np.zeros(2), np.zeros(2), 1.6e6, 85.0, 2.2)
    assert bound(1e9) < 0.0


def test_random_socp_against_nested_grid():
    from oracles import nested_grid_minimize

    rng = np.random.default_rng(99)
    for trial in range(12):
        dim = int(rng.integers(2, 5))
        n_balls = int(rng.integers(1, 4))
        balls = []
        for _ in range(n_balls):
            r = rng.uniform(1.0, 2.0)
            z = rng.uniform(-0.3, 0.3, size=dim) * r
            balls.append((z, r))
        c = rng.normal(size=dim)
        c /= np.linalg.norm(c)

        p = ConeProgram()
        x = p.add_var("x", dim)
        cols = list(range(x, x + dim))
        p.add_objective(cols, c)
        for z, r in balls:
            rows = [([cols[k]], [1.0], -z[k]) for k in range(dim)]
            p.norm_bound(rows, [], [], r)
        for k in range(dim):  # box |x_k| <= 2.5 keeps the oracle bounded
            p.lin_ineq([cols[k]], [1.0], 2.5)
            p.lin_ineq([cols[k]], [-1.0], 2.5)
        rep = p.solve()

        def feasible(pts):
            ok = np.all(np.abs(pts) <= 2.5, axis=1)
            for z, r in balls:
                ok &= np.sum((pts - z) ** 2, axis=1) <= r * r
            return ok

        val, _ = nested_grid_minimize(feasible, lambda pts: pts @ c, np.zeros(dim), 2.5)
        assert rep.objective == pytest.approx(val, abs=1e-4)
