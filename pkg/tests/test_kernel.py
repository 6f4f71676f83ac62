import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from sagmec import kernel, kernels


def quad(c):
    c = np.asarray(c, dtype=float)
    return lambda x: (float(((x - c) ** 2).sum()), 2 * (x - c))


def test_box_active_bound():
    res = kernel.solve(kernel.ConvexProgram(1, quad([3.0]), 0.0, 1.0), [0.5])
    assert res.x[0] == pytest.approx(1.0, abs=1e-9)
    assert res.status == kernel.CONVERGED


def test_box_interior():
    res = kernel.solve(kernel.ConvexProgram(1, quad([0.0]), -1.0, 1.0), [0.7])
    assert abs(res.x[0]) <= 1e-8


def test_lp_on_simplex_picks_cheapest_vertex():
    c = np.array([3.0, 1.0, 2.0])
    prog = kernel.ConvexProgram(3, lambda x: (float(c @ x), c.copy()), 0.0, 1.0, simplex_groups=[np.arange(3)])
    res = kernel.solve(prog, np.full(3, 1 / 3))
    np.testing.assert_allclose(res.x, [0.0, 1.0, 0.0], atol=1e-9)


def test_barrier_constraint():
    # min (x-2)^2 + (y-2)^2  s.t. x + y <= 1  ->  (0.5, 0.5)
    def cons(x):
        return np.array([x.sum() - 1.0]), np.ones((1, 2))

    prog = kernel.ConvexProgram(2, quad([2.0, 2.0]), -5.0, 5.0, constraints=cons)
    res = kernel.solve(prog, [0.0, 0.0], tol=1e-10)
    # a barrier iterate stays strictly inside; its objective gap is bounded by the final weight
    assert res.x.sum() < 1.0
    assert res.x[0] == pytest.approx(res.x[1], abs=1e-12)
    assert res.fun == pytest.approx(4.5, rel=1e-3)
    np.testing.assert_allclose(res.x, [0.5, 0.5], atol=1e-3)


def test_infeasible_start_reported():
    prog = kernel.ConvexProgram(1, quad([0.0]), -5.0, 5.0, constraints=lambda x: (x - 1.0, np.ones((1, 1))))
    assert kernel.solve(prog, [2.0]).status == kernel.INFEASIBLE_START


def test_start_outside_box_rejected():
    with pytest.raises(kernel.PreconditionError):
        kernel.solve(kernel.ConvexProgram(1, quad([0.0]), 0.0, 1.0), [3.0])
    with pytest.raises(ValueError):
        kernel.ConvexProgram(1, quad([0.0]), 1.0, 0.0)


def test_gradient_check_catches_wrong_gradient():
    bad = lambda x: (float((x**2).sum()), 3 * x)
    assert kernel.check_gradient(bad, np.array([1.0, 2.0])) > 0.1
    with pytest.raises(kernel.GradientCheckError):
        kernel.solve(kernel.ConvexProgram(2, bad, -3.0, 3.0), [1.0, 2.0], debug=True)
    assert kernel.check_gradient(quad([1.0, 1.0]), np.array([0.3, 0.2])) < 1e-8


def test_projection_examples(backend):
    x = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(kernel.project_box_simplex(x, simplex_groups=[np.arange(3)]), x, atol=1e-15)
    np.testing.assert_allclose(kernel.project_box_simplex([2.0, -1.0], box=(0.0, 1.0)), [1.0, 0.0])
    p = kernel.project_box_simplex([0.5, 0.8, 0.9], simplex_groups=[np.arange(3)])
    np.testing.assert_allclose(p, [0.1, 0.4, 0.5], atol=1e-12)


def test_projection_matches_grid_search():
    v = np.array([0.5, 0.8, 0.9])
    p = kernels.project_simplex_rows(v)[0]
    step = 1e-3
    best, arg = np.inf, None
    n = int(round(1 / step))
    for i in range(n + 1):
        a = i * step
        b = np.arange(0, n - i + 1) * step
        c = 1.0 - a - b
        d = (a - v[0]) ** 2 + (b - v[1]) ** 2 + (c - v[2]) ** 2
        k = int(d.argmin())
        if d[k] < best:
            best, arg = d[k], np.array([a, b[k], c[k]])
    np.testing.assert_allclose(p, arg, atol=2e-3)


vec = hnp.arrays(np.float64, st.integers(1, 8), elements=st.floats(-10, 10))


@given(vec, st.floats(0.1, 5.0))
def test_projection_properties(v, total):
    p = kernels.project_simplex_rows(v, total)[0]
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(total, rel=1e-12, abs=1e-12)
    # idempotent, and the projection is no farther than any simplex point we try
    np.testing.assert_allclose(kernels.project_simplex_rows(p, total)[0], p, atol=1e-12)
    e = np.zeros_like(v)
    e[0] = total
    assert ((p - v) ** 2).sum() <= ((e - v) ** 2).sum() + 1e-9
    u = np.full_like(v, total / v.size)
    assert ((p - v) ** 2).sum() <= ((u - v) ** 2).sum() + 1e-9


@given(hnp.arrays(np.float64, 3, elements=st.floats(-3, 3)))
def test_solver_on_random_convex_quadratic(c):
    prog = kernel.ConvexProgram(3, quad(c), -1.0, 1.0)
    res = kernel.solve(prog, np.zeros(3), tol=1e-10)
    np.testing.assert_allclose(res.x, np.clip(c, -1, 1), atol=1e-7)
