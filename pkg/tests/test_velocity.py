import numpy as np
import pytest

from velokern.exceptions import (
    InvalidInputError, PreconditionError, SimulationDivergedError,
)
from velokern.signals import diff_signal
from velokern.velocity import (
    NLSystem, ShiftedSystem, example_system, finite_difference_jacobian,
    ftc_coefficient_fn, ftc_coefficients, poly_coefficient,
    primal_factorization, shifted_ftc_coefficients, simpson_weights,
    simulate_primal, simulate_velocity,
)


def _linear_system(rng, n_a=2, n_b=2):
    A = rng.uniform(-0.3, 0.3, size=n_a)
    B = rng.normal(size=n_b + 1)
    M = np.concatenate([A, B])[None]
    return NLSystem(lambda xi: M @ xi, n_a, n_b, jacobian=lambda xi: M), A, B


def test_example_direct_evaluation():
    sys = example_system()
    # y1=0, y2=0, u0 (unused), u1=1, u2=1
    assert sys([0, 0, 0, 1, 1])[0] == pytest.approx(-1.0, abs=1e-15)
    assert sys(np.zeros(5))[0] == 0.0


def test_example_simulation_step():
    y = simulate_primal(example_system(), [[0.0]], y_hist=[[0.0], [0.0]],
                        u_hist=[[1.0], [1.0]])
    assert y[0, 0] == pytest.approx(-1.0, abs=1e-15)


def test_example_jacobian_vs_fd(rng):
    sys = example_system()
    for _ in range(20):
        xi = rng.normal(size=5)
        fd = finite_difference_jacobian(sys, xi)
        assert np.max(np.abs(sys.jac(xi) - fd)) <= 1e-6


def test_linear_matches_difference_equation(rng):
    sys, A, B = _linear_system(rng)
    u = rng.normal(size=(40, 1))
    y = simulate_primal(sys, u).ravel()
    ref = np.zeros(40)
    uu = np.concatenate([[0, 0], u.ravel()])
    yy = np.concatenate([[0, 0], ref])
    for k in range(40):
        yy[k + 2] = A[0] * yy[k + 1] + A[1] * yy[k] + B @ uu[k + 2:k - 1 if k else None:-1][:3]
    np.testing.assert_allclose(y, yy[2:], atol=1e-13)


def test_zero_input_zero_output():
    y = simulate_primal(example_system(), np.zeros((15, 1)))
    assert not y.any()


def test_divergence_reports_index():
    sys = NLSystem(lambda xi: np.array([np.nan if xi[0] else 1.0]), 1, 0)
    with pytest.raises(SimulationDivergedError) as exc:
        simulate_primal(sys, np.zeros((5, 1)))
    assert exc.value.index == 1


def test_simpson_weights():
    lam, w = simpson_weights(5)
    np.testing.assert_allclose(lam, [0, .25, .5, .75, 1])
    np.testing.assert_allclose(w, np.array([1, 4, 2, 4, 1]) / 12)
    for bad in (2, 4, 1):
        with pytest.raises(InvalidInputError):
            simpson_weights(bad)


def test_ftc_quadratic_closed_form():
    sys = NLSystem(lambda xi: np.array([xi[0] ** 2]), n_a=1, n_b=0,
                   jacobian=lambda xi: np.array([[2 * xi[0], 0.0]]))
    c = ftc_coefficients(sys, [1.0, 0.0], [3.0, 0.0])
    assert c.a[0][0, 0] == pytest.approx(4.0, abs=1e-12)


def test_ftc_linear_is_constant(rng):
    sys, A, B = _linear_system(rng)
    c = ftc_coefficients(sys, rng.normal(size=5), rng.normal(size=5))
    np.testing.assert_allclose([c.a[0][0, 0], c.a[1][0, 0]], A, atol=1e-14)
    np.testing.assert_allclose([b[0, 0] for b in c.b], B, atol=1e-14)


def _example_pairs(rng, T=60):
    sys = example_system()
    u = rng.normal(size=(T, 1))
    y = simulate_primal(sys, u).ravel()
    u = u.ravel()
    for k in range(4, T):
        yield (np.array([y[k - 2], y[k - 3], u[k - 1], u[k - 2], u[k - 3]]),
               np.array([y[k - 1], y[k - 2], u[k], u[k - 1], u[k - 2]]))


def _ftc_error(x0, x1, nodes):
    sys = example_system()
    c = ftc_coefficients(sys, x0, x1, nodes)
    d = x1 - x0
    inc = c.increment([d[0:1], d[1:2]], [d[2:3], d[3:4], d[4:5]])
    return abs(inc[0] - (sys(x1) - sys(x0))[0])


def test_ftc_exactness_example(rng):
    # consecutive regressors along a simulated record
    worst = max(_ftc_error(x0, x1, 1025) for x0, x1 in _example_pairs(rng))
    assert worst <= 1e-8


def test_ftc_fourth_order_convergence(rng):
    x0, x1 = max(_example_pairs(rng), key=lambda p: _ftc_error(*p, 65))
    e = [_ftc_error(x0, x1, n) for n in (65, 129, 257)]
    # halving h divides the composite Simpson error by about 16
    assert 10 < e[0] / e[1] < 25 and 10 < e[1] / e[2] < 25


def test_poly_coefficient_values():
    assert poly_coefficient([1, 1, 1], 2.0, 1.0) == pytest.approx(11.0, abs=1e-14)
    c = 0.7
    assert poly_coefficient([1, 1, 1], c, c) == pytest.approx(1 + 2 * c + 3 * c ** 2)


def test_poly_coefficient_vs_quadrature(rng):
    for _ in range(20):
        coeffs = rng.normal(size=4)
        sys = NLSystem(lambda xi, c=coeffs: np.array([sum(ci * xi[0] ** (i + 1)
                                                         for i, ci in enumerate(c))]),
                       n_a=1, n_b=0,
                       jacobian=lambda xi, c=coeffs: np.array(
                           [[sum((i + 1) * ci * xi[0] ** i for i, ci in enumerate(c)), 0.0]]))
        u, v = rng.normal(size=2)
        q = ftc_coefficients(sys, [v, 0.0], [u, 0.0]).a[0][0, 0]
        assert abs(poly_coefficient(coeffs, u, v) - q) <= 1e-10


def test_poly_coefficient_continuity():
    c = [0.3, -1.2, 0.5, 2.0]
    base = poly_coefficient(c, 0.8, 0.8)
    for eps in (1e-4, 1e-6, 1e-8, 1e-10):
        assert abs(poly_coefficient(c, 0.8 + eps, 0.8) - base) <= 20 * eps


def _shifted(rng):
    c = rng.uniform(-0.3, 0.3, size=(2, 3))
    fs = [lambda y, u, ci=ci: ci[0] * np.sin(y) + ci[1] * u + ci[2] * y * u for ci in c]
    return ShiftedSystem(fs)


def test_shifted_exactness(rng):
    sys = _shifted(rng)
    general = sys.as_nlsystem()
    for _ in range(10):
        y = rng.normal(size=4)   # y(k-1..k-3) and spare
        u = rng.normal(size=4)
        # windows for lags 1 and 2 at time k: col(y(k-i), y(k-i-1), u(k-i), u(k-i-1))
        wins = [np.array([y[i], y[i + 1], u[i + 1], u[i + 2]]) for i in range(2)]
        # u indices: u[0]=u(k), u[1]=u(k-1), ...
        coefs = shifted_ftc_coefficients(sys, wins)
        inc = sum(a[0, 0] * (y[i] - y[i + 1]) + b[0, 0] * (u[i + 1] - u[i + 2])
                  for i, (a, b) in enumerate(coefs))
        xi_cur = np.array([y[0], y[1], u[0], u[1], u[2]])
        xi_prev = np.array([y[1], y[2], u[1], u[2], u[3]])
        assert abs(inc - (general(xi_cur) - general(xi_prev))[0]) <= 1e-8


def test_shifted_single_lag_matches_general(rng):
    f = lambda y, u: 0.4 * np.tanh(y) + u ** 3  # noqa: E731
    sys = ShiftedSystem([f])
    w = rng.normal(size=4)
    (a, b), = shifted_ftc_coefficients(sys, [w])
    g = sys.as_nlsystem()
    c = ftc_coefficients(g, [w[1], 0.0, w[3]], [w[0], 0.0, w[2]])
    assert a[0, 0] == pytest.approx(c.a[0][0, 0], abs=1e-9)
    assert b[0, 0] == pytest.approx(c.b[1][0, 0], abs=1e-9)


def test_shifted_linear_constant():
    sys = ShiftedSystem([lambda y, u: 0.5 * y + 2 * u, lambda y, u: -0.1 * y])
    wins = [np.array([1.0, -2.0, 0.3, 4.0]), np.array([0.1, 0.2, 0.3, 0.4])]
    (a1, b1), (a2, b2) = shifted_ftc_coefficients(sys, wins)
    np.testing.assert_allclose([a1[0, 0], b1[0, 0], a2[0, 0], b2[0, 0]],
                               [0.5, 2.0, -0.1, 0.0], atol=1e-7)


def test_primal_factorization(rng):
    sys = example_system()
    for _ in range(10):
        w = rng.normal(size=5)
        c = primal_factorization(sys, w)
        val = c.increment([w[0:1], w[1:2]], [w[2:3], w[3:4], w[4:5]])
        assert abs(val[0] - sys(w)[0]) <= 1e-8
    assert not primal_factorization(sys, np.zeros(5)).increment(
        [[0], [0]], [[0], [0], [0]]).any()
    lin, A, B = _linear_system(rng)
    c = primal_factorization(lin, rng.normal(size=5))
    np.testing.assert_allclose([c.a[0][0, 0], c.a[1][0, 0]], A, atol=1e-14)
    offset = NLSystem(lambda xi: np.array([1.0 + xi[0]]), 1, 0)
    with pytest.raises(PreconditionError):
        primal_factorization(offset, np.ones(2))


def test_velocity_matches_primal(rng):
    sys = example_system()
    T = 60
    u = rng.normal(size=(T, 1))
    y = simulate_primal(sys, u)
    # scheduling w_k = col(y(k-1..k-3), u(k..k-3)); start where history exists
    k0 = 4
    coef = ftc_coefficient_fn(sys)
    du = np.diff(u, axis=0)       # du[m] = Δu(m+1)
    dy = np.diff(y, axis=0)

    def w_at(m):
        k = k0 + m
        return np.concatenate([y[k - 1::-1][:3].ravel(), u[k::-1][:4].ravel()])

    got = simulate_velocity(coef, w_at, du[k0 - 1:], dy[k0 - 3:k0 - 1],
                            du[k0 - 3:k0 - 1])
    np.testing.assert_allclose(got, dy[k0 - 1:], atol=1e-8)


def test_velocity_zero():
    coef = ftc_coefficient_fn(example_system())
    out = simulate_velocity(coef, lambda k: np.zeros(7), np.zeros((10, 1)),
                            np.zeros((2, 1)), np.zeros((2, 1)))
    assert not out.any()


def test_velocity_linear_recursion(rng):
    sys, A, B = _linear_system(rng)
    coef = ftc_coefficient_fn(sys)
    du = rng.normal(size=(30, 1))
    out = simulate_velocity(coef, lambda k: np.zeros(7), du, np.zeros((2, 1)),
                            np.zeros((2, 1))).ravel()
    dua = np.concatenate([[0, 0], du.ravel()])
    dya = np.zeros(32)
    for k in range(30):
        dya[k + 2] = A[0] * dya[k + 1] + A[1] * dya[k] + B[0] * dua[k + 2] \
            + B[1] * dua[k + 1] + B[2] * dua[k]
    np.testing.assert_allclose(out, dya[2:], atol=1e-12)
    np.testing.assert_allclose(diff_signal(simulate_primal(sys, np.cumsum(du, axis=0))).ravel(),
                               out[1:], atol=1e-12)
