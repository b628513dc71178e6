import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from velokern.exceptions import InvalidInputError, SizeOverflowError, UnsupportedLagError
from velokern.structure import (
    BasisSet, ThetaParams, build_psi_product, build_theta, explicit_multistep,
    psi_sizes,
)
from velokern.velocity import simulate_velocity
from velokern.verification import random_basis


class _D:
    def __init__(self, ell, n_y, n_u, L):
        self.ell, self.n_y, self.n_u, self.L = ell, n_y, n_u, L


def _theta(rng, n_a, n_b, n_psi, n_y=1, n_u=1):
    a = rng.uniform(-0.3, 0.3, size=(n_a, n_psi + 1, n_y, n_y))
    b = rng.normal(size=(n_b + 1, n_psi + 1, n_y, n_u))
    b[0] = 0.0
    return ThetaParams(a, b)


SIN = BasisSet((lambda w: np.sin(w[0]),))


def test_basis_evaluation():
    B = BasisSet((lambda w: w[0] ** 2, lambda w: np.sin(w[1])))
    W = np.array([[1.0, 0.0], [2.0, np.pi / 2]])
    np.testing.assert_allclose(B.evaluate_many(W), [[1, 0], [4, 1]], atol=1e-15)
    with pytest.raises(InvalidInputError):
        BasisSet((lambda w: np.nan,)).evaluate([0.0])


def test_single_step_psi():
    ell = 2
    psi = build_psi_product([[0.3]], SIN, _D(ell, 1, 1, 1)).matrix
    s = np.sin(0.3)
    d0 = 2 * ell
    expected = np.zeros((2 * d0 + 1, d0 + 1))
    expected[:d0, :d0] = np.eye(d0)
    expected[d0:2 * d0, :d0] = s * np.eye(d0)
    expected[-1, -1] = 1.0
    np.testing.assert_array_equal(psi, expected)
    assert psi.shape[0] == psi_sizes(1, 1, ell, 1, 1)[0] + 1


def test_three_step_chain_by_hand():
    w = np.array([[0.2], [-0.7], [1.1]])
    p = np.sin(w[:, 0])
    # SISO, ell=1: v = (Δy0, Δu0, Δu1, Δu2, Δu3)
    F1 = np.zeros((7, 5))
    F1[0, 0] = F1[1, 1] = 1
    F1[2, 0] = F1[3, 1] = p[0]
    F1[4:, 2:] = np.eye(3)
    F2 = np.zeros((12, 7))
    F2[:4, :4] = np.eye(4)
    F2[4:8, :4] = p[1] * np.eye(4)
    F2[8, 4] = 1
    F2[9, 4] = p[1]
    F2[10:, 5:] = np.eye(2)
    F3 = np.zeros((23, 12))
    F3[:10, :10] = np.eye(10)
    F3[10:20, :10] = p[2] * np.eye(10)
    F3[20, 10] = 1
    F3[21, 10] = p[2]
    F3[22, 11] = 1
    got = build_psi_product(w, SIN, _D(1, 1, 1, 3))
    np.testing.assert_allclose(got.matrix, F3 @ F2 @ F1, atol=1e-15)
    assert list(got.n_Psi) == [4, 10, 22]


def test_theta_one_step_is_theta0(rng):
    th = _theta(rng, 1, 1, 1)
    Theta = build_theta(th, 1, 1)
    a, b = th.a[0, :, 0, 0], th.b[1, :, 0, 0]
    np.testing.assert_array_equal(Theta, [[a[0], b[0], a[1], b[1], 0.0]])


def test_theta_single_lag_recursion(rng):
    th = _theta(rng, 1, 1, 1)
    _, steps = build_theta(th, 3, 1, return_steps=True)
    a10, a11 = th.a[0, :, 0, 0]
    b10, b11 = th.b[1, :, 0, 0]
    for t in (1, 2):
        prev = steps[t - 1]
        ref = np.concatenate([a10 * prev[0], a11 * prev[0], [b10, b11]])
        np.testing.assert_allclose(steps[t][0], ref, atol=1e-15)


def test_theta_lag_two_first_step(rng):
    th = _theta(rng, 2, 2, 1)
    Theta = build_theta(th, 1, 2)
    a = th.a[:, :, 0, 0]      # a[i-1, s]
    b = th.b[:, :, 0, 0]      # b[j, s]
    # oldest-first Δphi_0 = (Δy(-1), Δy(0), Δu(-1), Δu(0))
    ref = [a[1, 0], a[0, 0], b[2, 0], b[1, 0], a[1, 1], a[0, 1], b[2, 1], b[1, 1]]
    np.testing.assert_allclose(Theta[0, :8], ref, atol=1e-15)


def test_three_step_hand_expansion(rng):
    th = _theta(rng, 1, 1, 1)
    w = rng.normal(size=(3, 1))
    dy0, du0 = rng.normal(size=2)
    du = rng.normal(size=(3, 1))
    p = np.sin(w[:, 0])
    a = th.a[0, 0, 0, 0] + th.a[0, 1, 0, 0] * p
    b = th.b[1, 0, 0, 0] + th.b[1, 1, 0, 0] * p
    y1 = a[0] * dy0 + b[0] * du0
    y2 = a[1] * a[0] * dy0 + a[1] * b[0] * du0 + b[1] * du[0, 0]
    y3 = a[2] * a[1] * a[0] * dy0 + a[2] * a[1] * b[0] * du0 \
        + a[2] * b[1] * du[0, 0] + b[2] * du[1, 0]
    got = explicit_multistep(th, SIN, w, [dy0, du0], du, 1).ravel()
    np.testing.assert_allclose(got, [y1, y2, y3], atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([(1, 1), (2, 2), (1, 2), (2, 1)]), st.integers(0, 1),
       st.integers(1, 4), st.integers(1, 2), st.integers(1, 2), st.integers(1, 2),
       st.integers(0, 2 ** 32 - 1))
def test_explicit_equals_recursion(lags, extra, L, n_psi, n_y, n_u, seed):
    rng = np.random.default_rng(seed)
    n_a, n_b = lags
    ell = max(lags) + extra
    th = _theta(rng, n_a, n_b, n_psi, n_y, n_u)
    basis = random_basis(rng, n_psi, 3)
    W = rng.normal(size=(L, 3))
    dy_h = rng.normal(size=(ell, n_y))
    du_h = rng.normal(size=(ell, n_u))
    du = rng.normal(size=(L, n_u))
    got = explicit_multistep(th, basis, W, np.concatenate([dy_h.ravel(), du_h.ravel()]),
                             du, ell)
    ref = simulate_velocity(th.coef_fn(basis), lambda k: W[k], du,
                            dy_h[ell - n_a:], du_h[ell - n_b:])
    np.testing.assert_allclose(got, ref, atol=1e-9)


def test_unsupported_lags(rng):
    th = _theta(rng, 3, 1, 1)
    with pytest.raises(UnsupportedLagError):
        build_theta(th, 2, 2)
    b = th.b.copy()
    b[0] = 1.0
    with pytest.raises(UnsupportedLagError):
        build_theta(ThetaParams(th.a, b), 2, 3)


def test_size_guard():
    W = np.zeros((6, 1))
    with pytest.raises(SizeOverflowError) as exc:
        build_psi_product(W, SIN, _D(2, 1, 1, 6), cap=1000)
    assert exc.value.n_elements > 1000
