"""Primal nonlinear IO systems and their velocity-form coefficients.

A system ``y(k) = f(xi(k))`` is described on the stacked regressor

    xi(k) = col(y(k-1), ..., y(k-n_a), u(k), ..., u(k-n_b)).

Its increments satisfy the quasi-linear relation

    Δy(k) = sum_i a_i(w_k) Δy(k-i) + sum_j b_j(w_k) Δu(k-j)

where each coefficient is the Jacobian block of ``f`` averaged along the
straight path from ``xi(k-1)`` to ``xi(k)``. The averages are computed with
composite Simpson quadrature, or in closed form for univariate polynomials.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ._validation import as_samples, as_vector
from .exceptions import (InvalidInputError, PreconditionError,
                         SimulationDivergedError)

__all__ = [
    "NLSystem", "ShiftedSystem", "VelocityCoefficients", "simpson_weights",
    "simulate_primal", "example_system", "ftc_coefficients",
    "poly_coefficient", "shifted_ftc_coefficients", "primal_factorization",
    "simulate_velocity", "ftc_coefficient_fn", "finite_difference_jacobian",
    "DEFAULT_NODES",
]

DEFAULT_NODES = 129


def finite_difference_jacobian(f, x):
    """Central-difference Jacobian with step ``cbrt(eps) * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=np.float64)
    f0 = np.atleast_1d(f(x))
    J = np.empty((f0.size, x.size))
    base = np.cbrt(np.finfo(np.float64).eps)
    for i in range(x.size):
        h = base * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        J[:, i] = (np.atleast_1d(f(xp)) - np.atleast_1d(f(xm))) / (xp[i] - xm[i])
    return J


@dataclass(frozen=True)
class NLSystem:
    """Primal system ``y(k) = f(xi(k))``.

    Parameters
    ----------
    f : callable
        Maps ``xi`` (length ``n_a*n_y + (n_b+1)*n_u``) to ``y`` (length n_y).
    n_a, n_b : int
        Output and input lags.
    n_u, n_y : int
        Signal dimensions.
    jacobian : callable, optional
        Returns ``∂f/∂xi`` with shape ``(n_y, n_xi)``. Finite differences are
        used when absent.
    """

    f: Callable[[np.ndarray], np.ndarray]
    n_a: int
    n_b: int
    n_u: int = 1
    n_y: int = 1
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.n_a < 1 or self.n_b < 0 or self.n_u < 1 or self.n_y < 1:
            raise InvalidInputError("invalid system dimensions")

    @property
    def n_xi(self):
        return self.n_a * self.n_y + (self.n_b + 1) * self.n_u

    def __call__(self, xi):
        return np.atleast_1d(np.asarray(self.f(np.asarray(xi, dtype=np.float64)),
                                        dtype=np.float64))

    def jac(self, xi):
        xi = np.asarray(xi, dtype=np.float64)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(xi), dtype=np.float64).reshape(
                self.n_y, self.n_xi)
        return finite_difference_jacobian(self.__call__, xi)

    def regressor(self, y_lags, u_lags):
        """``xi`` from ``y(k-1..k-n_a)`` and ``u(k..k-n_b)`` (newest first)."""
        return np.concatenate([np.ravel(y_lags), np.ravel(u_lags)])

    def split(self, M):
        """Split an ``(n_y, n_xi)`` matrix into velocity coefficients."""
        ny, nu = self.n_y, self.n_u
        a = [M[:, i * ny:(i + 1) * ny] for i in range(self.n_a)]
        off = self.n_a * ny
        b = [M[:, off + j * nu:off + (j + 1) * nu] for j in range(self.n_b + 1)]
        return VelocityCoefficients(a, b)


@dataclass(frozen=True)
class VelocityCoefficients:
    """``a[i-1]`` multiplies ``Δy(k-i)``, ``b[j]`` multiplies ``Δu(k-j)``."""

    a: Sequence[np.ndarray]
    b: Sequence[np.ndarray]

    def increment(self, dy_lags, du_lags):
        """Assemble ``sum a_i Δy(k-i) + sum b_j Δu(k-j)``.

        ``dy_lags[i-1]`` is ``Δy(k-i)``; ``du_lags[j]`` is ``Δu(k-j)``.
        """
        out = np.zeros(self.a[0].shape[0])
        for ai, dyi in zip(self.a, dy_lags):
            out += ai @ np.ravel(dyi)
        for bj, duj in zip(self.b, du_lags):
            out += bj @ np.ravel(duj)
        return out


def simpson_weights(nodes):
    """Composite Simpson weights on ``[0, 1]`` for an odd node count >= 3."""
    nodes = int(nodes)
    if nodes < 3 or nodes % 2 == 0:
        raise InvalidInputError(
            f"composite Simpson needs an odd node count >= 3, got {nodes}")
    h = 1.0 / (nodes - 1)
    w = np.full(nodes, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return np.linspace(0.0, 1.0, nodes), w * h / 3.0


def _path_average(jac, start, end, nodes):
    """``∫_0^1 jac(start + λ (end - start)) dλ`` by composite Simpson."""
    lam, wts = simpson_weights(nodes)
    step = end - start
    total = None
    for l, wt in zip(lam, wts):
        J = wt * jac(start + l * step)
        total = J if total is None else total + J
    return total


def simulate_primal(sys, u, y_hist=None, u_hist=None):
    """Run the primal recursion for every sample of ``u``.

    Parameters
    ----------
    sys : NLSystem
    u : array, shape (T, n_u)
        Inputs ``u(0..T-1)``.
    y_hist : array, shape (n_a, n_y), optional
        ``y(-n_a..-1)``, oldest first. Zero by default.
    u_hist : array, shape (n_b, n_u), optional
        ``u(-n_b..-1)``, oldest first. Zero by default.

    Returns
    -------
    array, shape (T, n_y)
    """
    u = as_samples(u, dim=sys.n_u, name="u")
    T = u.shape[0]
    y_hist = (np.zeros((sys.n_a, sys.n_y)) if y_hist is None
              else as_samples(y_hist, dim=sys.n_y, name="y_hist"))
    u_hist = (np.zeros((sys.n_b, sys.n_u)) if u_hist is None
              else as_samples(u_hist, dim=sys.n_u, name="u_hist"))
    if y_hist.shape[0] != sys.n_a or u_hist.shape[0] != sys.n_b:
        raise InvalidInputError(
            f"history must hold {sys.n_a} outputs and {sys.n_b} inputs")
    ya = np.vstack([y_hist, np.zeros((T, sys.n_y))])
    ua = np.vstack([u_hist, u])
    na, nb = sys.n_a, sys.n_b
    for k in range(T):
        yk = k + na
        uk = k + nb
        xi = np.concatenate([ya[yk - na:yk][::-1].ravel(),
                             ua[uk - nb:uk + 1][::-1].ravel()])
        val = sys(xi)
        if not np.all(np.isfinite(val)):
            raise SimulationDivergedError(k)
        ya[yk] = val
    return ya[na:]


def example_system():
    """``y(k) = -u(k-2) exp(-y(k-1)^2) + 0.5 y(k-2) u(k-1)^2`` (SISO, lags 2/2)."""

    def f(xi):
        y1, y2, _u0, u1, u2 = xi
        return np.array([-u2 * np.exp(-y1 * y1) + 0.5 * y2 * u1 * u1])

    def jac(xi):
        y1, y2, _u0, u1, u2 = xi
        e = np.exp(-y1 * y1)
        return np.array([[2.0 * y1 * u2 * e, 0.5 * u1 * u1, 0.0, y2 * u1, -e]])

    return NLSystem(f, n_a=2, n_b=2, n_u=1, n_y=1, jacobian=jac)


def ftc_coefficients(sys, xi_prev, xi_cur, nodes=DEFAULT_NODES):
    """Velocity coefficients between two consecutive regressors.

    Each coefficient is the corresponding Jacobian block averaged over the
    segment ``xi_prev + λ (xi_cur - xi_prev)``, ``λ ∈ [0, 1]``, so that
    ``coef.increment`` reproduces ``f(xi_cur) - f(xi_prev)``.
    """
    xi_prev = as_vector(xi_prev, sys.n_xi, "xi_prev")
    xi_cur = as_vector(xi_cur, sys.n_xi, "xi_cur")
    return sys.split(_path_average(sys.jac, xi_prev, xi_cur, nodes))


def _divided_power(i, u, v):
    # (u^i - v^i) / (u - v) as the cancellation-free sum of u^m v^(i-1-m)
    return sum(u ** m * v ** (i - 1 - m) for m in range(i))


def poly_coefficient(coeffs, u, u_prev):
    """Closed-form velocity coefficient of ``f(u) = sum_i c_i u^i``.

    Returns ``sum_i c_i (u^i - u_prev^i) / (u - u_prev)``; when the two
    points coincide to ``1e-9 * max(1, |u|, |u_prev|)`` the derivative
    ``sum_i i c_i u^(i-1)`` is returned instead.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    if coeffs.size < 1:
        raise InvalidInputError("need at least one polynomial coefficient")
    u = float(u)
    u_prev = float(u_prev)
    tol_eq = 1e-9 * max(1.0, abs(u), abs(u_prev))
    if abs(u - u_prev) <= tol_eq:
        x = 0.5 * (u + u_prev)
        return float(sum((i + 1) * c * x ** i for i, c in enumerate(coeffs)))
    return float(sum(c * _divided_power(i + 1, u, u_prev)
                     for i, c in enumerate(coeffs)))


@dataclass(frozen=True)
class ShiftedSystem:
    """``y(k) = sum_{i=1}^{n} f_i(y(k-i), u(k-i))`` without cross-lag terms.

    ``jacobians[i]``, if given, maps ``(y, u)`` to the pair of partial
    derivatives ``(∂f_i/∂y, ∂f_i/∂u)``.
    """

    fs: Sequence[Callable]
    n_u: int = 1
    n_y: int = 1
    jacobians: Optional[Sequence[Callable]] = None

    @property
    def n(self):
        return len(self.fs)

    def term_jacobian(self, i, y, u):
        if self.jacobians is not None:
            dfy, dfu = self.jacobians[i](y, u)
            return (np.asarray(dfy, dtype=np.float64).reshape(self.n_y, self.n_y),
                    np.asarray(dfu, dtype=np.float64).reshape(self.n_y, self.n_u))
        ny = self.n_y
        J = finite_difference_jacobian(
            lambda z: np.atleast_1d(self.fs[i](z[:ny], z[ny:])),
            np.concatenate([y, u]))
        return J[:, :ny], J[:, ny:]

    def as_nlsystem(self):
        """The same dynamics in general form, lags ``(n, n)``."""
        n, ny, nu = self.n, self.n_y, self.n_u

        def f(xi):
            ys = xi[:n * ny].reshape(n, ny)
            us = xi[n * ny:].reshape(n + 1, nu)
            return sum(np.atleast_1d(self.fs[i](ys[i], us[i + 1]))
                       for i in range(n))

        return NLSystem(f, n_a=n, n_b=n, n_u=nu, n_y=ny)

    def simulate(self, u, y_hist=None, u_hist=None):
        sys = self.as_nlsystem()
        return simulate_primal(sys, u, y_hist, u_hist)


def shifted_ftc_coefficients(system, windows, nodes=DEFAULT_NODES):
    """Per-lag coefficients of the shifted velocity form.

    Parameters
    ----------
    system : ShiftedSystem
    windows : sequence of arrays
        ``windows[i-1] = col(y(k-i), y(k-i-1), u(k-i), u(k-i-1))``.

    Returns
    -------
    list of (a_bar_i, b_bar_i)
        So that ``Δy(k) = sum_i a_bar_i Δy(k-i) + b_bar_i Δu(k-i)``.
    """
    if len(windows) != system.n:
        raise InvalidInputError(f"need {system.n} windows, got {len(windows)}")
    ny, nu = system.n_y, system.n_u
    out = []
    for i, wv in enumerate(windows):
        wv = as_vector(wv, 2 * (ny + nu), "window")
        y_cur, y_prev = wv[:ny], wv[ny:2 * ny]
        u_cur, u_prev = wv[2 * ny:2 * ny + nu], wv[2 * ny + nu:]
        start = np.concatenate([y_prev, u_prev])
        end = np.concatenate([y_cur, u_cur])

        def jac(z, i=i):
            dfy, dfu = system.term_jacobian(i, z[:ny], z[ny:])
            return np.hstack([dfy, dfu])

        M = _path_average(jac, start, end, nodes)
        out.append((M[:, :ny], M[:, ny:]))
    return out


def primal_factorization(sys, w, nodes=DEFAULT_NODES):
    """Quasi-linear factorization of the primal form, for ``f(0) = 0``.

    Averages the Jacobian along ``λ w``, ``λ ∈ [0, 1]``, giving coefficients
    with ``sum_i a_i y(k-i) + sum_j b_j u(k-j) = f(w)``.
    """
    w = as_vector(w, sys.n_xi, "w")
    f0 = sys(np.zeros(sys.n_xi))
    if np.max(np.abs(f0)) > 1e-12:
        raise PreconditionError(f"primal factorization needs f(0) = 0, got {f0}")
    return sys.split(_path_average(sys.jac, np.zeros_like(w), w, nodes))


def ftc_coefficient_fn(sys, nodes=DEFAULT_NODES):
    """Coefficient function of the scheduling vector ``w_k``.

    ``w_k = col(y(k-1..k-n_a-1), u(k..k-n_b-1))`` holds both ``xi(k)`` and
    ``xi(k-1)``.
    """
    ny, nu, na, nb = sys.n_y, sys.n_u, sys.n_a, sys.n_b

    def coef(w):
        w = as_vector(w, (na + 1) * ny + (nb + 2) * nu, "w")
        ys = w[:(na + 1) * ny].reshape(na + 1, ny)
        us = w[(na + 1) * ny:].reshape(nb + 2, nu)
        xi_cur = np.concatenate([ys[:na].ravel(), us[:nb + 1].ravel()])
        xi_prev = np.concatenate([ys[1:].ravel(), us[1:].ravel()])
        return ftc_coefficients(sys, xi_prev, xi_cur, nodes)

    return coef


def simulate_velocity(coef_fn, w_at, du, dy_hist, du_hist):
    """Run the velocity recursion with coefficients at the supplied ``w_k``.

    Parameters
    ----------
    coef_fn : callable
        Maps a scheduling vector to :class:`VelocityCoefficients`.
    w_at : callable
        ``w_at(k)`` gives the scheduling vector for step ``k`` (0-based in
        ``du``).
    du : array, shape (T, n_u)
        ``Δu(0..T-1)``.
    dy_hist : array, shape (n_a, n_y)
        ``Δy(-n_a..-1)``, oldest first.
    du_hist : array, shape (n_b, n_u)
        ``Δu(-n_b..-1)``, oldest first.

    Returns
    -------
    array, shape (T, n_y)
    """
    du = as_samples(du, name="du")
    dy_hist = as_samples(dy_hist, name="dy_hist")
    du_hist = as_samples(du_hist, dim=du.shape[1], name="du_hist")
    na, nb = dy_hist.shape[0], du_hist.shape[0]
    T = du.shape[0]
    dya = np.vstack([dy_hist, np.zeros((T, dy_hist.shape[1]))])
    dua = np.vstack([du_hist, du])
    for k in range(T):
        coef = coef_fn(w_at(k))
        if len(coef.a) > na or len(coef.b) > nb + 1:
            raise InvalidInputError("history shorter than the coefficient lags")
        dy_lags = [dya[k + na - i] for i in range(1, len(coef.a) + 1)]
        du_lags = [dua[k + nb - j] for j in range(len(coef.b))]
        val = coef.increment(dy_lags, du_lags)
        if not np.all(np.isfinite(val)):
            raise SimulationDivergedError(k)
        dya[k + na] = val
    return dya[na:]
