"""Explicit basis-function form of the multi-step velocity predictor.

With coefficient functions expanded in a basis,

    a_i(w) = sum_s a_{i,s} psi_s(w),   b_j(w) = sum_s b_{j,s} psi_s(w),
    psi_0 = 1,

the horizon-L prediction factors as

    Δy_[1,L] = Theta · Psi(w_[1,L]) · col(Δphi_0, Δu_[1,L]).

``Psi`` is a product of one Kronecker factor per step and ``Theta`` is the
lower block-triangular stack of per-step parameter rows. Both are dense
here; this module is the brute-force oracle for the kernel path, so sizes
are guarded by an element cap.
"""

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._validation import as_samples, as_vector
from .exceptions import InvalidInputError, SizeOverflowError, UnsupportedLagError
from .velocity import VelocityCoefficients

__all__ = [
    "BasisSet", "ThetaParams", "PsiProduct", "psi_sizes", "build_psi_product",
    "build_theta", "explicit_multistep", "DEFAULT_ELEMENT_CAP",
]

DEFAULT_ELEMENT_CAP = 10_000_000


@dataclass(frozen=True)
class BasisSet:
    """Scalar basis functions ``psi_1..psi_n``; ``psi_0 = 1`` is implicit."""

    psi: Sequence[Callable[[np.ndarray], float]]

    @property
    def n_psi(self):
        return len(self.psi)

    def evaluate(self, w):
        w = np.asarray(w, dtype=np.float64)
        vals = np.array([float(p(w)) for p in self.psi], dtype=np.float64)
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError(f"basis evaluation not finite at w={w}")
        return vals

    def evaluate_many(self, W):
        W = as_samples(W, name="W")
        if self.n_psi == 0:
            return np.zeros((W.shape[0], 0))
        return np.vstack([self.evaluate(w) for w in W])


@dataclass(frozen=True)
class ThetaParams:
    """Basis-expansion parameters of the velocity coefficients.

    ``a`` has shape ``(n_a, n_psi+1, n_y, n_y)`` with ``a[i-1, s] = a_{i,s}``;
    ``b`` has shape ``(n_b+1, n_psi+1, n_y, n_u)`` with ``b[j, s] = b_{j,s}``.
    """

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if a.ndim != 4 or b.ndim != 4:
            raise InvalidInputError("a and b must be 4-D arrays")
        if a.shape[1] != b.shape[1] or a.shape[2] != a.shape[3] \
                or a.shape[2] != b.shape[2] or a.shape[0] < 1:
            raise InvalidInputError(
                f"inconsistent parameter shapes {a.shape}, {b.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n_a(self):
        return self.a.shape[0]

    @property
    def n_b(self):
        return self.b.shape[0] - 1

    @property
    def n_psi(self):
        return self.a.shape[1] - 1

    @property
    def n_y(self):
        return self.a.shape[2]

    @property
    def n_u(self):
        return self.b.shape[3]

    def coefficients(self, psi_values):
        """Velocity coefficients for basis values ``psi_1..psi_n``."""
        weights = np.concatenate([[1.0], np.ravel(psi_values)])
        a = list(np.tensordot(weights, self.a, axes=([0], [1])))
        b = list(np.tensordot(weights, self.b, axes=([0], [1])))
        return VelocityCoefficients(a, b)

    def coef_fn(self, basis):
        return lambda w: self.coefficients(basis.evaluate(w))


@dataclass(frozen=True)
class PsiProduct:
    """Per-step factors (in application order) and their dense product."""

    factors: Sequence[np.ndarray]
    matrix: np.ndarray
    n_Psi: Sequence[int]

    @property
    def L(self):
        return len(self.factors)


def psi_sizes(n_psi, L, ell, n_y, n_u):
    """Row counts ``n_Psi_1..n_Psi_L`` of the accumulated Kronecker state."""
    sizes = [(n_psi + 1) * ell * (n_y + n_u)]
    for _ in range(1, L):
        sizes.append((n_psi + 1) * (n_u + sizes[-1]))
    return sizes


def _kron_col(psi_values, n):
    col = np.concatenate([[1.0], psi_values])[:, None]
    return np.kron(col, np.eye(n))


def build_psi_product(w_window, basis, dims, cap=DEFAULT_ELEMENT_CAP):
    """Dense ``Psi(w_[1,L])`` for a window of ``L`` scheduling vectors.

    Factor 1 lifts the ``ell*(n_y+n_u)`` initial regressor by
    ``[1; psi(w_1)] ⊗ I`` and passes all horizon inputs through. Factor
    ``t >= 2`` lifts the accumulated state and the input ``Δu(t-1)`` by
    ``[1; psi(w_t)]`` and passes the remaining inputs through, so the
    product has ``n_Psi_L + n_u`` rows and ``ell*(n_y+n_u) + L*n_u``
    columns.
    """
    W = as_samples(w_window, name="w_window")
    L = W.shape[0]
    ell, n_y, n_u = dims.ell, dims.n_y, dims.n_u
    if hasattr(dims, "L") and dims.L != L:
        raise InvalidInputError(f"window has {L} vectors, dims.L={dims.L}")
    sizes = psi_sizes(basis.n_psi, L, ell, n_y, n_u)
    d0 = ell * (n_y + n_u)
    n_cols = d0 + L * n_u
    largest = max(
        [(sizes[0] + L * n_u) * (d0 + L * n_u)]
        + [(sizes[t] + (L - t) * n_u) * (sizes[t - 1] + (L - t + 1) * n_u)
           for t in range(1, L)]
        + [(sizes[-1] + n_u) * n_cols])
    if largest > cap:
        raise SizeOverflowError(largest, cap)

    psis = basis.evaluate_many(W)
    factors = []
    F = _block_diag(_kron_col(psis[0], d0), np.eye(L * n_u))
    factors.append(F)
    product = F
    for t in range(1, L):
        F = _block_diag(_kron_col(psis[t], sizes[t - 1]),
                        _kron_col(psis[t], n_u),
                        np.eye((L - t) * n_u))
        factors.append(F)
        product = F @ product
    return PsiProduct(factors, product, sizes)


def _block_diag(*blocks):
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def build_theta(theta0, L, ell, return_steps=False):
    """Stacked parameter matrix ``Theta`` for horizon ``L``.

    Row block ``t`` holds ``theta_t`` padded with zeros, where
    ``Δy(t) = theta_t · z_t`` and ``z_t`` is the accumulated state after
    ``t`` Kronecker factors. The recursion reads, per basis index ``s``,

        r_s = sum_i a_{i,s} [Δy(t-i) on v_t] + sum_{j>=1} b_{j,s} [Δu(t-j) on v_t]

    with ``v_1 = Δphi_0`` and ``v_t = col(z_{t-1}, Δu(t-1))``; ``theta_t``
    lays the ``r_s`` out to match ``z_t``. For one lag this reduces to
    ``theta_t = [a_{1,0} theta_{t-1}, a_{1,1} theta_{t-1}, ..., b_{1,0}, b_{1,1}, ...]``;
    deeper lags add sparse selections of earlier samples.

    Raises
    ------
    UnsupportedLagError
        If the lags exceed ``ell`` or the direct feed-through ``b_0`` is
        nonzero (the lifted state only carries inputs up to ``t-1``).
    """
    if L < 1:
        raise InvalidInputError("L must be >= 1")
    if theta0.n_a > ell or theta0.n_b > ell:
        raise UnsupportedLagError(
            f"lags (n_a={theta0.n_a}, n_b={theta0.n_b}) exceed ell={ell}")
    if np.any(theta0.b[0] != 0):
        raise UnsupportedLagError(
            "direct feed-through b_0 is not representable in the lifted state")
    n_y, n_u, n_psi = theta0.n_y, theta0.n_u, theta0.n_psi
    d0 = ell * (n_y + n_u)
    sizes = psi_sizes(n_psi, L, ell, n_y, n_u)

    # representations of past samples as row blocks acting on v_t
    rep_y, rep_u = {}, {}
    for p in range(ell):
        tau = p + 1 - ell
        ry = np.zeros((n_y, d0))
        ry[:, p * n_y:(p + 1) * n_y] = np.eye(n_y)
        ru = np.zeros((n_u, d0))
        ru[:, ell * n_y + p * n_u:ell * n_y + (p + 1) * n_u] = np.eye(n_u)
        rep_y[tau], rep_u[tau] = ry, ru

    thetas = []
    for t in range(1, L + 1):
        r = []
        for s in range(n_psi + 1):
            acc = sum(theta0.a[i - 1, s] @ rep_y[t - i]
                      for i in range(1, theta0.n_a + 1))
            acc = acc + sum((theta0.b[j, s] @ rep_u[t - j]
                             for j in range(1, theta0.n_b + 1)),
                            np.zeros_like(acc))
            r.append(acc)
        if t == 1:
            theta_t = np.hstack(r)

            def lift(m):
                return np.hstack([m, np.zeros((m.shape[0], n_psi * d0))])
        else:
            zdim = sizes[t - 2]
            theta_t = np.hstack([m[:, :zdim] for m in r]
                                + [m[:, zdim:] for m in r])

            def lift(m, zdim=zdim):
                return np.hstack([m[:, :zdim],
                                  np.zeros((m.shape[0], n_psi * zdim)),
                                  m[:, zdim:],
                                  np.zeros((m.shape[0], n_psi * n_u))])
        thetas.append(theta_t)
        # move every representation from v_t to v_{t+1} = col(z_t, Δu(t))
        pad = lambda m: np.hstack([m, np.zeros((m.shape[0], n_u))])  # noqa: E731
        rep_y = {k: pad(lift(m)) for k, m in rep_y.items()}
        rep_u = {k: pad(lift(m)) for k, m in rep_u.items()}
        rep_y[t] = pad(theta_t)
        sel = np.zeros((n_u, sizes[t - 1] + n_u))
        sel[:, sizes[t - 1]:] = np.eye(n_u)
        rep_u[t] = sel

    width = sizes[-1] + n_u
    Theta = np.zeros((L * n_y, width))
    for t, th in enumerate(thetas):
        Theta[t * n_y:(t + 1) * n_y, :th.shape[1]] = th
    if return_steps:
        return Theta, thetas
    return Theta


def explicit_multistep(theta0, basis, w_window, dphi0, du, ell,
                       cap=DEFAULT_ELEMENT_CAP):
    """Explicit prediction ``Theta · Psi(w_[1,L]) · col(Δphi_0, Δu_[1,L])``.

    Parameters
    ----------
    dphi0 : array
        ``col(Δy(1-ell..0), Δu(1-ell..0))``, oldest sample first in each part.
    du : array, shape (L, n_u)
        ``Δu(1..L)``.

    Returns
    -------
    array, shape (L, n_y)
    """
    W = as_samples(w_window, name="w_window")
    L = W.shape[0]
    n_y, n_u = theta0.n_y, theta0.n_u
    du = as_samples(du, dim=n_u, name="du")
    if du.shape[0] != L:
        raise InvalidInputError(f"du has {du.shape[0]} samples, window has {L}")
    dphi0 = as_vector(dphi0, ell * (n_y + n_u), "dphi0")
    dims = _SmallDims(ell=ell, n_y=n_y, n_u=n_u, L=L)
    psi = build_psi_product(W, basis, dims, cap=cap)
    Theta = build_theta(theta0, L, ell)
    x = np.concatenate([dphi0, du.ravel()])
    return (Theta @ (psi.matrix @ x)).reshape(L, n_y)


@dataclass(frozen=True)
class _SmallDims:
    ell: int
    n_y: int
    n_u: int
    L: int
