"""Base kernels, kernel composition and the structured block kernel.

The structured kernel between two training windows is block diagonal with
``L + 1`` scalar blocks acting on ``col(Δphi_0, Δu(1), ..., Δu(L))``:

    s_m = prod_{t=m}^{L-1} (1 + kappa(w_{i+t}, w_{j+t})),   s_L = 1,

where block 0 has size ``ell*(n_y+n_u)`` and blocks ``1..L`` have size
``n_u``. The effective scalar Gram matrix is

    G_ij = sum_m s_m^{(ij)} <X_i^m, X_j^m>,

a weighted sum of partial inner products of the regressor columns.
"""

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from ._validation import as_samples, check_positive
from .exceptions import InvalidInputError
from .structure import BasisSet

__all__ = [
    "KernelSpec", "RBF", "Linear", "ExplicitBasis", "OnePlus", "Product",
    "Sum", "zero_kernel", "eval_kernel", "parse_kernel", "kernel_name",
    "StructuredBlock", "structured_block", "kernel_slice", "block_layout",
    "offset_kernels", "hankel_offset_kernels", "windows_from_hankel",
    "partial_inner_products", "effective_gram", "gram_from_parts",
    "slice_vectors",
]


class KernelSpec:
    """Base class; subclasses implement :meth:`gram` on sample arrays."""

    def gram(self, A, B):
        raise NotImplementedError

    def __call__(self, wi, wj):
        return eval_kernel(self, wi, wj)

    def with_sigma(self, sigma):
        """Copy with every RBF bandwidth replaced by ``sigma``."""
        return self

    @property
    def has_sigma(self):
        return False


@dataclass(frozen=True)
class RBF(KernelSpec):
    """``exp(-||a - b||^2 / sigma^2)``."""

    sigma: float

    def __post_init__(self):
        check_positive(self.sigma, "sigma")

    def gram(self, A, B):
        # direct squared differences keep the result exactly symmetric
        return np.exp(-cdist(A, B, "sqeuclidean") / self.sigma ** 2)

    def with_sigma(self, sigma):
        return RBF(float(sigma))

    @property
    def has_sigma(self):
        return True


@dataclass(frozen=True)
class Linear(KernelSpec):
    """Plain inner product ``a^T b``."""

    def gram(self, A, B):
        return A @ B.T


@dataclass(frozen=True)
class ExplicitBasis(KernelSpec):
    """Finite feature-map kernel ``psi(a)^T psi(b)``."""

    basis: BasisSet

    def gram(self, A, B):
        if self.basis.n_psi == 0:
            return np.zeros((A.shape[0], B.shape[0]))
        return self.basis.evaluate_many(A) @ self.basis.evaluate_many(B).T


@dataclass(frozen=True)
class OnePlus(KernelSpec):
    inner: KernelSpec

    def gram(self, A, B):
        return 1.0 + self.inner.gram(A, B)

    def with_sigma(self, sigma):
        return OnePlus(self.inner.with_sigma(sigma))

    @property
    def has_sigma(self):
        return self.inner.has_sigma


@dataclass(frozen=True)
class Product(KernelSpec):
    left: KernelSpec
    right: KernelSpec

    def gram(self, A, B):
        return self.left.gram(A, B) * self.right.gram(A, B)

    def with_sigma(self, sigma):
        return Product(self.left.with_sigma(sigma), self.right.with_sigma(sigma))

    @property
    def has_sigma(self):
        return self.left.has_sigma or self.right.has_sigma


@dataclass(frozen=True)
class Sum(KernelSpec):
    left: KernelSpec
    right: KernelSpec

    def gram(self, A, B):
        return self.left.gram(A, B) + self.right.gram(A, B)

    def with_sigma(self, sigma):
        return Sum(self.left.with_sigma(sigma), self.right.with_sigma(sigma))

    @property
    def has_sigma(self):
        return self.left.has_sigma or self.right.has_sigma


def zero_kernel():
    """``kappa = 0``: every structured scalar becomes 1 (the linear case)."""
    return ExplicitBasis(BasisSet(()))


def eval_kernel(spec, wi, wj):
    """Scalar kernel value ``kappa(wi, wj)``."""
    wi = np.ravel(np.asarray(wi, dtype=np.float64))
    wj = np.ravel(np.asarray(wj, dtype=np.float64))
    if wi.shape != wj.shape:
        raise InvalidInputError(
            f"kernel arguments differ in size: {wi.size} vs {wj.size}")
    return float(spec.gram(wi[None, :], wj[None, :])[0, 0])


_FACTOR_RE = re.compile(r"^(rbf|linear|zero)$")


def parse_kernel(name, sigma=None):
    """Build a spec from its config name.

    Grammar: terms joined by ``_plus_``, factors joined by ``_times_``, each
    factor optionally prefixed by ``oneplus_``; atoms are ``rbf``,
    ``linear`` and ``zero``. For example ``"oneplus_rbf_times_linear"``.
    ``sigma`` is required when an ``rbf`` atom occurs.
    """
    if not isinstance(name, str) or not name:
        raise InvalidInputError(f"kernel name must be a non-empty string, got {name!r}")

    def atom(tok):
        if tok == "rbf":
            if sigma is None:
                raise InvalidInputError("kernel 'rbf' needs sigma")
            return RBF(float(sigma))
        if tok == "linear":
            return Linear()
        if tok == "zero":
            return zero_kernel()
        raise InvalidInputError(f"unknown kernel atom {tok!r} in {name!r}")

    def factor(tok):
        if tok.startswith("oneplus_"):
            return OnePlus(factor(tok[len("oneplus_"):]))
        return atom(tok)

    def product(tok):
        parts = tok.split("_times_")
        spec = factor(parts[0])
        for p in parts[1:]:
            spec = Product(spec, factor(p))
        return spec

    terms = name.strip().lower().split("_plus_")
    spec = product(terms[0])
    for t in terms[1:]:
        spec = Sum(spec, product(t))
    return spec


def kernel_name(spec):
    """Inverse of :func:`parse_kernel` for parseable specs."""
    if isinstance(spec, RBF):
        return "rbf"
    if isinstance(spec, Linear):
        return "linear"
    if isinstance(spec, ExplicitBasis) and spec.basis.n_psi == 0:
        return "zero"
    if isinstance(spec, OnePlus):
        return "oneplus_" + kernel_name(spec.inner)
    if isinstance(spec, Product):
        return kernel_name(spec.left) + "_times_" + kernel_name(spec.right)
    if isinstance(spec, Sum):
        return kernel_name(spec.left) + "_plus_" + kernel_name(spec.right)
    raise InvalidInputError(f"spec {spec!r} has no config name")


def block_layout(dims):
    """Block sizes ``[ell*(n_y+n_u), n_u, ..., n_u]`` (``L`` copies of ``n_u``)."""
    return [dims.ell * (dims.n_y + dims.n_u)] + [dims.n_u] * dims.L


@dataclass(frozen=True)
class StructuredBlock:
    """Scalars ``s_0..s_L`` of one structured kernel block plus its layout."""

    scalars: np.ndarray
    layout: Sequence[int]

    def densify(self):
        return np.diag(np.repeat(self.scalars, self.layout))

    def apply(self, x):
        """Block-scaled vector ``K x`` without densifying."""
        return np.repeat(self.scalars, self.layout) * np.asarray(x)


def _scalars_from_offsets(k_offsets):
    # k_offsets[t] = kappa(w_{i+t}, w_{j+t}); returns s_0..s_L
    L = k_offsets.shape[0]
    s = np.ones((L + 1,) + k_offsets.shape[1:])
    for m in range(L - 1, -1, -1):
        s[m] = s[m + 1] * (1.0 + k_offsets[m])
    return s


def structured_block(spec, Wi, Wj, dims):
    """Structured kernel block between two windows of ``L`` scheduling vectors."""
    Wi = as_samples(Wi, name="Wi")
    Wj = as_samples(Wj, dim=Wi.shape[1], name="Wj")
    if Wi.shape[0] != Wj.shape[0]:
        raise InvalidInputError(
            f"window lengths differ: {Wi.shape[0]} vs {Wj.shape[0]}")
    if Wi.shape[0] != dims.L:
        raise InvalidInputError(f"windows have {Wi.shape[0]} vectors, L={dims.L}")
    k = np.array([eval_kernel(spec, a, b) for a, b in zip(Wi, Wj)])
    return StructuredBlock(_scalars_from_offsets(k), block_layout(dims))


def kernel_slice(spec, Wi, w_query, dims):
    """Slice of the structured kernel centred at training window ``Wi``."""
    return structured_block(spec, Wi, w_query, dims)


def windows_from_hankel(W_L, L):
    """``(N, L, n_w)`` window array from a Hankel matrix or raw entries."""
    entries = getattr(W_L, "entries", W_L)
    entries = np.asarray(entries, dtype=np.float64)
    if entries.shape[0] % L:
        raise InvalidInputError("Hankel height not divisible by L")
    n_w = entries.shape[0] // L
    return entries.reshape(L, n_w, -1).transpose(2, 0, 1)


def offset_kernels(spec, Wa, Wb):
    """``K[t, a, b] = kappa(Wa[a, t], Wb[b, t])`` for window arrays."""
    Wa = np.asarray(Wa, dtype=np.float64)
    Wb = np.asarray(Wb, dtype=np.float64)
    if Wa.ndim != 3 or Wb.ndim != 3 or Wa.shape[1:] != Wb.shape[1:]:
        raise InvalidInputError(
            f"window arrays must be (N, L, n_w) alike, got {Wa.shape}, {Wb.shape}")
    return np.stack([spec.gram(Wa[:, t], Wb[:, t]) for t in range(Wa.shape[1])])


def hankel_offset_kernels(spec, w_sequence, n_columns, L):
    """Offset kernels for Hankel windows from a single table on ``w_sequence``.

    The ``(n_columns + L - 1)``-square table is evaluated once and each
    offset ``t`` reads the shifted square ``table[t:t+N, t:t+N]``.
    """
    w = as_samples(w_sequence, name="w_sequence")
    if w.shape[0] < n_columns + L - 1:
        raise InvalidInputError("scheduling sequence shorter than the windows")
    table = spec.gram(w[:n_columns + L - 1], w[:n_columns + L - 1])
    return np.stack([table[t:t + n_columns, t:t + n_columns] for t in range(L)])


def partial_inner_products(Xa, Xb, dims):
    """``P[m] = (X_a^m)^T X_b^m`` per block ``m = 0..L``."""
    Xa = np.asarray(Xa, dtype=np.float64)
    Xb = np.asarray(Xb, dtype=np.float64)
    layout = block_layout(dims)
    if Xa.shape[0] != sum(layout) or Xb.shape[0] != sum(layout):
        raise InvalidInputError(
            f"regressor height must be {sum(layout)}, got {Xa.shape[0]}, {Xb.shape[0]}")
    edges = np.concatenate([[0], np.cumsum(layout)])
    return np.stack([Xa[edges[m]:edges[m + 1]].T @ Xb[edges[m]:edges[m + 1]]
                     for m in range(len(layout))])


def gram_from_parts(parts, k_offsets):
    """``sum_m s_m * P[m]`` with ``s`` accumulated backward over offsets."""
    L = k_offsets.shape[0]
    if parts.shape[0] != L + 1:
        raise InvalidInputError("need L+1 partial products for L offsets")
    S = np.ones(parts.shape[1:])
    G = parts[L].copy()
    for m in range(L - 1, -1, -1):
        S *= 1.0 + k_offsets[m]
        G += S * parts[m]
    return G


def effective_gram(data, spec, dims=None, parts=None):
    """Effective scalar Gram matrix ``G`` of the training columns.

    ``parts`` may carry precomputed :func:`partial_inner_products`, which
    do not depend on the kernel and are reused across a hyper-parameter
    grid.
    """
    dims = data.dims if dims is None else dims
    X = data.X
    if parts is None:
        parts = partial_inner_products(X, X, dims)
    k = hankel_offset_kernels(spec, data.w_sequence, dims.N_c, dims.L)
    G = gram_from_parts(parts, k)
    return 0.5 * (G + G.T)


def slice_vectors(spec, X_train, W_train, x_query, W_query, dims):
    """Slice vectors ``c[:, q]``, ``c_i = X_i^T K_i(w_q) x_q``, for many queries.

    Parameters
    ----------
    X_train : array, shape (n_x, N)
    W_train : array, shape (N, L, n_w)
    x_query : array, shape (n_x, Q)
    W_query : array, shape (Q, L, n_w)

    Returns
    -------
    array, shape (N, Q)
    """
    parts = partial_inner_products(X_train, x_query, dims)
    k = offset_kernels(spec, W_train, W_query)
    return gram_from_parts(parts, k)
