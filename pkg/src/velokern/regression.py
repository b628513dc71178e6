"""Kernel ridge regression for the structured multi-step predictor.

The ridge problem in feature space has the dual solution

    A = Y_L ((1/gamma) I + G)^{-1},      Δŷ = A c(query),

with ``G`` the effective structured Gram matrix and ``c`` the slice vector
of the query. The implicit form solves ``((1/gamma) I + G) g = c`` and
predicts ``Y_L g``; both share one Cholesky factor.

The unstructured baseline uses the same solver with a plain kernel on
stacked windows.
"""

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, lapack

from ._validation import as_samples, as_vector, check_positive
from .exceptions import DataError, InvalidInputError, NumericalError
from .kernels import (
    effective_gram, kernel_name, parse_kernel, partial_inner_products,
    gram_from_parts, offset_kernels, slice_vectors, windows_from_hankel,
    RBF, KernelSpec,
)
from .signals import (
    Dims, PREDICTED_PREVIOUS, build_data_matrices, primal_regressors,
    reconstruct_primal, scheduling_vector,
)

__all__ = [
    "spd_factor", "FittedPredictor", "ImplicitRepresentation", "fit",
    "fit_columns", "predict", "predict_columns", "implicit_representation",
    "UnstructuredPredictor", "unstructured_fit", "unstructured_features",
    "IterativeResult", "iterative_w_predict", "column_rmse",
    "save_model", "load_model", "model_metadata", "VELOCITY", "PRIMAL",
]

log = logging.getLogger(__name__)

JITTER_SCALE = 1e-10


def spd_factor(G, gamma):
    """Lower Cholesky factor of ``(1/gamma) I + G``.

    One retry adds ``1e-10 * trace / N`` to the diagonal.

    Returns
    -------
    factor : ndarray
        Lower-triangular factor.
    jitter : float
        Diagonal shift that was added on top of ``1/gamma`` (0 if none).

    Raises
    ------
    NumericalError
        If both attempts fail; ``pivot`` is the 1-based failing index.
    """
    gamma = check_positive(gamma, "gamma")
    G = np.asarray(G, dtype=np.float64)
    n = G.shape[0]
    M = G + np.eye(n) / gamma
    c, info = lapack.dpotrf(M, lower=1, clean=1)
    if info == 0:
        return c, 0.0
    if info < 0:
        raise NumericalError(f"dpotrf argument {-info} invalid")
    jitter = JITTER_SCALE * np.trace(M) / n
    log.warning("Cholesky failed at pivot %d; retrying with jitter %.3g",
                info, jitter)
    c, info2 = lapack.dpotrf(M + jitter * np.eye(n), lower=1, clean=1)
    if info2 != 0:
        raise NumericalError(
            f"(1/gamma)I + G is not positive definite (pivot {info2})",
            pivot=int(info2))
    return c, float(jitter)


@dataclass(frozen=True)
class FittedPredictor:
    """Fitted structured predictor.

    ``X_cols`` has shape ``(n_x, N)``, ``W_train`` ``(N, L, n_w)`` and
    ``Y_L`` ``(L*n_y, N)``; ``A`` is the dual matrix ``Y_L M^{-1}``.
    """

    dims: Dims
    spec: KernelSpec
    gamma: float
    X_cols: np.ndarray = field(repr=False)
    W_train: np.ndarray = field(repr=False)
    Y_L: np.ndarray = field(repr=False)
    factor: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False, default=None)
    jitter: float = 0.0

    @property
    def n_columns(self):
        return self.X_cols.shape[1]

    def solve(self, rhs):
        """``M^{-1} rhs`` with the stored factor."""
        return cho_solve((self.factor, True), rhs)


def _finish_fit(dims, spec, gamma, X, W, Y, G):
    gamma = check_positive(gamma, "gamma")
    factor, jitter = spd_factor(G, gamma)
    A = cho_solve((factor, True), Y.T).T
    return FittedPredictor(dims, spec, gamma, X, W, Y, factor, A, G, jitter)


def fit(data, spec, gamma):
    """Fit on Hankel data matrices (one kernel table on the scheduling sequence)."""
    t0 = time.perf_counter()
    G = effective_gram(data, spec)
    t1 = time.perf_counter()
    p = _finish_fit(data.dims, spec, gamma, data.X,
                    windows_from_hankel(data.W_L, data.dims.L),
                    np.asarray(data.Y_L.entries), G)
    log.info("fit: N_c=%d gram %.3fs factor %.3fs", data.dims.N_c,
             t1 - t0, time.perf_counter() - t1)
    return p


def fit_columns(X, W, Y, spec, gamma, dims, parts=None):
    """Fit on an arbitrary set of columns.

    Parameters
    ----------
    X : array, shape (n_x, N)
    W : array, shape (N, L, n_w)
    Y : array, shape (L*n_y, N)
    parts : array, optional
        Precomputed partial inner products of ``X`` with itself.
    """
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if not (X.shape[1] == W.shape[0] == Y.shape[1]):
        raise InvalidInputError(
            f"column counts differ: X {X.shape}, W {W.shape}, Y {Y.shape}")
    if Y.shape[0] != dims.L * dims.n_y:
        raise InvalidInputError(f"Y must have {dims.L * dims.n_y} rows")
    if parts is None:
        parts = partial_inner_products(X, X, dims)
    G = gram_from_parts(parts, offset_kernels(spec, W, W))
    G = 0.5 * (G + G.T)
    return _finish_fit(dims, spec, gamma, X, W, Y, G)


def _query_arrays(p, dphi0, du, w_query):
    d = p.dims
    dphi0 = as_vector(dphi0, d.n_phi, "dphi0")
    du = as_samples(du, dim=d.n_u, name="du")
    if du.shape[0] != d.L:
        raise InvalidInputError(f"du must have L={d.L} samples")
    Wq = as_samples(w_query, dim=p.W_train.shape[2], name="w_query")
    if Wq.shape[0] != d.L:
        raise InvalidInputError(f"w_query must have L={d.L} vectors")
    x = np.concatenate([dphi0, du.ravel()])[:, None]
    return x, Wq[None]


def predict_columns(p, x_query, W_query, return_slices=False):
    """Predictions for many queries.

    Parameters
    ----------
    x_query : array, shape (n_x, Q)
        Columns ``col(Δphi_0, Δu_[1,L])``.
    W_query : array, shape (Q, L, n_w)

    Returns
    -------
    array, shape (L*n_y, Q)
    """
    x_query = np.asarray(x_query, dtype=np.float64)
    if x_query.ndim == 1:
        x_query = x_query[:, None]
    c = slice_vectors(p.spec, p.X_cols, p.W_train, x_query, W_query, p.dims)
    out = p.A @ c
    return (out, c) if return_slices else out


def predict(p, dphi0, du, w_query):
    """Δŷ_[1,L] for one query, shape ``(L, n_y)``."""
    x, Wq = _query_arrays(p, dphi0, du, w_query)
    return predict_columns(p, x, Wq).reshape(p.dims.L, p.dims.n_y)


@dataclass(frozen=True)
class ImplicitRepresentation:
    """``[(1/gamma) I + G; Y_L] g = [c(query); Δy]`` and its solver."""

    predictor: FittedPredictor

    @property
    def lhs(self):
        p = self.predictor
        M = p.factor @ p.factor.T if p.gram is None else \
            p.gram + np.eye(p.n_columns) / p.gamma
        return np.vstack([M, p.Y_L])

    def rhs(self, x_query, W_query):
        p = self.predictor
        x_query = np.asarray(x_query, dtype=np.float64)
        if x_query.ndim == 1:
            x_query = x_query[:, None]
        return slice_vectors(p.spec, p.X_cols, p.W_train, x_query, W_query,
                             p.dims)

    def solve(self, x_query, W_query):
        """Latent weights ``g`` (one column per query)."""
        return self.predictor.solve(self.rhs(x_query, W_query))

    def predict(self, x_query, W_query):
        return self.predictor.Y_L @ self.solve(x_query, W_query)


def implicit_representation(p):
    return ImplicitRepresentation(p)


def column_rmse(pred, true):
    """Mean over columns of the per-column RMSE of stacked predictions."""
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape:
        raise InvalidInputError(f"shape mismatch {pred.shape} vs {true.shape}")
    if pred.ndim == 1:
        pred, true = pred[:, None], true[:, None]
    return float(np.mean(np.sqrt(np.mean((pred - true) ** 2, axis=0))))


VELOCITY = "velocity"
PRIMAL = "primal"


@dataclass(frozen=True)
class UnstructuredPredictor:
    """Plain kernel ridge on stacked windows.

    ``Z`` holds one training argument per column and ``Y`` the targets.
    """

    dims: Dims
    spec: KernelSpec
    gamma: float
    variant: str
    Z: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)
    factor: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False, default=None)
    jitter: float = 0.0

    def predict_columns(self, Zq):
        Zq = np.asarray(Zq, dtype=np.float64)
        if Zq.ndim == 1:
            Zq = Zq[:, None]
        return self.A @ self.spec.gram(self.Z.T, Zq.T)


def unstructured_features(data_or_traj, dims, variant=VELOCITY):
    """Kernel arguments and targets for the unstructured baseline.

    ``velocity``: arguments ``col(X_i, W_i)``, targets ``Y_L``.
    ``primal``: arguments ``col(y_[i+1,i+ell], u_[i+1,i+ell+L])``, targets
    the primal outputs over the horizon.
    """
    if variant == VELOCITY:
        data = data_or_traj if hasattr(data_or_traj, "X") else \
            build_data_matrices(data_or_traj, dims)
        return (np.vstack([data.X, np.asarray(data.W_L.entries)]),
                np.asarray(data.Y_L.entries))
    if variant == PRIMAL:
        traj = data_or_traj
        if hasattr(traj, "X"):
            raise InvalidInputError("primal variant needs the trajectory")
        data = build_data_matrices(traj, dims)
        return primal_regressors(traj, dims), np.asarray(data.Ybar_L.entries)
    raise InvalidInputError(f"unknown variant {variant!r}")


def unstructured_fit(traj, spec, gamma, dims, variant=VELOCITY, Z=None, Y=None):
    """Fit the unstructured baseline on a trajectory (or given ``Z, Y``)."""
    if Z is None:
        Z, Y = unstructured_features(traj, dims, variant)
    Z = np.asarray(Z, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    K = spec.gram(Z.T, Z.T)
    K = 0.5 * (K + K.T)
    factor, jitter = spd_factor(K, gamma)
    A = cho_solve((factor, True), Y.T).T
    return UnstructuredPredictor(dims, spec, float(gamma), variant, Z, Y,
                                 factor, A, K, jitter)


@dataclass(frozen=True)
class IterativeResult:
    dy: np.ndarray
    converged: bool
    n_iter: int
    steps: list


def _rebuild_w(y_hist, y_pred, u, ell, L):
    # y_hist: y(-ell..0); y_pred: y(1..L), last one unused; u: u(-ell..L)
    y_all = np.vstack([y_hist, y_pred])
    W = []
    for t in range(1, L + 1):
        yl = [y_all[ell + t - 1 - r] for r in range(ell + 1)]
        ul = [u[ell + t - r] for r in range(ell + 2)]
        W.append(scheduling_vector(yl, ul))
    return np.array(W)


def iterative_w_predict(p, y_hist, u, w_init=None, max_iter=20, tol=1e-10):
    """Prediction with unknown future scheduling vectors.

    Fixed point: predict with the current window estimate, rebuild the
    outputs by accumulating the predicted increments from ``y(0)``,
    rebuild the window, repeat. Convergence is not guaranteed; the flag
    reports whether successive iterates came within ``tol``.

    Parameters
    ----------
    y_hist : array, shape (ell+1, n_y)
        ``y(-ell..0)``.
    u : array, shape (ell+1+L, n_u)
        ``u(-ell..L)``.
    w_init : array, shape (L, n_w), optional
        Starting window; by default outputs are held at ``y(0)``.

    Raises
    ------
    NumericalError
        If an iterate becomes non-finite (``pivot`` holds the iteration).
    """
    d = p.dims
    if max_iter < 1:
        raise InvalidInputError("max_iter must be >= 1")
    y_hist = as_samples(y_hist, dim=d.n_y, name="y_hist")
    u = as_samples(u, dim=d.n_u, name="u")
    if y_hist.shape[0] != d.ell + 1 or u.shape[0] != d.ell + 1 + d.L:
        raise InvalidInputError("y_hist needs ell+1 and u ell+1+L samples")
    dy_past = np.diff(y_hist, axis=0)
    du_all = np.diff(u, axis=0)            # Δu(1-ell..L)
    du_past = du_all[:d.ell]
    du_fut = du_all[d.ell:]
    dphi0 = np.concatenate([dy_past.ravel(), du_past.ravel()])
    u_w = u
    if w_init is None:
        W = _rebuild_w(y_hist, np.repeat(y_hist[-1:], d.L, axis=0), u_w,
                       d.ell, d.L)
    else:
        W = as_samples(w_init, name="w_init")
    prev = None
    steps = []
    for it in range(1, max_iter + 1):
        dy = predict(p, dphi0, du_fut, W)
        if not np.all(np.isfinite(dy)):
            raise NumericalError(f"iterate {it} is not finite", pivot=it)
        steps.append(dy)
        if prev is not None and np.max(np.abs(dy - prev)) <= tol:
            return IterativeResult(dy, True, it, steps)
        prev = dy
        y_pred = reconstruct_primal(dy, y_hist[-1:], PREDICTED_PREVIOUS)
        W_new = _rebuild_w(y_hist, y_pred, u_w, d.ell, d.L)
        # the window is (numerically) stationary: dy is a fixed point
        if np.max(np.abs(W_new - W)) <= tol:
            return IterativeResult(dy, True, it, steps)
        W = W_new
    return IterativeResult(prev, False, max_iter, steps)


_FORMAT = "velokern-model-1"


def save_model(path, p, fit_seconds=None):
    """Write a fitted predictor to an ``.npz`` file with JSON metadata."""
    if isinstance(p, FittedPredictor):
        kind = "structured"
        arrays = dict(X_cols=p.X_cols, W_train=p.W_train, Y_L=p.Y_L,
                      factor=p.factor, A=p.A)
        extra = {}
    elif isinstance(p, UnstructuredPredictor):
        kind = "unstructured"
        arrays = dict(Z=p.Z, Y=p.Y, factor=p.factor, A=p.A)
        extra = {"variant": p.variant}
    else:
        raise InvalidInputError(f"cannot save {type(p).__name__}")
    meta = {
        "format": _FORMAT, "kind": kind,
        "dims": {k: int(getattr(p.dims, k)) for k in
                 ("n_u", "n_y", "n_a", "n_b", "ell", "L", "N")},
        "kernel": kernel_name(p.spec),
        "sigma": _spec_sigma(p.spec),
        "gamma": float(p.gamma), "jitter": float(p.jitter), **extra,
    }
    if fit_seconds is not None:
        meta["fit_seconds"] = float(fit_seconds)
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def _spec_sigma(spec):
    if isinstance(spec, RBF):
        return spec.sigma
    for attr in ("inner", "left", "right"):
        sub = getattr(spec, attr, None)
        if sub is not None:
            s = _spec_sigma(sub)
            if s is not None:
                return s
    return None


def _read_model(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            arrays = {k: z[k] for k in z.files if k != "meta"}
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"{path}: not a model file ({exc})") from None
    return meta, arrays


def model_metadata(path):
    """JSON metadata stored with a saved model."""
    return _read_model(path)[0]


def load_model(path):
    """Inverse of :func:`save_model`."""
    meta, arrays = _read_model(path)
    if meta.get("format") != _FORMAT:
        raise DataError(f"{path}: unknown model format {meta.get('format')!r}")
    dims = Dims(**meta["dims"])
    spec = parse_kernel(meta["kernel"], meta["sigma"])
    if meta["kind"] == "structured":
        return FittedPredictor(dims, spec, meta["gamma"], arrays["X_cols"],
                               arrays["W_train"], arrays["Y_L"],
                               arrays["factor"], arrays["A"], None,
                               meta["jitter"])
    return UnstructuredPredictor(dims, spec, meta["gamma"], meta["variant"],
                                 arrays["Z"], arrays["Y"], arrays["factor"],
                                 arrays["A"], None, meta["jitter"])
