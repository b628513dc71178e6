"""scikit-learn wrappers.

Samples are prediction windows. :func:`make_windows` turns an input/output
record into a feature matrix whose rows are ``col(Δphi_0, Δu_[1,L], w_1,
..., w_L)`` and a target matrix of Δy over the horizon, so the estimators
work with ``cross_val_score``, ``GridSearchCV`` and friends.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import InvalidInputError
from .kernels import parse_kernel
from .regression import VELOCITY, fit_columns, predict_columns, unstructured_fit
from .signals import Dims, Trajectory, build_data_matrices

__all__ = ["make_windows", "StructuredKernelRegressor",
           "UnstructuredKernelRegressor"]


def make_windows(u, y, ell, horizon):
    """Window features and Δy targets from a primal record.

    Parameters
    ----------
    u : array, shape (N+1, n_u) or (N+1,)
    y : array, shape (N+1, n_y) or (N+1,)
    ell : int
        Past depth.
    horizon : int
        Prediction horizon ``L``.

    Returns
    -------
    X : array, shape (N_c, n_x + L*n_w)
    Y : array, shape (N_c, L*n_y)
    """
    traj = Trajectory(u, y)
    dims = Dims.for_trajectory(traj, int(ell), int(horizon))
    data = build_data_matrices(traj, dims)
    X = np.vstack([data.X, np.asarray(data.W_L.entries)]).T
    return X, np.asarray(data.Y_L.entries).T


class _WindowRegressor(RegressorMixin, BaseEstimator):

    def __init__(self, kernel="rbf", sigma=40.11, gamma=123.3, ell=2,
                 horizon=10, n_inputs=1):
        self.kernel = kernel
        self.sigma = sigma
        self.gamma = gamma
        self.ell = ell
        self.horizon = horizon
        self.n_inputs = n_inputs

    def _dims(self, n_features, n_targets, n_samples):
        L, ell, n_u = int(self.horizon), int(self.ell), int(self.n_inputs)
        if L < 1 or ell < 1 or n_u < 1:
            raise InvalidInputError("horizon, ell and n_inputs must be >= 1")
        if n_targets % L:
            raise InvalidInputError(
                f"{n_targets} target columns is not a multiple of horizon={L}")
        n_y = n_targets // L
        dims = Dims(n_u=n_u, n_y=n_y, n_a=ell, n_b=ell, ell=ell, L=L,
                    N=n_samples + L + ell - 1)
        expected = dims.n_x + L * dims.n_w
        if n_features != expected:
            raise InvalidInputError(
                f"expected {expected} features for ell={ell}, horizon={L}, "
                f"n_inputs={n_u}, n_outputs={n_y}; got {n_features}")
        return dims

    def _split(self, X):
        d = self.dims_
        Xc = X[:, :d.n_x].T
        W = X[:, d.n_x:].reshape(X.shape[0], d.L, d.n_w)
        return Xc, W

    def _prepare(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._y_1d = y.ndim == 1
        Y = y[:, None] if self._y_1d else y
        self.dims_ = self._dims(X.shape[1], Y.shape[1], X.shape[0])
        self.n_features_in_ = X.shape[1]
        return X, Y

    def _check_query(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInputError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def _finish(self, out):
        return out.ravel() if self._y_1d else out


class StructuredKernelRegressor(_WindowRegressor):
    """Multi-step Δy predictor with the structured velocity-form kernel.

    Parameters
    ----------
    kernel : str
        Scheduling kernel name, e.g. ``"rbf"`` or ``"linear_plus_rbf"``.
    sigma : float
        RBF bandwidth.
    gamma : float
        Ridge weight; the dual system is ``(G + I/gamma) a = y``.
    ell, horizon : int
        Past depth and prediction horizon.
    n_inputs : int
        Number of input channels ``n_u``.
    """

    def fit(self, X, y):
        X, Y = self._prepare(X, y)
        Xc, W = self._split(X)
        spec = parse_kernel(self.kernel, self.sigma)
        self.model_ = fit_columns(Xc, W, Y.T, spec, self.gamma, self.dims_)
        return self

    def predict(self, X):
        X = self._check_query(X)
        Xc, W = self._split(X)
        return self._finish(predict_columns(self.model_, Xc, W).T)


class UnstructuredKernelRegressor(_WindowRegressor):
    """Plain kernel ridge on the full window features (baseline)."""

    def fit(self, X, y):
        X, Y = self._prepare(X, y)
        spec = parse_kernel(self.kernel, self.sigma)
        self.model_ = unstructured_fit(None, spec, self.gamma, self.dims_,
                                       VELOCITY, Z=X.T, Y=Y.T)
        return self

    def predict(self, X):
        X = self._check_query(X)
        return self._finish(self.model_.predict_columns(X.T).T)
