import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import cross_val_score

from velokern import experiment as ex
from velokern.estimators import (
    StructuredKernelRegressor, UnstructuredKernelRegressor, make_windows,
)
from velokern.exceptions import InvalidInputError
from velokern.kernels import parse_kernel
from velokern.regression import fit_columns, predict_columns
from velokern.signals import Dims, build_data_matrices


@pytest.fixture(scope="module")
def windows():
    tr, _ = ex.generate(ex.ExperimentConfig(N=120, L=4, noise_variance=0.0, seed=1))
    X, Y = make_windows(tr.u, tr.y, ell=2, horizon=4)
    return tr, X, Y


def test_make_windows_shapes(windows):
    tr, X, Y = windows
    d = Dims.for_trajectory(tr, 2, 4)
    assert X.shape == (d.N_c, d.n_x + 4 * d.n_w) == (115, 2 * 2 + 4 + 4 * 7)
    assert Y.shape == (115, 4)
    np.testing.assert_allclose(Y[0], np.diff(tr.y[2:7, 0]))


def test_parity_with_fit_columns(windows):
    tr, X, Y = windows
    est = StructuredKernelRegressor(sigma=5.0, gamma=10.0, ell=2, horizon=4).fit(X, Y)
    d = Dims.for_trajectory(tr, 2, 4)
    data = build_data_matrices(tr, d)
    W = np.asarray(data.W_L.entries).T.reshape(-1, 4, d.n_w)
    p = fit_columns(data.X, W, np.asarray(data.Y_L.entries),
                    parse_kernel("rbf", 5.0), 10.0, d)
    np.testing.assert_allclose(est.predict(X[:7]),
                               predict_columns(p, data.X[:, :7], W[:7]).T, atol=1e-10)


@pytest.mark.parametrize("cls", [StructuredKernelRegressor, UnstructuredKernelRegressor])
def test_sklearn_protocol(cls, windows):
    _, X, Y = windows
    est = cls(sigma=5.0, gamma=50.0, ell=2, horizon=4)
    with pytest.raises(NotFittedError):
        est.predict(X)
    params = est.get_params()
    assert params["sigma"] == 5.0 and params["horizon"] == 4
    twin = clone(est).set_params(gamma=1.0)
    assert twin.gamma == 1.0 and est.gamma == 50.0
    est.fit(X[:80], Y[:80])
    assert est.predict(X[80:]).shape == (35, 4)
    assert est.score(X[:80], Y[:80]) > 0.9
    with pytest.raises(InvalidInputError):
        est.predict(X[:, :-1])
    scores = cross_val_score(clone(est), X, Y, cv=3)
    assert np.all(np.isfinite(scores))


def test_one_dimensional_target(windows):
    _, X, Y = windows
    est = StructuredKernelRegressor(sigma=5.0, gamma=10.0, ell=2, horizon=1)
    tr = windows[0]
    Xs, Ys = make_windows(tr.u, tr.y, ell=2, horizon=1)
    assert est.fit(Xs, Ys[:, 0]).predict(Xs).shape == (118,)


def test_feature_count_checked(windows):
    _, X, Y = windows
    with pytest.raises(InvalidInputError, match="expected 36 features"):
        StructuredKernelRegressor(ell=2, horizon=4).fit(X[:, :-1], Y)
    with pytest.raises(InvalidInputError):
        StructuredKernelRegressor(ell=2, horizon=3).fit(X, Y)
