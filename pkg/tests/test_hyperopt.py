import csv

import numpy as np
import pytest

from velokern.exceptions import InvalidInputError
from velokern.hyperopt import (
    DEFAULT_GAMMA_GRID, DEFAULT_SIGMA_GRID, GridSpec, grid_search,
    split_columns, write_scores_csv,
)
from velokern.kernels import RBF, ExplicitBasis, Linear
from velokern.signals import Dims, Trajectory, build_data_matrices

from test_regression import TANH, representable_traj


def _noisy_data(seed=0, N=150):
    g = np.random.default_rng(seed)
    tr = Trajectory(g.normal(size=(N + 1, 1)), g.normal(size=(N + 1, 1)))
    return build_data_matrices(tr, Dims.for_trajectory(tr, ell=2, L=3))


def test_default_grids_bracket_reported_values():
    assert min(DEFAULT_SIGMA_GRID) < 25.97 < 40.11 < max(DEFAULT_SIGMA_GRID)
    assert min(DEFAULT_GAMMA_GRID) < 123.3 < 1474.5 < max(DEFAULT_GAMMA_GRID)
    assert len(DEFAULT_SIGMA_GRID) == len(DEFAULT_GAMMA_GRID) == 9


def test_gridspec_validation():
    with pytest.raises(InvalidInputError):
        GridSpec(sigma_grid=())
    with pytest.raises(InvalidInputError):
        GridSpec(split=1.0)
    with pytest.raises(InvalidInputError):
        GridSpec(gamma_grid=(1.0, -2.0))


def test_split_contiguous_and_shuffled():
    tr, va = split_columns(10, GridSpec())
    np.testing.assert_array_equal(tr, np.arange(7))
    np.testing.assert_array_equal(va, np.arange(7, 10))
    a = split_columns(10, GridSpec(shuffle=True, seed=3))
    b = split_columns(10, GridSpec(shuffle=True, seed=3))
    np.testing.assert_array_equal(a[0], b[0])
    assert sorted(np.concatenate(a)) == list(range(10))
    with pytest.raises(InvalidInputError):
        split_columns(1, GridSpec())


def test_single_point_grid():
    res = grid_search(_noisy_data(), RBF(1.0), GridSpec((7.0,), (3.0,)))
    assert res.best == (7.0, 3.0)
    assert len(res.table) == 1


def test_table_complete_and_finite():
    g = GridSpec((1.0, 10.0), (1.0, 10.0, 100.0))
    res = grid_search(_noisy_data(), RBF(1.0), g)
    assert len(res.table) == 6
    assert all(r.status == "ok" and np.isfinite(r.val_rmse) for r in res.table)
    best = min(res.table, key=lambda r: r.val_rmse)
    assert (best.sigma, best.gamma) == res.best


def test_representable_prefers_largest_gamma():
    tr = representable_traj(np.random.default_rng(1), N=120)
    data = build_data_matrices(tr, Dims.for_trajectory(tr, ell=1, L=2, n_a=1, n_b=1))
    gammas = tuple(np.logspace(0, 6, 7))
    res = grid_search(data, ExplicitBasis(TANH), GridSpec((1.0,), gammas))
    vals = [r.val_rmse for r in res.table]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert res.best_gamma == max(gammas)
    assert np.isnan(res.best_sigma)


def test_deterministic():
    g = GridSpec((2.0, 20.0), (1.0, 100.0), shuffle=True, seed=9)
    a = grid_search(_noisy_data(), RBF(1.0), g)
    b = grid_search(_noisy_data(), RBF(1.0), g)
    assert a.table == b.table


def test_sigma_tie_goes_to_smaller():
    # at these bandwidths the RBF is exactly 1 in double precision
    res = grid_search(_noisy_data(), RBF(1.0), GridSpec((1e13, 1e12), (1.0,)))
    a, b = res.table
    assert a.val_rmse == b.val_rmse
    assert res.best_sigma == 1e12


def test_linear_spec_has_no_sigma():
    res = grid_search(_noisy_data(), Linear(), GridSpec((5.0, 1.0), (1.0, 2.0)))
    assert len(res.table) == 2 and np.isnan(res.best_sigma)


def test_unstructured_baseline_search():
    res = grid_search(_noisy_data(), RBF(1.0), GridSpec((3.0, 30.0), (10.0,)),
                      structured=False)
    assert res.best_gamma == 10.0 and res.best_sigma in (3.0, 30.0)


def test_scores_csv(tmp_path):
    res = grid_search(_noisy_data(), RBF(1.0), GridSpec((2.0,), (1.0, 2.0)))
    path = tmp_path / "s.csv"
    write_scores_csv(path, res.table)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["sigma", "gamma", "val_rmse", "train_rmse", "status"]
    assert len(rows) == 3
    assert float(rows[1][2]) == res.table[0].val_rmse
