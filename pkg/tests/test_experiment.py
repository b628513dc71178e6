import numpy as np
import pytest

from velokern import experiment as ex
from velokern.exceptions import ConfigError
from velokern.regression import iterative_w_predict

LINEAR_POLY = "0.6*y1 - 0.2*y2 + 0.5*u1 + 0.1*u2"


def _write(tmp_path, text):
    p = tmp_path / "c.toml"
    p.write_text(text)
    return p


def test_load_config_defaults_and_table(tmp_path):
    cfg = ex.load_config(_write(tmp_path, 'N = 300\n[input]\nvariance = 2.0\n'))
    assert cfg.N == 300 and cfg.input_variance == 2.0
    assert cfg.sigma == 40.11 and cfg.gamma == 123.3 and cfg.L == 10


@pytest.mark.parametrize("text", [
    "bogus = 1\n", "N = 5\nL = 10\n", "mode = 'fast'\n", "sigma = -1.0\n",
    "kernel = 'poly'\n", "[input]\nskew = 1.0\n", "system = 'poly'\n", "seed = -3\n", "N = [\n",
])
def test_load_config_errors(tmp_path, text):
    with pytest.raises(ConfigError):
        ex.load_config(_write(tmp_path, text))


def test_missing_config(tmp_path):
    with pytest.raises(ConfigError):
        ex.load_config(tmp_path / "nope.toml")


def test_override_seed(tmp_path):
    cfg = ex.load_config(_write(tmp_path, "seed = 4\n"), seed=9)
    assert cfg.seed == 9


def test_poly_system():
    sys = ex.poly_system("u1 + u1**2 + u1**3", n_a=1, n_b=1)
    assert sys(np.array([0.0, 5.0, 2.0]))[0] == pytest.approx(14.0)
    np.testing.assert_allclose(sys.jac(np.array([0.0, 5.0, 2.0])), [[0, 0, 17.0]])
    with pytest.raises(ConfigError):
        ex.poly_system("z1 + u1")
    with pytest.raises(ConfigError):
        ex.poly_system("y3", n_a=2)


def test_generate_deterministic_and_noise():
    cfg = ex.ExperimentConfig(N=899, seed=5)
    a, a_true = ex.generate(cfg)
    b, _ = ex.generate(cfg)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.u, a_true.u)
    assert abs(np.var(a.u) - 1.0) <= 0.1
    resid = a.y - a_true.y
    assert 0.07 < np.var(resid) < 0.13
    clean, clean_true = ex.generate(ex.ExperimentConfig(N=50, noise_variance=0.0))
    np.testing.assert_array_equal(clean.y, clean_true.y)


def test_held_out_protocol():
    cfg = ex.ExperimentConfig(seed=2)
    te = ex.held_out_trajectory(cfg)
    assert te.length - 1 - cfg.L - cfg.ell + 1 == cfg.test_windows
    train, _ = ex.generate(cfg)
    assert not np.array_equal(te.u[:10], train.u[:10])


def test_minimal_data_fits():
    cfg = ex.ExperimentConfig(N=12, L=10, ell=2, noise_variance=0.0)
    tr, _ = ex.generate(cfg)
    model, _ = ex.fit_from_config(cfg, tr)
    assert model.dims.N_c == 1


def test_training_set_interpolation_linear():
    cfg = ex.ExperimentConfig(system="poly", poly=LINEAR_POLY, N=150, L=5,
                              noise_variance=0.0, kernel="zero", gamma=1e8)
    tr, _ = ex.generate(cfg)
    model, _ = ex.fit_from_config(cfg, tr)
    res = ex.evaluate(model, tr)
    assert res.rmse_delta <= 1e-4 and res.rmse_primal_a <= 1e-4


def test_zero_model_rmse_equals_signal_rms():
    cfg = ex.ExperimentConfig(N=120, L=4, noise_variance=0.0)
    tr, _ = ex.generate(cfg)
    model, _ = ex.fit_from_config(cfg, tr)
    zero = type(model)(**{**model.__dict__, "A": np.zeros_like(model.A)})
    res = ex.evaluate(zero, tr)
    dy = ex.build_data_matrices(tr, model.dims).Y_L.entries
    assert res.rmse_delta == pytest.approx(np.mean(np.sqrt(np.mean(dy ** 2, axis=0))))


@pytest.mark.parametrize("mode", ex.MODES)
def test_modes_run(mode):
    cfg = ex.ExperimentConfig(N=150, L=3, mode=mode, sigma=5.0, gamma=10.0)
    tr, _ = ex.generate(cfg)
    model, _ = ex.fit_from_config(cfg, tr)
    res = ex.evaluate(model, ex.held_out_trajectory(cfg))
    m = res.metrics(0.1)
    assert set(m) >= {"rmse_delta", "rmse_primal_a", "rmse_primal_b", "n_c", "fit_seconds"}
    assert np.isfinite(res.rmse_delta) and res.n_c == cfg.test_windows
    # mode (b) adds the prediction to the true previous output
    np.testing.assert_allclose(res.y_hat_b - res.y_true, res.dy_hat - res.dy_true,
                               atol=1e-12)


def test_grid_in_config():
    cfg = ex.ExperimentConfig(N=150, L=3, sigma="grid", gamma="grid",
                              sigma_grid=(3.0, 30.0), gamma_grid=(1.0, 100.0))
    tr, _ = ex.generate(cfg)
    found = []
    model, _ = ex.fit_from_config(cfg, tr, grid_result_out=found)
    assert len(found[0].table) == 4
    assert (model.spec.sigma, model.gamma) == found[0].best


@pytest.mark.xfail(strict=True, reason="fixed-point iteration diverges on many "
                   "windows of the example system; see the decision ledger")
def test_iterative_within_twice_known_w():
    wins = 0
    seeds = range(4)
    for seed in seeds:
        cfg = ex.ExperimentConfig(noise_variance=0.01, seed=seed, test_windows=40)
        tr, _ = ex.generate(cfg)
        te = ex.held_out_trajectory(cfg)
        model, _ = ex.fit_from_config(cfg, tr)
        known = ex.evaluate(model, te).rmse_delta
        L, ell = cfg.L, cfg.ell
        errs = []
        for i in range(cfg.test_windows):
            k0 = i + ell
            r = iterative_w_predict(model, te.y[k0 - ell:k0 + 1], te.u[k0 - ell:k0 + L + 1],
                                    max_iter=30, tol=1e-8)
            true = np.diff(te.y[k0:k0 + L + 1], axis=0)
            errs.append(np.sqrt(np.mean((r.dy - true) ** 2)))
        wins += np.mean(errs) <= 2 * known
    assert wins >= len(seeds) / 2
