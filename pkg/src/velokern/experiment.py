"""Experiment plumbing: configuration, data generation, evaluation and the
seeded example benchmark.

Configuration is a flat TOML file::

    system = "example"          # or "poly" together with  poly = "..."
    N = 899
    ell = 2
    L = 10
    noise_variance = 0.1
    input_mean = 0.0
    input_variance = 1.0
    kernel = "rbf"
    sigma = 40.11               # number or "grid"
    gamma = 123.3               # number or "grid"
    seed = 0
    mode = "structured"         # or unstructured-velocity / unstructured-primal

A user polynomial is written in the symbols ``y1..y<n_a>`` (lagged
outputs) and ``u0..u<n_b>`` (current and lagged inputs), e.g.
``poly = "0.5*y1 - 0.1*y2*u1 + u1**2"``.
"""

import logging
import math
import sys
import time
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .exceptions import (
    ConfigError, InvalidInputError, SimulationDivergedError,
)
from .hyperopt import DEFAULT_GAMMA_GRID, DEFAULT_SIGMA_GRID, GridSpec, grid_search
from .kernels import parse_kernel, windows_from_hankel
from .regression import (
    FittedPredictor, PRIMAL, UnstructuredPredictor, VELOCITY, column_rmse,
    fit, predict_columns, unstructured_features, unstructured_fit,
)
from .signals import (
    Dims, Trajectory, build_data_matrices,
    primal_regressors,
)
from .velocity import NLSystem, example_system, simulate_primal

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ExperimentConfig", "load_config", "make_system", "poly_system",
    "generate", "held_out_trajectory", "fit_from_config", "EvalResult",
    "evaluate", "BenchmarkRow", "run_benchmark", "MODES",
    "DEFAULT_STRUCTURED", "DEFAULT_UNSTRUCTURED",
]

log = logging.getLogger(__name__)

STRUCTURED = "structured"
UNSTRUCTURED_VELOCITY = "unstructured-velocity"
UNSTRUCTURED_PRIMAL = "unstructured-primal"
MODES = (STRUCTURED, UNSTRUCTURED_VELOCITY, UNSTRUCTURED_PRIMAL)

# tuned values reported for the example system; documented defaults only
DEFAULT_STRUCTURED = (40.11, 123.3)
DEFAULT_UNSTRUCTURED = (25.97, 1474.5)

GRID = "grid"


@dataclass(frozen=True)
class ExperimentConfig:
    system: str = "example"
    N: int = 899
    ell: int = 2
    L: int = 10
    noise_variance: float = 0.1
    input_mean: float = 0.0
    input_variance: float = 1.0
    kernel: str = "rbf"
    sigma: object = DEFAULT_STRUCTURED[0]
    gamma: object = DEFAULT_STRUCTURED[1]
    seed: int = 0
    mode: str = STRUCTURED
    poly: Optional[str] = None
    n_a: Optional[int] = None
    n_b: Optional[int] = None
    test_windows: int = 100
    test_seed_offset: int = 1000
    split: float = 0.7
    sigma_grid: tuple = DEFAULT_SIGMA_GRID
    gamma_grid: tuple = DEFAULT_GAMMA_GRID

    def __post_init__(self):
        if self.system not in ("example", "poly"):
            raise ConfigError(f"unknown system {self.system!r}")
        if self.system == "poly" and not self.poly:
            raise ConfigError("system 'poly' needs a 'poly' expression")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("N", "ell", "L", "test_windows"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.N < self.L + self.ell:
            raise ConfigError(
                f"N={self.N} must be >= L + ell = {self.L + self.ell}")
        for name in ("noise_variance", "input_variance"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or v < 0 or not math.isfinite(v):
                raise ConfigError(f"{name} must be a finite number >= 0")
        for name in ("sigma", "gamma"):
            v = getattr(self, name)
            if v != GRID and not (isinstance(v, (int, float))
                                  and not isinstance(v, bool) and v > 0):
                raise ConfigError(f"{name} must be positive or 'grid', got {v!r}")
        if not 0 < self.split < 1:
            raise ConfigError("split must lie in (0, 1)")
        try:
            parse_kernel(self.kernel, 1.0)
        except InvalidInputError as exc:
            raise ConfigError(str(exc)) from None
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) \
                or not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    @property
    def grid(self):
        return GridSpec(tuple(self.sigma_grid), tuple(self.gamma_grid),
                        split=self.split)

    def dims(self, system, N=None):
        return Dims(n_u=system.n_u, n_y=system.n_y, n_a=system.n_a,
                    n_b=max(system.n_b, 0), ell=self.ell, L=self.L,
                    N=self.N if N is None else N)


def load_config(path, **overrides):
    """Read and validate a TOML config; ``overrides`` win over the file."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if isinstance(raw.get("input"), dict):
        inp = raw.pop("input")
        extra = sorted(set(inp) - {"mean", "variance"})
        if extra:
            raise ConfigError(f"{path}: unknown [input] keys {extra}")
        raw.setdefault("input_mean", inp.get("mean", 0.0))
        raw.setdefault("input_variance", inp.get("variance", 1.0))
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    for key in ("sigma_grid", "gamma_grid"):
        if key in raw:
            raw[key] = tuple(float(v) for v in raw[key])
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def poly_system(expr, n_a=None, n_b=None):
    """SISO system ``y(k) = expr(y1.., u0..)`` with a symbolic Jacobian."""
    import sympy as sp

    try:
        parsed = sp.sympify(expr, locals={})
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigError(f"cannot parse poly expression {expr!r}: {exc}") from None
    names = {s.name for s in parsed.free_symbols}
    y_idx, u_idx = [], []
    for name in names:
        if name[:1] == "y" and name[1:].isdigit() and int(name[1:]) >= 1:
            y_idx.append(int(name[1:]))
        elif name[:1] == "u" and name[1:].isdigit():
            u_idx.append(int(name[1:]))
        else:
            raise ConfigError(f"poly uses unknown symbol {name!r}")
    n_a = max(y_idx + [1]) if n_a is None else int(n_a)
    n_b = max(u_idx + [0]) if n_b is None else int(n_b)
    if y_idx and max(y_idx) > n_a or u_idx and max(u_idx) > n_b:
        raise ConfigError("poly lags exceed the declared n_a / n_b")
    syms = ([sp.Symbol(f"y{i}") for i in range(1, n_a + 1)]
            + [sp.Symbol(f"u{j}") for j in range(n_b + 1)])
    f_num = sp.lambdify([syms], parsed, "numpy")
    grads = [sp.diff(parsed, s) for s in syms]
    j_num = sp.lambdify([syms], grads, "numpy")

    def f(xi):
        return np.array([float(f_num(list(xi)))])

    def jac(xi):
        return np.array([[float(v) for v in j_num(list(xi))]])

    return NLSystem(f, n_a=n_a, n_b=n_b, n_u=1, n_y=1, jacobian=jac)


def make_system(cfg):
    if cfg.system == "example":
        return example_system()
    return poly_system(cfg.poly, cfg.n_a, cfg.n_b)


def generate(cfg, seed=None, N=None, noise_variance=None, system=None):
    """Simulate the configured system under white-noise excitation.

    Draw order from ``numpy.random.default_rng(seed)`` (PCG64): the input
    sequence first, then the output noise. Noise is added after the full
    simulation.

    Returns
    -------
    measured, true : Trajectory
    """
    seed = cfg.seed if seed is None else seed
    N = cfg.N if N is None else N
    nv = cfg.noise_variance if noise_variance is None else noise_variance
    system = make_system(cfg) if system is None else system
    rng = np.random.default_rng(seed)
    u = cfg.input_mean + math.sqrt(cfg.input_variance) * \
        rng.standard_normal((N + 1, system.n_u))
    try:
        y = simulate_primal(system, u)
    except SimulationDivergedError as exc:
        raise SimulationDivergedError(
            exc.index, f"simulation diverged at index {exc.index} (seed {seed})"
        ) from None
    y_meas = y + math.sqrt(nv) * rng.standard_normal(y.shape) if nv > 0 else y
    return Trajectory(u, y_meas), Trajectory(u, y)


def held_out_trajectory(cfg, seed=None, system=None):
    """Noiseless held-out trajectory with ``test_windows`` query windows.

    Uses seed ``seed + test_seed_offset`` and the training excitation law.
    """
    seed = cfg.seed if seed is None else seed
    N = cfg.test_windows + cfg.L + cfg.ell - 1
    return generate(cfg, seed + cfg.test_seed_offset, N=N, noise_variance=0.0,
                    system=system)[1]


def _dims_for(traj, cfg, system):
    return cfg.dims(system, N=traj.length - 1)


def fit_from_config(cfg, traj, system=None, grid_result_out=None):
    """Fit the configured predictor on ``traj``; ``"grid"`` triggers a search."""
    system = make_system(cfg) if system is None else system
    dims = _dims_for(traj, cfg, system)
    data = build_data_matrices(traj, dims)
    sigma, gamma = cfg.sigma, cfg.gamma
    template = parse_kernel(cfg.kernel, 1.0 if sigma == GRID else sigma)
    structured = cfg.mode == STRUCTURED
    if GRID in (sigma, gamma):
        g = cfg.grid
        if sigma != GRID:
            g = replace(g, sigma_grid=(float(sigma),))
        if gamma != GRID:
            g = replace(g, gamma_grid=(float(gamma),))
        features = None
        if cfg.mode == UNSTRUCTURED_PRIMAL:
            features = unstructured_features(traj, dims, PRIMAL)
        res = grid_search(data, template, g, structured=structured,
                          features=features)
        if grid_result_out is not None:
            grid_result_out.append(res)
        sigma, gamma = res.best
        log.info("grid search selected sigma=%g gamma=%g", sigma, gamma)
    spec = template.with_sigma(sigma) if template.has_sigma else template
    t0 = time.perf_counter()
    if structured:
        model = fit(data, spec, gamma)
    elif cfg.mode == UNSTRUCTURED_VELOCITY:
        model = unstructured_fit(data, spec, gamma, dims, VELOCITY)
    else:
        model = unstructured_fit(traj, spec, gamma, dims, PRIMAL)
    return model, time.perf_counter() - t0


@dataclass
class EvalResult:
    rmse_delta: float
    rmse_primal_a: float
    rmse_primal_b: float
    n_c: int
    per_step_delta: np.ndarray
    per_step_primal_a: np.ndarray
    per_step_primal_b: np.ndarray
    dy_true: np.ndarray = field(repr=False)
    dy_hat: np.ndarray = field(repr=False)
    y_true: np.ndarray = field(repr=False)
    y_hat_a: np.ndarray = field(repr=False)
    y_hat_b: np.ndarray = field(repr=False)

    def metrics(self, fit_seconds=None):
        return {
            "rmse_delta": self.rmse_delta,
            "rmse_primal_a": self.rmse_primal_a,
            "rmse_primal_b": self.rmse_primal_b,
            "n_c": self.n_c,
            "fit_seconds": fit_seconds,
            "per_step_rmse_delta": self.per_step_delta.tolist(),
            "per_step_rmse_primal_a": self.per_step_primal_a.tolist(),
            "per_step_rmse_primal_b": self.per_step_primal_b.tolist(),
            "metric": "mean over query windows of the per-window RMSE",
        }

    def plot_rows(self):
        """``window, step, output, dy_true, dy_hat, y_true, y_hat_a, y_hat_b``."""
        L, n_y, Q = self.dy_true.shape
        for q in range(Q):
            for t in range(L):
                for o in range(n_y):
                    yield (q, t + 1, o + 1, self.dy_true[t, o, q],
                           self.dy_hat[t, o, q], self.y_true[t, o, q],
                           self.y_hat_a[t, o, q], self.y_hat_b[t, o, q])


def model_predict(model, traj):
    """Predictions on every window of ``traj`` with the true scheduling.

    Returns ``(dy_hat, y_hat)``, arrays of shape ``(L*n_y, Q)``; ``y_hat``
    is ``None`` unless the model predicts primal outputs directly.
    """
    d = model.dims
    dims = Dims(n_u=d.n_u, n_y=d.n_y, n_a=d.n_a, n_b=d.n_b, ell=d.ell,
                L=d.L, N=traj.length - 1)
    if traj.n_u != d.n_u or traj.n_y != d.n_y:
        raise InvalidInputError("trajectory dimensions do not match the model")
    data = build_data_matrices(traj, dims)
    if isinstance(model, FittedPredictor):
        return (predict_columns(model, data.X,
                                windows_from_hankel(data.W_L, d.L)), None), data
    if isinstance(model, UnstructuredPredictor):
        if model.variant == VELOCITY:
            Z, _ = unstructured_features(data, dims, VELOCITY)
            return (model.predict_columns(Z), None), data
        y_hat = model.predict_columns(primal_regressors(traj, dims))
        return (None, y_hat), data
    raise InvalidInputError(f"unsupported model type {type(model).__name__}")


def evaluate(model, traj):
    """Δ-prediction and primal-reconstruction errors on ``traj``."""
    (dy_hat, y_hat), data = model_predict(model, traj)
    d = model.dims
    L, n_y = d.L, d.n_y
    Q = data.dims.N_c
    dy_true = np.asarray(data.Y_L.entries).reshape(L, n_y, Q)
    y_true = np.asarray(data.Ybar_L.entries).reshape(L, n_y, Q)
    # y(0) of window i sits at primal index i + ell
    y0 = np.asarray(traj.y[d.ell:d.ell + Q]).T[None]          # (1, n_y, Q)
    y_prev_true = np.concatenate([y0, y_true[:-1]], axis=0)
    if dy_hat is not None:
        dy_hat = dy_hat.reshape(L, n_y, Q)
        y_hat_a = y0 + np.cumsum(dy_hat, axis=0)                 # predicted-previous
    else:
        y_hat_a = y_hat.reshape(L, n_y, Q)
        dy_hat = np.diff(np.concatenate([y0, y_hat_a], axis=0), axis=0)
    y_hat_b = dy_hat + y_prev_true                              # true-previous

    def per_step(a, b):
        return np.sqrt(np.mean((a - b) ** 2, axis=(1, 2)))

    flat = lambda a: a.reshape(L * n_y, Q)  # noqa: E731
    return EvalResult(
        rmse_delta=column_rmse(flat(dy_hat), flat(dy_true)),
        rmse_primal_a=column_rmse(flat(y_hat_a), flat(y_true)),
        rmse_primal_b=column_rmse(flat(y_hat_b), flat(y_true)),
        n_c=Q,
        per_step_delta=per_step(dy_hat, dy_true),
        per_step_primal_a=per_step(y_hat_a, y_true),
        per_step_primal_b=per_step(y_hat_b, y_true),
        dy_true=dy_true, dy_hat=dy_hat, y_true=y_true, y_hat_a=y_hat_a,
        y_hat_b=y_hat_b,
    )


@dataclass(frozen=True)
class BenchmarkRow:
    seed: int
    structured_sigma: float
    structured_gamma: float
    structured_rmse: float
    unstructured_sigma: float
    unstructured_gamma: float
    unstructured_rmse: float
    structured_per_step: tuple = ()
    unstructured_per_step: tuple = ()


def run_benchmark(cfg, seeds, use_grid=True, gram_sink=None):
    """Structured vs unstructured velocity-form predictor on fresh test data.

    For each seed: noisy training data from ``seed``, a noiseless test
    trajectory from ``seed + test_seed_offset``, hyper-parameters from the
    grid search (or the documented defaults when ``use_grid`` is false).
    ``gram_sink``, if a list, receives ``(label, G, gamma)`` for each final
    Gram ``G`` (without the ridge term).
    """
    system = make_system(cfg)
    rows = []
    for s in seeds:
        train, _ = generate(cfg, s, system=system)
        test = held_out_trajectory(cfg, s, system=system)
        out = {}
        for mode, default in ((STRUCTURED, DEFAULT_STRUCTURED),
                              (UNSTRUCTURED_VELOCITY, DEFAULT_UNSTRUCTURED)):
            if use_grid:
                c = replace(cfg, mode=mode, sigma=GRID, gamma=GRID, seed=s)
            else:
                c = replace(cfg, mode=mode, sigma=default[0], gamma=default[1],
                            seed=s)
            found = []
            model, _ = fit_from_config(c, train, system, grid_result_out=found)
            sg = found[0].best if found else default
            if gram_sink is not None and model.gram is not None:
                gram_sink.append((f"{mode} seed {s}", model.gram, model.gamma))
            ev = evaluate(model, test)
            out[mode] = (sg, ev)
        (ss, es), (su, eu) = out[STRUCTURED], out[UNSTRUCTURED_VELOCITY]
        row = BenchmarkRow(s, ss[0], ss[1], es.rmse_delta, su[0], su[1],
                           eu.rmse_delta, tuple(es.per_step_delta),
                           tuple(eu.per_step_delta))
        log.info("seed %d: structured %.4f (sigma %.3g gamma %.3g) | "
                 "unstructured %.4f (sigma %.3g gamma %.3g)", s,
                 row.structured_rmse, ss[0], ss[1], row.unstructured_rmse,
                 su[0], su[1])
        rows.append(row)
    return rows
