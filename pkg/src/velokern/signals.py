"""Trajectory bookkeeping: difference/sum operators, scheduling vectors,
Hankel matrices and the data matrices used by the predictors.

Conventions
-----------
Every signal is stored as an array of shape ``(T, dim)``, one stacked
sample per time step. Hankel matrices follow the usual layout: column
``j``, block-row ``r`` holds sample ``x(start + j + r)``.

Measured trajectories are indexed from ``k = 0``; their first differences
start at ``k = 1``.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._validation import as_samples, frozen
from .exceptions import DataError, InvalidInputError

__all__ = [
    "Dims", "Trajectory", "DeltaTrajectory", "SchedulingSequence",
    "HankelMatrix", "DataMatrices", "diff_signal", "sum_signal",
    "reconstruct_primal", "build_scheduling", "hankel",
    "build_data_matrices", "primal_regressors", "scheduling_vector",
    "read_trajectory_csv", "write_trajectory_csv",
]


@dataclass(frozen=True)
class Dims:
    """Lag, horizon and size integers with their consistency rules.

    ``n_a`` and ``n_b`` describe the data-generating lags; the data matrices
    use the uniform depth ``ell`` for both inputs and outputs.
    """

    n_u: int
    n_y: int
    n_a: int
    n_b: int
    ell: int
    L: int
    N: int

    def __post_init__(self):
        for name in ("n_u", "n_y", "n_a", "L", "N"):
            if int(getattr(self, name)) < 1:
                raise InvalidInputError(f"{name} must be >= 1")
        if self.n_b < 0:
            raise InvalidInputError("n_b must be >= 0")
        if self.ell < self.n_r:
            raise InvalidInputError(
                f"ell={self.ell} must be >= n_r=max(n_a, n_b)={self.n_r}")
        if self.N_c < 1:
            raise InvalidInputError(
                f"N={self.N} too short for L={self.L}, ell={self.ell} "
                f"(need N >= L + ell)")

    @property
    def n_r(self):
        return max(self.n_a, self.n_b)

    @property
    def N_c(self):
        return self.N - self.L - self.ell + 1

    @property
    def n_w(self):
        """Dimension of one scheduling vector."""
        return (self.ell + 1) * self.n_y + (self.ell + 2) * self.n_u

    @property
    def n_phi(self):
        """Dimension of the initial Δ-regressor ``col(Δy_past, Δu_past)``."""
        return self.ell * (self.n_y + self.n_u)

    @property
    def n_x(self):
        """Dimension of one regressor column ``col(Y_ell, U_ell, U_L)``."""
        return self.n_phi + self.L * self.n_u

    @classmethod
    def for_trajectory(cls, traj, ell, L, n_a=None, n_b=None):
        n_a = ell if n_a is None else n_a
        n_b = ell if n_b is None else n_b
        return cls(n_u=traj.n_u, n_y=traj.n_y, n_a=n_a, n_b=n_b, ell=ell,
                   L=L, N=traj.length - 1)


@dataclass(frozen=True)
class Trajectory:
    """Input/output samples ``(u(k), y(k))`` for ``k = start_index, ...``."""

    u: np.ndarray
    y: np.ndarray
    start_index: int = 0

    def __post_init__(self):
        u = as_samples(self.u, name="u")
        y = as_samples(self.y, name="y")
        if u.shape[0] != y.shape[0]:
            raise InvalidInputError(
                f"u and y lengths differ ({u.shape[0]} vs {y.shape[0]})")
        object.__setattr__(self, "u", frozen(u))
        object.__setattr__(self, "y", frozen(y))

    @property
    def length(self):
        return self.u.shape[0]

    @property
    def n_u(self):
        return self.u.shape[1]

    @property
    def n_y(self):
        return self.y.shape[1]

    def delta(self):
        return DeltaTrajectory(diff_signal(self.u), diff_signal(self.y),
                               self.start_index + 1)


@dataclass(frozen=True)
class DeltaTrajectory:
    du: np.ndarray
    dy: np.ndarray
    start_index: int = 1

    def __post_init__(self):
        du = as_samples(self.du, name="du")
        dy = as_samples(self.dy, name="dy")
        if du.shape[0] != dy.shape[0]:
            raise InvalidInputError("du and dy lengths differ")
        object.__setattr__(self, "du", frozen(du))
        object.__setattr__(self, "dy", frozen(dy))

    @property
    def length(self):
        return self.du.shape[0]


@dataclass(frozen=True)
class SchedulingSequence:
    """Scheduling vectors ``w(k)`` for ``k = start_index, ...``."""

    w: np.ndarray
    start_index: int

    def __post_init__(self):
        object.__setattr__(self, "w", frozen(as_samples(self.w, name="w")))

    @property
    def length(self):
        return self.w.shape[0]

    def at(self, k):
        return self.w[k - self.start_index]


@dataclass(frozen=True)
class HankelMatrix:
    """Block Hankel matrix of ``depth`` block-rows."""

    depth: int
    width: int
    entries: np.ndarray = field(repr=False)

    @property
    def signal_dim(self):
        return self.entries.shape[0] // self.depth

    def block(self, r, j):
        d = self.signal_dim
        return self.entries[r * d:(r + 1) * d, j]

    def column_samples(self, j):
        """Column ``j`` unstacked to shape ``(depth, signal_dim)``."""
        return self.entries[:, j].reshape(self.depth, self.signal_dim)


@dataclass(frozen=True)
class DataMatrices:
    """The Hankel data matrices shared by the structured and baseline fits.

    ``Y_ell, U_ell`` hold the past Δ-samples of every column, ``Y_L, U_L``
    the Δ-samples over the horizon, ``W_L`` the scheduling vectors over the
    horizon and ``Ybar_L`` the primal outputs over the horizon.
    ``w_sequence`` is the scheduling sequence the ``W_L`` columns were cut
    from; kernel tables are built on it once.
    """

    Y_ell: HankelMatrix
    Y_L: HankelMatrix
    U_ell: HankelMatrix
    U_L: HankelMatrix
    W_L: HankelMatrix
    Ybar_L: HankelMatrix
    dims: Dims
    w_sequence: np.ndarray = field(repr=False)

    def __post_init__(self):
        widths = {m.width for m in self.matrices()}
        if widths != {self.dims.N_c}:
            raise InvalidInputError(f"data matrix widths {widths} != N_c")

    def matrices(self):
        return (self.Y_ell, self.Y_L, self.U_ell, self.U_L, self.W_L,
                self.Ybar_L)

    @property
    def X(self):
        """Regressor columns ``col(Y_ell, U_ell, U_L)``, shape ``(n_x, N_c)``."""
        return np.vstack([self.Y_ell.entries, self.U_ell.entries,
                          self.U_L.entries])

    def subset(self, columns):
        """Column subset as plain arrays ``(X, W, Y)``."""
        columns = np.asarray(columns)
        return (self.X[:, columns], self.W_L.entries[:, columns],
                self.Y_L.entries[:, columns])


def diff_signal(x):
    """First difference ``x(k) - x(k-1)``; output is one sample shorter."""
    x = as_samples(x, name="x")
    if x.shape[0] < 2:
        raise InvalidInputError("diff_signal needs at least 2 samples")
    return np.diff(x, axis=0)


def sum_signal(dx, x0):
    """Inverse of :func:`diff_signal` given the first sample ``x0``."""
    dx = as_samples(dx, name="dx")
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if dx.shape[0] and x0.size != dx.shape[1]:
        raise InvalidInputError(
            f"x0 has dimension {x0.size}, increments have {dx.shape[1]}")
    out = np.empty((dx.shape[0] + 1, x0.size))
    out[0] = x0
    out[1:] = x0 + np.cumsum(dx, axis=0)
    return out


PREDICTED_PREVIOUS = "predicted-previous"
TRUE_PREVIOUS = "true-previous"


def reconstruct_primal(dy_hat, y_ref, mode=PREDICTED_PREVIOUS):
    """Rebuild primal outputs from predicted increments.

    Parameters
    ----------
    dy_hat : array, shape (L, n_y)
        Predicted increments for steps ``1..L``.
    y_ref : array
        True outputs starting at step 0. Mode ``"predicted-previous"`` only
        uses ``y_ref[0]`` as anchor and accumulates the predictions; mode
        ``"true-previous"`` adds each increment to the true previous output
        and needs ``y_ref[0..L-1]``.

    Returns
    -------
    array, shape (L, n_y)
        Reconstructed outputs for steps ``1..L``.
    """
    dy_hat = as_samples(dy_hat, name="dy_hat")
    y_ref = as_samples(y_ref, dim=dy_hat.shape[1], name="y_ref")
    L = dy_hat.shape[0]
    if mode == PREDICTED_PREVIOUS:
        if y_ref.shape[0] < 1:
            raise InvalidInputError("y_ref must supply the anchor y(0)")
        return sum_signal(dy_hat, y_ref[0])[1:]
    if mode == TRUE_PREVIOUS:
        if y_ref.shape[0] < L:
            raise InvalidInputError(
                f"mode {mode!r} needs {L} anchor samples, got {y_ref.shape[0]}")
        return dy_hat + y_ref[:L]
    raise InvalidInputError(f"unknown reconstruction mode {mode!r}")


def scheduling_vector(y_lags, u_lags):
    """Stack ``y(k-1..k-ell-1)`` and ``u(k..k-ell-1)`` (newest first)."""
    return np.concatenate([np.ravel(y_lags), np.ravel(u_lags)])


def build_scheduling(traj, dims):
    """Scheduling vectors ``w(k) = col(y(k-1),...,y(k-ell-1), u(k),...,u(k-ell-1))``.

    The sequence starts at the first index where all lags exist,
    ``traj.start_index + ell + 1``.
    """
    ell = dims.ell
    T = traj.length
    if T < ell + 2:
        raise InvalidInputError(
            f"trajectory of length {T} too short for scheduling depth {ell}")
    # windows of length ell+2 over time; reversed so the newest sample leads
    u_win = sliding_window_view(traj.u, ell + 2, axis=0)[:, :, ::-1]
    y_win = sliding_window_view(traj.y[:-1], ell + 1, axis=0)[:, :, ::-1]
    # u_win[m] covers u(m..m+ell+1) -> w(k) with k = m + ell + 1
    n = T - ell - 1
    w = np.concatenate([
        np.transpose(y_win[:n], (0, 2, 1)).reshape(n, -1),
        np.transpose(u_win[:n], (0, 2, 1)).reshape(n, -1),
    ], axis=1)
    return SchedulingSequence(w, traj.start_index + ell + 1)


def hankel(x, depth):
    """Block Hankel matrix of ``depth`` block-rows from the sequence ``x``."""
    x = as_samples(x, name="x")
    depth = int(depth)
    if depth < 1:
        raise InvalidInputError("depth must be >= 1")
    if depth > x.shape[0]:
        raise InvalidInputError(
            f"depth {depth} exceeds sequence length {x.shape[0]}")
    width = x.shape[0] - depth + 1
    win = sliding_window_view(x, depth, axis=0)  # (width, dim, depth)
    entries = np.ascontiguousarray(
        np.transpose(win, (2, 1, 0)).reshape(depth * x.shape[1], width))
    return HankelMatrix(depth, width, frozen(entries))


def build_data_matrices(traj, dims):
    """Assemble the data matrices from a measured trajectory ``k = 0..N``.

    Column ``i`` (0-based) pairs the past increments at ``k = i+1..i+ell``
    with the horizon ``k = i+ell+1..i+ell+L``.
    """
    if traj.length != dims.N + 1:
        raise InvalidInputError(
            f"trajectory has {traj.length} samples, dims expect N+1={dims.N + 1}")
    if traj.n_u != dims.n_u or traj.n_y != dims.n_y:
        raise InvalidInputError("trajectory dimensions do not match dims")
    N, L, ell = dims.N, dims.L, dims.ell
    du = diff_signal(traj.u)   # index m <-> k = m + 1
    dy = diff_signal(traj.y)
    sched = build_scheduling(traj, dims)  # index m <-> k = m + ell + 1
    return DataMatrices(
        Y_ell=hankel(dy[:N - L], ell),
        Y_L=hankel(dy[ell:], L),
        U_ell=hankel(du[:N - L], ell),
        U_L=hankel(du[ell:], L),
        W_L=hankel(sched.w, L),
        Ybar_L=hankel(traj.y[1 + ell:], L),
        dims=dims,
        w_sequence=sched.w,
    )


def primal_regressors(traj, dims):
    """Primal-signal regressors for the unstructured baseline.

    Column ``i`` stacks ``y(i+1..i+ell)`` and ``u(i+1..i+ell+L)``, aligned
    with the columns of :func:`build_data_matrices`.
    """
    N, L, ell = dims.N, dims.L, dims.ell
    Yp = hankel(traj.y[1:N - L + 1], ell)
    Up = hankel(traj.u[1:], ell + L)
    return np.vstack([Yp.entries, Up.entries])


def read_trajectory_csv(path):
    """Read a trajectory CSV with header ``k,u_1..u_nu,y_1..y_ny``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "k":
            raise DataError(f"{path}:1: header must start with 'k'")
        u_cols = [i for i, h in enumerate(header) if h.startswith("u_")]
        y_cols = [i for i, h in enumerate(header) if h.startswith("y_")]
        if not u_cols or not y_cols or len(u_cols) + len(y_cols) + 1 != len(header):
            raise DataError(f"{path}:1: malformed header {header}")
        ks, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            ks.append(int(values[0]))
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    data = np.array(rows)
    if np.any(np.diff(ks) != 1):
        raise DataError(f"{path}: time index k must increase by 1")
    return Trajectory(data[:, u_cols], data[:, y_cols], start_index=ks[0])


def write_trajectory_csv(path, traj):
    header = (["k"] + [f"u_{i + 1}" for i in range(traj.n_u)]
              + [f"y_{i + 1}" for i in range(traj.n_y)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for m in range(traj.length):
            writer.writerow([traj.start_index + m]
                            + [repr(float(v)) for v in traj.u[m]]
                            + [repr(float(v)) for v in traj.y[m]])
