"""LPV embedding of the velocity form and its Hankel-based representation.

For a shifted structure with known basis, each coefficient of lag ``i``
is affine in ``p(k-i)``. Lifting the signals with ``x^p(k) = p(k) ⊗ x(k)``
makes the relation LTI in ``(Δu, Δy, Δu^p, Δy^p)``, so a horizon-``L``
trajectory is consistent with the data when some ``g`` solves

    [ H_L(Δu)                  ]       [ Δu ]
    [ H_L(Δy)                  ]  g =  [ Δy ]
    [ H_L(Δu^p) - P H_L(Δu)    ]       [ 0  ]
    [ H_L(Δy^p) - P H_L(Δy)    ]       [ 0  ]

with ``P = blkdiag(p(1) ⊗ I, ..., p(L) ⊗ I)`` built from the query.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_samples, frozen
from .exceptions import InvalidInputError
from .signals import SchedulingSequence, hankel

__all__ = [
    "SchedulingTrajectory", "embed_scheduling", "shifted_scheduling",
    "lift", "LPVRepresentation", "lpv_hankel_representation",
    "MembershipResult", "RANK_RTOL",
]

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class SchedulingTrajectory:
    """Scheduling samples ``p(k) = psi(w_k)`` for ``k = start_index, ...``."""

    p: np.ndarray
    start_index: int = 0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 2:
            raise InvalidInputError("p must have shape (T, n_p)")
        object.__setattr__(self, "p", frozen(p))

    @property
    def n_p(self):
        return self.p.shape[1]

    @property
    def length(self):
        return self.p.shape[0]


def embed_scheduling(w_seq, basis):
    """Evaluate the basis along a scheduling sequence."""
    W = w_seq.w if isinstance(w_seq, SchedulingSequence) else as_samples(w_seq)
    start = getattr(w_seq, "start_index", 0)
    return SchedulingTrajectory(basis.evaluate_many(W), start)


def shifted_scheduling(traj):
    """Per-lag windows ``col(y(k), y(k-1), u(k), u(k-1))`` for ``k >= 1``.

    These are the arguments of the coefficient functions of a shifted
    structure (lag ``i`` reads the window at ``k - i``).
    """
    w = np.hstack([traj.y[1:], traj.y[:-1], traj.u[1:], traj.u[:-1]])
    return SchedulingSequence(w, traj.start_index + 1)


def lift(p, x):
    """Row-wise ``p(k) ⊗ x(k)``."""
    p = np.asarray(p, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if p.shape[0] != x.shape[0]:
        raise InvalidInputError("p and x lengths differ")
    return (p[:, :, None] * x[:, None, :]).reshape(p.shape[0], -1)


def _scheduling_block(p_query, n):
    # blkdiag(p(1) ⊗ I_n, ..., p(L) ⊗ I_n)
    L, n_p = p_query.shape
    out = np.zeros((L * n_p * n, L * n))
    eye = np.eye(n)
    for t in range(L):
        out[t * n_p * n:(t + 1) * n_p * n, t * n:(t + 1) * n] = \
            np.kron(p_query[t][:, None], eye)
    return out


@dataclass(frozen=True)
class MembershipResult:
    residual: float
    tolerance: float
    rank: int
    n_rows: int

    @property
    def member(self):
        return self.residual <= self.tolerance


@dataclass(frozen=True)
class LPVRepresentation:
    """The four Hankel blocks of the lifted data; the query enters via ``P``."""

    L: int
    H_du: np.ndarray = field(repr=False)
    H_dy: np.ndarray = field(repr=False)
    H_dup: np.ndarray = field(repr=False)
    H_dyp: np.ndarray = field(repr=False)
    n_u: int = 1
    n_y: int = 1
    n_p: int = 0

    @property
    def width(self):
        return self.H_du.shape[1]

    def matrix(self, p_query):
        """Stacked representation matrix for the query scheduling ``p_[1,L]``."""
        p_query = as_samples(p_query, name="p_query") if self.n_p else \
            np.zeros((self.L, 0))
        if p_query.shape != (self.L, self.n_p):
            raise InvalidInputError(
                f"p_query must have shape ({self.L}, {self.n_p})")
        Pu = _scheduling_block(p_query, self.n_u)
        Py = _scheduling_block(p_query, self.n_y)
        return np.vstack([self.H_du, self.H_dy,
                          self.H_dup - Pu @ self.H_du,
                          self.H_dyp - Py @ self.H_dy])

    def rhs(self, du, dy):
        du = as_samples(du, dim=self.n_u, name="du")
        dy = as_samples(dy, dim=self.n_y, name="dy")
        if du.shape[0] != self.L or dy.shape[0] != self.L:
            raise InvalidInputError(f"query must have L={self.L} samples")
        zeros = np.zeros(self.L * self.n_p * (self.n_u + self.n_y))
        return np.concatenate([du.ravel(), dy.ravel(), zeros])

    def membership(self, du, dy, p_query, rtol=1e-6):
        """Least-squares consistency test of a query trajectory.

        The query is accepted when the residual norm is at most
        ``rtol * (1 + ||query||)``.
        """
        H = self.matrix(p_query)
        b = self.rhs(du, dy)
        g, _, rank, sv = np.linalg.lstsq(H, b, rcond=None)
        res = float(np.linalg.norm(H @ g - b))
        tol = rtol * (1.0 + float(np.linalg.norm(b)))
        num_rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv.size else 0
        return MembershipResult(res, tol, num_rank, H.shape[0])

    def solve(self, du, dy, p_query):
        """Least-squares ``g`` for a query."""
        H = self.matrix(p_query)
        return np.linalg.lstsq(H, self.rhs(du, dy), rcond=None)[0]


def lpv_hankel_representation(ddelta, p, L, dims=None):
    """Hankel blocks from Δ-data and the aligned scheduling trajectory.

    Samples are aligned on absolute time; only the overlap of ``ddelta``
    and ``p`` is used.
    """
    L = int(L)
    if L < 1:
        raise InvalidInputError("L must be >= 1")
    start = max(ddelta.start_index, p.start_index)
    stop = min(ddelta.start_index + ddelta.length, p.start_index + p.length)
    if stop - start < L:
        raise InvalidInputError(
            f"overlap of {stop - start} samples is shorter than L={L}")
    du = ddelta.du[start - ddelta.start_index:stop - ddelta.start_index]
    dy = ddelta.dy[start - ddelta.start_index:stop - ddelta.start_index]
    pp = p.p[start - p.start_index:stop - p.start_index]
    if dims is not None and (dims.n_u != du.shape[1] or dims.n_y != dy.shape[1]):
        raise InvalidInputError("data dimensions do not match dims")
    blocks = [hankel(du, L).entries, hankel(dy, L).entries]
    if pp.shape[1]:
        blocks += [hankel(lift(pp, du), L).entries, hankel(lift(pp, dy), L).entries]
    else:
        blocks += [np.zeros((0, blocks[0].shape[1]))] * 2
    return LPVRepresentation(L, *blocks, n_u=du.shape[1], n_y=dy.shape[1],
                             n_p=pp.shape[1])
