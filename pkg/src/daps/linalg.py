"""Dense matrix primitives, Stiefel-manifold utilities, and residual metrics.

All matrices are numpy float64 arrays stored in row-major (C) order. An
n-by-p matrix with orthonormal columns is wrapped in :class:`StiefelPoint`,
which validates the orthonormality invariant at construction. Subspace
distances and stationarity residuals are computed from n-by-p factors only;
no n-by-n matrix is ever formed.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    NonFiniteMatrix,
    OrthogonalityError,
    RankDeficient,
)

# Orthonormality defect allowed per subspace dimension.
ORTH_TOL = 1e-12

# Relative magnitude below which an R-factor diagonal signals rank loss.
RANK_TOL = 1e-12


def ensure_finite(a, name="matrix"):
    """Return ``a`` as a float64 array, rejecting NaN/Inf entries."""
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NonFiniteMatrix(f"{name} contains NaN or Inf entries")
    return a


class StiefelPoint:
    """An n-by-p matrix with orthonormal columns.

    The wrapped ``basis`` array is treated as read-only after construction;
    every operation in this package returns a new point instead of mutating
    an existing one, so instances are safe to share across worker threads.
    """

    __slots__ = ("basis",)

    def __init__(self, basis):
        basis = np.ascontiguousarray(basis, dtype=np.float64)
        if basis.ndim != 2:
            raise DimensionMismatch("a Stiefel point must be a 2-d matrix")
        n, p = basis.shape
        if p > n:
            raise DimensionMismatch(f"subspace dimension {p} exceeds ambient dimension {n}")
        defect = np.linalg.norm(basis.T @ basis - np.eye(p))
        if defect > ORTH_TOL * p:
            raise OrthogonalityError(
                f"columns are not orthonormal (defect {defect:.3e} > {ORTH_TOL * p:.3e})"
            )
        self.basis = basis

    @property
    def n(self):
        return self.basis.shape[0]

    @property
    def p(self):
        return self.basis.shape[1]

    def __repr__(self):
        return f"StiefelPoint(n={self.n}, p={self.p})"


@dataclass(frozen=True)
class ProjectionMetrics:
    """Distance between two subspaces and their smallest principal cosine."""

    distance: float
    min_principal_cosine: float


def orthonormalize(m):
    """Orthonormal basis for the range of a full-column-rank matrix.

    Uses Householder QR; the result is sign-canonicalized so that the
    R factor has a nonnegative diagonal, which makes the output unique
    and reproducible.

    Raises
    ------
    RankDeficient
        If any R-factor diagonal magnitude falls below ``RANK_TOL`` times
        the Frobenius norm of the input.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or m.shape[0] < m.shape[1]:
        raise DimensionMismatch(f"cannot orthonormalize a {m.shape} matrix")
    q, r = np.linalg.qr(m)
    diag = np.diag(r)
    scale = np.linalg.norm(m)
    if scale == 0.0 or np.any(np.abs(diag) < RANK_TOL * scale):
        raise RankDeficient("input matrix is numerically rank deficient")
    signs = np.sign(diag)
    signs[signs == 0] = 1.0
    return StiefelPoint(q * signs)


def subspace_distance(xb, yb):
    """Frobenius distance between the projectors of two orthonormal bases.

    Evaluates ||X X' - Y Y'||_F through the identity
    ||X X' - Y Y'||_F^2 = 2 ||X - Y (Y'X)||_F^2, which needs only n-by-p
    intermediates and stays accurate when the two ranges nearly coincide.
    """
    residual = xb - yb @ (yb.T @ xb)
    return math.sqrt(2.0) * float(np.linalg.norm(residual))


def projection_distance(x, y):
    """Projection metrics between two Stiefel points of identical shape."""
    if x.n != y.n or x.p != y.p:
        raise DimensionMismatch(
            f"cannot compare subspaces of shapes ({x.n},{x.p}) and ({y.n},{y.p})"
        )
    cosines = np.linalg.svd(x.basis.T @ y.basis, compute_uv=False)
    smallest = float(np.clip(cosines[-1], 0.0, 1.0))
    return ProjectionMetrics(subspace_distance(x.basis, y.basis), smallest)


class GramOperator:
    """Matrix-free access to A A' for a dense n-by-m block A.

    ``apply`` evaluates Y -> A (A'Y) in O(n m p) work. ``frob_sq`` caches
    ||A||_F^2 = tr(A A'), the scaling used by the relative stationarity
    residual.
    """

    def __init__(self, a, name="data block"):
        self.a = ensure_finite(a, name)
        if self.a.ndim != 2:
            raise DimensionMismatch(f"{name} must be a 2-d matrix")
        self.dim = self.a.shape[0]
        self.frob_sq = float(np.sum(self.a * self.a))

    def apply(self, y):
        if y.shape[0] != self.dim:
            raise DimensionMismatch(
                f"operand has {y.shape[0]} rows, operator dimension is {self.dim}"
            )
        return self.a @ (self.a.T @ y)


def trace_objective(apply_gram, x):
    """Block trace objective -0.5 tr(X' A A' X) evaluated through an operator."""
    b = apply_gram(x.basis)
    if b.shape != x.basis.shape:
        raise DimensionMismatch("operator output shape does not match input")
    return -0.5 * float(np.sum(x.basis * b))


def kkt_residual(gram, z):
    """Raw and scaled first-order stationarity residual at ``z``.

    Returns ``(raw, scaled)`` where raw = ||(I - Z Z') A A' Z||_F and
    scaled = raw / ||A||_F^2, computed without forming any n-by-n matrix.
    """
    if gram.dim != z.n:
        raise DimensionMismatch(f"operator dimension {gram.dim} does not match n={z.n}")
    b = gram.apply(z.basis)
    raw = float(np.linalg.norm(b - z.basis @ (z.basis.T @ b)))
    scaled = raw / gram.frob_sq if gram.frob_sq > 0 else 0.0
    return raw, scaled


def power_norm_estimate(apply_fn, dim, iters, rng):
    """Estimate the largest eigenvalue magnitude of a symmetric operator.

    Runs ``iters`` power-iteration steps from a random start and returns the
    final Rayleigh quotient magnitude. Used for penalty initialization and
    default step sizes; a handful of steps is sufficient for those purposes.
    """
    v = rng.uniform(-1.0, 1.0, size=(dim, 1))
    nv = np.linalg.norm(v)
    if nv == 0.0:
        v[0, 0] = 1.0
        nv = 1.0
    v /= nv
    rayleigh = 0.0
    for _ in range(iters):
        w = apply_fn(v)
        rayleigh = abs(float(np.sum(v * w)))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
    return rayleigh
