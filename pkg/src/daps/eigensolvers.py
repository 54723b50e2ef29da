"""Iterative solvers for the symmetric eigenproblems used as subproblems.

Every solver sees its matrix only through products Y -> B Y, wrapped in
:class:`SymmetricOperator`. Two steps are provided:

* ``ssi_step``: one round of simultaneous subspace iteration,
  orth(B X).
* ``slrpgn_step``: the projected Gauss-Newton update
  X + tau * (sum_i S_i(X) - X/2) with
  S_i(X) = (I - X (X'X)^-1 X'/2) B_i X (X'X)^-1,
  which keeps X full rank but not orthonormal, so orthonormalization is
  applied only where a Stiefel point is required.

``inner_solve`` drives warm-started slrpgn steps until the relative change
of the iterate Frobenius norm falls below ``eps_x``, then orthonormalizes.
``verify_conditions`` measures the inexact-solution acceptance conditions
(sufficient function decrease, residual contraction) used as runtime
diagnostics by the consensus solver.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SingularGram
from .linalg import (
    StiefelPoint,
    orthonormalize,
    power_norm_estimate,
)

_GRAM_COND_TOL = 1e-14


@dataclass(frozen=True)
class SymmetricOperator:
    """Operator form of a symmetric matrix, Y -> B Y."""

    dim: int
    apply: callable

    @classmethod
    def from_dense(cls, b):
        b = np.asarray(b, dtype=np.float64)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got {b.shape}")
        return cls(b.shape[0], lambda y: b @ y)

    @classmethod
    def from_gram(cls, a):
        """Operator for A A' given the rectangular factor A."""
        a = np.asarray(a, dtype=np.float64)
        return cls(a.shape[0], lambda y: a @ (a.T @ y))

    def scaled(self, alpha):
        base = self.apply
        return SymmetricOperator(self.dim, lambda y: alpha * base(y))

    def symmetry_defect(self, rng, p=2):
        """Relative asymmetry measured on one pair of random probes."""
        x = rng.uniform(-1.0, 1.0, size=(self.dim, p))
        y = rng.uniform(-1.0, 1.0, size=(self.dim, p))
        bx, by = self.apply(x), self.apply(y)
        lhs = float(np.sum(x * by))
        rhs = float(np.sum(bx * y))
        scale = max(abs(lhs), abs(rhs), 1e-300)
        return abs(lhs - rhs) / scale


@dataclass(frozen=True)
class SlrpgnConfig:
    """Step size, iteration cap, and stopping tolerance of the inner solver."""

    tau: float | None = None  # None: 1 / (10-step power estimate of ||B||_2)
    max_inner: int = 50
    eps_x: float = 1e-2

    def __post_init__(self):
        if self.tau is not None and not self.tau > 0:
            raise ValueError(f"step size must be positive, got {self.tau}")
        if not self.eps_x >= 0:
            raise ValueError(f"inner tolerance must be nonnegative, got {self.eps_x}")


@dataclass(frozen=True)
class ConditionConstants:
    """Constants of the inexact-solution acceptance conditions.

    ``c2`` is intentionally optional: the decrease constant of the global
    subproblem depends on the penalty parameters, so the realized value is
    measured and logged rather than prescribed.
    """

    c1: float = 1e-3
    c1_prime: float = 1.0
    delta_i: float = 0.5
    c2: float | None = None

    def __post_init__(self):
        if not self.c1 > 0 or not self.c1_prime > 0:
            raise ValueError("c1 and c1_prime must be positive")
        if not 0.0 <= self.delta_i < 1.0:
            raise ValueError(f"delta_i must lie in [0, 1), got {self.delta_i}")
        if self.c2 is not None and not self.c2 > 0:
            raise ValueError("c2 must be positive when given")


@dataclass(frozen=True)
class InnerSolveResult:
    point: StiefelPoint
    iterations: int
    budget_exhausted: bool


@dataclass(frozen=True)
class ConditionReport:
    """Measured sides of one acceptance condition."""

    which: str
    satisfied: bool
    lhs: float
    rhs: float
    residual_old: float
    residual_new: float | None = None
    ratio: float | None = None
    measured_c2: float | None = None


def _as_operator_list(ops):
    if isinstance(ops, SymmetricOperator):
        return [ops]
    ops = list(ops)
    if not ops:
        raise DimensionMismatch("need at least one operator block")
    if len({op.dim for op in ops}) != 1:
        raise DimensionMismatch("operator blocks disagree on dimension")
    return ops


def resolve_tau(ops, cfg, rng=None):
    """Step size from ``cfg`` or the default 1 / (power estimate of ||B||_2)."""
    if cfg.tau is not None:
        return cfg.tau
    ops = _as_operator_list(ops)
    if rng is None:
        rng = np.random.default_rng(0)
    est = power_norm_estimate(
        lambda v: sum(op.apply(v) for op in ops), ops[0].dim, iters=10, rng=rng
    )
    return 1.0 / max(est, 1e-300)


def ssi_step(b, x):
    """One simultaneous-subspace-iteration step, orth(B X)."""
    if b.dim != x.n:
        raise DimensionMismatch(f"operator dimension {b.dim} does not match n={x.n}")
    return orthonormalize(b.apply(x.basis))


def slrpgn_step(ops, x, cfg, tau=None, rng=None):
    """One projected Gauss-Newton update on a full-rank n-by-p iterate.

    ``ops`` may be a single operator or a list of blocks whose shared
    products are summed; the summation order is the list order. No
    orthonormalization is applied inside the step.
    """
    ops = _as_operator_list(ops)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != ops[0].dim:
        raise DimensionMismatch(f"iterate shape {x.shape} does not match operator")
    gram = x.T @ x
    eigs = np.linalg.eigvalsh(gram)
    if eigs[0] <= _GRAM_COND_TOL * max(eigs[-1], 1e-300):
        raise SingularGram("X'X is numerically singular")
    if tau is None:
        tau = resolve_tau(ops, cfg, rng)
    t = ops[0].apply(x)
    for op in ops[1:]:
        t = t + op.apply(x)
    r = np.linalg.solve(gram, t.T).T  # (B X) (X'X)^-1
    s = r - 0.5 * x @ np.linalg.solve(gram, x.T @ r)
    return x + tau * (s - 0.5 * x)


def inner_solve(b, x0, cfg, tau=None, rng=None):
    """Approximately solve max tr(X' B X) over the Stiefel manifold.

    Runs warm-started slrpgn steps from ``x0`` and stops as soon as the
    norms of two consecutive iterates agree to relative tolerance
    ``eps_x``. The final iterate is orthonormalized. If the tolerance is
    never met within ``max_inner`` steps the best iterate is still
    returned, flagged as budget-exhausted.
    """
    if b.dim != x0.n:
        raise DimensionMismatch(f"operator dimension {b.dim} does not match n={x0.n}")
    if tau is None:
        tau = resolve_tau(b, cfg, rng)
    x = x0.basis
    prev_norm = float(np.linalg.norm(x))
    for j in range(1, cfg.max_inner + 1):
        x = slrpgn_step(b, x, cfg, tau=tau)
        cur_norm = float(np.linalg.norm(x))
        if abs(cur_norm - prev_norm) <= cfg.eps_x * cur_norm:
            return InnerSolveResult(orthonormalize(x), j, False)
        prev_norm = cur_norm
    return InnerSolveResult(orthonormalize(x), cfg.max_inner, True)


def _value_and_residual(b, point):
    """Objective -0.5 tr(X'BX) and residual ||(I - XX') B X||_F at a point."""
    bx = b.apply(point.basis)
    value = -0.5 * float(np.sum(point.basis * bx))
    residual = float(np.linalg.norm(bx - point.basis @ (point.basis.T @ bx)))
    return value, residual


def verify_conditions(b, x_old, x_new, beta, norm_a2_sq, cc, which):
    """Measure one inexact-solution acceptance condition.

    which = "X1": function decrease of the local subproblem,
        h(X_old) - h(X_new) >= c1 / (c1' ||A_i||_2^2 + beta) * r_old^2.
    which = "X2": residual contraction, r_new <= delta_i * r_old.
    which = "Z":  function decrease of the global subproblem,
        q(Z_old) - q(Z_new) >= c2 * r_old^2, with the realized constant
        reported in ``measured_c2``.

    Both sides are returned so callers can log the measured quantities.
    """
    if x_old.n != x_new.n or x_old.p != x_new.p:
        raise DimensionMismatch("old and new iterates have different shapes")
    if b.dim != x_old.n:
        raise DimensionMismatch("operator dimension does not match the iterates")
    h_old, res_old = _value_and_residual(b, x_old)
    slack = 1e-12 * (1.0 + abs(h_old))
    if which == "X1":
        h_new, _ = _value_and_residual(b, x_new)
        lhs = h_old - h_new
        rhs = cc.c1 / (cc.c1_prime * norm_a2_sq + beta) * res_old**2
        return ConditionReport("X1", lhs >= rhs - slack, lhs, rhs, res_old)
    if which == "X2":
        _, res_new = _value_and_residual(b, x_new)
        rhs = cc.delta_i * res_old
        ratio = res_new / res_old if res_old > 0 else None
        return ConditionReport(
            "X2", res_new <= rhs + slack, res_new, rhs, res_old, res_new, ratio
        )
    if which == "Z":
        h_new, _ = _value_and_residual(b, x_new)
        lhs = h_old - h_new
        measured = lhs / res_old**2 if res_old > 0 else None
        rhs = (cc.c2 or 0.0) * res_old**2
        return ConditionReport(
            "Z", lhs >= rhs - slack, lhs, rhs, res_old, measured_c2=measured
        )
    raise ValueError(f"unknown condition {which!r}")
