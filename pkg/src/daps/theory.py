"""Convergence-theory constants and runtime monitors.

The convergence analysis of the consensus solver holds under two parameter
assumptions: the residual-contraction constants delta_i must stay below
sigma_lower / (2 sqrt(rho d)), where rho is the largest penalty ratio and
sigma_lower = sqrt(1 - 1/(2 rho d)), and each penalty must satisfy
beta_i >= omega_i ||A||_F^2 with the explicit five-term constant

    omega_i = max( c1',
                   12 rho d sqrt(p) / (c1 sigma_lower^2),
                   4 sqrt(2) (1 + sqrt(2 rho d)) / (sigma_lower - 2 sqrt(rho d) delta_i),
                   16 rho d sqrt(p),
                   4 (1 + sqrt(2 rho d)) / (c1 sigma_lower^2 rho d) ).

Theory mode pins every beta_i exactly at that floor (the largest steps the
assumption allows, keeping desk-scale runs observable) and freezes them.
The monitors then check the observable consequences on recorded runs: the
augmented Lagrangian is monotonically nonincreasing, every squared
projection distance stays below 1/(rho d), and the per-iteration quantity
v_k = ||(I - ZZ') A A' Z||_F^2 + (1/d) sum_i d_i^2 admits a bounded
complexity product N * min_{k<N} v_k. The proof-internal constants of the
descent rate are not evaluated; only the observable inequalities are.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DeltaOutOfRange, InvalidConfig

DESCENT_SLACK = 1e-10
DISTANCE_SLACK = 1e-10


@dataclass(frozen=True)
class AssumptionConstants:
    rho: float
    sigma_lower: float
    delta_bound: float
    omegas: list
    beta_floors: list
    a_frob_sq: float


@dataclass
class DescentReport:
    enabled: bool
    note: str
    violations: list
    max_increase: float
    assumption_satisfied: bool = True


@dataclass
class DistanceReport:
    enabled: bool
    note: str
    bound: float
    violations: list
    max_squared_distance: float
    assumption_satisfied: bool = True


@dataclass
class ComplexityMonitor:
    """Per-iteration complexity quantities of one recorded run."""

    v: list
    running_min: list  # min_{k<N} v_k for N = 1..len(v)
    products: list  # N * running_min[N-1]
    c_estimate: float  # product at the full run length
    sup_product: float
    envelope_nonincreasing: bool


def assumption_constants(betas, d, p, a_frob_sq, cc):
    """Evaluate the theory constants for given penalties and parameters.

    Raises :class:`DeltaOutOfRange` when delta_i reaches the admissible
    bound, which would make the third omega term's denominator vanish.
    """
    betas = [float(b) for b in betas]
    if len(betas) != d or any(b <= 0 for b in betas):
        raise InvalidConfig("need d positive penalties")
    rho = max(bi / bj for bi in betas for bj in betas)
    sigma_lower = math.sqrt(1.0 - 1.0 / (2.0 * rho * d))
    delta_bound = sigma_lower / (2.0 * math.sqrt(rho * d))
    if cc.delta_i >= delta_bound:
        raise DeltaOutOfRange(
            f"delta_i={cc.delta_i} must stay below {delta_bound:.6g} for these penalties"
        )
    omega = max(
        cc.c1_prime,
        12.0 * rho * d * math.sqrt(p) / (cc.c1 * sigma_lower**2),
        4.0 * math.sqrt(2.0) * (1.0 + math.sqrt(2.0 * rho * d))
        / (sigma_lower - 2.0 * math.sqrt(rho * d) * cc.delta_i),
        16.0 * rho * d * math.sqrt(p),
        4.0 * (1.0 + math.sqrt(2.0 * rho * d)) / (cc.c1 * sigma_lower**2 * rho * d),
    )
    omegas = [omega] * d  # identical delta_i across nodes gives identical omegas
    return AssumptionConstants(
        rho=rho,
        sigma_lower=sigma_lower,
        delta_bound=delta_bound,
        omegas=omegas,
        beta_floors=[w * a_frob_sq for w in omegas],
        a_frob_sq=a_frob_sq,
    )


def theory_config(blocks, cfg):
    """Derive a frozen-penalty configuration satisfying the assumptions.

    Equal penalties across nodes give rho = 1, which makes the constants
    self-consistent. delta_i is pinned at half its admissible bound unless
    the configured value already satisfies it. The consensus update is
    switched to subspace iteration, whose step never increases the global
    subproblem value on the positive definite operators theory mode
    produces. Returns ``(config, constants)``.
    """
    d = len(blocks)
    a_frob_sq = float(sum(np.sum(b * b) for b in blocks))
    rho = 1.0
    sigma_lower = math.sqrt(1.0 - 1.0 / (2.0 * rho * d))
    delta_bound = sigma_lower / (2.0 * math.sqrt(rho * d))
    cc = cfg.condition_constants
    if cc.delta_i >= delta_bound:
        cc = replace(cc, delta_i=0.5 * delta_bound)
    constants = assumption_constants([1.0] * d, d, cfg.p, a_frob_sq, cc)
    theory_cfg = replace(
        cfg,
        theory_mode=True,
        z_solver="ssi",
        condition_constants=cc,
        fixed_betas=tuple(constants.beta_floors),
    )
    return theory_cfg, constants


def _betas_frozen(records):
    first = records[0].betas
    return all(rec.betas == first for rec in records)


def descent_monitor(records):
    """Check monotone descent of the recorded augmented Lagrangian.

    Valid only for frozen penalties: under adaptation the Lagrangian
    values of consecutive iterations are not comparable, so the monitor
    reports itself disabled with an explanatory note.
    """
    if not records:
        raise InvalidConfig("need at least one record")
    if not _betas_frozen(records):
        return DescentReport(
            enabled=False,
            note=(
                "penalties changed during the run (adaptive mode); Lagrangian "
                "values are not comparable across penalty changes"
            ),
            violations=[],
            max_increase=math.nan,
        )
    l0 = records[0].aug_lagrangian
    slack = DESCENT_SLACK * (1.0 + abs(l0))
    violations = []
    max_increase = -math.inf
    for prev, cur in zip(records[:-1], records[1:]):
        increase = cur.aug_lagrangian - prev.aug_lagrangian
        max_increase = max(max_increase, increase)
        if increase > slack:
            violations.append(
                {"k": cur.k, "previous": prev.aug_lagrangian, "current": cur.aug_lagrangian,
                 "increase": increase}
            )
    return DescentReport(
        enabled=True,
        note="" if not violations else "descent violated; see violations",
        violations=violations,
        max_increase=max_increase,
    )


def distance_bound_check(records, constants=None):
    """Check d_i^2 <= 1/(rho d) along the run.

    When ``constants`` is omitted, rho is taken from the recorded
    penalties. If the recorded penalties fall below the assumption floor
    the report is marked "assumption unsatisfied" and violations are
    expected rather than alarming.
    """
    if not records:
        raise InvalidConfig("need at least one record")
    d = len(records[0].betas)
    betas = records[0].betas
    rho = constants.rho if constants is not None else max(bi / bj for bi in betas for bj in betas)
    bound = 1.0 / (rho * d)
    assumption_ok = True
    note = ""
    if constants is not None:
        assumption_ok = all(
            b >= floor * (1.0 - 1e-12) for b, floor in zip(betas, constants.beta_floors)
        )
        if not assumption_ok:
            note = "assumption unsatisfied: recorded penalties fall below the theory floor"
    violations = []
    max_sq = 0.0
    for rec in records:
        for i, dist in enumerate(rec.distances):
            sq = dist * dist
            max_sq = max(max_sq, sq)
            if sq > bound + DISTANCE_SLACK:
                violations.append({"k": rec.k, "node": i, "squared_distance": sq})
    return DistanceReport(
        enabled=True,
        note=note,
        bound=bound,
        violations=violations,
        max_squared_distance=max_sq,
        assumption_satisfied=assumption_ok,
    )


def complexity_envelope(records):
    """Per-iteration complexity quantities and the running-min envelope.

    v_k combines the squared stationarity residual with the mean squared
    projection distance. The running minimum of v is nonincreasing by
    construction; the product N * min_{k<N} v_k is the implied constant of
    the sublinear complexity bound and is reported for every N together
    with its supremum over the run.
    """
    if not records:
        raise InvalidConfig("need at least one record")
    v = []
    for rec in records:
        mean_sq = float(np.mean([dist * dist for dist in rec.distances]))
        v.append(rec.kkt_raw**2 + mean_sq)
    running_min = []
    best = math.inf
    for value in v:
        best = min(best, value)
        running_min.append(best)
    products = [(idx + 1) * m for idx, m in enumerate(running_min)]
    nonincreasing = all(b <= a + 1e-300 for a, b in zip(running_min[:-1], running_min[1:]))
    return ComplexityMonitor(
        v=v,
        running_min=running_min,
        products=products,
        c_estimate=products[-1],
        sup_product=max(products),
        envelope_nonincreasing=nonincreasing,
    )


def theory_report(records, constants=None):
    """Bundle all three monitors into one JSON-friendly payload."""
    descent = descent_monitor(records)
    distance = distance_bound_check(records, constants)
    envelope = complexity_envelope(records)
    return {
        "descent": {
            "enabled": descent.enabled,
            "note": descent.note,
            "violations": descent.violations,
            "max_increase": descent.max_increase,
        },
        "distance_bound": {
            "enabled": distance.enabled,
            "note": distance.note,
            "bound": distance.bound,
            "violations": distance.violations,
            "max_squared_distance": distance.max_squared_distance,
            "assumption_satisfied": distance.assumption_satisfied,
        },
        "complexity": {
            "v_first": envelope.v[0],
            "v_last": envelope.v[-1],
            "c_estimate": envelope.c_estimate,
            "sup_product": envelope.sup_product,
            "envelope_nonincreasing": envelope.envelope_nonincreasing,
            "min_final": envelope.running_min[-1],
        },
        "constants": None
        if constants is None
        else {
            "rho": constants.rho,
            "sigma_lower": constants.sigma_lower,
            "delta_bound": constants.delta_bound,
            "omegas": constants.omegas,
            "beta_floors": constants.beta_floors,
            "a_frob_sq": constants.a_frob_sq,
        },
    }
