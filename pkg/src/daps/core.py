"""Consensus ADMM solver for distributed dominant SVD.

The data matrix is split column-wise over d nodes. Each node keeps a local
orthonormal basis X_i and the algorithm drives the subspaces spanned by all
X_i and a global consensus basis Z to agree, by alternating:

1. a node-local eigensolve of the subproblem operator
   H_i = A_i A_i' + Lambda_i + beta_i Z Z',
2. the closed-form low-rank multiplier update
   W_i = -(I - X_i X_i') A_i A_i' X_i,  Lambda_i = X_i W_i' + W_i X_i',
3. one eigensolver step on the summed consensus operator
   Q = sum_i (beta_i X_i X_i' - Lambda_i), realized with a single n-by-p
   all-reduce of the local products Q_i Z.

Everything is matrix-free: no n-by-n matrix is formed or stored anywhere.
The only values that cross node boundaries are the consensus basis, the
all-reduce summands Q_i Y, the objective scalars ||A_i'Z||_F^2, and the
p-by-p Gram summands of the final SVD recovery. Per-iteration diagnostics
(stationarity residual, augmented Lagrangian, subspace distances) are
computed by the simulation harness out of band and are not counted as
communication.
"""

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .eigensolvers import (
    ConditionConstants,
    SlrpgnConfig,
    SymmetricOperator,
    inner_solve,
    verify_conditions,
)
from .errors import InvalidConfig, RankDeficient
from .linalg import (
    GramOperator,
    StiefelPoint,
    orthonormalize,
    power_norm_estimate,
    subspace_distance,
)
from .netsim import Fabric, comm_stats, run_nodes

_BETA_POWER_ITERS = 20


@dataclass
class DapsConfig:
    """All parameters of the consensus solver.

    ``fixed_betas`` freezes the penalty parameters (disabling adaptation),
    which is how theory-mode runs pin beta_i at the floor required by the
    convergence analysis. ``beta_measure`` names the point inside an
    iteration at which the projection distance used by the adaptive rule
    is taken; the distance to the freshly updated consensus basis is the
    default.
    """

    p: int
    beta0_coeff: float = 0.15
    theta: float = 0.1
    mu: float = 0.01
    eps_x: float = 1e-2
    rel_tol: float = 1e-10
    max_iter: int = 20000
    z_solver: str = "slrpgn"
    condition_constants: ConditionConstants = field(default_factory=ConditionConstants)
    seed: int = 0
    tau: float | None = None
    tau_z: float | None = None
    max_inner: int = 50
    theory_mode: bool = False
    strict_conditions: bool | None = None  # None: on in theory mode, off otherwise
    fixed_betas: tuple | None = None
    beta_measure: str = "post_global"
    capture_private_history: bool = False

    def __post_init__(self):
        if self.p < 1:
            raise InvalidConfig(f"target rank must be positive, got p={self.p}")
        for name in ("beta0_coeff", "theta", "mu", "eps_x", "rel_tol"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"{name} must be positive")
        if self.max_iter < 1:
            raise InvalidConfig("max_iter must be positive")
        if self.z_solver not in ("slrpgn", "ssi"):
            raise InvalidConfig(f"unknown z solver {self.z_solver!r}")
        if self.beta_measure != "post_global":
            raise InvalidConfig(f"unknown beta measurement point {self.beta_measure!r}")

    @property
    def strict(self):
        return self.theory_mode if self.strict_conditions is None else self.strict_conditions


@dataclass
class NodeState:
    """Private per-node state; never shared between workers."""

    node_id: int
    block: np.ndarray  # A_i, n-by-m_i
    x: StiefelPoint
    w: np.ndarray
    beta: float
    beta_used: float = 0.0  # penalty in effect during the current iteration
    dist: float = 0.0
    beta0: float = 0.0
    a_norm2_sq: float = 0.0  # power-iteration estimate of ||A_i||_2^2
    a_frob_sq: float = 0.0
    inner_iterations: int = 0
    budget_exhausted: bool = False
    x1_ok: bool = True
    x2_ok: bool = True
    dist_history: list = field(default_factory=list)


@dataclass
class IterationRecord:
    """Metrics of one outer iteration (k = 0 is the initial state)."""

    k: int
    objective: float  # -0.5 * sum_i ||A_i' Z||_F^2
    kkt_raw: float
    kkt_scaled: float
    aug_lagrangian: float
    comm_bytes: int
    c2_measured: float
    distances: list
    betas: list
    inner_iterations: list
    x1_ok: list
    x2_ok: list


@dataclass
class KktCertificate:
    """Residuals of the stationarity system with closed-form multipliers."""

    theta: np.ndarray  # p-by-p, identically zero for the closed form
    gammas: list  # p-by-p symmetric per node
    lambda_residual: float
    local_residuals: list
    feasibility: list  # dist(X_i, Z) per node


@dataclass
class DapsRunResult:
    z: StiefelPoint
    records: list
    iterations: int
    terminated_by: str
    sigma: np.ndarray
    u_p: StiefelPoint
    rel_error: float | None
    comm: object
    nodes: list
    config: DapsConfig
    wall_seconds: float
    z_restarts: int
    private_history: list | None = None


def node_rng(seed, node_id, stream):
    """Deterministic per-node random stream."""
    return np.random.default_rng([seed, node_id, stream])


def update_multiplier(block, x):
    """Closed-form low-rank multiplier factor W = -(I - X X') A A' X.

    The implied multiplier Lambda = X W' + W X' is symmetric with rank at
    most 2p and is never densified in the solver.
    """
    t = block @ (block.T @ x.basis)
    return -(t - x.basis @ (x.basis.T @ t))


def lambda_dense(x, w):
    """Densified multiplier X W' + W X', for oracles and audits only."""
    xb = x.basis if isinstance(x, StiefelPoint) else x
    return xb @ w.T + w @ xb.T


def apply_lambda(xb, w, y):
    return xb @ (w.T @ y) + w @ (xb.T @ y)


def h_operator(block, xb, w, beta, zb):
    """Local subproblem operator H = A A' + Lambda + beta Z Z' in product form."""
    n = block.shape[0]

    def apply(y):
        return block @ (block.T @ y) + apply_lambda(xb, w, y) + beta * (zb @ (zb.T @ y))

    return SymmetricOperator(n, apply)


def apply_H(node, z, y):
    """Product H_i Y using only n-by-p intermediates."""
    return h_operator(node.block, node.x.basis, node.w, node.beta, z.basis).apply(y)


def apply_Q_local(node, y):
    """Local consensus-operator product Q_i Y = (beta X X' - Lambda) Y."""
    xb, w = node.x.basis, node.w
    return node.beta * (xb @ (xb.T @ y)) - xb @ (w.T @ y) - w @ (xb.T @ y)


def initialize(blocks, cfg):
    """Build node states and the shared initial basis.

    The consensus basis is the orthonormalization of a seeded random
    n-by-p matrix; every node starts at that same basis, so all initial
    subspace distances are zero. Penalties start at
    beta0_coeff * ||A_i||_2^2 with the spectral norm estimated by 20
    power-iteration steps, unless ``fixed_betas`` pins them.
    """
    if not blocks:
        raise InvalidConfig("need at least one data block")
    n = blocks[0].shape[0]
    if any(b.shape[0] != n for b in blocks):
        raise InvalidConfig("all blocks must share the row dimension")
    if cfg.p > n:
        raise InvalidConfig(f"target rank p={cfg.p} exceeds n={n}")
    if cfg.p >= min(b.shape[1] for b in blocks):
        raise InvalidConfig("every node needs more than p columns")
    if cfg.fixed_betas is not None and len(cfg.fixed_betas) != len(blocks):
        raise InvalidConfig("fixed_betas must hold one value per node")
    z = orthonormalize(node_rng(cfg.seed, 0, 0).uniform(-1.0, 1.0, size=(n, cfg.p)))
    nodes = []
    for i, block in enumerate(blocks):
        gram = GramOperator(block)
        est = power_norm_estimate(
            gram.apply, n, iters=_BETA_POWER_ITERS, rng=node_rng(cfg.seed, i, 1)
        )
        beta0 = max(cfg.beta0_coeff * est, 1e-300)
        beta = float(cfg.fixed_betas[i]) if cfg.fixed_betas is not None else beta0
        node = NodeState(
            node_id=i,
            block=block,
            x=z,
            w=np.zeros((n, cfg.p)),
            beta=beta,
            beta_used=beta,
            beta0=beta,
            a_norm2_sq=est,
            a_frob_sq=gram.frob_sq,
        )
        node.w = update_multiplier(block, node.x)
        node.dist_history.append(0.0)
        nodes.append(node)
    return nodes, z


def local_step(node, z, cfg):
    """Inexactly solve the local subproblem and refresh the multiplier.

    The solver works on H_i scaled by 1/beta_i for conditioning; the
    acceptance conditions are measured on the unscaled operator, against
    the iterate the step started from. In strict mode a failed condition
    re-runs the solve with a tenfold tighter inner tolerance, up to three
    times.
    """
    x_old, w_old = node.x, node.w
    h = h_operator(node.block, x_old.basis, w_old, node.beta, z.basis)
    h_scaled = h.scaled(1.0 / node.beta)
    rng = node_rng(cfg.seed, node.node_id, 2)
    eps = cfg.eps_x
    attempts = 4 if cfg.strict else 1
    cc = cfg.condition_constants
    for attempt in range(attempts):
        icfg = SlrpgnConfig(tau=cfg.tau, max_inner=cfg.max_inner, eps_x=eps)
        result = inner_solve(h_scaled, x_old, icfg, rng=rng)
        rep1 = verify_conditions(h, x_old, result.point, node.beta, node.a_norm2_sq, cc, "X1")
        rep2 = verify_conditions(h, x_old, result.point, node.beta, node.a_norm2_sq, cc, "X2")
        if rep1.satisfied and rep2.satisfied:
            break
        eps /= 10.0
    node.x = result.point
    node.inner_iterations = result.iterations
    node.budget_exhausted = result.budget_exhausted
    node.x1_ok = rep1.satisfied
    node.x2_ok = rep2.satisfied
    node.w = update_multiplier(node.block, node.x)
    return rep1, rep2


def consensus_step(qz, z, cfg, sum_beta0):
    """One eigensolver step on the summed consensus operator.

    ``qz`` is the all-reduced product Q Z. The operator is scaled by
    1/sum(beta_i^0) for conditioning; with the ``ssi`` solver the step is
    orth(Q Z), with ``slrpgn`` a single projected Gauss-Newton update whose
    default step size is the reciprocal Rayleigh estimate ||Z'QZ||_2^-1,
    which needs no extra communication. Returns ``(z_new, restarted)``.
    """
    scaled = qz / sum_beta0
    if cfg.z_solver == "ssi":
        target = scaled
    else:
        m = z.basis.T @ scaled
        m = 0.5 * (m + m.T)
        if cfg.tau_z is not None:
            tau = cfg.tau_z
        else:
            lam = float(np.max(np.abs(np.linalg.eigvalsh(m))))
            tau = 1.0 / max(lam, 1e-300)
        target = z.basis + tau * (scaled - 0.5 * z.basis @ m - 0.5 * z.basis)
    try:
        return orthonormalize(target), False
    except RankDeficient:
        bump = np.random.default_rng(17).uniform(-1.0, 1.0, size=target.shape)
        target = target + 1e-12 * max(float(np.linalg.norm(target)), 1.0) * bump
        return orthonormalize(target), True


def adapt_beta(node, k, dist_history, cfg):
    """Multiplicative penalty update on stalled projection distance.

    Every fifth iteration the penalty grows by the factor (1 + theta) if
    the distance five iterations ago is within (1 + mu) of the current
    one; otherwise the penalty is unchanged.
    """
    if k < 5 or k % 5 != 0:
        return node.beta
    if dist_history[k - 5] <= (1.0 + cfg.mu) * dist_history[k]:
        return (1.0 + cfg.theta) * node.beta
    return node.beta


def check_termination(objective_history, rel_tol, k, max_iter):
    """Stopping decision from the squared-projection objective history.

    Stops when the relative change between the two most recent values of
    sum_i ||A_i' Z||_F^2 falls to ``rel_tol``, or at the iteration cap.
    Returns ``None`` to continue, otherwise the reason string.
    """
    if k >= max_iter:
        return "max_iter"
    if len(objective_history) >= 2:
        cur, prev = objective_history[-1], objective_history[-2]
        if abs(cur - prev) <= rel_tol * cur:
            return "objective_stall"
    return None


def augmented_lagrangian(nodes, z):
    """Value of the penalized objective at the current primal/dual state.

    sum_i [ f_i(X_i) - 0.5 <Lambda_i, X_i X_i' - Z Z'> + beta_i/4 d_i^2 ],
    evaluated through trace identities on n-by-p factors. The multiplier
    term against X_i X_i' vanishes identically because W_i' X_i = 0.
    """
    total = 0.0
    for node in nodes:
        xb, w = node.x.basis, node.w
        f_i = -0.5 * float(np.sum((node.block.T @ xb) ** 2))
        zw = z.basis.T @ w
        zx = z.basis.T @ xb
        lam_term = float(np.sum(zw * zx))  # 0.5 * <Lambda_i, Z Z'>
        d = subspace_distance(xb, z.basis)
        total += f_i + lam_term + 0.25 * node.beta * d * d
    return total


def kkt_certificate(nodes, z):
    """Evaluate the stationarity system with the closed-form multipliers.

    Uses Theta = 0, Gamma_i = -X_i' A_i A_i' X_i, and the low-rank
    Lambda_i held by each node. The per-node residuals vanish by
    construction; the consensus residual equals the stationarity residual
    of the trace objective whenever the point is feasible.
    """
    p = z.p
    lam_z = np.zeros((z.n, p))
    gammas = []
    local_residuals = []
    feasibility = []
    for node in nodes:
        xb, w = node.x.basis, node.w
        t = node.block @ (node.block.T @ xb)
        gammas.append(-(xb.T @ t))
        local = t + xb @ gammas[-1] + apply_lambda(xb, w, xb)
        local_residuals.append(float(np.linalg.norm(local)))
        feasibility.append(subspace_distance(xb, z.basis))
        lam_z += apply_lambda(xb, w, z.basis)
    return KktCertificate(
        theta=np.zeros((p, p)),
        gammas=gammas,
        lambda_residual=float(np.linalg.norm(lam_z)),
        local_residuals=local_residuals,
        feasibility=feasibility,
    )


def recover_svd(nodes, z, fabric=None, node_id=None):
    """Dominant singular values and left vectors from the consensus basis.

    Forms the p-by-p Gram matrix sum_i (A_i'Z)'(A_i'Z) (via all-reduce in
    a distributed run, serially otherwise), eigendecomposes it, and maps
    the eigenvectors back through Z. Tiny negative eigenvalues from
    roundoff are clipped to zero with a warning.
    """
    if fabric is not None:
        local = nodes[node_id] if node_id is not None else nodes[0]
        g_local = (local.block.T @ z.basis).T @ (local.block.T @ z.basis)
        g = fabric.all_reduce_sum(local.node_id, g_local, tag="gram")
    else:
        g = np.zeros((z.p, z.p))
        for node in nodes:
            az = node.block.T @ z.basis
            g = g + az.T @ az
    eigvals, eigvecs = np.linalg.eigh(g)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    if np.any(eigvals < 0):
        if np.any(eigvals < -1e-10 * max(eigvals.max(), 1.0)):
            warnings.warn("clipping negative Ritz eigenvalues to zero", RuntimeWarning)
        eigvals = np.clip(eigvals, 0.0, None)
    sigma = np.sqrt(eigvals)
    u_p = StiefelPoint(z.basis @ eigvecs)
    return sigma, u_p


class _Observer:
    """Out-of-band diagnostics over the concatenated matrix.

    The observer exists only in the simulation harness; nothing it
    computes travels over the fabric or is visible to other nodes.
    """

    def __init__(self, blocks):
        self.gram = GramOperator(np.concatenate(blocks, axis=1), "concatenated matrix")

    def kkt(self, z):
        b = self.gram.apply(z.basis)
        raw = float(np.linalg.norm(b - z.basis @ (z.basis.T @ b)))
        return raw, raw / self.gram.frob_sq


def run_daps(blocks, cfg, fabric=None, z0=None, ground_truth=None):
    """Run the full consensus solver on column blocks of a matrix.

    One worker thread is spawned per node; threads synchronize only at
    the fabric's collectives. Per iteration the algorithm communicates
    exactly one n-by-p all-reduce (the consensus products) and one scalar
    all-reduce (the termination objective). Returns a
    :class:`DapsRunResult` with the full iteration log.
    """
    start = time.perf_counter()
    d = len(blocks)
    if fabric is None:
        fabric = Fabric(d)
    if fabric.d != d:
        raise InvalidConfig(f"fabric has {fabric.d} nodes, data has {d} blocks")
    nodes, z_init = initialize(blocks, cfg)
    if z0 is not None:
        if z0.n != z_init.n or z0.p != z_init.p:
            raise InvalidConfig("initial basis has the wrong shape")
        z_init = z0
        for node in nodes:
            node.x = z_init
            node.w = update_multiplier(node.block, node.x)
    sum_beta0 = sum(node.beta0 for node in nodes)  # setup-time public scalar
    observer = _Observer(blocks)
    shared_rows = []  # written by node 0 only
    z_restarts = [0]
    private_history = [[] for _ in range(d)] if cfg.capture_private_history else None

    def worker(node_id, node):
        z = z_init
        obj_history = []
        sq = fabric.all_reduce_sum(
            node_id, float(np.sum((node.block.T @ z.basis) ** 2)), tag="objective"
        )
        obj_history.append(float(sq))
        if cfg.capture_private_history:
            private_history[node_id].append(
                {"x": node.x.basis.copy(), "w": node.w.copy(), "beta": node.beta}
            )
        fabric.barrier()  # everyone settled before node 0 reads shared state
        if node_id == 0:
            shared_rows.append(_shared_row(0, obj_history[-1], nodes, z, observer, fabric, math.nan))
        fabric.barrier()
        k = 0
        reason = None
        while True:
            k += 1
            node.beta_used = node.beta
            local_step(node, z, cfg)
            qz_local = apply_Q_local(node, z.basis)
            qz = fabric.all_reduce_sum(node_id, qz_local, tag="qz")
            z_new, restarted = consensus_step(qz, z, cfg, sum_beta0)
            c2_measured = math.nan
            if node_id == 0:
                # diagnostic only; reads of other nodes' state are safe here
                # because no node can pass the next collective before node 0
                c2_measured = _realized_c2(qz, z, z_new, nodes, sum_beta0)
                if restarted:
                    z_restarts[0] += 1
            z = z_new
            node.dist = subspace_distance(node.x.basis, z.basis)
            node.dist_history.append(node.dist)
            sq = fabric.all_reduce_sum(
                node_id, float(np.sum((node.block.T @ z.basis) ** 2)), tag="objective"
            )
            obj_history.append(float(sq))
            if cfg.fixed_betas is None and not cfg.theory_mode:
                node.beta = adapt_beta(node, k, node.dist_history, cfg)
            if cfg.capture_private_history:
                private_history[node_id].append(
                    {"x": node.x.basis.copy(), "w": node.w.copy(), "beta": node.beta}
                )
            fabric.barrier()  # per-node state settled before diagnostics
            if node_id == 0:
                shared_rows.append(
                    _shared_row(k, obj_history[-1], nodes, z, observer, fabric, c2_measured)
                )
            reason = check_termination(obj_history, cfg.rel_tol, k, cfg.max_iter)
            fabric.barrier()  # diagnostics done before anyone mutates state
            if reason is not None:
                break
        sigma, u_p = recover_svd(nodes, z, fabric=fabric, node_id=node_id)
        return z, k, reason, sigma, u_p

    results = run_nodes(fabric, worker, [(node,) for node in nodes])
    z, iterations, reason, sigma, u_p = results[0]
    rel_error = None
    if ground_truth is not None:
        exact = ground_truth.singular_values[: cfg.p]
        rel_error = float(np.linalg.norm(sigma - exact) / np.linalg.norm(exact))
    records = [
        IterationRecord(
            k=row["k"],
            objective=row["objective"],
            kkt_raw=row["kkt_raw"],
            kkt_scaled=row["kkt_scaled"],
            aug_lagrangian=row["aug_lagrangian"],
            comm_bytes=row["comm_bytes"],
            c2_measured=row["c2_measured"],
            distances=row["distances"],
            betas=row["betas"],
            inner_iterations=row["inner"],
            x1_ok=row["x1"],
            x2_ok=row["x2"],
        )
        for row in shared_rows
    ]
    return DapsRunResult(
        z=z,
        records=records,
        iterations=iterations,
        terminated_by=reason,
        sigma=sigma,
        u_p=u_p,
        rel_error=rel_error,
        comm=comm_stats(fabric),
        nodes=nodes,
        config=cfg,
        wall_seconds=time.perf_counter() - start,
        z_restarts=z_restarts[0],
        private_history=private_history,
    )


def _realized_c2(qz, z_old, z_new, nodes, sum_beta0):
    """Realized decrease constant of the consensus subproblem.

    Measured on the scaled operator: (q(Z) - q(Z+)) / ||(I - ZZ') Q Z||_F^2.
    q(Z+) is evaluated by the harness from the node states; this is a
    diagnostic only and does not communicate.
    """
    scaled = qz / sum_beta0
    q_old = -0.5 * float(np.sum(z_old.basis * scaled))
    qz_new = np.zeros_like(qz)
    for node in nodes:
        qz_new += apply_Q_local(node, z_new.basis)
    q_new = -0.5 * float(np.sum(z_new.basis * qz_new)) / sum_beta0
    resid = scaled - z_old.basis @ (z_old.basis.T @ scaled)
    denom = float(np.sum(resid * resid))
    if denom <= 0.0:
        return math.nan
    return (q_old - q_new) / denom


def _shared_row(k, sq_objective, nodes, z, observer, fabric, c2_measured):
    kkt_raw, kkt_scaled = observer.kkt(z)
    return {
        "k": k,
        "objective": -0.5 * sq_objective,
        "kkt_raw": kkt_raw,
        "kkt_scaled": kkt_scaled,
        "aug_lagrangian": augmented_lagrangian(nodes, z),
        "comm_bytes": comm_stats(fabric).total_bytes,
        "c2_measured": c2_measured,
        "distances": [n.dist for n in nodes],
        "betas": [n.beta_used for n in nodes],
        "inner": [n.inner_iterations for n in nodes],
        "x1": [n.x1_ok for n in nodes],
        "x2": [n.x2_ok for n in nodes],
    }
