"""Directly parallelized baseline eigensolvers over the same fabric.

Both baselines parallelize at the linear-algebra level: every node holds
the full iterate X and shares a locally computed product each iteration,
summed by one n-by-p all-reduce. For the projected Gauss-Newton baseline
the shared product is S_i(X); for subspace iteration it is A_i A_i' X.
Because the shared quantities are linear images of A_i A_i', recorded
traces of these runs are the input to the reconstruction attack.

Termination mirrors the consensus solver: the run stops when the relative
change of sum_i ||A_i'X||_F^2 falls to ``rel_tol`` or at the iteration
cap, with the objective summed by one scalar all-reduce per iteration.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .eigensolvers import SymmetricOperator
from .errors import InvalidConfig
from .linalg import GramOperator, StiefelPoint, orthonormalize
from .netsim import Fabric, comm_stats, run_nodes

_POWER_SETUP_ITERS = 10


@dataclass
class BaselineConfig:
    """Parameters shared by the baseline runs."""

    p: int
    tau: float | None = None  # None: distributed power estimate at setup
    orth_every: int = 10
    rel_tol: float = 1e-10
    max_iter: int = 20000
    seed: int = 0

    def __post_init__(self):
        if self.p < 1 or self.max_iter < 1 or self.orth_every < 1:
            raise InvalidConfig("p, max_iter, and orth_every must be positive")
        if not self.rel_tol > 0:
            raise InvalidConfig("rel_tol must be positive")


@dataclass
class BaselineRecord:
    k: int
    objective: float
    kkt_raw: float
    kkt_scaled: float
    comm_bytes: int
    distances: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    x1_ok: list = field(default_factory=list)
    x2_ok: list = field(default_factory=list)
    c2_measured: float = float("nan")
    aug_lagrangian: float = float("nan")


@dataclass
class TraceSnapshot:
    """One iteration's publicly shared quantities, as an eavesdropper sees them."""

    k: int
    x: np.ndarray  # the replicated iterate
    shared: list  # per-node shared product (S_i(X) or A_i A_i' X)


@dataclass
class BaselineTrace:
    algorithm: str
    snapshots: list


@dataclass
class BaselineRunResult:
    x: StiefelPoint
    records: list
    iterations: int
    terminated_by: str
    comm: object
    trace: BaselineTrace | None
    config: BaselineConfig
    wall_seconds: float


class _Observer:
    def __init__(self, blocks):
        self.gram = GramOperator(np.concatenate(blocks, axis=1), "concatenated matrix")

    def kkt(self, xb):
        z = orthonormalize(xb)
        b = self.gram.apply(z.basis)
        raw = float(np.linalg.norm(b - z.basis @ (z.basis.T @ b)))
        return raw, raw / self.gram.frob_sq


def _shared_start(blocks, p, seed):
    n = blocks[0].shape[0]
    rng = np.random.default_rng([seed, 0, 0])
    return orthonormalize(rng.uniform(-1.0, 1.0, size=(n, p)))


def _estimate_tau(fabric, node_id, block, n, seed):
    """Distributed power estimate of ||A A'||_2; every node gets the same value."""
    v = np.random.default_rng([seed, 424242]).uniform(-1.0, 1.0, size=(n, 1))
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(_POWER_SETUP_ITERS):
        w = fabric.all_reduce_sum(node_id, block @ (block.T @ v), tag="power")
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 1.0
        v = w / lam
    return 1.0 / lam


def run_parallel_slrpgn(blocks, cfg, fabric=None, x0=None, record_trace=False):
    """Projected Gauss-Newton iteration with per-node shared products.

    Each node computes S_i(X) from its private block and the replicated
    iterate; the products are summed by all-reduce and every node applies
    the identical update X + tau (sum_i S_i - X/2). The iterate is
    orthonormalized every ``orth_every`` iterations and at termination.
    When ``record_trace`` is set, the per-node shared products of every
    iteration are kept for the privacy auditor.
    """
    d = len(blocks)
    if fabric is None:
        fabric = Fabric(d)
    start = time.perf_counter()
    x_init = (x0.basis if isinstance(x0, StiefelPoint) else x0) if x0 is not None else None
    if x_init is None:
        x_init = _shared_start(blocks, cfg.p, cfg.seed).basis
    observer = _Observer(blocks)
    shared_rows = []
    traces = [[] for _ in range(d)]

    def worker(node_id, block):
        x = x_init.copy()
        tau = cfg.tau if cfg.tau is not None else _estimate_tau(fabric, node_id, block, x.shape[0], cfg.seed)
        op = SymmetricOperator.from_gram(block)
        obj_history = [
            float(fabric.all_reduce_sum(node_id, float(np.sum((block.T @ x) ** 2)), tag="objective"))
        ]
        fabric.barrier()
        if node_id == 0:
            shared_rows.append(_row(0, obj_history[-1], x, observer, fabric))
        fabric.barrier()
        k = 0
        while True:
            k += 1
            gram = x.T @ x
            t = op.apply(x)
            r = np.linalg.solve(gram, t.T).T
            s_local = r - 0.5 * x @ np.linalg.solve(gram, x.T @ r)
            if record_trace:
                traces[node_id].append((k - 1, x.copy(), s_local.copy()))
            s_sum = fabric.all_reduce_sum(node_id, s_local, tag="sx")
            x = x + tau * (s_sum - 0.5 * x)
            if k % cfg.orth_every == 0:
                x = orthonormalize(x).basis
            obj_history.append(
                float(fabric.all_reduce_sum(node_id, float(np.sum((block.T @ x) ** 2)), tag="objective"))
            )
            fabric.barrier()
            if node_id == 0:
                shared_rows.append(_row(k, obj_history[-1], x, observer, fabric))
            fabric.barrier()
            reason = _termination(obj_history, cfg, k)
            if reason is not None:
                return orthonormalize(x), k, reason

    results = run_nodes(fabric, worker, [(b,) for b in blocks])
    x_final, iterations, reason = results[0]
    trace = None
    if record_trace:
        snapshots = [
            TraceSnapshot(k=traces[0][j][0], x=traces[0][j][1], shared=[traces[i][j][2] for i in range(d)])
            for j in range(len(traces[0]))
        ]
        trace = BaselineTrace("slrpgn", snapshots)
    return BaselineRunResult(
        x=x_final,
        records=[BaselineRecord(**row) for row in shared_rows],
        iterations=iterations,
        terminated_by=reason,
        comm=comm_stats(fabric),
        trace=trace,
        config=cfg,
        wall_seconds=time.perf_counter() - start,
    )


def run_parallel_ssi(blocks, cfg, fabric=None, x0=None, record_trace=False):
    """Simultaneous subspace iteration with shared per-node products A_i A_i' X."""
    d = len(blocks)
    if fabric is None:
        fabric = Fabric(d)
    start = time.perf_counter()
    if x0 is None:
        x0 = _shared_start(blocks, cfg.p, cfg.seed)
    observer = _Observer(blocks)
    shared_rows = []
    traces = [[] for _ in range(d)]

    def worker(node_id, block):
        x = x0
        obj_history = [
            float(fabric.all_reduce_sum(node_id, float(np.sum((block.T @ x.basis) ** 2)), tag="objective"))
        ]
        fabric.barrier()
        if node_id == 0:
            shared_rows.append(_row(0, obj_history[-1], x.basis, observer, fabric))
        fabric.barrier()
        k = 0
        while True:
            k += 1
            t_local = block @ (block.T @ x.basis)
            if record_trace:
                traces[node_id].append((k - 1, x.basis.copy(), t_local.copy()))
            t_sum = fabric.all_reduce_sum(node_id, t_local, tag="ax")
            x = orthonormalize(t_sum)
            obj_history.append(
                float(fabric.all_reduce_sum(node_id, float(np.sum((block.T @ x.basis) ** 2)), tag="objective"))
            )
            fabric.barrier()
            if node_id == 0:
                shared_rows.append(_row(k, obj_history[-1], x.basis, observer, fabric))
            fabric.barrier()
            reason = _termination(obj_history, cfg, k)
            if reason is not None:
                return x, k, reason

    results = run_nodes(fabric, worker, [(b,) for b in blocks])
    x_final, iterations, reason = results[0]
    trace = None
    if record_trace:
        snapshots = [
            TraceSnapshot(k=traces[0][j][0], x=traces[0][j][1], shared=[traces[i][j][2] for i in range(d)])
            for j in range(len(traces[0]))
        ]
        trace = BaselineTrace("ssi", snapshots)
    return BaselineRunResult(
        x=x_final,
        records=[BaselineRecord(**row) for row in shared_rows],
        iterations=iterations,
        terminated_by=reason,
        comm=comm_stats(fabric),
        trace=trace,
        config=cfg,
        wall_seconds=time.perf_counter() - start,
    )


def _termination(obj_history, cfg, k):
    if k >= cfg.max_iter:
        return "max_iter"
    cur, prev = obj_history[-1], obj_history[-2]
    if abs(cur - prev) <= cfg.rel_tol * cur:
        return "objective_stall"
    return None


def _row(k, sq_objective, xb, observer, fabric):
    kkt_raw, kkt_scaled = observer.kkt(xb)
    return {
        "k": k,
        "objective": -0.5 * sq_objective,
        "kkt_raw": kkt_raw,
        "kkt_scaled": kkt_scaled,
        "comm_bytes": comm_stats(fabric).total_bytes,
    }
