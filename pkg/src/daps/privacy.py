"""Reconstruction attacks on recorded traces and a wire-payload auditor.

The attack targets the linear relationship between a node's private Gram
matrix M = A_i A_i' and the quantities the directly parallelized baselines
share every iteration. For the projected Gauss-Newton baseline the shared
product is

    S_i(X) = (I - X (X'X)^-1 X' / 2) M X (X'X)^-1,

and the left factor is always invertible with inverse I + X (X'X)^-1 X',
so each snapshot contributes the linear equations M C = T with
C = X (X'X)^-1 known and T recovered from S_i. Treating the symmetric M in
half-vectorized form, n(n+1)/2 unknowns against n*p equations per
snapshot, a handful of snapshots makes the system overdetermined and M is
recovered by least squares.

Against the consensus solver the observable wire data are products Q_i Y.
Even an attacker strong enough to densify Q_i exactly ends up with a
matrix of rank at most 3p, and mapping (X_i, beta_i, A_i) -> Q_i is not
invertible for A_i A_i' without the private X_i and beta_i, so a generic
full-rank Gram matrix is not determined whenever 3p < n. The report states
the measured rank; when 3p >= n the rank argument is flagged inconclusive.

Recovering A_i itself from a recovered A_i A_i' is possible only up to an
orthogonal rotation of its columns; that step is reported as a note and
not implemented.
"""

from dataclasses import dataclass, field

import numpy as np

_ROTATION_NOTE = (
    "a recovered Gram matrix determines the block itself only up to an "
    "orthogonal rotation; that final step is out of scope"
)


@dataclass
class AttackReport:
    """Outcome of one reconstruction attempt against one node."""

    target_node: int
    equations_collected: int
    unknown_dof: int
    identifiable: bool
    residual: float
    system_rank: int
    snapshots_used: int
    skipped_snapshots: int = 0
    recovered_gram: np.ndarray | None = None
    relative_error: float | None = None
    rank_limit: int | None = None
    recovered_rank: int | None = None
    rank_argument_inconclusive: bool = False
    note: str = _ROTATION_NOTE

    def summary(self):
        out = {
            "target_node": self.target_node,
            "equations_collected": self.equations_collected,
            "unknown_dof": self.unknown_dof,
            "identifiable": self.identifiable,
            "residual": self.residual,
            "system_rank": self.system_rank,
            "snapshots_used": self.snapshots_used,
            "skipped_snapshots": self.skipped_snapshots,
            "relative_error": self.relative_error,
            "rank_limit": self.rank_limit,
            "recovered_rank": self.recovered_rank,
            "rank_argument_inconclusive": self.rank_argument_inconclusive,
            "note": self.note,
        }
        return out


@dataclass
class AuditReport:
    """Result of the exact-match scan of wire payloads against private data."""

    messages_scanned: int
    payload_columns_scanned: int
    violations: list = field(default_factory=list)

    @property
    def clean(self):
        return not self.violations


def _vech_indices(n):
    """Row/column index pairs of the lower triangle, in column-major order."""
    rows, cols = np.tril_indices(n)
    return rows, cols


def _vech_to_symmetric(v, n):
    rows, cols = _vech_indices(n)
    m = np.zeros((n, n))
    m[rows, cols] = v
    m[cols, rows] = v
    return m


def _symmetric_system_rows(c, t):
    """Design-matrix rows for the equations M c_j = t_j with symmetric M.

    For equation (r, j): sum_c M[r, c] * C[c, j] = T[r, j]. The unknown
    vector is the half-vectorization of M; the coefficient of entry
    (min(r,c), max(r,c)) accumulates C[c, j].
    """
    n, p = c.shape
    rows_idx, cols_idx = _vech_indices(n)
    index_of = {}
    for k in range(len(rows_idx)):
        index_of[(int(rows_idx[k]), int(cols_idx[k]))] = k
    dof = n * (n + 1) // 2
    design = np.zeros((n * p, dof))
    rhs = np.zeros(n * p)
    eq = 0
    for j in range(p):
        for r in range(n):
            for cc in range(n):
                key = (max(r, cc), min(r, cc))
                design[eq, index_of[key]] += c[cc, j]
            rhs[eq] = t[r, j]
            eq += 1
    return design, rhs


def _solve_symmetric_system(design, rhs, n):
    solution, _, rank, _ = np.linalg.lstsq(design, rhs, rcond=None)
    residual = float(np.linalg.norm(design @ solution - rhs))
    return _vech_to_symmetric(solution, n), rank, residual


def attack_slrpgn_trace(trace, target_node, truth_gram=None):
    """Recover a node's Gram matrix from recorded shared products.

    ``trace`` is a :class:`daps.baselines.BaselineTrace` of the projected
    Gauss-Newton baseline. Snapshots whose iterate has a numerically
    singular Gram factor are skipped and counted. ``truth_gram`` (the
    actual A_i A_i', available in simulation) adds a relative error to
    the report.
    """
    designs, rhss = [], []
    skipped = 0
    n = None
    for snap in trace.snapshots:
        x = snap.x
        n = x.shape[0]
        gram = x.T @ x
        eigs = np.linalg.eigvalsh(gram)
        if eigs[0] <= 1e-14 * max(eigs[-1], 1e-300):
            skipped += 1  # singular left factor, snapshot unusable
            continue
        ginv_xt = np.linalg.solve(gram, x.T)
        s = snap.shared[target_node]
        # invert the left factor: (I - X G^-1 X'/2)^-1 = I + X G^-1 X'
        t = s + x @ (ginv_xt @ s)
        c = ginv_xt.T  # X G^-1
        design, rhs = _symmetric_system_rows(c, t)
        designs.append(design)
        rhss.append(rhs)
    dof = n * (n + 1) // 2
    if not designs:
        return AttackReport(
            target_node=target_node,
            equations_collected=0,
            unknown_dof=dof,
            identifiable=False,
            residual=float("nan"),
            system_rank=0,
            snapshots_used=0,
            skipped_snapshots=skipped,
        )
    design = np.concatenate(designs, axis=0)
    rhs = np.concatenate(rhss, axis=0)
    recovered, rank, residual = _solve_symmetric_system(design, rhs, n)
    identifiable = rank == dof
    rel_err = None
    if truth_gram is not None:
        rel_err = float(np.linalg.norm(recovered - truth_gram) / np.linalg.norm(truth_gram))
    return AttackReport(
        target_node=target_node,
        equations_collected=design.shape[0],
        unknown_dof=dof,
        identifiable=identifiable,
        residual=residual,
        system_rank=int(rank),
        snapshots_used=len(designs),
        skipped_snapshots=skipped,
        recovered_gram=recovered if identifiable else None,
        relative_error=rel_err,
    )


def attack_daps_trace(shared_pairs, target_node, truth_gram=None, rank_cutoff=1e-10):
    """Best-effort linear reconstruction from observed consensus products.

    ``shared_pairs`` is a sequence of ``(probe, response)`` pairs where
    ``response = Q_i probe`` as observed on the wire for one iteration's
    operator. The attacker can at most densify the symmetric Q_i itself;
    the report records its rank against the structural bound 3p and the
    resulting identifiability verdict for A_i A_i'.
    """
    probes = np.concatenate([y for y, _ in shared_pairs], axis=1)
    responses = np.concatenate([r for _, r in shared_pairs], axis=1)
    n = probes.shape[0]
    p = shared_pairs[0][0].shape[1]
    dof = n * (n + 1) // 2
    design, rhs = _symmetric_system_rows_multi(probes, responses)
    recovered, rank, residual = _solve_symmetric_system(design, rhs, n)
    sv = np.linalg.svd(recovered, compute_uv=False)
    recovered_rank = int(np.sum(sv > rank_cutoff * max(sv[0], 1e-300)))
    inconclusive = 3 * p >= n
    rel_err = None
    if truth_gram is not None:
        rel_err = float(np.linalg.norm(recovered - truth_gram) / np.linalg.norm(truth_gram))
    return AttackReport(
        target_node=target_node,
        equations_collected=design.shape[0],
        unknown_dof=dof,
        identifiable=False,
        residual=residual,
        system_rank=int(rank),
        snapshots_used=len(shared_pairs),
        recovered_gram=recovered,
        relative_error=rel_err,
        rank_limit=3 * p,
        recovered_rank=recovered_rank,
        rank_argument_inconclusive=inconclusive,
        note=(
            "the recovered operator is rank-deficient and depends on the "
            "private X_i and beta_i, so A_i A_i' is not determined; "
            + _ROTATION_NOTE
        ),
    )


def _symmetric_system_rows_multi(probes, responses):
    return _symmetric_system_rows(probes, responses)


def probe_node_operator(node, num_probes, rng):
    """Generate hypothetical wire observations (Y, Q_i Y) for one node.

    A real run exposes a single product per iteration; this helper grants
    the attacker the strongest position, many probes against one frozen
    operator, which is what the rank analysis needs.
    """
    from .core import apply_Q_local

    pairs = []
    for _ in range(num_probes):
        y = rng.uniform(-1.0, 1.0, size=(node.x.n, node.x.p))
        pairs.append((y, apply_Q_local(node, y)))
    return pairs


def audit_trace(messages, blocks, private_history=None):
    """Exact-match scan of recorded payloads against private values.

    Flags any payload column equal to a column of some node's data block,
    or to a column of any X_i or W_i that node held at any iteration, and
    any scalar payload equal to a beta_i in effect at any iteration.
    """
    column_pool = []  # (owner, kind, column)
    scalar_pool = []
    for i, block in enumerate(blocks):
        for j in range(block.shape[1]):
            column_pool.append((i, f"A_{i} column {j}", block[:, j]))
    if private_history:
        for i, history in enumerate(private_history):
            for t, snap in enumerate(history):
                for j in range(snap["x"].shape[1]):
                    column_pool.append((i, f"X_{i}[{t}] column {j}", snap["x"][:, j]))
                    column_pool.append((i, f"W_{i}[{t}] column {j}", snap["w"][:, j]))
                scalar_pool.append((i, f"beta_{i}[{t}]", snap["beta"]))
    violations = []
    scanned_cols = 0
    for msg in messages:
        payload = msg.payload
        if payload is None:
            continue
        arr = np.atleast_2d(np.asarray(payload))
        if arr.size == 1:
            value = float(arr.reshape(-1)[0])
            for owner, kind, scalar in scalar_pool:
                if value == scalar:
                    violations.append(
                        {"collective": msg.collective, "round": msg.round, "src": msg.src,
                         "dst": msg.dst, "tag": msg.tag, "matches": kind, "owner": owner}
                    )
            continue
        if arr.ndim != 2:
            continue
        for j in range(arr.shape[1]):
            scanned_cols += 1
            col = arr[:, j]
            for owner, kind, private_col in column_pool:
                if col.shape == private_col.shape and np.array_equal(col, private_col):
                    violations.append(
                        {"collective": msg.collective, "round": msg.round, "src": msg.src,
                         "dst": msg.dst, "tag": msg.tag, "matches": kind, "owner": owner}
                    )
    return AuditReport(
        messages_scanned=len(messages),
        payload_columns_scanned=scanned_cols,
        violations=violations,
    )
