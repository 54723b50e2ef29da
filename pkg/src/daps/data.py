"""Synthetic test matrices, column partitioning, and matrix file I/O.

Synthetic matrices are built from their economy-form SVD: A = U diag(s) V'
with U, V orthonormalizations of uniform [-1, 1] random matrices and
singular values s_i = xi^(1-i) for a decay parameter xi > 1. The generator
is a seeded numpy PCG64 stream, so equal seeds give bit-identical output on
any platform.

Two file formats are supported. ``raw`` is little-endian: a 16-byte header
holding (rows, cols) as unsigned 64-bit integers, followed by the entries
as 64-bit floats in column-major order; it round-trips bit-exactly. ``csv``
has a first line ``rows,cols`` followed by one comma-separated row per
line. Loaded matrices get no centering or normalization of any kind.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionHeaderMismatch,
    InvalidPartition,
    InvalidSpec,
    ParseError,
)
from .linalg import ensure_finite, orthonormalize

_HEADER_DTYPE = np.dtype("<u8")
_ENTRY_DTYPE = np.dtype("<f8")


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic test matrix."""

    n: int
    m: int
    xi: float
    seed: int

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.n > self.m:
            raise InvalidSpec(f"need 1 <= n <= m, got n={self.n}, m={self.m}")
        if not self.xi > 1.0:
            raise InvalidSpec(f"decay parameter must exceed 1, got xi={self.xi}")


@dataclass(frozen=True)
class GroundTruth:
    """Exact spectral data of a generated matrix."""

    singular_values: np.ndarray  # length n, strictly positive, nonincreasing
    left_basis: np.ndarray  # n-by-n orthogonal


def generate_synthetic(spec):
    """Generate a matrix with known SVD together with its ground truth.

    Returns ``(a, truth)`` where ``a`` is n-by-m with singular values
    xi^(1-i) and ``truth`` carries those values and the exact left
    singular basis.
    """
    rng = np.random.default_rng(spec.seed)
    u = orthonormalize(rng.uniform(-1.0, 1.0, size=(spec.n, spec.n))).basis
    v = orthonormalize(rng.uniform(-1.0, 1.0, size=(spec.m, spec.n))).basis
    sigma = spec.xi ** -np.arange(spec.n, dtype=np.float64)
    a = (u * sigma) @ v.T
    return ensure_finite(a, "generated matrix"), GroundTruth(sigma, u)


def equal_partition_sizes(m, d):
    """Split m columns over d nodes, remainder going to the lowest indices."""
    base, rem = divmod(m, d)
    return [base + 1 if i < rem else base for i in range(d)]


def partition_columns(a, d=None, sizes=None, p=1):
    """Split a matrix column-wise into per-node private blocks.

    Either ``d`` (equal mode) or explicit ``sizes`` must be given. Every
    block is an independent copy so that no node aliases another node's
    store. Raises :class:`InvalidPartition` when any block would have
    fewer than ``p + 1`` columns or the sizes do not sum to the width.
    """
    a = np.asarray(a, dtype=np.float64)
    m = a.shape[1]
    if sizes is None:
        if d is None or d < 1:
            raise InvalidPartition("need a node count d >= 1 or explicit sizes")
        sizes = equal_partition_sizes(m, d)
    sizes = [int(s) for s in sizes]
    if sum(sizes) != m:
        raise InvalidPartition(f"sizes {sizes} do not sum to m={m}")
    if any(s < 1 for s in sizes):
        raise InvalidPartition(f"every node needs at least one column, got {sizes}")
    if any(s <= p for s in sizes):
        raise InvalidPartition(f"every block needs more than p={p} columns, got {sizes}")
    blocks = []
    lo = 0
    for s in sizes:
        blocks.append(a[:, lo : lo + s].copy())
        lo += s
    return blocks


def save_matrix(a, path, fmt="raw"):
    """Write a matrix to ``path`` in the ``raw`` or ``csv`` format."""
    a = ensure_finite(a, "matrix to save")
    path = Path(path)
    n, m = a.shape
    if fmt == "raw":
        with open(path, "wb") as fh:
            fh.write(np.asarray([n, m], dtype=_HEADER_DTYPE).tobytes())
            fh.write(np.asfortranarray(a).astype(_ENTRY_DTYPE).tobytes(order="F"))
    elif fmt == "csv":
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"{n},{m}\n")
            for row in a:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def load_matrix(path, fmt="raw"):
    """Read a matrix written by :func:`save_matrix`."""
    path = Path(path)
    if fmt == "raw":
        return _load_raw(path)
    if fmt == "csv":
        return _load_csv(path)
    raise ValueError(f"unknown format {fmt!r}")


def _load_raw(path):
    blob = path.read_bytes()
    if len(blob) < 16:
        raise ParseError(f"{path} is shorter than the 16-byte header")
    n, m = (int(v) for v in np.frombuffer(blob[:16], dtype=_HEADER_DTYPE))
    expected = 16 + n * m * 8
    if len(blob) != expected:
        raise ParseError(f"{path} holds {len(blob)} bytes, header implies {expected}")
    entries = np.frombuffer(blob[16:], dtype=_ENTRY_DTYPE)
    a = np.reshape(entries, (n, m), order="F").copy()
    return ensure_finite(a, str(path))


def _load_csv(path):
    try:
        text = path.read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError(f"{path} is empty")
    try:
        n, m = (int(v) for v in lines[0].split(","))
    except ValueError as exc:
        raise ParseError(f"{path} has a malformed header line {lines[0]!r}") from exc
    body = lines[1:]
    if len(body) != n:
        raise DimensionHeaderMismatch(f"{path} declares {n} rows but holds {len(body)}")
    rows = []
    for ln in body:
        try:
            row = [float(v) for v in ln.split(",")]
        except ValueError as exc:
            raise ParseError(f"{path} has a malformed row {ln!r}") from exc
        if len(row) != m:
            raise DimensionHeaderMismatch(
                f"{path} declares {m} columns but a row holds {len(row)}"
            )
        rows.append(row)
    return ensure_finite(np.asarray(rows, dtype=np.float64), str(path))
