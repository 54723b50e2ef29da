import numpy as np
import pytest

from daps.errors import DimensionMismatch, NonFiniteMatrix, OrthogonalityError, RankDeficient
from daps.linalg import (
    GramOperator,
    StiefelPoint,
    ensure_finite,
    kkt_residual,
    orthonormalize,
    projection_distance,
    subspace_distance,
    trace_objective,
)


def modified_gram_schmidt(m):
    """Independent orthonormalization oracle."""
    m = np.array(m, dtype=float)
    n, p = m.shape
    q = np.zeros((n, p))
    for j in range(p):
        v = m[:, j].copy()
        for i in range(j):
            v -= (q[:, i] @ v) * q[:, i]
        # second pass for numerical safety
        for i in range(j):
            v -= (q[:, i] @ v) * q[:, i]
        q[:, j] = v / np.linalg.norm(v)
    return q


def dense_projector_distance(xb, yb):
    """Oracle forming the n-by-n projectors explicitly."""
    return np.linalg.norm(xb @ xb.T - yb @ yb.T)


def random_stiefel(rng, n, p):
    return orthonormalize(rng.uniform(-1, 1, size=(n, p)))


class TestStiefelPoint:
    def test_accepts_orthonormal(self):
        x = StiefelPoint(np.eye(4)[:, :2])
        assert x.n == 4 and x.p == 2

    def test_rejects_non_orthonormal(self):
        with pytest.raises(OrthogonalityError):
            StiefelPoint(np.ones((3, 2)))

    def test_rejects_wide(self):
        with pytest.raises(DimensionMismatch):
            StiefelPoint(np.eye(2, 3))

    @pytest.mark.parametrize("seed", range(5))
    def test_construction_invariant(self, seed):
        rng = np.random.default_rng(seed)
        x = random_stiefel(rng, 20, 4)
        defect = np.linalg.norm(x.basis.T @ x.basis - np.eye(4))
        assert defect <= 1e-12 * 4


class TestOrthonormalize:
    def test_identity_columns_unchanged(self):
        m = np.eye(4)[:, :2]
        q = orthonormalize(m).basis
        np.testing.assert_array_equal(q, m)

    def test_single_column_normalization(self):
        q = orthonormalize(np.array([[3.0], [4.0]])).basis
        np.testing.assert_allclose(q, [[0.6], [0.8]], atol=1e-15)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_gram_schmidt_range(self, seed):
        rng = np.random.default_rng(seed)
        m = rng.uniform(-1, 1, size=(5, 2))
        q = orthonormalize(m).basis
        oracle = modified_gram_schmidt(m)
        assert subspace_distance(q, oracle) <= 1e-12

    def test_rank_deficient_raises(self):
        m = np.ones((5, 2))
        with pytest.raises(RankDeficient):
            orthonormalize(m)

    def test_zero_matrix_raises(self):
        with pytest.raises(RankDeficient):
            orthonormalize(np.zeros((4, 2)))


class TestProjectionDistance:
    def test_identical_subspace(self):
        rng = np.random.default_rng(0)
        x = random_stiefel(rng, 6, 2)
        metrics = projection_distance(x, x)
        assert metrics.distance <= 1e-14
        assert metrics.min_principal_cosine == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_lines(self):
        x = StiefelPoint(np.eye(2)[:, :1])
        y = StiefelPoint(np.eye(2)[:, 1:])
        metrics = projection_distance(x, y)
        assert metrics.distance == pytest.approx(np.sqrt(2.0), abs=1e-14)
        assert metrics.min_principal_cosine == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_dense_oracle(self, seed):
        rng = np.random.default_rng(seed)
        x, y = random_stiefel(rng, 6, 2), random_stiefel(rng, 6, 2)
        got = projection_distance(x, y).distance
        want = dense_projector_distance(x.basis, y.basis)
        assert got == pytest.approx(want, abs=1e-10)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(3)
        with pytest.raises(DimensionMismatch):
            projection_distance(random_stiefel(rng, 6, 2), random_stiefel(rng, 6, 3))

    @pytest.mark.parametrize("seed", range(6))
    def test_symmetry_and_triangle(self, seed):
        rng = np.random.default_rng(100 + seed)
        x, y, w = (random_stiefel(rng, 8, 3) for _ in range(3))
        dxy = projection_distance(x, y).distance
        dyx = projection_distance(y, x).distance
        dxw = projection_distance(x, w).distance
        dwy = projection_distance(w, y).distance
        assert dxy == pytest.approx(dyx, abs=1e-10)
        assert dxy <= dxw + dwy + 1e-10

    @pytest.mark.parametrize("seed", range(5))
    def test_rotation_invariance(self, seed):
        rng = np.random.default_rng(200 + seed)
        x = random_stiefel(rng, 7, 3)
        o = orthonormalize(rng.uniform(-1, 1, size=(3, 3))).basis
        rotated = StiefelPoint(x.basis @ o)
        assert projection_distance(x, rotated).distance <= 1e-10


class TestTraceObjective:
    def test_identity_matrix(self):
        rng = np.random.default_rng(1)
        x = random_stiefel(rng, 5, 3)
        gram = GramOperator(np.eye(5))
        assert trace_objective(gram.apply, x) == pytest.approx(-1.5, abs=1e-12)

    def test_top_singular_vector(self):
        a = np.diag([2.0, 1.0])
        x = StiefelPoint(np.eye(2)[:, :1])
        gram = GramOperator(a)
        assert trace_objective(gram.apply, x) == pytest.approx(-2.0, abs=1e-14)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_dense_trace(self, seed):
        rng = np.random.default_rng(300 + seed)
        a = rng.uniform(-1, 1, size=(6, 9))
        x = random_stiefel(rng, 6, 2)
        gram = GramOperator(a)
        want = -0.5 * np.trace(x.basis.T @ a @ a.T @ x.basis)
        assert trace_objective(gram.apply, x) == pytest.approx(want, rel=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_rotation_invariance(self, seed):
        rng = np.random.default_rng(400 + seed)
        a = rng.uniform(-1, 1, size=(7, 11))
        x = random_stiefel(rng, 7, 3)
        o = orthonormalize(rng.uniform(-1, 1, size=(3, 3))).basis
        gram = GramOperator(a)
        v1 = trace_objective(gram.apply, x)
        v2 = trace_objective(gram.apply, StiefelPoint(x.basis @ o))
        assert v1 == pytest.approx(v2, abs=1e-10)


class TestKktResidual:
    def test_dominant_subspace_is_stationary(self):
        rng = np.random.default_rng(7)
        a = rng.uniform(-1, 1, size=(8, 12))
        u, _, _ = np.linalg.svd(a, full_matrices=False)
        z = StiefelPoint(u[:, :3])
        raw, scaled = kkt_residual(GramOperator(a), z)
        assert raw <= 1e-10
        assert scaled <= 1e-10

    def test_non_dominant_eigenvector_is_stationary(self):
        a = np.diag([2.0, 1.0, 0.0])  # A A' = diag(4, 1, 0)
        z = StiefelPoint(np.eye(3)[:, 1:2])
        raw, _ = kkt_residual(GramOperator(a), z)
        assert raw <= 1e-14

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_dense_oracle(self, seed):
        rng = np.random.default_rng(500 + seed)
        a = rng.uniform(-1, 1, size=(7, 10))
        z = random_stiefel(rng, 7, 2)
        raw, scaled = kkt_residual(GramOperator(a), z)
        aat = a @ a.T
        dense = (np.eye(7) - z.basis @ z.basis.T) @ aat @ z.basis
        assert raw == pytest.approx(np.linalg.norm(dense), rel=1e-12)
        assert scaled == pytest.approx(np.linalg.norm(dense) / np.sum(a * a), rel=1e-12)


def test_ensure_finite_rejects_nan():
    with pytest.raises(NonFiniteMatrix):
        ensure_finite(np.array([[1.0, np.nan]]))
    with pytest.raises(NonFiniteMatrix):
        ensure_finite(np.array([np.inf]))
