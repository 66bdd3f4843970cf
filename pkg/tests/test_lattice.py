"""Unit tests for the lattice packing machinery."""

import math

import numpy as np
import pytest

from manigrad.lattice import (
    CertificationError,
    LatticeBasis,
    SingularBasisError,
    default_pack_params,
    lattice_points,
    pack,
    packing_density,
    sample_neighbors,
    shortest_vector,
    shortest_vector_bruteforce,
    sl_retract,
    unit_ball_volume,
)

HEXAGONAL = np.array([[1.0, 0.5], [0.0, math.sqrt(3.0) / 2.0]])


def random_basis(n, rng):
    while True:
        b = rng.standard_normal((n, n))
        if abs(np.linalg.det(b)) > 0.3:
            return sl_retract(b)


class TestRetraction:
    def test_unit_determinant(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            b = rng.standard_normal((3, 3))
            if abs(np.linalg.det(b)) < 1e-6:
                continue
            out = sl_retract(b)
            assert np.linalg.det(out) == pytest.approx(1.0, abs=1e-10)

    def test_fixed_point(self):
        r = np.array([[0.0, -1.0], [1.0, 0.0]])  # rotation, det 1
        np.testing.assert_allclose(sl_retract(r), r, atol=1e-14)

    def test_negative_determinant_flips_first_column(self):
        b = np.diag([1.0, -1.0])
        out = sl_retract(b)
        assert np.linalg.det(out) == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(out, np.diag([-1.0, -1.0]))

    def test_singular_rejected(self):
        with pytest.raises(SingularBasisError):
            sl_retract(np.zeros((2, 2)))


class TestLatticeBasis:
    def test_constructor_retracts(self):
        b = LatticeBasis(2.0 * np.eye(2))
        assert np.linalg.det(b.columns) == pytest.approx(1.0, abs=1e-12)
        assert b.n == 2

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            LatticeBasis(np.zeros((2, 3)))


class TestShortestVector:
    def test_identity(self):
        res = shortest_vector(LatticeBasis(np.eye(3)))
        assert res.length == pytest.approx(1.0)
        # tie-break: lexicographically smallest coefficients with a
        # positive leading entry
        np.testing.assert_array_equal(np.abs(res.coeffs).sum(), 1)
        lead = res.coeffs[np.flatnonzero(res.coeffs)[0]]
        assert lead > 0

    def test_hexagonal(self):
        basis = LatticeBasis(HEXAGONAL)
        res = shortest_vector(basis)
        # unit-determinant hexagonal lattice: g = (4/3)^(1/4)
        assert res.length == pytest.approx((4.0 / 3.0) ** 0.25, rel=1e-12)

    def test_skewed_basis_needs_reduction(self):
        # heavily sheared Z^2: shortest vector is a nontrivial combination
        b = np.array([[1.0, 7.0], [0.0, 1.0]])
        res = shortest_vector(b)
        assert res.length == pytest.approx(1.0, rel=1e-12)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(42)
        for n in (2, 3, 4):
            for _ in range(15):
                b = random_basis(n, rng)
                enum = shortest_vector(b)
                brute = shortest_vector_bruteforce(b)
                assert enum.length == pytest.approx(brute.length, rel=1e-10)
                np.testing.assert_array_equal(enum.coeffs, brute.coeffs)

    def test_rank_deficient(self):
        with pytest.raises(ValueError):
            shortest_vector(np.array([[1.0, 1.0], [1.0, 1.0]]))


class TestBruteforce:
    def test_uncertifiable_bound(self):
        with pytest.raises(CertificationError):
            shortest_vector_bruteforce(np.eye(2), bound=0)


class TestDensity:
    def test_unit_ball_volumes(self):
        assert unit_ball_volume(2) == pytest.approx(math.pi)
        assert unit_ball_volume(3) == pytest.approx(4.0 * math.pi / 3.0)

    def test_hexagonal_density(self):
        # optimal 2-D packing: pi / (2 sqrt(3))
        assert packing_density(LatticeBasis(HEXAGONAL)) == pytest.approx(
            math.pi / (2.0 * math.sqrt(3.0)), rel=1e-12)

    def test_square_density(self):
        assert packing_density(LatticeBasis(np.eye(2))) == pytest.approx(
            math.pi / 4.0, rel=1e-12)


class TestSampling:
    def test_neighbors_on_manifold(self):
        out = sample_neighbors(LatticeBasis(np.eye(3)), sigma=0.05, m=12, seed=0)
        assert len(out) == 12
        for nb in out:
            assert np.linalg.det(nb.columns) == pytest.approx(1.0, abs=1e-10)

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            sample_neighbors(LatticeBasis(np.eye(2)), sigma=0.0, m=1, seed=0)

    def test_deterministic(self):
        a = sample_neighbors(LatticeBasis(np.eye(2)), sigma=0.1, m=3, seed=5)
        b = sample_neighbors(LatticeBasis(np.eye(2)), sigma=0.1, m=3, seed=5)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.columns, y.columns)


class TestPack:
    def test_short_run_structure(self):
        res = pack(2, params=default_pack_params(max_iters=80), seed=0)
        assert res.trace.shape[1] == 4
        assert res.minkowski_violations == 0
        assert res.best_density >= math.pi / 4.0 - 1e-9  # never worse than Z^2
        assert np.linalg.det(res.best_basis.columns) == pytest.approx(1.0, abs=1e-9)
        # density column consistent with the g column
        g = res.trace[:, 1]
        np.testing.assert_allclose(res.trace[:, 2],
                                   unit_ball_volume(2) * (g / 2.0) ** 2, rtol=1e-12)

    def test_bad_dimension(self):
        with pytest.raises(ValueError):
            pack(1)


class TestLatticePoints:
    def test_contains_origin_and_generators(self):
        pts = lattice_points(LatticeBasis(np.eye(2)), radius=1.5)
        as_set = {tuple(np.round(p, 9)) for p in pts}
        assert (0.0, 0.0) in as_set
        assert (1.0, 0.0) in as_set and (0.0, 1.0) in as_set
        for p in pts:
            assert np.linalg.norm(p) <= 1.5 + 1e-9
