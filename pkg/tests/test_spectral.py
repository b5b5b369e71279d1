import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import linalg, stats

from analysis.geometry import analytic_spectrum, reference_grid, sample_uniform
from analysis.graph import build_similarity, laplacian
from analysis.spectral import (
    align_spectra,
    eigenfunction_envelope,
    eigenvalue_envelope,
    estimate_rho,
    exact_eigensystem,
    nn_transport,
    smallest_eigenpairs,
    spectral_report,
    subspace_distance,
)
from utils.errors import AlignmentError, ConfigurationError, DimensionError, StructureError


class TestSmallestEigenpairs:
    def test_first_pair_is_exact_constant(self, torus_eig):
        assert torus_eig.eigenvalues[0] == 0.0
        assert_array_equal(torus_eig.eigenvectors[:, 0], np.ones(torus_eig.N))

    def test_sorted_and_nonnegative(self, torus_eig):
        lam = torus_eig.eigenvalues
        assert np.all(np.diff(lam) >= 0)
        assert np.all(lam >= 0)

    def test_empirical_orthonormality(self, torus_eig):
        V = torus_eig.eigenvectors
        assert_allclose(V.T @ V / torus_eig.N, np.eye(torus_eig.k), atol=1e-8)

    def test_sign_convention(self, torus_eig):
        V = torus_eig.eigenvectors
        for j in range(1, torus_eig.k):
            pivot = np.argmax(np.abs(V[:, j]))
            assert V[pivot, j] > 0

    def test_residuals_within_bound(self, torus_eig):
        bound = torus_eig.tol * (1.0 + torus_eig.eigenvalues) * math.sqrt(torus_eig.N)
        assert np.all(torus_eig.residuals <= bound)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_dense_oracle(self, torus2, seed):
        N = 150 + 15 * seed
        cloud = sample_uniform(torus2, N, seed=1000 + seed)
        lap = laplacian(build_similarity(cloud, 0.3))
        eig = smallest_eigenpairs(lap, 20, seed=seed)
        dense = linalg.eigh(lap.matrix.toarray(), eigvals_only=True)[:20]
        assert_allclose(eig.eigenvalues[1:], dense[1:], rtol=1e-8)
        assert abs(dense[0]) <= 1e-8 * dense[-1]

    def test_dense_path_for_tiny_graphs(self, torus2):
        cloud = sample_uniform(torus2, 40, seed=2)
        lap = laplacian(build_similarity(cloud, 0.45))
        eig = smallest_eigenpairs(lap, 39)
        dense = linalg.eigh(lap.matrix.toarray(), eigvals_only=True)
        assert_allclose(eig.eigenvalues[1:], dense[1:39], rtol=1e-8)

    def test_deterministic_for_fixed_seed(self, torus_lap):
        a = smallest_eigenpairs(torus_lap, 8, seed=3)
        b = smallest_eigenpairs(torus_lap, 8, seed=3)
        assert_array_equal(a.eigenvalues, b.eigenvalues)
        assert_array_equal(a.eigenvectors, b.eigenvectors)

    def test_k_must_be_below_N(self, torus_lap):
        with pytest.raises(DimensionError):
            smallest_eigenpairs(torus_lap, torus_lap.N)
        with pytest.raises(DimensionError):
            smallest_eigenpairs(torus_lap, 0)

    def test_tolerance_range(self, torus_lap):
        with pytest.raises(ConfigurationError):
            smallest_eigenpairs(torus_lap, 4, tol=1e-2)

    def test_disconnected_graph_rejected(self, torus2):
        cloud = sample_uniform(torus2, 200, seed=3)
        lap = laplacian(build_similarity(cloud, 0.01))
        with pytest.raises(StructureError):
            smallest_eigenpairs(lap, 4)

    def test_truncate(self, torus_eig):
        short = torus_eig.truncate(4)
        assert short.k == 4
        assert_array_equal(short.eigenvalues, torus_eig.eigenvalues[:4])
        with pytest.raises(DimensionError):
            torus_eig.truncate(torus_eig.k + 1)


class TestTransport:
    def test_cloud_points_map_to_themselves(self, torus_cloud):
        result = nn_transport(torus_cloud, torus_cloud.points[:25])
        assert_array_equal(result.indices, np.arange(25))
        assert result.rho == 0.0

    def test_rho_positive_and_small(self, torus_cloud):
        result = estimate_rho(torus_cloud, 2500)
        assert result.n_queries == 2500
        assert 0.0 < result.rho < 0.2

    def test_interpolate(self, torus_cloud):
        values = np.arange(torus_cloud.N, dtype=float)
        result = nn_transport(torus_cloud, torus_cloud.points[[3, 7]])
        assert_array_equal(result.interpolate(values), [3.0, 7.0])

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_rho_shrinks_when_cloud_quadruples(self, torus2, seed):
        coarse = estimate_rho(sample_uniform(torus2, 500, seed=seed), 10000).rho
        fine = estimate_rho(sample_uniform(torus2, 2000, seed=seed), 10000).rho
        assert fine < coarse


def test_subspace_distance_rotation_invariant():
    rng = np.random.default_rng(0)
    A = np.linalg.qr(rng.standard_normal((50, 3)))[0]
    Q = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    assert subspace_distance(A, A @ Q) < 1e-6
    B = np.linalg.qr(rng.standard_normal((50, 3)))[0]
    assert subspace_distance(A, B) > 0.1


class TestAlignment:
    def test_exact_injection_has_zero_error(self, torus_cloud, torus2):
        continuum = analytic_spectrum(torus2, 9)
        eig = exact_eigensystem(continuum, torus_cloud, 9)
        aligned = align_spectra(eig, continuum, torus_cloud)
        report = spectral_report(aligned, torus_cloud, 0.15, 0.05)
        assert_array_equal(report.eig_abs_error, np.zeros(9))
        assert np.max(report.efun_sup_error) < 1e-8
        assert report.mean_relative_error(2, 6) == 0.0

    def test_rotations_are_orthogonal(self, torus_eig, torus_cloud, torus2):
        continuum = analytic_spectrum(torus2, 12)
        aligned = align_spectra(torus_eig, continuum, torus_cloud)
        for idx, R in aligned.rotations.items():
            assert_allclose(R @ R.T, np.eye(len(idx)), atol=1e-12)
        assert aligned.p == 12

    def test_cut_multiplet_warns(self, torus_eig, torus_cloud, torus2):
        continuum = analytic_spectrum(torus2, 12)
        aligned = align_spectra(torus_eig.truncate(3), continuum, torus_cloud)
        assert aligned.p == 3
        assert aligned.warnings

    def test_continuum_at_matches_cloud_values(self, torus_eig, torus_cloud, torus2):
        continuum = analytic_spectrum(torus2, 12)
        aligned = align_spectra(torus_eig, continuum, torus_cloud)
        assert_allclose(aligned.continuum_at(torus_cloud.points), aligned.continuum_values, atol=1e-12)

    def test_continuum_at_rotates_cut_multiplets_whole(self, torus_eig, torus_cloud, torus2):
        continuum = analytic_spectrum(torus2, 12)
        aligned = align_spectra(torus_eig, continuum, torus_cloud)
        assert not np.allclose(aligned.rotations[(1, 2, 3, 4)], np.eye(4))
        grid = reference_grid(torus2, 500)
        assert_allclose(aligned.continuum_at(grid, 3), aligned.continuum_at(grid, 5)[:, :3], atol=1e-12)
        assert_allclose(aligned.continuum_at(torus_cloud.points, 3), aligned.continuum_values[:, :3], atol=1e-12)

    def test_procrustes_beats_random_rotations(self, torus_eig, torus_cloud, torus2):
        continuum = analytic_spectrum(torus2, 12)
        aligned = align_spectra(torus_eig, continuum, torus_cloud)
        idx = [1, 2, 3, 4]
        block = continuum.evaluate(torus_cloud.points, np.array(idx))
        target = torus_eig.eigenvectors[:, idx]
        best = np.linalg.norm(block @ aligned.rotations[tuple(idx)] - target)
        assert best <= np.linalg.norm(block - target) + 1e-12
        for Q in stats.ortho_group.rvs(dim=4, size=100, random_state=3):
            assert best <= np.linalg.norm(block @ Q - target) + 1e-12

    def test_multiplet_distance_matches_projector_difference(self, torus_eig, torus_cloud, torus2):
        continuum = analytic_spectrum(torus2, 12)
        aligned = align_spectra(torus_eig, continuum, torus_cloud)
        idx = [1, 2, 3, 4]
        Qd, _ = np.linalg.qr(torus_eig.eigenvectors[:, idx])
        Qc, _ = np.linalg.qr(continuum.evaluate(torus_cloud.points, np.array(idx)))
        oracle = np.linalg.norm(Qd @ Qd.T - Qc @ Qc.T)
        assert_allclose(aligned.subspace_distances[tuple(idx)], oracle, atol=1e-8)

    def test_point_count_mismatch(self, torus_eig, torus2):
        continuum = analytic_spectrum(torus2, 12)
        with pytest.raises(AlignmentError):
            align_spectra(torus_eig, continuum, sample_uniform(torus2, 10, seed=0))

    def test_eigenvalues_close_to_continuum(self, torus2):
        cloud = sample_uniform(torus2, 3000, seed=7)
        from analysis.schedule import GIVEN_N, schedule
        zeta = schedule(2, 3.5, 0.5, GIVEN_N, 3000, zeta_constant=0.2).zeta
        lap = laplacian(build_similarity(cloud, zeta))
        continuum = analytic_spectrum(torus2, 9)
        aligned = align_spectra(smallest_eigenpairs(lap, 9, seed=1), continuum, cloud)
        report = spectral_report(aligned, cloud, zeta, estimate_rho(cloud, 10000).rho)
        assert report.mean_relative_error(2, 6) < 0.2
        assert len(report.to_frame()) == 9

    def test_sphere_triplet_aligned_and_accurate(self, sphere):
        cloud = sample_uniform(sphere, 3000, seed=4)
        lap = laplacian(build_similarity(cloud, 0.1))
        continuum = analytic_spectrum(sphere, 4)
        aligned = align_spectra(smallest_eigenpairs(lap, 4, seed=1), continuum, cloud)
        assert aligned.clusters[:2] == ((0,), (1, 2, 3))
        for R in aligned.rotations.values():
            assert_allclose(R @ R.T, np.eye(R.shape[0]), atol=1e-12)
        assert aligned.subspace_distances[(1, 2, 3)] < 0.5
        report = spectral_report(aligned, cloud, 0.1, estimate_rho(cloud, 10000).rho)
        assert report.mean_relative_error(2, 4) < 0.25


def test_envelopes():
    lam = np.array([0.0, 4.0, 9.0])
    assert_allclose(eigenvalue_envelope(lam, 0.01, 0.1), lam * (0.1 + 0.1 * np.sqrt(lam)))
    env = eigenfunction_envelope(lam, 2, 0.01, 0.1)
    assert env[0] == 0.0
    assert_allclose(env[2], 9.0 ** 3 * 3 ** 1.5 * math.sqrt(0.1 + 0.3))
