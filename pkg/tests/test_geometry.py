import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from analysis.geometry import (
    SMOOTH_TRUTH_COEFFICIENTS,
    analytic_spectrum,
    geodesic_distance,
    lacunary_terms,
    make_truth,
    reference_grid,
    sample_uniform,
    weyl_ratios,
)
from models.manifold import ManifoldSpec, multiplet_clusters
from utils.errors import ConfigurationError, DomainError, UnsupportedError


class TestManifoldSpec:
    def test_aliases_normalize(self):
        assert ManifoldSpec("torus", 3).kind == "flat_torus"
        assert ManifoldSpec("S2", 2).kind == "sphere"

    @pytest.mark.parametrize("kind,m", [("sphere", 3), ("flat_torus", 1), ("klein", 2)])
    def test_unsupported_combinations(self, kind, m):
        with pytest.raises(ConfigurationError):
            ManifoldSpec(kind, m)

    def test_sphere_has_unit_area(self, sphere):
        assert_allclose(4.0 * math.pi * sphere.radius ** 2, 1.0, rtol=1e-14)
        assert sphere.d == 3


class TestSampling:
    def test_same_seed_same_cloud(self, torus2):
        a = sample_uniform(torus2, 50, seed=3)
        b = sample_uniform(torus2, 50, seed=3)
        c = sample_uniform(torus2, 50, seed=4)
        assert_array_equal(a.points, b.points)
        assert not np.array_equal(a.points, c.points)

    def test_sphere_points_on_surface(self, sphere):
        cloud = sample_uniform(sphere, 1000, seed=1)
        assert_allclose(np.linalg.norm(cloud.points, axis=1), sphere.radius, rtol=1e-12)

    def test_torus_points_in_unit_cube(self, torus2):
        pts = sample_uniform(torus2, 1000, seed=2).points
        assert pts.min() >= 0.0 and pts.max() < 1.0

    def test_sphere_mean_near_origin(self, sphere):
        N = 100_000
        pts = sample_uniform(sphere, N, seed=3).points
        bound = 5.0 * (sphere.radius / math.sqrt(3.0)) / math.sqrt(N)
        assert np.all(np.abs(pts.mean(axis=0)) < bound)

    def test_points_are_read_only(self, torus2):
        cloud = sample_uniform(torus2, 5, seed=0)
        with pytest.raises(ValueError):
            cloud.points[0, 0] = 0.5

    def test_zero_points_rejected(self, torus2):
        with pytest.raises(ConfigurationError):
            sample_uniform(torus2, 0, seed=0)


class TestGeodesicDistance:
    def test_zero_on_diagonal(self, sphere):
        x = sample_uniform(sphere, 10, seed=5).points
        assert_array_equal(geodesic_distance(sphere, x, x), np.zeros(10))

    def test_antipodal_points(self, sphere):
        r = sphere.radius
        d = geodesic_distance(sphere, np.array([0.0, 0.0, r]), np.array([0.0, 0.0, -r]))
        assert_allclose(d, math.pi * r, rtol=1e-12)

    def test_torus_wraps_around(self, torus2):
        d = geodesic_distance(torus2, np.array([0.05, 0.5]), np.array([0.95, 0.5]))
        assert_allclose(d, 0.1, rtol=1e-12)

    def test_off_manifold_point_rejected(self, sphere):
        with pytest.raises(DomainError):
            geodesic_distance(sphere, np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, sphere.radius]))


class TestAnalyticSpectrum:
    def test_torus_eigenvalues(self, torus2):
        spec = analytic_spectrum(torus2, 9)
        lam = 4.0 * math.pi ** 2
        assert_allclose(spec.eigenvalues, [0.0] + [lam] * 4 + [2 * lam] * 4)

    def test_torus_mode_order(self, torus2):
        spec = analytic_spectrum(torus2, 5)
        assert spec.modes[0] == ((0, 0), "const")
        assert spec.modes[1] == ((1, 0), "cos")
        assert spec.modes[2] == ((1, 0), "sin")
        assert spec.modes[3] == ((0, 1), "cos")

    def test_sphere_eigenvalues(self, sphere):
        spec = analytic_spectrum(sphere, 9)
        expected = np.array([0] + [2] * 3 + [6] * 5) / sphere.radius ** 2
        assert_allclose(spec.eigenvalues, expected, rtol=1e-12)

    def test_sphere_zonal_mode_at_pole(self, sphere):
        spec = analytic_spectrum(sphere, 4)
        pole = np.array([[0.0, 0.0, sphere.radius]])
        assert_allclose(spec.evaluate(pole)[0, 2], math.sqrt(3.0), rtol=1e-12)

    def test_torus_basis_orthonormal_on_lattice(self, torus2):
        spec = analytic_spectrum(torus2, 13)
        grid = reference_grid(torus2, 64 * 64)
        phi = spec.evaluate(grid)
        assert_allclose(phi.T @ phi / grid.shape[0], np.eye(13), atol=1e-10)

    def test_sphere_basis_nearly_orthonormal(self, sphere):
        spec = analytic_spectrum(sphere, 9)
        grid = reference_grid(sphere, 20000)
        phi = spec.evaluate(grid)
        assert_allclose(phi.T @ phi / grid.shape[0], np.eye(9), atol=1e-2)

    def test_first_mode_is_constant_one(self, sphere, torus2):
        for manifold in (sphere, torus2):
            pts = sample_uniform(manifold, 20, seed=9).points
            assert_array_equal(analytic_spectrum(manifold, 3).evaluate(pts)[:, 0], np.ones(20))

    def test_table_limit(self, torus2):
        with pytest.raises(ConfigurationError):
            analytic_spectrum(torus2, 10 ** 7)
        with pytest.raises(ConfigurationError):
            analytic_spectrum(torus2, 0)

    def test_multiplet_clusters(self, torus2):
        spec = analytic_spectrum(torus2, 9)
        assert multiplet_clusters(spec.eigenvalues) == ((0,), (1, 2, 3, 4), (5, 6, 7, 8))

    def test_weyl_ratios_bounded(self, torus2):
        ratios = weyl_ratios(analytic_spectrum(torus2, 200))
        assert ratios.shape == (199,)
        assert np.all(ratios > 1.0) and np.all(ratios < 100.0)


class TestTruth:
    def test_single_mode_truth_and_laplacian(self, torus2):
        truth = make_truth(torus2, "smooth_low_frequency", coefficients=(0.0, 1.0))
        pts = sample_uniform(torus2, 30, seed=2).points
        expected = math.sqrt(2.0) * np.cos(2.0 * math.pi * pts[:, 0])
        assert_allclose(truth(pts), expected, atol=1e-12)
        assert_allclose(truth.laplacian(pts), 4.0 * math.pi ** 2 * expected, atol=1e-9)
        assert truth.is_smooth

    def test_default_coefficients(self, torus2):
        truth = make_truth(torus2, "smooth_low_frequency")
        assert truth.coefficients == SMOOTH_TRUTH_COEFFICIENTS

    def test_lacunary_terms(self):
        assert lacunary_terms(2.5) == 11
        assert 2.0 ** (-2.5 * lacunary_terms(2.5)) < 1e-8

    def test_lacunary_on_sphere_unsupported(self, sphere):
        with pytest.raises(UnsupportedError):
            make_truth(sphere, "lacunary", beta=2.5)

    def test_lacunary_bounded(self, torus2):
        truth = make_truth(torus2, "lacunary", beta=1.5)
        pts = sample_uniform(torus2, 500, seed=1).points
        bound = sum(2.0 ** (-1.5 * j) for j in range(lacunary_terms(1.5) + 1))
        assert np.all(np.abs(truth(pts)) <= bound + 1e-12)
        assert truth.beta == 1.5


def test_reference_grid_size(torus2, sphere):
    assert reference_grid(torus2, 100).shape == (100, 2)
    grid = reference_grid(sphere, 500)
    assert grid.shape == (500, 3)
    assert_allclose(np.linalg.norm(grid, axis=1), sphere.radius, rtol=1e-12)
