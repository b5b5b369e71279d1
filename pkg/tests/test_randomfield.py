import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from analysis.geometry import analytic_spectrum, reference_grid
from analysis.randomfield import (
    coupled_discrepancy,
    default_truncation,
    field_rate_envelope,
    sample_continuum_field,
    sample_discrete_field,
    tail_proxy,
)
from analysis.spectral import align_spectra, exact_eigensystem
from models.field import PriorParams, check_smoothness
from utils.errors import AlignmentError, ConfigurationError, DimensionError, RangeError
from utils.seeding import derive_seed


@pytest.fixture(scope="module")
def params(torus_eig):
    return PriorParams(s=4.0, k=torus_eig.k, zeta=0.15, m=2)


class TestDiscreteField:
    def test_constant_mode(self, torus_eig, params):
        xi = np.zeros(params.k)
        xi[0] = 1.0
        sample = sample_discrete_field(torus_eig, params, xi=xi)
        assert_array_equal(sample.values, np.ones(torus_eig.N))

    def test_zero_coefficients(self, torus_eig, params):
        sample = sample_discrete_field(torus_eig, params, xi=np.zeros(params.k))
        assert_array_equal(sample.values, np.zeros(torus_eig.N))

    def test_xi_recorded_and_reproducible(self, torus_eig, params):
        a = sample_discrete_field(torus_eig, params, seed=7)
        b = sample_discrete_field(torus_eig, params, xi=a.xi)
        assert_array_equal(a.values, b.values)
        assert a.kind == "discrete" and a.n_modes == params.k

    def test_coefficient_variances(self, torus_eig, params):
        n = 5000
        V = torus_eig.eigenvectors
        coeffs = np.empty((n, params.k))
        for r in range(n):
            sample = sample_discrete_field(torus_eig, params, seed=derive_seed(99, r))
            coeffs[r] = V.T @ sample.values / torus_eig.N
        expected = (1.0 + torus_eig.eigenvalues) ** (-params.s)
        observed = coeffs.var(axis=0, ddof=1)
        stderr = expected * math.sqrt(2.0 / (n - 1))
        for i in (0, 1, params.k - 1):
            assert abs(observed[i] - expected[i]) < 5.0 * stderr[i]

    def test_smoother_prior_has_smaller_norm(self, torus_eig):
        xi = np.random.default_rng(3).standard_normal(torus_eig.k)
        rough = sample_discrete_field(torus_eig, PriorParams(s=3.0, k=torus_eig.k, zeta=0.15, m=2), xi=xi)
        smooth = sample_discrete_field(torus_eig, PriorParams(s=5.0, k=torus_eig.k, zeta=0.15, m=2), xi=xi)
        assert np.linalg.norm(smooth.values) <= np.linalg.norm(rough.values)

    def test_prior_scale_multiplies(self, torus_eig, params):
        scaled = PriorParams(s=4.0, k=params.k, zeta=0.15, m=2, prior_scale=3.0)
        a = sample_discrete_field(torus_eig, params, seed=1)
        b = sample_discrete_field(torus_eig, scaled, seed=1)
        assert_allclose(b.values, 3.0 * a.values, rtol=1e-12, atol=1e-12)

    def test_k_beyond_eigensystem(self, torus_eig):
        with pytest.raises(DimensionError):
            sample_discrete_field(torus_eig, PriorParams(s=4.0, k=torus_eig.k + 1, zeta=0.15, m=2), seed=0)

    def test_smoothness_range(self):
        with pytest.raises(RangeError):
            PriorParams(s=2.5, k=3, zeta=0.1, m=2)
        check_smoothness(2, 2.1, rigor="flat", manifold_kind="flat_torus")
        with pytest.raises(ConfigurationError):
            check_smoothness(2, 3.0, rigor="flat", manifold_kind="sphere")


class TestContinuumField:
    def test_single_mode_value(self, torus2):
        spectrum = analytic_spectrum(torus2, 5)
        xi = np.array([0.0, 1.0, 0.0, 0.0, 0.0])
        sample = sample_continuum_field(spectrum, 4.0, 5, np.array([[0.0, 0.0]]), xi=xi)
        expected = math.sqrt(2.0) / (1.0 + 4.0 * math.pi ** 2) ** 2
        assert_allclose(sample.values[0], expected, rtol=1e-12)

    def test_constant_mode(self, sphere):
        spectrum = analytic_spectrum(sphere, 4)
        grid = reference_grid(sphere, 50)
        sample = sample_continuum_field(spectrum, 3.0, 4, grid, xi=np.array([1.0, 0.0, 0.0, 0.0]))
        assert_allclose(sample.values, np.ones(50), rtol=1e-14)

    def test_same_xi_same_values(self, torus2):
        spectrum = analytic_spectrum(torus2, 9)
        grid = reference_grid(torus2, 100)
        a = sample_continuum_field(spectrum, 4.0, 9, grid, seed=5)
        b = sample_continuum_field(spectrum, 4.0, 9, grid, xi=a.xi)
        assert_array_equal(a.values, b.values)

    def test_K_beyond_table(self, torus2):
        spectrum = analytic_spectrum(torus2, 5)
        with pytest.raises(ConfigurationError):
            sample_continuum_field(spectrum, 4.0, 6, np.zeros((1, 2)), seed=0)


def test_default_truncation_meets_tolerance(torus2):
    import config
    K = default_truncation(torus2, 4.0, tol=1e-3)
    table = analytic_spectrum(torus2, config.MODE_TABLE_SIZE)
    assert tail_proxy(table, 4.0, K) < 1e-3
    assert tail_proxy(table, 4.0, K - 1) >= 1e-3


def test_field_rate_envelope():
    assert_allclose(field_rate_envelope(16, 4.0, 2, 0.01, 0.1), 16 ** (-3.0 / 2.0) + 0.1 + 0.1)


class TestCoupledDiscrepancy:
    def test_constants_only_is_zero(self, torus_eig, torus_cloud, torus2):
        aligned = align_spectra(torus_eig, analytic_spectrum(torus2, 12), torus_cloud)
        params = PriorParams(s=4.0, k=1, zeta=0.15, m=2)
        est = coupled_discrepancy(aligned, torus_cloud, params, K=1, n_mc=10, seed=1, grid_size=400)
        assert est.mean == 0.0
        assert est.stderr == 0.0

    def test_positive_and_reproducible(self, torus_eig, torus_cloud, torus2):
        aligned = align_spectra(torus_eig, analytic_spectrum(torus2, 20), torus_cloud)
        params = PriorParams(s=4.0, k=12, zeta=0.15, m=2)
        a = coupled_discrepancy(aligned, torus_cloud, params, K=20, n_mc=40, seed=3, grid_size=900)
        b = coupled_discrepancy(aligned, torus_cloud, params, K=20, n_mc=40, seed=3, grid_size=900, n_jobs=2)
        assert a.mean > 0.0
        assert_array_equal(a.samples, b.samples)
        assert a.to_dict()["n_mc"] == 40

    def test_exact_eigensystem_only_sees_interpolation(self, torus_cloud, torus2):
        spectrum = analytic_spectrum(torus2, 9)
        aligned = align_spectra(exact_eigensystem(spectrum, torus_cloud, 9), spectrum, torus_cloud)
        params = PriorParams(s=4.0, k=9, zeta=0.15, m=2)
        est = coupled_discrepancy(aligned, torus_cloud, params, K=9, n_mc=40, seed=3, grid_size=900)
        assert est.mean < 0.01

    def test_requires_alignment(self, torus_eig, torus_cloud):
        params = PriorParams(s=4.0, k=2, zeta=0.15, m=2)
        with pytest.raises(AlignmentError):
            coupled_discrepancy(torus_eig, torus_cloud, params, K=2, n_mc=10, seed=0)

    def test_cloud_mismatch(self, torus_eig, torus_cloud, torus2):
        from analysis.geometry import sample_uniform
        aligned = align_spectra(torus_eig, analytic_spectrum(torus2, 12), torus_cloud)
        params = PriorParams(s=4.0, k=2, zeta=0.15, m=2)
        with pytest.raises(AlignmentError):
            coupled_discrepancy(aligned, sample_uniform(torus2, 50, seed=1), params, K=2, n_mc=10, seed=0)
