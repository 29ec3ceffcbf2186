import numpy as np
import pytest

from dageq.graph import Dag
from dageq.sem import (
    NoiseSpec,
    Sem,
    analytic_covariance,
    sample_coefficients,
    sample_data,
    with_noise,
)

from conftest import max_rel_err


def dag_of(d, edges):
    a = np.zeros((d, d), dtype=bool)
    for i, j in edges:
        a[i, j] = True
    return Dag(a)


CHAIN2 = dag_of(2, [(0, 1)])


def chain2_sem(c=1.0, noise=None):
    coef = np.zeros((2, 2))
    coef[1, 0] = c
    return Sem(CHAIN2, coef, noise or NoiseSpec.gaussian())


class TestNoiseSpec:
    def test_variances(self):
        assert NoiseSpec.gaussian(0, 2).variance() == 4.0
        assert NoiseSpec.exponential(2).variance() == 0.25
        assert NoiseSpec.gumbel(0, 2).variance() == pytest.approx(np.pi**2 * 4 / 6)
        assert NoiseSpec.poisson(3).variance() == 3.0

    def test_validation(self):
        with pytest.raises(ValueError, match="stddev"):
            NoiseSpec.gaussian(0, 0)
        with pytest.raises(ValueError, match="rate"):
            NoiseSpec.exponential(-1)
        with pytest.raises(ValueError, match="scale"):
            NoiseSpec.gumbel(0, 0)
        with pytest.raises(ValueError, match="unknown noise kind"):
            NoiseSpec("cauchy", (1.0,))
        with pytest.raises(ValueError, match="parameter"):
            NoiseSpec("gaussian", (1.0,))

    def test_str_round_trips_parameters(self):
        assert str(NoiseSpec.gaussian(0, 1)) == "gaussian(0, 1)"
        assert str(NoiseSpec.exponential(1.5)) == "exponential(1.5)"

    def test_sample_moments(self, rng):
        for spec in (
            NoiseSpec.gaussian(0, 1),
            NoiseSpec.exponential(1),
            NoiseSpec.gumbel(0, 1),
            NoiseSpec.poisson(1),
        ):
            draws = spec.sample(rng, 100_000)
            assert draws.dtype == np.float64
            assert np.var(draws) == pytest.approx(spec.variance(), rel=0.05)


class TestSem:
    def test_sparsity_must_match_transposed_adjacency(self):
        coef = np.zeros((2, 2))
        coef[0, 1] = 0.7  # wrong direction for edge 0 -> 1
        with pytest.raises(ValueError, match="sparsity"):
            Sem(CHAIN2, coef, NoiseSpec.gaussian())

    def test_with_noise_keeps_graph_and_coefficients(self, rng):
        sem = sample_coefficients(dag_of(3, [(0, 1), (1, 2)]), 1.0, rng)
        swapped = with_noise(sem, NoiseSpec.poisson(1))
        assert swapped.dag == sem.dag
        assert np.array_equal(swapped.coef, sem.coef)
        assert swapped.noise.kind == "poisson"


class TestSampleCoefficients:
    def test_magnitudes_in_band(self, rng):
        sem = sample_coefficients(dag_of(5, [(0, 1), (0, 2), (1, 3), (2, 4)]), 1.0, rng)
        mags = np.abs(sem.coef[sem.coef != 0])
        assert mags.size == 4
        assert np.all((mags >= 0.5) & (mags <= 1.5))

    def test_edgeless_gives_zero_matrix(self, rng):
        sem = sample_coefficients(dag_of(3, []), 1.0, rng)
        assert not sem.coef.any()

    def test_sign_balance(self):
        # one big system instead of many small ones: every edge draw is iid
        d = 450
        a = np.zeros((d, d), dtype=bool)
        iu, ju = np.triu_indices(d, k=1)
        a[iu, ju] = True  # complete DAG: d(d-1)/2 > 1e5 edges
        sem = sample_coefficients(Dag(a), 1.0, np.random.default_rng(9))
        vals = sem.coef[sem.coef != 0]
        assert vals.size >= 100_000
        frac_negative = np.mean(vals < 0)
        assert abs(frac_negative - 0.5) < 0.02

    def test_rejects_bad_k(self, rng):
        with pytest.raises(ValueError, match="k"):
            sample_coefficients(CHAIN2, 0.0, rng)

    def test_sparsity_equals_transposed_adjacency(self, rng):
        dag = dag_of(4, [(0, 2), (1, 2), (2, 3)])
        sem = sample_coefficients(dag, 0.5, rng)
        assert np.array_equal(sem.coef != 0, dag.adj.T)


class TestAnalyticCovariance:
    def test_identity_case(self):
        sem = Sem(dag_of(2, []), np.zeros((2, 2)), NoiseSpec.gaussian())
        assert np.allclose(analytic_covariance(sem), np.eye(2))

    def test_chain_unit_coefficient(self):
        sigma = analytic_covariance(chain2_sem(c=1.0))
        assert np.allclose(sigma, [[1.0, 1.0], [1.0, 2.0]])

    def test_symmetric_positive_definite(self, rng):
        from dageq.graph import gen_er_dag

        for _ in range(10):
            sem = sample_coefficients(gen_er_dag(5, 5, rng), 1.0, rng)
            sigma = analytic_covariance(sem)
            assert np.allclose(sigma, sigma.T)
            assert np.linalg.eigvalsh(sigma).min() > 0

    def test_noise_variance_scales_diagonal(self):
        sem = Sem(dag_of(2, []), np.zeros((2, 2)), NoiseSpec.gaussian(0, 3))
        assert np.allclose(analytic_covariance(sem), 9 * np.eye(2))


class TestSampleData:
    def test_rejects_tiny_n(self, rng):
        with pytest.raises(ValueError, match="sample count"):
            sample_data(chain2_sem(), 1, rng)

    def test_edgeless_gaussian_unit_variance(self, rng):
        sem = Sem(dag_of(3, []), np.zeros((3, 3)), NoiseSpec.gaussian())
        data = sample_data(sem, 100_000, rng)
        assert np.allclose(data.values.var(axis=0), 1.0, rtol=0.05)

    def test_chain_variance_matches_oracle(self, rng):
        data = sample_data(chain2_sem(c=1.0), 100_000, rng)
        assert np.var(data.values[:, 1]) == pytest.approx(2.0, rel=0.05)

    def test_poisson_mean(self, rng):
        sem = Sem(dag_of(2, []), np.zeros((2, 2)), NoiseSpec.poisson(1))
        data = sample_data(sem, 100_000, rng)
        assert np.allclose(data.values.mean(axis=0), 1.0, rtol=0.05)

    def test_covariance_matches_oracle_all_families(self, rng):
        from dageq.graph import gen_er_dag

        for noise in (
            NoiseSpec.gaussian(0, 1),
            NoiseSpec.exponential(1),
            NoiseSpec.gumbel(0, 1),
            NoiseSpec.poisson(1),
        ):
            dag = gen_er_dag(4, 4, rng)
            sem = sample_coefficients(dag, 1.0, rng, noise)
            data = sample_data(sem, 100_000, rng)
            sample_cov = np.cov(data.values, rowvar=False)
            assert max_rel_err(sample_cov, analytic_covariance(sem), floor=0.05) < 0.05

    def test_deterministic_given_seed(self):
        a = sample_data(chain2_sem(), 100, np.random.default_rng(4))
        b = sample_data(chain2_sem(), 100, np.random.default_rng(4))
        assert np.array_equal(a.values, b.values)
