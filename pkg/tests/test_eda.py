import math

import numpy as np
import pytest

from natgen.core import SearchSpace, make_rng
from natgen.distributions import GaussianModel
from natgen.eda import (
    EdaConfig,
    IgoState,
    eda_run,
    expected_fitness,
    igo_gradient,
    igo_step,
    sample_model,
)
from natgen.errors import EvaluationError


def sphere(x):
    return -float(np.dot(x, x))


SPACE = SearchSpace.box(-5, 5, 2)


class TestEdaConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(pop_size=3), dict(parent_fraction=0.0), dict(parent_fraction=1.5), dict(pop_size=4, parent_fraction=0.25),
         dict(generations=-1), dict(model_family="cma")],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            EdaConfig(**kwargs)


class TestEdaRun:
    def test_zero_generations(self):
        hist = eda_run(SPACE, sphere, EdaConfig(generations=0), make_rng(0))
        assert len(hist) == 1 and hist[0].model is None

    @pytest.mark.parametrize("family", ["gaussian_full", "gaussian_diag"])
    def test_sphere_convergence(self, family):
        hist = eda_run(SPACE, sphere, EdaConfig(model_family=family), make_rng(0))
        assert len(hist) == 61
        final = hist[-1].population.genomes
        assert np.linalg.norm(final.mean(axis=0)) <= 0.1
        ratio = hist[0].population.genomes.var(axis=0) / final.var(axis=0)
        assert np.all(ratio >= 10)

    def test_offspring_come_from_sampler(self):
        seen = []

        def sampler(model, n, rng):
            draws = sample_model(model, n, rng)
            seen.append((model, draws.copy()))
            return draws

        hist = eda_run(SPACE, sphere, EdaConfig(generations=10), make_rng(1), sampler=sampler)
        assert len(seen) == 10
        for step, (model, draws) in zip(hist[1:], seen):
            assert step.model is model
            np.testing.assert_array_equal(step.population.genomes, SPACE.clip(draws))

    def test_samples_clipped(self):
        hist = eda_run(SPACE, lambda x: float(x.sum()), EdaConfig(generations=15), make_rng(2))
        for step in hist:
            assert all(SPACE.contains(g) for g in step.population.genomes)

    def test_elitism_keeps_best(self):
        hist = eda_run(SPACE, sphere, EdaConfig(generations=20, elitism=True), make_rng(3))
        best = [s.population.best().fitness for s in hist]
        assert all(b2 >= b1 for b1, b2 in zip(best, best[1:]))

    def test_deterministic(self):
        a = eda_run(SPACE, sphere, EdaConfig(generations=5), make_rng(5))
        b = eda_run(SPACE, sphere, EdaConfig(generations=5), make_rng(5))
        for sa, sb in zip(a, b):
            np.testing.assert_array_equal(sa.population.genomes, sb.population.genomes)

    def test_vae_family_runs(self):
        from natgen.vae import TrainConfig

        cfg = EdaConfig(pop_size=20, generations=2, model_family="vae", vae_train=TrainConfig(epochs=5, learning_rate=0.01), vae_hidden=8)
        hist = eda_run(SPACE, sphere, cfg, make_rng(0))
        assert len(hist) == 3
        assert hist[-1].population.genomes.shape == (20, 2)


class TestExpectedFitness:
    def test_constant(self):
        est, se = expected_fitness(GaussianModel(np.zeros(2), np.eye(2)), lambda x: 2.5, 100, make_rng(0))
        assert est == 2.5 and se == 0.0

    def test_linear(self):
        n, m, s2 = 20_000, 1.5, 4.0
        est, _ = expected_fitness(GaussianModel(np.array([m]), np.array([[s2]])), lambda x: float(x[0]), n, make_rng(1))
        assert abs(est - m) <= 3 * math.sqrt(s2 / n)

    def test_quadratic(self):
        m, s2 = 1.5, 4.0
        est, se = expected_fitness(GaussianModel(np.array([m]), np.array([[s2]])), lambda x: float(x[0] ** 2), 20_000, make_rng(2))
        assert abs(est - (m * m + s2)) <= 3 * se

    def test_needs_two(self):
        with pytest.raises(ValueError):
            expected_fitness(GaussianModel(np.zeros(1), np.eye(1)), sphere, 1, make_rng(0))

    def test_non_finite(self):
        with pytest.raises(EvaluationError):
            expected_fitness(GaussianModel(np.zeros(1), np.eye(1)), lambda x: math.nan, 5, make_rng(0))


class TestIgo:
    def test_invalid_state(self):
        with pytest.raises(ValueError):
            IgoState(np.zeros(2), np.zeros(2), step_size=0.0)
        with pytest.raises(ValueError):
            IgoState(np.zeros(2), np.zeros(2), batch=1)

    def test_flat_landscape_no_update(self):
        state = IgoState(np.array([1.0, -2.0]), np.zeros(2))
        rng = make_rng(0)
        for _ in range(200):
            nxt = igo_step(state, lambda x: 3.0, rng)
            np.testing.assert_array_equal(nxt.mean, state.mean)
            np.testing.assert_array_equal(nxt.log_var, state.log_var)

    def test_gradient_at_one(self):
        n = 100_000
        g = igo_gradient(IgoState(np.array([1.0]), np.zeros(1), batch=n), lambda x: -float(x[0] ** 2), make_rng(0))
        # Var[-(1+z)^2 z] = 34 - 4 for z ~ N(0,1); the baseline only lowers it
        se = math.sqrt(30.0 / n)
        assert abs(g.vanilla_mean[0] - (-2.0)) <= 3 * se

    def test_fisher_matches_quadrature(self):
        m, var = 0.7, 2.3
        nodes, weights = np.polynomial.hermite_e.hermegauss(40)
        weights = weights / weights.sum()
        z = nodes
        score = np.vstack([z / math.sqrt(var), 0.5 * (z * z - 1.0)])
        fisher = (score * weights) @ score.T
        np.testing.assert_allclose(fisher, np.diag([1 / var, 0.5]), rtol=0, atol=1e-10)

        state = IgoState(np.array([m, -m]), np.log([var, 0.4]), batch=32)
        g = igo_gradient(state, sphere, make_rng(4))
        inv_f = np.linalg.inv(fisher)
        np.testing.assert_allclose(g.natural_mean[0], inv_f[0, 0] * g.vanilla_mean[0], rtol=1e-10)
        np.testing.assert_allclose(g.natural_log_var, inv_f[1, 1] * g.vanilla_log_var, rtol=1e-10)
        np.testing.assert_allclose(g.natural_mean, state.variance * g.vanilla_mean, rtol=1e-10)

    def test_converges_on_quadratic(self):
        state = IgoState(np.array([3.0, 3.0]), np.full(2, math.log(4.0)), step_size=0.05, batch=64)
        rng = make_rng(0)
        for _ in range(200):
            state = igo_step(state, sphere, rng)
        assert np.linalg.norm(state.mean) < 0.2

    def test_rank_shaping_moves_towards_optimum(self):
        state = IgoState(np.array([3.0]), np.zeros(1), step_size=0.1, batch=64)
        rng = make_rng(0)
        for _ in range(50):
            state = igo_step(state, sphere, rng, rank_shaping=True)
        assert abs(state.mean[0]) < 3.0
