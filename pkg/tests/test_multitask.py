import itertools
import math

import numpy as np
import pytest
from scipy import stats

from natgen.core import Population, SearchSpace, make_rng
from natgen.distributions import GaussianModel, product_of_gaussians, sample_gaussian
from natgen.errors import StateError
from natgen.multitask import (
    MtecConfig,
    ProductMixtureSpec,
    TaskSpec,
    UnifiedMapping,
    enumerate_product_subsets,
    mtec_generation,
    mtec_run,
    product_components,
    sample_mixture_offspring,
    sample_product_mixture_offspring,
)

MODEL_A = GaussianModel(np.array([2.0, 8.0]), np.diag([0.2, 1.0]))
MODEL_B = GaussianModel(np.array([8.0, 2.0]), np.diag([1.0, 0.2]))
SIGMA_S = math.sqrt(0.2)


def parent_clouds(seed, n=500):
    rng = make_rng(seed)
    return sample_gaussian(MODEL_A, n, rng), sample_gaussian(MODEL_B, n, rng)


class TestUnifiedMapping:
    def test_affine(self):
        m = UnifiedMapping([SearchSpace.box(0, 10, 2)])
        np.testing.assert_allclose(m.unify([2.0, 8.0], 0), [0.2, 0.8])

    def test_endpoints(self):
        s = SearchSpace([-3.0, 1.0], [5.0, 2.0])
        m = UnifiedMapping([s])
        np.testing.assert_array_equal(m.unify(s.lower, 0), [0.0, 0.0])
        np.testing.assert_array_equal(m.unify(s.upper, 0), [1.0, 1.0])

    def test_round_trip_and_padding(self):
        small, big = SearchSpace.box(-2, 3, 2), SearchSpace.box(0, 100, 4)
        m = UnifiedMapping([small, big])
        assert m.dim == 4
        x = make_rng(0).uniform(-2, 3, 2)
        u = m.unify(x, 0)
        np.testing.assert_array_equal(u[2:], [0.5, 0.5])
        np.testing.assert_allclose(m.deunify(u, 0), x, rtol=0, atol=1e-12)

    def test_out_of_bounds_clipped_and_counted(self):
        m = UnifiedMapping([SearchSpace.box(0, 1, 1)])
        assert m.unify([2.0], 0)[0] == 1.0
        assert m.deunify([-0.5], 0)[0] == 0.0
        assert m.clip_count == 2


class TestMtecConfig:
    @pytest.mark.parametrize("kwargs", [dict(rmp=1.5), dict(operator_policy="uniform"), dict(eta=-1.0), dict(obscan_context="task")])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            MtecConfig(**kwargs)


class TestMtecGeneration:
    def test_conserves_task_sizes(self):
        a, b = parent_clouds(0, 50)
        res = mtec_generation([a, b[:20]], MtecConfig(pop_size_per_task=37), make_rng(0))
        assert [o.genomes.shape for o in res.offspring] == [(37, 2), (37, 2)]

    def test_no_transfer_at_rmp_zero(self):
        a, b = parent_clouds(0, 50)
        res = mtec_generation([a, b], MtecConfig(rmp=0.0, pop_size_per_task=200), make_rng(1))
        assert not any(o.mixed.any() for o in res.offspring)
        assert res.assignments.shape == (0, 3)

    def test_assignment_law(self):
        a, b = parent_clouds(1, 200)
        res = mtec_generation([a, b], MtecConfig(rmp=1.0, pop_size_per_task=20_000), make_rng(2))
        dest_is_a = res.assignments[:, 2] == 0
        n = dest_is_a.size
        assert n >= 10_000
        assert abs(dest_is_a.mean() - 0.5) <= min(0.015, 3 * math.sqrt(0.25 / n))

    def test_same_task_offspring_keep_task(self):
        a = np.zeros((10, 2))
        b = np.full((10, 2), 10.0)
        res = mtec_generation([a, b], MtecConfig(rmp=0.0, pop_size_per_task=50), make_rng(0))
        np.testing.assert_array_equal(res.offspring[0].genomes, 0.0)
        np.testing.assert_array_equal(res.offspring[1].genomes, 10.0)

    def test_transfer_into_other_hull(self):
        from natgen.analysis import convex_hull_2d, point_in_hull

        a, b = parent_clouds(2)
        res = mtec_generation([a, b], MtecConfig(pop_size_per_task=500), make_rng(3))
        assert point_in_hull(convex_hull_2d(b), res.offspring[0].genomes).any()
        assert point_in_hull(convex_hull_2d(a), res.offspring[1].genomes).any()

    def test_operator_mix(self):
        a, b = parent_clouds(3)
        res = mtec_generation([a, b], MtecConfig(operator_policy="sbx_or_obscan_equal", pop_size_per_task=500), make_rng(4))
        ops = np.concatenate([o.operator for o in res.offspring])
        assert set(ops) == {"sbx", "obscan"}

    def test_obscan_reaches_dominant_region_but_sbx_does_not(self):
        def dominant(res):
            pts = np.vstack([o.genomes for o in res.offspring])
            return np.mean((np.abs(pts[:, 0] - 2) <= 3 * SIGMA_S) & (np.abs(pts[:, 1] - 2) <= 3 * SIGMA_S))

        a, b = parent_clouds(4)
        mixed = mtec_generation([a, b], MtecConfig(operator_policy="sbx_or_obscan_equal"), make_rng(5))
        plain = mtec_generation([a, b], MtecConfig(operator_policy="sbx_only"), make_rng(5))
        assert dominant(mixed) > 0
        assert dominant(plain) < 0.005

    def test_empty_pool(self):
        with pytest.raises(StateError):
            mtec_generation([np.zeros((5, 2)), np.empty((0, 2))], MtecConfig(pop_size_per_task=4), make_rng(0))

    def test_rmp_zero_needs_pairs(self):
        with pytest.raises(StateError):
            mtec_generation([np.zeros((5, 2)), np.ones((1, 2))], MtecConfig(rmp=0.0, pop_size_per_task=4), make_rng(0))

    def test_accepts_populations(self):
        a, b = parent_clouds(5, 20)
        res = mtec_generation([Population.from_genomes(a), Population.from_genomes(b)], MtecConfig(pop_size_per_task=10), make_rng(0))
        assert res.matings > 0

    def test_deterministic(self):
        a, b = parent_clouds(6, 50)
        cfg = MtecConfig(operator_policy="sbx_or_obscan_equal", pop_size_per_task=100)
        r1 = mtec_generation([a, b], cfg, make_rng(9))
        r2 = mtec_generation([a, b], cfg, make_rng(9))
        for o1, o2 in zip(r1.offspring, r2.offspring):
            np.testing.assert_array_equal(o1.genomes, o2.genomes)


class TestMtecRun:
    def test_two_tasks_improve(self):
        tasks = [
            TaskSpec(0, lambda x: -float(np.sum((x - 1.0) ** 2)), SearchSpace.box(-5, 5, 2)),
            TaskSpec(1, lambda x: -float(np.sum((x + 2.0) ** 2)), SearchSpace.box(-5, 5, 3)),
        ]
        hist = mtec_run(tasks, MtecConfig(eta=15, pop_size_per_task=60, generations=25), make_rng(0))
        assert len(hist) == 26
        for j in range(2):
            assert hist[-1][j].best().fitness > hist[0][j].best().fitness
            assert hist[-1][j].best().fitness > -0.1
            assert all(p.task_id == j for p in hist[-1][j])


class TestSubsets:
    @pytest.mark.parametrize("k", [2, 3, 4, 5])
    def test_count_and_brute_force(self, k):
        subsets = enumerate_product_subsets(k)
        brute = [s for mask in range(1 << k) if len(s := tuple(i + 1 for i in range(k) if mask >> i & 1)) >= 2]
        assert len(subsets) == 2**k - k - 1
        assert sorted(subsets) == sorted(brute)

    def test_order(self):
        assert enumerate_product_subsets(3) == [(1, 2), (1, 3), (2, 3), (1, 2, 3)]

    def test_too_few(self):
        with pytest.raises(ValueError):
            enumerate_product_subsets(1)


class TestSamplers:
    def test_mixture_fractions(self):
        for w0 in (0.7, 0.5):
            _, src = sample_mixture_offspring([MODEL_A, MODEL_B], [w0, 1 - w0], 10_000, make_rng(0))
            assert abs(np.mean(src == 0) - w0) <= 3 * math.sqrt(w0 * (1 - w0) / 10_000)

    def test_single_task_weight(self):
        _, src = sample_mixture_offspring([MODEL_A, MODEL_B], [0.0, 1.0], 100, make_rng(0))
        assert np.all(src == 1)

    def test_product_component_mean(self):
        (p,) = product_components([MODEL_A, MODEL_B])
        np.testing.assert_allclose(p.mean, [3.0, 3.0], rtol=1e-14)

    def test_product_fraction(self):
        spec = ProductMixtureSpec(np.full((2, 2), 0.3), 0.4)
        _, src = sample_product_mixture_offspring([MODEL_A, MODEL_B], spec, 0, 10_000, make_rng(1))
        assert abs(np.mean(src == 2) - 0.4) <= 0.015

    def test_zero_product_weight_matches_mixture(self):
        spec = ProductMixtureSpec(np.array([[0.7, 0.5], [0.3, 0.5]]), 0.0)
        x1, _ = sample_product_mixture_offspring([MODEL_A, MODEL_B], spec, 0, 10_000, make_rng(2))
        x2, _ = sample_mixture_offspring([MODEL_A, MODEL_B], [0.7, 0.3], 10_000, make_rng(3))
        for d in range(2):
            assert stats.ks_2samp(x1[:, d], x2[:, d]).pvalue > 0.01

    def test_three_tasks_uniform_subsets(self):
        models = [MODEL_A, MODEL_B, GaussianModel(np.array([5.0, 5.0]), np.eye(2))]
        spec = ProductMixtureSpec(np.full((3, 3), 0.2), 0.4)
        np.testing.assert_allclose(spec.subset_weights, 0.25)
        prods = product_components(models)
        np.testing.assert_allclose(prods[3].mean, product_of_gaussians(models).mean)
        _, src = sample_product_mixture_offspring(models, spec, 2, 20_000, make_rng(4))
        assert set(np.unique(src)) == set(range(7))

    @pytest.mark.parametrize(
        "tw,pw,lam",
        [(np.full((2, 2), 0.3), 0.5, None), (np.full((2, 2), 0.3), 0.4, np.array([0.5, 0.5])),
         (np.array([[0.7, 0.3]]), 0.0, None), (np.array([[-0.1, 0.3], [0.7, 0.3]]), 0.4, None)],
    )
    def test_invalid_spec(self, tw, pw, lam):
        with pytest.raises(ValueError):
            ProductMixtureSpec(tw, pw, lam)
