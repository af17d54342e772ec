"""Estimation-of-distribution loop and natural-gradient search on Gaussians.

``eda_run`` replaces recombination with fit-then-sample: the next
population is drawn entirely from a model fitted to the selected parents.
``igo_step`` follows the natural gradient of expected fitness for a
diagonal Gaussian, estimated from a batch of samples.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .core import FitnessFn, Individual, Population, SearchSpace, evaluate, select_truncation
from .distributions import GaussianModel, fit_gaussian, sample_gaussian
from .errors import EvaluationError, NumericError

MODEL_FAMILIES = ("gaussian_full", "gaussian_diag", "vae")


@dataclass(frozen=True)
class EdaConfig:
    pop_size: int = 100
    parent_fraction: float = 0.3
    generations: int = 60
    model_family: str = "gaussian_full"
    elitism: bool = False
    # only read when model_family == "vae"
    vae_train: Optional[object] = None
    vae_hidden: int = 64

    def __post_init__(self):
        if self.pop_size < 4:
            raise ValueError("pop_size must be at least 4")
        if not 0 < self.parent_fraction <= 1:
            raise ValueError("parent_fraction must be in (0, 1]")
        if self.parent_fraction * self.pop_size < 2:
            raise ValueError("parent_fraction * pop_size must be at least 2")
        if self.generations < 0:
            raise ValueError("generations must be non-negative")
        if self.model_family not in MODEL_FAMILIES:
            raise ValueError(f"model_family must be one of {MODEL_FAMILIES}")

    @property
    def n_parents(self) -> int:
        return max(2, int(round(self.parent_fraction * self.pop_size)))


@dataclass
class EdaStep:
    population: Population
    # None for the initial generation
    model: Optional[object] = None


def fit_model(parents: np.ndarray, cfg: EdaConfig, rng: np.random.Generator):
    if cfg.model_family == "gaussian_full":
        return fit_gaussian(parents)
    if cfg.model_family == "gaussian_diag":
        return fit_gaussian(parents, diagonal=True)
    from .vae import TrainConfig, init_vae, vae_train

    data_dim = parents.shape[1]
    model = init_vae(data_dim=data_dim, n_labels=1, hidden=cfg.vae_hidden, rng=rng)
    labels = np.ones((parents.shape[0], 1))
    model, _ = vae_train(model, parents, labels, cfg.vae_train or TrainConfig(epochs=100, learning_rate=0.01), rng)
    return model


def sample_model(model, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(model, GaussianModel):
        return sample_gaussian(model, n, rng)
    from .vae import vae_sample

    return vae_sample(model, np.ones(1), n, rng)


def eda_run(
    space: SearchSpace,
    f: FitnessFn,
    cfg: EdaConfig,
    rng: np.random.Generator,
    *,
    sampler: Callable = sample_model,
    workers: Optional[int] = None,
) -> list[EdaStep]:
    """Run the EDA and return one :class:`EdaStep` per generation.

    ``sampler(model, n, rng)`` is injectable so callers can instrument where
    offspring come from; it defaults to :func:`sample_model`.
    """
    pop = evaluate(Population.from_genomes(space.sample_uniform(cfg.pop_size, rng)), f, workers)
    history = [EdaStep(pop)]
    for t in range(cfg.generations):
        parents = select_truncation(pop, cfg.n_parents)
        model = fit_model(parents.genomes, cfg, rng)
        draws = np.asarray(sampler(model, cfg.pop_size, rng), dtype=float)
        nxt = evaluate(Population.from_genomes(space.clip(draws), generation=t + 1), f, workers)
        if cfg.elitism:
            elite = pop.best()
            nxt.members[-1] = Individual(elite.genome.copy(), elite.task_id, elite.fitness)
        history.append(EdaStep(nxt, model))
        pop = nxt
    return history


def _batch_fitness(f: FitnessFn, xs: np.ndarray) -> np.ndarray:
    vals = np.array([float(f(x)) for x in xs])
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise EvaluationError(xs[bad[0]], vals[bad[0]])
    return vals


def expected_fitness(m: GaussianModel, f: FitnessFn, n: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte-Carlo estimate of E[f(x)] under ``m`` and its standard error."""
    if n < 2:
        raise ValueError("n must be at least 2")
    vals = _batch_fitness(f, sample_gaussian(m, n, rng))
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n))


@dataclass(frozen=True)
class IgoState:
    mean: np.ndarray
    log_var: np.ndarray
    step_size: float = 0.05
    batch: int = 64

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        log_var = np.broadcast_to(np.asarray(self.log_var, dtype=float), mean.shape).copy()
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.batch < 2:
            raise ValueError("batch must be at least 2")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_var", log_var)

    @property
    def variance(self) -> np.ndarray:
        return np.exp(self.log_var)

    def model(self) -> GaussianModel:
        return GaussianModel.diag(self.mean, self.variance)


@dataclass(frozen=True)
class IgoGradient:
    vanilla_mean: np.ndarray
    vanilla_log_var: np.ndarray
    natural_mean: np.ndarray
    natural_log_var: np.ndarray


def _rank_weights(vals: np.ndarray) -> np.ndarray:
    # centered ranks in [-0.5, 0.5], best gets +0.5
    ranks = np.empty(vals.size)
    ranks[np.argsort(vals, kind="stable")] = np.arange(vals.size)
    return ranks / (vals.size - 1) - 0.5


def igo_gradient(
    state: IgoState, f: FitnessFn, rng: np.random.Generator, rank_shaping: bool = False
) -> IgoGradient:
    """Score-function gradient of expected fitness w.r.t. (mean, log variance).

    Uses the batch-mean fitness as baseline. The Fisher matrix of a diagonal
    Gaussian in these coordinates is ``diag(1/var, 1/2)``, so the natural
    gradient is ``var * g_mean`` and ``2 * g_log_var``.
    """
    var = state.variance
    z = rng.standard_normal((state.batch, state.mean.size))
    xs = state.mean + z * np.sqrt(var)
    vals = _batch_fitness(f, xs)
    w = _rank_weights(vals) if rank_shaping else vals - vals.mean()
    # d/dm log p = (x - m)/var ; d/dlogvar log p = ((x - m)^2/var - 1)/2
    g_mean = (w[:, None] * z / np.sqrt(var)).mean(axis=0)
    g_lv = (w[:, None] * 0.5 * (z * z - 1.0)).mean(axis=0)
    grad = IgoGradient(g_mean, g_lv, var * g_mean, 2.0 * g_lv)
    if not (np.all(np.isfinite(grad.natural_mean)) and np.all(np.isfinite(grad.natural_log_var))):
        raise NumericError("non-finite natural gradient")
    return grad


def igo_step(state: IgoState, f: FitnessFn, rng: np.random.Generator, rank_shaping: bool = False) -> IgoState:
    """One natural-gradient ascent step of size ``state.step_size``."""
    g = igo_gradient(state, f, rng, rank_shaping)
    return replace(
        state,
        mean=state.mean + state.step_size * g.natural_mean,
        log_var=state.log_var + state.step_size * g.natural_log_var,
    )
