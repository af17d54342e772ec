"""Populations, fitness evaluation, selection and the generational EC loop.

Fitness is always maximized. Register a minimization problem by negating it.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import EvaluationError, StateError

FitnessFn = Callable[[np.ndarray], float]
SelectionPolicy = Callable[["Population", np.random.Generator], "Population"]
VariationPolicy = Callable[["Population", int, "SearchSpace", np.random.Generator], Sequence[np.ndarray]]


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 stream. Identical seeds give identical call-for-call output."""
    return np.random.Generator(np.random.PCG64(seed))


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Derive ``n`` independent child streams from ``rng``."""
    return list(rng.spawn(n))


@dataclass(frozen=True)
class SearchSpace:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower and upper must be 1-D vectors of equal length")
        if not np.all(lower < upper):
            raise ValueError("every lower bound must be strictly below its upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def box(cls, low: float, high: float, dim: int) -> "SearchSpace":
        return cls(np.full(dim, float(low)), np.full(dim, float(high)))

    @property
    def dim(self) -> int:
        return self.lower.size

    def clip(self, x):
        return np.clip(x, self.lower, self.upper)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))


@dataclass
class Individual:
    genome: np.ndarray
    task_id: Optional[int] = None
    fitness: Optional[float] = None

    def __post_init__(self):
        self.genome = np.asarray(self.genome, dtype=float)


@dataclass
class Population:
    members: list[Individual] = field(default_factory=list)
    generation: int = 0

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i):
        return self.members[i]

    @classmethod
    def from_genomes(cls, genomes, generation: int = 0, task_id: Optional[int] = None) -> "Population":
        return cls([Individual(np.array(g, dtype=float), task_id) for g in genomes], generation)

    @property
    def genomes(self) -> np.ndarray:
        if not self.members:
            return np.empty((0, 0))
        return np.vstack([m.genome for m in self.members])

    @property
    def fitnesses(self) -> np.ndarray:
        if any(m.fitness is None for m in self.members):
            raise StateError("population contains unevaluated members")
        return np.array([m.fitness for m in self.members], dtype=float)

    def best(self) -> Individual:
        fit = self.fitnesses
        return self.members[int(np.argmax(fit))]


def evaluate(pop: Population, f: FitnessFn, workers: Optional[int] = None) -> Population:
    """Return a copy of ``pop`` with every member's fitness set to ``f(genome)``.

    With ``workers > 1`` calls run on a thread pool. Results are gathered in
    member order, so the outcome does not depend on scheduling.
    """
    genomes = [m.genome for m in pop.members]
    if workers and workers > 1 and len(genomes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            values = list(ex.map(f, genomes))
    else:
        values = [f(g) for g in genomes]
    members = []
    for m, v in zip(pop.members, values):
        v = float(v)
        if not math.isfinite(v):
            raise EvaluationError(m.genome, v)
        members.append(replace(m, fitness=v))
    return Population(members, pop.generation)


def _require_evaluated(pop: Population) -> np.ndarray:
    return pop.fitnesses


def select_truncation(pop: Population, k: int) -> Population:
    """Keep the ``k`` fittest members, best first. Ties go to the lower index."""
    if not 1 <= k <= len(pop):
        raise ValueError(f"k must be in [1, {len(pop)}], got {k}")
    fit = _require_evaluated(pop)
    # stable sort on -fitness keeps original order among equals
    order = np.argsort(-fit, kind="stable")[:k]
    return Population([pop.members[i] for i in order], pop.generation)


def select_tournament(pop: Population, k: int, tsize: int, rng: np.random.Generator) -> Population:
    """``k`` independent tournaments of ``tsize`` distinct entrants each."""
    if k < 1:
        raise ValueError("k must be positive")
    if not 1 <= tsize <= len(pop):
        raise ValueError(f"tsize must be in [1, {len(pop)}], got {tsize}")
    fit = _require_evaluated(pop)
    winners = []
    for _ in range(k):
        entrants = np.sort(rng.choice(len(pop), size=tsize, replace=False))
        winners.append(pop.members[entrants[np.argmax(fit[entrants])]])
    return Population(winners, pop.generation)


def truncation(fraction: float) -> SelectionPolicy:
    """Selection policy keeping the top ``fraction`` of the population."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")

    def policy(pop, rng):
        return select_truncation(pop, max(2, int(round(fraction * len(pop)))))

    return policy


def tournament(fraction: float, tsize: int) -> SelectionPolicy:
    def policy(pop, rng):
        return select_tournament(pop, max(2, int(round(fraction * len(pop)))), tsize, rng)

    return policy


def evolve(
    space: SearchSpace,
    f: FitnessFn,
    variation: VariationPolicy,
    selection: SelectionPolicy,
    pop_size: int,
    generations: int,
    rng: np.random.Generator,
    *,
    elitism: bool = False,
    target_fitness: Optional[float] = None,
    workers: Optional[int] = None,
) -> list[Population]:
    """Run the generational cycle and return every evaluated population.

    ``history[0]`` is a uniform sample over ``space``; each following entry is
    ``variation(selection(previous))`` clipped to the box and evaluated. With
    ``elitism`` the previous best replaces the last offspring. If
    ``target_fitness`` is given the run stops as soon as it is reached, so
    the history may be shorter than ``generations + 1``.
    """
    if pop_size < 2:
        raise ValueError("pop_size must be at least 2")
    if generations < 0:
        raise ValueError("generations must be non-negative")

    pop = evaluate(Population.from_genomes(space.sample_uniform(pop_size, rng)), f, workers)
    history = [pop]
    for t in range(generations):
        if target_fitness is not None and pop.best().fitness >= target_fitness:
            break
        parents = selection(pop, rng)
        children = [space.clip(c) for c in variation(parents, pop_size, space, rng)][:pop_size]
        if len(children) != pop_size:
            raise StateError(f"variation produced {len(children)} offspring, expected {pop_size}")
        nxt = Population.from_genomes(children, generation=t + 1)
        nxt = evaluate(nxt, f, workers)
        if elitism:
            elite = pop.best()
            nxt.members[-1] = Individual(elite.genome.copy(), elite.task_id, elite.fitness)
        history.append(nxt)
        pop = nxt
    return history
