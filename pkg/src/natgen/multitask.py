"""Multitask evolution: unified space, MFEA-style mating, and model-based samplers.

Tasks share a unified box ``[0, 1]^d``. ``mtec_generation`` produces
offspring by mating individuals drawn from the union of all task parent
pools, with inter-task matings gated by a random mating probability.
``sample_mixture_offspring`` and ``sample_product_mixture_offspring`` are
the model-based counterparts: task offspring drawn from a weighted mixture
of task models, optionally including products of task models.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Population, SearchSpace, evaluate, select_truncation
from .distributions import GaussianModel, MixtureSpec, ProductSpec, product_of_gaussians, sample_mixture
from .errors import StateError
from .variation import ObScanParams, SbxParams, gene_kdes, obscan, sbx_pair

OPERATOR_POLICIES = ("sbx_only", "sbx_or_obscan_equal")


@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    fitness: Callable[[np.ndarray], float]
    native_space: SearchSpace


class UnifiedMapping:
    """Affine maps between each task's native box and a shared ``[0, 1]^d``.

    Unified coordinates beyond a task's own dimension are padded with 0.5 and
    ignored on the way back. Out-of-bounds inputs are clipped and counted in
    ``clip_count``.
    """

    def __init__(self, spaces: Sequence[SearchSpace]):
        if not spaces:
            raise ValueError("need at least one task space")
        self.spaces = list(spaces)
        self.dim = max(s.dim for s in self.spaces)
        self.clip_count = 0

    def unify(self, x, task: int) -> np.ndarray:
        space = self.spaces[task]
        x = np.asarray(x, dtype=float)
        if not space.contains(x):
            self.clip_count += 1
            x = space.clip(x)
        u = np.full(self.dim, 0.5)
        u[: space.dim] = (x - space.lower) / (space.upper - space.lower)
        return u

    def deunify(self, u, task: int) -> np.ndarray:
        space = self.spaces[task]
        u = np.asarray(u, dtype=float)[: space.dim]
        if np.any(u < 0) or np.any(u > 1):
            self.clip_count += 1
            u = np.clip(u, 0.0, 1.0)
        return space.lower + u * (space.upper - space.lower)


@dataclass(frozen=True)
class MtecConfig:
    rmp: float = 1.0
    operator_policy: str = "sbx_only"
    eta: float = 50.0
    pop_size_per_task: int = 500
    generations: int = 1
    # "combined": KDE over every task's parents; "parents": only the pools of the mating parents' tasks
    obscan_context: str = "combined"
    obscan: ObScanParams = ObScanParams()

    def __post_init__(self):
        if not 0.0 <= self.rmp <= 1.0:
            raise ValueError("rmp must be in [0, 1]")
        if self.operator_policy not in OPERATOR_POLICIES:
            raise ValueError(f"operator_policy must be one of {OPERATOR_POLICIES}")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.pop_size_per_task < 1:
            raise ValueError("pop_size_per_task must be positive")
        if self.obscan_context not in ("combined", "parents"):
            raise ValueError("obscan_context must be 'combined' or 'parents'")


@dataclass
class TaskOffspring:
    genomes: np.ndarray
    # True where the parents came from different tasks
    mixed: np.ndarray
    # "sbx" or "obscan" per offspring
    operator: np.ndarray


@dataclass
class MtecResult:
    offspring: list[TaskOffspring]
    # one (parent_task_a, parent_task_b, assigned_task) row per inter-task child, kept or not
    assignments: np.ndarray = field(default_factory=lambda: np.empty((0, 3), dtype=int))
    matings: int = 0


def mtec_generation(
    pools: Sequence,
    cfg: MtecConfig,
    rng: np.random.Generator,
    space: Optional[SearchSpace] = None,
) -> MtecResult:
    """Produce ``cfg.pop_size_per_task`` offspring for every task.

    ``pools[j]`` holds the selected parent genomes of task ``j`` (an array or
    a :class:`~natgen.core.Population`). Two distinct parents are drawn
    uniformly from the union of the pools. Same-task pairs always mate and
    their children stay in that task. Different-task pairs mate with
    probability ``rmp`` (otherwise the pair is redrawn) and each child goes
    to one of the two parent tasks with probability 1/2. SBX yields two
    children per mating and OB-Scan one. Children arriving for a task that
    is already full are discarded.
    """
    arrays = [p.genomes if isinstance(p, Population) else np.atleast_2d(np.asarray(p, dtype=float)) for p in pools]
    if not arrays or any(a.shape[0] == 0 or a.size == 0 for a in arrays):
        raise StateError("every task needs a non-empty parent pool")
    k = len(arrays)
    combined = np.vstack(arrays)
    owner = np.concatenate([np.full(a.shape[0], j) for j, a in enumerate(arrays)])
    if combined.shape[0] < 2:
        raise StateError("the combined parent pool needs at least two individuals")
    if cfg.rmp == 0.0 and any(a.shape[0] < 2 for a in arrays):
        raise StateError("with rmp = 0 every task pool needs at least two individuals")

    sbx = SbxParams(cfg.eta)
    kde_cache: dict = {}

    def kdes_for(ta, tb):
        key = "all" if cfg.obscan_context == "combined" else tuple(sorted({ta, tb}))
        if key not in kde_cache:
            ctx = combined if key == "all" else np.vstack([arrays[j] for j in key])
            kde_cache[key] = gene_kdes(ctx, cfg.obscan)
        return kde_cache[key]

    target = cfg.pop_size_per_task
    out = [[] for _ in range(k)]
    mixed = [[] for _ in range(k)]
    ops = [[] for _ in range(k)]
    log = []
    matings = 0
    n = combined.shape[0]
    while any(len(o) < target for o in out):
        i, j = rng.choice(n, size=2, replace=False)
        ta, tb = int(owner[i]), int(owner[j])
        inter = ta != tb
        if inter and rng.random() >= cfg.rmp:
            continue
        matings += 1
        if cfg.operator_policy == "sbx_or_obscan_equal" and rng.random() < 0.5:
            op = "obscan"
            children = [obscan([combined[i], combined[j]], None, cfg.obscan, rng, kdes=kdes_for(ta, tb))]
        else:
            op = "sbx"
            children = list(sbx_pair(combined[i], combined[j], sbx, space, rng))
        for c in children:
            if inter:
                dest = ta if rng.random() < 0.5 else tb
                log.append((ta, tb, dest))
            else:
                dest = ta
            if len(out[dest]) < target:
                out[dest].append(c)
                mixed[dest].append(inter)
                ops[dest].append(op)
    offspring = [
        TaskOffspring(np.vstack(out[t]), np.array(mixed[t], dtype=bool), np.array(ops[t]))
        for t in range(k)
    ]
    assignments = np.array(log, dtype=int).reshape(-1, 3)
    return MtecResult(offspring, assignments, matings)


def mtec_run(
    tasks: Sequence[TaskSpec],
    cfg: MtecConfig,
    rng: np.random.Generator,
    parent_fraction: float = 0.5,
) -> list[list[Population]]:
    """Multitask evolution in the unified space.

    Each generation selects the top ``parent_fraction`` of every task by
    that task's own fitness and builds the next populations with
    :func:`mtec_generation`. Returns ``history[t][task]``.
    """
    mapping = UnifiedMapping([t.native_space for t in tasks])
    unit = SearchSpace.box(0.0, 1.0, mapping.dim)

    def evaluator(j):
        fit = tasks[j].fitness
        return lambda u: fit(mapping.deunify(u, j))

    pops = []
    for j in range(len(tasks)):
        genomes = unit.sample_uniform(cfg.pop_size_per_task, rng)
        pops.append(evaluate(Population.from_genomes(genomes, task_id=tasks[j].task_id), evaluator(j)))
    history = [pops]
    for t in range(cfg.generations):
        k = max(2, int(round(parent_fraction * cfg.pop_size_per_task)))
        pools = [select_truncation(p, min(k, len(p))) for p in pops]
        res = mtec_generation(pools, cfg, rng, unit)
        pops = [
            evaluate(Population.from_genomes(o.genomes, t + 1, tasks[j].task_id), evaluator(j))
            for j, o in enumerate(res.offspring)
        ]
        history.append(pops)
    return history


def enumerate_product_subsets(k: int) -> list[tuple[int, ...]]:
    """All subsets of ``{1..k}`` with at least two members, by size then lexicographically."""
    if k < 2:
        raise ValueError("need at least two tasks")
    return [c for r in range(2, k + 1) for c in itertools.combinations(range(1, k + 1), r)]


def sample_mixture_offspring(task_models: Sequence[GaussianModel], weights, n: int, rng: np.random.Generator):
    """Offspring for one task from the task-wise mixture; returns ``(points, source_task)``."""
    return sample_mixture(MixtureSpec(tuple(task_models), np.asarray(weights, dtype=float)), n, rng)


@dataclass(frozen=True)
class ProductMixtureSpec:
    """Offspring weights for every task under the mixture-plus-product model.

    ``task_weights[i, j]`` weighs task model ``i`` when sampling for task
    ``j``; ``product_weight[j]`` weighs the product block for task ``j``;
    ``subset_weights`` spreads the product block over
    :func:`enumerate_product_subsets` (uniform if omitted).
    """

    task_weights: np.ndarray
    product_weight: np.ndarray
    subset_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.task_weights, dtype=float))
        k = w.shape[0]
        if w.shape != (k, k) or k < 2:
            raise ValueError("task_weights must be a square matrix over at least two tasks")
        pw = np.broadcast_to(np.asarray(self.product_weight, dtype=float), (k,)).copy()
        subsets = enumerate_product_subsets(k)
        lam = (
            np.full(len(subsets), 1.0 / len(subsets))
            if self.subset_weights is None
            else np.asarray(self.subset_weights, dtype=float)
        )
        if lam.shape != (len(subsets),):
            raise ValueError(f"need {len(subsets)} subset weights")
        if np.any(w < 0) or np.any(pw < 0) or np.any(lam < 0):
            raise ValueError("weights must be non-negative")
        if not np.allclose(w.sum(axis=0) + pw, 1.0, rtol=0, atol=1e-12):
            raise ValueError("for every task, task weights plus product weight must sum to 1")
        if abs(lam.sum() - 1.0) > 1e-12:
            raise ValueError("subset weights must sum to 1")
        object.__setattr__(self, "task_weights", w)
        object.__setattr__(self, "product_weight", pw)
        object.__setattr__(self, "subset_weights", lam)

    @property
    def n_tasks(self) -> int:
        return self.task_weights.shape[0]


def product_components(task_models: Sequence[GaussianModel]) -> list[GaussianModel]:
    """Renormalized product model for every subset, in subset-enumeration order."""
    return [
        product_of_gaussians(ProductSpec(tuple(task_models[i - 1] for i in s)))
        for s in enumerate_product_subsets(len(task_models))
    ]


def sample_product_mixture_offspring(
    task_models: Sequence[GaussianModel],
    spec: ProductMixtureSpec,
    task: int,
    n: int,
    rng: np.random.Generator,
    products: Optional[Sequence[GaussianModel]] = None,
):
    """Offspring for ``task`` from task models plus subset products.

    Returns ``(points, source)`` where ``source < K`` names a task model and
    ``source >= K`` names product subset ``source - K``.
    """
    if len(task_models) != spec.n_tasks:
        raise ValueError("one model per task is required")
    if products is None:
        products = product_components(task_models)
    comps = tuple(task_models) + tuple(products)
    weights = np.concatenate([spec.task_weights[:, task], spec.product_weight[task] * spec.subset_weights])
    # re-normalize away float drift
    weights = weights / weights.sum()
    return sample_mixture(MixtureSpec(comps, weights), n, rng)
