"""Variation operators on real-valued genomes.

``sbx_pair`` is parent-centric: children land near their parents and the
pair midpoint is preserved gene by gene. ``obscan`` is disruptive: each
offspring gene is copied from whichever parent carries the more common
value in the surrounding population, so traits from different parents can
be combined without interpolation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import Population, SearchSpace
from .distributions import Kde1D


@dataclass(frozen=True)
class SbxParams:
    eta: float = 15.0
    per_gene_prob: float = 1.0

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError("eta must be non-negative")
        if not 0.0 <= self.per_gene_prob <= 1.0:
            raise ValueError("per_gene_prob must be in [0, 1]")


@dataclass(frozen=True)
class ObScanParams:
    # "scott" or a fixed positive bandwidth
    bandwidth: Union[str, float] = "scott"

    def __post_init__(self):
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "scott":
                raise ValueError(f"unknown bandwidth rule {self.bandwidth!r}")
        elif not float(self.bandwidth) > 0:
            raise ValueError("fixed bandwidth must be positive")


def sbx_spread(u, eta: float):
    """Spread factor beta for uniform draws ``u`` in [0, 1)."""
    u = np.asarray(u, dtype=float)
    e = 1.0 / (eta + 1.0)
    with np.errstate(divide="ignore"):
        low = np.power(2.0 * u, e)
        high = np.power(1.0 / (2.0 * (1.0 - u)), e)
    return np.where(u <= 0.5, low, high)


def sbx_children(p1, p2, eta: float, u) -> tuple[np.ndarray, np.ndarray]:
    """Unclipped SBX children for given uniform draws (one per gene)."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    beta = sbx_spread(u, eta)
    # midpoint +- beta * half-gap: same algebra, but exact for identical parents
    mid = 0.5 * (p1 + p2)
    half = 0.5 * (p2 - p1)
    return mid - beta * half, mid + beta * half


def sbx_pair(p1, p2, params: SbxParams, space: Optional[SearchSpace], rng: np.random.Generator):
    """Simulated binary crossover of one parent pair.

    Child 1 stays on parent 1's side and child 2 on parent 2's; genes are
    never swapped between children. Genes skipped under ``per_gene_prob``
    are copied unchanged. Results are clipped to ``space`` when given.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if p1.shape != p2.shape:
        raise ValueError(f"parent length mismatch: {p1.shape} vs {p2.shape}")
    u = rng.random(p1.shape)
    c1, c2 = sbx_children(p1, p2, params.eta, u)
    if params.per_gene_prob < 1.0:
        skip = rng.random(p1.shape) >= params.per_gene_prob
        c1 = np.where(skip, p1, c1)
        c2 = np.where(skip, p2, c2)
    if space is not None:
        c1, c2 = space.clip(c1), space.clip(c2)
    return c1, c2


def gene_kdes(context, params: ObScanParams = ObScanParams()) -> list[Kde1D]:
    """One 1-D KDE per coordinate of the context population."""
    ctx = np.atleast_2d(np.asarray(context, dtype=float))
    if ctx.shape[0] == 0:
        raise ValueError("population context must be non-empty")
    return [Kde1D(ctx[:, i], params.bandwidth) for i in range(ctx.shape[1])]


def obscan(
    parents: Sequence,
    population_context,
    params: ObScanParams,
    rng: np.random.Generator,
    kdes: Optional[list[Kde1D]] = None,
) -> np.ndarray:
    """Occurrence-based scanning crossover with KDE occurrence scores.

    For gene ``i`` the child takes the parental value at which the KDE of
    coordinate ``i`` of ``population_context`` is highest. Exact ties pick a
    tied parent uniformly at random. Pass precomputed ``kdes`` (from
    :func:`gene_kdes`) to reuse them across many calls on the same context.
    """
    if len(parents) == 0:
        raise ValueError("obscan needs at least one parent")
    par = np.vstack([np.asarray(p, dtype=float) for p in parents])
    if kdes is None:
        kdes = gene_kdes(population_context, params)
    if len(kdes) != par.shape[1]:
        raise ValueError("context dimension does not match parent length")
    child = np.empty(par.shape[1])
    for i, kde in enumerate(kdes):
        dens = kde(par[:, i])
        tied = np.flatnonzero(dens == dens.max())
        pick = tied[0] if tied.size == 1 else tied[rng.integers(tied.size)]
        child[i] = par[pick, i]
    return child


def gaussian_mutate(g, sigma, per_gene_prob: float, space: Optional[SearchSpace], rng: np.random.Generator):
    g = np.asarray(g, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), g.shape)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    if not 0.0 <= per_gene_prob <= 1.0:
        raise ValueError("per_gene_prob must be in [0, 1]")
    hit = rng.random(g.shape) < per_gene_prob
    out = g + np.where(hit, rng.standard_normal(g.shape) * sigma, 0.0)
    return space.clip(out) if space is not None else out


def sbx_variation(params: SbxParams, mutation_sigma=None, mutation_prob: Optional[float] = None):
    """Variation policy for :func:`natgen.core.evolve`: SBX on random pairs, then mutation.

    ``mutation_prob`` defaults to ``1/dim``.
    """

    def policy(parents: Population, n: int, space: SearchSpace, rng: np.random.Generator):
        genomes = parents.genomes
        children = []
        while len(children) < n:
            i, j = rng.choice(len(genomes), size=2, replace=len(genomes) < 2)
            for c in sbx_pair(genomes[i], genomes[j], params, space, rng):
                if mutation_sigma is not None:
                    pm = 1.0 / space.dim if mutation_prob is None else mutation_prob
                    c = gaussian_mutate(c, mutation_sigma, pm, space, rng)
                children.append(c)
        return children[:n]

    return policy
