"""Evolutionary computation as a generative process.

Classical and multitask evolutionary operators side by side with the
probabilistic models they approximate: Gaussian EDAs and natural-gradient
search, a conditional VAE baseline, mixture and product-of-Gaussian
offspring samplers, and experiments that compare them.
"""
from .analysis import Hull2D, LeapReport, convex_hull_2d, leap_report, mean_nn_distance, point_in_hull, transfer_fraction
from .core import (
    Individual,
    Population,
    SearchSpace,
    evaluate,
    evolve,
    make_rng,
    select_tournament,
    select_truncation,
    split_rng,
)
from .distributions import (
    GaussianModel,
    MixtureSpec,
    ProductSpec,
    fit_gaussian,
    gaussian_logpdf,
    kde1d,
    product_of_gaussians,
    sample_gaussian,
    sample_mixture,
)
from .eda import EdaConfig, IgoState, eda_run, expected_fitness, igo_step
from .errors import EvaluationError, NumericError, StateError, TrainingError
from .multitask import (
    MtecConfig,
    ProductMixtureSpec,
    TaskSpec,
    UnifiedMapping,
    enumerate_product_subsets,
    mtec_generation,
    sample_mixture_offspring,
    sample_product_mixture_offspring,
)
from .variation import ObScanParams, SbxParams, gaussian_mutate, obscan, sbx_pair

__version__ = "0.1.0"
