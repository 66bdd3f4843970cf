"""Derivative-free Riemannian gradient estimation and optimization toolkit.

The package estimates Riemannian gradients of functions on submanifolds of
Euclidean space from function evaluations alone (no derivatives), runs a
derivative-free descent method on manifolds driven by those estimates, and
ships two end-to-end experiments: lattice sphere packing over SL(n) and
tomographic reconstruction from projections taken at unknown angles.
"""

from .kernel_gradient import (
    KernelParams,
    NeighborCloud,
    GradientEstimate,
    gaussian_weight,
    estimate_density,
    estimate_gradient,
    estimate_gradient_gaussian,
    gradient_direction_unnormalized,
    learning_gradient_fit,
    mse_benchmark,
    convergence_probe,
)
from .diffusion_map import (
    KernelMatrix,
    Embedding,
    pairwise_kernel,
    markov_normalize,
    spectral_embed,
    auto_bandwidth,
    embed_points,
)
from .manifold_opt import (
    OptimizerParams,
    Retraction,
    IterateTrace,
    step,
    minimize,
    nearest_point_retraction,
    embed_and_minimize,
    make_gaussian_sampler,
)
from .lattice import (
    LatticeBasis,
    ShortestVectorResult,
    shortest_vector,
    shortest_vector_bruteforce,
    packing_density,
    sl_retract,
    sample_neighbors,
    pack,
)
from . import tomography

__all__ = [
    "KernelParams",
    "NeighborCloud",
    "GradientEstimate",
    "gaussian_weight",
    "estimate_density",
    "estimate_gradient",
    "estimate_gradient_gaussian",
    "gradient_direction_unnormalized",
    "learning_gradient_fit",
    "mse_benchmark",
    "convergence_probe",
    "KernelMatrix",
    "Embedding",
    "pairwise_kernel",
    "markov_normalize",
    "spectral_embed",
    "auto_bandwidth",
    "embed_points",
    "OptimizerParams",
    "Retraction",
    "IterateTrace",
    "step",
    "minimize",
    "nearest_point_retraction",
    "embed_and_minimize",
    "make_gaussian_sampler",
    "LatticeBasis",
    "ShortestVectorResult",
    "shortest_vector",
    "shortest_vector_bruteforce",
    "packing_density",
    "sl_retract",
    "sample_neighbors",
    "pack",
    "tomography",
]

__version__ = "0.1.0"
