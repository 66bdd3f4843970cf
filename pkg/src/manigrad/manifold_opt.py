"""Derivative-free descent on submanifolds.

Each iterate estimates the Riemannian gradient from a sampled neighbor
cloud, takes a relaxed step through a retraction, tracks the best point
seen, and periodically restarts from it while shrinking the step scale.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .kernel_gradient import (
    KernelParams,
    NeighborCloud,
    estimate_gradient,
    estimate_gradient_gaussian,
)
from .diffusion_map import embed_points

logger = logging.getLogger(__name__)


class StepError(RuntimeError):
    """The retraction failed at a proposed step target."""


@dataclass(frozen=True)
class OptimizerParams:
    """Descent schedule parameters.

    ``lambda0`` is the initial relaxation (step) parameter, divided by
    ``s_f`` > 1 after every ``l`` consecutive iterations; ``epsilon`` is the
    termination tolerance on successive function values, and ``max_iters`` a
    hard safety cap.  When ``use_raw_direction`` is set the step consumes the
    undivided estimator output, for samplers whose offsets are not coupled to
    the kernel bandwidth.
    """

    lambda0: float
    l: int
    epsilon: float
    s_f: float
    kernel: KernelParams
    max_iters: int = 100_000
    use_raw_direction: bool = False

    def __post_init__(self):
        if self.lambda0 <= 0:
            raise ValueError(f"lambda0 must be positive, got {self.lambda0}")
        if self.l < 1:
            raise ValueError(f"sub-iteration control number l must be >= 1, got {self.l}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.s_f <= 1:
            raise ValueError(f"step-scale factor s_f must exceed 1, got {self.s_f}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass
class Retraction:
    """Locally defined map sending an ambient target back onto the manifold.

    ``apply(x, target)`` returns a manifold point; it must be the identity
    when the target already lies on the manifold.  ``contains`` is an
    optional membership predicate used by invariant checks.
    """

    apply: Callable[[np.ndarray, np.ndarray], np.ndarray]
    contains: Optional[Callable[[np.ndarray], bool]] = None

    def __call__(self, x, target):
        return self.apply(x, target)


@dataclass
class IterateRecord:
    k: int
    point: np.ndarray
    f_value: float
    lam: float


@dataclass
class IterateTrace:
    """Full optimization history with best-iterate tracking."""

    iterates: list = field(default_factory=list)
    best_point: np.ndarray = None
    best_f: float = np.inf
    stop_reason: str = ""

    def record(self, k, point, f_value, lam):
        self.iterates.append(IterateRecord(k, np.array(point, copy=True), float(f_value), float(lam)))

    def best_f_path(self):
        out, best = [], np.inf
        for rec in self.iterates:
            best = min(best, rec.f_value)
            out.append(best)
        return np.array(out)


def step(x, grad, lam, retraction):
    """One relaxed descent step: retract x - lam * grad back to the manifold."""
    x = np.asarray(x, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise StepError(f"non-finite gradient estimate {grad}")
    try:
        return retraction(x, x - lam * grad)
    except Exception as exc:
        raise StepError(f"retraction failed at lambda={lam}: {exc}") from exc


def _estimate(cloud, kernel):
    if cloud.density is None:
        return estimate_gradient_gaussian(cloud, kernel)
    return estimate_gradient(cloud, kernel)


def minimize(f, x0, sampler, retraction, params):
    """Derivative-free descent from ``x0``.

    ``sampler`` maps a point to a :class:`NeighborCloud` carrying function
    values (clouds without density weights use the Gaussian special-case
    estimator).  Per iteration: estimate the gradient, step through the
    retraction, update the best iterate; after ``l`` consecutive iterations
    restart from the best point and divide the relaxation parameter by
    ``s_f``.  Stops once two successive evaluated function values differ by
    less than ``epsilon`` (always after at least one step) or at
    ``max_iters``.
    """
    x = np.asarray(x0, dtype=float)
    f_x = float(f(x))
    trace = IterateTrace()
    x_min, f_min = np.array(x, copy=True), f_x
    counter = 0
    k = 0
    rescales = 0
    lam = params.lambda0
    guard_prev, guard_curr = None, f_x
    trace.record(0, x, f_x, lam)

    while k == 0 or abs(guard_prev - guard_curr) >= params.epsilon:
        if k >= params.max_iters:
            trace.stop_reason = "max_iters"
            break
        try:
            cloud = sampler(x)
            est = _estimate(cloud, params.kernel)
        except Exception as exc:
            raise RuntimeError(f"sampler/estimator failed at iterate k={k}, f={f_x}") from exc
        direction = est.raw_v if params.use_raw_direction else est.direction
        x_new = step(x, direction, lam, retraction)
        f_new = float(f(x_new))
        if not np.isfinite(f_new):
            raise RuntimeError(f"non-finite objective value {f_new} at iterate k={k + 1}")
        if f_new < f_min:
            x_min, f_min = np.array(x_new, copy=True), f_new
        # The termination guard compares the last two freshly evaluated
        # values, independent of the restart overwrite below.
        guard_prev, guard_curr = guard_curr, f_new
        x, f_x = x_new, f_new
        k += 1
        if params.l < counter:
            counter = 0
            x, f_x = np.array(x_min, copy=True), f_min
            rescales += 1
            lam = params.lambda0 / params.s_f ** rescales
        counter += 1
        trace.record(k, x, f_x, lam)
    else:
        trace.stop_reason = "tolerance"

    trace.best_point = x_min
    trace.best_f = f_min
    return trace


def make_gaussian_sampler(f, kernel, rng, scale=None, retraction=None):
    """Sampler drawing ``kernel.m`` Gaussian offsets of spread ``scale``.

    ``scale`` defaults to the kernel bandwidth, which matches the sampling
    PDF assumed by the Gaussian special-case estimator.  With a retraction
    the perturbed points are projected back to the manifold first.
    """
    sigma = kernel.t if scale is None else scale

    def sampler(x):
        x = np.asarray(x, dtype=float)
        offsets = rng.standard_normal((kernel.m, x.size)) * sigma
        pts = x[None, :] + offsets
        if retraction is not None:
            pts = np.stack([retraction(x, p) for p in pts])
        return NeighborCloud(
            base=x,
            samples=pts,
            f_base=float(f(x)),
            f_samples=np.array([float(f(p)) for p in pts]),
        )

    return sampler


def nearest_point_retraction(dataset):
    """Retraction onto a finite point set: map z to the closest dataset point.

    Ties break to the lowest index.
    """
    dataset = np.atleast_2d(np.asarray(dataset, dtype=float))
    if dataset.shape[0] == 0:
        raise ValueError("dataset must be non-empty")

    def apply(_x, target):
        d2 = np.sum((dataset - np.asarray(target, float)) ** 2, axis=1)
        return dataset[int(np.argmin(d2))]

    def contains(p):
        return bool(np.any(np.all(dataset == np.asarray(p, float), axis=1)))

    return Retraction(apply=apply, contains=contains)


def embed_and_minimize(dataset, fvals, embed_dim, params, x0_index,
                       bandwidth=None, diffusion_time=1.0):
    """Reduce a high-dimensional finite dataset and minimize over the embedding.

    Embeds the dataset with the diffusion map, transports the function values
    to the embedded points, and runs :func:`minimize` with the nearest-point
    retraction over the embedded set, starting at the embedding of
    ``x0_index``.  Returns a dict with the index of the best original point
    and the trace.
    """
    dataset = np.atleast_2d(np.asarray(dataset, dtype=float))
    fvals = np.asarray(fvals, dtype=float)
    if fvals.shape[0] != dataset.shape[0]:
        raise ValueError("fvals must align with dataset")
    emb = embed_points(dataset, embed_dim, t=diffusion_time, epsilon=bandwidth)
    y = emb.coordinates

    def index_of(p):
        return int(np.argmin(np.sum((y - p) ** 2, axis=1)))

    def f_tilde(p):
        return float(fvals[index_of(p)])

    kernel = params.kernel
    n_neighbors = min(kernel.m, y.shape[0] - 1)

    def sampler(x):
        d2 = np.sum((y - x) ** 2, axis=1)
        order = np.argsort(d2, kind="stable")
        neigh = [i for i in order if d2[i] > 0][:n_neighbors]
        if not neigh:  # all embedded points coincide with x
            neigh = list(order[:n_neighbors])
        return NeighborCloud(
            base=x,
            samples=y[neigh],
            f_base=f_tilde(x),
            f_samples=fvals[neigh],
        )

    retraction = nearest_point_retraction(y)
    trace = minimize(f_tilde, y[x0_index], sampler, retraction, params)
    return {"best_index": index_of(trace.best_point), "trace": trace, "embedding": emb}
