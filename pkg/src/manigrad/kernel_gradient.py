"""Kernel-based gradient estimation from sampled function values.

The estimator weights neighbor samples with a Gaussian kernel of bandwidth
``t``, corrects for the sampling density, and returns a vector that
approximates the Riemannian gradient of the sampled function at the base
point.  A special case for Gaussian-distributed samples, an unnormalized
2-D variant used by the tomography pipeline, and a regularized RKHS
baseline ("learning gradient") are also provided.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

# Shift exponents before exponentiating only once they would underflow;
# the estimator is a ratio, so a common positive factor cancels.
_SHIFT_THRESHOLD = -600.0


class DegenerateBandwidthError(ValueError):
    """All kernel weights vanished; the bandwidth is too small for the cloud."""


@dataclass(frozen=True)
class KernelParams:
    """Bandwidth ``t``, ball exponent ``delta`` and sample count ``m``.

    ``delta`` must lie in the open interval (1/2, 1); the neighbor ball has
    radius ``t**delta``.
    """

    t: float
    delta: float = 0.9
    m: int = 100

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError(f"bandwidth t must be positive, got {self.t}")
        if not 0.5 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (1/2, 1), got {self.delta}")
        if self.m < 1:
            raise ValueError(f"sample count m must be >= 1, got {self.m}")

    @property
    def ball_radius(self):
        return self.t ** self.delta


@dataclass
class NeighborCloud:
    """A base point with neighbor samples and their function values.

    ``density`` holds the sampling PDF evaluated at each sample (with respect
    to the manifold volume measure).  When absent the samples are assumed to
    come from the Gaussian PDF matched to the kernel bandwidth, and the
    Gaussian special-case estimator applies.
    """

    base: np.ndarray
    samples: np.ndarray
    f_base: float
    f_samples: np.ndarray
    density: np.ndarray | None = None

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        self.f_samples = np.asarray(self.f_samples, dtype=float)
        if self.density is not None:
            self.density = np.asarray(self.density, dtype=float)
        m = self.samples.shape[0]
        if self.f_samples.shape != (m,):
            raise ValueError(
                f"f_samples has length {self.f_samples.shape}, expected {m}"
            )
        if self.density is not None:
            if self.density.shape != (m,):
                raise ValueError(
                    f"density has length {self.density.shape}, expected {m}"
                )
            if np.any(self.density <= 0):
                raise ValueError("density weights must be strictly positive")

    def __len__(self):
        return self.samples.shape[0]


@dataclass
class GradientEstimate:
    """Result of the sampling estimator.

    ``direction`` is ``raw_v / t**2`` and approximates the Riemannian
    gradient; ``raw_v`` is the pre-division vector and ``dt_hat`` the
    estimated kernel normalizer (sum of the density-corrected weights).
    """

    direction: np.ndarray
    dt_hat: float
    raw_v: np.ndarray


def gaussian_weight(x, y, t):
    """Scalar Gaussian kernel exp(-||y - x||^2 / (2 t^2)); value in (0, 1]."""
    if t <= 0:
        raise ValueError(f"bandwidth t must be positive, got {t}")
    d2 = float(np.sum((np.asarray(y, dtype=float) - np.asarray(x, dtype=float)) ** 2))
    return float(np.exp(-d2 / (2.0 * t * t)))


def _sq_dists(cloud):
    diff = cloud.samples - cloud.base
    return np.einsum("ij,ij->i", diff, diff), diff


def estimate_density(cloud, params):
    """Monte-Carlo estimate of the kernel normalizer d_t at the base point.

    Returns (1/m) * sum_i w(x, x_i) / q(x_i).  For samples covering the
    kernel's effective support this converges to (2*pi)^(d/2) * t^d, with d
    the manifold dimension.
    """
    if cloud.density is None:
        raise ValueError("estimate_density requires explicit density weights")
    d2, _ = _sq_dists(cloud)
    w = np.exp(-d2 / (2.0 * params.t ** 2))
    return float(np.mean(w / cloud.density))


def estimate_gradient(cloud, params, ball_filter=False):
    """Density-corrected sampling estimator of the Riemannian gradient.

    Computes weights c_i = w(x, x_i)/q(x_i), the normalizer dt_hat = sum c_i,
    raw_v = (1/dt_hat) * sum (x_i - x)(f(x_i) - f(x)) c_i and the gradient
    approximation raw_v / t^2.

    Samples outside the ball of radius t**delta are accepted (the Gaussian
    weight suppresses far points); set ``ball_filter`` to drop them instead.
    Raises :class:`DegenerateBandwidthError` when every weight underflows.
    """
    if cloud.density is None:
        raise ValueError("estimate_gradient requires density weights; "
                         "use estimate_gradient_gaussian for Gaussian samples")
    d2, diff = _sq_dists(cloud)
    df = cloud.f_samples - cloud.f_base
    q = cloud.density

    outside = d2 > params.ball_radius ** 2
    n_out = int(np.count_nonzero(outside))
    if n_out:
        logger.debug("%d of %d samples outside the t^delta ball", n_out, len(cloud))
        if ball_filter:
            keep = ~outside
            if not np.any(keep):
                raise DegenerateBandwidthError(
                    "ball filter removed every sample; enlarge t or disable it"
                )
            d2, diff, df, q = d2[keep], diff[keep], df[keep], q[keep]

    expo = -d2 / (2.0 * params.t ** 2)
    shift = 0.0
    emax = float(np.max(expo))
    if emax < _SHIFT_THRESHOLD:
        shift = emax
    c = np.exp(expo - shift) / q
    dt_hat = float(np.sum(c))
    if dt_hat <= 0.0 or not np.isfinite(dt_hat):
        raise DegenerateBandwidthError(
            f"kernel weights degenerate (dt_hat={dt_hat}); bandwidth t={params.t} "
            "is too small for the sample spread"
        )
    raw_v = (diff * (df * c)[:, None]).sum(axis=0) / dt_hat
    return GradientEstimate(direction=raw_v / params.t ** 2, dt_hat=dt_hat, raw_v=raw_v)


def estimate_gradient_gaussian(cloud, params):
    """Gradient estimator for samples drawn from the bandwidth-matched Gaussian.

    With sampling PDF q(y) proportional to the kernel itself the weights
    collapse to a constant, and raw_v reduces to the plain average
    (1/m) * sum (x_i - x)(f(x_i) - f(x)).
    """
    if len(cloud) == 0:
        raise ValueError("empty neighbor cloud")
    _, diff = _sq_dists(cloud)
    df = cloud.f_samples - cloud.f_base
    raw_v = (diff * df[:, None]).mean(axis=0)
    return GradientEstimate(
        direction=raw_v / params.t ** 2, dt_hat=float(len(cloud)), raw_v=raw_v
    )


def gradient_direction_unnormalized(base, neighbors, g_base, g_neighbors):
    """Unnormalized descent direction at a 2-D embedded point, bandwidth 1.

    Returns sum_i (x_i - x)(g(x_i) - g(x)) * exp(-||x_i - x||^2 / 2).  Used
    by the tomography sign bootstrap, where only the direction matters.
    """
    base = np.asarray(base, dtype=float)
    neighbors = np.atleast_2d(np.asarray(neighbors, dtype=float))
    if neighbors.shape[0] == 0:
        raise ValueError("neighbors must be non-empty")
    g_neighbors = np.asarray(g_neighbors, dtype=float)
    diff = neighbors - base
    d2 = np.einsum("ij,ij->i", diff, diff)
    w = np.exp(-d2 / 2.0) * (g_neighbors - g_base)
    return (diff * w[:, None]).sum(axis=0)


# ---------------------------------------------------------------------------
# Learning-gradient baseline (regularized RKHS least squares)
# ---------------------------------------------------------------------------


class ConditioningError(np.linalg.LinAlgError):
    """The regularized normal system could not be solved."""


@dataclass
class LearningGradientField:
    """Gradient-field evaluator f_vec(x) = sum_i C_i * K_t(x, x_i)."""

    samples: np.ndarray
    coefficients: np.ndarray
    t: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        d2 = np.sum((self.samples - x) ** 2, axis=1)
        k = np.exp(-d2 / (2.0 * self.t ** 2))
        return k @ self.coefficients

    def at_samples(self):
        """Field values at the fit points, evaluated in one pass."""
        d2 = _pairwise_sq_dists(self.samples)
        k = np.exp(-d2 / (2.0 * self.t ** 2))
        return k @ self.coefficients


def _pairwise_sq_dists(points):
    sq = np.sum(points ** 2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * points @ points.T
    np.maximum(d2, 0.0, out=d2)
    return d2


def learning_gradient_fit(samples, fvals, t, d):
    """Fit the RKHS gradient-field baseline by regularized least squares.

    Minimizes sum_{i,j} w_ij (f(x_j) - f(x_i) - f_vec(x_i).(x_j - x_i))^2
    + lam * ||f_vec||^2 over fields f_vec = sum_i C_i K_t(., x_i), with
    w_ij = K_t(x_i, x_j) and lam = t**(d+3) for manifold dimension ``d``.

    The stationarity condition reduces to lam * C_i + B_i (K C)_i = h_i with
    B_i = sum_j w_ij d_ij d_ij^T and h_i = sum_j w_ij (f_j - f_i) d_ij, which
    is assembled densely and solved directly; lam > 0 keeps it nonsingular.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    fvals = np.asarray(fvals, dtype=float)
    if samples.shape[0] < 1:
        raise ValueError("need at least one sample")
    if t <= 0:
        raise ValueError(f"bandwidth t must be positive, got {t}")
    m, n = samples.shape
    lam = t ** (d + 3)

    d2 = _pairwise_sq_dists(samples)
    k = np.exp(-d2 / (2.0 * t * t))
    dij = samples[None, :, :] - samples[:, None, :]        # (i, j, n) = x_j - x_i
    dfij = fvals[None, :] - fvals[:, None]                 # (i, j)

    b = np.einsum("ij,ija,ijb->iab", k, dij, dij)          # (m, n, n)
    h = np.einsum("ij,ij,ija->ia", k, dfij, dij)           # (m, n)

    # Block system: rows indexed by (i, a), columns by (l, b).
    big = k[:, :, None, None] * b[:, None, :, :]           # (i, l, a, b)
    big = big.transpose(0, 2, 1, 3).reshape(m * n, m * n)
    big[np.diag_indices_from(big)] += lam
    try:
        coef = np.linalg.solve(big, h.reshape(m * n))
    except np.linalg.LinAlgError as exc:  # unreachable for lam > 0
        raise ConditioningError(
            f"regularized system singular at lam={lam}"
        ) from exc
    return LearningGradientField(samples=samples, coefficients=coef.reshape(m, n), t=t)


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------


def _curve_point(u):
    """The closed benchmark curve in R^3, tripled into R^9 by the caller."""
    return np.array([np.cos(2 * np.pi * u), np.sin(2 * np.pi * u), np.cos(4 * np.pi * u)])


def _curve_velocity(u):
    two = 2 * np.pi
    return np.array([-two * np.sin(two * u), two * np.cos(two * u),
                     -2 * two * np.sin(2 * two * u)])


def benchmark_curve(params_u):
    """Sample points x(u) = (c(u), c(u), c(u)) in R^9 with tangents and speeds."""
    params_u = np.asarray(params_u, dtype=float)
    pts3 = np.stack([_curve_point(u) for u in params_u])
    vel3 = np.stack([_curve_velocity(u) for u in params_u])
    pts = np.concatenate([pts3, pts3, pts3], axis=1)
    vel = np.concatenate([vel3, vel3, vel3], axis=1)
    speed = np.linalg.norm(vel, axis=1)
    tangent = vel / speed[:, None]
    return pts, tangent, speed


def mse_benchmark(t, m, seed):
    """Compare the sampling estimator with the learning-gradient baseline.

    Draws ``m`` uniform curve parameters, a random quadratic objective
    f(x) = <x, A A^T x> with standard-normal ``A``, and evaluates both
    estimators at every sample against the analytic Riemannian gradient
    (ambient gradient 2 A A^T x projected on the curve tangent).

    Returns a dict with mean squared errors ``mse_proposed`` and
    ``mse_learning``.
    """
    rng = np.random.default_rng(seed)
    params_u = rng.uniform(0.0, 1.0, size=m)
    pts, tangent, speed = benchmark_curve(params_u)
    n = pts.shape[1]
    a = rng.standard_normal((n, n))
    quad = a @ a.T
    fvals = np.einsum("ij,jk,ik->i", pts, quad, pts)
    ambient = 2.0 * pts @ quad
    true_grad = tangent * np.einsum("ij,ij->i", ambient, tangent)[:, None]

    # Uniform parameter sampling has arclength density 1/speed on the curve.
    density_all = 1.0 / speed
    kp = KernelParams(t=t, delta=0.9, m=m)

    err_prop = np.empty(m)
    for i in range(m):
        # The base point stays in its own cloud: its difference term vanishes
        # but its kernel weight anchors the normalization, so isolated samples
        # degrade toward a zero estimate instead of a one-neighbor blow-up.
        cloud = NeighborCloud(
            base=pts[i],
            samples=pts,
            f_base=fvals[i],
            f_samples=fvals,
            density=density_all,
        )
        est = estimate_gradient(cloud, kp)
        err_prop[i] = np.sum((est.direction - true_grad[i]) ** 2)

    field = learning_gradient_fit(pts, fvals, t=t, d=1)
    learned = field.at_samples()
    err_learn = np.sum((learned - true_grad) ** 2, axis=1)

    return {
        "mse_proposed": float(np.mean(err_prop)),
        "mse_learning": float(np.mean(err_learn)),
    }


def convergence_probe(t_list, m_list, trials, seed, slope=None):
    """Empirical error quantiles of the estimator on a flat 2-D patch.

    For each (t, m) pair, repeats a linear-function experiment ``trials``
    times: samples are uniform on a disc of radius 4t around the origin,
    f(y) = a . y with a random slope (or the fixed ``slope``), and the error
    is ||direction - a||.  Returns a list of row dicts with the median and
    0.9-quantile per cell.
    """
    if trials < 30:
        raise ValueError(f"trials must be >= 30, got {trials}")
    rng = np.random.default_rng(seed)
    rows = []
    for t in t_list:
        kp_delta = 0.9
        radius = 4.0 * t
        area = np.pi * radius ** 2
        for m in m_list:
            kp = KernelParams(t=t, delta=kp_delta, m=m)
            errs = np.empty(trials)
            for trial in range(trials):
                a = rng.standard_normal(2) if slope is None else np.asarray(slope, float)
                r = radius * np.sqrt(rng.uniform(size=m))
                phi = rng.uniform(0.0, 2 * np.pi, size=m)
                pts = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
                cloud = NeighborCloud(
                    base=np.zeros(2),
                    samples=pts,
                    f_base=0.0,
                    f_samples=pts @ a,
                    density=np.full(m, 1.0 / area),
                )
                est = estimate_gradient(cloud, kp)
                errs[trial] = np.linalg.norm(est.direction - a)
            rows.append({
                "t": float(t),
                "m": int(m),
                "median": float(np.median(errs)),
                "q90": float(np.quantile(errs, 0.9)),
            })
    return rows
