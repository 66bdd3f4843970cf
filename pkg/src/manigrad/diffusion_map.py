"""Symmetric-kernel diffusion-map embedding.

Builds the Gaussian kernel matrix over a point set, Markov-normalizes it,
and embeds the points with the leading nontrivial eigenpairs.  Coordinates
are scaled so that Euclidean distances in the full embedding reproduce
diffusion distances at the chosen diffusion time.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.spatial.distance import pdist, squareform

SYMMETRY_TOL = 1e-12


class DegenerateKernelError(ValueError):
    """A kernel row summed to zero; the bandwidth is too small."""


@dataclass
class KernelMatrix:
    """Symmetric non-negative kernel matrix with its bandwidth."""

    entries: np.ndarray
    bandwidth: float


@dataclass
class Embedding:
    """Diffusion-map coordinates with the spectrum that produced them.

    ``coordinates`` has one row per input point; column j equals
    eigenvalue_j**diffusion_time times the j-th nontrivial eigenvector.
    """

    coordinates: np.ndarray
    eigenvalues: np.ndarray
    diffusion_time: float


def pairwise_kernel(points, epsilon):
    """Gaussian kernel matrix W_ij = exp(-||x_i - x_j||^2 / (2 eps^2))."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] < 2:
        raise ValueError("need at least two points")
    if epsilon <= 0:
        raise ValueError(f"bandwidth must be positive, got {epsilon}")
    d2 = squareform(pdist(points, "sqeuclidean"))
    return KernelMatrix(entries=np.exp(-d2 / (2.0 * epsilon ** 2)), bandwidth=float(epsilon))


def markov_normalize(kernel):
    """Row-normalize a kernel matrix into a Markov transition matrix."""
    w = kernel.entries if isinstance(kernel, KernelMatrix) else np.asarray(kernel, float)
    sums = w.sum(axis=1)
    if np.any(sums <= 0):
        raise DegenerateKernelError("kernel row with zero sum; increase the bandwidth")
    return w / sums[:, None]


def _fix_signs(vecs):
    """Flip eigenvector signs so the largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def spectral_embed(p, m, t=1.0, row_sums=None):
    """Embed via the top nontrivial eigenpairs of a row-stochastic matrix.

    ``p`` must come from Markov normalization of a symmetric kernel; the
    spectrum is computed through the symmetric conjugation
    D^(1/2) P D^(-1/2).  ``row_sums`` are the pre-normalization kernel row
    sums; when omitted they are recovered from detailed balance
    (d_j proportional to P_1j / P_j1).

    Coordinates are eigenvalue**t times the right eigenvectors, normalized
    against the stationary distribution so that with m = k-1 the embedding
    is an exact isometry for diffusion distances at time t.
    """
    p = np.asarray(p, dtype=float)
    k = p.shape[0]
    if not 1 <= m <= k - 1:
        raise ValueError(f"embedding dimension m={m} must lie in [1, {k - 1}]")
    if row_sums is None:
        with np.errstate(divide="ignore", invalid="ignore"):
            d = p[0] / p[:, 0]
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise ValueError("cannot recover kernel row sums; pass row_sums")
    else:
        d = np.asarray(row_sums, dtype=float)
    d = d / d.sum()  # stationary distribution

    sqrt_d = np.sqrt(d)
    s = p * (sqrt_d[:, None] / sqrt_d[None, :])
    s = 0.5 * (s + s.T)
    try:
        evals, evecs = eigh(s, subset_by_index=(k - 1 - m, k - 1))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"eigensolver failed on a {k}x{k} transition matrix "
            f"(cond of symmetrized kernel: {np.linalg.cond(s):.3e})"
        ) from exc
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    if abs(evals[0] - 1.0) > 1e-10:
        raise ValueError(f"leading eigenvalue {evals[0]} is not 1; input is not Markov")

    # Right eigenvectors of P, normalized so sum_l phi_j(l)^2 pi_l = 1.
    phi = evecs[:, 1:] / sqrt_d[:, None]
    phi = _fix_signs(phi)
    lam = evals[1:]
    coords = phi * lam[None, :] ** t
    return Embedding(coordinates=coords, eigenvalues=lam, diffusion_time=float(t))


def auto_bandwidth(points):
    """Square root of the median nonzero pairwise squared distance."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] < 2:
        raise ValueError("need at least two points")
    d2 = pdist(points, "sqeuclidean")
    d2 = d2[d2 > 0]
    if d2.size == 0:
        raise ValueError("all points identical; bandwidth undefined")
    return float(np.sqrt(np.median(d2)))


def embed_points(points, m, t=1.0, epsilon=None):
    """Convenience pipeline: kernel, Markov normalization, spectral embedding."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if epsilon is None:
        epsilon = auto_bandwidth(points)
    kernel = pairwise_kernel(points, epsilon)
    p = markov_normalize(kernel)
    return spectral_embed(p, m, t, row_sums=kernel.entries.sum(axis=1))
