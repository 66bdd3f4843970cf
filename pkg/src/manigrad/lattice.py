"""Lattice sphere packing over SL(n).

The packing objective is the shortest-vector length of a unit-determinant
basis; it is computed exactly by depth-first enumeration over the
Gram-Schmidt triangularization, cross-checked by a certified brute-force
oracle.  The SL(n) retraction, the Gaussian neighbor sampler, and the
end-to-end derivative-free packing run live here as well.
"""

import math
from dataclasses import dataclass

import numpy as np

from .kernel_gradient import KernelParams, NeighborCloud
from .manifold_opt import OptimizerParams, Retraction, minimize

DET_TOL = 1e-10
LENGTH_TOL = 1e-10
MINKOWSKI_SLACK = 1e-9


class SingularBasisError(ValueError):
    """Determinant too close to zero for the SL(n) retraction."""


class CertificationError(RuntimeError):
    """The brute-force coefficient box cannot be certified to contain the minimizer."""


def sl_retract(b):
    """Project a nonsingular matrix onto SL(n).

    The first column is multiplied by the sign of the determinant and the
    whole matrix divided by |det|^(1/n); determinant-one matrices are fixed
    points.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    det = np.linalg.det(b)
    if abs(det) < 1e-300:
        raise SingularBasisError(f"determinant {det} too small to retract")
    out = np.array(b, copy=True)
    out[:, 0] *= np.sign(det)
    out /= abs(det) ** (1.0 / n)
    return out


@dataclass
class LatticeBasis:
    """n x n real matrix of column basis vectors with unit determinant.

    The constructor retracts the input onto SL(n).
    """

    columns: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.columns, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError(f"basis must be square, got shape {b.shape}")
        self.columns = sl_retract(b)

    @property
    def n(self):
        return self.columns.shape[0]


@dataclass
class ShortestVectorResult:
    """Shortest nonzero lattice vector: its length and integer coefficients."""

    length: float
    coeffs: np.ndarray


def _normalize_sign(z):
    """Flip so the leading nonzero coefficient is positive."""
    for v in z:
        if v != 0:
            return z if v > 0 else -z
    return z


def _pick_candidate(cands):
    """Among (length, coeffs) within tolerance of the best, the lexicographically
    smallest sign-normalized coefficient vector."""
    best_len = min(c[0] for c in cands)
    pool = [tuple(_normalize_sign(np.asarray(c[1], dtype=int)))
            for c in cands if c[0] <= best_len + LENGTH_TOL]
    z = np.array(min(pool), dtype=int)
    return best_len, z


def _gram_schmidt(b):
    """Column Gram-Schmidt: orthogonal vectors b*_i, coefficients mu, norms^2."""
    n = b.shape[1]
    bstar = np.array(b, dtype=float, copy=True)
    mu = np.eye(n)
    norms2 = np.zeros(n)
    for i in range(n):
        for j in range(i):
            mu[i, j] = b[:, i] @ bstar[:, j] / norms2[j]
            bstar[:, i] -= mu[i, j] * bstar[:, j]
        norms2[i] = bstar[:, i] @ bstar[:, i]
        if norms2[i] <= 0:
            raise ValueError("rank-deficient basis")
    return bstar, mu, norms2


def _size_reduce(b):
    """Size-reduce the basis for conditioning; returns (reduced, transform U)
    with reduced = b @ U and |mu_ij| <= 1/2."""
    b = np.array(b, dtype=float, copy=True)
    n = b.shape[1]
    u = np.eye(n, dtype=int)
    _, mu, _ = _gram_schmidt(b)
    for i in range(1, n):
        for j in range(i - 1, -1, -1):
            r = round(mu[i, j])
            if r:
                b[:, i] -= r * b[:, j]
                u[:, i] -= r * u[:, j]
                _, mu, _ = _gram_schmidt(b)
    return b, u


def shortest_vector(basis):
    """Exact shortest nonzero vector by depth-first enumeration.

    The search radius starts at the smallest column norm and tightens on
    every improvement; ties at the minimum break to the lexicographically
    smallest coefficient vector with positive leading entry.
    """
    b = basis.columns if isinstance(basis, LatticeBasis) else np.asarray(basis, float)
    if abs(np.linalg.det(b)) < 1e-300:
        raise ValueError("rank-deficient basis")
    red, u = _size_reduce(b)
    _, mu, norms2 = _gram_schmidt(red)
    n = red.shape[1]

    col2 = np.einsum("ij,ij->j", red, red)
    radius2 = float(np.min(col2))
    cands = [(math.sqrt(col2[j]), u[:, j]) for j in range(n)
             if col2[j] <= radius2 + LENGTH_TOL]

    z = np.zeros(n, dtype=int)
    # centers[i] = -sum_{j>i} z_j mu_ji at the time level i is entered
    def dfs(level, partial2):
        nonlocal radius2, cands
        center = -sum(z[j] * mu[j, level] for j in range(level + 1, n))
        z0 = round(center)
        offsets = [0]
        for d in range(1, _max_span(level, partial2, center, z0) + 1):
            offsets.extend((d, -d))
        for off in offsets:
            zi = z0 + off
            contrib = (zi - center) ** 2 * norms2[level]
            total = partial2 + contrib
            if total > radius2 + LENGTH_TOL:
                continue
            z[level] = zi
            if level == 0:
                if any(z):
                    length2 = total
                    radius2 = min(radius2, length2)
                    cands = [c for c in cands if c[0] ** 2 <= radius2 + LENGTH_TOL]
                    cands.append((math.sqrt(length2), u @ z))
            else:
                dfs(level - 1, total)
        z[level] = 0

    def _max_span(level, partial2, center, z0):
        room = radius2 + LENGTH_TOL - partial2
        if room <= 0:
            return 0
        half = math.sqrt(room / norms2[level])
        return int(math.ceil(half + abs(center - z0))) + 1

    dfs(n - 1, 0.0)
    best_len, zc = _pick_candidate(cands)
    vec = b @ zc
    return ShortestVectorResult(length=float(np.linalg.norm(vec)), coeffs=zc)


def _certified_bounds(red, radius):
    """Per-coordinate coefficient bounds for vectors shorter than ``radius``,
    valid for a size-reduced basis (|mu| <= 1/2)."""
    _, _, norms2 = _gram_schmidt(red)
    n = red.shape[1]
    bounds = np.zeros(n, dtype=int)
    for i in range(n - 1, -1, -1):
        slack = radius / math.sqrt(norms2[i]) + 0.5 * bounds[i + 1:].sum()
        bounds[i] = int(math.floor(slack + 1e-9))
    return bounds


def shortest_vector_bruteforce(basis, bound=None):
    """Exhaustive scan over a certified coefficient box; exact minimum.

    When ``bound`` is given, the box ||z||_inf <= bound is used and checked
    against the certified per-coordinate bounds; a box that cannot be
    certified to contain the minimizer raises :class:`CertificationError`.
    """
    b = basis.columns if isinstance(basis, LatticeBasis) else np.asarray(basis, float)
    red, u = _size_reduce(b)
    col2 = np.einsum("ij,ij->j", red, red)
    radius = math.sqrt(float(np.min(col2)))
    bounds = _certified_bounds(red, radius)
    if bound is not None:
        if np.any(bounds > bound):
            raise CertificationError(
                f"bound {bound} below certified requirement {bounds.tolist()}"
            )
        bounds = np.full_like(bounds, bound)
    sizes = 2 * bounds + 1
    total = int(np.prod(sizes))
    if total > 20_000_000:
        raise CertificationError(f"certified box has {total} points; too large")

    grids = np.meshgrid(*[np.arange(-bd, bd + 1) for bd in bounds], indexing="ij")
    zs = np.stack([g.ravel() for g in grids], axis=1)
    zs = zs[np.any(zs != 0, axis=1)]
    vecs = zs @ red.T
    lens2 = np.einsum("ij,ij->i", vecs, vecs)
    best2 = lens2.min()
    mask = lens2 <= best2 + LENGTH_TOL
    cands = [(math.sqrt(l2), u @ z) for l2, z in zip(lens2[mask], zs[mask])]
    best_len, zc = _pick_candidate(cands)
    vec = b @ zc
    return ShortestVectorResult(length=float(np.linalg.norm(vec)), coeffs=zc)


def unit_ball_volume(n):
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def packing_density(basis, g=None):
    """Packing density V_n * (g/2)^n of a unit-determinant lattice."""
    b = basis if isinstance(basis, LatticeBasis) else LatticeBasis(basis)
    if g is None:
        g = shortest_vector(b).length
    return unit_ball_volume(b.n) * (g / 2.0) ** b.n


def sample_neighbors(basis, sigma, m, seed):
    """Gaussian entrywise perturbations retracted back onto SL(n).

    A draw with vanishing determinant is redrawn (bounded retries).
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    b = basis.columns if isinstance(basis, LatticeBasis) else np.asarray(basis, float)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(m):
        for _attempt in range(100):
            cand = b + sigma * rng.standard_normal(b.shape)
            if abs(np.linalg.det(cand)) >= 1e-12:
                out.append(LatticeBasis(cand))
                break
        else:
            raise SingularBasisError("could not draw a nonsingular perturbation")
    return out


@dataclass
class PackResult:
    best_basis: LatticeBasis
    best_density: float
    trace: "np.ndarray"      # rows: iter, g, density, lambda
    opt_trace: object
    minkowski_violations: int


def default_pack_params(sigma=2e-2, m=20, max_iters=2000):
    """Descent schedule used by the packing experiments."""
    return OptimizerParams(
        lambda0=0.1,
        l=10,
        epsilon=1e-10,
        s_f=1.1,
        kernel=KernelParams(t=sigma, delta=0.99, m=m),
        max_iters=max_iters,
    )


def pack(n, params=None, sigma=2e-2, seed=0):
    """Maximize the packing density over SL(n) from the identity basis.

    Runs the derivative-free optimizer on minus the shortest-vector length;
    the sampler draws Gaussian entrywise perturbations of spread ``sigma``
    retracted to SL(n), matched to the kernel bandwidth.  Every evaluated
    basis is checked against the Minkowski bound g <= sqrt(n).
    """
    if n < 2:
        raise ValueError(f"dimension must be >= 2, got {n}")
    if params is None:
        params = default_pack_params(sigma=sigma)
    rng = np.random.default_rng(seed)
    violations = 0
    bound = math.sqrt(n) + MINKOWSKI_SLACK

    def g_of(mat):
        nonlocal violations
        g = shortest_vector(LatticeBasis(mat.reshape(n, n))).length
        if g > bound:
            violations += 1
        return g

    def f(vec):
        return -g_of(vec)

    def retract_vec(_x, target):
        return sl_retract(target.reshape(n, n)).ravel()

    retraction = Retraction(apply=retract_vec,
                            contains=lambda v: abs(np.linalg.det(v.reshape(n, n)) - 1) < 1e-8)

    def sampler(x):
        b = x.reshape(n, n)
        pts = []
        for _ in range(params.kernel.m):
            for _attempt in range(100):
                cand = b + sigma * rng.standard_normal((n, n))
                if abs(np.linalg.det(cand)) >= 1e-12:
                    pts.append(sl_retract(cand).ravel())
                    break
            else:
                raise SingularBasisError("could not draw a nonsingular perturbation")
        pts = np.stack(pts)
        return NeighborCloud(
            base=x,
            samples=pts,
            f_base=float(f(x)),
            f_samples=np.array([f(p) for p in pts]),
        )

    x0 = np.eye(n).ravel()
    opt_trace = minimize(f, x0, sampler, retraction, params)

    rows = []
    for rec in opt_trace.iterates:
        g = -rec.f_value
        rows.append((rec.k, g, unit_ball_volume(n) * (g / 2.0) ** n, rec.lam))
    best_basis = LatticeBasis(opt_trace.best_point.reshape(n, n))
    best_g = -opt_trace.best_f
    return PackResult(
        best_basis=best_basis,
        best_density=unit_ball_volume(n) * (best_g / 2.0) ** n,
        trace=np.array(rows),
        opt_trace=opt_trace,
        minkowski_violations=violations,
    )


def lattice_points(basis, radius):
    """All lattice points within ``radius`` of the origin (for plotting)."""
    b = basis.columns if isinstance(basis, LatticeBasis) else np.asarray(basis, float)
    red, _ = _size_reduce(b)
    bounds = _certified_bounds(red, radius)
    grids = np.meshgrid(*[np.arange(-bd, bd + 1) for bd in bounds], indexing="ij")
    zs = np.stack([g.ravel() for g in grids], axis=1)
    pts = zs @ red.T
    keep = np.einsum("ij,ij->i", pts, pts) <= radius ** 2 + LENGTH_TOL
    return pts[keep]
