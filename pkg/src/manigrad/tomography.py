"""Tomographic reconstruction from projections taken at unknown angles.

The pipeline recovers projection angles up to a global rotation and
reflection: first-moment magnitudes give unsigned angles relative to the
image's center-of-mass direction, and the signs are bootstrapped on a
diffusion-map embedding of the low-angle projections and then propagated
window by window through the sorted angle sequence.  Filtered back
projection and a registered relative error metric complete the loop.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

logger = logging.getLogger(__name__)

from .diffusion_map import embed_points
from .kernel_gradient import gradient_direction_unnormalized

REFLECT_TOL = math.pi * 1e-3
MASS_TOL = 1e-12


class DegenerateCentroidError(ValueError):
    """All first moments vanish; the image's center of mass sits at the origin."""


class PropagationError(RuntimeError):
    """Sign propagation reached a window with no signed reference point."""


@dataclass
class Image:
    """Square pixel grid over the box [-extent, extent]^2."""

    pixels: np.ndarray
    extent: float = 1.0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if self.pixels.ndim != 2 or self.pixels.shape[0] != self.pixels.shape[1]:
            raise ValueError(f"pixels must be square, got shape {self.pixels.shape}")

    @property
    def n(self):
        return self.pixels.shape[0]

    @property
    def pixel_size(self):
        return 2.0 * self.extent / self.n


@dataclass
class ProjectionSet:
    """Stack of 1-D projections with their common detector coordinates."""

    rows: np.ndarray
    detectors: np.ndarray

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        self.detectors = np.asarray(self.detectors, dtype=float)
        if self.rows.shape[1] != self.detectors.shape[0]:
            raise ValueError(
                f"rows have {self.rows.shape[1]} bins but {self.detectors.shape[0]} detectors"
            )

    @property
    def k(self):
        return self.rows.shape[0]

    @property
    def h(self):
        return float(self.detectors[1] - self.detectors[0])


@dataclass
class PartitionPlan:
    """Index windows over the angle-sorted projections.

    The first ``u`` windows have ``s`` entries each; a nonzero remainder of
    ``r`` entries forms one final shorter window.
    """

    windows: list
    s: int
    r: int


@dataclass
class AngleEstimate:
    """Recovered angles with the intermediate quantities of the pipeline.

    ``angles`` are signed angles in original projection order, relative to
    the (unknown) center-of-mass direction of the image; the global rotation
    and reflection are unidentifiable from the projections.
    """

    angles: np.ndarray
    unsigned: np.ndarray
    signs: np.ndarray
    vnorm: float
    reference_index: int
    clamped: int
    reflected: bool
    order: np.ndarray
    plan: PartitionPlan
    embeddings: list = field(default_factory=list)


# (value, semi-axis a, semi-axis b, x0, y0, rotation in degrees)
_SHEPP_LOGAN = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
]


def shepp_logan(n, shift=(0.0, 0.0), supersample=4):
    """Shepp-Logan head phantom on an n x n grid over [-1, 1]^2.

    ``shift`` translates every ellipse center, moving the center of mass off
    the origin so that the first-moment angle recovery is well posed.  Each
    pixel is averaged over ``supersample``^2 subsamples.
    """
    if n < 2:
        raise ValueError(f"grid size must be >= 2, got {n}")
    ns = n * supersample
    coords = -1.0 + (np.arange(ns) + 0.5) * (2.0 / ns)
    xx, yy = np.meshgrid(coords, coords, indexing="xy")
    img = np.zeros((ns, ns))
    dx, dy = shift
    for val, a, b, x0, y0, phi_deg in _SHEPP_LOGAN:
        phi = math.radians(phi_deg)
        xr = (xx - x0 - dx) * math.cos(phi) + (yy - y0 - dy) * math.sin(phi)
        yr = -(xx - x0 - dx) * math.sin(phi) + (yy - y0 - dy) * math.cos(phi)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += val
    img = img.reshape(n, supersample, n, supersample).mean(axis=(1, 3))
    return Image(pixels=img, extent=1.0)


def radon_forward(image, angles, n_detectors=None):
    """Parallel-beam Radon transform of ``image`` at the given angles.

    Projection i integrates the image along lines perpendicular to the
    direction (cos a_i, sin a_i); detectors sit at ``n_detectors`` equispaced
    offsets spanning the box diagonal (so no mass is clipped at any angle),
    the integration step is one pixel, and the rays cover the diagonal too.
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    e = image.extent
    n = image.n
    half = e * math.sqrt(2.0)
    if n_detectors is None:
        # twice the diagonal pixel count; halves the ramp-filter bin width,
        # which dominates the reconstruction error at sharp edges
        n_detectors = 2 * int(math.ceil(n * math.sqrt(2.0)))
    detectors = np.linspace(-half, half, n_detectors)
    h = image.pixel_size
    taus = np.arange(-half, half + 0.5 * h, h)

    rows = np.empty((angles.size, n_detectors))
    ss, tt = np.meshgrid(detectors, taus, indexing="ij")
    for i, a in enumerate(angles):
        ca, sa = math.cos(a), math.sin(a)
        x = ss * ca - tt * sa
        y = ss * sa + tt * ca
        # pixel (r, c) is centered at x = -e + (c + 0.5) h, y likewise for r
        col = (x + e) / h - 0.5
        row = (y + e) / h - 0.5
        vals = ndimage.map_coordinates(image.pixels, [row.ravel(), col.ravel()],
                                       order=1, mode="constant", cval=0.0)
        rows[i] = vals.reshape(ss.shape).sum(axis=1) * h
    return ProjectionSet(rows=rows, detectors=detectors)


def add_white_noise(proj, eta, seed):
    """Additive white Gaussian noise: row + eta * w, w standard normal."""
    if eta < 0:
        raise ValueError(f"noise level must be non-negative, got {eta}")
    if eta == 0:
        return ProjectionSet(rows=np.array(proj.rows, copy=True), detectors=proj.detectors)
    rng = np.random.default_rng(seed)
    noisy = proj.rows + eta * rng.standard_normal(proj.rows.shape)
    return ProjectionSet(rows=noisy, detectors=proj.detectors)


def l1_normalize(proj):
    """Normalize each projection to unit L1 mass (h times the absolute sum)."""
    mass = proj.h * np.abs(proj.rows).sum(axis=1)
    if np.any(mass < MASS_TOL):
        raise ValueError("projection with vanishing L1 mass cannot be normalized")
    return ProjectionSet(rows=proj.rows / mass[:, None], detectors=proj.detectors)


def projection_moments(proj):
    """First moment h * sum_j row_j * s_j of every projection row."""
    return proj.h * proj.rows @ proj.detectors


def estimate_vnorm(moments):
    """Largest absolute first moment and the index attaining it.

    This estimates the norm of the image's (mass-normalized) center-of-mass
    vector; a projection taken along that direction attains it.
    """
    moments = np.asarray(moments, dtype=float)
    idx = int(np.argmax(np.abs(moments)))
    vnorm = float(abs(moments[idx]))
    if vnorm < MASS_TOL:
        raise DegenerateCentroidError(
            "all first moments vanish; shift the image's center of mass off the origin"
        )
    return vnorm, idx


def recover_unsigned_angles(moments, vnorm):
    """Unsigned angles arccos(moment / vnorm), clipping out-of-range ratios.

    Returns the angles and the number of clipped ratios (noise can push
    |moment| slightly above vnorm's population value).
    """
    ratio = np.asarray(moments, dtype=float) / vnorm
    clamped = int(np.count_nonzero(np.abs(ratio) > 1.0))
    return np.arccos(np.clip(ratio, -1.0, 1.0)), clamped


def maybe_reflect(unsigned, tol=REFLECT_TOL):
    """Reflect the unsigned angles (a -> pi - a) when the reference sits at pi.

    A minimum near 0 indicates the reference direction itself was observed
    and takes precedence (no reflection); otherwise a maximum near pi means
    the sorted sequence runs backwards and is flipped.
    """
    unsigned = np.asarray(unsigned, dtype=float)
    if float(unsigned.min()) < tol:
        return unsigned, False
    if abs(float(unsigned.max()) - math.pi) < tol:
        return math.pi - unsigned, True
    logger.warning("neither endpoint condition met (min %.3g, max %.3g); "
                   "proceeding unreflected", unsigned.min(), unsigned.max())
    return unsigned, False


def partition(k, s):
    """Split range(k) into floor(k/s) windows of s plus one remainder window."""
    if s < 1:
        raise ValueError(f"window size must be >= 1, got {s}")
    if k < 1:
        raise ValueError(f"need at least one projection, got {k}")
    u, r = divmod(k, s)
    windows = [np.arange(i * s, (i + 1) * s) for i in range(u)]
    if r:
        windows.append(np.arange(u * s, k))
    return PartitionPlan(windows=windows, s=s, r=r)


def gradient_directions(coords, gvals, m_neighbors):
    """Unnormalized kernel gradient direction of g at every embedded point.

    Each point uses its ``m_neighbors`` nearest embedded neighbors; only the
    direction of the result is meaningful.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    gvals = np.asarray(gvals, dtype=float)
    npts = coords.shape[0]
    dirs = np.empty_like(coords)
    for i in range(npts):
        d2 = np.sum((coords - coords[i]) ** 2, axis=1)
        order = np.argsort(d2, kind="stable")
        neigh = [j for j in order if j != i][:m_neighbors]
        dirs[i] = gradient_direction_unnormalized(
            coords[i], coords[neigh], gvals[i], gvals[neigh]
        )
    return dirs


def bootstrap_signs(points_sorted, unsigned_sorted, moments_sorted, plan,
                    m_neighbors=10):
    """Assign signs to the first two windows from a diffusion embedding.

    The first three windows (fewer if the plan is shorter) are embedded in
    the plane.  The gradient flow of the moment function reverses
    orientation exactly at the reference direction, so the two sign branches
    are separated by a hyperplane on the embedded curve; the median split of
    the leading diffusion coordinate realizes it.  Individual gradient
    estimates are noise-dominated this close to the cosine peak, so they are
    not used point by point; instead the gradients (``m_neighbors`` nearest
    embedded neighbors each) vote collectively, through their inner products
    with the gradient at the anchor (the second-smallest-angle point), to
    orient the split, with the anchor falling on the +1 side of a tie.  Only
    the first two windows keep their signs.

    Returns (signs, embedding) where ``signs`` has NaN outside the first two
    windows.
    """
    nwin = len(plan.windows)
    boot_windows = plan.windows[: min(3, nwin)]
    idx = np.concatenate(boot_windows)
    if idx.size < 3:
        raise ValueError(f"need at least three projections to bootstrap, got {idx.size}")
    emb = embed_points(points_sorted[idx], m=2)
    c1 = emb.coordinates[:, 0]
    local = np.where(c1 >= np.median(c1), 1.0, -1.0)

    m_eff = min(m_neighbors, idx.size - 1)
    dirs = gradient_directions(emb.coordinates, moments_sorted[idx], m_eff)
    anchor = int(np.argsort(unsigned_sorted[idx], kind="stable")[1])
    inner = dirs @ dirs[anchor]
    anchor_votes = np.where(inner >= 0.0, 1.0, -1.0)
    agreement = float(np.sum(local * anchor_votes))
    if agreement < 0 or (agreement == 0 and local[anchor] < 0):
        local = -local

    signs = np.full(unsigned_sorted.shape[0], np.nan)
    assign = np.concatenate(plan.windows[: min(2, nwin)])
    signs[assign] = local[: assign.size]
    return signs, emb


def propagate_signs(points_sorted, unsigned_sorted, plan, signs, return_embeddings=False):
    """Extend bootstrap signs to the remaining windows, one window at a time.

    Window w (from the third onward) is embedded jointly with the two
    windows before it; each of its points copies the sign of the nearest
    already-signed point in that embedding.  Two donor windows instead of
    one keep a single poorly signed window from derailing the whole chain.
    """
    signs = np.array(signs, dtype=float, copy=True)
    nwin = len(plan.windows)
    embeddings = []
    for w in range(2, nwin):
        idx = np.concatenate(plan.windows[w - 2: w + 1])
        emb = embed_points(points_sorted[idx], m=2)
        if return_embeddings:
            embeddings.append((w, idx, emb))
        coords = emb.coordinates
        signed_mask = ~np.isnan(signs[idx])
        if not np.any(signed_mask):
            raise PropagationError(f"no signed reference points before window {w}")
        signed_pos = np.flatnonzero(signed_mask)
        for local_i in np.flatnonzero(np.isnan(signs[idx])):
            d2 = np.sum((coords[signed_pos] - coords[local_i]) ** 2, axis=1)
            signs[idx[local_i]] = signs[idx[signed_pos[int(np.argmin(d2))]]]
    if np.any(np.isnan(signs)):
        raise PropagationError("sign propagation left unsigned projections")
    if return_embeddings:
        return signs, embeddings
    return signs


def assemble_angles(unsigned_sorted, signs_sorted, order):
    """Signed angles in original projection order."""
    k = unsigned_sorted.shape[0]
    angles = np.empty(k)
    angles[order] = signs_sorted * unsigned_sorted
    return angles


def recover_angles(proj, s=20, m_neighbors=10, keep_embeddings=False):
    """Recover projection angles up to a global rotation and reflection.

    Normalizes the projections, reads unsigned angles off the first moments,
    sorts, partitions into windows of ``s``, bootstraps the angle signs on a
    diffusion embedding of the low-angle windows, and propagates them to the
    rest.  The input's true angles are never consulted.
    """
    norm = l1_normalize(proj)
    moments = projection_moments(norm)
    vnorm, ref_idx = estimate_vnorm(moments)
    unsigned, clamped = recover_unsigned_angles(moments, vnorm)
    unsigned, reflected = maybe_reflect(unsigned)

    order = np.argsort(unsigned, kind="stable")
    pts = norm.rows[order]
    unsig_sorted = unsigned[order]
    plan = partition(proj.k, s)

    mom_sorted = moments[order]
    signs_sorted, boot_emb = bootstrap_signs(pts, unsig_sorted, mom_sorted, plan,
                                             m_neighbors)
    if len(plan.windows) > 2:
        out = propagate_signs(pts, unsig_sorted, plan, signs_sorted,
                              return_embeddings=keep_embeddings)
        signs_sorted = out[0] if keep_embeddings else out
        later = out[1] if keep_embeddings else []
    else:
        later = []
        if np.any(np.isnan(signs_sorted)):
            # a lone remainder window smaller than two full windows
            signs_sorted = np.where(np.isnan(signs_sorted), 1.0, signs_sorted)

    angles = assemble_angles(unsig_sorted, signs_sorted, order)
    signs = np.empty(proj.k)
    signs[order] = signs_sorted
    embeddings = [(0, np.concatenate(plan.windows[: min(3, len(plan.windows))]), boot_emb)]
    embeddings.extend(later)
    return AngleEstimate(
        angles=angles,
        unsigned=unsigned,
        signs=signs,
        vnorm=vnorm,
        reference_index=ref_idx,
        clamped=clamped,
        reflected=reflected,
        order=order,
        plan=plan,
        embeddings=embeddings if keep_embeddings else [],
    )


def sign_accuracy(estimated_signs, true_signs):
    """Agreement fraction between sign sequences, up to a global flip."""
    est = np.sign(np.asarray(estimated_signs, dtype=float))
    tru = np.sign(np.asarray(true_signs, dtype=float))
    acc = float(np.mean(est == tru))
    return max(acc, 1.0 - acc)


def _ramlak_kernel(l, h):
    """Discrete Ram-Lak (ramp) convolution kernel on 2l-1 taps."""
    n = np.arange(-(l - 1), l)
    kern = np.zeros(n.shape)
    kern[l - 1] = 1.0 / (4.0 * h * h)
    odd = n % 2 != 0
    kern[odd] = -1.0 / (math.pi ** 2 * n[odd] ** 2 * h * h)
    return kern


def fbp_reconstruct(proj, angles, n, extent=1.0, clamp=True):
    """Filtered back projection onto an n x n grid.

    Each projection is convolved with the discrete Ram-Lak kernel and
    back-projected with linear interpolation; the result is scaled by
    pi / k and clamped at zero unless ``clamp`` is disabled.
    """
    angles = np.asarray(angles, dtype=float)
    if angles.shape[0] != proj.k:
        raise ValueError(f"{angles.shape[0]} angles for {proj.k} projections")
    h = proj.h
    l = proj.detectors.shape[0]
    kern = _ramlak_kernel(l, h)
    # central l taps of the full convolution (kern has 2l-1 taps)
    filtered = np.stack([
        h * np.convolve(row, kern)[l - 1: 2 * l - 1] for row in proj.rows
    ])

    coords = -extent + (np.arange(n) + 0.5) * (2.0 * extent / n)
    xx, yy = np.meshgrid(coords, coords, indexing="xy")
    recon = np.zeros((n, n))
    for q, a in zip(filtered, angles):
        s = xx * math.cos(a) + yy * math.sin(a)
        recon += np.interp(s, proj.detectors, q, left=0.0, right=0.0)
    recon *= math.pi / proj.k
    if clamp:
        np.maximum(recon, 0.0, out=recon)
    return Image(pixels=recon, extent=extent)


def l2_error(recon, truth, register=True, grid_deg=1.0):
    """Relative L2 error between images, optionally minimized over alignment.

    With ``register`` the reconstruction is compared against every rotation
    on a ``grid_deg`` grid, with and without reflection, and the smallest
    error is returned (the angle recovery only fixes angles up to a global
    rotation and reflection).
    """
    a = recon.pixels if isinstance(recon, Image) else np.asarray(recon, float)
    b = truth.pixels if isinstance(truth, Image) else np.asarray(truth, float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    denom = float(np.linalg.norm(b))
    if denom == 0:
        raise ValueError("reference image is identically zero")
    if not register:
        return float(np.linalg.norm(a - b)) / denom

    best = np.inf
    for flipped in (a, a[:, ::-1]):
        for deg in np.arange(0.0, 360.0, grid_deg):
            rot = ndimage.rotate(flipped, deg, reshape=False, order=1,
                                 mode="constant", cval=0.0)
            best = min(best, float(np.linalg.norm(rot - b)))
    return best / denom


def run_pipeline(n=128, k=2000, s=20, eta=0.0, shift=(0.12, 0.18), seed=0,
                 m_neighbors=10, keep_embeddings=False):
    """End-to-end experiment: phantom, projections, angle recovery, FBP.

    True angles are drawn uniformly on (-pi/2, pi/2) around the phantom's
    center-of-mass direction, used only to generate the data and to score
    the recovery afterwards.  Returns a dict with the phantom, the
    reconstruction, the angle estimate, and error metrics.
    """
    rng = np.random.default_rng(seed)
    phantom = shepp_logan(n, shift=shift)
    com = _center_of_mass(phantom)
    theta_ref = math.atan2(com[1], com[0])
    offsets = rng.uniform(-math.pi / 2.0, math.pi / 2.0, size=k)
    true_angles = theta_ref + offsets

    clean = radon_forward(phantom, true_angles)
    noisy = add_white_noise(clean, eta, seed + 1)

    est = recover_angles(noisy, s=s, m_neighbors=m_neighbors,
                         keep_embeddings=keep_embeddings)
    recon = fbp_reconstruct(noisy, theta_ref + est.angles, n)
    err = l2_error(recon, phantom, register=True)

    # control reconstruction ignoring the recovered signs
    recon_unsigned = fbp_reconstruct(noisy, theta_ref + est.unsigned, n)
    err_unsigned = l2_error(recon_unsigned, phantom, register=True)

    baseline = fbp_reconstruct(noisy, true_angles, n)
    baseline_err = l2_error(baseline, phantom, register=False)

    return {
        "phantom": phantom,
        "projections": noisy,
        "estimate": est,
        "reconstruction": recon,
        "reconstruction_unsigned": recon_unsigned,
        "error": err,
        "error_unsigned": err_unsigned,
        "baseline_error": baseline_err,
        "true_angles": true_angles,
        "theta_ref": theta_ref,
        "sign_accuracy": sign_accuracy(est.signs, np.sign(offsets)),
        "unsigned_angle_rmse": float(np.sqrt(np.mean(
            (est.unsigned - np.abs(offsets)) ** 2))),
    }


def _center_of_mass(image):
    coords = -image.extent + (np.arange(image.n) + 0.5) * image.pixel_size
    xx, yy = np.meshgrid(coords, coords, indexing="xy")
    mass = image.pixels.sum()
    return np.array([
        (image.pixels * xx).sum() / mass,
        (image.pixels * yy).sum() / mass,
    ])
