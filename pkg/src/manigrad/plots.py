"""Figure rendering for the command-line reports.

All functions save to files through the Agg backend; nothing is shown
interactively.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_convergence_plot(path, rows):
    """Log-log error quantiles of the estimator versus sample count, per bandwidth."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ts = sorted({r["t"] for r in rows})
    for t in ts:
        sub = [r for r in rows if r["t"] == t]
        ms = [r["m"] for r in sub]
        ax.loglog(ms, [r["median"] for r in sub], "o-", label=f"t={t:g} median")
        ax.loglog(ms, [r["q90"] for r in sub], "s--", alpha=0.5, label=f"t={t:g} q90")
    ax.set_xlabel("samples m")
    ax.set_ylabel("gradient error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_packing_plot(path, trace):
    """Packing density and step scale over the optimization trace."""
    fig, ax = plt.subplots(figsize=(6, 4))
    it = trace[:, 0]
    ax.plot(it, trace[:, 2], color="tab:blue", label="density")
    ax.set_xlabel("iteration")
    ax.set_ylabel("packing density")
    ax2 = ax.twinx()
    ax2.semilogy(it, trace[:, 3], color="tab:orange", alpha=0.6, label="lambda")
    ax2.set_ylabel("relaxation parameter")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_lattice_scatter(path, points, g):
    """2-D lattice points with circles of radius g/2 around each."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(points[:, 0], points[:, 1], s=10, color="k")
    for p in points:
        ax.add_patch(plt.Circle(p, g / 2.0, fill=False, color="tab:blue", lw=0.5))
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_image(path, pixels, title=None):
    """Grayscale rendering of a 2-D array."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(np.asarray(pixels), cmap="gray", origin="lower")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_angle_plot(path, true_offsets, recovered):
    """Recovered signed angles against the true angular offsets."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(true_offsets, recovered, s=3, alpha=0.4)
    lim = max(np.max(np.abs(true_offsets)), np.max(np.abs(recovered)))
    ax.plot([-lim, lim], [-lim, lim], "k--", lw=0.5)
    ax.plot([-lim, lim], [lim, -lim], "k:", lw=0.5)
    ax.set_xlabel("true offset (rad)")
    ax.set_ylabel("recovered angle (rad)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_embedding_plot(path, coords, values):
    """2-D diffusion embedding colored by a scalar."""
    fig, ax = plt.subplots(figsize=(5, 4))
    sc = ax.scatter(coords[:, 0], coords[:, 1], c=values, s=8, cmap="viridis")
    fig.colorbar(sc, ax=ax, label="value")
    ax.set_xlabel("coordinate 1")
    ax.set_ylabel("coordinate 2")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
