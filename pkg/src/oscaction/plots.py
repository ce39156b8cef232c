"""Figure rendering for the CLI report path.

Every report that writes a delimited table also renders a figure next
to it; these helpers keep the plotting conventions in one place.  The
Agg backend is forced so reports work headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_pf_profile(path, bus_ids, vm, va_deg):
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    pos = np.arange(len(bus_ids))
    ax1.bar(pos, vm, color="tab:blue")
    ax1.set_ylabel("|V| (pu)")
    ax1.set_ylim(0, max(1.1, 1.05 * max(vm)))
    ax1.grid(axis="y", alpha=0.4)
    ax2.bar(pos, va_deg, color="tab:orange")
    ax2.set_ylabel("angle (deg)")
    ax2.set_xlabel("bus")
    ax2.set_xticks(pos)
    ax2.set_xticklabels([str(b) for b in bus_ids], rotation=90, fontsize=7)
    ax2.grid(axis="y", alpha=0.4)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_eig_scatter(path, eigenvalues, title="eigenvalues"):
    lam = np.asarray(eigenvalues)
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.scatter(lam.real, lam.imag, marker="x", color="tab:red")
    ax.axvline(0.0, color="k", lw=0.8)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("Re (1/s)")
    ax.set_ylabel("Im (rad/s)")
    ax.set_title(title)
    ax.grid(alpha=0.4)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_loci(path, gains, eigenvalues, title="eigenvalue loci"):
    """Root loci over a gain grid; one line per tracked mode."""

    eigs = np.asarray(eigenvalues)
    fig, ax = plt.subplots(figsize=(6, 5))
    for i in range(eigs.shape[1]):
        ax.plot(eigs[:, i].real, eigs[:, i].imag, "-", lw=0.8, alpha=0.7)
        ax.plot(eigs[0, i].real, eigs[0, i].imag, "o", ms=4,
                color="tab:green")
        ax.plot(eigs[-1, i].real, eigs[-1, i].imag, "s", ms=4,
                color="tab:red")
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_xlabel("Re (1/s)")
    ax.set_ylabel("Im (rad/s)")
    ax.set_title(f"{title} (o: gain {gains[0]:g}, s: gain {gains[-1]:g})")
    ax.grid(alpha=0.4)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_energy_curves(path, curves, title="kinetic oscillation energy"):
    """``curves`` is a list of (label, t, ek) triples."""

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, t, ek in curves:
        ax.plot(t, ek, lw=1.0, label=label)
    ax.set_xlabel("t (s)")
    ax.set_ylabel("E_k (pu s)")
    ax.set_title(title)
    ax.grid(alpha=0.4)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_ranking_bars(path, buses, totals, beta_terms,
                      title="total-action sensitivity"):
    pos = np.arange(len(buses))
    width = 0.4
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar(pos - width / 2, totals, width, label="total", color="tab:blue")
    ax.bar(pos + width / 2, beta_terms, width, label="beta term",
           color="tab:orange")
    ax.set_xticks(pos)
    ax.set_xticklabels([f"bus {b}" for b in buses])
    ax.set_ylabel("dS_inf/dtheta")
    ax.set_title(title)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.grid(axis="y", alpha=0.4)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
