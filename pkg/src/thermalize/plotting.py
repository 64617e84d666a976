"""SVG figures for experiment reports.

Every function draws one figure, writes it to ``path`` and returns the path.
Output is deterministic: no timestamp metadata and a fixed id salt.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.8),
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "svg.hashsalt": "thermalize",
    "svg.fonttype": "none",
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def mode_spectrum(path, frequencies, exact=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        k = np.arange(1, len(frequencies) + 1)
        ax.plot(k, frequencies, "o", ms=3, label="eigensolve")
        if exact is not None:
            ax.plot(k, exact, "-", color="0.5", label="closed form")
            ax.legend(frameon=False)
        ax.set_xlabel("mode index")
        ax.set_ylabel(r"$\omega$")
        return _save(fig, path)


def widths_vs_time(path, times, widths, threshold=None, cm=None, cm_law=None):
    """``widths`` has shape (len(times), n_atoms)."""
    with plt.rc_context(STYLE):
        fig, (ax, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.6))
        ax.plot(times, widths.max(axis=1), label="max internal width")
        ax.plot(times, widths.min(axis=1), color="0.6", label="min internal width")
        if threshold is not None:
            ax.axhline(threshold, ls="--", color="C3", label="d/2")
        ax.set_xlabel("t")
        ax.set_ylabel("width")
        ax.legend(frameon=False)
        if cm is not None:
            ax2.plot(times, cm, label="CM width")
            if cm_law is not None:
                ax2.plot(times, cm_law, "--", color="0.4", label="free spreading")
            ax2.set_xlabel("t")
            ax2.set_ylabel("CM width")
            ax2.legend(frameon=False)
        else:
            ax2.set_axis_off()
        return _save(fig, path)


def mode_energies(path, frequencies, energies):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogy(frequencies, np.maximum(energies, 1e-300), "o", ms=3)
        ax.set_xlabel(r"$\omega_i$")
        ax.set_ylabel(r"$E_i$")
        return _save(fig, path)


def phase_mismatch(path, times, mismatch, tol, t_vib=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(times, mismatch, lw=0.6)
        ax.axhline(tol, ls="--", color="C3", label="tolerance")
        if t_vib is not None:
            ax.axvline(t_vib, color="C2", label=r"$t_{vib}$")
        ax.set_xlabel("t")
        ax.set_ylabel(r"max$_i |e^{i\omega_i t}-1|$")
        ax.legend(frameon=False)
        return _save(fig, path)


def level_density(path, energies, log_counts, temps=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ok = np.isfinite(log_counts)
        ax.plot(energies[ok], log_counts[ok], "-")
        ax.set_xlabel("E")
        ax.set_ylabel(r"$\ln g(E)$")
        if temps is not None:
            ax2 = ax.twinx()
            e, t = temps
            ax2.plot(e, t, ".", color="C1", ms=3)
            ax2.set_ylabel("T", color="C1")
        return _save(fig, path)


def occupancy_vs_planck(path, omegas, measured, planck, label="microcanonical"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        order = np.argsort(omegas)
        ax.plot(np.asarray(omegas)[order], np.asarray(planck)[order], "-", color="0.4",
                label="Bose-Einstein")
        ax.plot(omegas, measured, "o", ms=3, label=label)
        ax.set_xlabel(r"$\omega$")
        ax.set_ylabel(r"$\bar n$")
        ax.legend(frameon=False)
        return _save(fig, path)


def occupancy_trace(path, steps, occupancy, stationary=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for a in range(occupancy.shape[1]):
            ax.plot(steps, occupancy[:, a], lw=0.5, label=f"mode {a}")
            if stationary is not None:
                ax.axhline(stationary[a], ls="--", color=f"C{a}")
        ax.set_xlabel("step")
        ax.set_ylabel("photon occupancy")
        ax.legend(frameon=False)
        return _save(fig, path)


def partition_histograms(path, energies, h_ke, h_pe):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogy(energies, np.where(h_ke > 0, h_ke, np.nan), drawstyle="steps-mid", label=r"$h_{KE}$")
        ax.semilogy(energies, np.where(h_pe > 0, h_pe, np.nan), drawstyle="steps-mid", label=r"$h_{PE}$")
        ax.set_xlabel("E")
        ax.set_ylabel("density")
        ax.legend(frameon=False)
        return _save(fig, path)
