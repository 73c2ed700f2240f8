"""PNG previews written next to the scenario CSV files (Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_fig1c(table, path) -> Path:
    a = np.asarray(table, dtype=float)
    fig, ax = plt.subplots(1, 2, figsize=(8, 3.2))
    ax[0].plot(a[:, 0], a[:, 1] / 1e3, "o-")
    ax[0].set(xlabel="I2 (mA)", ylabel="barrier (kHz)")
    ax[1].plot(a[:, 0], a[:, 5], "s-")
    ax[1].set(xlabel="I2 (mA)", ylabel="x0 (um)")
    return _save(fig, path)


def plot_fig2(rows, path) -> Path:
    a = np.asarray(rows, dtype=float)
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(a[:, 0], a[:, 2], "o-", label="xi^2")
    ax.plot(a[:, 0], a[:, 4], "s--", label="gain")
    ax.axhline(0, color="gray", lw=0.8)
    ax.set(xlabel="tau_r (ms)", ylabel="dB")
    ax.legend()
    return _save(fig, path)


def plot_fig4(curves: dict, path) -> Path:
    fig, ax = plt.subplots(1, 2, figsize=(8, 3.2))
    for n, rows in sorted(curves.items()):
        t = [r.t_over_tc for r in rows]
        ax[0].errorbar(t, [r.xi2 for r in rows], [r.xi2_err for r in rows], fmt="o:", mfc="none", label=f"N={n}")
        ax[0].plot(t, [r.xi2_tmm_ext for r in rows], "-", lw=0.8)
        ax[1].plot(t, [r.n2m_frac for r in rows], "o-", label=f"N={n}")
    ax[0].axhline(1, color="gray", lw=0.8)
    ax[0].set(xlabel="T / Tc", ylabel="xi^2", yscale="log")
    ax[1].set(xlabel="T / Tc", ylabel="N2m / N")
    ax[0].legend()
    return _save(fig, path)


def plot_estimator_bench(rows, path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    names = [r[0] for r in rows]
    x = np.arange(len(rows))
    truth = np.array([r[1] for r in rows])
    est = np.array([r[2] for r in rows])
    lo = np.array([r[3] for r in rows])
    hi = np.array([r[4] for r in rows])
    ax.bar(x, truth, color="lightgray", label="truth")
    ax.errorbar(x, est, [est - lo, hi - est], fmt="o", color="k", label="recovered")
    ax.set_xticks(x, names)
    ax.set(ylabel="xi^2", yscale="symlog")
    ax.legend()
    return _save(fig, path)
