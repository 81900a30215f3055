"""Figures written next to the CSV outputs of the command line tool."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _closed(V):
    return np.vstack([V, V[:1]])


def _ccw(V):
    c = V.mean(axis=0)
    return V[np.argsort(np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0]))]


def plot_sets(path, sets, labels=None, X=None, title=None):
    fig, ax = plt.subplots(figsize=(5, 4.5))
    if X is not None:
        ax.plot(*_closed(_ccw(X.vertices)).T, color="0.6", lw=1, ls="--", label="X")
    for i, S in enumerate(sets):
        lab = labels[i] if labels else f"S{i}"
        ax.plot(*_closed(_ccw(S.vertices)).T, lw=1.2, label=lab)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.legend(fontsize=7)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_trajectory(path, run):
    X = run.states
    k = np.arange(X.shape[0])
    fig, axs = plt.subplots(3, 1, figsize=(6, 6), sharex=True)
    for i in range(X.shape[1]):
        axs[0].plot(k, X[:, i], label=f"x{i + 1}")
    axs[0].legend(fontsize=7)
    axs[0].set_ylabel("state")
    U = run.inputs
    for i in range(U.shape[1]):
        axs[1].step(k[:-1], U[:, i], where="post", label=f"u{i + 1}")
    axs[1].set_ylabel("input")
    axs[2].semilogy(k[:-1], np.maximum(run.values, 1e-16))
    axs[2].set_ylabel("V")
    axs[2].set_xlabel("k")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_doa(path, grids, labels):
    fig, ax = plt.subplots(figsize=(5, 5))
    colors = ["tab:blue", "tab:orange", "tab:green"]
    for g, lab, col in zip(grids, labels, colors):
        ax.contour(g.x1, g.x2, g.feasible.astype(float), levels=[0.5], colors=[col])
        ax.plot([], [], color=col, label=lab)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_dims(path, N, built_d, built_in, formula_d, formula_in):
    fig, axs = plt.subplots(1, 2, figsize=(8, 3.5))
    axs[0].plot(N, built_d, "o-", label="built")
    axs[0].plot(N, formula_d, "s--", label="closed form")
    axs[0].set_title("decision variables")
    axs[1].plot(N, built_in, "o-", label="built")
    axs[1].plot(N, formula_in, "s--", label="closed form")
    axs[1].set_title("inequality constraints")
    for ax in axs:
        ax.set_xlabel("N")
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
