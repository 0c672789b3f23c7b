"""Figure rendering for the CLI report paths.

Each function takes the row dictionaries a subcommand emits and writes one
PNG next to the table.  Rendering is optional at the CLI level, so this
module is only imported when a figure was actually requested; everything
runs on the Agg backend and never opens a window.
"""

from __future__ import annotations

from typing import Any

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["render_counts_figure", "render_prep1d_figure", "render_shear_figure"]


def _sorted_by(rows: list[dict[str, Any]], key: str) -> list[dict[str, Any]]:
    return sorted(rows, key=lambda row: row[key])


def render_prep1d_figure(rows: list[dict[str, Any]], path: str) -> None:
    """Gate-count comparison and (when simulated) infidelity vs angle bits."""
    with_fid = [r for r in rows if r.get("fidelity") is not None]
    fig, axes = plt.subplots(1, 2 if with_fid else 1, figsize=(9, 3.4))
    ax0 = axes[0] if with_fid else axes
    by_k = _sorted_by(rows, "k")
    ax0.plot([r["k"] for r in by_k], [r["cnot_kw"] for r in by_k],
             "o-", label="recursive")
    ax0.plot([r["k"] for r in by_k], [r["cnot_exponential_formula"] for r in by_k],
             "s--", label="generic real")
    ax0.set_xlabel("state qubits k")
    ax0.set_ylabel("CNOTs")
    ax0.set_yscale("log")
    ax0.legend()
    if with_fid:
        by_b = _sorted_by(with_fid, "b")
        axes[1].semilogy([r["b"] for r in by_b],
                         [max(1.0 - r["fidelity"], 1e-18) for r in by_b], "o-")
        axes[1].set_xlabel("angle bits b")
        axes[1].set_ylabel("1 - F")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_shear_figure(rows: list[dict[str, Any]], path: str) -> None:
    """Measured vs bounded CNOTs, and infidelity against N when available."""
    with_fid = [r for r in rows if r.get("fidelity_vs_optimal") is not None]
    fig, axes = plt.subplots(1, 2 if with_fid else 1, figsize=(9, 3.4))
    ax0 = axes[0] if with_fid else axes
    by_n = _sorted_by(rows, "n_dims")
    ax0.plot([r["n_dims"] for r in by_n], [r["cnot_measured"] for r in by_n],
             "o-", label="measured")
    ax0.plot([r["n_dims"] for r in by_n], [r["cnot_bound"] for r in by_n],
             "s--", label="bound")
    ax0.set_xlabel("dimensions N")
    ax0.set_ylabel("CNOTs")
    ax0.legend()
    if with_fid:
        by_n = _sorted_by(with_fid, "n_dims")
        axes[1].semilogy([r["n_dims"] for r in by_n],
                         [max(1.0 - r["fidelity_vs_optimal"], 1e-18) for r in by_n],
                         "o-")
        axes[1].set_xlabel("dimensions N")
        axes[1].set_ylabel("1 - F")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_counts_figure(rows: list[dict[str, Any]], path: str) -> None:
    """Crossover chart: sheared-pipeline totals against generic preparation."""
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    by_n = _sorted_by(rows, "n_dims")
    ax.semilogy([r["n_dims"] for r in by_n], [r["cnot_total"] for r in by_n],
                "o-", label="shear + 1D inputs")
    ax.semilogy([r["n_dims"] for r in by_n], [r["cnot_generic"] for r in by_n],
                "s--", label="generic real")
    ax.set_xlabel("dimensions N")
    ax.set_ylabel("CNOTs")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
