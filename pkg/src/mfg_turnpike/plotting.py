"""Static SVG figures drawn from the columnar traces.

Output is byte-stable: the SVG hash salt is fixed and the date metadata is
dropped, so the same traces always give the same file.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "mfg-turnpike", "svg.fonttype": "none", "path.simplify": False}
_META = {"Date": None, "Creator": None}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def _positive(v: Sequence[float]) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    return np.where(a > 0, a, np.nan)


def plot_gaps(times, phi, Phi, w2, path, *, rate: float | None = None, shape: str = "backward",
              T: float | None = None) -> Path:
    """Phi, |phi| and W2^2 against time on a log scale, with a guide line of slope ``rate``."""
    t = np.asarray(times, dtype=float)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.semilogy(t, _positive(Phi), label="Phi")
        ax.semilogy(t, _positive(np.abs(phi)), label="|phi|", linestyle="--")
        ax.semilogy(t, _positive(np.square(w2)), label="W2^2", linestyle=":")
        if rate is not None and np.any(np.asarray(Phi) > 0):
            T = float(t[-1]) if T is None else T
            ref = np.nanmax(_positive(Phi))
            guide = np.exp(-rate * (T - t)) if shape == "backward" else np.exp(-rate * t)
            ax.semilogy(t, ref * guide, color="grey", linewidth=0.8, label=f"rate {rate:.3g}")
        ax.set_xlabel("t")
        ax.legend()
        return _save(fig, path)


def plot_lambda(horizons, lambdas, path, *, limit: float | None = None) -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(horizons, lambdas, marker="o", label="lambda_T")
        if limit is not None:
            ax.axhline(limit, color="grey", linewidth=0.8, label="reference")
        ax.set_xlabel("T")
        ax.legend()
        return _save(fig, path)


def plot_tilde_u(probe_xs, tilde_u, horizons, path, *, time_index: int = 0) -> Path:
    """Normalised value at one probe time, one curve per horizon."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        for T, u in zip(horizons, tilde_u):
            ax.plot(probe_xs, u[time_index], marker=".", label=f"T={T:g}")
        ax.set_xlabel("x")
        ax.legend()
        return _save(fig, path)
