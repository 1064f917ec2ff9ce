"""Empirical probability measures on R^d.

Every element of P_2(R^d) handled by the package is a weighted particle
cloud.  Uniform weights are the default, which makes the synchronous
coupling of two clouds (index i of one paired with index i of the other)
a literal pair of random variables on a common finite sample space.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import norm

from .errors import (
    AssignmentTooLarge,
    DimensionMismatch,
    InvalidMeasure,
    UnequalSupportSize,
)

ASSIGNMENT_CAP = 512
WEIGHT_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Weighted point cloud ``sum_i w_i delta_{x_i}``.

    ``points`` has shape ``(N, dim)`` and ``weights`` shape ``(N,)``.
    Both arrays are copied and made read-only on construction.
    """

    points: np.ndarray
    weights: np.ndarray

    def __init__(self, points, weights=None, *, _trusted: bool = False):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if weights is None:
            n = pts.shape[0]
            w = np.full(n, 1.0 / n) if n else np.zeros(0)
        else:
            w = np.asarray(weights, dtype=float)
        if not _trusted:
            if pts.ndim != 2 or pts.shape[1] < 1:
                raise InvalidMeasure("points must have shape (N, dim) with dim >= 1")
            if pts.shape[0] < 1:
                raise InvalidMeasure("a measure needs at least one particle")
            if w.shape != (pts.shape[0],):
                raise InvalidMeasure("weights must be aligned with points")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise InvalidMeasure("weights must be finite and nonnegative")
            if abs(w.sum() - 1.0) > WEIGHT_TOL * max(1, pts.shape[0]):
                raise InvalidMeasure(f"weights sum to {w.sum()!r}, not 1")
            if not np.all(np.isfinite(pts)):
                raise InvalidMeasure("points must be finite")
            pts, w = _frozen(pts), _frozen(w)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    # construction helpers -------------------------------------------------
    @classmethod
    def uniform(cls, points) -> "EmpiricalMeasure":
        return cls(points)

    @classmethod
    def point_mass(cls, x, copies: int = 1) -> "EmpiricalMeasure":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(np.repeat(x[None, :], copies, axis=0))

    @classmethod
    def _fast(cls, points: np.ndarray, weights: np.ndarray | None = None) -> "EmpiricalMeasure":
        """Skip validation; for solver internals that already guarantee the invariants."""
        if weights is None:
            weights = np.full(points.shape[0], 1.0 / points.shape[0])
        return cls(points, weights, _trusted=True)

    # basic properties -----------------------------------------------------
    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(np.abs(self.weights - 1.0 / self.size) <= WEIGHT_TOL))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def second_moment(self) -> float:
        return float(self.weights @ np.sum(self.points**2, axis=1))

    def translate(self, v) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.points + np.asarray(v, dtype=float), self.weights)

    def __repr__(self) -> str:
        return f"EmpiricalMeasure(dim={self.dim}, N={self.size})"

    # serialization --------------------------------------------------------
    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"{self.dim},{self.size}\n")
        for w, x in zip(self.weights, self.points):
            buf.write(",".join(repr(float(v)) for v in (w, *x)))
            buf.write("\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "EmpiricalMeasure":
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if not lines:
            raise InvalidMeasure("empty measure file")
        try:
            dim, n = (int(v) for v in lines[0].split(","))
        except ValueError as exc:
            raise InvalidMeasure(f"bad header {lines[0]!r}") from exc
        rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=float)
        if rows.shape != (n, dim + 1):
            raise InvalidMeasure(f"expected {n} rows of {dim + 1} columns, got {rows.shape}")
        return cls(rows[:, 1:], rows[:, 0])

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "EmpiricalMeasure":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


# ---------------------------------------------------------------------------
# builders for initial data
# ---------------------------------------------------------------------------
def gaussian_quantiles(mean: float, std: float, n: int) -> EmpiricalMeasure:
    """Deterministic 1-D Gaussian cloud at the midpoint quantiles (i + 1/2)/n."""
    if n < 1:
        raise InvalidMeasure("n must be positive")
    if std == 0:
        return EmpiricalMeasure.point_mass([mean], n)
    q = (np.arange(n) + 0.5) / n
    return EmpiricalMeasure(mean + std * norm.ppf(q))


def gaussian_sample(mean, cov, n: int, seed: int) -> EmpiricalMeasure:
    """Random Gaussian cloud in any dimension from a seeded generator."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    rng = np.random.default_rng(seed)
    return EmpiricalMeasure(rng.multivariate_normal(mean, cov, size=n))


def density_on_grid(xs: np.ndarray, density: np.ndarray) -> EmpiricalMeasure:
    """Weighted measure on 1-D nodes with weights proportional to ``density``."""
    w = np.clip(np.asarray(density, dtype=float), 0.0, None)
    total = w.sum()
    if total <= 0:
        raise InvalidMeasure("density has no mass")
    return EmpiricalMeasure(np.asarray(xs, dtype=float)[:, None], w / total)


def resample(mu: EmpiricalMeasure, n: int, seed: int = 0) -> EmpiricalMeasure:
    """Uniform-weight cloud of ``n`` particles approximating ``mu``.

    Returns ``mu`` itself when it already has ``n`` uniform particles.  In
    d=1 the midpoint quantiles of ``mu`` are used; otherwise systematic
    resampling with a seeded offset.
    """
    if mu.size == n and mu.is_uniform:
        return mu
    levels = (np.arange(n) + 0.5) / n
    if mu.dim == 1:
        order = np.argsort(mu.points[:, 0], kind="stable")
        cdf = np.cumsum(mu.weights[order])
        idx = np.minimum(np.searchsorted(cdf, levels, side="left"), mu.size - 1)
        return EmpiricalMeasure(mu.points[order][idx])
    rng = np.random.default_rng(seed)
    u = (np.arange(n) + rng.uniform()) / n
    cdf = np.cumsum(mu.weights)
    idx = np.minimum(np.searchsorted(cdf, u, side="left"), mu.size - 1)
    return EmpiricalMeasure(mu.points[idx])


# ---------------------------------------------------------------------------
# moments and transport
# ---------------------------------------------------------------------------
def moment(mu: EmpiricalMeasure, p: int) -> float:
    """M_p(mu) = (sum_i w_i |x_i|^p)^(1/p) for p in {1, 2}."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    norms = np.linalg.norm(mu.points, axis=1)
    return float((mu.weights @ norms**p) ** (1.0 / p))


def _w1d(x: np.ndarray, wx: np.ndarray, y: np.ndarray, wy: np.ndarray, p: int) -> float:
    ox, oy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    xs, ys = x[ox], y[oy]
    if x.size == y.size and np.array_equal(wx, wy) and np.all(wx == wx[0]):
        return float((wx[0] * np.sum(np.abs(xs - ys) ** p)) ** (1.0 / p))
    cx, cy = np.cumsum(wx[ox]), np.cumsum(wy[oy])
    cx[-1] = cy[-1] = 1.0
    levels = np.union1d(cx, cy)
    lo = np.concatenate(([0.0], levels[:-1]))
    mid = 0.5 * (lo + levels)
    qx = xs[np.minimum(np.searchsorted(cx, mid), xs.size - 1)]
    qy = ys[np.minimum(np.searchsorted(cy, mid), ys.size - 1)]
    return float(np.sum((levels - lo) * np.abs(qx - qy) ** p) ** (1.0 / p))


def wasserstein(
    mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: int = 2, *, cap: int = ASSIGNMENT_CAP
) -> float:
    """Exact W_p between two clouds.

    d=1 uses the monotone (quantile) coupling and accepts arbitrary weights.
    d>=2 solves the optimal assignment between two equal-size uniform clouds
    and refuses clouds larger than ``cap``.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"dim {mu.dim} vs {nu.dim}")
    if mu.dim == 1:
        return _w1d(mu.points[:, 0], mu.weights, nu.points[:, 0], nu.weights, p)
    if mu.size != nu.size:
        raise UnequalSupportSize(f"{mu.size} vs {nu.size} particles")
    if not (mu.is_uniform and nu.is_uniform):
        raise InvalidMeasure("exact transport in dim >= 2 needs uniform weights")
    if mu.size > cap:
        raise AssignmentTooLarge(f"{mu.size} particles exceeds the assignment cap {cap}")
    diff = mu.points[:, None, :] - nu.points[None, :, :]
    cost = np.linalg.norm(diff, axis=2) ** p
    rows, cols = linear_sum_assignment(cost)
    return float((cost[rows, cols].mean()) ** (1.0 / p))


def w2_flow_1d(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-row W2 between uniform 1-D clouds stored as rows of two arrays."""
    sa, sb = np.sort(a, axis=-1), np.sort(b, axis=-1)
    return np.sqrt(np.mean((sa - sb) ** 2, axis=-1))


def couple_synchronous(
    mu: EmpiricalMeasure, nu: EmpiricalMeasure, mode: str = "identity"
) -> list[tuple[int, int]]:
    """Index pairing that reads two clouds as random variables on one sample space."""
    if mu.size != nu.size:
        raise UnequalSupportSize(f"{mu.size} vs {nu.size} particles")
    if not np.allclose(mu.weights, nu.weights, rtol=0, atol=WEIGHT_TOL):
        raise UnequalSupportSize("synchronous coupling needs matching weights")
    n = mu.size
    if mode == "identity":
        return [(i, i) for i in range(n)]
    if mode == "monotone":
        if mu.dim != 1:
            raise DimensionMismatch("monotone pairing is defined in d=1 only")
        om = np.argsort(mu.points[:, 0], kind="stable")
        on = np.argsort(nu.points[:, 0], kind="stable")
        partner = np.empty(n, dtype=int)
        partner[om] = on
        return [(i, int(partner[i])) for i in range(n)]
    raise ValueError(f"unknown coupling mode {mode!r}")


def same_support(mu: EmpiricalMeasure, nu: EmpiricalMeasure, tol: float = 0.0) -> bool:
    """True when the clouds agree up to a permutation of particles."""
    if mu.dim != nu.dim or mu.size != nu.size:
        return False
    key = lambda m: np.lexsort(np.column_stack([m.points, m.weights]).T[::-1])
    a = np.column_stack([mu.points, mu.weights])[key(mu)]
    b = np.column_stack([nu.points, nu.weights])[key(nu)]
    return bool(np.all(np.abs(a - b) <= tol))


def stack_points(measures: Sequence[EmpiricalMeasure] | Iterable[EmpiricalMeasure]) -> np.ndarray:
    return np.stack([m.points for m in measures])


class MeasureFlow:
    """A time-indexed family of clouds, one per node, sharing a particle count.

    ``points`` is either ``(K, N, d)`` (moving particles) or ``(N, d)`` (a fixed
    support such as a grid); ``weights`` is ``None`` (uniform) or ``(K, N)``.
    Built-in models accept a flow wherever they accept a single measure and
    broadcast over the leading axis, which lets solvers evaluate a whole time
    grid in one call.
    """

    def __init__(self, points: np.ndarray, weights: np.ndarray | None = None, n_nodes: int | None = None):
        self.points = np.asarray(points, dtype=float)
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        if self.points.ndim == 3:
            self.n_nodes = self.points.shape[0]
        elif self.weights is not None:
            self.n_nodes = self.weights.shape[0]
        else:
            self.n_nodes = int(n_nodes or 1)

    @property
    def dim(self) -> int:
        return self.points.shape[-1]

    def means(self) -> np.ndarray:
        """Array ``(K, d)`` of node means."""
        if self.weights is None:
            if self.points.ndim == 3:
                return self.points.mean(axis=1)
            return np.repeat(self.points.mean(axis=0)[None, :], self.n_nodes, axis=0)
        if self.points.ndim == 3:
            return np.einsum("kn,knd->kd", self.weights, self.points)
        return self.weights @ self.points

    def __len__(self) -> int:
        return self.n_nodes

    def __getitem__(self, k: int) -> EmpiricalMeasure:
        pts = self.points[k] if self.points.ndim == 3 else self.points
        w = None if self.weights is None else self.weights[k]
        return EmpiricalMeasure._fast(pts, w)

    def measures(self) -> list[EmpiricalMeasure]:
        return [self[k] for k in range(self.n_nodes)]
