"""Linear population games given by payoff kernels ``f(s, s')`` on [0, 1].

The payoff to strategy ``s`` at state ``mu`` is ``F(mu)(s) = int f(s, s') dmu(s')``;
on a finite support this is a matrix-vector product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .measures import MERGE_TOL, make_grid_measure
from .metric import bl_distance

PROBE_GRID_N = 32
COARSE_SEPARATION = 1e-3
FINE_SEPARATION = 1e-6
DIVERGENCE_RATIO = 10.0


class PayoffKernel:
    """Base class. Subclasses implement vectorized ``evaluate(s, s_prime)``."""

    kind: str = ""
    symmetric: bool = False

    def evaluate(self, s, s_prime) -> np.ndarray:
        raise NotImplementedError

    def matrix(self, support) -> np.ndarray:
        """``M[i, j] = f(s_i, s_j)`` on the given support."""
        support = np.asarray(support, dtype=float)
        return self.evaluate(support[:, None], support[None, :])

    def discretize(self, support) -> Callable[[np.ndarray], np.ndarray]:
        """Finite game ``theta -> F_hat(theta)`` on ``support``."""
        mat = self.matrix(support)
        return lambda theta: mat @ theta

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class ConstantZero(PayoffKernel):
    kind = "zero"
    symmetric = True

    def evaluate(self, s, s_prime):
        return np.zeros(np.broadcast(np.asarray(s), np.asarray(s_prime)).shape)

    def discretize(self, support):
        return lambda theta: np.zeros_like(np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class AnticoordinationDiscrete(PayoffKernel):
    """``f(s, s') = -1`` if ``s == s'`` else 0."""

    kind = "anticoordination"
    symmetric = True

    def evaluate(self, s, s_prime):
        return np.where(np.asarray(s) == np.asarray(s_prime), -1.0, 0.0)

    def discretize(self, support):
        # distinct support points make the payoff matrix -I
        return lambda theta: -np.asarray(theta, dtype=float)


def quartic_bump(r, width: float):
    """``h(r) = (1 - (r/w)^2)^2`` for ``r < w``, else 0. C^1, ``h(0) = 1``."""
    r = np.abs(np.asarray(r, dtype=float))
    q = 1.0 - (r / width) ** 2
    return np.where(r < width, q * q, 0.0)


def quartic_bump_max_slope(width: float) -> float:
    """Closed form of ``max_r |h'(r)|``, attained at ``r = w / sqrt(3)``."""
    return 8.0 / (3.0 * math.sqrt(3.0) * width)


@dataclass(frozen=True)
class AnticoordinationBump(PayoffKernel):
    """``f(s, s') = -h(|s - s'|)`` with the quartic bump ``h`` of the given width."""

    width: float = 0.1
    kind = "bump"
    symmetric = True

    def __post_init__(self):
        if not (0.0 < self.width <= 1.0) or not math.isfinite(self.width):
            raise ValueError(f"bump width must lie in (0, 1], got {self.width}")

    def evaluate(self, s, s_prime):
        return -quartic_bump(np.asarray(s) - np.asarray(s_prime), self.width)

    def to_dict(self):
        return {"kind": self.kind, "width": self.width}


class TabulatedGrid(PayoffKernel):
    """Payoff matrix given on a fixed finite support.

    Evaluating at points off the table raises ``ValueError``.
    """

    kind = "tabulated"

    def __init__(self, points, matrix):
        pts = np.asarray(points, dtype=float).ravel()
        mat = np.asarray(matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("tabulated payoff matrix must be square")
        if mat.shape[0] != pts.size:
            raise ValueError("tabulated matrix size does not match its points")
        if not np.all(np.isfinite(mat)):
            raise ValueError("tabulated payoff matrix must be finite")
        if pts.size > 1 and np.any(np.diff(pts) < MERGE_TOL):
            raise ValueError("tabulated points must be strictly increasing")
        self.points = pts
        self.table = mat
        self.symmetric = bool(np.array_equal(mat, mat.T))

    def _index(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(self.points, s), 0, self.points.size - 1)
        lower = np.clip(idx - 1, 0, self.points.size - 1)
        idx = np.where(
            np.abs(self.points[lower] - s) < np.abs(self.points[idx] - s), lower, idx
        )
        if np.any(np.abs(self.points[idx] - s) > MERGE_TOL):
            raise ValueError("tabulated kernel evaluated off its support")
        return idx

    def evaluate(self, s, s_prime):
        return self.table[self._index(s), self._index(s_prime)]

    def matrix(self, support):
        idx = self._index(np.asarray(support, dtype=float))
        return self.table[np.ix_(idx, idx)]

    def to_dict(self):
        return {"kind": self.kind, "points": self.points.tolist(), "matrix": self.table.tolist()}

    def __repr__(self):
        return f"TabulatedGrid(n={self.points.size})"


def kernel_from_dict(data: dict) -> PayoffKernel:
    kind = data.get("kind")
    if kind == "anticoordination":
        return AnticoordinationDiscrete()
    if kind == "bump":
        return AnticoordinationBump(float(data["width"]))
    if kind == "tabulated":
        return TabulatedGrid(data["points"], data["matrix"])
    if kind == "zero":
        return ConstantZero()
    raise ValueError(f"unknown kernel kind {kind!r}")


def scaled_kernel(kernel: PayoffKernel, support, factor: float) -> TabulatedGrid:
    """Tabulate ``factor * f`` on ``support``; used to speed up revision by ``n``."""
    support = np.asarray(support, dtype=float)
    return TabulatedGrid(support, factor * kernel.matrix(support))


def payoff_vector(kernel: PayoffKernel, support, theta) -> np.ndarray:
    """``values_i = sum_j f(s_i, s_j) theta_j``."""
    support = np.asarray(support, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if support.shape != theta.shape:
        raise ValueError(
            f"support and theta differ in length ({support.size} vs {theta.size})"
        )
    if abs(theta.sum() - 1.0) > 1e-9 or theta.min() < -1e-9:
        raise ValueError("theta must lie in the simplex (tolerance 1e-9)")
    return kernel.discretize(support)(theta)


@dataclass(frozen=True)
class ProbeReport:
    bound_estimate: float
    lip_s_estimate: float
    lip_measure_estimate: float
    diverging: bool
    lip_s_coarse: float

    def to_dict(self) -> dict:
        return {
            "bound_estimate": self.bound_estimate,
            "lip_s_estimate": self.lip_s_estimate,
            "lip_s_coarse": self.lip_s_coarse,
            "lip_measure_estimate": self.lip_measure_estimate,
            "diverging": self.diverging,
            "heuristic": True,
        }


def assumption1_probe(kernel: PayoffKernel, sample_count: int = 2000, seed: int = 0) -> ProbeReport:
    """Monte-Carlo lower estimates of the kernel's bound and Lipschitz constants.

    Separations ``|s - t|`` are drawn log-uniformly from ``[1e-6, 1e-1]`` with
    the interval ends always included. Partner points ``s'`` are the diagonal
    ``s' = s``, a uniform draw, or a point near ``s``, in equal shares. The
    kernel is flagged as diverging when the Lipschitz estimate over all
    separations is at least 10x the one over separations ``>= 1e-3``.
    """
    if sample_count < 2:
        raise ValueError("sample_count must be at least 2")
    rng = np.random.default_rng(seed)

    a = rng.random(sample_count)
    b = rng.random(sample_count)
    bound = float(np.max(np.abs(kernel.evaluate(a, b))))
    bound = max(bound, float(np.max(np.abs(kernel.evaluate(a, a)))))

    sep = 10.0 ** rng.uniform(-6.0, -1.0, sample_count)
    sep[0], sep[1] = FINE_SEPARATION, COARSE_SEPARATION
    s = rng.uniform(0.0, 1.0 - 0.1, sample_count)
    t = s + sep
    mode = np.arange(sample_count) % 3
    partner = np.where(
        mode == 0, s, np.where(mode == 1, rng.random(sample_count),
                               np.clip(s + rng.uniform(-0.5, 0.5, sample_count), 0, 1))
    )
    diff = np.abs(kernel.evaluate(s, partner) - kernel.evaluate(t, partner))
    ratio = diff / np.abs(t - s)
    lip_fine = float(ratio.max())
    coarse = np.abs(t - s) >= COARSE_SEPARATION * (1 - 1e-12)
    lip_coarse = float(ratio[coarse].max()) if np.any(coarse) else 0.0
    if lip_fine == 0.0:
        diverging = False
    else:
        diverging = lip_coarse == 0.0 or lip_fine >= DIVERGENCE_RATIO * lip_coarse

    grid = make_grid_measure(PROBE_GRID_N)
    game = kernel.discretize(grid.points)
    pairs = max(sample_count // 20, 2)
    lip_mu = 0.0
    for _ in range(pairs):
        th1 = rng.dirichlet(np.ones(PROBE_GRID_N))
        th2 = rng.dirichlet(np.ones(PROBE_GRID_N))
        d = bl_distance(grid.with_weights(th1), grid.with_weights(th2)).distance
        if d > 0:
            lip_mu = max(lip_mu, float(np.max(np.abs(game(th1) - game(th2)))) / d)

    return ProbeReport(bound, lip_fine, lip_mu, diverging, lip_coarse)
