"""Discrete probability measures on the strategy interval [0, 1]."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

MERGE_TOL = 1e-12
MASS_TOL = 1e-12


class GridPlacement(str, enum.Enum):
    ENDPOINTS = "endpoints"
    MIDPOINTS = "midpoints"


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely supported probability measure on [0, 1].

    Points are sorted on construction, points closer than ``MERGE_TOL`` are
    merged by summing their weights, and weights whose total is off unit
    mass by more than ``MASS_TOL`` are rescaled. Both arrays are read-only after construction.
    """

    points: np.ndarray
    weights: np.ndarray

    def __init__(self, points: Sequence[float], weights: Sequence[float]):
        pts = np.asarray(points, dtype=float).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if pts.shape != w.shape:
            raise ValueError(
                f"points and weights differ in length ({pts.size} vs {w.size})"
            )
        if pts.size == 0:
            raise ValueError("a measure needs at least one support point")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
            raise ValueError("points and weights must be finite")
        if pts.min() < 0.0 or pts.max() > 1.0:
            raise ValueError("support points must lie in [0, 1]")
        if w.min() < 0.0:
            raise ValueError("weights must be nonnegative")
        total = w.sum()
        if total <= 0.0:
            raise ValueError("weights must have positive total mass")

        order = np.argsort(pts, kind="stable")
        pts, w = pts[order], w[order]
        if pts.size > 1 and np.any(np.diff(pts) < MERGE_TOL):
            pts, w = _merge_close(pts, w)
        if abs(total - 1.0) > MASS_TOL:
            w = w / total

        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.weights, other.weights
        )

    def __hash__(self) -> int:
        return hash((self.points.tobytes(), self.weights.tobytes()))

    @classmethod
    def dirac(cls, point: float) -> "DiscreteMeasure":
        return cls([point], [1.0])

    def with_weights(self, weights: Sequence[float]) -> "DiscreteMeasure":
        """Same support, new weights (e.g. a simplex state on this grid)."""
        return DiscreteMeasure(self.points, weights)

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteMeasure":
        return cls(data["points"], data["weights"])


def _merge_close(points: np.ndarray, weights: np.ndarray):
    merged_p = [points[0]]
    merged_w = [weights[0]]
    for p, w in zip(points[1:], weights[1:]):
        if p - merged_p[-1] < MERGE_TOL:
            merged_w[-1] += w
        else:
            merged_p.append(p)
            merged_w.append(w)
    return np.array(merged_p), np.array(merged_w)


def grid_points(n: int, placement: GridPlacement | str = GridPlacement.ENDPOINTS) -> np.ndarray:
    placement = GridPlacement(placement)
    if n < 1:
        raise ValueError(f"grid size must be positive, got {n}")
    if placement is GridPlacement.ENDPOINTS:
        if n < 2:
            raise ValueError("endpoint placement needs n >= 2")
        return np.arange(n) / (n - 1)
    return (np.arange(n) + 0.5) / n


def make_grid_measure(
    n: int, placement: GridPlacement | str = GridPlacement.ENDPOINTS
) -> DiscreteMeasure:
    """Uniform weights ``1/n`` on an ``n``-point grid of [0, 1].

    Endpoints puts ``s_i = (i-1)/(n-1)``; Midpoints puts ``s_i = (i-1/2)/n``.
    """
    pts = grid_points(n, placement)
    return DiscreteMeasure(pts, np.full(n, 1.0 / n))


# -- densities -------------------------------------------------------------


@dataclass(frozen=True)
class UniformDensity:
    def cdf_inverse(self, u: np.ndarray) -> np.ndarray:
        return u

    def pdf(self, s: np.ndarray) -> np.ndarray:
        return np.ones_like(np.asarray(s, dtype=float))

    def to_dict(self) -> dict:
        return {"kind": "uniform"}


@dataclass(frozen=True)
class PiecewiseDensity:
    """Piecewise-constant density: ``values[k]`` on ``[breaks[k], breaks[k+1])``.

    Breaks must start at 0, end at 1 and increase strictly. Values are
    rescaled so the density integrates to one.
    """

    breaks: tuple
    values: tuple
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if b.ndim != 1 or v.ndim != 1 or b.size != v.size + 1 or v.size == 0:
            raise ValueError("need len(breaks) == len(values) + 1 >= 2")
        if b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
            raise ValueError("breaks must increase strictly from 0 to 1")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite and nonnegative")
        mass = float(np.dot(v, np.diff(b)))
        if mass <= 0.0:
            raise ValueError("density has zero total mass")
        if abs(mass - 1.0) > MASS_TOL:
            v = v / mass
        object.__setattr__(self, "breaks", tuple(b.tolist()))
        object.__setattr__(self, "values", tuple(v.tolist()))
        cdf = np.concatenate([[0.0], np.cumsum(v * np.diff(b))])
        cdf[-1] = 1.0
        object.__setattr__(self, "_cdf", cdf)

    def pdf(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        b = np.asarray(self.breaks)
        idx = np.clip(np.searchsorted(b, s, side="right") - 1, 0, len(self.values) - 1)
        return np.asarray(self.values)[idx]

    def cdf_inverse(self, u: np.ndarray) -> np.ndarray:
        b = np.asarray(self.breaks)
        v = np.asarray(self.values)
        cdf = self._cdf
        # zero-density pieces have zero cdf increment; side="right" skips them
        k = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, v.size - 1)
        out = np.empty_like(u)
        pos = v[k] > 0
        out[pos] = b[k[pos]] + (u[pos] - cdf[k[pos]]) / v[k[pos]]
        out[~pos] = b[k[~pos]]
        return np.clip(out, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {"kind": "piecewise", "breaks": list(self.breaks), "values": list(self.values)}


DensitySpec = Union[UniformDensity, PiecewiseDensity]


def density_from_dict(data: dict) -> DensitySpec:
    kind = data.get("kind")
    if kind == "uniform":
        return UniformDensity()
    if kind == "piecewise":
        return PiecewiseDensity(tuple(data["breaks"]), tuple(data["values"]))
    raise ValueError(f"unknown density kind {kind!r}")


def sample_measure(density: DensitySpec, n: int, seed: int) -> DiscreteMeasure:
    """Empirical measure of ``n`` i.i.d. inverse-CDF draws, each of weight ``1/n``.

    Output depends only on ``(density, n, seed)``.
    """
    if n < 1:
        raise ValueError(f"sample size must be positive, got {n}")
    rng = np.random.default_rng(np.uint64(seed % 2**64))
    u = rng.random(n)
    pts = density.cdf_inverse(u)
    return DiscreteMeasure(pts, np.full(n, 1.0 / n))


def restrict_density(
    density: DensitySpec, n: int, placement: GridPlacement | str = GridPlacement.ENDPOINTS
) -> DiscreteMeasure:
    """Grid restriction of a density: weights proportional to the density at grid points."""
    pts = grid_points(n, placement)
    w = density.pdf(pts)
    if w.sum() <= 0.0:
        raise ValueError("density vanishes on every grid point")
    return DiscreteMeasure(pts, w)


def is_normalized(weights: np.ndarray, tol: float = MASS_TOL) -> bool:
    return math.isclose(float(np.sum(weights)), 1.0, rel_tol=0.0, abs_tol=tol)
