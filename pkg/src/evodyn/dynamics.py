"""Finite mean dynamics on the simplex and their time integration."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .games import PayoffKernel
from .protocols import ProtocolKind, ReferenceMode, RevisionProtocol, rate_matrix

log = logging.getLogger(__name__)

COUPLING_TOL = 1e-12
SIMPLEX_TOL = 1e-9


class ContractViolation(ValueError):
    """A caller broke a documented precondition of the dynamics."""


class NumericalAbort(RuntimeError):
    """Integration stopped: step underflow, non-finite values or a large negative clip."""


def check_simplex(x, tol: float = SIMPLEX_TOL, name: str = "state") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"{name} must be a nonempty vector")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    if x.min() < -1e-12 or abs(x.sum() - 1.0) > tol:
        raise ValueError(f"{name} is not in the simplex (sum={x.sum()!r}, min={x.min()!r})")
    return x


# -- right-hand side ---------------------------------------------------------


def mean_dynamics_rhs(x, lam, protocol: RevisionProtocol, rho) -> np.ndarray:
    """Literal inflow-minus-outflow evaluation through the dense rate matrix.

    ``v_i = lam_i sum_j R[j, i] x_j - x_i sum_j R[i, j] lam_j``. O(n^2); kept as
    the reference implementation that ``rhs`` is checked against.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    rates = rate_matrix(protocol, x, rho)
    return lam * (rates.T @ x) - x * (rates @ lam)


def _smith(x, lam, rho):
    order = np.argsort(rho, kind="stable")
    r = rho[order]
    cx = np.concatenate([[0.0], np.cumsum(x[order])])
    cxr = np.concatenate([[0.0], np.cumsum(x[order] * r)])
    cl = np.concatenate([[0.0], np.cumsum(lam[order])])
    clr = np.concatenate([[0.0], np.cumsum(lam[order] * r)])
    below = np.searchsorted(r, rho, side="left")
    above = np.searchsorted(r, rho, side="right")
    gain = rho * cx[below] - cxr[below]
    loss = (clr[-1] - clr[above]) - rho * (cl[-1] - cl[above])
    return lam * np.maximum(gain, 0.0) - x * np.maximum(loss, 0.0)


def rhs(x, lambda_weights, protocol: RevisionProtocol, rho) -> np.ndarray:
    """Velocity of the finite mean dynamics at state ``x`` with payoffs ``rho``.

    State-coupled protocols require ``lambda_weights`` equal to ``x``
    (within 1e-12), else ``ContractViolation``; the replicator then
    evaluates ``x_i (rho_i - x @ rho)`` directly.
    """
    x = np.asarray(x, dtype=float)
    rho = np.asarray(rho, dtype=float)
    lam = x if lambda_weights is None else np.asarray(lambda_weights, dtype=float)
    if not (x.shape == lam.shape == rho.shape):
        raise ValueError("x, lambda and rho must have equal lengths")
    # rates are shift-invariant; centring makes constant payoffs give exact zeros
    rho = rho - rho.max()
    if protocol.reference_mode is ReferenceMode.STATE_COUPLED:
        if lam is not x and np.max(np.abs(lam - x)) > COUPLING_TOL:
            raise ContractViolation(
                f"{protocol} couples the reference measure to the state; lambda != x"
            )
        return x * (rho - x @ rho)
    if protocol.kind is ProtocolKind.BNN:
        excess = np.maximum(rho - x @ rho, 0.0)
        return lam * excess * x.sum() - x * (excess @ lam)
    return _smith(x, lam, rho)


class VectorField:
    """``x -> v(x)`` for a fixed game, protocol, support and reference measure."""

    def __init__(self, kernel: PayoffKernel, protocol: RevisionProtocol, support, lambda_weights=None):
        self.kernel = kernel
        self.protocol = protocol
        self.support = np.asarray(support, dtype=float)
        self.game = kernel.discretize(self.support)
        if protocol.reference_mode is ReferenceMode.STATE_COUPLED:
            self.lam = None
        else:
            if lambda_weights is None:
                raise ValueError(f"{protocol} needs a fixed reference measure")
            self.lam = check_simplex(lambda_weights, name="reference measure")
            if self.lam.size != self.support.size:
                raise ValueError("reference measure and support differ in length")

    def payoffs(self, x) -> np.ndarray:
        return self.game(x)

    def __call__(self, x) -> np.ndarray:
        return rhs(x, self.lam, self.protocol, self.game(x))


# -- integrator configuration ----------------------------------------------


@dataclass(frozen=True)
class RK4Fixed:
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def to_dict(self):
        return {"method": "rk4", "dt": self.dt}


@dataclass(frozen=True)
class RK45Adaptive:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    dt_max: float = 0.1

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0 and self.dt_max > 0):
            raise ValueError("tolerances and dt_max must be positive")

    def to_dict(self):
        return {"method": "rk45", "rel_tol": self.rel_tol, "abs_tol": self.abs_tol,
                "dt_max": self.dt_max}


Method = Union[RK4Fixed, RK45Adaptive]


@dataclass(frozen=True)
class IntegratorConfig:
    """``emit`` equispaced emission times on ``[0, t_end]`` (both ends included);
    ``emit=None`` emits every accepted step instead."""

    method: Method = field(default_factory=RK45Adaptive)
    t_end: float = 10.0
    renorm_every: int = 16
    negative_clip: float = 1e-12
    emit: Optional[int] = 200

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.renorm_every < 1:
            raise ValueError("renorm_every must be at least 1")
        if not self.negative_clip > 0:
            raise ValueError("negative_clip must be positive")
        if self.emit is not None and self.emit < 2:
            raise ValueError("emit needs at least 2 times")

    def emission_times(self) -> Optional[np.ndarray]:
        if self.emit is None:
            return None
        return np.linspace(0.0, self.t_end, self.emit)

    def replace(self, **changes) -> "IntegratorConfig":
        data = dict(method=self.method, t_end=self.t_end, renorm_every=self.renorm_every,
                    negative_clip=self.negative_clip, emit=self.emit)
        data.update(changes)
        return IntegratorConfig(**data)

    def to_dict(self):
        return {**self.method.to_dict(), "t_end": self.t_end, "renorm_every": self.renorm_every,
                "negative_clip": self.negative_clip, "emit": self.emit}


# -- trajectory --------------------------------------------------------------


@dataclass
class Trajectory:
    support: np.ndarray
    times: np.ndarray
    states: np.ndarray
    config_fingerprint: str = ""
    max_mass_drift: float = 0.0
    steps: int = 0

    @property
    def n(self) -> int:
        return self.support.size

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path) -> None:
        """Header ``t,s_1,...,s_n`` with support points as labels; 17 significant digits."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t"] + [repr(float(s)) for s in self.support])
            for t, x in zip(self.times, self.states):
                writer.writerow([repr(float(t))] + ["%.17g" % v for v in x])


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    support = np.array([float(s) for s in rows[0][1:]])
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    return Trajectory(support, data[:, 0], data[:, 1:])


# -- stepping ----------------------------------------------------------------

# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def _finite(v, where):
    if not np.all(np.isfinite(v)):
        raise NumericalAbort(f"non-finite velocity {where}")
    return v


def _dopri_step(f, x, h, k1):
    ks = [k1]
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, 7):
            y = x + h * sum(a * k for a, k in zip(_A[i], ks) if a != 0.0)
            ks.append(f(y))
        x_new = x + h * sum(b * k for b, k in zip(_B, ks) if b != 0.0)
        err = h * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
    return x_new, err


def _rk4_step(f, x, h, k1):
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


class _Stepper:
    def __init__(self, cfg: IntegratorConfig):
        self.cfg = cfg
        self.max_drift = 0.0
        self.accepted = 0

    def settle(self, x, force: bool) -> np.ndarray:
        """Bookkeeping after an accepted step: drift record, clip, periodic renormalization."""
        self.accepted += 1
        self.max_drift = max(self.max_drift, abs(float(x.sum()) - 1.0))
        if force or self.accepted % self.cfg.renorm_every == 0:
            return self.renormalize(x)
        if x.min() < -self.cfg.negative_clip:
            raise NumericalAbort(f"state component {x.min()!r} below -{self.cfg.negative_clip}")
        return x

    def renormalize(self, x) -> np.ndarray:
        if x.min() < -self.cfg.negative_clip:
            raise NumericalAbort(f"state component {x.min()!r} below -{self.cfg.negative_clip}")
        x = np.where(x < 0.0, 0.0, x)
        return x / x.sum()


def integrate_field(f, x0, cfg: IntegratorConfig, support=None, fingerprint: str = "") -> Trajectory:
    """Integrate ``dx/dt = f(x)`` from ``x0`` over ``[0, cfg.t_end]``."""
    x = check_simplex(x0, name="initial state").copy()
    support = np.arange(x.size, dtype=float) if support is None else np.asarray(support, dtype=float)
    emit_times = cfg.emission_times()
    stepper = _Stepper(cfg)
    t_end = cfg.t_end
    times = [0.0]
    states = [x.copy()]
    next_emit = 1

    def target():
        return emit_times[next_emit] if emit_times is not None else t_end

    method = cfg.method
    t = 0.0
    k1 = _finite(f(x), "at t=0")
    if isinstance(method, RK4Fixed):
        h_nominal = method.dt
    else:
        scale = method.abs_tol + method.rel_tol * np.abs(x)
        d0 = np.sqrt(np.mean((x / scale) ** 2))
        d1 = np.sqrt(np.mean((k1 / scale) ** 2))
        h_nominal = 0.01 * d0 / d1 if d1 > 1e-5 and d0 > 1e-5 else 1e-6
        h_nominal = min(h_nominal, method.dt_max, t_end)
    h_floor = 1e-12 * t_end

    while t < t_end:
        tgt = target()
        h = min(h_nominal, tgt - t)
        hits_target = h >= tgt - t
        if isinstance(method, RK4Fixed):
            x_new = _rk4_step(f, x, h, k1)
            _finite(x_new, f"at t={t + h!r}")
        else:
            x_new, err = _dopri_step(f, x, h, k1)
            with np.errstate(over="ignore", invalid="ignore"):
                scale = method.abs_tol + method.rel_tol * np.maximum(np.abs(x), np.abs(x_new))
                enorm = float(np.sqrt(np.mean((err / scale) ** 2)))
            if not np.isfinite(enorm) or not np.all(np.isfinite(x_new)):
                # an overflowing trial step is rejected like any other
                enorm = math.inf
            if enorm > 1.0:
                h_nominal = h * max(0.2, 0.9 * enorm ** -0.2)
                if h_nominal < h_floor:
                    raise NumericalAbort(f"step size underflow at t={t!r} (h={h_nominal!r})")
                continue
            grow = 10.0 if enorm == 0.0 else min(10.0, 0.9 * enorm ** -0.2)
            if not hits_target or h >= h_nominal:
                h_nominal = min(h * grow, method.dt_max)
        t = tgt if hits_target else t + h
        emit_now = hits_target and (emit_times is not None or t >= t_end)
        x = stepper.settle(x_new, force=emit_now or emit_times is None)
        if emit_now:
            times.append(t)
            states.append(x.copy())
            next_emit += 1
        elif emit_times is None:
            times.append(t)
            states.append(x.copy())
        k1 = _finite(f(x), f"at t={t!r}")

    return Trajectory(
        support=support,
        times=np.asarray(times),
        states=np.asarray(states),
        config_fingerprint=fingerprint,
        max_mass_drift=stepper.max_drift,
        steps=stepper.accepted,
    )


def integrate(kernel: PayoffKernel, protocol: RevisionProtocol, support, x0, lambda0,
              cfg: IntegratorConfig, fingerprint: str = "") -> Trajectory:
    """Integrate the finite mean dynamics of ``kernel`` under ``protocol``.

    ``lambda0`` is the fixed reference measure for BNN/Smith and is ignored
    for the replicator. Emitted states are renormalized onto the simplex.
    """
    support = np.asarray(support, dtype=float)
    x0 = check_simplex(x0, name="initial state")
    if x0.size != support.size:
        raise ValueError("initial state and support differ in length")
    field_ = VectorField(kernel, protocol, support,
                         None if protocol.reference_mode is ReferenceMode.STATE_COUPLED else lambda0)
    return integrate_field(field_, x0, cfg, support=support, fingerprint=fingerprint)
