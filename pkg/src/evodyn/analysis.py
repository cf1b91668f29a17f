"""Resolution studies: finite-time convergence, choice mobility, equilibria."""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import (
    IntegratorConfig,
    NumericalAbort,
    RK45Adaptive,
    Trajectory,
    VectorField,
    check_simplex,
    integrate_field,
)
from .games import AnticoordinationDiscrete, PayoffKernel, scaled_kernel
from .measures import (
    DensitySpec,
    DiscreteMeasure,
    GridPlacement,
    UniformDensity,
    grid_points,
    restrict_density,
    sample_measure,
)
from .metric import bl_distance, l1_state_distance
from .protocols import ProtocolKind, ReferenceMode, RevisionProtocol, max_rate

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
POKE_SIZE = 1e-6
POKE_RETURN = 1e-7
DEFAULT_T_MAX = 1e6
POLISH_FROM = 1e-6
EQUILIBRIUM_METHOD = RK45Adaptive(rel_tol=1e-8, abs_tol=1e-10, dt_max=math.inf)


# -- initial conditions ------------------------------------------------------


@dataclass(frozen=True)
class InitSpec:
    """How to build ``(support, x_n(0))`` at each resolution ``n``.

    kinds:
      ``density``  grid restriction of ``density`` (weights proportional to it)
      ``samples``  ``n`` i.i.d. draws from ``density`` with seed ``seed``
      ``split-offset``  ``m = ceil(eps n / 2)`` strategies raised by
                   ``eps / (2m)``, the next ``m`` lowered by the same amount
      ``dirichlet``  seeded flat-Dirichlet interior point on the grid
      ``vertex``   all mass on grid point ``index``
      ``weights``  explicit weights on the grid (length must equal ``n``)
    """

    kind: str = "density"
    density: DensitySpec = UniformDensity()
    seed: int = 0
    epsilon: float = 0.5
    index: int = 0
    weights: Optional[tuple] = None

    def build(self, n: int, placement=GridPlacement.ENDPOINTS) -> DiscreteMeasure:
        if self.kind == "density":
            return restrict_density(self.density, n, placement)
        if self.kind == "samples":
            return sample_measure(self.density, n, self.seed)
        pts = grid_points(n, placement)
        if self.kind == "split-offset":
            return DiscreteMeasure(pts, split_offset_state(n, self.epsilon))
        if self.kind == "dirichlet":
            rng = np.random.default_rng([self.seed, n])
            return DiscreteMeasure(pts, rng.dirichlet(np.ones(n)))
        if self.kind == "vertex":
            w = np.zeros(n)
            w[self.index] = 1.0
            return DiscreteMeasure(pts, w)
        if self.kind == "weights":
            if self.weights is None or len(self.weights) != n:
                raise ValueError(f"explicit weights do not match n={n}")
            return DiscreteMeasure(pts, np.asarray(self.weights, dtype=float))
        raise ValueError(f"unknown init kind {self.kind!r}")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind in ("density", "samples"):
            out["density"] = self.density.to_dict()
        if self.kind in ("samples", "dirichlet"):
            out["seed"] = self.seed
        if self.kind == "split-offset":
            out["epsilon"] = self.epsilon
        if self.kind == "vertex":
            out["index"] = self.index
        if self.kind == "weights":
            out["weights"] = list(self.weights)
        return out


def split_offset_state(n: int, epsilon: float) -> np.ndarray:
    """Start at l1 distance ``epsilon`` from uniform with small quadratic mass.

    ``2 ||x||_2^2 = 2/n + epsilon^2 / m`` for ``m = ceil(epsilon n / 2)``.
    """
    if not 0.0 < epsilon <= 2.0:
        raise ValueError("epsilon must lie in (0, 2]")
    m = math.ceil(epsilon * n / 2)
    if 2 * m > n:
        raise ValueError(f"n={n} too small for epsilon={epsilon}")
    shift = epsilon / (2 * m)
    return np.concatenate([
        np.full(m, 1.0 / n + shift),
        np.full(m, max(1.0 / n - shift, 0.0)),
        np.full(n - 2 * m, 1.0 / n),
    ])


def split_offset_speed_bound(n: int, epsilon: float) -> float:
    return 2.0 / n + epsilon**2 / math.ceil(epsilon * n / 2)


@dataclass(frozen=True)
class Setup:
    kernel: PayoffKernel
    protocol: RevisionProtocol
    support: np.ndarray
    x0: np.ndarray
    lam: Optional[np.ndarray]

    def field(self) -> VectorField:
        return VectorField(self.kernel, self.protocol, self.support, self.lam)


def make_setup(kernel, protocol, n, init: InitSpec, placement=GridPlacement.ENDPOINTS,
               payoff_scaling: str = "none") -> Setup:
    """Support, initial state and reference measure (uniform ``1/n``) at resolution ``n``."""
    start = init.build(n, placement)
    support = start.points
    if payoff_scaling == "resolution":
        kernel = scaled_kernel(kernel, support, float(support.size))
    elif payoff_scaling != "none":
        raise ValueError(f"unknown payoff scaling {payoff_scaling!r}")
    lam = None
    if protocol.reference_mode is ReferenceMode.FIXED:
        lam = np.full(support.size, 1.0 / support.size)
    return Setup(kernel, protocol, support, np.array(start.weights), lam)


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    """Order-preserving map; ``jobs > 1`` fans out to worker processes."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


# -- equilibria --------------------------------------------------------------


def nash_gap(x, rho) -> float:
    """``max_i rho_i - x @ rho``; nonnegative by construction."""
    shifted = np.asarray(rho, dtype=float) - np.max(rho)
    return float(-(np.asarray(x) @ shifted)) + 0.0


@dataclass
class EquilibriumReport:
    final_state: np.ndarray
    residual: float
    nash_gap: float
    converged: bool
    time: float
    certified: Optional[bool] = None
    poke_distance: Optional[float] = None

    def to_dict(self) -> dict:
        out = {
            "final_state": self.final_state.tolist(),
            "residual": self.residual,
            "nash_gap": self.nash_gap,
            "converged": self.converged,
            "time": self.time,
        }
        if self.certified is not None:
            out["certified"] = self.certified
            out["poke_distance"] = self.poke_distance
        return out


def spectral_radius(f, x, iterations: int = 8) -> float:
    """Power-iteration estimate of the Jacobian's largest eigenvalue modulus at ``x``.

    Directions are mass-preserving; for state-coupled protocols they are
    confined to the support of ``x``, whose face the dynamics never leave.
    The fields are defined off the simplex, so probes may leave it.
    """
    x = np.asarray(x, dtype=float)
    coupled = getattr(getattr(f, "protocol", None), "reference_mode", None) is ReferenceMode.STATE_COUPLED
    active = np.flatnonzero(x > 0) if coupled else np.arange(x.size)
    if active.size < 2:
        return 0.0
    rng = np.random.default_rng(0)
    d = np.zeros(x.size)
    d[active] = rng.standard_normal(active.size)
    d[active] -= d[active].mean()
    v0 = f(x)
    eta = 1e-7
    radius = 0.0
    for _ in range(iterations):
        d /= np.abs(d).max()
        jd = np.zeros(x.size)
        jd[active] = ((f(x + eta * d) - v0) / eta)[active]
        jd[active] -= jd[active].mean()
        norm_jd = np.linalg.norm(jd)
        if norm_jd == 0.0 or not np.isfinite(norm_jd):
            break
        radius = norm_jd / np.linalg.norm(d)
        d = jd
    return radius


def _run_windows(f, x, stop: Callable[[np.ndarray], bool], t_max: float, method=EQUILIBRIUM_METHOD):
    """Integrate in windows of length 1, 2, 4, ... until ``stop(x)`` or ``t_max``.

    Each window caps the step at ``2 / spectral radius``: near a rest point
    the error estimate vanishes with the offset, and without the cap the
    controller would grow steps past the explicit stability limit.
    """
    t = 0.0
    window = 1.0
    while not stop(x) and t < t_max:
        span = min(window, t_max - t)
        radius = spectral_radius(f, x)
        if radius > 0 and isinstance(method, RK45Adaptive):
            capped = RK45Adaptive(method.rel_tol, method.abs_tol, min(method.dt_max, 2.0 / radius))
        else:
            capped = method
        cfg = IntegratorConfig(method=capped, t_end=span, emit=2)
        x = integrate_field(f, x, cfg).final_state
        t += span
        window *= 2.0
    return x, t


def equilibrium_run(kernel: PayoffKernel, protocol: RevisionProtocol, support, x0, lambda0=None,
                    residual_tol: float = RESIDUAL_TOL, t_max: float = DEFAULT_T_MAX,
                    method=EQUILIBRIUM_METHOD) -> EquilibriumReport:
    """Integrate until the l1 velocity residual drops below ``residual_tol``.

    Hitting ``t_max`` first is reported as ``converged=False``, not raised.
    """
    if not residual_tol > 0:
        raise ValueError("residual_tol must be positive")
    f = VectorField(kernel, protocol, support, lambda0)
    return _equilibrium(f, check_simplex(x0), residual_tol, t_max, method)


def _equilibrium(f: VectorField, x0, residual_tol, t_max, method) -> EquilibriumReport:
    def residual(x):
        return float(np.abs(f(x)).sum())

    polished = {}

    def stop(x):
        # step-size control leaves a residual floor near abs_tol; Newton clears it
        res = residual(x)
        if res < residual_tol:
            return True
        if res < POLISH_FROM:
            y = polish_equilibrium(f, x)
            if residual(y) < residual_tol:
                polished["x"] = y
                return True
        return False

    x, t = _run_windows(f, x0, stop, t_max, method)
    x = polished.get("x", x)
    res = residual(x)
    return EquilibriumReport(x, res, nash_gap(x, f.payoffs(x)), res < residual_tol, t)


def polish_equilibrium(f: VectorField, x, iterations: int = 6) -> np.ndarray:
    """Newton refinement of a rest point.

    Uses a forward-difference Jacobian over the non-negligible components
    with the unit-mass row appended. Components driven below zero are
    clipped (the rest point sits on a face); iterates are kept only when
    they lower the residual.
    """
    x = np.array(x, dtype=float)
    best = float(np.abs(f(x)).sum())
    for _ in range(iterations):
        if best == 0.0:
            break
        active = np.flatnonzero(x > 1e-300)
        v = f(x)
        jac = np.empty((x.size + 1, active.size))
        for col, i in enumerate(active):
            step = 1e-7 * max(x[i], 1e-3)
            xp = x.copy()
            xp[i] += step
            jac[:-1, col] = (f(xp) - v) / step
        jac[-1] = 1.0
        target = np.concatenate([-v, [1.0 - x.sum()]])
        delta, *_ = np.linalg.lstsq(jac, target, rcond=None)
        cand = x.copy()
        cand[active] += delta
        cand = np.maximum(cand, 0.0)
        if cand.sum() <= 0.0:
            break
        cand /= cand.sum()
        res = float(np.abs(f(cand)).sum())
        if not res < best:
            break
        x, best = cand, res
    return x


def certify_equilibrium(f: VectorField, x0, residual_tol=RESIDUAL_TOL, t_max=DEFAULT_T_MAX,
                        seed: int = 0, method=EQUILIBRIUM_METHOD) -> EquilibriumReport:
    """Converge, polish, then poke by ``1e-6`` (l1) and require a return within ``1e-7``.

    The poke direction is a random point of the simplex; for state-coupled
    protocols it is drawn on the face spanned by the support of ``x0``,
    which such dynamics never leave.
    """
    report = _equilibrium(f, np.asarray(x0, dtype=float), residual_tol, t_max, method)
    if not report.converged:
        report.certified = False
        report.poke_distance = math.nan
        return report
    xbar = polish_equilibrium(f, report.final_state)
    report.final_state = xbar
    report.residual = float(np.abs(f(xbar)).sum())
    report.nash_gap = nash_gap(xbar, f.payoffs(xbar))

    rng = np.random.default_rng([seed, xbar.size])
    if f.protocol.reference_mode is ReferenceMode.STATE_COUPLED:
        face = np.flatnonzero(np.asarray(x0) > 0)
    else:
        face = np.arange(xbar.size)
    u = np.zeros(xbar.size)
    u[face] = rng.dirichlet(np.ones(face.size))
    direction = u - xbar
    norm = np.abs(direction).sum()
    if norm == 0.0:
        report.certified = True
        report.poke_distance = 0.0
        return report
    poked = xbar + (POKE_SIZE / norm) * direction
    back, _ = _run_windows(f, poked, lambda x: l1_state_distance(x, xbar) <= POKE_RETURN, t_max, method)
    report.poke_distance = l1_state_distance(back, xbar)
    report.certified = report.poke_distance <= POKE_RETURN
    return report


# -- velocity bounds ---------------------------------------------------------


@dataclass
class VelocityReport:
    times: np.ndarray
    speeds: np.ndarray
    rate_cap_bound: np.ndarray
    quadratic_bound: Optional[np.ndarray] = None

    def holds(self, tol: float = 1e-12) -> bool:
        ok = bool(np.all(self.speeds <= self.rate_cap_bound + tol))
        if self.quadratic_bound is not None:
            ok = ok and bool(np.all(self.speeds <= self.quadratic_bound + tol))
        return ok

    def to_dict(self) -> dict:
        out = {"times": self.times.tolist(), "speeds": self.speeds.tolist(),
               "rate_cap_bound": self.rate_cap_bound.tolist()}
        if self.quadratic_bound is not None:
            out["quadratic_bound"] = self.quadratic_bound.tolist()
        return out


def is_quadratic_anticoordination(kernel, protocol) -> bool:
    return isinstance(kernel, AnticoordinationDiscrete) and protocol.kind is ProtocolKind.REPLICATOR


def velocity_bound_check(trajectory: Trajectory, kernel: PayoffKernel, protocol: RevisionProtocol,
                         lambda0=None) -> VelocityReport:
    """``||v(t)||_1`` at every emitted state next to its analytic bounds.

    Always reports ``2 * max switch rate``; adds ``2 ||x||_2^2`` for the
    discrete anticoordination game under the replicator.
    """
    if protocol.reference_mode is ReferenceMode.FIXED and lambda0 is None:
        lambda0 = np.full(trajectory.n, 1.0 / trajectory.n)
    f = VectorField(kernel, protocol, trajectory.support, lambda0)
    speeds, caps = [], []
    for x in trajectory.states:
        rho = f.payoffs(x)
        speeds.append(float(np.abs(f(x)).sum()))
        caps.append(2.0 * max_rate(protocol, x, rho))
    quad = None
    if is_quadratic_anticoordination(kernel, protocol):
        quad = 2.0 * np.einsum("ij,ij->i", trajectory.states, trajectory.states)
    return VelocityReport(trajectory.times.copy(), np.array(speeds), np.array(caps), quad)


# -- convergence study -------------------------------------------------------


@dataclass
class ConvergenceReport:
    resolutions: list
    reference_n: Optional[int]
    sup_bl: dict
    horizon: float
    decay_ratios: list
    excluded: dict = field(default_factory=dict)
    trajectories: dict = field(default_factory=dict, repr=False)
    reference: Optional[Trajectory] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "resolutions": list(self.resolutions),
            "reference_n": self.reference_n,
            "reference": "initial" if self.reference_n is None else "run",
            "horizon": self.horizon,
            "sup_bl": {str(n): v for n, v in self.sup_bl.items()},
            "decay_ratios": list(self.decay_ratios),
            "excluded": {str(n): msg for n, msg in self.excluded.items()},
        }


def _integrate_task(args):
    setup, cfg = args
    try:
        return integrate_field(setup.field(), setup.x0, cfg, support=setup.support)
    except NumericalAbort as exc:
        return exc


def _sup_bl_task(args):
    traj, ref = args
    best = 0.0
    for k in range(traj.times.size):
        if ref is None:
            ref_measure = DiscreteMeasure(traj.support, traj.states[0])
        else:
            ref_measure = DiscreteMeasure(ref.support, ref.states[k])
        d = bl_distance(DiscreteMeasure(traj.support, traj.states[k]), ref_measure).distance
        best = max(best, d)
    return best


def convergence_study(kernel: PayoffKernel, protocol: RevisionProtocol, resolutions, reference_n,
                      init: InitSpec, T: float, integrator: IntegratorConfig,
                      placement=GridPlacement.ENDPOINTS, jobs: int = 1) -> ConvergenceReport:
    """Sup-in-time bounded-Lipschitz gap of each resolution to a reference.

    ``reference_n=None`` compares each run with its own initial measure,
    which is exact when the continuum solution is known to stay frozen.
    Otherwise a run at ``reference_n`` is the reference.
    """
    resolutions = [int(n) for n in resolutions]
    if any(b <= a for a, b in zip(resolutions, resolutions[1:])):
        raise ValueError("resolutions must be strictly increasing")
    if reference_n is not None and resolutions and resolutions[-1] > reference_n:
        raise ValueError("resolutions must not exceed reference_n")
    cfg = integrator.replace(t_end=T)
    if cfg.emit is None:
        raise ValueError("convergence studies need a shared emission grid")

    setups = [make_setup(kernel, protocol, n, init, placement) for n in resolutions]
    ref_traj = None
    if reference_n is not None:
        ref_traj = _integrate_task((make_setup(kernel, protocol, reference_n, init, placement), cfg))
        if isinstance(ref_traj, Exception):
            raise NumericalAbort(f"reference run n={reference_n} failed: {ref_traj}")

    runs = _pmap(_integrate_task, [(s, cfg) for s in setups], jobs)
    excluded, kept = {}, []
    for n, run in zip(resolutions, runs):
        if isinstance(run, Exception):
            log.warning("resolution n=%d excluded: %s", n, run)
            excluded[n] = str(run)
        else:
            kept.append((n, run))

    sups = _pmap(_sup_bl_task, [(run, ref_traj) for _, run in kept], jobs)
    sup_bl = {n: s for (n, _), s in zip(kept, sups)}
    ns = [n for n, _ in kept]
    ratios = [sup_bl[b] / sup_bl[a] if sup_bl[a] > 0 else math.nan for a, b in zip(ns, ns[1:])]
    return ConvergenceReport(ns, reference_n, sup_bl, float(T), ratios, excluded,
                             dict(kept), ref_traj)


# -- choice mobility / paralysis ---------------------------------------------


class Verdict(str, enum.Enum):
    MOBILE = "MobileOnTestedFamily"
    PARALYSIS = "ParalysisDetected"


@dataclass
class MobilityReport:
    resolutions: list
    limits: dict
    certification: dict
    times: np.ndarray
    envelope: np.ndarray
    verdict: Verdict
    epsilon_floor: float
    threshold: float
    initial_speeds: dict
    speed_bounds: dict
    rate_caps: dict
    coincidence: dict
    excluded: dict = field(default_factory=dict)
    trajectories: dict = field(default_factory=dict, repr=False)
    setups: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "resolutions": list(self.resolutions),
            "verdict": self.verdict.value,
            "epsilon_floor": self.epsilon_floor,
            "threshold": self.threshold,
            "envelope": {"t": self.times.tolist(), "value": self.envelope.tolist()},
            "limits": {str(n): v.tolist() for n, v in self.limits.items()},
            "certification": {str(n): r.to_dict() | {"final_state": None}
                              for n, r in self.certification.items()},
            "initial_speeds": {str(n): v for n, v in self.initial_speeds.items()},
            "speed_bounds": {str(n): v for n, v in self.speed_bounds.items()},
            "rate_caps": {str(n): v for n, v in self.rate_caps.items()},
            "coincidence": self.coincidence,
            "excluded": {str(n): msg for n, msg in self.excluded.items()},
        }


def _paralysis_task(args):
    setup, cfg, residual_tol, t_max, seed = args
    f = setup.field()
    try:
        traj = integrate_field(f, setup.x0, cfg, support=setup.support)
    except NumericalAbort as exc:
        return exc
    cert = certify_equilibrium(f, setup.x0, residual_tol, t_max, seed)
    return traj, cert


def paralysis_study(kernel: PayoffKernel, protocol: RevisionProtocol, resolutions, init: InitSpec,
                    T: float, integrator: IntegratorConfig, placement=GridPlacement.ENDPOINTS,
                    threshold: float = 0.1, residual_tol: float = RESIDUAL_TOL,
                    t_max: float = DEFAULT_T_MAX, payoff_scaling: str = "none", seed: int = 0,
                    jobs: int = 1) -> MobilityReport:
    """Envelope ``max_n ||x_n(t) - xbar_n||_1`` over a tested family.

    Each ``xbar_n`` is the certified limit of its own run; uncertified
    resolutions are excluded with a warning. The verdict is
    ``ParalysisDetected`` iff the envelope never drops below ``threshold``
    on the emission grid, and only speaks for the tested family.
    """
    resolutions = [int(n) for n in resolutions]
    cfg = integrator.replace(t_end=T)
    if cfg.emit is None:
        raise ValueError("paralysis studies need a shared emission grid")
    setups = [make_setup(kernel, protocol, n, init, placement, payoff_scaling) for n in resolutions]
    outcomes = _pmap(_paralysis_task, [(s, cfg, residual_tol, t_max, seed) for s in setups], jobs)

    limits, certs, trajs, kept_setups, excluded = {}, {}, {}, {}, {}
    speeds, bounds, caps = {}, {}, {}
    for n, setup, out in zip(resolutions, setups, outcomes):
        if isinstance(out, Exception):
            log.warning("resolution n=%d excluded: %s", n, out)
            excluded[n] = str(out)
            continue
        traj, cert = out
        certs[n] = cert
        if not cert.certified:
            log.warning("resolution n=%d excluded: limit not certified", n)
            excluded[n] = "limit not certified"
            continue
        limits[n] = cert.final_state
        trajs[n] = traj
        kept_setups[n] = setup
        f = setup.field()
        speeds[n] = float(np.abs(f(setup.x0)).sum())
        vel = velocity_bound_check(traj, setup.kernel, protocol, setup.lam)
        caps[n] = float(vel.rate_cap_bound.max())
        if vel.quadratic_bound is not None:
            bounds[n] = float(vel.quadratic_bound[0])

    times = cfg.emission_times()
    if limits:
        dists = np.array([[l1_state_distance(x, limits[n]) for x in trajs[n].states] for n in limits])
        envelope = dists.max(axis=0)
        floor = float(envelope.min())
    else:
        envelope = np.full(times.size, math.nan)
        floor = math.nan
    verdict = Verdict.PARALYSIS if floor >= threshold else Verdict.MOBILE
    coincidence = _coincidence(trajs, limits)
    return MobilityReport(list(limits), limits, certs, times, envelope, verdict, floor, threshold,
                          speeds, bounds, caps, coincidence, excluded, trajs, kept_setups)


def _coincidence(trajs: dict, limits: dict, plateau_rel: float = 1e-2) -> dict:
    """Distance from the largest run to its own limit measure over the horizon's second half."""
    if not limits:
        return {}
    n = max(limits)
    traj = trajs[n]
    limit_measure = DiscreteMeasure(traj.support, limits[n])
    tail = np.arange(traj.times.size // 2, traj.times.size)
    d = np.array([bl_distance(limit_measure, DiscreteMeasure(traj.support, traj.states[k])).distance
                  for k in tail])
    nonincreasing = bool(np.all(np.diff(d) <= 1e-12))
    plateau = bool(d[-1] > 1e-6 and d[0] > 0 and (d[0] - d[-1]) <= plateau_rel * d[0])
    return {
        "n": n,
        "times": traj.times[tail].tolist(),
        "distances": d.tolist(),
        "tail_nonincreasing": nonincreasing,
        "final": float(d[-1]),
        "plateau": plateau,
    }
