"""Acceptance criteria 1-9, one test each.

Every test records a ``PASS``/``FAIL`` line (shown in the pytest terminal
summary, or printed directly with ``python tests/test_acceptance.py``).
Runtime limits are part of the criteria and are checked with the values.
"""

import functools
import json
import math
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import sympy as sp

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import ACCEPTANCE_LINES  # noqa: E402
from oracles import bl_grid_search  # noqa: E402

from evodyn.analysis import (  # noqa: E402
    InitSpec,
    Verdict,
    convergence_study,
    equilibrium_run,
    make_setup,
    paralysis_study,
)
from evodyn.config import build, resolve  # noqa: E402
from evodyn.dynamics import IntegratorConfig, VectorField, integrate, mean_dynamics_rhs  # noqa: E402
from evodyn.games import (  # noqa: E402
    AnticoordinationBump,
    AnticoordinationDiscrete,
    ConstantZero,
    assumption1_probe,
)
from evodyn.measures import DiscreteMeasure, grid_points  # noqa: E402
from evodyn.metric import bl_distance  # noqa: E402
from evodyn.protocols import BNN, REPLICATOR, SMITH  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
ANTI = AnticoordinationDiscrete()


def load(name):
    path = ROOT / "acceptance" / f"{name}.json"
    raw = json.loads(path.read_text())
    cfg = resolve(raw, raw["study"])
    return cfg, build(cfg)


def record(k, ok, detail, elapsed=None, limit=None):
    timing = ""
    if elapsed is not None:
        timing = f" [{elapsed:.1f}s" + (f" / limit {limit:.0f}s]" if limit else "]")
        if limit is not None and elapsed >= limit:
            ok = False
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}{timing}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# -- 1 -----------------------------------------------------------------------


def check_1():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 21))
        theta = rng.dirichlet(np.ones(n))
        rho = rng.normal(size=n)
        general = mean_dynamics_rhs(theta, theta, REPLICATOR, rho)
        closed = theta * (rho - theta @ rho)
        worst = max(worst, float(np.max(np.abs(general - closed))))
    return worst <= 1e-12, f"max |rhs - theta_i(rho_i - theta.rho)| = {worst:.2e} over 1000 triples"


def test_criterion_1():
    (ok, detail), dt = timed(check_1)
    assert record(1, ok, detail, dt, 1.0)


# -- 2 -----------------------------------------------------------------------


def check_2():
    rng = np.random.default_rng(2)
    protocols = (REPLICATOR, BNN, SMITH)
    drift, worst_v = 0.0, math.inf
    for k in range(100):
        n = int(rng.integers(2, 51))
        protocol = protocols[k % 3]
        kernel = AnticoordinationBump(float(rng.uniform(0.05, 0.5)))
        x0 = rng.dirichlet(np.ones(n))
        if k % 2:
            # start on a face so the boundary condition is exercised
            x0[rng.random(n) < 0.3] = 0.0
            if x0.sum() == 0:
                x0[0] = 1.0
            x0 /= x0.sum()
        support = grid_points(n)
        lam = None if protocol is REPLICATOR else np.full(n, 1.0 / n)
        traj = integrate(kernel, protocol, support, x0, lam, IntegratorConfig(t_end=10.0))
        drift = max(drift, traj.max_mass_drift)
        f = VectorField(kernel, protocol, support, lam)
        for x in traj.states:
            low = x <= 1e-12
            if np.any(low):
                worst_v = min(worst_v, float(f(x)[low].min()))
    ok = drift <= 1e-8 and worst_v >= -1e-12
    shown = "none" if math.isinf(worst_v) else f"{worst_v:.2e}"
    return ok, f"max pre-renorm |sum x - 1| = {drift:.2e}; min v_i at x_i <= 1e-12: {shown}"


def test_criterion_2():
    (ok, detail), dt = timed(check_2)
    assert record(2, ok, detail, dt, 30.0)


# -- 3 -----------------------------------------------------------------------


def check_3():
    rng = np.random.default_rng(3)
    dirac = 0.0
    for _ in range(1000):
        a, b = rng.random(2)
        d = bl_distance(DiscreteMeasure.dirac(a), DiscreteMeasure.dirac(b)).distance
        dirac = max(dirac, abs(d - min(abs(a - b), 2.0)))

    def rand_measure():
        k = int(rng.integers(1, 9))
        return DiscreteMeasure(rng.random(k), rng.random(k) + 1e-3)

    axiom = 0.0
    for _ in range(500):
        p, q, r = rand_measure(), rand_measure(), rand_measure()
        dpq = bl_distance(p, q).distance
        axiom = max(axiom,
                    abs(dpq - bl_distance(q, p).distance),
                    bl_distance(p, p).distance,
                    dpq - bl_distance(p, r).distance - bl_distance(r, q).distance)

    grid = 0.0
    for _ in range(200):
        pts = rng.random(3)
        pick_mu = rng.random(3) < 0.6
        pick_mu[rng.integers(3)] = True
        pick_nu = rng.random(3) < 0.6
        pick_nu[rng.integers(3)] = True
        mu = DiscreteMeasure(pts[pick_mu], rng.random(pick_mu.sum()) + 1e-3)
        nu = DiscreteMeasure(pts[pick_nu], rng.random(pick_nu.sum()) + 1e-3)
        grid = max(grid, abs(bl_distance(mu, nu).distance - bl_grid_search(mu, nu)))

    ok = dirac <= 1e-9 and axiom <= 1e-9 and grid <= 2e-3
    return ok, (f"two-Dirac err {dirac:.1e}; worst axiom violation {axiom:.1e}; "
                f"grid-search gap {grid:.1e}")


def test_criterion_3():
    (ok, detail), dt = timed(check_3)
    assert record(3, ok, detail, dt, 60.0)


# -- 4 -----------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def study_4():
    cfg, objs = load("a4")
    return timed(lambda: convergence_study(objs["kernel"], objs["protocol"], cfg["resolutions"],
                                           cfg["reference_n"], objs["init"], cfg["T"],
                                           objs["integrator"], cfg["placement"], jobs=1))


def check_4():
    rep, dt = study_4()
    values = [rep.sup_bl[n] for n in rep.resolutions]
    ok = (rep.resolutions == [50, 100, 200, 400] and not rep.excluded
          and all(b < a for a, b in zip(values, values[1:]))
          and all(0.33 <= r <= 0.75 for r in rep.decay_ratios))
    detail = ("sup_t d_BL = " + ", ".join(f"{v:.3e}" for v in values)
              + "; ratios " + ", ".join(f"{r:.3f}" for r in rep.decay_ratios))
    return ok, detail, dt


def test_criterion_4():
    ok, detail, dt = check_4()
    assert record(4, ok, detail, dt, 300.0)


# -- 5 -----------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def starts_5():
    return [np.random.default_rng([5, seed]).dirichlet(np.ones(10)) for seed in range(10)]


def check_5():
    zero = True
    for n in (2, 10, 100):
        u = np.full(n, 1.0 / n)
        zero &= bool(np.all(VectorField(ANTI, REPLICATOR, grid_points(n))(u) == 0.0))
    dist, gap, converged = 0.0, 0.0, True
    for x0 in starts_5():
        rep = equilibrium_run(ANTI, REPLICATOR, grid_points(10), x0)
        converged &= rep.converged
        dist = max(dist, float(np.abs(rep.final_state - 0.1).sum()))
        gap = max(gap, rep.nash_gap)
    ok = zero and converged and dist <= 1e-6 and gap < 1e-8
    return ok, (f"rhs at uniform exactly 0: {zero}; 10 starts converged: {converged}, "
                f"max l1 to uniform {dist:.1e}, max nash_gap {gap:.1e}")


def test_criterion_5():
    (ok, detail), dt = timed(check_5)
    assert record(5, ok, detail, dt, 30.0)


# -- 6 -----------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def study_6():
    cfg, objs = load("a6")
    return cfg, *timed(lambda: paralysis_study(
        objs["kernel"], objs["protocol"], cfg["resolutions"], objs["init"], cfg["T"],
        objs["integrator"], cfg["placement"], cfg["threshold"], cfg["residual_tol"], cfg["t_max"],
        cfg["payoff_scaling"], cfg["seed"], jobs=1))


def check_6():
    cfg, rep, dt = study_6()
    eps = cfg["init"]["epsilon"]
    speed_ok = True
    for n in cfg["resolutions"]:
        x = make_setup(ANTI, REPLICATOR, n, InitSpec("split-offset", epsilon=eps)).x0
        speed = float(np.abs(x * (-x + x @ x)).sum())
        m = math.ceil(eps * n / 2)
        speed_ok &= speed <= 2.0 / n + eps ** 2 / m + 1e-12
    certified = (not rep.excluded and sorted(rep.certification) == sorted(cfg["resolutions"])
                 and all(c.certified for c in rep.certification.values()))
    env0 = float(rep.envelope[0])
    ok = (abs(env0 - 0.5) <= 1e-12 and speed_ok and rep.verdict is Verdict.PARALYSIS
          and rep.epsilon_floor >= 0.4 and certified)
    return ok, (f"envelope(0) = {env0!r}; speed bound holds: {speed_ok}; "
                f"verdict {rep.verdict.value}, epsilon_floor {rep.epsilon_floor:.4f}; "
                f"all runs certified: {certified}"), dt


def test_criterion_6():
    ok, detail, dt = check_6()
    assert record(6, ok, detail, dt, 300.0)


# -- 7 -----------------------------------------------------------------------


def check_7():
    trajs = list(study_4()[0].trajectories.values()) + list(study_6()[1].trajectories.values())
    cfg = IntegratorConfig(t_end=10.0)
    trajs += [integrate(ANTI, REPLICATOR, grid_points(10), x0, None, cfg) for x0 in starts_5()]
    worst, points = -math.inf, 0
    for traj in trajs:
        f = VectorField(ANTI, REPLICATOR, traj.support)
        for x in traj.states:
            worst = max(worst, float(np.abs(f(x)).sum()) - 2.0 * float(x @ x))
            points += 1
    return worst <= 1e-12, (f"max(||v||_1 - 2||x||_2^2) = {worst:.2e} over {points} emission points "
                            f"in {len(trajs)} trajectories")


def test_criterion_7():
    ok, detail = check_7()
    assert record(7, ok, detail)


# -- 8 -----------------------------------------------------------------------


def symbolic_max_slope(width):
    r = sp.symbols("r", positive=True)
    h = (1 - (r / width) ** 2) ** 2
    dh = sp.diff(h, r)
    crit = [c for c in sp.solve(sp.diff(dh, r), r) if 0 < c < width]
    return float(max(abs(dh.subs(r, c)) for c in crit))


def check_8():
    discrete = assumption1_probe(AnticoordinationDiscrete())
    bump = assumption1_probe(AnticoordinationBump(0.1))
    zero = assumption1_probe(ConstantZero())
    oracle = symbolic_max_slope(sp.Rational(1, 10))
    ok = (discrete.diverging and not bump.diverging and not zero.diverging
          and bump.lip_s_estimate <= 1.05 * oracle)
    return ok, (f"diverging: discrete={discrete.diverging}, bump={bump.diverging}, "
                f"zero={zero.diverging}; bump lip_s {bump.lip_s_estimate:.4f} vs oracle {oracle:.4f}")


def test_criterion_8():
    (ok, detail), dt = timed(check_8)
    assert record(8, ok, detail, dt, 30.0)


# -- 9 -----------------------------------------------------------------------


def check_9():
    config = ROOT / "acceptance" / "a9.json"
    with tempfile.TemporaryDirectory() as tmp:
        reports = []
        for jobs in (1, 8):
            out = Path(tmp) / f"jobs{jobs}"
            subprocess.run([sys.executable, "-m", "evodyn.cli", "converge", "--config", str(config),
                            "--jobs", str(jobs), "--output-dir", str(out)], check=True)
            reports.append((out / "report.json").read_bytes())
    same = reports[0] == reports[1]
    return same, f"report.json byte-identical for --jobs 1 and --jobs 8: {same} ({len(reports[0])} bytes)"


def test_criterion_9():
    (ok, detail), dt = timed(check_9)
    assert record(9, ok, detail, dt)


if __name__ == "__main__":
    failures = 0
    for k in range(1, 10):
        try:
            globals()[f"test_criterion_{k}"]()
        except AssertionError:
            failures += 1
    sys.exit(1 if failures else 0)
