"""``evodyn`` command line: one subcommand per study, JSON config in, files out.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .analysis import (
    certify_equilibrium,
    convergence_study,
    make_setup,
    paralysis_study,
    velocity_bound_check,
)
from .config import STUDIES, ConfigError, build, fingerprint, resolve
from .dynamics import NumericalAbort, integrate_field
from .games import assumption1_probe
from .measures import DiscreteMeasure
from .metric import bl_distance

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(repr(float(v)) if not isinstance(v, int) else str(v) for v in row)
              for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _run_simulate(cfg, objs, out: Path, jobs: int):
    setup = make_setup(objs["kernel"], objs["protocol"], cfg["n"], objs["init"], cfg["placement"])
    traj = integrate_field(setup.field(), setup.x0, objs["integrator"], support=setup.support,
                           fingerprint=fingerprint(cfg))
    traj.to_csv(out / f"trajectory_n{cfg['n']}.csv")
    vel = velocity_bound_check(traj, setup.kernel, setup.protocol, setup.lam)
    return {
        "n": cfg["n"],
        "final_state": traj.final_state.tolist(),
        "max_mass_drift": traj.max_mass_drift,
        "accepted_steps": traj.steps,
        "max_speed": float(vel.speeds.max()),
        "velocity_bound_holds": vel.holds(),
    }


def _run_converge(cfg, objs, out: Path, jobs: int):
    rep = convergence_study(objs["kernel"], objs["protocol"], cfg["resolutions"], cfg["reference_n"],
                            objs["init"], cfg["T"], objs["integrator"], cfg["placement"], jobs)
    for n, traj in rep.trajectories.items():
        traj.to_csv(out / f"trajectory_n{n}.csv")
    if rep.reference is not None:
        rep.reference.to_csv(out / f"reference_n{cfg['reference_n']}.csv")
    _write_csv(out / "sup_bl.csv", ["n", "sup_bl"], [(n, v) for n, v in rep.sup_bl.items()])
    return rep.to_dict()


def _run_paralysis(cfg, objs, out: Path, jobs: int):
    rep = paralysis_study(objs["kernel"], objs["protocol"], cfg["resolutions"], objs["init"],
                          cfg["T"], objs["integrator"], cfg["placement"], cfg["threshold"],
                          cfg["residual_tol"], cfg["t_max"], cfg["payoff_scaling"], cfg["seed"], jobs)
    for n, traj in rep.trajectories.items():
        traj.to_csv(out / f"trajectory_n{n}.csv")
    _write_csv(out / "envelope.csv", ["t", "envelope"], zip(rep.times, rep.envelope))
    return rep.to_dict()


def _run_equilibrium(cfg, objs, out: Path, jobs: int):
    setup = make_setup(objs["kernel"], objs["protocol"], cfg["n"], objs["init"], cfg["placement"])
    rep = certify_equilibrium(setup.field(), setup.x0, cfg["residual_tol"], cfg["t_max"], cfg["seed"])
    return rep.to_dict()


def _run_probe(cfg, objs, out: Path, jobs: int):
    return assumption1_probe(objs["kernel"], cfg["sample_count"], cfg["seed"]).to_dict()


def _run_bl(cfg, objs, out: Path, jobs: int):
    res = bl_distance(DiscreteMeasure.from_dict(cfg["mu"]), DiscreteMeasure.from_dict(cfg["nu"]))
    return {"distance": res.distance, "support": res.support.tolist(),
            "witness": res.witness.tolist(), "solver_status": res.solver_status.value}


RUNNERS = {
    "simulate": _run_simulate,
    "converge": _run_converge,
    "paralysis": _run_paralysis,
    "equilibrium": _run_equilibrium,
    "probe": _run_probe,
    "bl-dist": _run_bl,
}


def _available_cpus() -> int:
    if hasattr(os, "sched_getaffinity"):
        return len(os.sched_getaffinity(0)) or 1
    return os.cpu_count() or 1


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evodyn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"evodyn {__version__}")
    sub = parser.add_subparsers(dest="study", required=True)
    for study in STUDIES:
        p = sub.add_parser(study)
        p.add_argument("--config", type=Path, required=study != "bl-dist")
        p.add_argument("--output-dir", type=Path, default=None)
        p.add_argument("--jobs", type=int, default=_available_cpus())
        p.add_argument("--dry-run", action="store_true")
        p.add_argument("-v", "--verbose", action="store_true")
        if study == "bl-dist":
            p.add_argument("--mu", type=Path)
            p.add_argument("--nu", type=Path)
    return parser


def _load_json(path: Path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="evodyn: %(levelname)s: %(message)s")
    seed_override = os.environ.get("EVODYN_SEED")
    try:
        raw = _load_json(args.config) if args.config else {}
        if args.study == "bl-dist":
            if args.mu:
                raw["mu"] = _load_json(args.mu)
            if args.nu:
                raw["nu"] = _load_json(args.nu)
            if "mu" not in raw or "nu" not in raw:
                raise ConfigError("bl-dist needs two measures (--mu/--nu or in the config)")
        if seed_override is not None:
            try:
                seed_override = int(seed_override)
            except ValueError:
                raise ConfigError(f"EVODYN_SEED is not an integer: {seed_override!r}") from None
        cfg = resolve(raw, args.study, seed_override)
        objs = build(cfg)
    except ConfigError as exc:
        print(f"evodyn: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("evodyn: config error: --jobs must be positive", file=sys.stderr)
        return EXIT_CONFIG

    if args.dry_run:
        print(json.dumps(cfg, indent=2, sort_keys=True))
        return EXIT_OK

    out = Path(args.output_dir or cfg["output_dir"])
    if args.study == "bl-dist" and args.config is None and args.output_dir is None:
        out = None
    try:
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        results = RUNNERS[args.study](cfg, objs, out, args.jobs)
    except NumericalAbort as exc:
        print(f"evodyn: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    if args.study == "bl-dist":
        print(repr(results["distance"]))
    if out is None:
        return EXIT_OK
    fp = fingerprint(cfg)
    _dump(out / "report.json", {"study": args.study, "config": cfg, "results": results,
                                "fingerprint": fp})
    manifest = {"config": cfg, "fingerprint": fp, "tool": "evodyn", "tool_version": __version__,
                "seed_override": seed_override,
                "files": sorted(p.name for p in out.iterdir() if p.name != "manifest.json")}
    _dump(out / "manifest.json", manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

