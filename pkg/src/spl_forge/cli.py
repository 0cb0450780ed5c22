"""Command-line entry point.

Subcommands: build, map, simulate, simulate-physical, analyze, experiment,
split-test, report.  Every stochastic command requires --seed; identical
seed and inputs give byte-identical outputs.  Exit codes: 0 success,
1 domain error (bad network, unsatisfiable mapping, diverging run),
2 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import analysis, figures, kinetics, netfile, physics, recipe, reports
from .core import NetworkValidationError
from .mapping import MappingConstraints, UnsatisfiableMappingError, map_physical_to_chemical
from .rng import substream, substream_seed
from .track import Ball, place_balls
from .trajio import Trajectory, atomic_write_text, read_trajectory_csv, write_trajectory_csv

__all__ = ["main", "entry", "run_cli"]


class UsageError(Exception):
    pass


DOMAIN_ERRORS = (
    ValueError,
    KeyError,
    RuntimeError,
    OSError,
    netfile.NetworkParseError,
    NetworkValidationError,
    UnsatisfiableMappingError,
    recipe.RecipeError,
    physics.SimulationDiverged,
    kinetics.RunawayNetworkError,
    analysis.ConfigurationError,
)

CONFIG_KEYS = {
    "temperature": float,
    "catalytic_reduction": float,
    "pump_tick": float,
    "epsilon": float,
    "min_recurrences": int,
    "drift_bound": float,
    "min_separation": int,
    "perturbation": float,
    "n_perturbations": int,
    "bound_factor": float,
}


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    out = {}
    for key, value in raw.items():
        if key not in CONFIG_KEYS:
            raise UsageError(f"config {path}: unknown key {key!r}")
        out[key] = CONFIG_KEYS[key](value)
    return out


def _parse_counts(spec: str | None) -> dict[str, int]:
    out: dict[str, int] = {}
    if not spec:
        return out
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        sid, eq, val = part.partition("=")
        if not eq:
            raise UsageError(f"bad count entry {part!r}; expected <id>=<int>")
        try:
            out[sid.strip()] = int(val)
        except ValueError:
            raise UsageError(f"bad count value in {part!r}") from None
    return out


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError(
            "--seed is required for stochastic commands (determinism is never defaulted)"
        )
    return args.seed


def _out_path(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _write_report(args, stem: str, doc: dict) -> None:
    atomic_write_text(_out_path(args, f"{stem}.json"), reports.emit_report(doc, "json"))
    atomic_write_text(_out_path(args, f"{stem}.txt"), reports.emit_report(doc, "text"))
    print(f"wrote {stem}.json / {stem}.txt under {args.out}")


def _rate_model(cfg: dict) -> kinetics.RateModel:
    return kinetics.RateModel(
        temperature=cfg.get("temperature", 1.0),
        catalytic_reduction=cfg.get("catalytic_reduction", 0.0),
    )


def _classify_config(cfg: dict) -> analysis.ClassifyConfig:
    kwargs = {}
    for key in ("epsilon", "min_recurrences", "drift_bound", "min_separation",
                "perturbation", "n_perturbations", "bound_factor"):
        if key in cfg:
            kwargs[key] = cfg[key]
    return analysis.ClassifyConfig(**kwargs)


# ---------------------------------------------------------------------------
# subcommand bodies


def _cmd_build(args) -> int:
    result = recipe.run_recipe_file(args.recipe, friction=args.friction, gravity=args.gravity)
    track = result.system.track
    doc = {
        "kind": "track",
        "nodes": {n: h for n, h in track.node_heights.items()},
        "segments": [
            {
                "id": seg.id, "src": seg.src, "dst": seg.dst,
                "length": seg.length, "friction": seg.friction,
                "profile": [list(p) for p in seg.profile],
            }
            for seg in track.segments.values()
        ],
        "cycle_count": track.cycle_count(),
        "stable_points": [
            {"kind": p.kind, "ref": p.ref, "s": p.s, "height": p.height}
            for p in track.stable_points()
        ],
        "transitions": [
            {"src": t.src, "dst": t.dst, "peak_height": t.peak_height}
            for t in track.transitions()
        ],
    }
    atomic_write_text(_out_path(args, "track.json"), reports.emit_report(doc, "json"))
    print(f"wrote track.json under {args.out}")
    if result.mapping is not None:
        atomic_write_text(
            _out_path(args, "mapped.net"),
            netfile.serialize_network(result.mapping.network),
        )
        print(f"wrote mapped.net under {args.out}")
    return 0


def _cmd_map(args) -> int:
    result = recipe.run_recipe_file(args.recipe, friction=args.friction, gravity=args.gravity)
    catalog = netfile.parse_catalog(args.catalog)
    constraints = MappingConstraints(
        energy_tolerance=args.etol, activation_tolerance=args.atol
    )
    mapped = map_physical_to_chemical(result.system, catalog, constraints)
    net = mapped.network
    if args.burst_rate or args.burst_energy:
        from .core import EnergyEnvironment, ReactionNetwork

        net = ReactionNetwork(
            net.catalog, net.reactions,
            EnergyEnvironment(
                burst_rate=args.burst_rate, burst_energy=args.burst_energy,
                abundant_inputs=net.environment.abundant_inputs,
            ),
        )
    atomic_write_text(_out_path(args, "mapped.net"), netfile.serialize_network(net))
    uphill = ",".join(mapped.uphill_reaction_ids) or "none"
    print(f"wrote mapped.net under {args.out} (energy-consuming closing steps: {uphill})")
    return 0


def _events_text(events: list[tuple]) -> str:
    lines = []
    for ev in events:
        t, kind, *rest = ev
        detail = " ".join(repr(x) for x in rest)
        lines.append(f"t={t!r} kind={kind} {detail}".rstrip())
    return "\n".join(lines) + "\n"


def _cmd_simulate(args) -> int:
    seed = _require_seed(args)
    cfg = _load_config(args.config)
    net, pumps = netfile.parse_network(args.network)
    counts = _parse_counts(args.init)
    jump = {}
    for part in (args.jump_start or "").split(","):
        if part.strip():
            pid, eq, val = part.partition("=")
            if not eq:
                raise UsageError(f"bad jump-start entry {part!r}")
            jump[pid.strip()] = float(val)
    traj = kinetics.simulate_chemical(
        net, counts, t_max=args.t_max, seed=seed,
        sample_interval=args.sample_interval,
        pumps=pumps, rate_model=_rate_model(cfg),
        record_events=args.event_log,
        pump_tick=cfg.get("pump_tick", kinetics.DEFAULT_PUMP_TICK),
        jump_starts=jump,
    )
    write_trajectory_csv(traj, _out_path(args, "trajectory.csv"))
    print(f"wrote trajectory.csv under {args.out} "
          f"({len(traj.rows)} rows, ledger residual {traj.meta['ledger_residual']:.3e})")
    if args.event_log:
        atomic_write_text(_out_path(args, "events.log"), _events_text(traj.meta["events"]))
        print(f"wrote events.log under {args.out}")
    return 0


def _cmd_simulate_physical(args) -> int:
    seed = _require_seed(args)
    result = recipe.run_recipe_file(args.recipe, friction=args.friction, gravity=args.gravity)
    sys_ = place_balls(result.system, args.balls, speed=args.ball_speed)
    if args.burst_rate and args.burst_energy:
        from .core import EnergyEnvironment

        sys_.environment = EnergyEnvironment(
            burst_rate=args.burst_rate, burst_energy=args.burst_energy
        )
    traj = physics.simulate_physical(
        sys_, t_max=args.t_max, dt=args.dt, seed=seed,
        sample_interval=args.sample_interval,
    )
    write_trajectory_csv(traj, _out_path(args, "trajectory.csv"))
    persistence = physics.persistence_time(traj)
    print(f"wrote trajectory.csv under {args.out} "
          f"({len(traj.rows)} rows, persistence {persistence:.6g})")
    if args.event_log:
        imp = traj.meta["impulses"]
        lines = ["time,ball,energy"] + [
            f"{repr(float(t))},{int(b)},{repr(float(e))}" for t, b, e in imp
        ]
        atomic_write_text(_out_path(args, "impulses.csv"), "\n".join(lines) + "\n")
        print(f"wrote impulses.csv under {args.out}")
    return 0


def _cmd_analyze(args) -> int:
    cfg = _load_config(args.config)
    net, pumps = netfile.parse_network(args.network)
    doc = reports.network_report(net, pumps)
    _write_report(args, "network_report", doc)

    if args.trajectory:
        seed = _require_seed(args)
        traj = read_trajectory_csv(args.trajectory)
        ccfg = _classify_config(cfg)
        resim = _make_resimulator(net, pumps, traj, seed, cfg)
        report = analysis.classify_spl(
            traj, net=net, resimulate=resim, config=ccfg
        )
        _write_report(args, "spl_report", reports.spl_report_doc(report))
    return 0


def _make_resimulator(net, pumps, traj: Trajectory, seed: int, cfg: dict):
    base_counts = {
        sid: int(round(traj.column(sid)[0])) for sid in net.species_ids
        if sid in traj.columns
    }
    t_max = float(traj.times[-1])
    interval = traj.sample_interval() or None
    perturbation = cfg.get("perturbation", 0.05)

    def resimulate(k: int) -> Trajectory:
        rng = substream(seed, "perturb", k)
        counts = {}
        for sid, n in base_counts.items():
            if sid in net.environment.abundant:
                counts[sid] = n
                continue
            factor = 1.0 + rng.uniform(-perturbation, perturbation)
            counts[sid] = max(0, int(round(n * factor)))
        return kinetics.simulate_chemical(
            net, counts, t_max=t_max, seed=substream_seed(seed, "perturb", k),
            sample_interval=interval, pumps=pumps, rate_model=_rate_model(cfg),
        )

    return resimulate


def _cmd_experiment(args) -> int:
    seed = _require_seed(args)
    looped, pumps = netfile.parse_network(args.looped)
    if pumps:
        raise UsageError("the persistence experiment runs on pump-free networks")
    control = None
    if args.control:
        control, cpumps = netfile.parse_network(args.control)
        if cpumps:
            raise UsageError("the persistence experiment runs on pump-free networks")
    counts = _parse_counts(args.init)
    try:
        n_workers = max(1, int(os.environ.get("SPL_FORGE_THREADS", "1")))
    except ValueError:
        raise UsageError("SPL_FORGE_THREADS must be an integer") from None
    stats = analysis.persistence_experiment(
        looped, control, counts, n_seeds=args.seeds, t_max=args.t_max, seed=seed,
        n_workers=n_workers,
    )
    doc = reports.experiment_report_doc(stats)
    _write_report(args, "experiment", doc)
    lines = ["seed_index,looped_extinction,looped_censored,control_extinction,control_censored"]
    for k in range(stats.n_seeds):
        lines.append(
            f"{k},{stats.looped_extinction[k]!r},{int(stats.looped_censored[k])},"
            f"{stats.control_extinction[k]!r},{int(stats.control_censored[k])}"
        )
    atomic_write_text(_out_path(args, "experiment_pairs.csv"), "\n".join(lines) + "\n")
    print(
        f"survival looped={stats.looped_survival:.3f} control={stats.control_survival:.3f} "
        f"rank={stats.rank_statistic:.3f} p={stats.p_value:.2e}"
    )
    return 0


def _cmd_split_test(args) -> int:
    seed = _require_seed(args)
    net, pumps = netfile.parse_network(args.network)
    if pumps:
        raise UsageError("split-test runs on pump-free networks")
    counts = _parse_counts(args.init)
    if args.splits > 1:
        doc = {
            "kind": "split_trials",
            **analysis.run_split_trials(net, counts, args.splits, seed),
        }
    else:
        rep = analysis.split_test(net, counts, seed, t_regrow=args.t_regrow)
        doc = reports.split_report_doc(rep)
        for w in rep.warnings:
            print(f"warning: {w}", file=sys.stderr)
    _write_report(args, "split_report", doc)
    return 0


def _cmd_report(args) -> int:
    path = args.document
    stem = os.path.splitext(os.path.basename(path))[0]
    if path.endswith(".csv"):
        traj = read_trajectory_csv(path)
        summary = {
            "kind": "trajectory_summary",
            "source": os.path.basename(path),
            "rows": len(traj.rows),
            "duration": traj.duration,
            "columns": traj.columns,
            "final": {c: traj.rows[-1][i] for i, c in enumerate(traj.columns)},
        }
        text = reports.emit_report(summary, "text")
        atomic_write_text(_out_path(args, f"{stem}_summary.txt"), text)
        sys.stdout.write(text)
        if not args.no_figures:
            out = figures.trajectory_figure(traj, _out_path(args, f"{stem}.png"))
            print(f"wrote figure {out}")
        return 0

    with open(path) as fh:
        doc = reports.parse_report(fh.read())
    text = reports.emit_report(
        {k: v for k, v in doc.items() if k != "schema_version"}, args.format
    )
    atomic_write_text(_out_path(args, f"{stem}.txt"), text)
    sys.stdout.write(text)
    if not args.no_figures:
        for out in figures.figures_for_report(doc, args.out, stem):
            print(f"wrote figure {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spl-forge",
        description=(
            "Workbench for stable parallel looped dynamical systems: build "
            "looped tracks, map them to reaction networks, simulate both with "
            "an explicit energy ledger, and analyze the results."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_seed=False):
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="u64 seed (required for stochastic commands)")

    p = sub.add_parser("build", help="execute a construction recipe, write the track description")
    p.add_argument("recipe")
    p.add_argument("--friction", type=float, default=0.05)
    p.add_argument("--gravity", type=float, default=1.0)
    common(p)
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("map", help="map a built track onto a reaction network from a species catalog")
    p.add_argument("recipe")
    p.add_argument("--catalog", required=True)
    p.add_argument("--etol", type=float, default=0.25, help="energy match tolerance")
    p.add_argument("--atol", type=float, default=0.25, help="activation energy tolerance")
    p.add_argument("--burst-rate", type=float, default=0.0)
    p.add_argument("--burst-energy", type=float, default=0.0)
    p.add_argument("--friction", type=float, default=0.05)
    p.add_argument("--gravity", type=float, default=1.0)
    common(p)
    p.set_defaults(func=_cmd_map)

    p = sub.add_parser("simulate", help="stochastic simulation of a network file")
    p.add_argument("network")
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--sample-interval", type=float, default=None)
    p.add_argument("--init", default=None, help="initial counts, e.g. 'M1=10,M2=10'")
    p.add_argument("--jump-start", default=None, help="pump start energies, e.g. 'P1=2.0'")
    p.add_argument("--event-log", action="store_true", help="also write the event log")
    common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("simulate-physical", help="time-stepped simulation of a built track")
    p.add_argument("recipe")
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--dt", type=float, default=physics.DEFAULT_DT)
    p.add_argument("--sample-interval", type=float, default=None)
    p.add_argument("--balls", type=int, default=3)
    p.add_argument("--ball-speed", type=float, default=0.0)
    p.add_argument("--burst-rate", type=float, default=0.0)
    p.add_argument("--burst-energy", type=float, default=0.0)
    p.add_argument("--friction", type=float, default=0.05)
    p.add_argument("--gravity", type=float, default=1.0)
    p.add_argument("--event-log", action="store_true", help="also write the impulse log")
    common(p)
    p.set_defaults(func=_cmd_simulate_physical)

    p = sub.add_parser("analyze", help="structural report, plus classification when given a trajectory")
    p.add_argument("network")
    p.add_argument("--trajectory", default=None, help="trajectory CSV to classify")
    common(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("experiment", help="paired looped-vs-control survival experiment")
    p.add_argument("--looped", required=True)
    p.add_argument("--control", default=None,
                   help="control network (default: looped arm with uphill reactions removed)")
    p.add_argument("--seeds", type=int, default=200)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--init", default=None)
    common(p)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("split-test", help="random-split regeneration test")
    p.add_argument("network")
    p.add_argument("--init", required=True)
    p.add_argument("--splits", type=int, default=1, help="number of seeded splits")
    p.add_argument("--t-regrow", type=float, default=None,
                   help="also simulate each half and check dynamic regrowth")
    common(p)
    p.set_defaults(func=_cmd_split_test)

    p = sub.add_parser("report", help="render a JSON report or trajectory CSV human-readable (+figures)")
    p.add_argument("document")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--no-figures", action="store_true")
    common(p)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run_cli(argv: list[str]) -> int:
    """Programmatic entry point (mirrors the console script)."""
    return main(argv)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
