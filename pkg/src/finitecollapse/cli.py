"""Command-line entry point: config ingestion, run orchestration,
artifact persistence.

Subcommands: ``simulate`` (one path to CSV), ``ensemble`` (summary CSV
and JSON), ``verify`` (full verification report), ``timechange``
(identity report). Exit codes: 0 pass, 1 verification failure, 2 config
error, 3 I/O error. Floats are written with round-trip formatting, so
re-running a command with the same config and seed overwrites every
artifact byte-identically (timestamps live only in the manifest).
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .ensemble import ROUTE_EXACT, ROUTE_SDE, run_ensemble
from .errors import ConfigurationError, SimulationError, UnsupportedInputError
from .exact import (
    InformationPath,
    ReductionSchedule,
    information_process,
    simulate_exact_path,
    terminal_from_uniform,
)
from .paths import (
    KIND_BROWNIAN,
    UNIFORM_T,
    UNIFORM_TAU,
    NoisePath,
    SeedSpec,
    bridge_from_bm,
    make_grid,
    sample_brownian,
)
from .sde import IntegratorConfig, integrate_sde
from .system import QuantumSystem, build_system
from .timechange import equivalence_check
from .verification import VerificationOptions, run_verification

EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_IO_ERROR = 3

ETA_GAP_LIMIT = 1e-10
PROB_GAP_LIMIT = 1e-12


@dataclass
class RunConfig:
    system: QuantumSystem
    schedule: ReductionSchedule
    n_steps: int
    scheme: str
    epsilon_fraction: float
    n_paths: int
    master_seed: int
    route: str
    output_dir: str
    verification: VerificationOptions
    raw: dict


def _require(data: dict, key: str, path: str):
    if key not in data:
        raise ConfigurationError(f"{path}.{key}: missing required field")
    return data[key]


def _number(value, path: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{path}: must be a number")
    if positive and value <= 0:
        raise ConfigurationError(f"{path}: must be a positive number")
    return float(value)


def _integer(value, path: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"{path}: must be an integer")
    if value < minimum:
        raise ConfigurationError(f"{path}: must be >= {minimum}")
    return value


def load_run_config(data: dict, overrides: dict | None = None) -> RunConfig:
    """Validate a config document, raising field-precise errors."""
    if not isinstance(data, dict):
        raise ConfigurationError("config: top level must be an object")
    overrides = overrides or {}

    sys_doc = _require(data, "system", "config")
    energies = _require(sys_doc, "energies", "system")
    amp_pairs = _require(sys_doc, "amplitudes", "system")
    if not isinstance(energies, list) or not energies:
        raise ConfigurationError("system.energies: must be a non-empty array")
    if not isinstance(amp_pairs, list) or len(amp_pairs) != len(energies):
        raise ConfigurationError(
            "system.amplitudes: must be an array of [re, im] pairs matching energies"
        )
    amplitudes = []
    for i, pair in enumerate(amp_pairs):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigurationError(f"system.amplitudes[{i}]: must be a [re, im] pair")
        amplitudes.append(
            complex(
                _number(pair[0], f"system.amplitudes[{i}][0]"),
                _number(pair[1], f"system.amplitudes[{i}][1]"),
            )
        )
    tolerance = _number(
        sys_doc.get("degeneracy_tolerance", 1e-9), "system.degeneracy_tolerance"
    )
    if tolerance < 0:
        raise ConfigurationError("system.degeneracy_tolerance: must be >= 0")
    system = build_system(
        [_number(e, f"system.energies[{i}]") for i, e in enumerate(energies)],
        amplitudes,
        tolerance,
    )

    sched_doc = _require(data, "schedule", "config")
    horizon = _number(_require(sched_doc, "T", "schedule"), "schedule.T", positive=True)
    sigma = _number(
        _require(sched_doc, "sigma", "schedule"), "schedule.sigma", positive=True
    )
    schedule = ReductionSchedule(horizon, sigma)

    grid_doc = data.get("grid", {})
    n_steps = _integer(grid_doc.get("n_steps", 200), "grid.n_steps", minimum=2)
    scheme = grid_doc.get("scheme", UNIFORM_T)
    if scheme not in (UNIFORM_T, UNIFORM_TAU):
        raise ConfigurationError(f"grid.scheme: unknown scheme {scheme!r}")
    epsilon = _number(grid_doc.get("epsilon_fraction", 1e-3), "grid.epsilon_fraction")
    if not 0.0 < epsilon < 1.0:
        raise ConfigurationError("grid.epsilon_fraction: must lie in (0, 1)")

    ens_doc = data.get("ensemble", {})
    n_paths = _integer(
        overrides.get("paths", ens_doc.get("n_paths", 1000)), "ensemble.n_paths", 1
    )
    master_seed = _integer(
        overrides.get("seed", ens_doc.get("master_seed", 0)), "ensemble.master_seed", 0
    )
    if master_seed >= 2**64:
        raise ConfigurationError("ensemble.master_seed: must fit in 64 bits")
    if "steps" in overrides:
        n_steps = _integer(overrides["steps"], "grid.n_steps", minimum=2)

    route = overrides.get("route", data.get("route", ROUTE_EXACT))
    if route not in (ROUTE_EXACT, ROUTE_SDE):
        raise ConfigurationError(f"route: must be 'exact' or 'sde', got {route!r}")

    verif_doc = data.get("verification", {})
    if not isinstance(verif_doc, dict):
        raise ConfigurationError("verification: must be an object")
    try:
        verification = VerificationOptions.from_dict(
            {**verif_doc, "n_workers": overrides.get("threads", verif_doc.get("n_workers", 1))}
        )
    except TypeError as exc:
        raise ConfigurationError(f"verification: {exc}") from exc

    output_dir = overrides.get("out") or data.get("output_dir", "out")
    return RunConfig(
        system=system,
        schedule=schedule,
        n_steps=n_steps,
        scheme=scheme,
        epsilon_fraction=epsilon,
        n_paths=n_paths,
        master_seed=master_seed,
        route=route,
        output_dir=output_dir,
        verification=verification,
        raw=data,
    )


def _fmt(value) -> str:
    return repr(float(value))


def _write_artifact(out_dir: str, name: str, content: str, manifest_files: list) -> None:
    path = os.path.join(out_dir, name)
    payload = content.encode()
    with open(path, "wb") as fh:
        fh.write(payload)
    manifest_files.append(
        {
            "name": name,
            "bytes": len(payload),
            "sha256": hashlib.sha256(payload).hexdigest(),
        }
    )


def _write_manifest(out_dir: str, command: str, config: RunConfig, files: list) -> None:
    manifest = {
        "tool": "finitecollapse",
        "version": __version__,
        "command": command,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "master_seed": config.master_seed,
        "config": config.raw,
        "files": files,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _path_csv(grid, info: InformationPath | None, reduction) -> str:
    n_levels = reduction.probabilities.shape[1]
    n_basis = reduction.amplitudes.shape[1]
    header = (
        ["t", "xi"]
        + [f"pi_{i + 1}" for i in range(n_levels)]
        + ["H", "V"]
        + [x for j in range(n_basis) for x in (f"re_{j + 1}", f"im_{j + 1}")]
    )
    lines = [",".join(header)]
    xi = info.values if info is not None else np.full(grid.n_times, np.nan)
    for k in range(grid.n_times):
        row = [_fmt(grid.times[k]), _fmt(xi[k])]
        row += [_fmt(p) for p in reduction.probabilities[k]]
        row += [_fmt(reduction.energy[k]), _fmt(reduction.variance[k])]
        for a in reduction.amplitudes[k]:
            row += [_fmt(a.real), _fmt(a.imag)]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def cmd_simulate(config: RunConfig) -> int:
    grid = make_grid(
        config.schedule.horizon, config.n_steps, config.scheme, config.epsilon_fraction
    )
    seed = SeedSpec(config.master_seed, 0)
    if config.route == ROUTE_EXACT:
        info, path = simulate_exact_path(config.system, config.schedule, grid, seed)
    else:
        noise = sample_brownian(grid, seed)
        path = integrate_sde(
            config.system, noise, IntegratorConfig(grid, config.schedule)
        )
        info = None
    files: list = []
    _write_artifact(
        config.output_dir, "path.csv", _path_csv(grid, info, path), files
    )
    _write_manifest(config.output_dir, "simulate", config, files)
    return EXIT_OK


def _summary_csv(summary) -> str:
    n_levels = summary.mean_pi.shape[1]
    header = (
        ["t", "mean_H", "se_H", "mean_V", "se_V"]
        + [f"mean_pi_{i + 1}" for i in range(n_levels)]
        + [f"se_pi_{i + 1}" for i in range(n_levels)]
    )
    lines = [",".join(header)]
    for k in range(summary.grid.n_times):
        row = [
            _fmt(summary.grid.times[k]),
            _fmt(summary.mean_H[k]),
            _fmt(summary.se_H[k]),
            _fmt(summary.mean_V[k]),
            _fmt(summary.se_V[k]),
        ]
        row += [_fmt(p) for p in summary.mean_pi[k]]
        row += [_fmt(p) for p in summary.se_pi[k]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _summary_json(summary, config: RunConfig) -> str:
    doc = {
        "n_paths": summary.n_paths,
        "route": summary.route,
        "master_seed": config.master_seed,
        "grid": {
            "n_steps": summary.grid.n_times - 1,
            "scheme": summary.grid.scheme,
            "epsilon_fraction": summary.grid.epsilon_fraction,
            "horizon": summary.grid.horizon,
        },
        "initial_energy": summary.initial_energy,
        "initial_variance": summary.initial_variance,
        "terminal_counts": summary.terminal_counts.tolist(),
        "terminal_frequencies": summary.terminal_frequencies.tolist(),
        "probe_times": summary.probe_times.tolist(),
    }
    return json.dumps(doc, indent=2) + "\n"


def cmd_ensemble(config: RunConfig, n_workers: int) -> int:
    grid = make_grid(
        config.schedule.horizon, config.n_steps, config.scheme, config.epsilon_fraction
    )
    summary = run_ensemble(
        config.system,
        config.schedule,
        grid,
        config.n_paths,
        config.master_seed,
        route=config.route,
        n_workers=n_workers,
    )
    files: list = []
    _write_artifact(config.output_dir, "summary.csv", _summary_csv(summary), files)
    _write_artifact(
        config.output_dir, "summary.json", _summary_json(summary, config), files
    )
    _write_manifest(config.output_dir, "ensemble", config, files)
    return EXIT_OK


def cmd_verify(config: RunConfig) -> int:
    report = run_verification(
        config.system, config.schedule, config.master_seed, config.verification
    )
    files: list = []
    _write_artifact(
        config.output_dir,
        "report.json",
        json.dumps(report.to_dict(), indent=2) + "\n",
        files,
    )
    _write_manifest(config.output_dir, "verify", config, files)
    return EXIT_OK if report.all_passed else EXIT_VERIFICATION_FAILED


def cmd_timechange(config: RunConfig, zero_noise: bool) -> int:
    if config.route != ROUTE_EXACT:
        raise ConfigurationError(
            "route: the timechange command needs the exact route "
            "(pathwise Brownian source)"
        )
    grid = make_grid(
        config.schedule.horizon, config.n_steps, config.scheme, config.epsilon_fraction
    )
    max_eta = 0.0
    max_prob = 0.0
    for i in range(config.n_paths):
        if zero_noise:
            bm = NoisePath(grid, np.zeros(grid.n_times), KIND_BROWNIAN)
            bridge = bridge_from_bm(bm, config.schedule.horizon)
            gen = SeedSpec(config.master_seed, i).generator()
            level = terminal_from_uniform(gen.random(), config.system.born_weights)
            info = information_process(level, bridge, config.schedule, config.system)
        else:
            info, _ = simulate_exact_path(
                config.system,
                config.schedule,
                grid,
                SeedSpec(config.master_seed, i),
                use_bm_bridge=True,
            )
        rep = equivalence_check(info, config.system, config.schedule)
        max_eta = max(max_eta, rep.max_eta_gap)
        max_prob = max(max_prob, rep.max_prob_gap)
        grid_meta = rep.grid_meta

    passed = max_eta <= ETA_GAP_LIMIT and max_prob <= PROB_GAP_LIMIT
    doc = {
        "max_eta_gap": max_eta,
        "max_prob_gap": max_prob,
        "eta_gap_limit": ETA_GAP_LIMIT,
        "prob_gap_limit": PROB_GAP_LIMIT,
        "n_paths": config.n_paths,
        "zero_noise": zero_noise,
        "passed": passed,
        "grid_meta": grid_meta,
    }
    files: list = []
    _write_artifact(
        config.output_dir, "equivalence.json", json.dumps(doc, indent=2) + "\n", files
    )
    _write_manifest(config.output_dir, "timechange", config, files)
    return EXIT_OK if passed else EXIT_VERIFICATION_FAILED


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="finitecollapse",
        description="Simulate and verify finite-time stochastic state reduction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("simulate", "write one path as CSV"),
        ("ensemble", "run a Monte Carlo ensemble and write its summary"),
        ("verify", "run the verification suites and write a report"),
        ("timechange", "check the finite/asymptotic time-change identity"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="JSON config document")
        cmd.add_argument("--out", default=None, help="output directory")
        cmd.add_argument("--seed", type=int, default=None, help="master seed override")
        cmd.add_argument("--paths", type=int, default=None, help="path count override")
        cmd.add_argument("--steps", type=int, default=None, help="grid steps override")
        cmd.add_argument(
            "--route", choices=[ROUTE_EXACT, ROUTE_SDE], default=None,
            help="solution route override",
        )
        cmd.add_argument(
            "--threads", type=int, default=None,
            help="worker threads (default: machine parallelism)",
        )
        if name == "timechange":
            cmd.add_argument(
                "--zero-noise", action="store_true",
                help="drive every path with zero noise (debug)",
            )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            raw = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO_ERROR
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    overrides = {
        key: getattr(args, key)
        for key in ("seed", "paths", "steps", "route", "threads", "out")
        if getattr(args, key) is not None
    }
    try:
        config = load_run_config(data, overrides)
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    n_workers = overrides.get("threads") or os.cpu_count() or 1
    try:
        os.makedirs(config.output_dir, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(config)
        if args.command == "ensemble":
            return cmd_ensemble(config, n_workers)
        if args.command == "verify":
            return cmd_verify(config)
        return cmd_timechange(config, getattr(args, "zero_noise", False))
    except (ConfigurationError, UnsupportedInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
