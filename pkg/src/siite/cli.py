"""Command-line entry point.

Every subcommand reads one JSON config (``--config``) carrying a
``schema_version`` field, applies ``--set key=value`` overrides (dotted keys
reach into ``hamiltonian``) and writes into ``--out``.

Exit codes: 0 success, 1 configuration or input error, 2 ``max_steps``
reached, 3 restart advised.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, exact, shots
from .engine import (
    RunConfig,
    aggregate_rows,
    fmt,
    read_steps,
    run_ensemble,
    run_trajectory,
    write_summary,
    write_trajectory,
)
from .errors import ConfigError, SiiteError
from .models import build, build_tfim, shift_operator

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_MAX_STEPS, EXIT_RESTART = 0, 1, 2, 3
EXIT_CODES = {
    "variance_reached": EXIT_OK,
    "fidelity_reached": EXIT_OK,
    "max_steps": EXIT_MAX_STEPS,
    "restart_advised": EXIT_RESTART,
}

log = logging.getLogger("siite")

SWEEP_KEYS = {"W_grid", "seeds", "matched_ground", "relaunch"}
COMPARE_DEFAULTS = {
    "length": 8, "J": 1.0, "h_values": [0.1, 0.5, 1.0, 1.5], "h_x": 0.05, "epsilon": 0.1,
    "d_tau": 0.1, "fidelity_target": 0.999, "max_steps": 100000,
}
SHOTS_DEFAULTS = {
    "delta": 0.0, "d_tau": 0.05, "shots_per_string": 10000, "seed": 0, "allocation": "uniform",
    "grouping": False, "epsilon": 0.01, "failure_prob": 0.05,
}
ANALYZE_DEFAULTS = {"runs": [], "baseline": True}


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    doc = copy.deepcopy(doc)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, value = item.split("=", 1)
        parts = key.split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "cannot descend into a non-object")
        node[parts[-1]] = _coerce(value)
    return doc


def load_config(path, overrides=None) -> dict:
    if path is None:
        doc = {"schema_version": SCHEMA_VERSION}
    else:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from exc
    if isinstance(doc.get("config"), dict) and "termination" in doc:
        # run.json echo of an earlier run
        doc = {"schema_version": doc.get("schema_version"), **doc["config"]}
    doc = apply_overrides(doc, overrides)
    version = doc.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    return doc


def _split(doc: dict, defaults: dict) -> tuple[dict, dict]:
    extra = {k: doc.pop(k) for k in list(doc) if k in defaults}
    return doc, {**defaults, **extra}


def _check_keys(doc: dict, allowed: set, where: str = ""):
    for k in doc:
        if k not in allowed:
            raise ConfigError(f"{where}{k}", "unknown key")


# -- subcommands ----------------------------------------------------------------------------


def cmd_run(args) -> int:
    doc = load_config(args.config, args.set)
    if args.seed is not None:
        doc["seed"] = args.seed
    cfg = RunConfig.from_dict(doc)
    out = Path(args.out)
    rec = run_trajectory(cfg, out_dir=out)
    write_trajectory(rec, out)
    log.info("run finished: %s after %d steps", rec.termination, len(rec.steps) - 1)
    return EXIT_CODES[rec.termination]


def cmd_sweep(args) -> int:
    doc = load_config(args.config, args.set)
    extra = {k: doc.pop(k) for k in list(doc) if k in SWEEP_KEYS}
    if not extra.get("W_grid"):
        raise ConfigError("W_grid", "missing or empty")
    if not extra.get("seeds"):
        raise ConfigError("seeds", "missing or empty")
    base = RunConfig.from_dict(doc)
    out = Path(args.out)
    rows = []
    per_w = {}
    for W in extra["W_grid"]:
        spec = dataclasses.replace(base.hamiltonian, W=float(W))
        cfg = dataclasses.replace(base, hamiltonian=spec)
        summary = run_ensemble(cfg, extra["seeds"], args.parallel or 1,
                               matched_ground=extra.get("matched_ground", True),
                               relaunch=extra.get("relaunch", True), out_dir=out / "runs")
        rows.extend(summary.rows)
        per_w[f"{float(W):g}"] = summary.aggregate
    from .engine import EnsembleSummary

    write_summary(EnsembleSummary(rows), out / "summary.csv")
    (out / "aggregate.json").write_text(json.dumps(per_w, indent=2))
    return EXIT_OK


def ite_step_counts(L: int, J: float, h: float, h_x: float, epsilon: float, d_tau: float,
                    target: float, max_steps: int) -> tuple[int | None, int | None]:
    """Steps for conventional ITE and SIITE to reach ``target`` fidelity with the ground state."""
    _, H = build_tfim(L, J, h, h_x)
    eig = exact.diagonalize(H)
    ground = eig.states[:, 0]
    delta = eig.e_min + epsilon
    H_shift = shift_operator(H, delta)
    shifted = eig.shifted(delta)
    counts = []
    for kind in ("ite", "siite"):
        psi = exact.neel_state(L)
        n = None
        for k in range(1, max_steps + 1):
            if kind == "ite":
                psi = exact.conventional_ite_step(H, psi, d_tau, eig)
            else:
                psi = exact.siite_step_exact(H_shift, psi, d_tau, "eigenbasis", shifted)
            if abs(np.vdot(ground, psi)) ** 2 >= target:
                n = k
                break
        counts.append(n)
    return counts[0], counts[1]


def cmd_compare_ite(args) -> int:
    doc = load_config(args.config, args.set)
    _check_keys(doc, set(COMPARE_DEFAULTS))
    p = {**COMPARE_DEFAULTS, **doc}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "compare_ite.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["h", "ite_steps", "siite_steps"])
        for h in p["h_values"]:
            ite, si = ite_step_counts(p["length"], p["J"], h, p["h_x"], p["epsilon"], p["d_tau"],
                                      p["fidelity_target"], p["max_steps"])
            w.writerow([fmt(float(h)), fmt(ite), fmt(si)])
    return EXIT_OK


def cmd_shots(args) -> int:
    doc = load_config(args.config, args.set)
    if "hamiltonian" not in doc:
        raise ConfigError("hamiltonian", "missing")
    _check_keys(doc, set(SHOTS_DEFAULTS) | {"hamiltonian"})
    p = {**SHOTS_DEFAULTS, **doc}
    from .models import HamiltonianSpec

    spec = HamiltonianSpec.from_dict(p["hamiltonian"])
    _, H = build(spec)
    if H.length > 10:
        raise ConfigError("hamiltonian.length", "shot simulation is limited to L <= 10")
    H_shift = shift_operator(H, p["delta"])
    rng = np.random.default_rng(p["seed"])
    old = rng.standard_normal(2**H.length)
    old /= np.linalg.norm(old)
    new = exact.siite_step_exact(H_shift, old, p["d_tau"])
    est = shots.estimate_cross_term(new, old, H_shift, p["d_tau"], p["shots_per_string"], p["seed"],
                                    allocation=p["allocation"], grouping=p["grouping"])
    report = json.loads(est.to_json())
    report["shots_required"] = shots.shots_required(p["epsilon"], p["failure_prob"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "shots.json").write_text(json.dumps(report, indent=2))
    return EXIT_OK


def _load_run(run_dir: Path):
    try:
        meta = json.loads((run_dir / "run.json").read_text())
        steps = read_steps(run_dir / "steps.csv")
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ConfigError("runs", f"cannot read run artifacts in {run_dir}: {exc}") from exc
    return meta, steps


def cmd_analyze(args) -> int:
    doc = load_config(args.config, args.set)
    _check_keys(doc, set(ANALYZE_DEFAULTS))
    p = {**ANALYZE_DEFAULTS, **doc}
    if not p["runs"]:
        raise ConfigError("runs", "missing or empty")
    records, details = [], []
    for run in p["runs"]:
        meta, steps = _load_run(Path(run))
        cfg = RunConfig.from_dict(meta["config"])
        _, H = build(cfg.hamiltonian)
        last = steps[-1]
        lo, hi, label = analysis.spectral_bounds(H)
        dE = analysis.relative_energy_error(last.E, cfg.delta, lo, hi)
        W = cfg.hamiltonian.W
        records.append((W, "siite", last.fidelity if last.fidelity is not None else math.nan,
                        last.sigma, dE))
        entry = {"run": str(run), "W": W, "E": last.E, "sigma": last.sigma, "dE": dE,
                 "bounds": label, "chi": last.chi_max}
        if H.length <= 12:
            gap = analysis.gap_report(np.linalg.eigvalsh(exact.to_dense(H)), cfg.delta)
            entry["gap"] = dataclasses.asdict(gap)
        if p["baseline"]:
            F, sigma, bdE = analysis.folding_baseline(H, cfg.delta, max(last.chi_max, 1), seed=cfg.seed)
            records.append((W, "folding", F if F is not None else math.nan, sigma, bdE))
            entry["baseline"] = {"fidelity": F, "sigma": sigma, "dE": bdE}
        details.append(entry)
    out = Path(args.out)
    analysis.write_comparison(analysis.comparison_rows(records), out / "comparison.csv")
    (out / "analysis.json").write_text(json.dumps(details, indent=2))
    return EXIT_OK


def cmd_export_plotdata(args) -> int:
    if args.config is None:
        raise ConfigError("config", "pass the run directory (or its run.json) via --config")
    run_dir = Path(args.config)
    if run_dir.is_file():
        run_dir = run_dir.parent
    if not (run_dir / "steps.csv").exists():
        raise ConfigError("config", f"no steps.csv in {run_dir}")
    steps = read_steps(run_dir / "steps.csv")
    out = Path(args.out) if args.out else run_dir / "plotdata"
    out.mkdir(parents=True, exist_ok=True)
    notes = []

    def series(name, header, rows):
        with (out / name).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([fmt(v) for v in r])

    acc = [s for s in steps if s.accepted]
    series("energy.csv", ["tau", "E"], [(s.tau, s.E) for s in acc])
    positive = [s for s in acc if s.sigma > 0]
    if len(positive) < len(acc):
        notes.append(f"omitted {len(acc) - len(positive)} rows with sigma = 0 from log10_sigma")
    series("variance.csv", ["tau", "log10_sigma"], [(s.tau, math.log10(s.sigma)) for s in positive])
    series("bond_dimension.csv", ["tau", "chi_max"], [(s.tau, s.chi_max) for s in acc])
    if any(s.fidelity is not None for s in acc):
        series("fidelity.csv", ["tau", "fidelity"], [(s.tau, s.fidelity) for s in acc if s.fidelity is not None])
    (out / "notes.json").write_text(json.dumps({"notes": notes}, indent=2))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "compare-ite": cmd_compare_ite,
    "shots": cmd_shots,
    "analyze": cmd_analyze,
    "export-plotdata": cmd_export_plotdata,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="siite", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (run directory for export-plotdata)")
        p.add_argument("--out", required=name != "export-plotdata", help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key; repeatable")
        p.add_argument("--parallel", type=int, default=1, help="concurrent trajectories (sweep)")
        p.add_argument("--seed", type=int, help="override the warm-start seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SiiteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
