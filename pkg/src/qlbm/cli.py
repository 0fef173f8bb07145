"""Batch driver: ``qlbm run <config.toml> [options]``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .circuits import PHASES, QuantumFlowState, RegisterLayout, TimestepCircuit, decode, encode_rooted
from .classical import mem_force, oracle_step
from .config import ConfigError, RunConfig, check_qubit_budget, load_config
from .qmem import MODES, ForceMeasurementConfig, build_observables, measured_timestep
from .statevector import gate_counts

log = logging.getLogger("qlbm")

COMPARE_TOLERANCE = 1e-8
EXIT_OK, EXIT_DEVIATION, EXIT_CONFIG = 0, 1, 2


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def force_header(d: int, compare: bool) -> list[str]:
    cols = ["t"]
    cols += [f"F_{j}" for j in range(1, d + 1)]
    cols += [f"stderr_{j}" for j in range(1, d + 1)]
    for j in range(1, d + 1):
        cols += [f"P_plus_{j}", f"P_minus_{j}"]
    cols.append("total_mass")
    if compare:
        cols += [f"F_classical_{j}" for j in range(1, d + 1)]
        cols.append("max_deviation")
    return cols


def _decoded_mass(state: QuantumFlowState) -> float:
    probs = np.abs(state.amplitudes[state.layout.field_indices]) ** 2
    return state.total_mass * float(np.sum(probs))


@dataclass
class RunSummary:
    rows: list[list[str]]
    max_deviation: float
    exit_code: int


def run(cfg: RunConfig, out_dir: Path, report: bool = False, dump_field: bool = False) -> RunSummary:
    check_qubit_budget(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    geom = cfg.geometry()
    field = cfg.initial_field()
    layout = RegisterLayout(geom.lattice)
    state = encode_rooted(field, layout)
    circuit = TimestepCircuit.build(layout, geom)
    observables = build_observables(layout, geom)
    mconf = ForceMeasurementConfig(cfg.mode, cfg.shots, cfg.seed)
    d = geom.lattice.d

    if report:
        table = report_gates(cfg, circuit)
        print(format_gate_table(table, cfg, layout))
        write_gate_table(table, out_dir / "gates.csv")

    rows: list[list[str]] = []
    dump_rows: list[list[str]] = []
    worst = 0.0
    if dump_field:
        dump_rows += _field_rows(0, field.f)
    for t in range(cfg.timesteps):
        classical_force = mem_force(field) if cfg.compare else None
        step = measured_timestep(state, geom, circuit, mconf, t, observables)
        f = step.force
        row = [str(t)] + [_fmt(v) for v in f.components] + [_fmt(v) for v in f.stderr]
        for j in range(d):
            row += [_fmt(f.p_plus[j]), _fmt(f.p_minus[j])]
        row.append(_fmt(_decoded_mass(state)))
        if cfg.compare:
            field = oracle_step(field)
            deviation = float(np.max(np.abs(decode(state, geom).f - field.f)))
            worst = max(worst, deviation)
            row += [_fmt(v) for v in classical_force] + [_fmt(deviation)]
            log.info("t=%d F=%s classical=%s deviation=%.3g", t, f.components, classical_force, deviation)
        else:
            log.info("t=%d F=%s", t, f.components)
        if dump_field:
            dump_rows += _field_rows(t + 1, decode(state, geom).f)
        rows.append(row)

    with open(out_dir / "forces.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(force_header(d, cfg.compare))
        writer.writerows(rows)
    if dump_field:
        with open(out_dir / "field.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", *[f"x_{j}" for j in range(1, d + 1)], "i", "value"])
            writer.writerows(dump_rows)
    code = EXIT_DEVIATION if worst > COMPARE_TOLERANCE else EXIT_OK
    return RunSummary(rows, worst, code)


def _field_rows(t: int, f: np.ndarray) -> list[list[str]]:
    rows = []
    for i in range(f.shape[0]):
        for x in np.ndindex(f.shape[1:]):
            rows.append([str(t), *map(str, x), str(i), _fmt(f[(i, *x)])])
    return rows


def report_gates(cfg: RunConfig, circuit: TimestepCircuit | None = None) -> dict[str, Counter]:
    """Per-phase gate tallies for one timestep."""
    if circuit is None:
        geom = cfg.geometry()
        circuit = TimestepCircuit.build(RegisterLayout(geom.lattice), geom)
    table = {name: gate_counts(circuit.phases[name]) for name in PHASES}
    table["total"] = sum(table.values(), Counter())
    return table


def _columns(table: dict[str, Counter]) -> list[str]:
    keys = set().union(*table.values())

    def order(k: str):
        for rank, prefix in enumerate(("X", "MCX", "P", "CP", "QFT", "IQFT", "shift")):
            if k == prefix or (k.startswith(prefix) and k[len(prefix):].isdigit()):
                return rank, int(k[len(prefix):] or 0)
        return 99, 0

    return sorted(keys, key=order)


def format_gate_table(table: dict[str, Counter], cfg: RunConfig, layout: RegisterLayout) -> str:
    cols = _columns(table)
    width = max(len(p) for p in table) + 2
    lines = [
        f"grid {'x'.join(map(str, cfg.extents))} ({layout.lattice.num_cells} cells), "
        f"{layout.num_qubits} qubits (ancillae {layout.n_a}, position {layout.n_g}, velocity {layout.n_v})",
        "phase".ljust(width) + "".join(c.rjust(8) for c in cols),
    ]
    for phase, counts in table.items():
        lines.append(phase.ljust(width) + "".join(str(counts.get(c, 0)).rjust(8) for c in cols))
    return "\n".join(lines)


def write_gate_table(table: dict[str, Counter], path: Path) -> None:
    cols = _columns(table)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["phase", *cols])
        for phase, counts in table.items():
            writer.writerow([phase, *(counts.get(c, 0) for c in cols)])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qlbm", description="Quantum lattice-Boltzmann force measurement")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="simulate a configuration and write per-step forces")
    p.add_argument("config", type=Path)
    p.add_argument("--compare", action="store_true", help="run the classical oracle in lockstep")
    p.add_argument("--report-gates", action="store_true", help="print per-phase gate counts")
    p.add_argument("--out", type=Path, help="output directory (overrides [run].out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--shots", type=int)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--dump-field", action="store_true", help="also write the decoded field per step")
    p.add_argument("--verbose", "-v", action="count", default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.compare:
            cfg.compare = True
        if args.seed is not None:
            cfg.seed = args.seed
        if args.shots is not None:
            cfg.shots = args.shots
        if args.mode is not None:
            cfg.mode = args.mode
        if cfg.mode == "shots" and not cfg.shots:
            raise ConfigError("shots mode needs --shots or [run].shots", source=str(args.config))
        out = args.out if args.out is not None else Path(cfg.out)
        summary = run(cfg, out, report=args.report_gates, dump_field=args.dump_field)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if summary.exit_code == EXIT_DEVIATION:
        print(f"error: quantum field deviates from the oracle by {summary.max_deviation:.3g} "
              f"(> {COMPARE_TOLERANCE:g})", file=sys.stderr)
    return summary.exit_code


if __name__ == "__main__":
    sys.exit(main())
