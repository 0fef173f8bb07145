"""Run configuration: TOML parsing, validation and serialization."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .classical import ClassicalFlowField
from .circuits import RegisterLayout
from .lattice import Box, DomainGeometry, GeometryError, LatticeDescriptor
from .qmem import MODES

QUBIT_BUDGET = 26
INITIAL_KINDS = ("uniform", "table", "impulse", "random")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


@dataclass
class InitialField:
    kind: str = "uniform"
    value: float = 1.0
    position: tuple[int, ...] = ()
    velocity: int = 0
    populations: list[tuple[tuple[int, ...], int, float]] = field(default_factory=list)
    low: float = 0.0
    high: float = 1.0


@dataclass
class RunConfig:
    extents: tuple[int, ...]
    obstacles: list[Box] = field(default_factory=list)
    initial: InitialField = field(default_factory=InitialField)
    timesteps: int = 1
    mode: str = "observable"
    shots: int | None = None
    seed: int = 0
    compare: bool = False
    out: str = "results"

    @property
    def d(self) -> int:
        return len(self.extents)

    def geometry(self) -> DomainGeometry:
        return DomainGeometry(LatticeDescriptor(self.extents), tuple(self.obstacles))

    def initial_field(self) -> ClassicalFlowField:
        geom = self.geometry()
        lat = geom.lattice
        init = self.initial
        f = np.zeros((lat.q, *lat.extents))
        if init.kind == "uniform":
            f[:] = init.value
        elif init.kind == "random":
            rng = np.random.default_rng(self.seed)
            f[:] = rng.uniform(init.low, init.high, size=f.shape)
        elif init.kind == "impulse":
            f[(init.velocity, *init.position)] = init.value
        else:
            for x, i, value in init.populations:
                f[(i, *x)] = value
        if init.kind in ("uniform", "random"):
            f[:, geom.solid_mask()] = 0.0
        return ClassicalFlowField(geom, f)

    def to_dict(self) -> dict[str, Any]:
        init: dict[str, Any] = {"kind": self.initial.kind}
        if self.initial.kind == "uniform":
            init["value"] = self.initial.value
        elif self.initial.kind == "random":
            init.update(low=self.initial.low, high=self.initial.high)
        elif self.initial.kind == "impulse":
            init.update(position=list(self.initial.position), velocity=self.initial.velocity,
                        value=self.initial.value)
        else:
            init["populations"] = [[*x, i, v] for x, i, v in self.initial.populations]
        run: dict[str, Any] = {"timesteps": self.timesteps, "mode": self.mode, "seed": self.seed,
                               "compare": self.compare, "out": self.out}
        if self.shots is not None:
            run["shots"] = self.shots
        return {
            "lattice": {"extents": list(self.extents)},
            "obstacle": [{"lower": list(b.lower), "upper": list(b.upper)} for b in self.obstacles],
            "initial": init,
            "run": run,
        }

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())


def _locate(text: str, key: str, section: str | None = None, occurrence: int = 0) -> int | None:
    """1-based line of ``key = ...`` (optionally inside ``[section]``), or of the section header."""
    current = None
    seen = 0
    for n, line in enumerate(text.splitlines(), start=1):
        header = re.match(r"\s*\[\[?\s*([\w.]+)\s*\]\]?", line)
        if header:
            current = header.group(1)
            if key == current and section is None:
                if seen == occurrence:
                    return n
                seen += 1
            continue
        if re.match(rf"\s*{re.escape(key)}\s*=", line) and (section is None or current == section):
            if seen == occurrence:
                return n
            seen += 1
    return None


class _Reader:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def fail(self, message: str, key: str, section: str | None = None, occurrence: int = 0):
        raise ConfigError(message, _locate(self.text, key, section, occurrence), self.source)

    def get(self, table: dict, key: str, section: str, kind, default=None, required=False, occurrence: int = 0):
        if key not in table:
            if required:
                raise ConfigError(f"missing required key '{key}' in [{section}]",
                                  _locate(self.text, section), self.source)
            return default
        value = table[key]
        ok = isinstance(value, kind) and not (kind in (int, float) and isinstance(value, bool))
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value, ok = float(value), True
        if not ok:
            self.fail(f"'{key}' must be of type {kind.__name__}, got {value!r}", key, section, occurrence)
        return value

    def int_list(self, table: dict, key: str, section: str, occurrence: int = 0) -> tuple[int, ...]:
        value = self.get(table, key, section, list, required=True, occurrence=occurrence)
        if not value or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            self.fail(f"'{key}' must be a non-empty list of integers", key, section, occurrence)
        return tuple(value)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"invalid TOML: {exc}", int(m.group(1)) if m else None, source) from None
    r = _Reader(text, source)

    lattice = data.get("lattice")
    if not isinstance(lattice, dict):
        raise ConfigError("missing [lattice] section", None, source)
    extents = r.int_list(lattice, "extents", "lattice")
    if len(extents) not in (1, 2, 3):
        r.fail(f"lattice dimension must be 1, 2 or 3, got {len(extents)}", "extents", "lattice")
    try:
        lat = LatticeDescriptor(extents)
    except GeometryError as exc:
        r.fail(str(exc), "extents", "lattice")

    raw_obstacles = data.get("obstacle", [])
    if not isinstance(raw_obstacles, list):
        r.fail("obstacles must be given as [[obstacle]] tables", "obstacle")
    obstacles = []
    for k, ob in enumerate(raw_obstacles):
        lower = r.int_list(ob, "lower", "obstacle", occurrence=k)
        upper = r.int_list(ob, "upper", "obstacle", occurrence=k)
        if len(lower) != lat.d or len(upper) != lat.d:
            r.fail(f"obstacle {k} corners must have {lat.d} coordinates", "lower", "obstacle", k)
        try:
            obstacles.append(Box(lower, upper))
        except GeometryError as exc:
            r.fail(f"obstacle {k}: {exc}", "lower", "obstacle", k)
    try:
        geom = DomainGeometry(lat, tuple(obstacles))
    except GeometryError as exc:
        r.fail(str(exc), "obstacle")

    init_t = data.get("initial", {})
    kind = r.get(init_t, "kind", "initial", str, "uniform")
    if kind not in INITIAL_KINDS:
        r.fail(f"unknown initial kind {kind!r}; choose from {INITIAL_KINDS}", "kind", "initial")
    init = InitialField(kind=kind)
    if kind in ("uniform", "impulse"):
        init.value = r.get(init_t, "value", "initial", float, 1.0)
        if init.value < 0:
            r.fail("initial value must be nonnegative", "value", "initial")
    if kind == "random":
        init.low = r.get(init_t, "low", "initial", float, 0.0)
        init.high = r.get(init_t, "high", "initial", float, 1.0)
        if not 0 <= init.low < init.high:
            r.fail("random range needs 0 <= low < high", "low", "initial")
    if kind == "impulse":
        init.position = r.int_list(init_t, "position", "initial")
        init.velocity = r.get(init_t, "velocity", "initial", int, required=True)
        if len(init.position) != lat.d or not all(0 <= c < n for c, n in zip(init.position, lat.extents)):
            r.fail(f"impulse position {init.position} is not a grid point", "position", "initial")
        if not 0 <= init.velocity < lat.q:
            r.fail(f"velocity index must lie in [0, {lat.q - 1}]", "velocity", "initial")
        if geom.solid(init.position):
            r.fail("impulse placed inside an obstacle", "position", "initial")
    if kind == "table":
        rows = r.get(init_t, "populations", "initial", list, required=True)
        for row in rows:
            if (not isinstance(row, list) or len(row) != lat.d + 2
                    or not all(isinstance(v, int) for v in row[:-1])
                    or not isinstance(row[-1], (int, float))):
                r.fail(f"population rows are [x_1..x_{lat.d}, velocity, value]; got {row!r}",
                       "populations", "initial")
            x, i, value = tuple(row[: lat.d]), row[lat.d], float(row[-1])
            if not all(0 <= c < n for c, n in zip(x, lat.extents)) or not 0 <= i < lat.q or value < 0:
                r.fail(f"population row {row!r} out of range", "populations", "initial")
            if geom.solid(x) and value:
                r.fail(f"population row {row!r} lies inside an obstacle", "populations", "initial")
            init.populations.append((x, i, value))

    run = data.get("run", {})
    cfg = RunConfig(extents=extents, obstacles=obstacles, initial=init)
    cfg.timesteps = r.get(run, "timesteps", "run", int, 1)
    if cfg.timesteps < 0:
        r.fail("timesteps must be >= 0", "timesteps", "run")
    cfg.mode = r.get(run, "mode", "run", str, "observable")
    if cfg.mode not in MODES:
        r.fail(f"unknown mode {cfg.mode!r}; choose from {MODES}", "mode", "run")
    cfg.shots = r.get(run, "shots", "run", int, None)
    if cfg.shots is not None and cfg.shots < 1:
        r.fail("shots must be >= 1", "shots", "run")
    cfg.seed = r.get(run, "seed", "run", int, 0)
    if cfg.seed < 0:
        r.fail("seed must be nonnegative", "seed", "run")
    cfg.compare = r.get(run, "compare", "run", bool, False)
    cfg.out = r.get(run, "out", "run", str, "results")

    if cfg.initial_field().total_mass() <= 0:
        raise ConfigError("initial field has zero total mass", _locate(text, "initial"), source)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def check_qubit_budget(cfg: RunConfig) -> int:
    n = RegisterLayout(LatticeDescriptor(cfg.extents)).num_qubits
    if n > QUBIT_BUDGET:
        raise ConfigError(
            f"configuration needs {n} qubits ({16 << n} bytes of amplitudes); "
            f"the simulator is capped at {QUBIT_BUDGET}"
        )
    return n
