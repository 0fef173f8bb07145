"""Quantum momentum exchange: force from a diagonal observable or from two ancillae.

Both routes measure the populations that cross a boundary link in the
current step.  The observable acts on the pre-stream state at the fluid side
of each link; the ancilla route flags the same populations after streaming,
when they sit inside the obstacle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .circuits import QuantumFlowState, RegisterLayout, TimestepCircuit, momentum_flag_gates
from .lattice import DomainGeometry, boundary_links
from .statevector import DiagonalObservable, ancilla_probability, apply_circuit, expectation, sample_shots

Mode = Literal["observable", "ancilla", "shots"]
MODES: tuple[str, ...] = ("observable", "ancilla", "shots")


@dataclass(frozen=True)
class ForceMeasurementConfig:
    mode: Mode = "observable"
    shots: int | None = None
    seed: int = 0
    epsilon: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown measurement mode {self.mode!r}; choose from {MODES}")
        if self.mode == "shots" and (self.shots is None or self.shots < 1):
            raise ValueError("shots mode needs a shot count M >= 1")


@dataclass
class ForceVector:
    components: np.ndarray
    stderr: np.ndarray
    p_plus: np.ndarray = field(default_factory=lambda: np.zeros(0))
    p_minus: np.ndarray = field(default_factory=lambda: np.zeros(0))


def build_observable(layout: RegisterLayout, geometry: DomainGeometry, j: int, sign: int) -> DiagonalObservable:
    """Diagonal with entry 2 on every boundary link whose velocity has ``(e_i)_j == sign``."""
    if not 0 <= j < layout.d:
        raise ValueError(f"dimension index {j} out of range for d={layout.d}")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    vel = layout.lattice.velocities
    idx = [layout.basis_index(link.x_f, link.i) for link in boundary_links(geometry) if vel[link.i][j] == sign]
    return DiagonalObservable(layout.num_qubits, np.array(idx, dtype=np.int64), np.full(len(idx), 2.0))


def build_observables(layout: RegisterLayout, geometry: DomainGeometry) -> dict[tuple[int, int], DiagonalObservable]:
    return {(j, s): build_observable(layout, geometry, j, s) for j in range(layout.d) for s in (1, -1)}


def measure_force_observable(state: QuantumFlowState, geometry: DomainGeometry,
                             observables: dict[tuple[int, int], DiagonalObservable] | None = None) -> ForceVector:
    """Force from the 2d per-direction observables on the pre-stream state."""
    layout = state.layout
    observables = observables or build_observables(layout, geometry)
    force = np.array([
        state.total_mass * (expectation(state.amplitudes, observables[j, 1])
                            - expectation(state.amplitudes, observables[j, -1]))
        for j in range(layout.d)
    ])
    return ForceVector(force, np.zeros(layout.d))


def flag_momentum_ancillae(state: QuantumFlowState, j: int) -> QuantumFlowState:
    """Toggle a_o+ / a_o- on in-object states moving along +/- axis ``j``.

    Call at the tap point (after the object flag is set); a second call undoes it.
    """
    apply_circuit(state.amplitudes, momentum_flag_gates(state.layout, j))
    return state


def measure_force_ancilla(state: QuantumFlowState, config: ForceMeasurementConfig | None = None,
                          step: int = 0) -> ForceVector:
    """Force from ``P[a_o+ = 1] - P[a_o- = 1]`` for each axis, state left unchanged.

    The state must be at the tap point.  In shots mode each ancilla is sampled
    with its own batch of ``M`` shots; ``step`` decorrelates seeds across a run.
    """
    config = config or ForceMeasurementConfig("ancilla")
    layout = state.layout
    d = layout.d
    force, err = np.zeros(d), np.zeros(d)
    p_plus, p_minus = np.zeros(d), np.zeros(d)
    seeds = np.random.SeedSequence([config.seed, step]).spawn(2 * d)
    for j in range(d):
        flag_momentum_ancillae(state, j)
        try:
            probs = []
            for k, qubit in enumerate((layout.a_o_plus, layout.a_o_minus)):
                if config.mode == "shots":
                    counts = sample_shots(state.amplitudes, [qubit], config.shots, seeds[2 * j + k])
                    probs.append(counts.get((1,), 0) / config.shots)
                else:
                    probs.append(ancilla_probability(state.amplitudes, qubit, 1))
        finally:
            flag_momentum_ancillae(state, j)
        p_plus[j], p_minus[j] = probs
        force[j] = 2.0 * state.total_mass * (p_plus[j] - p_minus[j])
        if config.mode == "shots":
            err[j] = 2.0 * state.total_mass * math.sqrt(
                sum(p * (1.0 - p) for p in probs) / config.shots
            )
    return ForceVector(force, err, p_plus, p_minus)


@dataclass
class StepResult:
    force: ForceVector
    observable_force: np.ndarray
    ancilla_force: ForceVector


def measured_timestep(state: QuantumFlowState, geometry: DomainGeometry, circuit: TimestepCircuit,
                      config: ForceMeasurementConfig, step: int = 0,
                      observables: dict[tuple[int, int], DiagonalObservable] | None = None) -> StepResult:
    """One timestep with both force routes taken at their tap instants.

    The observable route reads the state before streaming, the ancilla route
    at the post-stream tap after the object flag is set.
    """
    observable = measure_force_observable(state, geometry, observables).components
    apply_circuit(state.amplitudes, circuit.before_tap())
    ancilla_exact = measure_force_ancilla(state, ForceMeasurementConfig("ancilla"), step)
    if config.mode == "shots":
        reported = measure_force_ancilla(state, config, step)
    elif config.mode == "ancilla":
        reported = ancilla_exact
    else:
        reported = ForceVector(observable, np.zeros(len(observable)), ancilla_exact.p_plus, ancilla_exact.p_minus)
    apply_circuit(state.amplitudes, circuit.after_tap())
    return StepResult(reported, observable, ancilla_exact)


@dataclass(frozen=True)
class ObservableSparsity:
    j: int
    sign: int
    nonzeros: int
    dimension: int

    @property
    def ratio(self) -> float:
        return self.nonzeros / self.dimension


def nonzero_fraction_report(geometry: DomainGeometry, layout: RegisterLayout | None = None) -> list[ObservableSparsity]:
    """Nonzero count of each per-direction observable against the position-velocity dimension.

    Ancillae are excluded from the dimension; they do not carry density.
    """
    layout = layout or RegisterLayout(geometry.lattice)
    dim = 1 << (layout.n_g + layout.n_v)
    return [
        ObservableSparsity(j, s, obs.nnz, dim)
        for (j, s), obs in build_observables(layout, geometry).items()
    ]


def format_sparsity(rows: list[ObservableSparsity]) -> str:
    lines = [f"{'axis':>4} {'sign':>4} {'nonzeros':>9} {'dimension':>10} {'ratio':>12}"]
    for r in rows:
        lines.append(f"{r.j + 1:>4} {'+' if r.sign > 0 else '-':>4} {r.nonzeros:>9} {r.dimension:>10} {r.ratio:>12.4e}")
    return "\n".join(lines)
