"""QLBM timestep circuits with bounce-back boundaries on a rooted-density state.

Register layout (qubit 0 least significant)::

    [ scratch | a_o- | a_o+ | a_o | a_v^d .. a_v^1 | g^d .. g^1 | v^d vdir^d .. v^1 vdir^1 ]

Within a dimension the velocity pair is ``(v^j, vdir^j)`` with ``vdir^j`` the
lower bit.  Velocity component +1 is encoded ``10``, -1 is ``11`` and 0 is
``01``; the pattern ``00`` is never populated.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .classical import ClassicalFlowField
from .lattice import Box, DomainGeometry, LatticeDescriptor
from .statevector import (
    Control, Gate, apply_circuit, equality_controls, mcx, range_flag_gates, shift_gates,
)

# (v, vdir) bit pairs per velocity component
COMPONENT_BITS = {1: (1, 0), -1: (1, 1), 0: (0, 1)}

PHASES = (
    "set_stream_flags",
    "stream",
    "flag_object",
    "reverse_velocity",
    "return_step",
    "reset_object_flag",
    "clear_stream_flags",
)
TAP_AFTER = "flag_object"


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class RegisterLayout:
    """Qubit assignment for a lattice; all indices are distinct by construction."""

    lattice: LatticeDescriptor

    @property
    def d(self) -> int:
        return self.lattice.d

    @property
    def n_v(self) -> int:
        return 2 * self.d

    @property
    def n_g(self) -> int:
        return sum(self.lattice.position_bits)

    @property
    def n_a(self) -> int:
        # a_v per dimension, a_o, a_o+, a_o-, one range scratch bit per dimension
        return 2 * self.d + 3

    @property
    def num_qubits(self) -> int:
        return self.n_a + self.n_g + self.n_v

    def v(self, j: int) -> int:
        return 2 * j + 1

    def vdir(self, j: int) -> int:
        return 2 * j

    @cached_property
    def position(self) -> tuple[tuple[int, ...], ...]:
        """Position register of each dimension, MSB first."""
        regs = []
        offset = self.n_v
        for bits in self.lattice.position_bits:
            regs.append(tuple(range(offset + bits - 1, offset - 1, -1)))
            offset += bits
        return tuple(regs)

    def a_v(self, j: int) -> int:
        return self.n_v + self.n_g + j

    @property
    def a_o(self) -> int:
        return self.n_v + self.n_g + self.d

    @property
    def a_o_plus(self) -> int:
        return self.a_o + 1

    @property
    def a_o_minus(self) -> int:
        return self.a_o + 2

    def scratch(self, j: int) -> int:
        return self.a_o + 3 + j

    @property
    def ancillae(self) -> tuple[int, ...]:
        return tuple(range(self.n_v + self.n_g, self.num_qubits))

    @cached_property
    def velocity_codes(self) -> np.ndarray:
        """Velocity-register value of each velocity index."""
        codes = []
        for e in self.lattice.velocities:
            code = 0
            for j, c in enumerate(e):
                v, vdir = COMPONENT_BITS[int(c)]
                code |= (v << self.v(j)) | (vdir << self.vdir(j))
            codes.append(code)
        return np.array(codes, dtype=np.int64)

    def position_code(self, x: Sequence[int]) -> int:
        code = 0
        offset = 0
        for c, bits in zip(x, self.lattice.position_bits):
            code |= int(c) << offset
            offset += bits
        return code << self.n_v

    def basis_index(self, x: Sequence[int], i: int) -> int:
        return self.position_code(x) | int(self.velocity_codes[i])

    @cached_property
    def field_indices(self) -> np.ndarray:
        """Basis index of every ``(i, x)`` slot, shaped like a population array."""
        lat = self.lattice
        idx = np.zeros((lat.q, *lat.extents), dtype=np.int64)
        offset = self.n_v
        for j, (n, bits) in enumerate(zip(lat.extents, lat.position_bits)):
            shape = [1] * (lat.d + 1)
            shape[j + 1] = n
            idx = idx + (np.arange(n, dtype=np.int64) << offset).reshape(shape)
            offset += bits
        return idx + self.velocity_codes.reshape((-1,) + (1,) * lat.d)


@dataclass
class QuantumFlowState:
    layout: RegisterLayout
    amplitudes: np.ndarray
    total_mass: float

    def copy(self) -> QuantumFlowState:
        return QuantumFlowState(self.layout, self.amplitudes.copy(), self.total_mass)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def encode_rooted(field: ClassicalFlowField, layout: RegisterLayout | None = None) -> QuantumFlowState:
    """Amplitude ``sqrt(f_i(x) / sum f)`` on ``|0_anc, x, code(i)>``."""
    layout = layout or RegisterLayout(field.lattice)
    f = field.f
    if np.any(f < 0):
        raise EncodingError("densities must be nonnegative")
    mass = float(np.sum(f))
    if not mass > 0:
        raise EncodingError("total mass must be positive")
    amps = np.zeros(1 << layout.num_qubits, dtype=np.complex128)
    amps[layout.field_indices] = np.sqrt(f / mass)
    return QuantumFlowState(layout, amps, mass)


def decode(state: QuantumFlowState, geometry: DomainGeometry, atol: float = 1e-12) -> ClassicalFlowField:
    """Inverse of :func:`encode_rooted`; refuses states with populated ancillae."""
    layout = state.layout
    idx = layout.field_indices
    stray = state.amplitudes.copy()
    stray[idx] = 0.0
    worst = float(np.max(np.abs(stray))) if stray.size else 0.0
    if worst > atol:
        k = int(np.argmax(np.abs(stray)))
        raise EncodingError(
            f"amplitude {worst:.3g} on basis state {k:#x} outside the encoded subspace "
            f"(ancillae {k >> (layout.n_v + layout.n_g):#b})"
        )
    f = state.total_mass * np.abs(state.amplitudes[idx]) ** 2
    return ClassicalFlowField(geometry, f)


# -- phase builders --------------------------------------------------------


def stream_flag_gates(layout: RegisterLayout) -> list[Gate]:
    return [mcx(layout.a_v(j), [(layout.v(j), 1)], tag="stream_flag") for j in range(layout.d)]


def stream_gates(layout: RegisterLayout, extra: Sequence[Control] = ()) -> list[Gate]:
    gates: list[Gate] = []
    for j in range(layout.d):
        for direction, vdir in ((1, 0), (-1, 1)):
            controls = [*extra, (layout.a_v(j), 1), (layout.vdir(j), vdir)]
            gates += shift_gates(layout.position[j], direction, controls)
    return gates


def _box_membership(layout: RegisterLayout, bounds: Sequence[tuple[int, int]]) -> tuple[list[Gate], list[Control]]:
    """Gates computing per-axis range bits into scratch, plus the resulting controls.

    Single-value axes become equality controls directly and use no scratch.
    """
    compute: list[Gate] = []
    controls: list[Control] = []
    for j, (lo, hi) in enumerate(bounds):
        reg = layout.position[j]
        if lo == hi:
            controls += equality_controls(reg, lo)
        else:
            compute += range_flag_gates(reg, lo, hi, layout.scratch(j))
            controls.append((layout.scratch(j), 1))
    return compute, controls


def flag_object_gates(layout: RegisterLayout, geometry: DomainGeometry) -> list[Gate]:
    gates: list[Gate] = []
    for box in geometry.obstacles:
        compute, controls = _box_membership(layout, list(zip(box.lower, box.upper)))
        gates += compute + [mcx(layout.a_o, controls, tag="object_flag")] + compute[::-1]
    return gates


def reverse_velocity_gates(layout: RegisterLayout, geometry: DomainGeometry) -> list[Gate]:
    if not geometry.obstacles:
        return []
    # only moving components are reversed; a rest component must stay at 01
    return [
        mcx(layout.vdir(j), [(layout.a_o, 1), (layout.a_v(j), 1)], tag="reverse")
        for j in range(layout.d)
    ]


def return_gates(layout: RegisterLayout, geometry: DomainGeometry) -> list[Gate]:
    if not geometry.obstacles:
        return []
    return stream_gates(layout, extra=[(layout.a_o, 1)])


# Per-axis position classes of a cell next to a box, with the velocity
# condition (as an XOR of control terms on (a_v, vdir)) under which a state
# at that coordinate can only be a reflected population.
def _axis_classes(lo: int, hi: int) -> list[tuple[str, tuple[int, int], list[dict[str, int]]]]:
    away_neg = [{"a_v": 1, "vdir": 1}]
    away_pos = [{"a_v": 1, "vdir": 0}]
    classes = [("below", (lo - 1, lo - 1), away_neg), ("above", (hi + 1, hi + 1), away_pos)]
    if lo == hi:
        classes.append(("span", (lo, lo), [{"a_v": 0}]))
        return classes
    # edge rows: every velocity except the one that enters from outside the box span
    classes.append(("low_edge", (lo, lo), [{}, {"a_v": 1, "vdir": 0}]))
    classes.append(("high_edge", (hi, hi), [{}, {"a_v": 1, "vdir": 1}]))
    if hi - lo >= 2:
        classes.append(("interior", (lo + 1, hi - 1), [{}]))
    return classes


def reset_groups(layout: RegisterLayout, box: Box) -> list[tuple[tuple[str, ...], list[Gate]]]:
    """One labelled gate group per face, side-edge and corner region of ``box``."""
    per_axis = [_axis_classes(lo, hi) for lo, hi in zip(box.lower, box.upper)]
    groups = []
    for combo in itertools.product(*per_axis):
        names = tuple(c[0] for c in combo)
        if not any(name in ("below", "above") for name in names):
            continue  # inside the box
        compute, pos_controls = _box_membership(layout, [c[1] for c in combo])
        flips = []
        for terms in itertools.product(*(c[2] for c in combo)):
            controls = list(pos_controls)
            for j, term in enumerate(terms):
                if "a_v" in term:
                    controls.append((layout.a_v(j), term["a_v"]))
                if "vdir" in term:
                    controls.append((layout.vdir(j), term["vdir"]))
            flips.append(mcx(layout.a_o, controls, tag="reset"))
        groups.append((names, compute + flips + compute[::-1]))
    return groups


def reset_object_flag_gates(layout: RegisterLayout, geometry: DomainGeometry) -> list[Gate]:
    gates: list[Gate] = []
    for box in geometry.obstacles:
        for _, group in reset_groups(layout, box):
            gates += group
    return gates


def momentum_flag_gates(layout: RegisterLayout, j: int) -> list[Gate]:
    """Copy in-object entrants moving along +/- axis ``j`` into a_o+ / a_o-.

    Self-inverse; applied once to flag and once more to unflag.
    """
    base = [(layout.a_o, 1), (layout.v(j), 1)]
    return [
        mcx(layout.a_o_plus, [*base, (layout.vdir(j), 0)], tag="momentum"),
        mcx(layout.a_o_minus, [*base, (layout.vdir(j), 1)], tag="momentum"),
    ]


@dataclass(frozen=True)
class TimestepCircuit:
    """Gate lists for each phase of one collisionless timestep."""

    layout: RegisterLayout
    geometry: DomainGeometry
    phases: dict[str, list[Gate]] = field(default_factory=dict)

    @classmethod
    def build(cls, layout: RegisterLayout, geometry: DomainGeometry) -> TimestepCircuit:
        phases = {
            "set_stream_flags": stream_flag_gates(layout),
            "stream": stream_gates(layout),
            "flag_object": flag_object_gates(layout, geometry),
            "reverse_velocity": reverse_velocity_gates(layout, geometry),
            "return_step": return_gates(layout, geometry),
            "reset_object_flag": reset_object_flag_gates(layout, geometry),
            "clear_stream_flags": stream_flag_gates(layout),
        }
        return cls(layout, geometry, phases)

    def gates(self, phases: Iterable[str] = PHASES) -> list[Gate]:
        return [g for name in phases for g in self.phases[name]]

    def before_tap(self) -> list[Gate]:
        return self.gates(PHASES[: PHASES.index(TAP_AFTER) + 1])

    def after_tap(self) -> list[Gate]:
        return self.gates(PHASES[PHASES.index(TAP_AFTER) + 1:])


# -- operation-level API ---------------------------------------------------


def _run(state: QuantumFlowState, gates: list[Gate]) -> QuantumFlowState:
    apply_circuit(state.amplitudes, gates)
    return state


def set_stream_flags(state: QuantumFlowState) -> QuantumFlowState:
    return _run(state, stream_flag_gates(state.layout))


def stream_step(state: QuantumFlowState) -> QuantumFlowState:
    return _run(state, stream_gates(state.layout))


def flag_object(state: QuantumFlowState, geometry: DomainGeometry) -> QuantumFlowState:
    return _run(state, flag_object_gates(state.layout, geometry))


def reverse_velocity(state: QuantumFlowState, geometry: DomainGeometry) -> QuantumFlowState:
    return _run(state, reverse_velocity_gates(state.layout, geometry))


def return_step(state: QuantumFlowState, geometry: DomainGeometry) -> QuantumFlowState:
    return _run(state, return_gates(state.layout, geometry))


def reset_object_flag(state: QuantumFlowState, geometry: DomainGeometry) -> QuantumFlowState:
    return _run(state, reset_object_flag_gates(state.layout, geometry))


def timestep(state: QuantumFlowState, geometry: DomainGeometry,
             circuit: TimestepCircuit | None = None) -> QuantumFlowState:
    """Advance one collisionless step with bounce-back; ancillae end at zero."""
    circuit = circuit or TimestepCircuit.build(state.layout, geometry)
    return _run(state, circuit.gates())
