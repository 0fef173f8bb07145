"""A small exact statevector simulator with the gate set the QLBM circuits need.

Conventions
-----------
* Qubit ``k`` is bit ``k`` of the basis-state index (qubit 0 is least significant).
* Amplitude arrays have the basis index on the last axis; any leading axes are
  treated as a batch of independent states.
* A *register* is a tuple of qubits listed most-significant first.  The QFT
  acts on a register without bit reversal: Fourier index ``y`` is stored with
  the same significance as the computational value ``x``.
* Controls are ``(qubit, polarity)`` pairs; polarity 0 is a negative control.
"""
from __future__ import annotations

import logging
import math
import time
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

Control = tuple[int, int]


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    """One primitive operation.

    kind is ``"mcx"`` (targets = ``(target,)``), ``"phase"`` (targets =
    ``(qubit,)``, multiplies the ``|1>`` component by ``exp(i angle)``),
    ``"qft"`` or ``"iqft"`` (targets = register, MSB first).  ``tag`` marks the
    composite block a gate belongs to (``"shift"``, ``"compare"``, ...).
    """

    kind: str
    targets: tuple[int, ...]
    controls: tuple[Control, ...] = ()
    angle: float = 0.0
    tag: str = ""

    def qubits(self) -> tuple[int, ...]:
        return tuple(q for q, _ in self.controls) + self.targets


def _check_distinct(qubits: Iterable[int]) -> None:
    qs = list(qubits)
    if len(set(qs)) != len(qs):
        raise CircuitError(f"duplicate qubit indices in {qs}")


def mcx(target: int, controls: Sequence[Control] = (), tag: str = "") -> Gate:
    g = Gate("mcx", (int(target),), tuple((int(q), int(p)) for q, p in controls), tag=tag)
    _check_distinct(g.qubits())
    return g


def phase(qubit: int, angle: float, controls: Sequence[Control] = (), tag: str = "") -> Gate:
    g = Gate("phase", (int(qubit),), tuple((int(q), int(p)) for q, p in controls), float(angle), tag)
    _check_distinct(g.qubits())
    return g


def qft(register: Sequence[int], inverse: bool = False, tag: str = "") -> Gate:
    g = Gate("iqft" if inverse else "qft", tuple(int(q) for q in register), tag=tag)
    _check_distinct(g.targets)
    return g


# -- kernels ---------------------------------------------------------------


def _num_qubits(amplitudes: np.ndarray) -> int:
    size = amplitudes.shape[-1]
    n = size.bit_length() - 1
    if 1 << n != size:
        raise CircuitError(f"amplitude axis of length {size} is not a power of two")
    return n


def _tensor(amplitudes: np.ndarray, n: int) -> np.ndarray:
    t = amplitudes.reshape(amplitudes.shape[:-1] + (2,) * n)
    if not np.shares_memory(t, amplitudes):
        raise CircuitError("amplitude array must be contiguous")
    return t


def _axis(amplitudes: np.ndarray, n: int, qubit: int) -> int:
    if not 0 <= qubit < n:
        raise CircuitError(f"qubit {qubit} out of range for {n} qubits")
    return amplitudes.ndim - 1 + (n - 1 - qubit)


def _index(amplitudes: np.ndarray, n: int, fixed: dict[int, int]) -> tuple:
    idx: list = [slice(None)] * (amplitudes.ndim - 1 + n)
    for q, v in fixed.items():
        idx[_axis(amplitudes, n, q)] = v
    return tuple(idx)


def _apply_mcx(amplitudes: np.ndarray, n: int, gate: Gate) -> None:
    t = _tensor(amplitudes, n)
    fixed = dict(gate.controls)
    target = gate.targets[0]
    fixed[target] = 0
    i0 = _index(amplitudes, n, fixed)
    fixed[target] = 1
    i1 = _index(amplitudes, n, fixed)
    tmp = t[i0].copy()
    t[i0] = t[i1]
    t[i1] = tmp


def _apply_phase(amplitudes: np.ndarray, n: int, gate: Gate) -> None:
    t = _tensor(amplitudes, n)
    fixed = dict(gate.controls)
    fixed[gate.targets[0]] = 1
    t[_index(amplitudes, n, fixed)] *= np.exp(1j * gate.angle)


def _apply_qft(amplitudes: np.ndarray, n: int, gate: Gate) -> None:
    register = gate.targets
    m = len(register)
    lead = amplitudes.ndim - 1
    # Contiguous registers map onto a plain reshape; others need an axis permutation.
    lo = min(register)
    if list(register) == list(range(lo + m - 1, lo - 1, -1)):
        view = amplitudes.reshape(amplitudes.shape[:-1] + (1 << (n - lo - m), 1 << m, 1 << lo))
        axis = -2
        transform = np.fft.ifft if gate.kind == "qft" else np.fft.fft
        view[...] = transform(view, axis=axis, norm="ortho")
        return
    t = _tensor(amplitudes, n)
    src = [_axis(amplitudes, n, q) for q in register]
    dest = list(range(lead + n - m, lead + n))
    moved = np.moveaxis(t, src, dest)
    flat = moved.reshape(moved.shape[: lead + n - m] + (1 << m,))
    transform = np.fft.ifft if gate.kind == "qft" else np.fft.fft
    flat = transform(flat, axis=-1, norm="ortho")
    moved[...] = flat.reshape(moved.shape)


_KERNELS = {"mcx": _apply_mcx, "phase": _apply_phase, "qft": _apply_qft, "iqft": _apply_qft}


def apply_circuit(amplitudes: np.ndarray, gates: Iterable[Gate]) -> np.ndarray:
    """Apply gates in order, in place; returns ``amplitudes`` for chaining."""
    n = _num_qubits(amplitudes)
    trace = log.isEnabledFor(logging.DEBUG)
    for gate in gates:
        start = time.perf_counter() if trace else 0.0
        _KERNELS[gate.kind](amplitudes, n, gate)
        if trace:
            log.debug(
                "%s tag=%s controls=%s targets=%s angle=%.6g %.3fms",
                gate.kind, gate.tag, gate.controls, gate.targets, gate.angle,
                1e3 * (time.perf_counter() - start),
            )
    return amplitudes


def zero_state(num_qubits: int) -> np.ndarray:
    a = np.zeros(1 << num_qubits, dtype=np.complex128)
    a[0] = 1.0
    return a


# -- composite builders ----------------------------------------------------


def add_constant_gates(register: Sequence[int], k: int, controls: Sequence[Control] = (),
                       tag: str = "add") -> list[Gate]:
    """``|r> -> |r + k mod 2^m>`` on the register, controlled; QFT, phases, inverse QFT."""
    m = len(register)
    size = 1 << m
    gates = [qft(register, tag=tag)]
    for b in range(m):
        turns = (k * (1 << b)) % size
        if turns:
            gates.append(phase(register[m - 1 - b], 2.0 * math.pi * turns / size, controls, tag=tag))
    gates.append(qft(register, inverse=True, tag=tag))
    return gates


def shift_gates(register: Sequence[int], direction: int, controls: Sequence[Control] = ()) -> list[Gate]:
    if direction not in (1, -1):
        raise CircuitError(f"shift direction must be +1 or -1, got {direction}")
    return add_constant_gates(register, direction, controls, tag="shift")


def less_than_gates(register: Sequence[int], k: int, target: int) -> list[Gate]:
    """Flip ``target`` on basis states whose register value is below ``k``.

    The target is borrowed as the sign bit of an (m+1)-qubit register:
    subtracting ``k`` there flips it exactly when ``r < k``, and adding ``k``
    back on the m-qubit register alone restores ``r`` without touching it.
    """
    m = len(register)
    if not 0 <= k <= 1 << m:
        raise CircuitError(f"comparison constant {k} outside [0, {1 << m}]")
    if k == 0:
        return []
    if k == 1 << m:
        return [mcx(target, tag="compare")]
    wide = (target, *register)
    return add_constant_gates(wide, -k, tag="compare") + add_constant_gates(register, k, tag="compare")


def range_flag_gates(register: Sequence[int], lo: int, hi: int, target: int) -> list[Gate]:
    """Flip ``target`` where ``lo <= r <= hi``.

    Single values use one MCX with a control pattern; wider ranges use
    ``[r <= hi] xor [r < lo]``, which equals the range test because lo <= hi.
    """
    m = len(register)
    if not 0 <= lo <= hi < 1 << m:
        raise CircuitError(f"malformed range [{lo}, {hi}] for a {m}-qubit register")
    _check_distinct((*register, target))
    if lo == hi:
        return [mcx(target, equality_controls(register, lo), tag="compare")]
    return less_than_gates(register, hi + 1, target) + less_than_gates(register, lo, target)


def equality_controls(register: Sequence[int], value: int) -> list[Control]:
    m = len(register)
    return [(q, (value >> (m - 1 - b)) & 1) for b, q in enumerate(register)]


# -- operation-level API ---------------------------------------------------


def apply_mcx(amplitudes: np.ndarray, controls: Sequence[Control], target: int) -> np.ndarray:
    return apply_circuit(amplitudes, [mcx(target, controls)])


def controlled_shift(amplitudes: np.ndarray, register: Sequence[int], direction: int,
                     controls: Sequence[Control] = ()) -> np.ndarray:
    return apply_circuit(amplitudes, shift_gates(register, direction, controls))


def flag_in_range(amplitudes: np.ndarray, register: Sequence[int], lo: int, hi: int,
                  target: int) -> np.ndarray:
    return apply_circuit(amplitudes, range_flag_gates(register, lo, hi, target))


def apply_qft(amplitudes: np.ndarray, register: Sequence[int], inverse: bool = False) -> np.ndarray:
    return apply_circuit(amplitudes, [qft(register, inverse)])


@dataclass(frozen=True)
class DiagonalObservable:
    """Real diagonal operator stored as sorted (index, value) pairs."""

    num_qubits: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        order = np.argsort(self.indices, kind="stable")
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64)[order])
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float)[order])

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.values))

    def dense(self) -> np.ndarray:
        diag = np.zeros(1 << self.num_qubits)
        diag[self.indices] = self.values
        return diag


def expectation(amplitudes: np.ndarray, obs: DiagonalObservable) -> float:
    probs = np.abs(amplitudes[obs.indices]) ** 2
    return float(math.fsum(obs.values * probs))


def marginal_probabilities(amplitudes: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Probabilities over the listed qubits, outcome index MSB = ``qubits[0]``."""
    n = _num_qubits(amplitudes)
    probs = (np.abs(amplitudes) ** 2).reshape((2,) * n)
    axes = [n - 1 - q for q in qubits]
    others = tuple(a for a in range(n) if a not in axes)
    marg = probs.sum(axis=others)
    kept = sorted(axes)
    marg = np.moveaxis(marg, [kept.index(a) for a in axes], list(range(len(axes))))
    return marg.reshape(-1)


def ancilla_probability(amplitudes: np.ndarray, qubit: int, outcome: int = 1) -> float:
    n = _num_qubits(amplitudes)
    t = (np.abs(amplitudes) ** 2).reshape((2,) * n)
    return float(t[_index(t.reshape(-1), n, {qubit: outcome})].sum())


def sample_shots(amplitudes: np.ndarray, qubits: Sequence[int], shots: int,
                 seed: int | np.random.SeedSequence | None = None) -> Counter:
    """Draw measurement outcomes of ``qubits``; keys are bit tuples in ``qubits`` order."""
    if shots < 1:
        raise ValueError("shot count must be at least 1")
    probs = marginal_probabilities(amplitudes, qubits)
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(shots, probs)
    m = len(qubits)
    return Counter({
        tuple((k >> (m - 1 - b)) & 1 for b in range(m)): int(c)
        for k, c in enumerate(counts) if c
    })


def gate_counts(gates: Iterable[Gate]) -> Counter:
    """Tally by gate family: ``X``, ``MCX<k>`` by control arity, QFT blocks, shifts."""
    counts: Counter = Counter()
    for g in gates:
        if g.kind == "mcx":
            counts["X" if not g.controls else f"MCX{len(g.controls)}"] += 1
        elif g.kind == "phase":
            counts[f"CP{len(g.controls)}" if g.controls else "P"] += 1
        else:
            counts[g.kind.upper()] += 1
            if g.kind == "qft" and g.tag == "shift":
                counts["shift"] += 1
    return counts
