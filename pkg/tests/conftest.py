import numpy as np
import pytest

from qlbm.classical import ClassicalFlowField
from qlbm.lattice import Box, DomainGeometry, GeometryError, LatticeDescriptor

# Lines reported by the acceptance module, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(':'))):
            terminalreporter.write_line(line)


def random_box(rng, extents, max_side=None):
    lower, upper = [], []
    for n in extents:
        side_cap = n - 2 if max_side is None else min(max_side, n - 2)
        side = int(rng.integers(1, side_cap + 1))
        lo = int(rng.integers(1, n - 1 - side + 1))
        lower.append(lo)
        upper.append(lo + side - 1)
    return Box(tuple(lower), tuple(upper))


def random_geometry(rng, extents, n_boxes=1, max_side=None, attempts=200):
    lat = LatticeDescriptor(tuple(extents))
    for _ in range(attempts):
        boxes = tuple(random_box(rng, extents, max_side) for _ in range(n_boxes))
        try:
            return DomainGeometry(lat, boxes)
        except GeometryError:
            continue
    raise RuntimeError(f"could not place {n_boxes} boxes on {extents}")


def random_field(rng, geometry):
    lat = geometry.lattice
    f = rng.random((lat.q, *lat.extents))
    f[:, geometry.solid_mask()] = 0.0
    return ClassicalFlowField(geometry, f)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def fig5_geometry():
    """D1Q3, four cells, obstacle on the third cell."""
    return DomainGeometry(LatticeDescriptor((4,)), (Box((2,), (2,)),))


def basis_images(num_qubits, gates, inputs, budget=1 << 22):
    """Push each basis index in ``inputs`` through ``gates``.

    Returns (destination index, amplitude at destination, largest stray
    amplitude) per input, batching rows so a block holds about ``budget``
    amplitudes.
    """
    from qlbm.statevector import apply_circuit

    inputs = np.asarray(inputs, dtype=np.int64)
    rows = max(1, budget >> num_qubits)
    dest, amp, stray = [], [], []
    for start in range(0, len(inputs), rows):
        chunk = inputs[start:start + rows]
        block = np.zeros((len(chunk), 1 << num_qubits), dtype=np.complex128)
        block[np.arange(len(chunk)), chunk] = 1.0
        apply_circuit(block, gates)
        mags = np.abs(block)
        d = np.argmax(mags, axis=1)
        dest.append(d)
        amp.append(block[np.arange(len(chunk)), d])
        mags[np.arange(len(chunk)), d] = 0.0
        stray.append(mags.max(axis=1))
    return np.concatenate(dest), np.concatenate(amp), np.concatenate(stray)


def tagged_images(num_qubits, gates, inputs, seed=0):
    """Map each basis input to its image in a single circuit application.

    Every input gets a distinct random amplitude; for a basis permutation the
    output holds the same amplitudes at the image positions.  Returns the
    destination per input, or raises if the output is not such a relabelling.
    """
    from qlbm.statevector import apply_circuit

    inputs = np.asarray(inputs, dtype=np.int64)
    tags = np.random.default_rng(seed).uniform(1.0, 2.0, size=len(inputs))
    amps = np.zeros(1 << num_qubits, dtype=np.complex128)
    amps[inputs] = tags
    apply_circuit(amps, gates)
    support = np.flatnonzero(np.abs(amps) > 1e-9)
    if len(support) != len(inputs):
        raise AssertionError(f"{len(inputs)} inputs spread over {len(support)} outputs")
    order_in = np.argsort(tags)
    order_out = np.argsort(np.abs(amps[support]))
    dest = np.empty(len(inputs), dtype=np.int64)
    dest[order_in] = support[order_out]
    if np.max(np.abs(amps[dest] - tags)) > 1e-10:
        raise AssertionError("output amplitudes are not a relabelling of the inputs")
    return dest
