"""Lattice geometry: DdQq velocity sets, obstacle boxes and boundary links.

Velocity ordering (fixed, golden-tested):

* index 0 is the rest vector;
* then the axis vectors, positive directions first in dimension order, then
  the negative ones -- for D2Q9 this is ``(1,0), (0,1), (-1,0), (0,-1)``;
* then vectors with 2, 3, ... nonzero components.  Within such a group the
  supports are taken in ``itertools.combinations`` order and, per support, the
  sign patterns follow a reflected Gray code in which the first dimension of
  the support flips first.  For D2Q9 this yields
  ``(1,1), (-1,1), (-1,-1), (1,-1)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


class GeometryError(ValueError):
    """Raised for lattices or obstacle layouts that violate the grid invariants."""


def build_velocity_set(d: int) -> np.ndarray:
    """Return the ``(3**d, d)`` integer array of DdQ(3^d) velocities."""
    if d not in (1, 2, 3):
        raise GeometryError(f"unsupported dimension d={d}; expected 1, 2 or 3")

    vectors: list[tuple[int, ...]] = [(0,) * d]
    for sign in (1, -1):
        for j in range(d):
            e = [0] * d
            e[j] = sign
            vectors.append(tuple(e))
    for k in range(2, d + 1):
        for support in itertools.combinations(range(d), k):
            for n in range(2**k):
                gray = n ^ (n >> 1)
                e = [0] * d
                for b, j in enumerate(support):
                    e[j] = -1 if (gray >> b) & 1 else 1
                vectors.append(tuple(e))
    return np.array(vectors, dtype=np.int64)


def _opposites(velocities: np.ndarray) -> np.ndarray:
    lookup = {tuple(v): i for i, v in enumerate(velocities)}
    return np.array([lookup[tuple(-v)] for v in velocities], dtype=np.int64)


@dataclass(frozen=True)
class LatticeDescriptor:
    """Grid extents plus the DdQq velocity set.

    ``extents[j]`` is the number of cells along dimension ``j``; each must be a
    power of two so that a position register maps onto binary coordinates.
    """

    extents: tuple[int, ...]
    velocities: np.ndarray = field(init=False, repr=False, compare=False)
    opposites: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        extents = tuple(int(n) for n in self.extents)
        object.__setattr__(self, "extents", extents)
        velocities = build_velocity_set(len(extents))
        for n in extents:
            if n < 2 or n & (n - 1):
                raise GeometryError(f"grid extent {n} is not a power of two >= 2")
        velocities.setflags(write=False)
        opp = _opposites(velocities)
        opp.setflags(write=False)
        object.__setattr__(self, "velocities", velocities)
        object.__setattr__(self, "opposites", opp)

    @property
    def d(self) -> int:
        return len(self.extents)

    @property
    def q(self) -> int:
        return len(self.velocities)

    @property
    def position_bits(self) -> tuple[int, ...]:
        return tuple(n.bit_length() - 1 for n in self.extents)

    @property
    def num_cells(self) -> int:
        return int(np.prod(self.extents))

    def opposite(self, i: int) -> int:
        if not 0 <= i < self.q:
            raise IndexError(f"velocity index {i} out of range for q={self.q}")
        return int(self.opposites[i])

    def cells(self) -> Iterator[tuple[int, ...]]:
        """All grid points in lexicographic order."""
        return itertools.product(*(range(n) for n in self.extents))


@dataclass(frozen=True)
class Box:
    """Axis-aligned obstacle with inclusive corner coordinates."""

    lower: tuple[int, ...]
    upper: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "lower", tuple(int(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(int(v) for v in self.upper))
        if len(self.lower) != len(self.upper):
            raise GeometryError("box corners have different dimensions")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise GeometryError(f"box lower corner {self.lower} exceeds upper {self.upper}")

    def contains(self, x: Sequence[int]) -> bool:
        return all(lo <= c <= hi for c, lo, hi in zip(x, self.lower, self.upper))

    def separated_from(self, other: Box) -> bool:
        # at least one fluid cell between the two boxes along some axis
        return any(
            a_lo > b_hi + 1 or b_lo > a_hi + 1
            for a_lo, a_hi, b_lo, b_hi in zip(self.lower, self.upper, other.lower, other.upper)
        )


@dataclass(frozen=True)
class BoundaryLink:
    x_f: tuple[int, ...]
    i: int


@dataclass(frozen=True)
class DomainGeometry:
    """Periodic grid with a set of non-adjacent box obstacles."""

    lattice: LatticeDescriptor
    obstacles: tuple[Box, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        d = self.lattice.d
        for k, box in enumerate(self.obstacles):
            if len(box.lower) != d:
                raise GeometryError(f"obstacle {k} has dimension {len(box.lower)}, lattice has {d}")
            for j, (lo, hi, n) in enumerate(zip(box.lower, box.upper, self.lattice.extents)):
                if lo < 1 or hi > n - 2:
                    raise GeometryError(
                        f"obstacle {k} spans [{lo}, {hi}] along axis {j}; boxes must keep one "
                        f"fluid cell to the periodic seam, i.e. stay within [1, {n - 2}]"
                    )
        for a, b in itertools.combinations(range(len(self.obstacles)), 2):
            if not self.obstacles[a].separated_from(self.obstacles[b]):
                raise GeometryError(f"obstacles {a} and {b} touch; keep at least one fluid cell between them")

    def solid(self, x: Sequence[int]) -> bool:
        return any(box.contains(x) for box in self.obstacles)

    def solid_mask(self) -> np.ndarray:
        """Boolean array of shape ``extents``; True on obstacle cells."""
        mask = np.zeros(self.lattice.extents, dtype=bool)
        for box in self.obstacles:
            mask[tuple(slice(lo, hi + 1) for lo, hi in zip(box.lower, box.upper))] = True
        return mask

    def mirrored(self, axis: int) -> DomainGeometry:
        n = self.lattice.extents[axis]
        boxes = []
        for box in self.obstacles:
            lo, hi = list(box.lower), list(box.upper)
            lo[axis], hi[axis] = n - 1 - box.upper[axis], n - 1 - box.lower[axis]
            boxes.append(Box(tuple(lo), tuple(hi)))
        return DomainGeometry(self.lattice, tuple(boxes))


def boundary_links(geometry: DomainGeometry) -> list[BoundaryLink]:
    """Fluid-cell/velocity pairs whose one-step displacement lands in a solid cell.

    Ordered lexicographically by ``x_f`` and then by velocity index.  Positions
    are not wrapped: the seam margin guarantees that every neighbour of a box
    lies inside the grid.
    """
    if not geometry.obstacles:
        return []
    lat = geometry.lattice
    mask = geometry.solid_mask()
    links: list[BoundaryLink] = []
    for x in lat.cells():
        if mask[x]:
            continue
        for i, e in enumerate(lat.velocities):
            y = tuple(int(c) for c in np.add(x, e))
            if all(0 <= c < n for c, n in zip(y, lat.extents)) and mask[y]:
                links.append(BoundaryLink(x, i))
    return links
