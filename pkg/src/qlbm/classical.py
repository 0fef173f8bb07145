"""Classical lattice-Boltzmann reference: streaming, bounce-back, BGK and MEM force.

Populations are stored as an array ``f`` of shape ``(q, N_1, ..., N_d)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .lattice import DomainGeometry, LatticeDescriptor, boundary_links

# 1D weights of the D1Q3 stencil; DdQ(3^d) weights are products over axes.
_WEIGHTS_1D = {0: 2.0 / 3.0, 1: 1.0 / 6.0, -1: 1.0 / 6.0}
VELOCITY_GUARD = 0.3


class OracleError(RuntimeError):
    """A classical update hit a state the geometry invariants should exclude."""


@dataclass(frozen=True)
class CollisionParams:
    tau: float = 1.0
    dt: float = 1.0
    enabled: bool = True

    def __post_init__(self) -> None:
        if self.enabled and not self.tau > 0.5:
            raise ValueError(f"BGK relaxation time tau={self.tau} must exceed 0.5")
        if self.dt != 1.0:
            raise ValueError("only unit timesteps are supported")


@dataclass(frozen=True)
class ClassicalFlowField:
    geometry: DomainGeometry
    f: np.ndarray
    t: int = 0

    def __post_init__(self) -> None:
        lat = self.geometry.lattice
        expected = (lat.q, *lat.extents)
        if self.f.shape != expected:
            raise ValueError(f"population array has shape {self.f.shape}, expected {expected}")

    @classmethod
    def zeros(cls, geometry: DomainGeometry) -> ClassicalFlowField:
        lat = geometry.lattice
        return cls(geometry, np.zeros((lat.q, *lat.extents)))

    @property
    def lattice(self) -> LatticeDescriptor:
        return self.geometry.lattice

    def total_mass(self) -> float:
        return float(np.sum(self.f))

    def with_f(self, f: np.ndarray, dt: int = 0) -> ClassicalFlowField:
        return replace(self, f=f, t=self.t + dt)


def lattice_weights(lattice: LatticeDescriptor) -> np.ndarray:
    return np.array([np.prod([_WEIGHTS_1D[int(c)] for c in e]) for e in lattice.velocities])


def _roll(a: np.ndarray, e: np.ndarray) -> np.ndarray:
    return np.roll(a, shift=tuple(int(c) for c in e), axis=tuple(range(a.ndim)))


def stream(field: ClassicalFlowField) -> ClassicalFlowField:
    """Periodic shift of every population along its velocity."""
    lat = field.lattice
    out = np.empty_like(field.f)
    for i, e in enumerate(lat.velocities):
        out[i] = _roll(field.f[i], e)
    return field.with_f(out, dt=1)


def bounce_back(field: ClassicalFlowField) -> ClassicalFlowField:
    """Send populations that streamed into a solid cell back to their origin, reversed.

    Must directly follow :func:`stream`; the timestep counter is not advanced.
    """
    geom = field.geometry
    if not geom.obstacles:
        return field
    lat = geom.lattice
    solid = geom.solid_mask()
    f = field.f.copy()
    captured = np.where(solid, f, 0.0)
    f[:, solid] = 0.0
    for i, e in enumerate(lat.velocities):
        if not np.any(captured[i]):
            continue
        if i == 0:
            raise OracleError("rest population found inside an obstacle")
        returned = _roll(captured[i], -e)
        if np.any(returned[solid]):
            raise OracleError(f"population with velocity {tuple(e)} is more than one step inside an obstacle")
        f[lat.opposites[i]] += returned
    return field.with_f(f)


def equilibrium(rho: float, u, lattice: LatticeDescriptor) -> np.ndarray:
    """Second-order equilibrium populations for one cell."""
    u = np.asarray(u, dtype=float)
    if rho < 0:
        raise ValueError(f"negative density {rho}")
    if np.linalg.norm(u) > VELOCITY_GUARD:
        raise ValueError(f"|u|={np.linalg.norm(u):.3g} exceeds the low-Mach guard {VELOCITY_GUARD}")
    return _equilibrium_field(np.asarray(float(rho)), u.reshape(-1), lattice)


def _equilibrium_field(rho: np.ndarray, u: np.ndarray, lattice: LatticeDescriptor) -> np.ndarray:
    # rho: shape S, u: shape (d, *S) -> (q, *S)
    w = lattice_weights(lattice)
    e = lattice.velocities.astype(float)
    eu = np.tensordot(e, u, axes=(1, 0))
    uu = np.sum(u * u, axis=0)
    w = w.reshape((-1,) + (1,) * rho.ndim)
    return w * rho * (1.0 + 3.0 * eu + 4.5 * eu**2 - 1.5 * uu)


def bgk_collide(field: ClassicalFlowField, params: CollisionParams) -> ClassicalFlowField:
    """Relax fluid cells toward equilibrium: ``f* = f - (dt/tau) (f - f_eq)``."""
    if not params.enabled:
        return field
    lat = field.lattice
    f = field.f
    rho = f.sum(axis=0)
    mom = np.tensordot(lat.velocities.astype(float).T, f, axes=(1, 0))
    safe = np.where(rho > 0, rho, 1.0)
    u = mom / safe
    feq = _equilibrium_field(rho, u, lat)
    out = f - (params.dt / params.tau) * (f - feq)
    keep = field.geometry.solid_mask() | (rho <= 0)
    out[:, keep] = f[:, keep]
    return field.with_f(out)


def oracle_step(field: ClassicalFlowField, params: CollisionParams | None = None) -> ClassicalFlowField:
    if params is not None:
        field = bgk_collide(field, params)
    return bounce_back(stream(field))


def mem_force(field: ClassicalFlowField) -> np.ndarray:
    """Momentum-exchange force summed over boundary links of the current field.

    ``F_j = sum over links (x_f, i) of 2 (e_i)_j f_i(x_f)``, evaluated on the
    pre-stream populations.
    """
    lat = field.lattice
    force = np.zeros(lat.d)
    for link in boundary_links(field.geometry):
        force += 2.0 * lat.velocities[link.i] * field.f[(link.i, *link.x_f)]
    return force
