"""Quantum internal energy, quantum potential, stress tensor and the trajectory force law.

Two routes compute the quantum potential:

* the density route works with ``rho`` and its position derivatives, with a
  density floor in every denominator;
* the log-density route works with ``log rho = log rho0 - log J``.  It is
  algebraically identical, needs no floor for strictly positive ``rho0``, and
  is what the time integrator uses.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .kinematics import (DeformationTensors, FlowState, deformation_from_positions, div_q,
                         grad_q, jacobian_and_cofactor)
from .lattice import LabelGrid, derivative

REL_DENSITY_FLOOR = 1e-8
TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class PotentialSpec:
    """External potential ``V(q, t)``.

    kinds
        ``free``            V = 0
        ``harmonic``        V = 1/2 m omega_i^2 (q_i - center_i)^2, times ``time_coeffs`` polynomial
        ``polynomial``      V = tau(t) * sum_i sum_k coeffs[k] q_i^k
        ``inverse_square``  V = tau(t) * g / |q|^2
    ``time_coeffs`` are the coefficients of the scalar time factor ``tau(t)``
    in increasing powers; the default ``(1,)`` is static.
    """

    kind: str = "free"
    params: dict = field(default_factory=dict)
    time_coeffs: tuple[float, ...] = (1.0,)

    KINDS = ("free", "harmonic", "polynomial", "inverse_square")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigurationError(f"unknown potential kind {self.kind!r}")
        if self.kind == "harmonic" and float(np.min(self.params.get("omega", 1.0))) <= 0:
            raise ConfigurationError("harmonic omega must be positive")

    @property
    def time_dependent(self) -> bool:
        return any(c != 0 for c in self.time_coeffs[1:])

    def _tau(self, t):
        return sum(c * t ** k for k, c in enumerate(self.time_coeffs))

    def _dtau(self, t):
        return sum(k * c * t ** (k - 1) for k, c in enumerate(self.time_coeffs) if k)

    def _omega_center(self, dim):
        omega = np.broadcast_to(np.asarray(self.params.get("omega", 1.0), float), (dim,))
        center = np.broadcast_to(np.asarray(self.params.get("center", 0.0), float), (dim,))
        return omega, center

    def _static(self, q):
        dim = q.shape[0]
        if self.kind == "free":
            return np.zeros(q.shape[1:])
        if self.kind == "harmonic":
            m = self.params.get("mass", 1.0)
            omega, center = self._omega_center(dim)
            return sum(0.5 * m * omega[i] ** 2 * (q[i] - center[i]) ** 2 for i in range(dim))
        if self.kind == "polynomial":
            coeffs = self.params.get("coeffs", (0.0,))
            return sum(np.polynomial.polynomial.polyval(q[i], coeffs) for i in range(dim))
        g = self.params.get("g", 1.0)
        return g / np.sum(q ** 2, axis=0)

    def _static_grad(self, q):
        dim = q.shape[0]
        if self.kind == "free":
            return np.zeros_like(q)
        if self.kind == "harmonic":
            m = self.params.get("mass", 1.0)
            omega, center = self._omega_center(dim)
            return np.stack([m * omega[i] ** 2 * (q[i] - center[i]) for i in range(dim)])
        if self.kind == "polynomial":
            dc = np.polynomial.polynomial.polyder(self.params.get("coeffs", (0.0,)))
            return np.stack([np.polynomial.polynomial.polyval(q[i], dc) for i in range(dim)])
        g = self.params.get("g", 1.0)
        r2 = np.sum(q ** 2, axis=0)
        return -2.0 * g * q / r2 ** 2

    def value(self, q, t=0.0):
        """``V`` at positions ``q`` of shape ``(dim, ...)``."""
        return self._tau(t) * self._static(np.asarray(q, float))

    def gradient(self, q, t=0.0):
        return self._tau(t) * self._static_grad(np.asarray(q, float))

    def time_derivative(self, q, t=0.0):
        return self._dtau(t) * self._static(np.asarray(q, float))

    def to_dict(self) -> dict:
        params = {k: (np.asarray(v).tolist() if not isinstance(v, (int, float)) else v)
                  for k, v in sorted(self.params.items())}
        return {"kind": self.kind, "params": params, "time_coeffs": list(self.time_coeffs)}


@dataclass(frozen=True)
class QuantumFields:
    U: np.ndarray
    VQ: np.ndarray
    sigma: np.ndarray
    floored: np.ndarray


def density_floor(rho0: np.ndarray, rel_floor: float = REL_DENSITY_FLOOR) -> float:
    return rel_floor * float(np.max(rho0))


def floored_mask(rho: np.ndarray, floor: float) -> np.ndarray:
    return rho < floor


def _floor(rho, floor):
    if floor is None:
        floor = density_floor(rho)
    return np.maximum(rho, floor)


# -- density route ---------------------------------------------------------------------

def internal_potential_U(rho, tensors: DeformationTensors, grid: LabelGrid,
                         hbar: float = 1.0, mass: float = 1.0, floor: float | None = None):
    """Internal potential ``(hbar^2/8m) |grad rho|^2 / rho^2``."""
    g = grad_q(rho, tensors, grid)
    r = _floor(rho, floor)
    return hbar ** 2 / (8 * mass) * np.sum(g ** 2, axis=0) / r ** 2


def quantum_potential(rho, tensors: DeformationTensors, grid: LabelGrid,
                      hbar: float = 1.0, mass: float = 1.0, floor: float | None = None):
    """Quantum potential from the density and its first and second position derivatives."""
    g = grad_q(rho, tensors, grid)
    lap = div_q(g, tensors, grid)
    r = _floor(rho, floor)
    return hbar ** 2 / (4 * mass * r) * (np.sum(g ** 2, axis=0) / (2 * r) - lap)


def quantum_potential_amplitude(rho, tensors: DeformationTensors, grid: LabelGrid,
                                hbar: float = 1.0, mass: float = 1.0,
                                floor: float | None = None):
    """``-(hbar^2/2m) lap(sqrt rho) / sqrt rho``; an independent form of the quantum potential."""
    amp = np.sqrt(np.maximum(rho, 0.0))
    lap = div_q(grad_q(amp, tensors, grid), tensors, grid)
    return -hbar ** 2 / (2 * mass) * lap / np.sqrt(_floor(rho, floor))


def stress_tensor(rho, tensors: DeformationTensors, grid: LabelGrid,
                  hbar: float = 1.0, mass: float = 1.0, floor: float | None = None):
    """Quantum stress ``sigma_ij``, shape ``(dim, dim, *counts)``, symmetrised."""
    g = grad_q(rho, tensors, grid)
    hess = np.stack([grad_q(g[i], tensors, grid) for i in range(grid.dim)])
    hess = 0.5 * (hess + np.swapaxes(hess, 0, 1))
    r = _floor(rho, floor)
    return hbar ** 2 / (4 * mass) * (np.einsum("i...,j...->ij...", g, g) / r - hess)


def quantum_fields(rho, tensors, grid, hbar=1.0, mass=1.0, floor=None) -> QuantumFields:
    if floor is None:
        floor = density_floor(rho)
    return QuantumFields(
        U=internal_potential_U(rho, tensors, grid, hbar, mass, floor),
        VQ=quantum_potential(rho, tensors, grid, hbar, mass, floor),
        sigma=stress_tensor(rho, tensors, grid, hbar, mass, floor),
        floored=floored_mask(rho, floor),
    )


# -- log-density route -----------------------------------------------------------------

def log_density(rho0: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(rho0, TINY))


@dataclass(frozen=True)
class ForceEvaluation:
    """Everything one evaluation of the force law produces."""

    accel: np.ndarray
    VQ: np.ndarray
    U: np.ndarray
    tensors: DeformationTensors


def quantum_potential_log(log_rho, tensors: DeformationTensors, grid: LabelGrid,
                          hbar: float = 1.0, mass: float = 1.0):
    """Quantum potential and internal potential from ``log rho``.

    ``V_Q = -(hbar^2/8m)(2 lap log rho + |grad log rho|^2)``,
    ``U = (hbar^2/8m)|grad log rho|^2``.
    """
    g = grad_q(log_rho, tensors, grid)
    lap = div_q(g, tensors, grid)
    g2 = np.sum(g ** 2, axis=0)
    c = hbar ** 2 / (8 * mass)
    return -c * (2 * lap + g2), c * g2


def _clamped(tensors: DeformationTensors, tolerate, jfloor):
    if tolerate is None:
        return tensors
    J = np.where(tolerate, np.maximum(tensors.J, jfloor), tensors.J)
    return DeformationTensors(tensors.F, J, tensors.cof)


def evaluate_weber(q, t, log_rho0, potential: PotentialSpec, grid: LabelGrid,
                   hbar=1.0, mass=1.0, tolerate=None, jfloor=1e-3) -> ForceEvaluation:
    """Force law in gradient form: ``m d2q_i/dt2 = -(dV/dq_i + dV_Q/dq_i)``.

    The label gradient of ``V_Q`` is mapped to position space with the inverse
    deformation (cofactor over Jacobian).  ``tolerate`` marks nodes (e.g. a
    vortex core) whose Jacobian is clamped to ``jfloor`` instead of failing.
    """
    tensors = _clamped(deformation_from_positions(q, grid), tolerate, jfloor)
    log_rho = log_rho0 - np.log(np.abs(tensors.J))
    VQ, U = quantum_potential_log(log_rho, tensors, grid, hbar, mass)
    accel = -(grad_q(VQ, tensors, grid) + potential.gradient(q, t)) / mass
    return ForceEvaluation(accel, VQ, U, tensors)


def evaluate_stress(q, t, rho0, potential: PotentialSpec, grid: LabelGrid,
                    hbar=1.0, mass=1.0, floor=None) -> np.ndarray:
    """Force law in stress form: ``m rho0 d2q_i/dt2 = -rho0 dV/dq_i - cof_kj d sigma_ik/da_j``."""
    tensors = deformation_from_positions(q, grid)
    if floor is None:
        floor = density_floor(rho0)
    rho = rho0 / tensors.J
    sigma = stress_tensor(rho, tensors, grid, hbar, mass, floor)
    d = grid.dim
    div = np.stack([
        sum(tensors.cof[k, j] * derivative(sigma[i, k], grid, 1, j, check=False)
            for k in range(d) for j in range(d))
        for i in range(d)])
    return -potential.gradient(q, t) / mass - div / (mass * np.maximum(rho0, floor))


def acceleration(flow: FlowState, rho0, potential: PotentialSpec, grid: LabelGrid,
                 form: str = "weber", hbar: float = 1.0, mass: float = 1.0,
                 floor: float | None = None) -> np.ndarray:
    """Particle accelerations for a flow snapshot, shape ``(dim, *counts)``."""
    if form == "weber":
        return evaluate_weber(flow.q, flow.t, log_density(rho0), potential, grid,
                              hbar, mass).accel
    if form == "stress":
        return evaluate_stress(flow.q, flow.t, rho0, potential, grid, hbar, mass, floor)
    raise ConfigurationError(f"unknown force form {form!r}")


__all__ = [
    "PotentialSpec", "QuantumFields", "ForceEvaluation", "internal_potential_U",
    "quantum_potential", "quantum_potential_amplitude", "quantum_potential_log", "stress_tensor",
    "quantum_fields", "acceleration", "evaluate_weber", "evaluate_stress", "log_density",
    "density_floor", "jacobian_and_cofactor",
]
