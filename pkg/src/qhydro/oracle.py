"""Eulerian reference solutions: Crank-Nicolson propagation, closed forms, field extraction."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.sparse import diags, identity, kron
from scipy.sparse.linalg import splu

from .errors import ConfigurationError, NumericError
from .forces import PotentialSpec, quantum_potential, REL_DENSITY_FLOOR
from .kinematics import DeformationTensors, EulerianField
from .lattice import LabelGrid, derivative, integrate

ANALYTIC_KINDS = ("free-gaussian", "ho-ground", "ho-coherent", "vortex-2d")


class ResolutionWarning(UserWarning):
    """Grid has fewer than 8 points per wavelength at the largest momentum present."""


@dataclass
class CNResult:
    times: np.ndarray
    psi: list
    grid: LabelGrid
    norm_change: float  # largest per-step change of the norm

    @property
    def final(self) -> np.ndarray:
        return self.psi[-1]


_LAPLACIAN_STENCILS = {2: (1.0, -2.0), 4: (-1.0 / 12, 4.0 / 3, -5.0 / 2)}


def _laplacian_1d(n: int, h: float, order: int = 4):
    """Symmetric second difference (order 2 or 4) with zero values beyond both ends."""
    if order not in _LAPLACIAN_STENCILS:
        raise ConfigurationError(f"laplacian order must be 2 or 4, got {order}")
    coeffs = _LAPLACIAN_STENCILS[order]
    half = len(coeffs) - 1
    bands = [np.full(n - abs(k), coeffs[half - abs(k)]) for k in range(-half, half + 1)]
    return diags(bands, list(range(-half, half + 1))) / h ** 2


def _check_resolution(psi0: np.ndarray, grid: LabelGrid, hbar: float) -> None:
    for ax, h in enumerate(grid.spacing):
        spec = np.abs(np.fft.fft(psi0, axis=ax)) ** 2
        other = tuple(i for i in range(grid.dim) if i != ax)
        power = spec.sum(axis=other) if other else spec
        k = np.abs(np.fft.fftfreq(grid.counts[ax], d=h)) * 2 * np.pi
        kmax = k[power > 1e-12 * power.sum()].max(initial=0.0)
        if kmax > 0 and 2 * np.pi / kmax < 8 * h:
            warnings.warn(f"axis {ax}: {2 * np.pi / kmax / h:.1f} points per wavelength (< 8)",
                          ResolutionWarning, stacklevel=3)


class _CayleyStep:
    """One Crank-Nicolson factor ``(1 + i dt H / 2 hbar)^-1 (1 - i dt H / 2 hbar)``."""

    def __init__(self, ham, dt: float, hbar: float):
        n = ham.shape[0]
        a = (1j * dt / (2 * hbar)) * ham
        self._rhs = (identity(n, format="csr") - a).tocsr()
        self._lu = splu((identity(n, format="csc") + a).tocsc())

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        return self._lu.solve(self._rhs @ psi)


def _hamiltonian_parts(grid: LabelGrid, vnodes: np.ndarray, hbar: float, mass: float,
                       order: int = 4):
    """Per-axis Hamiltonians ``-hbar^2/2m d2/dx_k^2 + V/dim`` on the flattened grid."""
    eye = [identity(n, format="csr") for n in grid.counts]
    parts = []
    for ax, (n, h) in enumerate(zip(grid.counts, grid.spacing)):
        lap = _laplacian_1d(n, h, order)
        op = None
        for k in range(grid.dim):
            factor = lap if k == ax else eye[k]
            op = factor if op is None else kron(op, factor, format="csr")
        parts.append(-hbar ** 2 / (2 * mass) * op + diags(vnodes.ravel() / grid.dim))
    return parts


def propagate_cn(psi0: np.ndarray, grid: LabelGrid, potential: PotentialSpec, dt: float,
                 t_end: float, hbar: float = 1.0, mass: float = 1.0, snapshots: int = 1,
                 t0: float = 0.0, laplacian_order: int = 4) -> CNResult:
    """Crank-Nicolson propagation of ``psi0`` with zero values beyond the grid.

    1D uses a single Cayley step per time step.  In 2D and 3D the step is the
    symmetric (Strang) product of per-axis Cayley factors, each carrying an
    equal share of ``V``; every factor is unitary, so the norm is kept.
    Time-dependent potentials are sampled at the step midpoint.  The kinetic
    term uses a symmetric second difference of order ``laplacian_order``.
    """
    psi = np.asarray(psi0, dtype=complex)
    if psi.shape != grid.counts:
        raise ConfigurationError(f"psi0 shape {psi.shape} does not match grid {grid.counts}")
    if not np.all(np.isfinite(psi)):
        raise NumericError("non-finite initial wavefunction")
    if dt <= 0 or t_end < 0 or snapshots < 1:
        raise ConfigurationError("need dt > 0, t_end >= 0 and at least one snapshot")
    _check_resolution(psi, grid, hbar)
    per = max(1, int(np.ceil(t_end / snapshots / dt - 1e-9))) if t_end > 0 else 0
    h = t_end / (per * snapshots) if per else dt
    x = grid.mesh()
    weights = np.ones(grid.counts) * grid.cell_volume

    def steps_at(t):
        parts = _hamiltonian_parts(grid, potential.value(x, t), hbar, mass, laplacian_order)
        if grid.dim == 1:
            return [_CayleyStep(parts[0], h, hbar)]
        halves = [_CayleyStep(p, h / 2, hbar) for p in parts[:-1]]
        return halves + [_CayleyStep(parts[-1], h, hbar)] + halves[::-1]

    static = not potential.time_dependent
    factors = steps_at(t0) if static else None
    flat = psi.ravel()
    times, out = [t0], [psi.copy()]
    norm_change = 0.0
    n = 0
    for _ in range(snapshots if per else 0):
        for _ in range(per):
            before = np.sum(np.abs(flat) ** 2 * weights.ravel())
            for f in (factors if static else steps_at(t0 + (n + 0.5) * h)):
                flat = f(flat)
            n += 1
            after = np.sum(np.abs(flat) ** 2 * weights.ravel())
            norm_change = max(norm_change, abs(after - before))
        if not np.all(np.isfinite(flat)):
            raise NumericError(f"non-finite wavefunction at t={t0 + n * h:.6g}")
        times.append(t0 + n * h)
        out.append(flat.reshape(grid.counts).copy())
    return CNResult(np.array(times), out, grid, norm_change)


# -- closed-form solutions -------------------------------------------------------------

@dataclass
class AnalyticSolution:
    """Closed-form Eulerian fields, plus the trajectory map ``q(a, t)`` when known."""

    field: EulerianField
    trajectory: Callable[[np.ndarray], np.ndarray] | None = None
    energy: float | None = None


def _vec(value, dim):
    return np.broadcast_to(np.asarray(value, float), (dim,)).astype(float)


def _free_gaussian(x, t, params, hbar, mass):
    dim = x.shape[0]
    sigma0 = float(params.get("sigma0", 1.0))
    x0 = _vec(params.get("x0", 0.0), dim)
    p = _vec(params.get("p", 0.0), dim)
    vel = p / mass
    c = 1 + 1j * hbar * t / (2 * mass * sigma0 ** 2)
    s = sigma0 * abs(c)
    psi = np.ones(x.shape[1:], complex)
    for i in range(dim):
        xi = x[i] - x0[i] - vel[i] * t
        psi = psi * ((2 * np.pi * sigma0 ** 2) ** -0.25 / np.sqrt(c)
                     * np.exp(-xi ** 2 / (4 * sigma0 ** 2 * c)
                              + 1j * p[i] * (x[i] - 0.5 * vel[i] * t) / hbar))
    sdot = (hbar / (2 * mass * sigma0)) ** 2 * t / s
    v = np.stack([vel[i] + sdot / s * (x[i] - x0[i] - vel[i] * t) for i in range(dim)])

    def trajectory(a):
        a = np.asarray(a, float)
        shape = (dim,) + (1,) * (a.ndim - 1)
        return (x0 + vel * t).reshape(shape) + (a - x0.reshape(shape)) * s / sigma0

    energy = dim * hbar ** 2 / (8 * mass * sigma0 ** 2) + float(p @ p) / (2 * mass)
    return psi, v, trajectory, energy


def _ho_ground(x, t, params, hbar, mass):
    dim = x.shape[0]
    omega = float(params.get("omega", 1.0))
    center = _vec(params.get("center", 0.0), dim)
    r2 = sum((x[i] - center[i]) ** 2 for i in range(dim))
    psi = ((mass * omega / (np.pi * hbar)) ** (dim / 4) * np.exp(-mass * omega * r2 / (2 * hbar))
           * np.exp(-0.5j * dim * omega * t))
    return psi, np.zeros_like(x), (lambda a: np.array(a, float)), dim * hbar * omega / 2


def _ho_coherent(x, t, params, hbar, mass):
    dim = x.shape[0]
    omega = float(params.get("omega", 1.0))
    x0 = _vec(params.get("x0", 1.0), dim)
    xc = x0 * np.cos(omega * t)
    pc = -mass * omega * x0 * np.sin(omega * t)
    g = (mass * omega / (np.pi * hbar)) ** 0.25
    psi = np.ones(x.shape[1:], complex)
    for i in range(dim):
        psi = psi * g * np.exp(-mass * omega * (x[i] - xc[i]) ** 2 / (2 * hbar)
                               + 1j * pc[i] * x[i] / hbar - 0.5j * omega * t
                               - 0.5j * pc[i] * xc[i] / hbar)
    v = np.stack([np.full(x.shape[1:], pc[i] / mass) for i in range(dim)])

    def trajectory(a):
        a = np.asarray(a, float)
        return a + (xc - x0).reshape((dim,) + (1,) * (a.ndim - 1))

    energy = dim * hbar * omega / 2 + 0.5 * mass * omega ** 2 * float(x0 @ x0)
    return psi, v, trajectory, energy


def _vortex_2d(x, t, params, hbar, mass):
    if x.shape[0] != 2:
        raise ConfigurationError("vortex-2d needs a 2D grid")
    omega = float(params.get("omega", 1.0))
    ell2 = hbar / (mass * omega)
    r2 = x[0] ** 2 + x[1] ** 2
    psi = ((x[0] + 1j * x[1]) / (np.sqrt(np.pi) * ell2) * np.exp(-r2 / (2 * ell2))
           * np.exp(-2j * omega * t))
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(r2 > 0, hbar / mass * np.stack([-x[1], x[0]]) / r2, 0.0)

    def trajectory(a):
        a = np.asarray(a, float)
        ang = hbar * t / (mass * np.sum(a ** 2, axis=0))
        return np.stack([np.cos(ang) * a[0] - np.sin(ang) * a[1],
                         np.sin(ang) * a[0] + np.cos(ang) * a[1]])

    return psi, v, trajectory, 2 * hbar * omega


_SOLVERS = {"free-gaussian": _free_gaussian, "ho-ground": _ho_ground,
            "ho-coherent": _ho_coherent, "vortex-2d": _vortex_2d}


def analytic_solution(kind: str, params: dict, grid: LabelGrid, t: float = 0.0,
                      hbar: float = 1.0, mass: float = 1.0) -> AnalyticSolution:
    """Closed-form state on ``grid`` at time ``t``.

    ``params``: ``sigma0``, ``x0``, ``p`` (free-gaussian); ``omega``,
    ``center`` (ho-ground); ``omega``, ``x0`` (ho-coherent); ``omega``
    (vortex-2d).  Harmonic states assume ``V = 1/2 m omega^2 x^2``.
    """
    if kind not in _SOLVERS:
        raise ConfigurationError(f"unknown analytic solution {kind!r}; choose from {ANALYTIC_KINDS}")
    if float(params.get("sigma0", 1.0)) <= 0 or float(params.get("omega", 1.0)) <= 0:
        raise ConfigurationError("sigma0 and omega must be positive")
    psi, v, traj, energy = _SOLVERS[kind](grid.mesh(), t, params, hbar, mass)
    field = EulerianField(grid, np.abs(psi) ** 2, v, t, psi=psi)
    return AnalyticSolution(field, traj, energy)


# -- Eulerian field extraction ---------------------------------------------------------

def extract_fields(psi: np.ndarray, grid: LabelGrid, t: float = 0.0, hbar: float = 1.0,
                   mass: float = 1.0, rel_floor: float = REL_DENSITY_FLOOR) -> EulerianField:
    """Density ``|psi|^2`` and velocity ``j / rho`` (zero where ``rho`` is below the floor)."""
    psi = np.asarray(psi, complex)
    rho = np.abs(psi) ** 2
    dre = np.stack([derivative(psi.real, grid, 1, k) for k in range(grid.dim)])
    dim_ = np.stack([derivative(psi.imag, grid, 1, k) for k in range(grid.dim)])
    current = hbar / mass * (psi.real * dim_ - psi.imag * dre)
    good = rho > rel_floor * rho.max()
    v = np.where(good, current / np.where(good, rho, 1.0), 0.0)
    return EulerianField(grid, rho, v, t, psi=psi, mask=good)


def expectation_energy(psi: np.ndarray, grid: LabelGrid, potential: PotentialSpec,
                       t: float = 0.0, hbar: float = 1.0, mass: float = 1.0) -> float:
    """``<psi|H|psi>`` with the kinetic term as ``hbar^2/2m |grad psi|^2``."""
    grad2 = sum(np.abs(derivative(psi.real, grid, 1, k) + 1j * derivative(psi.imag, grid, 1, k)) ** 2
                for k in range(grid.dim))
    dens = hbar ** 2 / (2 * mass) * grad2 + potential.value(grid.mesh(), t) * np.abs(psi) ** 2
    return float(integrate(dens, grid, warn=False))


def identity_tensors(grid: LabelGrid) -> DeformationTensors:
    eye = np.eye(grid.dim).reshape((grid.dim, grid.dim) + (1,) * grid.dim)
    F = np.broadcast_to(eye, (grid.dim, grid.dim) + grid.counts).copy()
    return DeformationTensors(F, np.ones(grid.counts), F.copy())


def euler_residuals(fields: list, potential: PotentialSpec, hbar: float = 1.0,
                    mass: float = 1.0, rel_floor: float = 1e-6) -> dict:
    """L2 residuals of the continuity and quantum Euler equations across snapshots.

    Time derivatives are centred differences at interior snapshots; the Euler
    residual is weighted by ``rho`` so that low-density regions do not dominate.
    """
    if len(fields) < 3:
        raise ConfigurationError("need at least 3 snapshots")
    grid = fields[0].grid
    tensors = identity_tensors(grid)
    x = grid.mesh()
    cont, euler = [], []
    for k in range(1, len(fields) - 1):
        prev, cur, nxt = fields[k - 1], fields[k], fields[k + 1]
        dt = nxt.t - prev.t
        drho = (nxt.rho - prev.rho) / dt
        flux = sum(derivative(cur.rho * cur.v[i], grid, 1, i) for i in range(grid.dim))
        cont.append(np.sqrt(integrate((drho + flux) ** 2, grid, warn=False)))
        floor = rel_floor * cur.rho.max()
        vq = quantum_potential(cur.rho, tensors, grid, hbar, mass, floor)
        force = (np.stack([derivative(vq, grid, 1, i) for i in range(grid.dim)])
                 + potential.gradient(x, cur.t)) / mass
        dv = (nxt.v - prev.v) / dt
        adv = np.stack([sum(cur.v[j] * derivative(cur.v[i], grid, 1, j) for j in range(grid.dim))
                        for i in range(grid.dim)])
        res = np.where(cur.rho > floor, cur.rho * np.sum((dv + adv + force) ** 2, axis=0) ** 0.5, 0)
        euler.append(np.sqrt(integrate(res ** 2, grid, warn=False)))
    return {"continuity_l2": float(max(cont)), "euler_l2": float(max(euler)),
            "snapshots": len(fields)}
