"""Noether charges of the trajectory fluid and of the Schrödinger field, and circulation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .forces import evaluate_weber, log_density
from .integrator import InitialData
from .kinematics import (EulerianField, FlowState, LabelInterpolator, deformation_from_positions,
                         invert_labels, sample_at_labels)
from .lattice import LabelGrid, derivative, integrate
from .symmetry import (GroupParams, charge_params, check_potential_admissibility,
                       relabel_constraint_residual)

CHARGES = ("energy", "momentum", "angular", "galilean", "dilation", "extension")
RELABEL_TOLERANCE = 1e-8


@dataclass
class ChargeSeries:
    """Values of one conserved quantity at increasing times.

    ``scale`` guards the drift of charges whose mean is near zero.
    """

    name: str
    times: np.ndarray
    values: np.ndarray
    scale: float = 0.0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.values = np.asarray(self.values, float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ConfigurationError("times and values must be matching 1D arrays")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError(f"charge {self.name!r} has non-finite values")

    @property
    def drift(self) -> float:
        spread = float(self.values.max() - self.values.min())
        denom = max(abs(float(self.values.mean())), self.scale)
        return spread / denom if denom > 0 else spread

    def rows(self):
        """``(time, value, drift so far)`` per snapshot."""
        for k in range(len(self.times)):
            part = ChargeSeries(self.name, self.times[:k + 1], self.values[:k + 1], self.scale)
            yield float(self.times[k]), float(self.values[k]), part.drift


# -- Lagrangian side --------------------------------------------------------------------

def _weber(flow: FlowState, init: InitialData, grid: LabelGrid):
    return evaluate_weber(flow.q, flow.t, log_density(init.rho0), init.potential, grid,
                          init.hbar, init.mass, tolerate=init.core_mask(grid))


def hamiltonian_density(flow: FlowState, init: InitialData, grid: LabelGrid) -> np.ndarray:
    """``H = m rho0 v^2 / 2 + rho0 U + rho0 V`` per label."""
    ev = _weber(flow, init, grid)
    return init.rho0 * (0.5 * init.mass * np.sum(flow.v ** 2, axis=0) + ev.U
                        + init.potential.value(flow.q, flow.t))


def noether_density(flow: FlowState, init: InitialData, grid: LabelGrid,
                    params: GroupParams, relabel_flux: np.ndarray | None = None) -> np.ndarray:
    """Charge density per label for spacetime parameters plus an optional relabelling.

    ``relabel_flux`` is ``rho0 xi`` (shape ``(dim, *counts)``).  With the
    fluid Lagrangian ``l = m rho0 v^2/2 - rho0 U - rho0 V``:
    ``P = l xi0 + m rho0 v . (eta - v xi0) - m v . F (rho0 xi) - Lambda0``.
    """
    if params.dim != grid.dim:
        raise ConfigurationError("parameter and grid dimensions differ")
    m, rho0, t = init.mass, init.rho0, flow.t
    v, q = flow.v, flow.q
    v2 = np.sum(v ** 2, axis=0)
    P = m * rho0 * np.sum(v * params.eta(q, t), axis=0) - params.lambda0(q, rho0, m)
    xi0 = params.xi0(t)
    if xi0:
        ev = _weber(flow, init, grid)
        lag = rho0 * (0.5 * m * v2 - ev.U - init.potential.value(q, t))
        P = P + xi0 * (lag - m * rho0 * v2)
    if relabel_flux is not None:
        F = deformation_from_positions(q, grid).F
        P = P - m * np.einsum("i...,ij...,j...->...", v, F, relabel_flux)
    return P


def relabel_current(flow: FlowState, init: InitialData, grid: LabelGrid,
                    relabel_flux: np.ndarray) -> np.ndarray:
    """``J_i = rho0 xi_i (m v^2/2 - V - V_Q)``: the bracket is a point-particle Lagrangian."""
    ev = _weber(flow, init, grid)
    bracket = (0.5 * init.mass * np.sum(flow.v ** 2, axis=0)
               - init.potential.value(flow.q, flow.t) - ev.VQ)
    return relabel_flux * bracket


def _snapshots(flows) -> list:
    return [flows] if isinstance(flows, FlowState) else list(flows)


def energy_scale(flow: FlowState, init: InitialData, grid: LabelGrid) -> float:
    return abs(float(integrate(hamiltonian_density(flow, init, grid), grid, warn=False)))


def schrodinger_charges(flows, init: InitialData, grid: LabelGrid, which: str,
                        params: GroupParams | None = None, axis: int = 0) -> ChargeSeries:
    """Integrated charge of one kinematical symmetry at each snapshot.

    The energy is reported as ``H`` (the charge density is ``-H``); the
    others are the integrated densities for unit parameters unless ``params``
    is given.  The potential must satisfy the symmetry's restriction.
    """
    flows = _snapshots(flows)
    if which not in CHARGES:
        raise ConfigurationError(f"unknown charge {which!r}; choose from {CHARGES}")
    if params is None:
        params = charge_params(which, grid.dim, axis)
    report = check_potential_admissibility(params, init.potential, flows[0].q,
                                           times=sorted({0.0, 1.0, *[f.t for f in flows]}))
    report.raise_if_failed()
    sign = -1.0 if which == "energy" else 1.0
    values = [sign * integrate(noether_density(f, init, grid, params), grid, warn=False)
              for f in flows]
    return ChargeSeries(which, [f.t for f in flows], values,
                        scale=energy_scale(flows[0], init, grid))


def relabel_charge(flows, init: InitialData, grid: LabelGrid,
                   relabel_flux: np.ndarray) -> ChargeSeries:
    """Charge of a density-preserving relabelling ``rho0 xi`` (refused if it is not one).

    The drift scale is the largest ``int |P| da`` over the snapshots, so a
    charge that is zero by cancellation is judged against the size of its
    density.  The largest current magnitude per snapshot is kept in ``extras``.
    """
    flows = _snapshots(flows)
    residual = relabel_constraint_residual(relabel_flux, grid)
    if residual > RELABEL_TOLERANCE:
        raise ConfigurationError(
            f"relabelling field changes rho0: max |d(rho0 xi_i)/da_i| = {residual:.3e}")
    zero = GroupParams(grid.dim)
    values, absolute, currents = [], [], []
    for f in flows:
        P = noether_density(f, init, grid, zero, relabel_flux)
        values.append(integrate(P, grid, warn=False))
        absolute.append(integrate(np.abs(P), grid, warn=False))
        currents.append(float(np.max(np.abs(relabel_current(f, init, grid, relabel_flux)))))
    return ChargeSeries("relabel", [f.t for f in flows], values, scale=max(absolute),
                        extras={"constraint_residual": residual, "max_current": currents})


def circle_loop(center, radius: float, n: int = 256) -> np.ndarray:
    """Closed polyline (first point repeated at the end), shape ``(2, n + 1)``."""
    th = np.linspace(0.0, 2 * np.pi, n + 1)
    return np.stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])


def circulation(flow: FlowState, loop: np.ndarray, grid: LabelGrid,
                init: InitialData | None = None) -> float:
    """``Gamma = closed integral of v_i (dq_i/da_j) da_j`` along a label-space loop.

    The covector ``v . F`` is interpolated bicubically at the loop points and
    integrated with the trapezoid rule.  With ``init`` the loop must stay in
    good fluid (above the density floor and outside any core).
    """
    loop = np.asarray(loop, float)
    if loop.ndim != 2 or loop.shape[0] != grid.dim or grid.dim < 2:
        raise ConfigurationError("loop must be a (dim, n) polyline in 2D or 3D label space")
    if np.max(np.abs(loop[:, 0] - loop[:, -1])) > 1e-12:
        raise ConfigurationError("loop is not closed")
    if init is not None:
        good = init.good_mask(grid).astype(float)
        if np.any(LabelInterpolator(grid, good)(loop) < 0.999):
            raise ConfigurationError("loop passes through floored, tail or core labels")
    F = deformation_from_positions(flow.q, grid).F
    cov = np.einsum("i...,ij...->j...", flow.v, F)
    vals = np.stack([LabelInterpolator(grid, cov[j])(loop) for j in range(grid.dim)])
    da = np.diff(loop, axis=1)
    return float(np.sum(0.5 * (vals[:, 1:] + vals[:, :-1]) * da))


def circulation_series(flows, loop, grid: LabelGrid, init: InitialData | None = None
                       ) -> ChargeSeries:
    flows = _snapshots(flows)
    return ChargeSeries("circulation", [f.t for f in flows],
                        [circulation(f, loop, grid, init) for f in flows])


@dataclass
class EulerianCharge:
    density: np.ndarray
    current: np.ndarray
    mask: np.ndarray
    t: float
    grid: LabelGrid

    def total(self) -> float:
        return float(integrate(np.where(self.mask, self.density, 0.0), self.grid, warn=False))


def to_eulerian_charge(P: np.ndarray, current: np.ndarray | None, flow: FlowState,
                       grid: LabelGrid, xgrid: LabelGrid, inversion=None) -> EulerianCharge:
    """Label-space density and current converted to position space.

    ``P_x = P / J`` and ``J_x = P v / J + F J_label``, both at ``a(x, t)``.
    """
    tensors = deformation_from_positions(flow.q, grid)
    labels, mask = inversion if inversion is not None else invert_labels(flow, grid, xgrid)
    pts = labels.reshape(grid.dim, -1)
    dens = P / tensors.J
    cur = dens * flow.v
    if current is not None:
        cur = cur + np.einsum("ij...,j...->i...", tensors.F, current)
    out_d = sample_at_labels(dens, grid, pts).reshape(xgrid.counts)
    out_c = sample_at_labels(cur, grid, pts).reshape((grid.dim,) + xgrid.counts)
    return EulerianCharge(np.where(mask, out_d, 0.0), np.where(mask, out_c, 0.0), mask,
                          flow.t, xgrid)


def eulerian_continuity_residual(charges: list) -> float:
    """Largest L2 norm of ``dP/dt + div J`` over interior snapshots (centred in time)."""
    if len(charges) < 3:
        raise ConfigurationError("need at least 3 snapshots")
    grid = charges[0].grid
    worst = 0.0
    for k in range(1, len(charges) - 1):
        prev, cur, nxt = charges[k - 1], charges[k], charges[k + 1]
        dP = (nxt.density - prev.density) / (nxt.t - prev.t)
        div = sum(derivative(cur.current[i], grid, 1, i) for i in range(grid.dim))
        good = prev.mask & cur.mask & nxt.mask
        worst = max(worst, float(np.sqrt(integrate(np.where(good, (dP + div) ** 2, 0.0), grid,
                                                   warn=False))))
    return worst


# -- Schrödinger-field side ----------------------------------------------------------------

def _complex_derivative(psi, grid, order, axis):
    return (derivative(psi.real, grid, order, axis) + 1j * derivative(psi.imag, grid, order, axis))


def field_density(psi: np.ndarray, grid: LabelGrid, t: float, params: GroupParams,
                  potential, hbar: float = 1.0, mass: float = 1.0) -> np.ndarray:
    """Charge density of the Schrödinger field for group parameters ``params``.

    ``P = l theta0 - hbar Im[psi* (phi - psi_t theta0 - theta . grad psi)]``
    with ``theta0 = xi0``, ``theta = eta(x)`` and
    ``phi = psi [-(d/2)(beta/2 + alpha t) + (i m / hbar)(alpha x^2/2 - u . x)]``;
    ``psi_t`` comes from the Hamiltonian and ``l`` is the field Lagrangian.
    """
    x = grid.mesh()
    grads = np.stack([_complex_derivative(psi, grid, 1, k) for k in range(grid.dim)])
    lap = sum(_complex_derivative(psi, grid, 2, k) for k in range(grid.dim))
    V = potential.value(x, t)
    psi_t = -1j / hbar * (-hbar ** 2 / (2 * mass) * lap + V * psi)
    conj = np.conj(psi)
    lag = (-hbar * np.imag(conj * psi_t) - hbar ** 2 / (2 * mass) * np.sum(np.abs(grads) ** 2, axis=0)
           - V * np.abs(psi) ** 2)
    theta0 = params.xi0(t)
    theta = params.eta(x, t)
    phi = psi * (-0.5 * grid.dim * params.scale_rate(t) + 1j / hbar * params.phase_shift(x, mass))
    inner = phi - psi_t * theta0 - np.sum(theta * grads, axis=0)
    return lag * theta0 - hbar * np.imag(conj * inner)


def psi_side_charges(psis, times, grid: LabelGrid, which: str, potential,
                     hbar: float = 1.0, mass: float = 1.0, params: GroupParams | None = None,
                     axis: int = 0) -> ChargeSeries:
    """Field-side counterpart of :func:`schrodinger_charges` for oracle snapshots."""
    if which not in CHARGES:
        raise ConfigurationError(f"unknown charge {which!r}; choose from {CHARGES}")
    if params is None:
        params = charge_params(which, grid.dim, axis)
    check_potential_admissibility(params, potential, grid.mesh(),
                                  times=sorted({0.0, 1.0, *times})).raise_if_failed()
    sign = -1.0 if which == "energy" else 1.0
    values = [sign * integrate(field_density(p, grid, t, params, potential, hbar, mass), grid,
                               warn=False) for p, t in zip(psis, times)]
    e0 = integrate(-field_density(psis[0], grid, times[0], GroupParams(grid.dim, d=1.0),
                                  potential, hbar, mass), grid, warn=False)
    return ChargeSeries(which, times, values, scale=abs(e0))


def superposition_charge(psis, phis, times, grid: LabelGrid, hbar: float = 1.0) -> ChargeSeries:
    """``int (i hbar/2)(psi* phi - phi* psi) dx`` for two solutions of the same equation."""
    if len(psis) != len(phis) or len(psis) != len(times):
        raise ConfigurationError("psi, phi and times must have equal length")
    values = []
    for p, f in zip(psis, phis):
        if np.shape(p) != grid.counts or np.shape(f) != grid.counts:
            raise ConfigurationError("wavefunctions must live on the grid")
        values.append(integrate(-hbar * np.imag(np.conj(p) * f), grid, warn=False))
    norm = integrate(np.abs(psis[0]) ** 2, grid, warn=False)
    return ChargeSeries("superposition", times, values, scale=hbar * norm)


__all__ = [
    "CHARGES", "ChargeSeries", "hamiltonian_density", "noether_density", "relabel_current",
    "energy_scale", "schrodinger_charges", "relabel_charge", "circle_loop", "circulation",
    "circulation_series", "EulerianCharge", "to_eulerian_charge", "eulerian_continuity_residual",
    "field_density", "psi_side_charges", "superposition_charge",
]
