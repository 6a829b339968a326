"""Time evolution of the trajectory ensemble with a co-integrated action (phase)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu

from .errors import ConfigurationError, NumericError
from .forces import (REL_DENSITY_FLOOR, PotentialSpec, density_floor, evaluate_stress,
                     evaluate_weber, log_density)
from .kinematics import FlowState, LabelInterpolator, check_tangling, deformation_from_positions
from .lattice import LabelGrid, boundary_leakage, derivative, integrate, lowpass_filter

NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class InitialData:
    """Initial density, phase or velocity, potential and physical constants.

    Give ``S0`` for quasi-potential flow (velocity ``grad S0 / m``), or ``v0``
    alone for states whose phase is multivalued (vortices).  When both are
    given ``v0`` is used for the velocity and ``S0`` for the phase.

    ``tail_floor`` (relative to ``max rho0``, default ``rel_floor``) marks the
    tail nodes whose acceleration is replaced by a smooth extension from the
    rest of the fluid; errors are amplified roughly like ``rho^-1/2`` on their
    way out, so flows with a noisy interior need a higher threshold.  Nodes
    within ``core_radius`` of ``core_center`` (label space) are advected by
    the initial Eulerian velocity field, which is exact for a stationary core.
    """

    rho0: np.ndarray
    S0: np.ndarray | None = None
    v0: np.ndarray | None = None
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    hbar: float = 1.0
    mass: float = 1.0
    labelling: str = "position"
    core_center: tuple[float, ...] | None = None
    core_radius: float = 0.0
    rel_floor: float = REL_DENSITY_FLOOR
    tail_floor: float | None = None

    @property
    def multivalued_phase(self) -> bool:
        return self.S0 is None

    def validate(self, grid: LabelGrid) -> None:
        if self.rho0.shape != grid.counts:
            raise ConfigurationError(f"rho0 shape {self.rho0.shape} does not match grid {grid.counts}")
        if np.any(self.rho0 < 0) or not np.all(np.isfinite(self.rho0)):
            raise ConfigurationError("rho0 must be finite and non-negative")
        norm = integrate(self.rho0, grid, warn=False)
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ConfigurationError(f"rho0 is not normalised: integral = {norm:.8f}")
        if self.S0 is None and self.v0 is None:
            raise ConfigurationError("initial data needs S0 or v0")
        if self.hbar <= 0 or self.mass <= 0:
            raise ConfigurationError("hbar and mass must be positive")
        if self.rel_floor <= 0 or (self.tail_floor is not None and self.tail_floor <= 0):
            raise ConfigurationError("density floors must be positive")

    def floor(self) -> float:
        return density_floor(self.rho0, self.rel_floor)

    def tail_mask(self, grid: LabelGrid) -> np.ndarray:
        """Nodes below the tail threshold, excluding the core."""
        rel = self.rel_floor if self.tail_floor is None else max(self.tail_floor, self.rel_floor)
        return (self.rho0 < density_floor(self.rho0, rel)) & ~self.core_mask(grid)

    def core_mask(self, grid: LabelGrid) -> np.ndarray:
        """Label nodes inside the excluded core (empty when no core is configured)."""
        if self.core_center is None or self.core_radius <= 0:
            return np.zeros(grid.counts, dtype=bool)
        a = grid.mesh()
        c = np.asarray(self.core_center, float).reshape((grid.dim,) + (1,) * grid.dim)
        return np.sqrt(np.sum((a - c) ** 2, axis=0)) < self.core_radius

    def good_mask(self, grid: LabelGrid) -> np.ndarray:
        """Nodes moved by the full force law: above both floors and outside the core."""
        return (self.rho0 >= self.floor()) & ~self.core_mask(grid) & ~self.tail_mask(grid)

    def initial_velocity(self, grid: LabelGrid) -> np.ndarray:
        if self.v0 is not None:
            return np.asarray(self.v0, float)
        return np.stack([derivative(self.S0, grid, 1, j) for j in range(grid.dim)]) / self.mass


@dataclass(frozen=True)
class IntegrationConfig:
    """Time stepping.  Without ``dt`` the step is ``cfl * m * da_min^2 / hbar``.

    After every step positions and velocities pass through a low-pass filter
    of order ``2 * filter_half_width`` (0 disables it).  It removes the
    grid-scale modes that the quantum force amplifies where the density
    gradient is steep and leaves polynomial fields of low degree untouched.
    """

    t_end: float = 0.0
    dt: float | None = None
    cfl: float = 0.2
    snapshots: int = 1
    force_form: str = "weber"
    jfloor: float = 1e-3
    filter_half_width: int = 4

    def __post_init__(self):
        if self.t_end < 0:
            raise ConfigurationError("t_end must be non-negative")
        if self.dt is not None and self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if not 0 < self.cfl <= 1:
            raise ConfigurationError("cfl factor must lie in (0, 1]")
        if self.snapshots < 1:
            raise ConfigurationError("need at least one snapshot interval")
        if self.filter_half_width < 0:
            raise ConfigurationError("filter_half_width must be non-negative")
        if self.force_form not in ("weber", "stress"):
            raise ConfigurationError(f"unknown force form {self.force_form!r}")

    def base_dt(self, grid: LabelGrid, hbar: float, mass: float) -> float:
        if self.dt is not None:
            return self.dt
        return self.cfl * mass * min(grid.spacing) ** 2 / hbar

    def schedule(self, grid: LabelGrid, hbar: float, mass: float) -> tuple[float, int, int]:
        """``(dt, steps per snapshot, number of snapshot intervals)``.

        ``dt`` is shrunk so that every snapshot lands exactly on a step.
        """
        if self.t_end == 0:
            return self.base_dt(grid, hbar, mass), 0, 0
        interval = self.t_end / self.snapshots
        per = max(1, math.ceil(interval / self.base_dt(grid, hbar, mass) - 1e-9))
        return interval / per, per, self.snapshots


class TailExtension:
    """Replace a nodal field on masked "tail" nodes by a smooth extension.

    The tail values minimise the summed squares of all second differences
    (including mixed ones) with the good-fluid nodes held fixed, a discrete
    thin-plate extension.  Affine fields are reproduced exactly; in 1D the
    field continues linearly with matching slope.  High-wavenumber content
    from the good fluid is damped in the tail instead of amplified there.
    """

    def __init__(self, grid: LabelGrid, tail: np.ndarray):
        self.tail = np.asarray(tail, bool)
        self.active = bool(np.any(self.tail)) and bool(np.any(~self.tail))
        if not self.active:
            return
        op = _second_differences(grid)
        flat = self.tail.ravel()
        touches = np.asarray(abs(op)[:, flat].sum(axis=1)).ravel() > 0
        op = op[touches]
        self._t = np.flatnonzero(flat)
        self._g = np.flatnonzero(~flat)
        op_t, self._op_g = op[:, self._t], op[:, self._g]
        self._op_tT = op_t.T.tocsr()
        self._lu = splu((self._op_tT @ op_t).tocsc())

    def __call__(self, field: np.ndarray) -> np.ndarray:
        if not self.active:
            return field
        rows = field.reshape(-1, self.tail.size).copy()
        for row in rows:
            row[self._t] = self._lu.solve(-(self._op_tT @ (self._op_g @ row[self._g])))
        return rows.reshape(field.shape)


def _second_differences(grid: LabelGrid):
    """Sparse operator stacking every centred second difference on the grid."""
    counts = grid.counts
    index = np.arange(grid.size).reshape(counts)
    inner = tuple(slice(1, n - 1) for n in counts)
    blocks = []

    def shifted(offsets):
        return index[tuple(slice(1 + o, n - 1 + o) for o, n in zip(offsets, counts))].ravel()

    centre = index[inner].ravel()
    for ax in range(grid.dim):
        e = np.zeros(grid.dim, int)
        e[ax] = 1
        blocks.append([(shifted(-e), 1.0), (centre, -2.0), (shifted(e), 1.0)])
        for bx in range(ax + 1, grid.dim):
            f = np.zeros(grid.dim, int)
            f[bx] = 1
            w = np.sqrt(2.0) / 4
            blocks.append([(shifted(e + f), w), (shifted(-e - f), w),
                           (shifted(e - f), -w), (shifted(f - e), -w)])
    rows, cols, vals = [], [], []
    for k, block in enumerate(blocks):
        for idx, w in block:
            rows.append(k * centre.size + np.arange(centre.size))
            cols.append(idx)
            vals.append(np.full(centre.size, w))
    rows, cols, vals = (np.concatenate(x) for x in (rows, cols, vals))
    return coo_matrix((vals, (rows, cols)), shape=(len(blocks) * centre.size, grid.size)).tocsr()


class FrozenCore:
    """Acceleration of core particles advected by a fixed Eulerian velocity field.

    With ``dq/dt = u(q)`` the acceleration is ``(v . grad) u`` at ``q``; ``u``
    is the initial velocity sampled on the label grid (labels are initial
    positions), interpolated with cubic splines.
    """

    def __init__(self, grid: LabelGrid, velocity: np.ndarray, mask: np.ndarray):
        self.mask = mask
        self.dim = grid.dim
        self._u = [LabelInterpolator(grid, velocity[i]) for i in range(grid.dim)]

    def __call__(self, q, v, accel):
        qc, vc = q[:, self.mask], v[:, self.mask]
        unit = np.eye(self.dim, dtype=int)
        core = np.stack([sum(self._u[i](qc, tuple(unit[j])) * vc[j] for j in range(self.dim))
                         for i in range(self.dim)])
        accel = accel.copy()
        accel[:, self.mask] = core
        return accel


class ForceLaw:
    """Right-hand side of the first-order system ``(q, v, chi)``."""

    def __init__(self, init: InitialData, grid: LabelGrid, config: IntegrationConfig):
        self.init, self.grid, self.config = init, grid, config
        self.log_rho0 = log_density(init.rho0)
        core = init.core_mask(grid)
        self.core = core if np.any(core) else None
        self.tolerate = self.core
        self.check_mask = ~core
        self.extension = TailExtension(grid, init.tail_mask(grid))
        self.frozen = (FrozenCore(grid, init.initial_velocity(grid), core)
                       if self.core is not None else None)
        self.evaluations = 0

    def smooth(self, field):
        """Low-pass filter a nodal field; core nodes keep their values."""
        out = lowpass_filter(field, self.grid, self.config.filter_half_width)
        if self.core is not None:
            out[:, self.core] = field[:, self.core]
        return out

    def __call__(self, q, v, t):
        init = self.init
        self.evaluations += 1
        ev = evaluate_weber(q, t, self.log_rho0, init.potential, self.grid, init.hbar, init.mass,
                            tolerate=self.tolerate, jfloor=self.config.jfloor)
        check_tangling(ev.tensors.J, t, self.check_mask)
        accel = ev.accel
        if self.config.force_form == "stress":
            accel = evaluate_stress(q, t, init.rho0, init.potential, self.grid, init.hbar,
                                    init.mass, init.floor())
        accel = self.extension(accel)
        if self.frozen is not None:
            accel = self.frozen(q, v, accel)
        lagr = 0.5 * init.mass * np.sum(v ** 2, axis=0) - init.potential.value(q, t) - ev.VQ
        return accel, lagr


def initialize(init: InitialData, grid: LabelGrid) -> FlowState:
    """Flow at ``t = 0``: ``q = a``, velocity from the phase gradient (or ``v0``), ``S = S0``."""
    init.validate(grid)
    q = grid.mesh()
    v = init.initial_velocity(grid)
    if v.shape != q.shape:
        raise ConfigurationError(f"initial velocity shape {v.shape} != {q.shape}")
    S = np.zeros(grid.counts) if init.S0 is None else np.array(init.S0, dtype=float)
    return FlowState(0.0, q, v, S, multivalued_phase=init.multivalued_phase)


def _rk4(law: ForceLaw, q, v, S, t, dt):
    a1, l1 = law(q, v, t)
    q2, v2 = q + 0.5 * dt * v, v + 0.5 * dt * a1
    a2, l2 = law(q2, v2, t + 0.5 * dt)
    q3, v3 = q + 0.5 * dt * v2, v + 0.5 * dt * a2
    a3, l3 = law(q3, v3, t + 0.5 * dt)
    q4, v4 = q + dt * v3, v + dt * a3
    a4, l4 = law(q4, v4, t + dt)
    q_new = law.smooth(q + dt / 6 * (v + 2 * v2 + 2 * v3 + v4))
    v_new = law.smooth(v + dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4))
    S_new = S + dt / 6 * (l1 + 2 * l2 + 2 * l3 + l4)
    if not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(v_new))):
        bad = np.argwhere(~np.isfinite(q_new + v_new))[0]
        raise NumericError(f"non-finite state after step at t={t + dt:.6g}, node {tuple(bad)}",
                           node=tuple(int(i) for i in bad))
    return q_new, v_new, S_new


def step(flow: FlowState, init: InitialData, grid: LabelGrid, config: IntegrationConfig,
         dt: float | None = None, law: ForceLaw | None = None) -> FlowState:
    """Advance one classical RK4 step of size ``dt`` (default: the config's base step)."""
    if dt is None:
        dt = config.base_dt(grid, init.hbar, init.mass)
    law = law or ForceLaw(init, grid, config)
    q, v, S = _rk4(law, flow.q, flow.v, flow.S, flow.t, dt)
    return FlowState(flow.t + dt, q, v, S, flow.multivalued_phase)


def weber_residual(flow: FlowState, init: InitialData, grid: LabelGrid,
                   mask: np.ndarray | None = None) -> float:
    """Max over ``mask`` of ``|m v_i dq_i/da_k - dS/da_k|``.

    For multivalued-phase states the initial phase gradient is ``m v0``.
    """
    tensors = deformation_from_positions(flow.q, grid)
    covector = init.mass * np.einsum("i...,ik...->k...", flow.v, tensors.F)
    dS = np.stack([derivative(flow.S, grid, 1, k) for k in range(grid.dim)])
    if flow.multivalued_phase:
        dS = dS + init.mass * init.initial_velocity(grid)
    res = np.max(np.abs(covector - dS), axis=0)
    if mask is None:
        mask = init.good_mask(grid)
    return float(np.max(res[mask]))


def diagnostics(flow: FlowState, init: InitialData, grid: LabelGrid) -> dict:
    tensors = deformation_from_positions(flow.q, grid)
    good = init.good_mask(grid)
    rho = init.rho0 / np.where(good, tensors.J, 1.0)
    return {
        "t": flow.t,
        "min_J": float(np.min(tensors.J[good])),
        "max_J": float(np.max(tensors.J[good])),
        "boundary_leakage": boundary_leakage(np.where(good, rho, 0.0), grid),
        "floored_nodes": int(np.sum(init.rho0 < init.floor())),
        "core_nodes": int(np.sum(init.core_mask(grid))),
        "weber_residual": weber_residual(flow, init, grid, good),
        "norm": float(integrate(init.rho0, grid, warn=False)),
    }


@dataclass
class RunResult:
    snapshots: list
    diagnostics: list
    dt: float
    steps: int
    force_evaluations: int

    @property
    def final(self) -> FlowState:
        return self.snapshots[-1]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def max_weber_residual(self) -> float:
        return max(d["weber_residual"] for d in self.diagnostics)


def run(init: InitialData, grid: LabelGrid, config: IntegrationConfig,
        start: FlowState | None = None) -> RunResult:
    """Integrate from ``start`` (default: :func:`initialize`) to ``t_end``, keeping snapshots."""
    flow = start if start is not None else initialize(init, grid)
    t0 = flow.t
    dt, per, nsnap = config.schedule(grid, init.hbar, init.mass)
    law = ForceLaw(init, grid, config)
    snaps, diags = [flow], [diagnostics(flow, init, grid)]
    q, v, S = flow.q, flow.v, flow.S
    n = 0
    for k in range(nsnap):
        for _ in range(per):
            q, v, S = _rk4(law, q, v, S, t0 + n * dt, dt)
            n += 1
        flow = FlowState(t0 + n * dt, q, v, S, flow.multivalued_phase)
        snaps.append(flow)
        diags.append(diagnostics(flow, init, grid))
    return RunResult(snaps, diags, dt, n, law.evaluations)
