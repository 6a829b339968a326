"""Deformation algebra of the label-to-position map and Lagrangian/Eulerian conversion."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import permutations

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline
from scipy.spatial import cKDTree

from .errors import ConfigurationError, MeshTanglingError, NumericError
from .lattice import LabelGrid, derivative

NEWTON_MAX_ITER = 50


@dataclass(frozen=True)
class FlowState:
    """Snapshot of the trajectory ensemble at time ``t``.

    ``q`` and ``v`` have shape ``(dim, *counts)``; ``S`` has shape ``counts``.
    For states with a multivalued initial phase ``S`` holds only the
    accumulated action (the initial phase enters through ``v0``).
    """

    t: float
    q: np.ndarray
    v: np.ndarray
    S: np.ndarray
    multivalued_phase: bool = False

    def __post_init__(self):
        for name in ("q", "v", "S"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                bad = np.argwhere(~np.isfinite(arr))[0]
                raise NumericError(f"non-finite {name} at node {tuple(bad)}", node=tuple(bad))

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    def with_(self, **changes) -> "FlowState":
        return replace(self, **changes)


@dataclass(frozen=True)
class DeformationTensors:
    """Deformation matrix ``F[i, j] = dq_i/da_j``, its determinant and cofactors."""

    F: np.ndarray
    J: np.ndarray
    cof: np.ndarray

    def cofactor_residual(self) -> float:
        """Max relative violation of ``F_kj cof_ki = J delta_ij``."""
        d = self.F.shape[0]
        lhs = np.einsum("kj...,ki...->ij...", self.F, self.cof)
        rhs = np.einsum("ij,...->ij...", np.eye(d), self.J)
        scale = np.maximum(np.abs(self.J), np.max(np.abs(self.F), axis=(0, 1)) ** d)
        return float(np.max(np.abs(lhs - rhs) / scale))


@dataclass(frozen=True)
class EulerianField:
    """Fields sampled on a fixed spatial grid at time ``t``."""

    grid: LabelGrid
    rho: np.ndarray
    v: np.ndarray
    t: float = 0.0
    psi: np.ndarray | None = None
    mask: np.ndarray | None = None
    extras: dict = field(default_factory=dict)


def _levi_civita(d: int) -> np.ndarray:
    eps = np.zeros((d,) * d)
    for perm in permutations(range(d)):
        inv = sum(1 for i in range(d) for j in range(i + 1, d) if perm[i] > perm[j])
        eps[perm] = -1.0 if inv % 2 else 1.0
    return eps


def jacobian_and_cofactor(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = F.shape[0]
    if d == 1:
        return F[0, 0].copy(), np.ones_like(F)
    if d == 2:
        J = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
        cof = np.stack([np.stack([F[1, 1], -F[1, 0]]), np.stack([-F[0, 1], F[0, 0]])])
        return J, cof
    eps = _levi_civita(3)
    cof = 0.5 * np.einsum("ijk,lmn,jm...,kn...->il...", eps, eps, F, F)
    J = np.einsum("il...,il...->...", F, cof) / 3.0
    return J, cof


def deformation_from_positions(q: np.ndarray, grid: LabelGrid) -> DeformationTensors:
    d = grid.dim
    F = np.stack([np.stack([derivative(q[i], grid, 1, j, check=False) for j in range(d)])
                  for i in range(d)])
    J, cof = jacobian_and_cofactor(F)
    return DeformationTensors(F, J, cof)


def deformation(flow: FlowState, grid: LabelGrid, check_mask: np.ndarray | None = None,
                ) -> DeformationTensors:
    """Deformation tensors of a flow.  Raises on ``J <= 0`` within ``check_mask``."""
    tensors = deformation_from_positions(flow.q, grid)
    check_tangling(tensors.J, flow.t, check_mask)
    return tensors


def check_tangling(J: np.ndarray, t: float, check_mask: np.ndarray | None = None) -> None:
    bad = J <= 0
    if check_mask is not None:
        bad &= check_mask
    if np.any(bad):
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        jmin = float(J[bad].min())
        raise MeshTanglingError(f"mesh tangling at node {node}, t={t:.6g}: J={jmin:.3e}",
                                node=node, time=t, min_jacobian=jmin)


def lagrangian_density_rho(rho0: np.ndarray, tensors: DeformationTensors) -> np.ndarray:
    """Density carried by each particle, ``rho0 / J``."""
    return rho0 / tensors.J


def grad_q(f: np.ndarray, tensors: DeformationTensors, grid: LabelGrid) -> np.ndarray:
    """Position-space gradient of a label-space scalar, shape ``(dim, *counts)``."""
    da = np.stack([derivative(f, grid, 1, j, check=False) for j in range(grid.dim)])
    return np.einsum("ij...,j...->i...", tensors.cof, da) / tensors.J


def div_q(w: np.ndarray, tensors: DeformationTensors, grid: LabelGrid) -> np.ndarray:
    """Position-space divergence of a vector field given on labels.

    Uses the conservative form ``J^-1 d/da_j (cof_ij w_i)``; the cofactor is
    divergence free, so this equals ``J^-1 cof_ij dw_i/da_j``.
    """
    flux = np.einsum("ij...,i...->j...", tensors.cof, w)
    return sum(derivative(flux[j], grid, 1, j, check=False) for j in range(grid.dim)) / tensors.J


# -- interpolation over the label grid -------------------------------------------------

class LabelInterpolator:
    """Cubic interpolation of a nodal field at arbitrary label points."""

    def __init__(self, grid: LabelGrid, values: np.ndarray):
        if grid.dim == 1:
            self._spl = CubicSpline(grid.axes()[0], values)
        elif grid.dim == 2:
            ax0, ax1 = grid.axes()
            self._spl = RectBivariateSpline(ax0, ax1, values, kx=3, ky=3, s=0)
        else:
            raise ConfigurationError("label interpolation is implemented for dim 1 and 2")
        self.dim = grid.dim

    def __call__(self, a: np.ndarray, d: tuple[int, ...] | None = None) -> np.ndarray:
        if self.dim == 1:
            return self._spl(a[0], 0 if d is None else d[0])
        dx, dy = (0, 0) if d is None else d
        return self._spl.ev(a[0], a[1], dx=dx, dy=dy)


def sample_at_labels(values: np.ndarray, grid: LabelGrid, labels: np.ndarray) -> np.ndarray:
    """Interpolate nodal ``values`` (scalar or leading-component array) at ``labels``."""
    values = np.asarray(values)
    if values.ndim == grid.dim:
        return LabelInterpolator(grid, values)(labels)
    return np.stack([sample_at_labels(v, grid, labels) for v in values])


def _invert_1d(q: np.ndarray, grid: LabelGrid, x: np.ndarray, tol: float):
    a_nodes = grid.axes()[0]
    q = q[0]
    if np.any(np.diff(q) <= 0):
        raise MeshTanglingError("position map is not monotone; cannot invert")
    spl = CubicSpline(a_nodes, q)
    dspl = spl.derivative()
    mask = (x >= q[0]) & (x <= q[-1])
    a = np.interp(x, q, a_nodes)
    lo, hi = grid.extents[0]
    for _ in range(NEWTON_MAX_ITER):
        res = spl(a) - x
        step = res / dspl(a)
        a = np.clip(a - step, lo, hi)
        if np.all(np.abs(step[mask]) <= tol * (1.0 + np.abs(a[mask]))):
            break
    res = np.abs(spl(a) - x)
    mask &= res <= 1e3 * tol * (1.0 + np.abs(x))
    return a[None], mask


def _invert_2d(q: np.ndarray, grid: LabelGrid, x: np.ndarray, tol: float):
    # x: (2, npts)
    ax0, ax1 = grid.axes()
    s0 = RectBivariateSpline(ax0, ax1, q[0], kx=3, ky=3, s=0)
    s1 = RectBivariateSpline(ax0, ax1, q[1], kx=3, ky=3, s=0)
    labels = grid.mesh().reshape(2, -1)
    tree = cKDTree(q.reshape(2, -1).T)
    _, idx = tree.query(x.T)
    a = labels[:, idx].copy()
    (lo0, hi0), (lo1, hi1) = grid.extents
    scale = np.max(np.abs(q)) + 1.0
    # Newton only on points still moving; points outside the hull stall at the
    # label boundary and drop out instead of using every iteration
    active = np.arange(x.shape[1])
    for _ in range(NEWTON_MAX_ITER):
        if active.size == 0:
            break
        b0, b1 = a[0, active], a[1, active]
        r0 = s0.ev(b0, b1) - x[0, active]
        r1 = s1.ev(b0, b1) - x[1, active]
        f00, f01 = s0.ev(b0, b1, dx=1), s0.ev(b0, b1, dy=1)
        f10, f11 = s1.ev(b0, b1, dx=1), s1.ev(b0, b1, dy=1)
        det = f00 * f11 - f01 * f10
        det = np.where(np.abs(det) < 1e-14, np.nan, det)
        n0 = np.clip(b0 - (f11 * r0 - f01 * r1) / det, lo0, hi0)
        n1 = np.clip(b1 - (-f10 * r0 + f00 * r1) / det, lo1, hi1)
        ok = np.isfinite(n0) & np.isfinite(n1)
        a[0, active[ok]], a[1, active[ok]] = n0[ok], n1[ok]
        moved = np.hypot(n0 - b0, n1 - b1)
        done = ~ok | (np.hypot(r0, r1) <= tol * scale) | (moved <= tol * (1.0 + np.abs(b0) + np.abs(b1)))
        active = active[~done]
    r0 = s0.ev(a[0], a[1]) - x[0]
    r1 = s1.ev(a[0], a[1]) - x[1]
    mask = np.hypot(r0, r1) <= 1e3 * tol * scale
    return a, mask


def invert_labels(flow: FlowState, grid: LabelGrid, xgrid: LabelGrid, tol: float = 1e-12):
    """Labels ``a(x, t)`` at the nodes of ``xgrid`` and a mask of nodes inside the fluid.

    1D inverts the monotone map by bracketing plus Newton on a cubic spline; 2D
    runs Newton on the bicubic-interpolated map seeded from the nearest particle.
    Nodes that fail to converge are marked outside the hull.
    """
    if xgrid.dim != grid.dim:
        raise ConfigurationError("position grid and label grid dimensions differ")
    x = xgrid.mesh().reshape(grid.dim, -1)
    if grid.dim == 1:
        a, mask = _invert_1d(flow.q, grid, x[0], tol)
    elif grid.dim == 2:
        a, mask = _invert_2d(flow.q, grid, x, tol)
    else:
        raise ConfigurationError("label inversion is implemented for dim 1 and 2")
    return a.reshape((grid.dim,) + xgrid.counts), mask.reshape(xgrid.counts)


def to_eulerian(flow: FlowState, tensors: DeformationTensors, rho0: np.ndarray,
                xgrid: LabelGrid, grid: LabelGrid, inversion=None) -> EulerianField:
    """Density and velocity on ``xgrid``: ``rho = rho0/J`` and ``v = dq/dt`` at ``a(x, t)``."""
    labels, mask = inversion if inversion is not None else invert_labels(flow, grid, xgrid)
    pts = labels.reshape(grid.dim, -1)
    rho = sample_at_labels(rho0 / tensors.J, grid, pts).reshape(xgrid.counts)
    v = sample_at_labels(flow.v, grid, pts).reshape((grid.dim,) + xgrid.counts)
    rho = np.where(mask, np.maximum(rho, 0.0), 0.0)
    v = np.where(mask, v, 0.0)
    return EulerianField(xgrid, rho, v, flow.t, mask=mask, extras={"labels": labels})
