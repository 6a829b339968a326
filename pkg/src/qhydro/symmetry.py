"""Schrödinger-group transformations, potential admissibility, relabelling and superposition."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError, InadmissibleError, UnsupportedTransformError
from .forces import PotentialSpec, evaluate_weber, log_density
from .integrator import InitialData
from .kinematics import (EulerianField, FlowState, LabelInterpolator, deformation_from_positions,
                         grad_q, invert_labels, sample_at_labels)
from .lattice import LabelGrid, derivative, make_grid

ADMISSIBILITY_TOLERANCE = 1e-8

# constraint each one-parameter family imposes on V, written out
CONSTRAINTS = {
    "energy": "dV/dt = 0",
    "translation": "c . grad V = 0",
    "rotation": "omega_ij q_j dV/dq_i = 0",
    "boost": "u . grad V = 0",
    "dilation": "q . grad V + 2 t dV/dt + 2 V = 0",
    "extension": "q . grad V + t dV/dt + 2 V = 0",
}


def _vector(values, dim, name):
    arr = np.zeros(dim) if values is None or len(values) == 0 else np.asarray(values, float)
    if arr.shape != (dim,):
        raise ConfigurationError(f"{name} needs {dim} components, got {arr.shape}")
    return tuple(float(x) for x in arr)


@dataclass(frozen=True)
class GroupParams:
    """Parameters of the Schrödinger group in ``dim`` dimensions.

    ``rotation`` holds the independent entries ``omega_ij`` for ``i < j`` in
    row-major order; the full matrix is antisymmetric by construction.
    """

    dim: int
    d: float = 0.0
    beta: float = 0.0
    alpha: float = 0.0
    rotation: tuple = ()
    u: tuple = ()
    c: tuple = ()

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ConfigurationError(f"dim must be 1, 2 or 3, got {self.dim}")
        n_rot = self.dim * (self.dim - 1) // 2
        rot = tuple(float(x) for x in self.rotation) or (0.0,) * n_rot
        if len(rot) != n_rot:
            raise ConfigurationError(f"rotation needs {n_rot} entries in {self.dim}D")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "u", _vector(self.u, self.dim, "u"))
        object.__setattr__(self, "c", _vector(self.c, self.dim, "c"))

    @classmethod
    def count(cls, dim: int) -> int:
        """Number of independent parameters (12 in 3D)."""
        return 3 + dim * (dim - 1) // 2 + 2 * dim

    @property
    def omega(self) -> np.ndarray:
        w = np.zeros((self.dim, self.dim))
        iu = np.triu_indices(self.dim, 1)
        w[iu] = self.rotation
        return w - w.T

    def active(self) -> list[str]:
        names = []
        if self.d:
            names.append("energy")
        if any(self.c):
            names.append("translation")
        if any(self.rotation):
            names.append("rotation")
        if any(self.u):
            names.append("boost")
        if self.beta:
            names.append("dilation")
        if self.alpha:
            names.append("extension")
        return names

    def xi0(self, t):
        return self.d + self.beta * t + self.alpha * t ** 2

    def xi0_dot(self, t):
        return self.beta + 2 * self.alpha * t

    def xi0_ddot(self, t):
        return 2 * self.alpha

    def scale_rate(self, t):
        return 0.5 * self.beta + self.alpha * t

    def _col(self, vec, ndim):
        return np.asarray(vec).reshape((self.dim,) + (1,) * (ndim - 1))

    def eta(self, q, t):
        """Position displacement ``((beta/2 + alpha t) + omega) q - u t + c``."""
        q = np.asarray(q, float)
        return (self.scale_rate(t) * q + np.einsum("ij,j...->i...", self.omega, q)
                - self._col(self.u, q.ndim) * t + self._col(self.c, q.ndim))

    def eta_dot(self, q, v, t):
        return (self.scale_rate(t) * v + self.alpha * q
                + np.einsum("ij,j...->i...", self.omega, v) - self._col(self.u, q.ndim))

    def eta_ddot(self, q, v, acc, t):
        return (self.scale_rate(t) * acc + 2 * self.alpha * v
                + np.einsum("ij,j...->i...", self.omega, acc))

    def phase_shift(self, q, mass):
        """``m (alpha q^2 / 2 - u . q)``; the gauge term of the transformation."""
        q = np.asarray(q, float)
        return mass * (0.5 * self.alpha * np.sum(q ** 2, axis=0)
                       - np.einsum("i,i...->...", np.asarray(self.u), q))

    def lambda0(self, q, rho0, mass):
        return rho0 * self.phase_shift(q, mass)


def charge_params(name: str, dim: int, axis: int = 0) -> GroupParams:
    """Unit parameters selecting one of the six kinematical charges."""
    unit = tuple(1.0 if k == axis else 0.0 for k in range(dim))
    if name == "energy":
        return GroupParams(dim, d=1.0)
    if name == "momentum":
        return GroupParams(dim, c=unit)
    if name == "angular":
        if dim < 2:
            raise ConfigurationError("angular momentum is empty in 1D")
        rot = [0.0] * (dim * (dim - 1) // 2)
        rot[axis] = 1.0
        return GroupParams(dim, rotation=tuple(rot))
    if name == "galilean":
        return GroupParams(dim, u=unit)
    if name == "dilation":
        return GroupParams(dim, beta=1.0)
    if name == "extension":
        return GroupParams(dim, alpha=1.0)
    raise ConfigurationError(f"unknown charge {name!r}")


# -- admissibility -----------------------------------------------------------------------

@dataclass
class AdmissibilityReport:
    residuals: dict
    scale: float
    tolerance: float = ADMISSIBILITY_TOLERANCE

    @property
    def failed(self) -> list[str]:
        return [k for k, r in self.residuals.items() if r > self.tolerance * self.scale]

    @property
    def passed(self) -> bool:
        return not self.failed

    def raise_if_failed(self) -> None:
        if self.failed:
            name = self.failed[0]
            raise InadmissibleError(
                f"{name} is not a symmetry of this potential: requires {CONSTRAINTS[name]} "
                f"(max residual {self.residuals[name]:.3e})",
                constraint=CONSTRAINTS[name], residual=self.residuals[name])


def check_potential_admissibility(params: GroupParams, potential: PotentialSpec,
                                  points: np.ndarray, times=(0.0, 0.5, 1.0)
                                  ) -> AdmissibilityReport:
    """Evaluate the restriction each active parameter places on ``V`` at sample points.

    ``points`` has shape ``(dim, ...)``.  A constraint passes when its largest
    residual is at most ``1e-8`` times the scale ``max(|V|, |q . grad V|, |t dV/dt|)``.
    """
    q = np.asarray(points, float)
    if q.shape[0] != params.dim:
        raise ConfigurationError("sample points do not match the parameter dimension")
    residuals, scale = {}, 0.0
    for t in times:
        V = potential.value(q, t)
        g = potential.gradient(q, t)
        Vt = potential.time_derivative(q, t)
        qg = np.sum(q * g, axis=0)
        scale = max(scale, float(np.max(np.abs(V))), float(np.max(np.abs(qg))),
                    float(np.max(np.abs(t * Vt))))
        checks = {
            "energy": Vt,
            "translation": np.einsum("i,i...->...", np.asarray(params.c), g),
            "rotation": np.einsum("ij,j...,i...->...", params.omega, q, g),
            "boost": np.einsum("i,i...->...", np.asarray(params.u), g),
            "dilation": qg + 2 * t * Vt + 2 * V,
            "extension": qg + t * Vt + 2 * V,
        }
        for name in params.active():
            r = float(np.max(np.abs(checks[name])))
            residuals[name] = max(residuals.get(name, 0.0), r)
    return AdmissibilityReport(residuals, scale if scale > 0 else 1.0)


# -- finite transformations -------------------------------------------------------------

def _rotation_matrix(params: GroupParams) -> np.ndarray:
    from scipy.linalg import expm
    return expm(params.omega)


def _check_finite_subgroup(params: GroupParams) -> None:
    if params.beta or params.alpha:
        raise UnsupportedTransformError(
            "finite dilation and extension are not available; use apply_infinitesimal")


def apply_finite_transform(obj, params: GroupParams, mass: float = 1.0, hbar: float = 1.0):
    """Apply rotation, then boost, then translation, then a time shift.

    Flow states: ``q -> R q - u t + c``, ``v -> R v - u``,
    ``S -> S - m (u . Rq - u^2 t / 2)``, ``t -> t + d``.  Eulerian fields are
    carried to the same image; translation and boost move the grid, rotation
    resamples onto it (2D).
    """
    _check_finite_subgroup(params)
    if isinstance(obj, FlowState):
        return _transform_flow(obj, params, mass)
    if isinstance(obj, EulerianField):
        return _transform_field(obj, params, mass, hbar)
    raise ConfigurationError(f"cannot transform {type(obj).__name__}")


def _transform_flow(flow: FlowState, params: GroupParams, mass: float) -> FlowState:
    R = _rotation_matrix(params)
    col = (params.dim,) + (1,) * (flow.q.ndim - 1)
    u = np.asarray(params.u).reshape(col)
    c = np.asarray(params.c).reshape(col)
    q = np.einsum("ij,j...->i...", R, flow.q)
    v = np.einsum("ij,j...->i...", R, flow.v)
    S = flow.S - mass * (np.sum(u * q, axis=0) - 0.5 * float(np.dot(params.u, params.u)) * flow.t)
    return FlowState(flow.t + params.d, q - u * flow.t + c, v - u, S, flow.multivalued_phase)


def _transform_field(fld: EulerianField, params: GroupParams, mass: float,
                     hbar: float) -> EulerianField:
    grid = fld.grid
    rho, v, psi, mask = fld.rho, fld.v, fld.psi, fld.mask
    if any(params.rotation):
        if grid.dim != 2:
            raise UnsupportedTransformError("finite rotation of Eulerian fields is 2D only")
        R = _rotation_matrix(params)
        back = np.einsum("ji,j...->i...", R, grid.mesh()).reshape(2, -1)
        inside = np.ones(back.shape[1], bool)
        for k, (lo, hi) in enumerate(grid.extents):
            inside &= (back[k] >= lo) & (back[k] <= hi)

        def resample(f):
            return np.where(inside, LabelInterpolator(grid, f)(back), 0.0).reshape(grid.counts)

        rho = resample(rho)
        v = np.einsum("ij,j...->i...", R, np.stack([resample(v[k]) for k in range(2)]))
        if psi is not None:
            psi = resample(psi.real) + 1j * resample(psi.imag)
        mask = inside.reshape(grid.counts) & (resample(mask.astype(float)) > 0.5
                                              if mask is not None else True)
    shift = np.asarray(params.c) - np.asarray(params.u) * fld.t
    x = grid.mesh()
    if psi is not None and any(params.u):
        u = np.asarray(params.u).reshape((grid.dim,) + (1,) * grid.dim)
        psi = psi * np.exp(-1j * mass * (np.sum(u * x, axis=0)
                                         - 0.5 * float(np.dot(params.u, params.u)) * fld.t) / hbar)
    v = v - np.asarray(params.u).reshape((grid.dim,) + (1,) * grid.dim)
    new_grid = LabelGrid(grid.dim, tuple((lo + s, hi + s) for (lo, hi), s in
                                         zip(grid.extents, shift)), grid.counts)
    return EulerianField(new_grid, rho, v, fld.t + params.d, psi=psi, mask=mask,
                         extras=dict(fld.extras))


# -- infinitesimal transformations ------------------------------------------------------

@dataclass
class InfinitesimalResult:
    flow: FlowState
    residual: float  # max |EL residual| over the good fluid
    residual_field: np.ndarray


def euler_lagrange_residual(q, acc, t, init: InitialData, grid: LabelGrid) -> np.ndarray:
    """``|d2q/dt2 + (grad V + grad V_Q)/m|`` per node, with the quantum force at ``q``."""
    ev = evaluate_weber(q, t, log_density(init.rho0), init.potential, grid, init.hbar, init.mass)
    return np.sqrt(np.sum((acc - ev.accel) ** 2, axis=0))


def apply_infinitesimal(flow: FlowState, init: InitialData, grid: LabelGrid,
                        params: GroupParams, eps: float = 1e-4,
                        acc: np.ndarray | None = None) -> InfinitesimalResult:
    """Transform ``(t, q)`` by ``t + eps xi0``, ``q + eps eta`` and measure the residual.

    The acceleration of the transformed trajectory follows from the chain rule
    for the reparametrised time; the input acceleration defaults to the force
    law at ``q``, so the residual vanishes at ``eps = 0``.
    """
    t, q, v = flow.t, flow.q, flow.v
    if acc is None:
        acc = evaluate_weber(q, t, log_density(init.rho0), init.potential, grid, init.hbar,
                             init.mass).accel
    s = 1 + eps * params.xi0_dot(t)
    q_new = q + eps * params.eta(q, t)
    num = v + eps * params.eta_dot(q, v, t)
    v_new = num / s
    acc_new = ((acc + eps * params.eta_ddot(q, v, acc, t)) / s
               - num * eps * params.xi0_ddot(t) / s ** 2) / s
    t_new = t + eps * params.xi0(t)
    S_new = flow.S + eps * params.phase_shift(q, init.mass)
    res = euler_lagrange_residual(q_new, acc_new, t_new, init, grid)
    good = init.good_mask(grid)
    new_flow = FlowState(t_new, q_new, v_new, S_new, flow.multivalued_phase)
    return InfinitesimalResult(new_flow, float(np.max(res[good])), res)


# -- relabelling ----------------------------------------------------------------------

@dataclass(frozen=True)
class RelabelMap:
    """Time-independent label map ``a -> a'`` with its inverse and Jacobian ``D = det(da'/da)``."""

    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    info: dict = field(default_factory=dict)


def identity_map(dim: int) -> RelabelMap:
    return RelabelMap(lambda a: np.array(a, float), lambda b: np.array(b, float),
                      lambda a: np.ones(np.shape(a)[1:]), "identity")


def affine_map(matrix, shift) -> RelabelMap:
    """``a' = M a + b``; needs ``det M > 0``."""
    M = np.atleast_2d(np.asarray(matrix, float))
    b = np.asarray(shift, float).reshape(-1)
    det = float(np.linalg.det(M))
    if det <= 0:
        raise ConfigurationError(f"affine relabel needs det > 0, got {det}")
    Minv = np.linalg.inv(M)
    col = (len(b),)

    def fwd(a):
        a = np.asarray(a, float)
        return np.einsum("ij,j...->i...", M, a) + b.reshape(col + (1,) * (a.ndim - 1))

    def inv(ap):
        ap = np.asarray(ap, float)
        return np.einsum("ij,j...->i...", Minv, ap - b.reshape(col + (1,) * (ap.ndim - 1)))

    return RelabelMap(fwd, inv, lambda a: np.full(np.shape(a)[1:], det), "affine")


def _newton_inverse(f, df, target, guess, lo, hi, tol=1e-14, iters=60):
    x = np.clip(np.asarray(guess, float), lo, hi)
    for _ in range(iters):
        step = (f(x) - target) / df(x)
        x = np.clip(x - step, lo, hi)
        if np.all(np.abs(step) <= tol * (1 + np.abs(x))):
            break
    return x


def warp_map_1d(amplitude: float, wavenumber: float, extents=(-np.inf, np.inf)) -> RelabelMap:
    """``a' = a + A sin(k a)``; monotone when ``|A k| < 1``."""
    if abs(amplitude * wavenumber) >= 1:
        raise ConfigurationError("warp map needs |A k| < 1 to stay invertible")
    A, k = amplitude, wavenumber

    def fwd(a):
        return np.asarray(a, float) + A * np.sin(k * np.asarray(a, float))

    def inv(ap):
        ap = np.asarray(ap, float)
        lo, hi = ap.min() - abs(A) - 1, ap.max() + abs(A) + 1
        return _newton_inverse(lambda x: x + A * np.sin(k * x), lambda x: 1 + A * k * np.cos(k * x),
                               ap, ap, lo, hi)

    return RelabelMap(fwd, inv, lambda a: 1 + A * k * np.cos(k * np.asarray(a, float)[0]),
                      "warp", {"amplitude": A, "wavenumber": k})


def uniform_density_map(rho0: np.ndarray, grid: LabelGrid, k: float = 1.0) -> RelabelMap:
    """1D map ``a' = (1/k) int_{a_min}^a rho0`` under which the new reference density is ``k``.

    ``rho0`` is represented by a cubic spline; its antiderivative is the map,
    so ``D = rho0 / k`` is consistent with the map to rounding.  The image of
    the grid is ``[0, 1/k]`` for a normalised density.
    """
    if grid.dim != 1:
        raise ConfigurationError("uniform-density relabelling is 1D")
    if k <= 0:
        raise ConfigurationError("k must be positive")
    a = grid.axes()[0]
    spl = CubicSpline(a, rho0)
    cdf = spl.antiderivative()
    base = float(cdf(a[0]))
    lo, hi = grid.extents[0]
    fine = np.linspace(lo, hi, 8 * len(a))
    fine_cdf = (cdf(fine) - base) / k

    def fwd(x):
        return ((cdf(np.asarray(x, float)[0]) - base) / k)[None]

    def inv(ap):
        ap = np.asarray(ap, float)[0]
        guess = np.interp(ap, np.maximum.accumulate(fine_cdf), fine)
        return _newton_inverse(lambda x: (cdf(x) - base) / k, lambda x: spl(x) / k,
                               ap, guess, lo, hi)[None]

    return RelabelMap(fwd, inv, lambda x: spl(np.asarray(x, float)[0]) / k, "uniform-density",
                      {"k": k})


def relabel(flow: FlowState, init: InitialData, remap: RelabelMap, grid: LabelGrid,
            new_grid: LabelGrid) -> tuple[FlowState, InitialData]:
    """Carry the flow onto labels ``a'``: ``q'(a') = q(a)``, ``rho0'(a') = rho0(a) / D``.

    Nodal fields are sampled at ``a(a')`` with cubic interpolation.  The
    returned initial data is not re-normalised (the new label grid may cover
    only part of the fluid).
    """
    old = remap.inverse(new_grid.mesh())
    for k, (lo, hi) in enumerate(grid.extents):
        if np.any(old[k] < lo - 1e-12) or np.any(old[k] > hi + 1e-12):
            raise ConfigurationError("new label grid reaches outside the old label domain")
    D = remap.jacobian(old)
    if np.any(D <= 0):
        raise ConfigurationError("relabel map has D <= 0")
    pts = old.reshape(grid.dim, -1)

    def carry(f):
        return sample_at_labels(f, grid, pts).reshape(np.shape(f)[:np.ndim(f) - grid.dim]
                                                      + new_grid.counts)

    rho0_new = carry(init.rho0) / D
    new_flow = FlowState(flow.t, carry(flow.q), carry(flow.v), carry(flow.S),
                         flow.multivalued_phase)
    center = init.core_center
    if center is not None:
        center = tuple(np.asarray(remap.forward(np.asarray(center, float).reshape(-1, 1)))[:, 0])
    new_init = replace(init, rho0=rho0_new,
                       S0=None if init.S0 is None else carry(init.S0),
                       v0=None if init.v0 is None else carry(init.v0),
                       core_center=center, labelling=remap.name)
    return new_flow, new_init


def stream_flux(stream: np.ndarray, grid: LabelGrid) -> np.ndarray:
    """Divergence-free 2D field ``rho0 xi = (ds/da1, -ds/da0)`` from a stream function."""
    if grid.dim != 2:
        raise ConfigurationError("stream-function relabelling fields are 2D")
    return np.stack([derivative(stream, grid, 1, 1), -derivative(stream, grid, 1, 0)])


def gaussian_stream(grid: LabelGrid, center=(0.0, 0.0), width: float = 1.0,
                    amplitude: float = 1.0) -> np.ndarray:
    a = grid.mesh()
    c = np.asarray(center, float).reshape(2, 1, 1)
    return amplitude * np.exp(-np.sum((a - c) ** 2, axis=0) / width ** 2)


def annulus_stream(grid: LabelGrid, center=(0.0, 0.0), radius: float = 1.0,
                   width: float | None = None) -> np.ndarray:
    """Smoothed indicator of a disc; its curl is a loop kernel on the circle of ``radius``.

    The default edge width is two label spacings.
    """
    if width is None:
        width = 2 * max(grid.spacing)
    a = grid.mesh()
    r = np.sqrt(np.sum((a - np.asarray(center, float).reshape(2, 1, 1)) ** 2, axis=0))
    return 0.5 * (1 - np.tanh((r - radius) / width))


def relabel_constraint_residual(flux: np.ndarray, grid: LabelGrid) -> float:
    """Largest ``|d(rho0 xi_i)/da_i|``; zero means ``rho0`` is left invariant."""
    div = sum(derivative(flux[i], grid, 1, i) for i in range(grid.dim))
    return float(np.max(np.abs(div)))


# -- superposition as relabelling -----------------------------------------------------

@dataclass
class SuperpositionReport:
    xi: np.ndarray  # label displacement per unit parameter change
    dq_dA: np.ndarray
    constraint_residual: float  # max |F xi + dq/dA|
    extras: dict = field(default_factory=dict)


def superposition_relabel(flow_minus: FlowState, flow_plus: FlowState, grid: LabelGrid,
                          delta: float, flow_mid: FlowState | None = None,
                          mask: np.ndarray | None = None) -> SuperpositionReport:
    """Relabelling field generating the parameter derivative of the flow.

    ``dq/dA`` is a central difference of flows at ``A - delta`` and
    ``A + delta``; ``xi = -J^-1 cof^T dq/dA`` uses the deformation of the
    central flow (the mean of the two when it is not given).
    """
    if flow_minus.q.shape != flow_plus.q.shape or flow_minus.q.shape[1:] != grid.counts:
        raise ConfigurationError("flows must share the label grid")
    if abs(flow_minus.t - flow_plus.t) > 1e-12:
        raise ConfigurationError("flows must be at the same time")
    q_mid = flow_mid.q if flow_mid is not None else 0.5 * (flow_minus.q + flow_plus.q)
    dq = (flow_plus.q - flow_minus.q) / (2 * delta)
    tensors = deformation_from_positions(q_mid, grid)
    xi = -np.einsum("ij...,i...->j...", tensors.cof, dq) / tensors.J
    res = np.sqrt(np.sum((np.einsum("ij...,j...->i...", tensors.F, xi) + dq) ** 2, axis=0))
    if mask is None:
        mask = np.ones(grid.counts, bool)
    return SuperpositionReport(xi, dq, float(np.max(res[mask])))


def parameter_derivative_fields(flows, inits, grid: LabelGrid, xgrid: LabelGrid,
                                delta: float) -> EulerianField:
    """``d rho / dA`` and ``d v / dA`` at fixed position, from the Lagrangian side.

    With ``f(q(a, A), A)`` known per particle, the fixed-position derivative
    is ``d/dA [f at q] - grad f . dq/dA``; everything is evaluated on the
    central flow and sampled on ``xgrid``.  ``flows``/``inits`` are the
    triples at ``A - delta``, ``A``, ``A + delta``.
    """
    (fm, f0, fp), (im, i0, ip) = flows, inits
    tensors = [deformation_from_positions(f.q, grid) for f in (fm, f0, fp)]
    rho = [i.rho0 / t.J for i, t in zip((im, i0, ip), tensors)]
    dq = (fp.q - fm.q) / (2 * delta)
    drho = (rho[2] - rho[0]) / (2 * delta) - np.sum(grad_q(rho[1], tensors[1], grid) * dq, axis=0)
    dv = (fp.v - fm.v) / (2 * delta) - np.stack(
        [np.sum(grad_q(f0.v[i], tensors[1], grid) * dq, axis=0) for i in range(grid.dim)])
    labels, mask = invert_labels(f0, grid, xgrid)
    pts = labels.reshape(grid.dim, -1)
    drho_x = np.where(mask, sample_at_labels(drho, grid, pts).reshape(xgrid.counts), 0.0)
    dv_x = np.where(mask, sample_at_labels(dv, grid, pts).reshape((grid.dim,) + xgrid.counts), 0.0)
    return EulerianField(xgrid, drho_x, dv_x, f0.t, mask=mask)


__all__ = [
    "GroupParams", "charge_params", "CONSTRAINTS", "AdmissibilityReport",
    "check_potential_admissibility", "apply_finite_transform", "apply_infinitesimal",
    "euler_lagrange_residual", "InfinitesimalResult", "RelabelMap", "identity_map", "affine_map",
    "warp_map_1d", "uniform_density_map", "relabel", "stream_flux", "gaussian_stream",
    "annulus_stream", "relabel_constraint_residual", "SuperpositionReport",
    "superposition_relabel", "parameter_derivative_fields", "make_grid",
]
