"""Wavefunction on a position grid built from trajectories, the initial density and the co-integrated phase."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ConfigurationError
from .forces import PotentialSpec, quantum_potential
from .integrator import InitialData
from .kinematics import (FlowState, deformation_from_positions, invert_labels,
                         sample_at_labels)
from .lattice import LabelGrid, derivative, integrate
from .oracle import euler_residuals, extract_fields, identity_tensors


@dataclass
class ReconstructedWave:
    """``psi = sqrt(rho) exp(i S / hbar)`` on ``grid``, zero outside ``mask``.

    ``density_only`` is set for multivalued-phase flows, where ``psi`` carries
    the amplitude alone.  The phase is reported as integrated, without
    pinning the global constant.
    """

    grid: LabelGrid
    psi: np.ndarray
    mask: np.ndarray
    t: float
    density_only: bool = False
    phase_convention: str = "as-integrated"
    extras: dict = field(default_factory=dict)

    @property
    def rho(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def norm(self) -> float:
        return float(integrate(self.rho, self.grid, warn=False))


def reconstruct(flow: FlowState, init: InitialData, grid: LabelGrid, xgrid: LabelGrid,
                inversion=None) -> ReconstructedWave:
    """Invert the flow map on ``xgrid`` and assemble the wavefunction there.

    ``rho(x) = rho0/J`` and ``S(x)`` are the per-particle values interpolated
    at the label ``a(x, t)``.
    """
    tensors = deformation_from_positions(flow.q, grid)
    labels, mask = inversion if inversion is not None else invert_labels(flow, grid, xgrid)
    pts = labels.reshape(grid.dim, -1)
    rho = sample_at_labels(init.rho0 / tensors.J, grid, pts).reshape(xgrid.counts)
    rho = np.where(mask, np.maximum(rho, 0.0), 0.0)
    if flow.multivalued_phase:
        psi = np.sqrt(rho).astype(complex)
        phase = None
    else:
        phase = sample_at_labels(flow.S, grid, pts).reshape(xgrid.counts)
        psi = np.where(mask, np.sqrt(rho) * np.exp(1j * phase / init.hbar), 0.0)
    wave = ReconstructedWave(xgrid, psi, mask, flow.t, density_only=flow.multivalued_phase,
                             extras={"labels": labels})
    if phase is not None:
        wave.extras["phase"] = np.where(mask, phase, 0.0)
    wave.extras["norm"] = wave.norm()
    return wave


@dataclass(frozen=True)
class WaveComparison:
    amplitude_l2: float  # || |psi_a| - |psi_b| ||_2
    density_l2: float  # || rho_a - rho_b ||_2
    phase_error: float  # max |dS|/hbar over the weighted region after removing the mean
    fidelity: float  # |<psi_a|psi_b>|

    def to_dict(self) -> dict:
        return {"amplitude_l2": self.amplitude_l2, "density_l2": self.density_l2,
                "phase_error": self.phase_error, "fidelity": self.fidelity}


def compare_waves(psi_a: np.ndarray, psi_b: np.ndarray, grid: LabelGrid,
                  mask: np.ndarray | None = None, phase_floor: float = 1e-3) -> WaveComparison:
    """Compare two wavefunctions on a common grid, insensitive to a global phase.

    The phase difference is measured where both densities exceed
    ``phase_floor`` times the peak density, after subtracting its
    density-weighted mean.
    """
    psi_a, psi_b = np.asarray(psi_a, complex), np.asarray(psi_b, complex)
    if psi_a.shape != psi_b.shape or psi_a.shape != grid.counts:
        raise ConfigurationError("wavefunctions must share the grid")
    if mask is None:
        mask = np.ones(grid.counts, dtype=bool)
    if not np.any(mask):
        raise ConfigurationError("comparison mask is empty")
    a, b = np.where(mask, psi_a, 0), np.where(mask, psi_b, 0)
    amp = np.sqrt(integrate((np.abs(a) - np.abs(b)) ** 2, grid, warn=False))
    dens = np.sqrt(integrate((np.abs(a) ** 2 - np.abs(b) ** 2) ** 2, grid, warn=False))
    prod = a * np.conj(b)
    overlap = integrate(prod, grid, warn=False)
    rho = np.minimum(np.abs(a), np.abs(b)) ** 2
    region = rho > phase_floor * rho.max() if rho.max() > 0 else mask
    mean = np.angle(np.sum(prod[region]))
    dphi = np.angle(prod[region] * np.exp(-1j * mean))
    return WaveComparison(float(amp), float(dens), float(np.max(np.abs(dphi))), float(abs(overlap)))


def phase_agreement_1d(wave: ReconstructedWave, velocity: np.ndarray, mass: float = 1.0,
                       hbar: float = 1.0, rel_floor: float = 1e-3) -> float:
    """Largest gap between the transported phase and ``int m v dx`` (1D).

    Both are anchored at the density maximum; the comparison runs over the
    connected region around it where the density exceeds ``rel_floor`` times
    its peak.  ``velocity`` is sampled on ``wave.grid``.
    """
    if wave.grid.dim != 1 or wave.density_only:
        raise ConfigurationError("phase agreement needs a 1D single-valued reconstruction")
    x = wave.grid.axes()[0]
    rho = wave.rho
    peak = int(np.argmax(rho))
    good = rho > rel_floor * rho[peak]
    lo, hi = peak, peak
    while lo > 0 and good[lo - 1]:
        lo -= 1
    while hi < len(x) - 1 and good[hi + 1]:
        hi += 1
    seg = slice(lo, hi + 1)
    quad = cumulative_trapezoid(mass * np.asarray(velocity)[seg], x[seg], initial=0.0)
    quad -= quad[peak - lo]
    phase = wave.extras["phase"][seg] - wave.extras["phase"][peak]
    return float(np.max(np.abs(phase - quad)) / hbar)


def reconstruction_residuals(waves: list, potential: PotentialSpec, hbar: float = 1.0,
                             mass: float = 1.0) -> dict:
    """Continuity and quantum Hamilton-Jacobi residuals across reconstructed snapshots.

    The Hamilton-Jacobi residual ``dS/dt + |grad S|^2/2m + V + V_Q`` uses
    ``S`` from the wave phase; it is weighted by ``rho`` and reported as an L2 norm.
    """
    if len(waves) < 3:
        raise ConfigurationError("need at least 3 snapshots")
    if any(w.density_only for w in waves):
        raise ConfigurationError("residuals need single-valued reconstructions")
    grid = waves[0].grid
    fields = [extract_fields(w.psi, grid, w.t, hbar, mass, rel_floor=1e-6) for w in waves]
    out = euler_residuals(fields, potential, hbar, mass)
    tensors = identity_tensors(grid)
    x = grid.mesh()
    hj = []
    for k in range(1, len(waves) - 1):
        prev, cur, nxt = waves[k - 1], waves[k], waves[k + 1]
        dt = nxt.t - prev.t
        dS = hbar * np.angle(nxt.psi * np.conj(prev.psi)) / dt
        f = fields[k]
        floor = 1e-6 * f.rho.max()
        vq = quantum_potential(f.rho, tensors, grid, hbar, mass, floor)
        res = dS + 0.5 * mass * np.sum(f.v ** 2, axis=0) + potential.value(x, cur.t) + vq
        good = f.rho > floor
        for w in (prev, cur, nxt):
            good &= w.mask
        hj.append(np.sqrt(integrate(np.where(good, f.rho * res ** 2, 0.0), grid, warn=False)))
    out["hamilton_jacobi_l2"] = float(max(hj))
    return out
