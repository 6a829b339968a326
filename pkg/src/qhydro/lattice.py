"""Uniform grids, finite-difference stencils and quadrature.

Fields live on a :class:`LabelGrid` as numpy arrays of shape ``grid.counts``
(``indexing='ij'``, row-major node enumeration).  Vector fields carry a leading
component axis, ``(dim, *counts)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import BoundaryLeakageWarning, ConfigurationError, NumericError

MIN_COUNT = 16

# default accuracy order per derivative order
DEFAULT_ACCURACY = {1: 4, 2: 4, 3: 2, 4: 2}


@dataclass(frozen=True)
class LabelGrid:
    """Uniform rectangular grid.  Used both for labels ``a`` and positions ``x``."""

    dim: int
    extents: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (n - 1) for (lo, hi), n in zip(self.extents, self.counts))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linspace(lo, hi, n) for (lo, hi), n in zip(self.extents, self.counts))

    def mesh(self) -> np.ndarray:
        """Node coordinates, shape ``(dim, *counts)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))

    def refined(self, factor: int = 2) -> "LabelGrid":
        """Same extents with spacing divided by ``factor``."""
        counts = tuple((n - 1) * factor + 1 for n in self.counts)
        return LabelGrid(self.dim, self.extents, counts)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "extents": [list(e) for e in self.extents],
                "counts": list(self.counts)}


def make_grid(dim, extents, counts) -> LabelGrid:
    """Build a grid.  ``extents`` and ``counts`` may be given once for all axes.

    >>> make_grid(1, (-10, 10), 21).spacing
    (1.0,)
    """
    if dim not in (1, 2, 3):
        raise ConfigurationError(f"dim must be 1, 2 or 3, got {dim}")
    ext = np.asarray(extents, dtype=float)
    if ext.ndim == 1:
        ext = np.tile(ext, (dim, 1))
    if ext.shape != (dim, 2):
        raise ConfigurationError(f"extents must have shape ({dim}, 2), got {ext.shape}")
    cnt = np.atleast_1d(np.asarray(counts))
    if cnt.size == 1:
        cnt = np.repeat(cnt, dim)
    if cnt.shape != (dim,):
        raise ConfigurationError(f"counts must have {dim} entries")
    if np.any(cnt != np.round(cnt)):
        raise ConfigurationError("counts must be integers")
    cnt = cnt.astype(int)
    if np.any(cnt < MIN_COUNT):
        raise ConfigurationError(f"counts must be >= {MIN_COUNT} per axis, got {cnt.tolist()}")
    if not np.all(np.isfinite(ext)) or np.any(ext[:, 1] <= ext[:, 0]):
        raise ConfigurationError(f"degenerate extents {ext.tolist()}")
    return LabelGrid(dim, tuple((float(lo), float(hi)) for lo, hi in ext),
                     tuple(int(n) for n in cnt))


def fd_weights(offsets, order: int) -> np.ndarray:
    """Finite-difference weights at 0 for the given stencil offsets (Fornberg)."""
    z = np.asarray(offsets, dtype=float)
    n = len(z)
    c = np.zeros((n, order + 1))
    c1, c4 = 1.0, z[0]
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, z[i]
        for j in range(i):
            c3 = z[i] - z[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


@dataclass(frozen=True)
class StencilOperator:
    """Derivative of one order along one axis, central inside, one-sided at edges."""

    order: int
    accuracy: int
    n: int
    half_width: int
    interior: np.ndarray  # (2h+1,)
    edge_starts: np.ndarray  # start index of each edge-row window
    edge_weights: np.ndarray  # (2h, width)
    boundary: str = "one-sided"

    @property
    def edge_rows(self) -> np.ndarray:
        h = self.half_width
        return np.r_[np.arange(h), np.arange(self.n - h, self.n)]

    def apply(self, f: np.ndarray, axis: int, spacing: float) -> np.ndarray:
        g = np.moveaxis(f, axis, 0)
        n, h = self.n, self.half_width
        out = np.empty_like(g)
        acc = self.interior[0] * g[0:n - 2 * h]
        for k in range(1, 2 * h + 1):
            acc = acc + self.interior[k] * g[k:n - 2 * h + k]
        out[h:n - h] = acc
        width = self.edge_weights.shape[1]
        for row, start, w in zip(self.edge_rows, self.edge_starts, self.edge_weights):
            out[row] = np.tensordot(w, g[start:start + width], axes=(0, 0))
        out /= spacing ** self.order
        return np.moveaxis(out, 0, axis)


@lru_cache(maxsize=None)
def stencil(n: int, order: int, accuracy: int) -> StencilOperator:
    if order not in (1, 2, 3, 4):
        raise ConfigurationError(f"derivative order must be 1..4, got {order}")
    if accuracy not in (2, 4):
        raise ConfigurationError(f"accuracy order must be 2 or 4, got {accuracy}")
    h = (order + accuracy - 1) // 2
    width = order + accuracy
    if n < max(width, 2 * h + 1):
        raise ConfigurationError(f"axis with {n} nodes too short for this stencil")
    interior = fd_weights(np.arange(-h, h + 1), order)
    starts, weights = [], []
    for i in list(range(h)) + list(range(n - h, n)):
        s = 0 if i < h else n - width
        starts.append(s)
        weights.append(fd_weights(np.arange(s, s + width) - i, order))
    return StencilOperator(order, accuracy, n, h, interior, np.array(starts), np.array(weights))


def _check_finite(field: np.ndarray) -> None:
    if not np.all(np.isfinite(field)):
        bad = np.argwhere(~np.isfinite(field))[0]
        raise NumericError(f"non-finite value at node {tuple(int(i) for i in bad)}",
                           node=tuple(int(i) for i in bad))


def derivative(field, grid: LabelGrid, order: int = 1, axis=0, accuracy: int | None = None,
               check: bool = True) -> np.ndarray:
    """Finite-difference derivative of a scalar field.

    ``axis`` may be a tuple of axes for mixed derivatives, in which case
    ``order`` applies to each listed axis in turn (``axis=(0, 1)`` gives
    ``d^2 f / da0 da1`` for ``order=1``).
    """
    f = np.asarray(field, dtype=float)
    if check:
        _check_finite(f)
    if accuracy is None:
        accuracy = DEFAULT_ACCURACY.get(order, 2)
    axes = (axis,) if np.isscalar(axis) else tuple(axis)
    h = grid.spacing
    lead = f.ndim - grid.dim
    for ax in axes:
        if not 0 <= ax < grid.dim:
            raise ConfigurationError(f"axis {ax} out of range for dim {grid.dim}")
        op = stencil(grid.counts[ax], order, accuracy)
        f = op.apply(f, lead + ax, h[ax])
    return f


def gradient(field, grid: LabelGrid, accuracy: int = 4) -> np.ndarray:
    """All first derivatives, shape ``(dim, *field.shape)``."""
    return np.stack([derivative(field, grid, 1, ax, accuracy, check=False)
                     for ax in range(grid.dim)])


@lru_cache(maxsize=None)
def _filter_weights(half_width: int) -> np.ndarray:
    p = half_width
    k = np.arange(2 * p + 1)
    binom = np.array([math.comb(2 * p, int(j)) for j in k], dtype=float)
    # f - (-1)^p 4^-p delta^(2p) f, applied as a correction
    return (-1.0) ** p * (-1.0) ** k * binom / 4.0 ** p


def lowpass_filter(field, grid: LabelGrid, half_width: int = 4) -> np.ndarray:
    """Explicit low-pass filter of order ``2 * half_width`` along every axis.

    The transfer function along an axis is ``1 - sin(theta/2)^(2p)``: the
    grid-scale mode is removed, polynomials of degree below ``2p`` pass
    unchanged.  The ``p`` nodes nearest each edge are left as they are.
    """
    f = np.array(field, dtype=float)
    if half_width <= 0:
        return f
    w = _filter_weights(half_width)
    p = half_width
    lead = f.ndim - grid.dim
    for ax in range(grid.dim):
        g = np.moveaxis(f, lead + ax, 0)
        n = g.shape[0]
        if n <= 2 * p:
            continue
        corr = sum(w[k] * g[k:n - 2 * p + k] for k in range(2 * p + 1))
        g[p:n - p] -= corr
    return f


def trapezoid_weights(grid: LabelGrid) -> np.ndarray:
    w = np.ones(grid.counts)
    for ax, (n, h) in enumerate(zip(grid.counts, grid.spacing)):
        wa = np.full(n, h)
        wa[0] = wa[-1] = h / 2
        shape = [1] * grid.dim
        shape[ax] = n
        w = w * wa.reshape(shape)
    return w


def boundary_leakage(field, grid: LabelGrid) -> float:
    """Ratio of the largest edge magnitude to the largest interior magnitude."""
    f = np.abs(np.asarray(field))
    edge = np.zeros_like(f, dtype=bool)
    for ax in range(grid.dim):
        idx = [slice(None)] * f.ndim
        idx[f.ndim - grid.dim + ax] = [0, -1]
        edge[tuple(idx)] = True
    inner = f[~edge].max() if np.any(~edge) else 0.0
    if inner == 0.0:
        return 0.0 if f[edge].max(initial=0.0) == 0.0 else np.inf
    return float(f[edge].max() / inner)


def integrate(field, grid: LabelGrid, warn: bool = True, tolerance: float = 1e-6) -> float:
    """Trapezoidal quadrature over the grid.

    Warns with :class:`BoundaryLeakageWarning` when the field has not decayed to
    ``tolerance`` times its interior maximum at the edges.
    """
    f = np.asarray(field)
    if warn:
        ratio = boundary_leakage(f, grid)
        if ratio >= tolerance:
            warnings.warn(f"field magnitude at grid edge is {ratio:.2e} of interior max",
                          BoundaryLeakageWarning, stacklevel=2)
    return np.sum(f * trapezoid_weights(grid))
