"""Pair quadrature weights for translation-invariant kernels on uniform grids.

The double integral over a pair of cells reduces, after midpoint sampling of
the field, to a weight W(delta) per lattice offset delta:

* |delta| >= 3h and away from a compact support edge: midpoint rule, W = K(delta*h).
* 0 < |delta| < 3h: tensor 3-point-per-cell refinement of the kernel integral.
  The singularity never bites because subpoint pairs of distinct cells stay at
  distance >= h/3.
* compact kernels, offsets within a cell diagonal of the support edge: the
  cell-pair average of K, i.e. the kernel convolved with the cell
  autocorrelation tent. Exact closed form for the 1-d indicator kernel,
  tensor Gauss-Legendre otherwise. Midpoint alone leaves an O(h) error
  concentrated on the support shell, which would dominate scaling sweeps.

Weights satisfy W(-delta) == W(delta) bitwise (built on a canonical half and
mirrored), and the offset list interleaves delta with -delta, so signed sums
that should cancel by symmetry cancel exactly in floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ValidationError
from .grid import Grid
from .kernels import FORM_INDICATOR, KernelSpec, eval_kernel

_SHELL_GAUSS = {1: 48, 2: 32, 3: 12}


@dataclass(frozen=True, eq=False)
class PairWeightTable:
    offsets: np.ndarray  # (M, d) int64, +delta/-delta adjacent
    offsets_flat: np.ndarray  # (M,) int64 flat C-order steps
    weights: np.ndarray  # (M,) float64, even in the offset
    h: float
    dimension: int
    row_mass: float  # sum_o W_o * h^d, an upper bound on any row sum

    @property
    def count(self) -> int:
        return int(self.weights.size)


def _canonical_half(offsets: np.ndarray) -> np.ndarray:
    """Mask of offsets that are lexicographically positive."""
    n, d = offsets.shape
    decided = np.zeros(n, dtype=bool)
    positive = np.zeros(n, dtype=bool)
    for ax in range(d):
        col = offsets[:, ax]
        newly = (~decided) & (col != 0)
        positive[newly] = col[newly] > 0
        decided |= newly
    return positive


def _near_diagonal_weights(k: KernelSpec, deltas: np.ndarray, h: float) -> np.ndarray:
    """3^d-point per-cell tensor refinement for close distinct cell pairs."""
    d = k.dimension
    steps = np.array([-h / 3.0, 0.0, h / 3.0])
    mesh = np.meshgrid(*([steps] * d), indexing="ij")
    sub = np.stack([m.ravel() for m in mesh], axis=1)  # (3^d, d)
    diff = sub[None, :, :] - sub[:, None, :]  # (3^d, 3^d, d)
    diff = diff.reshape(-1, d)
    pts = deltas[:, None, :] * h + diff[None, :, :]
    vals = np.asarray(eval_kernel(k, pts.reshape(-1, d)), dtype=float)
    return vals.reshape(deltas.shape[0], -1).mean(axis=1)


def _indicator_tent_1d(dist: np.ndarray, sup: float, h: float) -> np.ndarray:
    """Exact cell-pair average of the 1-d indicator kernel at center distance dist.

    Equals (1/h^2) * measure{(a, b) in C x C' : |b - a| <= sup}; the tent
    antiderivative G(t) = h t - t|t|/2 integrates (h - |t|) on [-h, h].
    """

    def g(t):
        return h * t - 0.5 * t * np.abs(t)

    lo = np.maximum(-h, -sup - dist)
    hi = np.clip(sup - dist, -h, h)
    out = (g(hi) - g(np.minimum(lo, hi))) / (h * h)
    return np.clip(out, 0.0, 1.0)


def _tent_gauss_weights(k: KernelSpec, deltas: np.ndarray, h: float) -> np.ndarray:
    """Cell-pair average of K via tensor Gauss-Legendre against the tent weight."""
    d = k.dimension
    q = _SHELL_GAUSS[d]
    nodes, wts = leggauss(q)
    t = nodes * h
    w1 = wts * h * (h - np.abs(t)) / (h * h)  # integrates the tent to 1
    mesh_t = np.meshgrid(*([t] * d), indexing="ij")
    mesh_w = np.meshgrid(*([w1] * d), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh_t], axis=1)  # (q^d, d)
    wprod = np.prod(np.stack([m.ravel() for m in mesh_w], axis=1), axis=1)
    eval_pts = deltas[:, None, :] * h + pts[None, :, :]
    vals = np.asarray(eval_kernel(k, eval_pts.reshape(-1, d)), dtype=float)
    return vals.reshape(deltas.shape[0], -1) @ wprod


def build_pair_weights(kernel: KernelSpec, grid: Grid) -> PairWeightTable:
    if kernel.dimension != grid.dimension:
        raise ValidationError(
            f"kernel dimension {kernel.dimension} does not match grid dimension {grid.dimension}"
        )
    d = grid.dimension
    h = grid.h
    sup = kernel.support_radius
    diag = h * math.sqrt(d)

    if sup < math.inf:
        reach = int(math.ceil(sup / h + math.sqrt(d) + 1.0))
        ext = [min(n - 1, reach) for n in grid.shape]
    else:
        ext = [n - 1 for n in grid.shape]

    axes = [np.arange(-e, e + 1, dtype=np.int64) for e in ext]
    mesh = np.meshgrid(*axes, indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=1)
    offsets = offsets[np.any(offsets != 0, axis=1)]
    dist = np.linalg.norm(offsets, axis=1) * h
    if sup < math.inf:
        offsets = offsets[dist <= sup + diag]
        dist = np.linalg.norm(offsets, axis=1) * h

    half = offsets[_canonical_half(offsets)]
    hdist = np.linalg.norm(half, axis=1) * h

    weights = np.asarray(eval_kernel(kernel, half.astype(float) * h), dtype=float)

    near = hdist < 3.0 * h * (1.0 - 1e-12)
    if near.any():
        weights[near] = _near_diagonal_weights(kernel, half[near].astype(float), h)

    if sup < math.inf:
        shell = (~near) & (np.abs(hdist - sup) <= diag)
        if shell.any():
            if d == 1 and kernel.form == FORM_INDICATOR:
                weights[shell] = kernel.eps ** (-1) * _indicator_tent_1d(hdist[shell], sup, h)
            else:
                weights[shell] = _tent_gauss_weights(kernel, half[shell].astype(float), h)

    keep = weights > 0.0
    half = half[keep]
    weights = weights[keep]

    m = half.shape[0]
    full = np.empty((2 * m, d), dtype=np.int64)
    full[0::2] = half
    full[1::2] = -half
    wfull = np.empty(2 * m)
    wfull[0::2] = weights
    wfull[1::2] = weights

    strides = np.empty(d, dtype=np.int64)
    strides[-1] = 1
    for ax in range(d - 2, -1, -1):
        strides[ax] = strides[ax + 1] * grid.shape[ax + 1]
    flat = full @ strides

    return PairWeightTable(
        offsets=np.ascontiguousarray(full),
        offsets_flat=np.ascontiguousarray(flat),
        weights=np.ascontiguousarray(wfull),
        h=h,
        dimension=d,
        row_mass=float(np.sum(wfull)) * h**d,
    )


def offsets_in_bounds_for_all(table: PairWeightTable, grid: Grid) -> bool:
    """True when every interior cell sees all offsets inside the lattice.

    Holds for compact kernels whose support (plus the shell band) fits within
    the bounding-box margin; enables the bounds-check-free sweep kernels.
    """
    idx = grid.interior_indices()
    lo = idx.min(axis=0)
    hi = idx.max(axis=0)
    omin = table.offsets.min(axis=0)
    omax = table.offsets.max(axis=0)
    shape = np.asarray(grid.shape)
    return bool(np.all(lo + omin >= 0) and np.all(hi + omax < shape))
