"""Pair calibrations and the minimality certificate.

A calibration is a pair function zeta(x, y) with |zeta| <= 1, a vanishing
nonlocal divergence, and zeta * (u(y) - u(x)) = |u(y) - u(x)| wherever the
candidate u differs. When one exists, the candidate's energy equals the sharp
lower bound b0 and every admissible competitor v satisfies

    J(v) >= a(v) + b1(v) + b0,      a(v) + b1(v) = 0,

so ``gap`` = J(v) - b0 certifies minimality. The built-in calibration
``halfspace_sign`` is sign((y - x) . n); it depends on the pair only through
the offset, which both enables the fast sweep path and makes the discrete
divergence cancel exactly over the centrally symmetric offset table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .energy import EnergyEngine, get_engine
from .errors import NumericalError, ValidationError
from .grid import DomainSpec, ScalarField
from .kernels import KernelSpec


@dataclass(frozen=True)
class Calibration:
    """Pair function zeta with antisymmetry metadata.

    ``func`` maps two (n, d) point arrays to (n,) values. ``offset_func``,
    when set, asserts zeta(x, y) = offset_func(y - x); sweeps then evaluate
    one value per lattice offset instead of one per pair.
    """

    name: str
    func: Callable
    antisymmetric: bool
    offset_func: Optional[Callable] = None

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(x, y), dtype=float)


def halfspace_sign(normal: Sequence[float]) -> Calibration:
    """zeta(x, y) = sign((y - x) . n) for a unit normal n."""
    n = np.asarray(normal, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise ValidationError("halfspace_sign requires a unit normal (|n| = 1 within 1e-12)")

    def offset_func(delta):
        return np.sign(np.asarray(delta, dtype=float) @ n)

    def func(x, y):
        return offset_func(np.asarray(y, dtype=float) - np.asarray(x, dtype=float))

    label = "halfspace_sign(" + ",".join(f"{v:g}" for v in n) + ")"
    return Calibration(name=label, func=func, antisymmetric=True, offset_func=offset_func)


def antisymmetrize(zeta: Calibration) -> Calibration:
    """(zeta(x,y) - zeta(y,x)) / 2; a calibration whenever zeta is one."""

    def func(x, y):
        return 0.5 * (zeta(x, y) - zeta(y, x))

    offset_func = None
    if zeta.offset_func is not None:
        base = zeta.offset_func

        def offset_func(delta):
            d = np.asarray(delta, dtype=float)
            return 0.5 * (np.asarray(base(d), dtype=float) - np.asarray(base(-d), dtype=float))

    return Calibration(name=f"antisym({zeta.name})", func=func, antisymmetric=True,
                       offset_func=offset_func)


def _offset_values(zeta: Calibration, eng: EnergyEngine) -> np.ndarray:
    vals = np.asarray(zeta.offset_func(eng.table.offsets.astype(float) * eng.grid.h), dtype=float)
    if vals.shape != (eng.table.count,):
        raise ValidationError("offset_func must return one value per offset")
    return vals


def max_bound_violation(zeta: Calibration, rng: np.random.Generator, dimension: int,
                        n_pairs: int = 1000, scale: float = 2.0) -> float:
    """Largest sampled |zeta| (the calibration bound requires <= 1)."""
    x = scale * (rng.random((n_pairs, dimension)) - 0.5)
    y = scale * (rng.random((n_pairs, dimension)) - 0.5)
    return float(np.max(np.abs(zeta(x, y))))


def check_divergence(zeta: Calibration, k: KernelSpec, dom: DomainSpec, grid,
                     x: Sequence[float], radii: Sequence[float]) -> list:
    """Residuals of the nonlocal divergence at x, one per exclusion radius.

    Evaluates h^d * sum over lattice cells y with |y - x| > r of
    W(y - x) (zeta(y, x) - zeta(x, y)). The point x is snapped to the nearest
    cell center. For a calibration the residuals must trend to zero as r
    shrinks; on a centrally symmetric neighborhood the built-in halfspace
    calibration cancels exactly.
    """
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii) or any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValidationError("radii must be positive and strictly decreasing")
    eng = get_engine(dom, k, grid)
    xv = np.asarray(x, dtype=float)
    if xv.shape != (grid.dimension,):
        raise ValidationError("sample point dimension mismatch")
    cell = np.clip(np.floor((xv - np.asarray(grid.lo)) / grid.h).astype(int), 0,
                   np.asarray(grid.shape) - 1)
    center = np.asarray(grid.lo) + (cell + 0.5) * grid.h

    offs = eng.table.offsets
    nb = cell[None, :] + offs
    valid = np.all((nb >= 0) & (nb < np.asarray(grid.shape)[None, :]), axis=1)
    deltas = offs.astype(float) * grid.h
    dist = np.linalg.norm(deltas, axis=1)

    if zeta.offset_func is not None:
        vals = np.asarray(zeta.offset_func(-deltas), dtype=float) - np.asarray(
            zeta.offset_func(deltas), dtype=float)
    else:
        y_pts = center[None, :] + deltas
        x_pts = np.broadcast_to(center, y_pts.shape)
        vals = zeta(y_pts, x_pts) - zeta(x_pts, y_pts)

    hd = grid.h**grid.dimension
    out = []
    for r in radii:
        mask = valid & (dist > r)
        out.append((r, hd * float(np.sum(eng.table.weights[mask] * vals[mask]))))
    return out


@dataclass(frozen=True)
class NormalConditionReport:
    violation_fraction: float
    worst_pair: Optional[tuple]  # (x, y, defect), None when no pair differs


def check_normal_condition(zeta: Calibration, u: ScalarField, dom: DomainSpec,
                           k: KernelSpec, tol: float = 1e-9) -> NormalConditionReport:
    """Fraction of kernel-coupled pairs with u(x) != u(y) violating the sign condition.

    Pairs run over (x interior, y anywhere on the lattice) with positive pair
    weight; each ordered pair carries equal measure h^(2d), so the fraction is
    a plain count ratio.
    """
    eng = get_engine(dom, k, u.grid)
    if zeta.offset_func is not None:
        sgn = _offset_values(zeta, eng)
        viol, tot, worst, worst_o = eng.normal_defects(u.values, sgn, tol)
        total = float(np.sum(tot))
        if total == 0.0:
            return NormalConditionReport(violation_fraction=0.0, worst_pair=None)
        frac = float(np.sum(viol)) / total
        iworst = int(np.argmax(worst))
        if worst[iworst] <= 0.0:
            return NormalConditionReport(violation_fraction=frac, worst_pair=None)
        centers = u.grid.centers()
        xpt = centers[eng.base[iworst]]
        ypt = xpt + eng.table.offsets[worst_o[iworst]].astype(float) * u.grid.h
        return NormalConditionReport(violation_fraction=frac,
                                     worst_pair=(tuple(xpt), tuple(ypt), float(worst[iworst])))

    # generic pair function: vectorize over offsets per interior cell
    centers = u.grid.centers()
    flat = u.values.ravel()
    shape = np.asarray(u.grid.shape)
    viol = 0
    tot = 0
    worst_defect = 0.0
    worst_pair = None
    for i in range(eng.base.size):
        ci = eng.idx[i]
        nb = ci[None, :] + eng.table.offsets
        ok = np.all((nb >= 0) & (nb < shape[None, :]), axis=1)
        j = eng.base[i] + eng.table.offsets_flat[ok]
        du = flat[j] - flat[eng.base[i]]
        nz = du != 0.0
        if not nz.any():
            continue
        j = j[nz]
        du = du[nz]
        xpt = centers[eng.base[i]]
        zv = zeta(np.broadcast_to(xpt, (j.size, xpt.size)), centers[j])
        defect = np.abs(du) - zv * du
        tot += j.size
        viol += int(np.count_nonzero(defect > tol))
        loc = int(np.argmax(defect))
        if defect[loc] > worst_defect:
            worst_defect = float(defect[loc])
            worst_pair = (tuple(xpt), tuple(centers[j[loc]]), worst_defect)
    if tot == 0:
        return NormalConditionReport(violation_fraction=0.0, worst_pair=None)
    return NormalConditionReport(violation_fraction=viol / tot, worst_pair=worst_pair)


@dataclass(frozen=True)
class CertificateReport:
    a: float
    b1: float
    b0: float
    energy_of_candidate: float
    gap: float
    divergence_residuals: tuple  # ((x, r, residual), ...)
    normal_violation_fraction: float


def _generic_certificate_sums(zeta: Calibration, eng: EnergyEngine, v: np.ndarray,
                              datum: np.ndarray):
    centers = eng.grid.centers()
    vflat = v.ravel()
    dflat = datum.ravel()
    shape = np.asarray(eng.grid.shape)
    a = 0.0
    b1 = 0.0
    b0 = 0.0
    for i in range(eng.base.size):
        ci = eng.idx[i]
        nb = ci[None, :] + eng.table.offsets
        ok = np.all((nb >= 0) & (nb < shape[None, :]), axis=1)
        j = eng.base[i] + eng.table.offsets_flat[ok]
        w = eng.table.weights[ok]
        xpt = centers[eng.base[i]]
        zv = zeta(np.broadcast_to(xpt, (j.size, xpt.size)), centers[j])
        tg = eng.tagf[j]
        a += float(np.sum(w * zv * (vflat[j] - vflat[eng.base[i]]) * tg))
        ws_ext = w * zv * (1.0 - tg)
        b1 -= vflat[eng.base[i]] * float(np.sum(ws_ext))
        b0 += float(np.sum(ws_ext * dflat[j]))
    return 0.5 * eng.h2d * a, eng.h2d * b1, eng.h2d * b0


def certificate(zeta: Calibration, u: ScalarField, v: ScalarField, dom: DomainSpec,
                k: KernelSpec, *, identity_tol: Optional[float] = None,
                divergence_samples: int = 5,
                radii: Optional[Sequence[float]] = None) -> CertificateReport:
    """Minimality certificate for candidate u, evaluated at competitor v.

    Computes a(v), b1(v), b0 and gap = J(v) - b0. For an antisymmetric zeta
    the identity a(v) = -b1(v) must hold up to quadrature roundoff; its
    failure (a broken divergence condition) raises NumericalError.
    """
    if u.grid is not v.grid and u.grid.shape != v.grid.shape:
        raise ValidationError("candidate and competitor must share a grid")
    if not np.array_equal(u.datum, v.datum):
        raise ValidationError("candidate and competitor must share the exterior datum")
    if not (u.in_unit_range and v.in_unit_range):
        raise ValidationError("fields must take values in [0, 1]")
    eng = get_engine(dom, k, u.grid)

    if zeta.offset_func is not None:
        sgn = _offset_values(zeta, eng)
        a, b1, b0 = eng.certificate_sums(v.values, v.datum, sgn)
    else:
        a, b1, b0 = _generic_certificate_sums(zeta, eng, v.values, v.datum)

    if zeta.antisymmetric:
        tol = identity_tol if identity_tol is not None else 1e-9 * (abs(a) + abs(b1) + 1.0)
        if abs(a + b1) > tol:
            raise NumericalError(
                f"certificate identity a(v) = -b1(v) fails: |a + b1| = {abs(a + b1):.3e} > {tol:.3e}; "
                "the calibration does not satisfy the divergence condition on this lattice"
            )

    ev = eng.energy_values(v.values).total
    gap = ev - b0

    h = u.grid.h
    rr = tuple(radii) if radii is not None else (8 * h, 4 * h, 2 * h)
    n_samples = min(divergence_samples, eng.base.size)
    sample_rows = np.linspace(0, eng.base.size - 1, n_samples).astype(int)
    centers = u.grid.centers()
    residuals = []
    for row in sample_rows:
        xpt = centers[eng.base[row]]
        for r, res in check_divergence(zeta, k, dom, u.grid, xpt, rr):
            residuals.append((tuple(float(c) for c in xpt), float(r), float(res)))

    normal = check_normal_condition(zeta, u, dom, k)
    return CertificateReport(
        a=a, b1=b1, b0=b0, energy_of_candidate=ev, gap=gap,
        divergence_residuals=tuple(residuals),
        normal_violation_fraction=normal.violation_fraction,
    )
