"""Scaling-limit objects: the anisotropic surface tension, limit energies on
polyhedral sets, and epsilon sweeps of the rescaled interaction energy.

sigma(p) = 1/2 * integral of K(z) |z . p| dz is finite exactly when the
kernel has a finite first moment (a condition stronger than plain
summability, which is why fractional kernels are rejected here while
remaining available to the energy and calibration modules). On a set with
flat facets the limit energy is the facet sum of sigma(normal) * area, which
serves as the analytic reference for sweeps of eps^-1 J_eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .energy import get_engine
from .errors import ValidationError
from .grid import DomainSpec, ScalarField, symdiff_measure
from .kernels import KernelSpec, eval_kernel, first_moment, rescale, sphere_surface_measure


_SMALL_BALL_MEASURES = (1.0, 2.0, math.pi, 4.0 * math.pi / 3.0)


def unit_ball_measure(k: int) -> float:
    """Lebesgue measure of the unit ball in R^k (1, 2, pi for k = 0, 1, 2)."""
    if k < 0:
        raise ValidationError("dimension must be nonnegative")
    if k < len(_SMALL_BALL_MEASURES):
        return _SMALL_BALL_MEASURES[k]
    return math.pi ** (k / 2.0) / math.gamma(k / 2.0 + 1.0)


def _radial_moment(k: KernelSpec, power: int, n: int = 192) -> float:
    """integral of K(r e1) r^power dr over the (compact) support."""
    sup = k.support_radius
    if sup == math.inf:
        sup = max(50.0, 50.0 * k.eps)
    nodes, wts = leggauss(n)
    r = 0.5 * (nodes + 1.0) * sup
    w = wts * 0.5 * sup
    pts = np.zeros((r.size, k.dimension))
    pts[:, 0] = r
    vals = np.asarray(eval_kernel(k, pts), dtype=float)
    return float(np.sum(w * vals * r**power))


def _require_first_moment(k: KernelSpec) -> float:
    rep = first_moment(k)
    if not rep.finite:
        raise ValidationError(
            "sigma requires a finite first moment (fast kernel decay); "
            f"kernel {k.label()} has an infinite one"
        )
    return rep.M


def sigma_K(k: KernelSpec, p: Sequence[float]) -> float:
    """1/2 * integral of K(z) |z . p| dz by direct quadrature.

    Exactly 1-homogeneous (|p| is factored out before integrating). The
    angular quadrature splits at the kink directions of |omega . p|.
    """
    _require_first_moment(k)
    pv = np.asarray(p, dtype=float)
    if pv.shape != (k.dimension,):
        raise ValidationError("direction dimension must match the kernel")
    norm = float(np.linalg.norm(pv))
    if norm == 0.0:
        return 0.0
    ph = pv / norm
    # |z . p| is even in p: canonicalize the sign so sigma(-p) == sigma(p) bitwise
    nz = np.flatnonzero(ph)
    if nz.size and ph[nz[0]] < 0:
        ph = -ph
    d = k.dimension
    sup = k.support_radius
    if sup == math.inf:
        sup = max(50.0, 50.0 * k.eps)

    if d == 1:
        # midpoint lattice aligned so 0 and +-support are cell edges: exact for
        # piecewise-constant kernels against the |z| weight
        n = 4096
        step = sup / n
        z = (np.arange(-n, n) + 0.5) * step
        vals = np.asarray(eval_kernel(k, z.reshape(-1, 1)), dtype=float)
        return 0.5 * norm * float(np.sum(vals * np.abs(z)) * step)

    nodes, wts = leggauss(48)
    r = 0.5 * (nodes + 1.0) * sup
    rw = wts * 0.5 * sup

    if d == 2:
        phi = math.atan2(ph[1], ph[0])
        kinks = [phi - 0.5 * math.pi, phi + 0.5 * math.pi, phi + 1.5 * math.pi]
        total = 0.0
        tn, tw = leggauss(24)
        for a, b in zip(kinks[:-1], kinks[1:]):
            panels = np.linspace(a, b, 33)
            for pa, pb in zip(panels[:-1], panels[1:]):
                th = 0.5 * (tn + 1.0) * (pb - pa) + pa
                w_th = tw * 0.5 * (pb - pa)
                dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
                pts = r[:, None, None] * dirs[None, :, :]
                vals = np.asarray(eval_kernel(k, pts.reshape(-1, 2)), dtype=float).reshape(r.size, th.size)
                radial = rw @ (vals * r[:, None] ** 2)
                total += float(np.sum(w_th * radial * np.abs(dirs @ ph)))
        return 0.5 * norm * total

    if d == 3:
        # pole aligned with p: |omega . p| = |mu|, kink at mu = 0
        ez = ph
        tmp = np.array([1.0, 0.0, 0.0]) if abs(ez[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        ex = np.cross(ez, tmp)
        ex /= np.linalg.norm(ex)
        ey = np.cross(ez, ex)
        mn, mw = leggauss(24)
        nphi = 48
        phis = (np.arange(nphi) + 0.5) * (2.0 * math.pi / nphi)
        total = 0.0
        for lo, hi in ((-1.0, 0.0), (0.0, 1.0)):
            mu = 0.5 * (mn + 1.0) * (hi - lo) + lo
            wmu = mw * 0.5 * (hi - lo)
            sin_t = np.sqrt(np.maximum(1.0 - mu**2, 0.0))
            dirs = (sin_t[:, None, None] * np.cos(phis)[None, :, None] * ex[None, None, :]
                    + sin_t[:, None, None] * np.sin(phis)[None, :, None] * ey[None, None, :]
                    + mu[:, None, None] * ez[None, None, :])
            pts = r[:, None, None, None] * dirs[None, :, :, :]
            vals = np.asarray(eval_kernel(k, pts.reshape(-1, 3)), dtype=float)
            vals = vals.reshape(r.size, mu.size, nphi)
            radial = np.einsum("i,ijk->jk", rw * r**3, vals)
            total += float(np.sum(wmu[:, None] * radial * np.abs(mu)[:, None])) * (2.0 * math.pi / nphi)
        return 0.5 * norm * total

    raise ValidationError(f"sigma quadrature not implemented for d = {d}")


def sigma_K_radial(k: KernelSpec) -> float:
    """Closed-form route for radial kernels: (M / 2) * sphere average of |e . e_d|.

    Independent cross-check of sigma_K; the two must agree within quadrature
    tolerance for every direction.
    """
    if not k.is_radial:
        raise ValidationError("sigma_K_radial requires a radial kernel")
    m = _require_first_moment(k)
    d = k.dimension
    avg = 2.0 * unit_ball_measure(d - 1) / sphere_surface_measure(d)
    return 0.5 * m * avg


@dataclass
class LimitNorm:
    """Cached sigma evaluations plus the kernel constants entering the limit."""

    kernel: KernelSpec
    M: float = field(init=False)
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.M = _require_first_moment(self.kernel)

    @property
    def omega(self) -> float:
        """Measure of the unit ball in one dimension down (1, 2, pi for d = 1, 2, 3)."""
        return unit_ball_measure(self.kernel.dimension - 1)

    def sigma(self, p: Sequence[float]) -> float:
        pv = np.asarray(p, dtype=float)
        norm = float(np.linalg.norm(pv))
        if norm == 0.0:
            return 0.0
        key = tuple(np.round(pv / norm, 14))
        if key not in self._cache:
            self._cache[key] = sigma_K(self.kernel, pv / norm)
        return norm * self._cache[key]


def J0_polyhedral(facets: Sequence, k: KernelSpec) -> float:
    """Limit energy of a polyhedral set: sum of sigma(normal) * facet area."""
    norm = LimitNorm(k)
    total = 0.0
    for normal, area in facets:
        if area < 0:
            raise ValidationError("facet areas must be nonnegative")
        total += norm.sigma(np.asarray(normal, dtype=float)) * float(area)
    return total


def halfspace_facet_in_ball(normal: Sequence[float], offset: float, radius: float,
                            dimension: int) -> tuple:
    """The single facet cut by {x . n = offset} out of a ball of given radius."""
    if abs(offset) >= radius:
        raise ValidationError("the hyperplane must intersect the ball")
    rho = math.sqrt(radius**2 - offset**2)
    area = unit_ball_measure(dimension - 1) * rho ** (dimension - 1)
    return (tuple(float(c) for c in np.asarray(normal, dtype=float)), area)


@dataclass(frozen=True, eq=False)
class GammaSweepReport:
    """Per-epsilon table of the rescaled energies against the analytic limit.

    Rows hold (eps, eps^-1 J1, eps^-1 J2, eps^-1 J, J0 reference, relative
    error of eps^-1 J1 against J0). The fitted rate is the log-log slope of
    the error over the last three sweep points (nan when the error sits at
    roundoff, as it does for the exactly self-similar 1-d indicator case).
    """

    kernel_id: str
    set_id: str
    rows: np.ndarray
    fitted_rate: float

    def __post_init__(self):
        eps = self.rows[:, 0]
        if np.any(np.diff(eps) >= 0):
            raise ValidationError("sweep rows must have strictly decreasing eps")
        if np.any(self.rows[:, 1:4] < 0):
            raise ValidationError("sweep energies must be nonnegative")


def gamma_sweep(E: ScalarField, facets: Sequence, dom: DomainSpec, k: KernelSpec,
                eps_list: Sequence[float], *, set_id: str = "set") -> GammaSweepReport:
    """Evaluate eps^-1 J_eps(E) for each eps against the facet-formula limit.

    Preconditions: finite first moment; grid spacing h <= eps_min / 8 (the
    kernel scale must be resolved); bounding-box margin >= eps_max * support
    radius for compact kernels (otherwise the cross term would be corrupted).
    """
    if not E.is_binary:
        raise ValidationError("sweeps expect a binary set indicator")
    _require_first_moment(k)
    eps = sorted((float(e) for e in eps_list), reverse=True)
    if not eps or any(e <= 0 for e in eps):
        raise ValidationError("eps list must contain positive values")
    if len(set(eps)) != len(eps):
        raise ValidationError("eps values must be distinct")
    h = E.grid.h
    if h > min(eps) / 8.0 * (1.0 + 1e-12):
        raise ValidationError(
            f"grid spacing h = {h} must satisfy h <= eps_min / 8 = {min(eps) / 8.0}"
        )
    if k.support_radius < math.inf:
        needed = max(eps) * k.support_radius
        if dom.margin() < needed * (1.0 - 1e-12):
            raise ValidationError(
                f"bounding-box margin {dom.margin():.6g} is below eps_max * support = {needed:.6g}; "
                "the cross term would be corrupted"
            )

    j0 = J0_polyhedral(facets, k)
    rows = []
    for e in eps:
        ke = rescale(k, e)
        br = get_engine(dom, ke, E.grid).energy_values(E.values)
        j1 = br.interior_term / e
        j2 = br.cross_term / e
        rel = abs(j1 / j0 - 1.0) if j0 > 0 else math.nan
        rows.append((e, j1, j2, j1 + j2, j0, rel))
    table = np.asarray(rows)

    tail = table[-3:] if table.shape[0] >= 3 else table
    errs = tail[:, 5]
    mask = errs > 1e-14
    if np.count_nonzero(mask) >= 2:
        slope = np.polyfit(np.log(tail[mask, 0]), np.log(errs[mask]), 1)[0]
        rate = float(slope)
    else:
        rate = math.nan
    return GammaSweepReport(kernel_id=k.label(), set_id=set_id, rows=table, fitted_rate=rate)


def cross_term_difference(E_pert: ScalarField, E_ref: ScalarField, dom: DomainSpec,
                          k: KernelSpec, eps: float) -> float:
    """Measured eps^-1 |J2_eps(E_pert) - J2_eps(E_ref)|."""
    ke = rescale(k, eps)
    eng = get_engine(dom, ke, E_pert.grid)
    a = eng.energy_values(E_pert.values).cross_term
    b = eng.energy_values(E_ref.values).cross_term
    return abs(a - b) / eps


def cross_term_bound(E_pert: ScalarField, E_ref: ScalarField, k: KernelSpec,
                     ring_width: float) -> float:
    """(2 / ring_width) * |E_pert symdiff E_ref| * M, the vanishing-difference bound.

    Valid when the perturbation is supported at distance >= ring_width from
    the complement of the reference ball.
    """
    if not ring_width > 0:
        raise ValidationError("ring width must be positive")
    m = _require_first_moment(k)
    return (2.0 / ring_width) * symdiff_measure(E_pert, E_ref) * m
