"""Interaction kernels: evaluation, integrability checks, and rescaling.

A kernel is an even, nonnegative weight K on displacement vectors. Four forms
are supported:

* ``fractional``   -- K(x) = a(x) / |x|^(d+s) with s in (0,1) and an even
  anisotropy a bounded between ``lam`` and ``Lam``. Singular at the origin,
  infinite support.
* ``indicator``    -- K(x) = 1 on the closed ball of radius ``radius``, else 0.
* ``radial_profile`` -- K(x) = profile(|x|), compactly supported.
* ``custom``       -- arbitrary even nonnegative callable; must declare a decay
  bound K(x) <= decay_constant * |x|^(-decay_exponent) so tail truncation
  errors can be certified.

Rescaling by eps produces the concentrated kernel eps^-d * K(x/eps); it is
tracked by the ``eps`` field so analytic classification (singularity exponent,
support radius, decay) stays available after rescaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import NumericalError, SingularityError, ValidationError

FORM_FRACTIONAL = "fractional"
FORM_INDICATOR = "indicator"
FORM_RADIAL = "radial_profile"
FORM_CUSTOM = "custom"

_VALIDATION_SEED = 20240813


def sphere_surface_measure(d: int) -> float:
    """Surface measure of the unit sphere in R^d (2 for d=1, 2*pi for d=2)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True)
class KernelSpec:
    """Immutable description of an even nonnegative interaction kernel."""

    dimension: int
    form: str
    s: Optional[float] = None
    anisotropy: Optional[Callable] = None
    lam: float = 1.0
    Lam: float = 1.0
    radius: Optional[float] = None
    profile: Optional[Callable] = None
    func: Optional[Callable] = None
    base_support: float = math.inf
    decay_exponent: Optional[float] = None
    decay_constant: Optional[float] = None
    singular_origin: bool = False
    eps: float = 1.0

    @property
    def support_radius(self) -> float:
        return self.base_support * self.eps

    @property
    def singular(self) -> bool:
        return self.form == FORM_FRACTIONAL or self.singular_origin

    @property
    def is_radial(self) -> bool:
        if self.form in (FORM_INDICATOR, FORM_RADIAL):
            return True
        if self.form == FORM_FRACTIONAL:
            return self.anisotropy is None
        return False

    def label(self) -> str:
        if self.form == FORM_FRACTIONAL:
            core = f"fractional(d={self.dimension},s={self.s})"
        elif self.form == FORM_INDICATOR:
            core = f"indicator(d={self.dimension},R={self.radius})"
        else:
            core = f"{self.form}(d={self.dimension})"
        return core if self.eps == 1.0 else f"{core}@eps={self.eps:g}"


def _as_points(x, d: int) -> tuple[np.ndarray, bool]:
    """Coerce input to an (n, d) float array; report whether input was a single point."""
    pts = np.asarray(x, dtype=float)
    if d == 1:
        if pts.ndim == 0:
            return pts.reshape(1, 1), True
        if pts.ndim == 1:
            return pts.reshape(-1, 1), False
    if pts.ndim == 1:
        if pts.shape[0] != d:
            raise ValidationError(f"expected a point in R^{d}, got shape {pts.shape}")
        return pts.reshape(1, d), True
    if pts.ndim == 2 and pts.shape[1] == d:
        return pts, False
    raise ValidationError(f"expected points of shape (n, {d}), got {pts.shape}")


def eval_kernel(k: KernelSpec, x):
    """Evaluate K at one point or at an (n, d) array of points.

    Raises SingularityError when a singular form is evaluated at the origin.
    """
    pts, single = _as_points(x, k.dimension)
    z = pts / k.eps
    r = np.sqrt(np.sum(z * z, axis=1))
    if k.singular and np.any(r == 0.0):
        raise SingularityError(f"{k.form} kernel is singular at x = 0")

    if k.form == FORM_FRACTIONAL:
        a = np.full_like(r, k.lam) if k.anisotropy is None else np.asarray(k.anisotropy(z), dtype=float)
        out = a * r ** (-(k.dimension + k.s))
    elif k.form == FORM_INDICATOR:
        out = (r <= k.radius).astype(float)
    elif k.form == FORM_RADIAL:
        out = np.asarray(k.profile(r), dtype=float)
        out = np.where(r <= k.base_support, out, 0.0)
    elif k.form == FORM_CUSTOM:
        out = np.asarray(k.func(z), dtype=float)
        if k.base_support < math.inf:
            out = np.where(r <= k.base_support, out, 0.0)
    else:  # pragma: no cover - forms are fixed by the factories
        raise ValidationError(f"unknown kernel form {k.form!r}")

    out = out * k.eps ** (-k.dimension)
    return float(out[0]) if single else out


def rescale(k: KernelSpec, eps: float) -> KernelSpec:
    """Concentrated kernel eps^-d * K(x / eps); support radius scales by eps."""
    if not eps > 0:
        raise ValidationError("rescale requires eps > 0")
    return replace(k, eps=k.eps * eps)


def _sample_points(d: int, scale: float, n: int, rng: np.random.Generator) -> np.ndarray:
    pts = rng.standard_normal((n, d))
    radii = scale * rng.random(n) + 1e-6 * scale
    norms = np.linalg.norm(pts, axis=1)
    norms[norms == 0] = 1.0
    return pts / norms[:, None] * radii[:, None]


def fractional_kernel(
    dimension: int,
    s: float,
    anisotropy: Optional[Callable] = None,
    lam: float = 1.0,
    Lam: float = 1.0,
) -> KernelSpec:
    """K(x) = a(x) / |x|^(d+s).

    The anisotropy, when given, is validated against the [lam, Lam] bounds and
    evenness at 10^4 seeded sample points.
    """
    if not (0.0 < s < 1.0):
        raise ValidationError(f"fractional kernel requires s in (0, 1), got s = {s}")
    if not (0.0 < lam <= Lam):
        raise ValidationError("fractional kernel requires 0 < lam <= Lam")
    if anisotropy is not None:
        rng = np.random.default_rng(_VALIDATION_SEED)
        pts = _sample_points(dimension, 10.0, 10_000, rng)
        vals = np.asarray(anisotropy(pts), dtype=float)
        if vals.shape != (pts.shape[0],):
            raise ValidationError("anisotropy must map (n, d) points to (n,) values")
        if np.any(vals < lam - 1e-12) or np.any(vals > Lam + 1e-12):
            raise ValidationError("anisotropy violates the lam <= a <= Lam bounds on sampled points")
        mirror = np.asarray(anisotropy(-pts), dtype=float)
        if not np.allclose(vals, mirror, rtol=0.0, atol=1e-12 * max(1.0, Lam)):
            raise ValidationError("anisotropy must be even: a(x) = a(-x)")
    return KernelSpec(
        dimension=dimension,
        form=FORM_FRACTIONAL,
        s=float(s),
        anisotropy=anisotropy,
        lam=float(lam),
        Lam=float(Lam),
        decay_exponent=dimension + float(s),
        decay_constant=float(Lam),
    )


def indicator_kernel(dimension: int, radius: float) -> KernelSpec:
    """K = 1 on the closed ball of the given radius, 0 outside."""
    if not radius > 0:
        raise ValidationError("indicator kernel requires radius > 0")
    return KernelSpec(
        dimension=dimension,
        form=FORM_INDICATOR,
        radius=float(radius),
        base_support=float(radius),
    )


def radial_profile_kernel(dimension: int, profile: Callable, support_radius: float) -> KernelSpec:
    """K(x) = profile(|x|) supported on |x| <= support_radius. profile is vectorized in r."""
    if not support_radius > 0:
        raise ValidationError("radial profile kernel requires support_radius > 0")
    test = np.asarray(profile(np.linspace(1e-6, support_radius, 64)), dtype=float)
    if np.any(test < 0) or not np.all(np.isfinite(test)):
        raise ValidationError("radial profile must be finite and nonnegative on (0, support]")
    return KernelSpec(
        dimension=dimension,
        form=FORM_RADIAL,
        profile=profile,
        base_support=float(support_radius),
    )


def custom_kernel(
    dimension: int,
    func: Callable,
    decay_exponent: float,
    decay_constant: float,
    support_radius: float = math.inf,
    singular_origin: bool = False,
) -> KernelSpec:
    """Even nonnegative callable kernel with a declared decay bound.

    The decay bound K(x) <= decay_constant * |x|^(-decay_exponent) for large
    |x| is what makes tail truncation certifiable; it is required.
    """
    if decay_exponent is None or decay_constant is None:
        raise ValidationError("custom kernels must declare a decay bound (exponent and constant)")
    rng = np.random.default_rng(_VALIDATION_SEED + 1)
    scale = min(support_radius, 10.0) if support_radius < math.inf else 10.0
    pts = _sample_points(dimension, scale, 1000, rng)
    vals = np.asarray(func(pts), dtype=float)
    if np.any(vals < 0):
        raise ValidationError("kernel values must be nonnegative")
    mirror = np.asarray(func(-pts), dtype=float)
    if not np.allclose(vals, mirror, rtol=1e-12, atol=1e-12):
        raise ValidationError("kernel must be even: K(x) = K(-x)")
    return KernelSpec(
        dimension=dimension,
        form=FORM_CUSTOM,
        func=func,
        base_support=float(support_radius),
        decay_exponent=float(decay_exponent),
        decay_constant=float(decay_constant),
        singular_origin=singular_origin,
    )


# --------------------------------------------------------------------------
# radial-angular quadrature used by the integrability checks
# --------------------------------------------------------------------------


def _angular_mean(k: KernelSpec, r: np.ndarray, n_theta: int = 128) -> np.ndarray:
    """Mean of K over the sphere of radius r_i, for each entry of r."""
    d = k.dimension
    r = np.asarray(r, dtype=float)
    if k.is_radial:
        pts = np.zeros((r.size, d))
        pts[:, 0] = r
        return np.asarray(eval_kernel(k, pts), dtype=float)
    if d == 1:
        pts = r.reshape(-1, 1)
        return np.asarray(eval_kernel(k, pts), dtype=float)
    if d == 2:
        theta = (np.arange(n_theta) + 0.5) * (2.0 * math.pi / n_theta)
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    elif d == 3:
        nodes, wts = leggauss(24)
        phi = (np.arange(48) + 0.5) * (2.0 * math.pi / 48)
        mu, ph = np.meshgrid(nodes, phi, indexing="ij")
        sin_t = np.sqrt(1.0 - mu**2)
        dirs = np.stack([sin_t * np.cos(ph), sin_t * np.sin(ph), mu], axis=-1).reshape(-1, 3)
        w = np.repeat(wts, 48) / (2.0 * 48)
        pts = r[:, None, None] * dirs[None, :, :]
        vals = np.asarray(eval_kernel(k, pts.reshape(-1, 3)), dtype=float).reshape(r.size, -1)
        return vals @ w
    else:
        raise ValidationError(f"angular quadrature not implemented for d = {d}")
    pts = r[:, None, None] * dirs[None, :, :]
    vals = np.asarray(eval_kernel(k, pts.reshape(-1, d)), dtype=float).reshape(r.size, -1)
    return vals.mean(axis=1)


def _gauss_piece(k: KernelSpec, f, a: float, b: float, n: int, sub: Optional[float] = None) -> float:
    """Integrate f(r) * mean_K(r) * S r^(d-1) over [a, b].

    ``sub`` removes an r^(-sub) singularity at a = 0 by the substitution
    r = t^(1/(1-sub)).
    """
    if b <= a:
        return 0.0
    d = k.dimension
    surf = sphere_surface_measure(d)
    nodes, wts = leggauss(n)
    if sub is not None and a == 0.0:
        p = 1.0 - sub
        tb = b**p
        t = 0.5 * (nodes + 1.0) * tb
        w = wts * 0.5 * tb
        r = t ** (1.0 / p)
        jac = (1.0 / p) * t ** (1.0 / p - 1.0)
        g = f(r) * _angular_mean(k, r) * surf * r ** (d - 1)
        # guard: the substitution makes g * jac finite at t -> 0
        return float(np.sum(w * g * jac))
    r = 0.5 * (nodes + 1.0) * (b - a) + a
    w = wts * 0.5 * (b - a)
    g = f(r) * _angular_mean(k, r) * surf * r ** (d - 1)
    return float(np.sum(w * g))


@dataclass(frozen=True)
class SummabilityReport:
    finite: bool
    value: float
    quadrature_error: float


def check_summability(k: KernelSpec) -> SummabilityReport:
    """Estimate the integral of (1 ^ |x|) K(x) over R^d.

    ``finite`` comes from the analytic classification when available
    (fractional kernels with s in (0,1) are always summable); custom kernels
    fall back to the declared decay exponent.
    """
    d = k.dimension
    sup = k.support_radius

    if k.form == FORM_FRACTIONAL:
        finite = True
        sing = float(k.s)  # (1 ^ r) K r^(d-1) ~ r^(-s) near 0 after rescaling by eps
    elif k.form == FORM_CUSTOM:
        finite = k.decay_exponent > d if sup == math.inf else True
        sing = None
    else:
        finite = True
        sing = None

    def weight(r):
        return np.minimum(1.0, r)

    def run(n: int) -> float:
        total = 0.0
        r_cut = min(sup, max(50.0, 50.0 * k.eps))
        breaks = sorted({0.0, min(1.0, r_cut), r_cut})
        # rescaling moves the singular scale to eps; refine the first piece there
        if k.eps != 1.0 and k.eps < breaks[1]:
            breaks = sorted(set(breaks) | {k.eps})
        for a, b in zip(breaks[:-1], breaks[1:]):
            use_sub = sing if (a == 0.0 and k.singular) else None
            total += _gauss_piece(k, weight, a, b, n, sub=use_sub)
        # analytic tail beyond r_cut (only for infinite-support kernels)
        if sup == math.inf:
            total += _tail_mass_scalar(k, r_cut)
        return total

    coarse = run(64)
    fine = run(128)
    err = abs(fine - coarse)
    if not math.isfinite(fine):
        return SummabilityReport(finite=False, value=coarse, quadrature_error=math.inf)
    return SummabilityReport(finite=finite, value=fine, quadrature_error=err)


@dataclass(frozen=True)
class FirstMomentReport:
    finite: bool
    M: float


def first_moment(k: KernelSpec) -> FirstMomentReport:
    """M = integral of K(x) |x| dx, or finite=False when the tail diverges.

    Fractional kernels always report finite=False: the tail |x|^(1-d-s) is not
    integrable at infinity for s in (0,1).
    """
    d = k.dimension
    if k.form == FORM_FRACTIONAL:
        return FirstMomentReport(finite=False, M=math.inf)
    if k.form == FORM_CUSTOM and k.base_support == math.inf and k.decay_exponent <= d + 1:
        return FirstMomentReport(finite=False, M=math.inf)

    if k.form == FORM_INDICATOR:
        surf = sphere_surface_measure(d)
        m = surf * (k.support_radius ** (d + 1)) / (d + 1) * k.eps ** (-d)
        return FirstMomentReport(finite=True, M=float(m))

    sup = k.support_radius
    r_cut = sup if sup < math.inf else max(50.0, 50.0 * k.eps)
    value = _gauss_piece(k, lambda r: r, 0.0, r_cut, 192)
    if sup == math.inf:
        # certified tail bound from the declared decay; add its midpoint
        q = k.decay_exponent
        c = k.decay_constant * k.eps ** (q - d)
        tail = c * sphere_surface_measure(d) * r_cut ** (d + 1 - q) / (q - d - 1)
        value += 0.5 * tail
    if not math.isfinite(value):
        return FirstMomentReport(finite=False, M=math.inf)
    return FirstMomentReport(finite=True, M=float(value))


def _tail_mass_scalar(k: KernelSpec, rho: float) -> float:
    d = k.dimension
    surf = sphere_surface_measure(d)
    if k.form == FORM_INDICATOR:
        sup = k.support_radius
        if rho >= sup:
            return 0.0
        vol = surf / d
        return float(vol * (sup**d - max(rho, 0.0) ** d) * k.eps ** (-d))
    if k.form == FORM_FRACTIONAL:
        # K_eps <= eps^s * Lam * |x|^(-d-s)
        return float(k.eps**k.s * k.Lam * surf * rho ** (-k.s) / k.s)
    if k.form == FORM_RADIAL:
        sup = k.support_radius
        if rho >= sup:
            return 0.0
        return _gauss_piece(k, lambda r: np.ones_like(r), rho, sup, 128)
    # custom: declared decay bound
    q = k.decay_exponent
    if q <= d:
        return math.inf
    c = k.decay_constant * k.eps ** (q - d)
    val = c * surf * rho ** (d - q) / (q - d)
    if k.base_support < math.inf and rho >= k.support_radius:
        return 0.0
    return float(val)


def tail_mass_bound(k: KernelSpec, rho) -> np.ndarray:
    """Certified upper bound on the integral of K over {|z| > rho}, vectorized in rho."""
    r = np.asarray(rho, dtype=float)
    out = np.array([_tail_mass_scalar(k, float(v)) for v in np.atleast_1d(r)])
    return out if r.ndim else float(out[0])
