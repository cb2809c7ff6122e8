"""Deterministic quick checks behind the ``selftest`` CLI subcommand.

Each check compares a measured value against a frozen closed-form expectation
and a pinned tolerance. Everything is seeded or analytic, so two runs produce
byte-identical CSV rows; the suite doubles as the determinism probe. The full
acceptance suite lives in the test tree and runs under pytest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import certificate, halfspace_sign
from .energy import coarea_decompose, energy, get_engine
from .gamma import gamma_sweep, halfspace_facet_in_ball, sigma_K, sigma_K_radial
from .grid import domain_ball, field_from_values, indicator_halfspace, make_grid, random_admissible
from .kernels import check_summability, eval_kernel, first_moment, fractional_kernel, indicator_kernel
from .solve import SolveOptions, minimize, monotonicity_defect


@dataclass(frozen=True)
class SelfCheck:
    name: str
    measured: float
    expected: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return abs(self.measured - self.expected) <= self.tolerance


def _small_2d_setting():
    dom = domain_ball([0.0, 0.0], 0.5, margin=0.5)
    grid = make_grid(dom, 1.0 / 16)
    k = indicator_kernel(2, 0.5)
    return dom, grid, k


def run_selftest() -> list:
    checks = []

    k1f = fractional_kernel(1, 0.5)
    checks.append(SelfCheck("kernel_eval_fractional_d1_x4", eval_kernel(k1f, 4.0), 0.125, 1e-12))
    checks.append(SelfCheck("kernel_summability_fractional_d1", check_summability(k1f).value, 8.0, 8e-4))
    checks.append(SelfCheck("kernel_first_moment_indicator_d2",
                            first_moment(indicator_kernel(2, 1.0)).M, 2.0 * math.pi / 3.0, 1e-10))

    dom1 = domain_ball([0.0], 1.0, margin=1.0)
    grid1 = make_grid(dom1, 1.0 / 32)
    k1 = indicator_kernel(1, 1.0)
    h1 = indicator_halfspace(grid1, [1.0], 0.0)
    checks.append(SelfCheck("energy_halfspace_d1", energy(h1, dom1, k1).total, 0.5, 1e-9))

    dom2, grid2, k2 = _small_2d_setting()
    h2 = indicator_halfspace(grid2, [0.0, 1.0], 0.0)
    rng = np.random.default_rng(0)
    u4 = random_admissible(grid2, h2.datum, rng, levels=4)
    dec = coarea_decompose(u4, dom2, k2)
    e4 = energy(u4, dom2, k2).total
    checks.append(SelfCheck("coarea_identity_4_levels", dec.integral, e4, 1e-12 * max(e4, 1.0)))

    zeta = halfspace_sign([0.0, 1.0])
    cert = certificate(zeta, h2, h2, dom2, k2)
    checks.append(SelfCheck("certificate_gap_halfspace_d2", cert.gap, 0.0, 1e-6 * cert.b0))
    v = random_admissible(grid2, h2.datum, rng)
    cv = certificate(zeta, h2, v, dom2, k2)
    checks.append(SelfCheck("certificate_identity_random_v", cv.a + cv.b1, 0.0,
                            1e-9 * (abs(cv.a) + abs(cv.b1) + 1.0)))

    checks.append(SelfCheck("sigma_indicator_d1", sigma_K(k1, [1.0]), 0.5, 1e-10))
    k2unit = indicator_kernel(2, 1.0)
    checks.append(SelfCheck("sigma_indicator_d2", sigma_K(k2unit, [0.0, 1.0]), 2.0 / 3.0, 1e-3))
    checks.append(SelfCheck("sigma_radial_consistency_d2",
                            sigma_K(k2unit, [1.0, 0.0]) - sigma_K_radial(k2unit), 0.0, 1e-3))

    # d=1 minimizers are a translate family (equal energy 1/2); assert the
    # energy and monotone structure, not the interface position
    rep = minimize(h1, dom1, k1, SolveOptions(max_iters=120))
    checks.append(SelfCheck("minimize_halfspace_d1_energy", rep.rounded_energy.total, 0.5, 1e-9))
    checks.append(SelfCheck("minimize_halfspace_d1_monotone",
                            monotonicity_defect(rep.rounded, [1.0]), 0.0, 1e-12))

    facets = [halfspace_facet_in_ball([1.0], 0.0, 1.0, 1)]
    dom1s = domain_ball([0.0], 1.0, margin=0.25)
    grid1s = make_grid(dom1s, 0.00625)
    h1s = indicator_halfspace(grid1s, [1.0], 0.0)
    sweep = gamma_sweep(h1s, facets, dom1s, k1, [0.2, 0.1], set_id="halfspace")
    checks.append(SelfCheck("gamma_d1_exact_max_rel_err", float(np.max(sweep.rows[:, 5])), 0.0, 1e-9))

    raw = 2.5 * rng.random(grid2.shape) - 0.75
    raw[~grid2.interior] = h2.datum[~grid2.interior]
    eng = get_engine(dom2, k2, grid2)
    e_raw = eng.energy_values(raw).total
    clipped = field_from_values(grid2, np.clip(raw, 0.0, 1.0), h2.datum)
    e_clip = energy(clipped, dom2, k2).total
    checks.append(SelfCheck("truncation_never_increases", max(0.0, e_clip - e_raw), 0.0, 1e-12))

    return checks
