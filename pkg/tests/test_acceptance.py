"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines as they
complete. The halfspace criteria share the session-scoped unit-ball setting
(indicator kernel R = 1, h = 1/64).
"""

import math
import subprocess
import sys

import numpy as np
import pytest

import nlperim as nl
from nlperim.energy import get_engine

from conftest import rng_for


def _report(num: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {num:2d} {'PASS' if ok else 'FAIL'} - {detail}")


def test_criterion_1_halfspace_minimality(accept64):
    dom, grid, k, H, eng = accept64
    e_h = eng.energy_values(H.values).total
    rng = rng_for("acceptance-1")
    worst_margin = math.inf
    ok_energy = True
    for _ in range(100):
        v = nl.random_admissible(grid, H.datum, rng)
        ev = eng.energy_values(v.values).total
        worst_margin = min(worst_margin, ev - e_h)
        ok_energy = ok_energy and (e_h <= ev + 1e-9)
    cert = nl.certificate(nl.halfspace_sign([0.0, 1.0]), H, H, dom, k)
    ok_gap = abs(cert.gap) <= 1e-6 * cert.b0
    ok = ok_energy and ok_gap
    _report(1, ok, f"halfspace minimality: competitor margin >= {worst_margin:.3e}, "
                   f"certificate gap {cert.gap:.2e} (tol {1e-6 * cert.b0:.2e})")
    assert ok_energy
    assert ok_gap


def test_criterion_2_halfspace_recovery(accept64):
    dom, grid, k, H, eng = accept64
    rep = nl.minimize(H, dom, k, reference=H, reference_normal=[0.0, 1.0])
    sd = nl.symdiff_measure(rep.rounded, H)
    ok_sd = sd <= 3 * grid.h * 2.0
    ok_mono = rep.monotonicity_defect <= 1e-3
    transfer = nl.check_normal_condition(nl.halfspace_sign([0.0, 1.0]), rep.u_star, dom, k)
    ok_transfer = transfer.violation_fraction <= 0.05
    ok = ok_sd and ok_mono and ok_transfer
    _report(2, ok, f"solver recovery: symdiff {sd:.4f} (tol {3 * grid.h * 2.0:.4f}), "
                   f"monotonicity defect {rep.monotonicity_defect:.2e} (tol 1e-3), "
                   f"normal-condition violations {transfer.violation_fraction:.3%} (tol 5%)")
    assert ok_sd
    assert ok_mono
    assert ok_transfer


def test_criterion_3_certificate_identity(accept64):
    dom, grid, k, H, eng = accept64
    rng = rng_for("acceptance-3")
    zeta = nl.halfspace_sign([0.0, 1.0])
    worst = 0.0
    ok = True
    for _ in range(20):
        v = nl.random_admissible(grid, H.datum, rng)
        rep = nl.certificate(zeta, H, v, dom, k)
        resid = abs(rep.a + rep.b1)
        tol = 1e-9 * (abs(rep.a) + abs(rep.b1) + 1.0)
        worst = max(worst, resid / tol)
        ok = ok and resid <= tol
    _report(3, ok, f"certificate identity a(v) = -b1(v): worst residual {worst:.2e} of tolerance")
    assert ok


def test_criterion_4_coarea_exactness(small2d):
    dom, grid, k, H = small2d
    rng = rng_for("acceptance-4")
    worst = 0.0
    for _ in range(100):
        u = nl.random_admissible(grid, H.datum, rng, levels=8)
        e = nl.energy(u, dom, k).total
        c = nl.coarea_decompose(u, dom, k).integral
        worst = max(worst, abs(c - e) / max(e, 1e-300))
    ok = worst <= 1e-12
    _report(4, ok, f"discrete coarea identity: worst relative mismatch {worst:.2e} (tol 1e-12)")
    assert ok


def test_criterion_5_truncation_monotonicity(small2d):
    dom, grid, k, H = small2d
    rng = rng_for("acceptance-5")
    eng = get_engine(dom, k, grid)
    violations = 0
    for _ in range(100):
        raw = 4.0 * rng.random(grid.shape) - 2.0
        raw[~grid.interior] = H.datum[~grid.interior]
        e_raw = eng.energy_values(raw).total
        e_cl = nl.energy(nl.truncate(grid, raw, H.datum), dom, k).total
        if e_cl > e_raw:
            violations += 1
    ok = violations == 0
    _report(5, ok, f"truncation never increases the energy: {violations}/100 violations")
    assert ok


def test_criterion_6_sigma_closed_forms():
    s1 = nl.sigma_K(nl.indicator_kernel(1, 1.0), [1.0])
    ok1 = abs(s1 - 0.5) <= 1e-10
    k2 = nl.indicator_kernel(2, 1.0)
    radial = nl.sigma_K_radial(k2)
    worst2 = 0.0
    worst_rel = 0.0
    for j in range(16):
        th = 2.0 * math.pi * j / 16
        val = nl.sigma_K(k2, [math.cos(th), math.sin(th)])
        worst2 = max(worst2, abs(val - 2.0 / 3.0))
        worst_rel = max(worst_rel, abs(val - radial) / radial)
    ok2 = worst2 <= 1e-3
    ok3 = worst_rel <= 1e-3
    ok = ok1 and ok2 and ok3
    _report(6, ok, f"surface tension closed forms: d=1 err {abs(s1 - 0.5):.2e} (tol 1e-10), "
                   f"d=2 err {worst2:.2e} (tol 1e-3), radial cross-check {worst_rel:.2e}")
    assert ok


def test_criterion_7_gamma_sweep():
    k1 = nl.indicator_kernel(1, 1.0)
    dom1 = nl.domain_ball([0.0], 1.0, margin=0.25)
    grid1 = nl.make_grid(dom1, 0.00625)
    h1 = nl.indicator_halfspace(grid1, [1.0], 0.0)
    rep1 = nl.gamma_sweep(h1, [nl.halfspace_facet_in_ball([1.0], 0.0, 1.0, 1)],
                          dom1, k1, [0.2, 0.1, 0.05], set_id="halfspace-1d")
    ok_d1 = bool(np.all(rep1.rows[:, 5] <= 1e-9))

    k2 = nl.indicator_kernel(2, 1.0)
    dom2 = nl.domain_ball([0.0, 0.0], 1.0, margin=0.25)
    grid2 = nl.make_grid(dom2, 0.00625)
    h2 = nl.indicator_halfspace(grid2, [0.0, 1.0], 0.0)
    rep2 = nl.gamma_sweep(h2, [nl.halfspace_facet_in_ball([0.0, 1.0], 0.0, 1.0, 2)],
                          dom2, k2, [0.2, 0.1, 0.05], set_id="halfspace-2d")
    errs = rep2.rows[:, 5]
    ok_dec = bool(np.all(np.diff(errs) < 0))
    ok_final = errs[-1] <= 0.05
    ok = ok_d1 and ok_dec and ok_final
    _report(7, ok, f"scaling sweep: d=1 exact (max err {np.max(rep1.rows[:, 5]):.1e}), "
                   f"d=2 errors {', '.join(f'{e:.3%}' for e in errs)} decreasing to <= 5%")
    assert ok_d1
    assert ok_dec
    assert ok_final


def test_criterion_8_cross_term_bound():
    k = nl.indicator_kernel(2, 1.0)
    dom = nl.domain_ball([0.0, 0.0], 1.0, margin=0.25)
    grid = nl.make_grid(dom, 0.00625)
    H = nl.indicator_halfspace(grid, [0.0, 1.0], 0.0)
    centers = grid.centers()
    blob = (np.abs(centers[:, 0]) < 0.15) & (np.abs(centers[:, 1] + 0.2) < 0.15)
    vals = H.values.copy().ravel()
    vals[blob] = 1.0 - vals[blob]
    pert = nl.field_from_values(grid, vals.reshape(grid.shape), H.datum)
    bound = nl.cross_term_bound(pert, H, k, 0.25)
    rows = []
    ok = True
    for eps in (0.2, 0.1, 0.05):
        measured = nl.cross_term_difference(pert, H, dom, k, eps)
        rows.append((eps, measured))
        ok = ok and measured <= bound + 1e-6
    detail = ", ".join(f"eps={e:.2f}: {m:.2e}" for e, m in rows)
    _report(8, ok, f"cross-term difference <= {bound:.3f} + 1e-6 ({detail})")
    assert ok


def test_criterion_9_gradient_check():
    dom = nl.domain_ball([0.0, 0.0], 1.0, margin=1.0)
    grid = nl.make_grid(dom, 1.0 / 16)
    k = nl.indicator_kernel(2, 1.0)
    eng = get_engine(dom, k, grid)
    H = nl.indicator_halfspace(grid, [0.0, 1.0], 0.0)
    rng = rng_for("acceptance-9")
    hd = grid.cell_volume
    delta = 0.1
    tau = 1e-5
    worst = 0.0
    idx = np.argwhere(grid.interior)
    for _ in range(3):
        base = nl.random_admissible(grid, H.datum, rng)
        vals = 0.9 * base.values + 0.05
        vals[~grid.interior] = H.datum[~grid.interior]
        _, g = eng.smoothed_energy_and_gradient(vals, delta)
        for s in rng.choice(len(idx), size=20, replace=False):
            ci = tuple(idx[s])
            vp = vals.copy()
            vp[ci] += tau
            vm = vals.copy()
            vm[ci] -= tau
            ep, _ = eng.smoothed_energy_and_gradient(vp, delta)
            em, _ = eng.smoothed_energy_and_gradient(vm, delta)
            fd = (ep - em) / (2 * tau) / hd
            worst = max(worst, abs(fd - g[s]) / max(abs(g[s]), 1e-12))
    ok = worst <= 1e-5
    _report(9, ok, f"smoothed gradient vs central differences: worst relative error {worst:.2e} (tol 1e-5)")
    assert ok


def test_criterion_10_selftest_determinism(tmp_path):
    outs = []
    for name in ("run1", "run2"):
        out = tmp_path / name
        proc = subprocess.run(
            [sys.executable, "-m", "nlperim.cli", "selftest", "--deterministic", "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stdout + proc.stderr
        outs.append((out / "selftest.csv").read_bytes())
    ok = outs[0] == outs[1]
    _report(10, ok, f"selftest reruns byte-identical ({len(outs[0])} bytes of CSV)")
    assert ok
