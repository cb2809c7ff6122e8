import numpy as np
import pytest

import nlperim as nl
from nlperim.energy import get_engine
from nlperim.errors import NumericalError, ValidationError

from conftest import rng_for


def _stage_monotone(trace):
    bad = 0
    for i in range(1, len(trace)):
        same_stage = trace[i, 1] == trace[i - 1, 1] and trace[i, 2] == trace[i - 1, 2]
        if same_stage and trace[i, 3] > trace[i - 1, 3] * (1.0 + 1e-12):
            bad += 1
    return bad


def test_minimize_halfspace_1d_energy(small1d):
    # minimizers form a translate family in d=1; the optimal value is 1/2
    dom, grid, k, H = small1d
    rep = nl.minimize(H, dom, k)
    assert rep.rounded_energy.total == pytest.approx(0.5, abs=1e-9)
    assert rep.energy_final.total <= 0.5 + rep.smoothing_gap_bound + 1e-9
    assert nl.monotonicity_defect(rep.rounded, [1.0]) == 0.0
    assert _stage_monotone(rep.trace) == 0


def test_minimize_from_minimizer_keeps_trace_flat(small1d):
    # at the final smoothing level the minimizer is a fixed point up to the
    # smoothing gap; earlier (coarser) smoothing stages legitimately dip lower
    dom, grid, k, H = small1d
    opts = nl.SolveOptions(deltas=(grid.h**2,), multilevel=False)
    rep = nl.minimize(H, dom, k, opts, initial=H)
    energies = rep.trace[:, 3]
    assert energies.max() - energies.min() <= rep.smoothing_gap_bound + 1e-12
    assert rep.rounded_energy.total == pytest.approx(0.5, abs=1e-9)


def test_minimize_requires_binary_datum(small1d):
    dom, grid, k, H = small1d
    datum = nl.constant_field(grid, 0.5, np.full(grid.shape, 0.5))
    with pytest.raises(ValidationError):
        nl.minimize(datum, dom, k)


def test_minimize_halfspace_2d_small(small2d):
    dom, grid, k, H = small2d
    rep = nl.minimize(H, dom, k, reference=H, reference_normal=[0.0, 1.0])
    # interface chord length is 2 * 0.5 = 1 for the radius-1/2 ball
    assert nl.symdiff_measure(rep.rounded, H) <= 3 * grid.h * 1.0
    # the residual non-monotonicity of the discrete optimum scales with h;
    # the 1e-3 gate applies at h = 1/64 (acceptance), here h = 1/16
    assert rep.monotonicity_defect <= 1e-2
    assert rep.l1_to_reference is not None
    assert _stage_monotone(rep.trace) == 0


def test_minimize_halfspace_recovery_h32():
    dom = nl.domain_ball([0.0, 0.0], 1.0, margin=1.0)
    grid = nl.make_grid(dom, 1.0 / 32)
    k = nl.indicator_kernel(2, 1.0)
    H = nl.indicator_halfspace(grid, [0.0, 1.0], 0.0)
    rep = nl.minimize(H, dom, k, reference=H)
    assert nl.symdiff_measure(rep.rounded, H) <= 3 * grid.h * 2.0


def test_minimize_initialization_independent(small2d):
    dom, grid, k, H = small2d
    rng = rng_for("init-independent")
    results = []
    for _ in range(3):
        init = nl.random_admissible(grid, H.datum, rng)
        rep = nl.minimize(H, dom, k, initial=init)
        results.append(rep)
    energies = [r.energy_final.total for r in results]
    assert max(energies) - min(energies) <= 2 * results[0].smoothing_gap_bound + 1e-6
    for r in results[1:]:
        assert nl.symdiff_measure(r.rounded, results[0].rounded) <= 3 * grid.h * 1.0


def test_minimizer_beats_random_competitors(small2d):
    dom, grid, k, H = small2d
    rep = nl.minimize(H, dom, k)
    rng = rng_for("spot-check")
    e_star = rep.energy_final.total
    for _ in range(100):
        v = nl.random_admissible(grid, H.datum, rng)
        assert e_star <= nl.energy(v, dom, k).total + rep.smoothing_gap_bound + 1e-9


def test_plain_mode_divergence_guard(small2d, monkeypatch):
    # convexity plus clamping makes real divergence oscillatory, so drive the
    # guard with an engine stub whose reported energy keeps climbing
    dom, grid, k, H = small2d
    real = get_engine(dom, k, grid)

    class Rising:
        def __init__(self):
            self.calls = 0
            self.row_mass = real.row_mass
            self.pair_mass = real.pair_mass

        def energy_values(self, values):
            return real.energy_values(values)

        def smoothed_energy_and_gradient(self, values, delta):
            self.calls += 1
            return float(self.calls), np.zeros(grid.n_interior)

    import nlperim.solve as solve_mod

    monkeypatch.setattr(solve_mod, "get_engine", lambda *a, **kw: Rising())
    opts = nl.SolveOptions(accelerated=False, multilevel=False,
                           deltas=(grid.h**2,), max_iters=60)
    with pytest.raises(NumericalError, match="diverged"):
        nl.minimize(H, dom, k, opts)


def test_round_binary_field_is_identity(small2d):
    dom, grid, k, H = small2d
    res = nl.round_by_coarea(H, dom, k)
    assert 0.0 < res.t_star < 1.0
    assert np.array_equal(res.field.values, H.values)
    assert res.perimeter == pytest.approx(nl.perimeter_K(H, dom, k).total, rel=1e-12)


def test_round_constant_field(small2d):
    dom, grid, k, _ = small2d
    u = nl.constant_field(grid, 0.6, np.full(grid.shape, 0.6))
    res = nl.round_by_coarea(u, dom, k)
    assert res.perimeter == 0.0
    assert nl.perimeter_K(res.field, dom, k).total == 0.0


def test_round_two_parallel_interfaces(small2d):
    # u = (chi_H + chi_H')/2 with H' = {y > 0.25}: the t < 1/2 level matches the
    #  datum (cheap); the t >= 1/2 level adds a boundary mismatch band (costly)
    dom, grid, k, H = small2d
    inner = nl.indicator_halfspace(grid, [0.0, 1.0], 0.25)
    vals = 0.5 * (H.values + inner.values)
    u = nl.field_from_values(grid, vals, H.datum)
    levels, = [nl.coarea_decompose(u, dom, k)]
    res = nl.round_by_coarea(u, dom, k)
    pers = [per for _, per in levels.levels]
    assert res.perimeter == pytest.approx(min(pers), rel=1e-12)
    assert nl.perimeter_K(res.field, dom, k).total <= nl.energy(u, dom, k).total + 1e-12


def test_round_never_increases_energy(small2d):
    dom, grid, k, H = small2d
    rng = rng_for("round-mono")
    for _ in range(20):
        u = nl.random_admissible(grid, H.datum, rng, levels=6)
        res = nl.round_by_coarea(u, dom, k)
        assert nl.perimeter_K(res.field, dom, k).total <= nl.energy(u, dom, k).total + 1e-12


def test_monotonicity_defect_examples(small2d):
    _, grid, _, H = small2d
    assert nl.monotonicity_defect(H, [0.0, 1.0]) == 0.0
    assert nl.monotonicity_defect(H.flipped(), [0.0, 1.0]) == 1.0
    with pytest.raises(ValidationError):
        nl.monotonicity_defect(H, [1.0, 1.0])


def test_gradient_matches_finite_differences(small2d):
    dom, grid, k, H = small2d
    eng = get_engine(dom, k, grid)
    rng = rng_for("fd")
    hd = grid.cell_volume
    delta = 0.1
    u = nl.random_admissible(grid, H.datum, rng)
    vals = 0.9 * u.values + 0.05
    vals[~grid.interior] = H.datum[~grid.interior]
    _, g = eng.smoothed_energy_and_gradient(vals, delta)
    idx = np.argwhere(grid.interior)
    tau = 1e-5
    for s in rng.choice(len(idx), size=10, replace=False):
        ci = tuple(idx[s])
        vp = vals.copy()
        vp[ci] += tau
        vm = vals.copy()
        vm[ci] -= tau
        ep, _ = eng.smoothed_energy_and_gradient(vp, delta)
        em, _ = eng.smoothed_energy_and_gradient(vm, delta)
        fd = (ep - em) / (2 * tau) / hd
        assert fd == pytest.approx(g[s], rel=1e-5, abs=1e-8)


def test_solve_options_schedule_validation():
    opts = nl.SolveOptions(deltas=(0.1, 0.2))
    with pytest.raises(ValidationError):
        opts.schedule(1.0 / 16)
    opts = nl.SolveOptions(deltas=(0.1,))
    with pytest.raises(ValidationError):
        opts.schedule(1.0 / 16)  # final delta above h^2
    default = nl.SolveOptions().schedule(1.0 / 64)
    assert default[-1] <= (1.0 / 64) ** 2
    assert all(b < a for a, b in zip(default, default[1:]))
