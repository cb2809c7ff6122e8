import numpy as np
import pytest

import nlperim as nl
from nlperim.energy import get_engine
from nlperim.errors import ValidationError

from conftest import rng_for


def test_constant_field_has_zero_energy(small2d):
    dom, grid, k, _ = small2d
    for c in (0.0, 0.37, 1.0):
        u = nl.constant_field(grid, c, np.full(grid.shape, c))
        assert nl.energy(u, dom, k).total == 0.0


def test_halfspace_energy_1d_oracle(small1d):
    # closed-form double integral: 1/2 * 2 * int_{-1}^0 (x+1) dx = 1/2, cross term 0
    dom, grid, k, H = small1d
    br = nl.energy(H, dom, k)
    assert br.interior_term == pytest.approx(0.5, abs=1e-10)
    assert br.cross_term == pytest.approx(0.0, abs=1e-12)
    assert br.total == pytest.approx(0.5, abs=1e-10)
    assert br.tail_bound == 0.0


def test_energy_complement_invariance(small2d):
    dom, grid, k, H = small2d
    rng = rng_for("complement")
    for _ in range(20):
        u = nl.random_admissible(grid, H.datum, rng)
        e1 = nl.energy(u, dom, k).total
        e2 = nl.energy(u.flipped(), dom, k).total
        assert e2 == pytest.approx(e1, rel=1e-12)


def test_energy_nonnegative_components(small2d):
    dom, grid, k, H = small2d
    rng = rng_for("nonneg")
    for _ in range(10):
        br = nl.energy(nl.random_admissible(grid, H.datum, rng), dom, k)
        assert br.interior_term >= 0 and br.cross_term >= 0 and br.tail_bound >= 0
        assert br.total == br.interior_term + br.cross_term


def test_energy_convexity(small2d):
    dom, grid, k, H = small2d
    rng = rng_for("convexity")
    for _ in range(50):
        u = nl.random_admissible(grid, H.datum, rng)
        v = nl.random_admissible(grid, H.datum, rng)
        eu = nl.energy(u, dom, k).total
        ev = nl.energy(v, dom, k).total
        for lam in (0.25, 0.5, 0.75):
            mix = u.replace_interior(lam * u.interior_values() + (1 - lam) * v.interior_values())
            emix = nl.energy(mix, dom, k).total
            assert emix <= lam * eu + (1 - lam) * ev + 1e-12


def test_perimeter_matches_energy_and_complement(small2d):
    dom, grid, k, H = small2d
    assert nl.perimeter_K(H, dom, k).total == nl.energy(H, dom, k).total
    flipped = H.flipped()
    assert nl.perimeter_K(flipped, dom, k).total == pytest.approx(
        nl.perimeter_K(H, dom, k).total, rel=1e-12)


def test_perimeter_of_empty_set(small2d):
    dom, grid, k, _ = small2d
    empty = nl.constant_field(grid, 0.0, np.zeros(grid.shape))
    assert nl.perimeter_K(empty, dom, k).total == 0.0


def test_perimeter_rejects_non_binary(small2d):
    dom, grid, k, H = small2d
    u = nl.constant_field(grid, 0.4, H.datum)
    with pytest.raises(ValidationError):
        nl.perimeter_K(u, dom, k)


def test_truncate_examples(small2d):
    _, grid, _, H = small2d
    u = nl.random_admissible(grid, H.datum, rng_for("trunc-id"))
    assert np.array_equal(nl.truncate(grid, u.values, H.datum).values, u.values)
    raw = np.full(grid.shape, 0.3)
    it = np.argwhere(grid.interior)
    raw[tuple(it[0])] = -0.5
    raw[tuple(it[1])] = 1.7
    out = nl.truncate(grid, raw, H.datum)
    assert out.values[tuple(it[0])] == 0.0
    assert out.values[tuple(it[1])] == 1.0
    assert out.values[tuple(it[2])] == 0.3


def test_truncation_never_increases_energy(small2d):
    dom, grid, k, H = small2d
    rng = rng_for("trunc-mono")
    eng = get_engine(dom, k, grid)
    for _ in range(20):
        raw = 4.0 * rng.random(grid.shape) - 2.0
        raw[~grid.interior] = H.datum[~grid.interior]
        e_raw = eng.energy_values(raw).total
        e_clamped = nl.energy(nl.truncate(grid, raw, H.datum), dom, k).total
        assert e_clamped <= e_raw + 1e-12


def test_energy_rejects_out_of_range(small2d):
    dom, grid, k, H = small2d
    raw = np.full(grid.shape, 1.5)
    raw[~grid.interior] = H.datum[~grid.interior]
    bad = nl.ScalarField(grid, raw, H.datum)
    with pytest.raises(ValidationError):
        nl.energy(bad, dom, k)


def test_energy_dimension_mismatch(small2d):
    dom, grid, k, H = small2d
    with pytest.raises(ValidationError):
        nl.energy(H, dom, nl.indicator_kernel(1, 0.5))


def test_coarea_binary_single_level(small2d):
    dom, grid, k, H = small2d
    dec = nl.coarea_decompose(H, dom, k)
    assert len(dec.levels) == 1
    per = nl.perimeter_K(H, dom, k).total
    assert dec.integral == pytest.approx(per, rel=1e-13)


def test_coarea_multilevel_matches_energy(small2d):
    dom, grid, k, H = small2d
    rng = rng_for("coarea4")
    for _ in range(20):
        u = nl.random_admissible(grid, H.datum, rng, levels=4)
        e = nl.energy(u, dom, k).total
        dec = nl.coarea_decompose(u, dom, k)
        assert dec.integral == pytest.approx(e, rel=1e-12)


def test_coarea_constant_field(small2d):
    dom, grid, k, _ = small2d
    u = nl.constant_field(grid, 0.5, np.full(grid.shape, 0.5))
    assert nl.coarea_decompose(u, dom, k).integral == 0.0


def test_refinement_stability_reported(small1d):
    dom, _, k, _ = small1d
    energies = {}
    for h in (1.0 / 16, 1.0 / 32):
        grid = nl.make_grid(dom, h)
        centers = grid.centers()[:, 0]
        vals = np.clip(0.5 + 0.4 * np.sin(2.0 * centers), 0.0, 1.0).reshape(grid.shape)
        u = nl.field_from_values(grid, vals, vals.copy())
        energies[h] = nl.energy(u, dom, k).total
    drift = abs(energies[1.0 / 16] - energies[1.0 / 32])
    rate_constant = drift / (1.0 / 16)
    print(f"refinement drift {drift:.3e}, estimated constant {rate_constant:.3e}")
    assert np.isfinite(rate_constant)


def test_fractional_energy_tail_bound_reported_and_warns():
    # slow-decay tails make the certified bound honestly large; it must be
    # reported, never silently dropped, and trip the 1% warning
    dom = nl.domain_ball([0.0], 0.5, margin=0.5)
    grid = nl.make_grid(dom, 1.0 / 8)
    k = nl.fractional_kernel(1, 0.5)
    H = nl.indicator_halfspace(grid, [1.0], 0.0)
    with pytest.warns(UserWarning, match="tail"):
        br = nl.energy(H, dom, k)
    assert br.tail_bound > 0.0
    assert np.isfinite(br.total) and br.total > 0.0


def test_fractional_tail_bound_shrinks_with_margin():
    k = nl.fractional_kernel(1, 0.5)
    bounds = []
    for margin in (0.5, 2.0):
        dom = nl.domain_ball([0.0], 0.5, margin=margin)
        grid = nl.make_grid(dom, 1.0 / 8)
        H = nl.indicator_halfspace(grid, [1.0], 0.0)
        with pytest.warns(UserWarning):
            bounds.append(nl.energy(H, dom, k).tail_bound)
    assert bounds[1] < bounds[0]
