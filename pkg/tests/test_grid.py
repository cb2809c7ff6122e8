import numpy as np
import pytest

import nlperim as nl
from nlperim.errors import ValidationError

from conftest import rng_for


@pytest.fixture(scope="module")
def line_grid():
    dom = nl.domain_ball([0.0], 0.6, margin=0.4)
    return dom, nl.make_grid(dom, 0.5)


def test_halfspace_1d_centers(line_grid):
    _, grid = line_grid
    f = nl.indicator_halfspace(grid, [1.0], 0.0)
    assert grid.axis_centers(0).tolist() == [-0.75, -0.25, 0.25, 0.75]
    assert f.values.tolist() == [0.0, 0.0, 1.0, 1.0]


def test_halfspace_complement_sums_to_one(line_grid):
    _, grid = line_grid
    a = nl.indicator_halfspace(grid, [1.0], 0.0)
    b = nl.indicator_halfspace(grid, [-1.0], 0.0)
    assert np.array_equal(a.values + b.values, np.ones(grid.shape))


def test_halfspace_rejects_non_unit_normal(line_grid):
    _, grid = line_grid
    with pytest.raises(ValidationError):
        nl.indicator_halfspace(grid, [2.0], 0.0)


def test_halfspace_constant_along_orthogonal_axis(small2d):
    _, grid, _, _ = small2d
    f = nl.indicator_halfspace(grid, [1.0, 0.0], 0.0)
    assert np.all(f.values == f.values[:, :1])


def test_superlevel_constant_field(small2d):
    _, grid, _, _ = small2d
    u = nl.constant_field(grid, 0.5, np.full(grid.shape, 0.5))
    assert np.all(nl.superlevel(u, 0.4).values == 1.0)
    assert np.all(nl.superlevel(u, 0.6).values == 0.0)


def test_superlevel_idempotent_on_binary(small2d):
    _, grid, _, H = small2d
    for t in (0.1, 0.5, 0.9):
        assert np.array_equal(nl.superlevel(H, t).values, H.values)


def test_superlevel_threshold(small2d):
    _, grid, _, H = small2d
    vals = np.choose(np.arange(grid.ncells).reshape(grid.shape) % 4, [0.0, 0.3, 0.7, 1.0])
    u = nl.field_from_values(grid, vals, vals.copy())
    lev = nl.superlevel(u, 0.5)
    assert np.array_equal(lev.values, (vals > 0.5).astype(float))


def test_superlevel_monotone_in_threshold(small2d):
    _, grid, _, H = small2d
    rng = rng_for("superlevel-monotone")
    thresholds = np.linspace(0.05, 0.95, 10)
    for _ in range(100):
        u = nl.random_admissible(grid, H.datum, rng)
        prev = None
        for t in thresholds:
            cur = nl.superlevel(u, t).values
            if prev is not None:
                assert np.all(cur <= prev)
            prev = cur


def test_superlevel_requires_open_interval(small2d):
    _, grid, _, H = small2d
    with pytest.raises(ValidationError):
        nl.superlevel(H, 0.0)


def test_symdiff_zero_and_count(small2d):
    _, grid, _, H = small2d
    assert nl.symdiff_measure(H, H) == 0.0
    other_vals = H.values.copy()
    idx = np.argwhere(grid.interior)[:7]
    for ci in idx:
        other_vals[tuple(ci)] = 1.0 - other_vals[tuple(ci)]
    other = nl.field_from_values(grid, other_vals, H.datum)
    assert nl.symdiff_measure(other, H) == pytest.approx(7 * grid.cell_volume)


def test_symdiff_halfspace_vs_complement(small2d):
    _, grid, _, _ = small2d
    a = nl.indicator_halfspace(grid, [0.0, 1.0], 0.0)
    b = nl.indicator_halfspace(grid, [0.0, -1.0], 0.0)
    # no center lies on the hyperplane, so the fields differ everywhere
    measure = grid.ncells * grid.cell_volume
    assert nl.symdiff_measure(a, b) == pytest.approx(measure)


def test_symdiff_rejects_non_binary(small2d):
    _, grid, _, H = small2d
    u = nl.constant_field(grid, 0.5, H.datum)
    with pytest.raises(ValidationError):
        nl.symdiff_measure(u, H)


def test_tag_partition(small2d):
    _, grid, _, _ = small2d
    assert grid.n_interior + np.count_nonzero(~grid.interior) == grid.ncells


def test_exterior_frozen_bit_exact(small2d):
    _, grid, _, H = small2d
    rng = rng_for("frozen")
    u = nl.random_admissible(grid, H.datum, rng)
    ext = ~grid.interior
    mutated = u.replace_interior(rng.random(grid.n_interior))
    assert np.array_equal(mutated.values[ext], H.datum[ext])
    raw = 3.0 * rng.random(grid.shape) - 1.0
    clamped = nl.truncate(grid, raw, H.datum)
    assert np.array_equal(clamped.values[ext], H.datum[ext])


def test_field_constructor_rejects_datum_mismatch(small2d):
    _, grid, _, H = small2d
    bad = H.values.copy()
    ext_idx = np.argwhere(~grid.interior)[0]
    bad[tuple(ext_idx)] = 1.0 - bad[tuple(ext_idx)]
    with pytest.raises(ValidationError):
        nl.ScalarField(grid, bad, H.datum)


def test_grid_requires_even_division():
    dom = nl.domain_ball([0.0], 0.6, margin=0.4)
    with pytest.raises(ValidationError, match="divide"):
        nl.make_grid(dom, 0.3)


def test_domain_requires_strict_containment():
    with pytest.raises(ValidationError):
        nl.DomainSpec(nl.Ball((0.0,), 1.0), (-1.0,), (2.0,))


def test_field_csv_roundtrip(tmp_path, small2d):
    _, grid, _, H = small2d
    u = nl.random_admissible(grid, H.datum, rng_for("csv"))
    path = tmp_path / "field.csv"
    nl.save_field_csv(u, path)
    back = nl.load_field_values(grid, path)
    assert np.array_equal(back, u.values)


def test_random_admissible_levels(small2d):
    _, grid, _, H = small2d
    u = nl.random_admissible(grid, H.datum, rng_for("levels"), levels=4)
    assert len(np.unique(u.values[grid.interior])) <= 4
    assert u.in_unit_range
