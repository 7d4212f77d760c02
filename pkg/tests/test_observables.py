"""Statistics-layer tests against closed forms: sawtooth and single-mode
structure functions, the cubic-increment identities, spectral correlation
derivatives, and the mergeable moment accumulator."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from burglab.godunov import GridField
from burglab.observables import (
    BracketSpec,
    MomentAccumulator,
    StructureTable,
    bracket_average,
    correlation_from_spectrum,
    correlation_fl,
    increment_moments,
    merge,
    oleinik_diagnostics,
    render,
    separation_grid,
    window_average,
)
from burglab.spectral import SpectralField, from_physical

N = 4096
L_GRID = np.array([2, 3, 10, 100, 1000, 2047]) / N


def sawtooth(n=N):
    return np.arange(n) / n - 0.5


def test_sawtooth_structure_functions_closed_form():
    """For u = x - 1/2 the increment takes the value l on a fraction 1 - l of
    the circle and l - 1 on the rest, so every moment is elementary:
    s_2 = l(1 - l), s_3 = -l(1 - l)(1 - 2l)."""
    l = np.array([3, 64, 500, 1024, 2000]) / N
    mom = increment_moments(sawtooth(), l, p_list=(1, 2, 3, 4))
    np.testing.assert_allclose(mom.signed[0], np.zeros_like(l), atol=1e-12)
    np.testing.assert_allclose(mom.signed[1], l * (1 - l), atol=1e-12)
    np.testing.assert_allclose(mom.signed[2], -l * (1 - l) * (1 - 2 * l), atol=1e-12)
    np.testing.assert_allclose(mom.signed[3], (1 - l) * l**4 + l * (1 - l) ** 4, atol=1e-12)
    np.testing.assert_allclose(mom.absolute[1], l**2 * (1 - l) + l * (1 - l) ** 2, atol=1e-12)


def test_single_sine_structure_functions():
    """u = sqrt(2) sin(2 pi x): S_2(l) = 4 sin^2(pi l) and the signed third
    moment vanishes by the x -> -x antisymmetry of the increments."""
    u = np.sqrt(2.0) * np.sin(2 * np.pi * np.arange(N) / N)
    mom = increment_moments(u, L_GRID, p_list=(1, 2, 3))
    np.testing.assert_allclose(mom.signed[1], 4 * np.sin(np.pi * L_GRID) ** 2, atol=1e-10)
    np.testing.assert_allclose(mom.signed[0], np.zeros_like(L_GRID), atol=1e-10)
    np.testing.assert_allclose(mom.signed[2], np.zeros_like(L_GRID), atol=1e-10)


def test_cubic_increment_identity():
    """integral (u(x+l) - u(x))^3 dx = 3 integral (u^l u^2 - (u^l)^2 u) dx: the
    cubes cancel by shift invariance, so s_3 is determined by the mixed terms."""
    rng = np.random.default_rng(5)
    u = rng.standard_normal(512)
    u -= u.mean()
    shifts = np.array([2, 7, 50, 200])
    mom = increment_moments(u, shifts / 512, p_list=(1, 2, 3))
    for s, got in zip(shifts, mom.signed[2]):
        ul = np.roll(u, -s)
        rhs = 3.0 * np.mean(ul * u**2 - ul**2 * u)
        assert got == pytest.approx(rhs, abs=1e-9)


def test_signed_absolute_positive_decomposition():
    """(delta u)^3 = -|delta u|^3 + 2 ((delta u)^+)^3 pointwise, so the three
    tabulated flavours are one identity; pos_cubed is checked against a direct
    clipped computation, not the arithmetic the table uses."""
    rng = np.random.default_rng(6)
    u = rng.standard_normal(1024)
    u -= u.mean()
    shifts = np.array([3, 17, 128])
    mom = increment_moments(u, shifts / 1024, p_list=(1, 2, 3))
    for j, s in enumerate(shifts):
        delta = np.roll(u, -s) - u
        direct_pos = np.mean(np.clip(delta, 0.0, None) ** 3)
        assert mom.pos_cubed[j] == pytest.approx(direct_pos, abs=1e-10)
        assert mom.signed[2][j] == pytest.approx(
            -mom.absolute[2][j] + 2 * direct_pos, abs=1e-10
        )


def test_structure_moments_shift_and_parity_invariant():
    rng = np.random.default_rng(8)
    u = rng.standard_normal(256)
    u -= u.mean()
    l = np.array([4, 32]) / 256
    base = increment_moments(u, l)
    shifted = increment_moments(np.roll(u, 77), l)
    mirrored = increment_moments(-u[::-1], l)
    for other in (shifted, mirrored):
        np.testing.assert_allclose(other.signed[1:], base.signed[1:], rtol=0, atol=1e-12)
        np.testing.assert_allclose(other.absolute, base.absolute, rtol=0, atol=1e-12)
        np.testing.assert_allclose(other.pos_cubed, base.pos_cubed, rtol=0, atol=1e-12)


def test_increment_moments_grid_snapping():
    u = sawtooth(100)
    mom = increment_moments(u, [0.033, 0.25])
    np.testing.assert_allclose(mom.l_eff, [0.03, 0.25])
    with pytest.raises(ValueError):
        increment_moments(u, [0.005])  # below 2/n
    half = increment_moments(u, [0.5004])  # snaps to 50/100
    assert half.l_eff[0] == 0.5


def test_non_integer_orders_have_no_signed_moment():
    u = sawtooth(256)
    mom = increment_moments(u, [0.1], p_list=(0.5, 2, 3))
    assert np.isnan(mom.signed[0, 0])
    delta_abs = np.abs(np.roll(u, -26) - u)  # 0.1 snaps to 26/256
    assert mom.absolute[0, 0] == pytest.approx(np.mean(np.sqrt(delta_abs)), abs=1e-12)


def test_correlation_single_mode_and_parseval():
    field = SpectralField.from_modes({-1: 1.0}, 16)  # u = sqrt(2) sin(2 pi x)
    l = np.linspace(0.0, 0.5, 11)
    f, df, d2f = correlation_fl(field, l)
    np.testing.assert_allclose(f, np.cos(2 * np.pi * l), atol=1e-14)
    np.testing.assert_allclose(df, -2 * np.pi * np.sin(2 * np.pi * l), atol=1e-13)
    np.testing.assert_allclose(d2f, -((2 * np.pi) ** 2) * np.cos(2 * np.pi * l), atol=1e-12)

    rng = np.random.default_rng(3)
    u = rng.standard_normal(257)
    u -= u.mean()
    multi = from_physical(u, K=64)
    f0, _, d2f0 = correlation_fl(multi, 0.0)
    assert f0[0] == pytest.approx(multi.norm(0) ** 2, rel=1e-12)
    assert d2f0[0] == pytest.approx(-multi.norm(1) ** 2, rel=1e-12)


def test_correlation_from_spectrum_two_modes():
    energies = np.array([0.75, 0.0, 0.25])
    l = np.array([0.0, 0.05, 0.2])
    f, df, d2f = correlation_from_spectrum(energies, l)
    expect = 0.75 * np.cos(2 * np.pi * l) + 0.25 * np.cos(6 * np.pi * l)
    np.testing.assert_allclose(f, expect, atol=1e-14)
    assert df[0] == 0.0


def test_separation_grid_properties():
    n = 4096
    l = separation_grid(n, per_decade=32)
    assert np.all(np.diff(l) > 0)
    np.testing.assert_allclose(np.rint(l * n), l * n, atol=1e-12)
    assert l[0] == pytest.approx(4.0 / n)
    assert l[-1] <= 0.25
    dense = separation_grid(n, per_decade=64)
    assert dense.size > l.size
    with pytest.raises(ValueError):
        separation_grid(n, l_min=1.0 / n)
    with pytest.raises(ValueError):
        separation_grid(n, l_min=0.3, l_max=0.25)


class _Acc:
    floats = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


@given(st.lists(_Acc.floats, min_size=4, max_size=40), st.integers(1, 3))
@settings(max_examples=40)
def test_accumulator_merge_matches_single_stream(xs, cut_seed):
    xs = np.asarray(xs)
    whole = MomentAccumulator(())
    for x in xs:
        whole.add(x)
    cut = 1 + (cut_seed * 7) % (len(xs) - 1)
    left, right = MomentAccumulator(()), MomentAccumulator(())
    for x in xs[:cut]:
        left.add(x)
    for x in xs[cut:]:
        right.add(x)
    ab = merge(left, right)
    ba = merge(right, left)
    for combo in (ab, ba):
        assert combo.count == whole.count
        assert combo.mean == pytest.approx(whole.mean, abs=1e-12 * (1 + abs(whole.mean)))
        assert combo.m2 == pytest.approx(whole.m2, rel=1e-9, abs=1e-9)


def test_accumulator_against_numpy():
    rng = np.random.default_rng(10)
    xs = rng.standard_normal((50, 3))
    acc = MomentAccumulator((3,))
    for row in xs:
        acc.add(row)
    np.testing.assert_allclose(acc.mean, xs.mean(axis=0), atol=1e-13)
    np.testing.assert_allclose(acc.variance(), xs.var(axis=0, ddof=1), rtol=1e-12)
    np.testing.assert_allclose(acc.stderr(), xs.std(axis=0, ddof=1) / np.sqrt(50), rtol=1e-12)


def test_accumulator_edge_cases():
    acc = MomentAccumulator((2,))
    assert np.all(np.isnan(acc.variance()))
    acc.add([1.0, 2.0])
    assert np.all(np.isnan(acc.variance()))
    with pytest.raises(ValueError):
        acc.add(np.zeros(3))
    with pytest.raises(ValueError):
        acc.merge(MomentAccumulator((3,)))
    # merging an empty accumulator is a no-op either way round
    empty = MomentAccumulator((2,))
    combined = merge(acc, empty)
    assert combined.count == 1
    np.testing.assert_array_equal(combined.mean, acc.mean)
    restored = MomentAccumulator.from_dict(acc.to_dict("x_"), "x_")
    assert restored.count == acc.count
    np.testing.assert_array_equal(restored.mean, acc.mean)


def test_structure_table_merge_and_lookup():
    l = np.array([0.1, 0.2])
    a = StructureTable.empty((2.0, 3.0), l)
    b = StructureTable.empty((2.0, 3.0), l)
    rng = np.random.default_rng(1)
    rows = rng.standard_normal((4, 2, 2))
    for r in rows[:2]:
        a.add_trajectory(r, np.abs(r), r[0])
    for r in rows[2:]:
        b.add_trajectory(r, np.abs(r), r[0])
    a.merge(b)
    assert a.trajectories == 4
    np.testing.assert_allclose(a.signed_mean(3.0), rows[:, 1, :].mean(axis=0), atol=1e-13)
    with pytest.raises(KeyError):
        a.signed_mean(4.0)
    with pytest.raises(ValueError):
        a.merge(StructureTable.empty((2.0,), l))


def test_window_average_trapezoid_exact_for_linear():
    times = np.linspace(0.0, 10.0, 101)
    series = 3.0 * times - 1.0
    got = window_average(times, series, BracketSpec(burn_in=2.0, window=6.0))
    assert got == pytest.approx(3.0 * 5.0 - 1.0, abs=1e-12)  # midpoint value


def test_window_average_coverage_errors():
    times = np.linspace(0.0, 1.0, 11)
    series = np.ones(11)
    with pytest.raises(ValueError):
        window_average(times, series, BracketSpec(burn_in=0.5, window=1.0))
    with pytest.raises(ValueError):
        window_average(times, series, BracketSpec(burn_in=0.42, window=0.01))
    with pytest.raises(ValueError):
        window_average(times, np.ones(10), BracketSpec(burn_in=0.0, window=1.0))
    with pytest.raises(ValueError):
        BracketSpec(burn_in=-1.0, window=1.0)


def test_bracket_average_matches_manual():
    times = np.linspace(0.0, 4.0, 41)
    per_traj = np.stack([np.sin(times), np.cos(times), times**2])
    spec = BracketSpec(burn_in=1.0, window=2.0)
    acc = bracket_average(times, per_traj, spec)
    assert acc.count == 3
    manual = np.mean([window_average(times, s, spec) for s in per_traj])
    assert acc.mean == pytest.approx(manual, abs=1e-13)


def test_oleinik_diagnostics_on_sawtooth():
    n = 256
    u = sawtooth(n)
    diag = oleinik_diagnostics(u)
    assert diag.max_pos_slope == pytest.approx(1.0, abs=1e-10)
    assert diag.sup_abs == pytest.approx(0.5, abs=1e-12)
    assert diag.total_variation == pytest.approx(2.0 * (n - 1) / n, abs=1e-12)

    inverted = -u  # single upward seam jump, downhill elsewhere
    d2 = oleinik_diagnostics(inverted)
    assert d2.max_pos_slope == pytest.approx(n - 1.0, abs=1e-9)
    assert d2.max_up_jump == pytest.approx(1.0 - 1.0 / n, abs=1e-12)
    assert d2.max_pos_slope_excluding_jump(inverted) == pytest.approx(-1.0, abs=1e-10)


def test_render_dispatch():
    field = SpectralField.from_modes({1: 1.0}, 8)
    vals = render(field)
    assert vals.size == 17
    x = np.arange(17) / 17
    np.testing.assert_allclose(vals, np.sqrt(2) * np.cos(2 * np.pi * x), atol=1e-12)
    grid = GridField(np.arange(8.0))
    assert render(grid) is grid.cells
    arr = [1.0, 2.0]
    np.testing.assert_array_equal(render(arr), np.array([1.0, 2.0]))
