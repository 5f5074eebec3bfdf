import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import SHORT_SEASON, toy_ensemble, toy_grid
from extentlab.analytics import (
    EventSpec, ExtentSample, ReferenceSurface, average_extent, average_probability, counted_days, daily_extents,
    daily_increment, daily_probability, empirical_extent, empirical_yearly_extents, event_indicator,
    event_probability, extent, increment_field, posterior_summary, reference_mean, slot_count,
    slot_indicators, surface_csv, extent_csv, trend_from_extents, yearly_extent_trend, yearly_extents,
)
from extentlab.core import DEFAULT_SEASON, GridSpec, PeriodSelector, Site, decade, region_weights

JJA = SHORT_SEASON.jja_days()          # days 2..11 of a 12-day window


def _rand_ens(B=4, S=5, T=4, seed=0, scale=2.0):
    rng = np.random.default_rng(seed)
    return toy_ensemble(20 + scale * rng.normal(size=(B, S, T, SHORT_SEASON.season_length)), rng=rng)


def _over(ens, c=0.0, k=1, years=(1, 2, 3, 4), complement=False, ref=None):
    period = PeriodSelector(years, JJA)
    ref = ref or reference_mean(ens, period)
    kind = "daily_over_ref" if k == 1 else "daily_over_ref_persist"
    return EventSpec(kind, c, k, ref, (period,), complement)


# -- reference -------------------------------------------------------------------

def test_reference_of_constant_ensemble():
    ens = toy_ensemble(np.full((2, 3, 2, 12), 20.0))
    np.testing.assert_array_equal(reference_mean(ens, PeriodSelector((1, 2), JJA)).values, 20.0)


def test_reference_pools_replicates():
    Y = np.stack([np.full((3, 2, 12), 10.0), np.full((3, 2, 12), 30.0)])
    ref = reference_mean(toy_ensemble(Y), PeriodSelector((1, 2), JJA))
    np.testing.assert_array_equal(ref.values, 20.0)
    assert not ref.per_replicate
    per = reference_mean(toy_ensemble(Y), PeriodSelector((1, 2), JJA), per_replicate=True)
    np.testing.assert_array_equal(per.values, [[10.0] * 3, [30.0] * 3])


def test_reference_matches_loop():
    ens = _rand_ens()
    period = PeriodSelector((2, 3), JJA)
    got = reference_mean(ens, period, threads=3).values
    want = oracles.reference_mean_loop(np.asarray(ens.Y), [1, 2], [d - 1 for d in JJA])
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_reference_must_be_finite():
    with pytest.raises(ValueError):
        ReferenceSurface(np.array([1.0, np.nan]))


# -- indicators ------------------------------------------------------------------

def _series_ens(vals, L=12):
    Y = np.zeros((1, 1, 1, L))
    Y[0, 0, 0, :len(vals)] = vals
    return toy_ensemble(Y, grid=GridSpec([Site("p", 0, 40, 0)], [1.0]))


@pytest.mark.parametrize("vals,want", [((3, 3, 3), 1), ((3, 1, 3), 0)])
def test_three_day_persistence_examples(vals, want):
    ens = _series_ens(vals)
    spec = EventSpec("daily_over_ref_persist", 2.0, 3, ReferenceSurface(np.zeros(1)), (PeriodSelector((1,), JJA),))
    assert event_indicator(ens, spec, 0, 0, 1, 2) == want


def test_persistence_window_outside_season_is_an_error():
    ens = _series_ens((3, 3, 3))
    spec = EventSpec("daily_over_ref_persist", 2.0, 3, ReferenceSurface(np.zeros(1)), (PeriodSelector((1,), JJA),))
    with pytest.raises(ValueError):
        event_indicator(ens, spec, 0, 0, 1, 1)
    with pytest.raises(ValueError):
        event_indicator(ens, spec.with_(k=2), 0, 0, 1, 12)


def test_event_spec_validation():
    ref = ReferenceSurface(np.zeros(2))
    p = PeriodSelector((1,), JJA)
    with pytest.raises(ValueError):
        EventSpec("daily_over_ref", 0, 4, ref, (p,))
    with pytest.raises(ValueError):
        EventSpec("daily_over_ref_persist", 0, 1, ref, (p,))
    with pytest.raises(ValueError):
        EventSpec("decade_diff", 0, 1, None, (p, PeriodSelector((2, 3), JJA)))
    with pytest.raises(ValueError):
        EventSpec("daily_increment", 0, 1, None, (p, PeriodSelector((2,), (2, 3))))
    with pytest.raises(ValueError):
        EventSpec("daily_over_ref", 0, 1, None, (p,))
    with pytest.raises(ValueError):
        EventSpec("weird", 0, 1, ref, (p,))


def test_slot_indicators_match_loop_oracle():
    ens = _rand_ens(seed=3)
    Y = np.asarray(ens.Y)
    for k in (1, 2, 3):
        for c in (0.0, 1.0):
            spec = _over(ens, c, k, years=(2, 4))
            r = spec.reference.values
            want = oracles.daily_over_ref_loop(Y, r, c, k, [1, 3], JJA)
            for b in range(ens.B):
                ind, counted = slot_indicators(ens, spec, b)
                got = {(b, s, ti, l): int(ind[s, ti, l - 1]) for s in range(Y.shape[1]) for ti in range(2)
                       for l in range(1, 13) if counted[l - 1]}
                assert got == {key: v for key, v in want.items() if key[0] == b}


def test_pointwise_indicator_agrees_with_vectorised():
    ens = _rand_ens(seed=4)
    spec = _over(ens, 0.5, 3)
    ind, counted = slot_indicators(ens, spec, 2)
    for s in range(5):
        for t in range(1, 5):
            for l in np.flatnonzero(counted) + 1:
                assert event_indicator(ens, spec, 2, s, t, int(l)) == ind[s, t - 1, l - 1]


# -- probabilities ---------------------------------------------------------------

def test_probability_all_and_half():
    Y = np.zeros((500, 1, 1, 12))
    Y[:250] = 5.0
    ens = toy_ensemble(Y, grid=GridSpec([Site("p", 0, 40, 0)], [1.0]))
    spec = EventSpec("daily_over_ref", 1.0, 1, ReferenceSurface(np.zeros(1)), (PeriodSelector((1,), JJA),))
    assert event_probability(ens, spec, 0, 1, 3) == 0.5
    spec0 = spec.with_(c=-1.0)
    assert event_probability(ens, spec0, 0, 1, 3) == 1.0


def test_probability_is_a_fraction_of_b():
    ens = _rand_ens(B=7)
    p = daily_probability(ens, _over(ens, 0.3, 2))
    vals = p[~np.isnan(p)]
    np.testing.assert_array_equal(vals * 7, np.round(vals * 7))
    assert np.all((vals >= 0) & (vals <= 1))


def test_constant_daily_probability_averages_to_itself():
    Y = np.zeros((4, 2, 3, 12))
    Y[:3] = 5.0          # event holds in 3 of 4 replicates everywhere
    ens = toy_ensemble(Y)
    spec = EventSpec("daily_over_ref", 1.0, 1, ReferenceSurface(np.zeros(2)), (PeriodSelector((1, 2, 3), JJA),))
    np.testing.assert_array_equal(average_probability(ens, spec), 0.75)


def test_average_probability_matches_double_loop():
    ens = _rand_ens(seed=5)
    spec = _over(ens, 0.4, 2)
    Y = np.asarray(ens.Y)
    ind = oracles.daily_over_ref_loop(Y, spec.reference.values, 0.4, 2, [0, 1, 2, 3], JJA)
    want = np.zeros(5)
    for s in range(5):
        keys = [(ti, l) for (b, ss, ti, l) in ind if b == 0 and ss == s]
        acc = 0.0
        for ti, l in keys:
            acc += sum(ind[(b, s, ti, l)] for b in range(ens.B)) / ens.B
        want[s] = acc / len(keys)
    np.testing.assert_allclose(average_probability(ens, spec, threads=2), want, rtol=0, atol=1e-12)


def test_decade_jja_has_920_slots():
    p = decade(1966)
    spec = EventSpec("daily_over_ref", 0.0, 1, ReferenceSurface(np.zeros(1)), (p,))
    assert slot_count(spec, DEFAULT_SEASON.season_length) == 920
    inc = EventSpec("daily_increment", 0.0, 1, None, (decade(1966), decade(2006)))
    assert slot_count(inc, DEFAULT_SEASON.season_length) == 920
    # persistence windows lose the edge days of each summer
    assert slot_count(spec.with_(kind="daily_over_ref_persist", k=2), DEFAULT_SEASON.season_length) == 910
    assert slot_count(spec.with_(kind="daily_over_ref_persist", k=3), DEFAULT_SEASON.season_length) == 900


def test_counted_days_mask():
    m = counted_days([2, 3, 4, 5], 6, (-1, 1))
    np.testing.assert_array_equal(np.flatnonzero(m) + 1, [3, 4])


# -- extents ---------------------------------------------------------------------

def test_extent_all_ones_and_half():
    grid = GridSpec([Site(f"p{i}", i, 40, 0) for i in range(4)], np.ones(4), {"R": np.array([1, 1, 1, 1], bool)})
    Y = np.zeros((1, 4, 1, 12))
    Y[0, :2] = 5.0
    ens = toy_ensemble(Y, grid=grid)
    spec = EventSpec("daily_over_ref", 1.0, 1, ReferenceSurface(np.zeros(4)), (PeriodSelector((1,), JJA),))
    assert extent(ens, spec, "R", 0, 1, 4) == 0.5
    assert extent(ens, spec.with_(c=-1.0), "R", 0, 1, 4) == 1.0


def test_extent_weights_follow_cell_area():
    grid = GridSpec([Site("a", 0, 40, 0), Site("b", 1, 40, 0)], [16.0, 1.0])
    Y = np.zeros((1, 2, 1, 12))
    Y[0, 0] = 5.0
    ens = toy_ensemble(Y, grid=grid)
    spec = EventSpec("daily_over_ref", 1.0, 1, ReferenceSurface(np.zeros(2)), (PeriodSelector((1,), JJA),))
    assert extent(ens, spec, "ALL", 0, 1, 4) == pytest.approx(16 / 17, abs=1e-15)


def test_constant_daily_extent_averages_to_itself():
    grid = GridSpec([Site(f"p{i}", i, 40, 0) for i in range(4)], np.ones(4))
    Y = np.zeros((3, 4, 2, 12))
    Y[:, 0] = 5.0
    ens = toy_ensemble(Y, grid=grid)
    spec = EventSpec("daily_over_ref", 1.0, 1, ReferenceSurface(np.zeros(4)), (PeriodSelector((1, 2), JJA),))
    np.testing.assert_array_equal(average_extent(ens, spec).values, 0.25)


def test_complement_and_fubini_identities():
    ens = _rand_ens(B=3, S=6, seed=8)
    for k in (1, 2, 3):
        spec = _over(ens, 0.2, k)
        for region in ("ALL", "R1", "R2"):
            for b in range(ens.B):
                e = daily_extents(ens, spec, region, b)
                ec = daily_extents(ens, spec.negated(), region, b)
                ok = ~np.isnan(e)
                assert np.all(np.abs(e[ok] + ec[ok] - 1) <= 1e-12)
                # spatial average of per-point time averages
                ind, counted = slot_indicators(ens, spec, b)
                per_point = ind[:, :, counted].reshape(ind.shape[0], -1).mean(axis=1)
                w = region_weights(ens.grid, region)
                assert abs(e[ok].mean() - w @ per_point) <= 1e-12
            avg = average_extent(ens, spec, region)
            assert np.all((avg.values >= 0) & (avg.values <= 1))


def test_extent_interval_is_central_quantiles():
    x = np.linspace(0, 1, 1001)
    lo, hi = ExtentSample(x).interval(0.90)
    assert lo == pytest.approx(0.05, abs=1e-3) and hi == pytest.approx(0.95, abs=1e-3)


def test_average_events_extent_and_probability():
    Y = np.zeros((2, 2, 4, 12))
    Y[0, 0, 2:] = 3.0   # replicate 0, point 0 warms by 3 in years 3-4
    Y[1, :, 2:] = 1.0
    ens = toy_ensemble(Y, grid=GridSpec([Site("a", 0, 40, 0), Site("b", 1, 40, 0)], [1.0, 1.0]))
    p1, p2 = PeriodSelector((1, 2), JJA), PeriodSelector((3, 4), JJA)
    spec = EventSpec("decade_diff", 2.0, 1, None, (p1, p2))
    assert event_indicator(ens, spec, 0, 0) == 1 and event_indicator(ens, spec, 1, 0) == 0
    np.testing.assert_array_equal(average_probability(ens, spec), [0.5, 0.0])
    np.testing.assert_array_equal(average_extent(ens, spec).values, [0.5, 0.0])
    avg = EventSpec("decade_avg_over_ref", 0.5, 1, ReferenceSurface(np.zeros(2)), (p2,))
    np.testing.assert_array_equal(average_extent(ens, avg).values, [0.5, 1.0])


# -- trends ----------------------------------------------------------------------

def test_constant_extents_have_zero_slope():
    r = trend_from_extents(range(1, 11), np.full((5, 10), 0.3))
    assert r.slope == 0.0 and r.ci == (0.0, 0.0)


def test_linear_extents_recover_slope():
    t = np.arange(1, 51)
    E = np.tile(0.4 + 0.0035 * (t - 1), (3, 1))
    r = trend_from_extents(t, E)
    assert abs(r.slope - 0.0035) <= 1e-12
    assert abs(r.intercept - (0.4 - 0.0035)) <= 1e-12


def test_trend_needs_three_years():
    with pytest.raises(ValueError):
        trend_from_extents([1, 2], np.zeros((2, 2)))


def test_yearly_extent_trend_on_warming_ensemble():
    rng = np.random.default_rng(2)
    B, S, T = 20, 6, 12
    Y = rng.normal(size=(B, S, T, 12)) + 0.3 * np.arange(T)[None, None, :, None]
    ens = toy_ensemble(Y)
    spec = EventSpec("daily_over_ref", 1.0, 1, reference_mean(ens, PeriodSelector((1, 2), JJA)),
                     (PeriodSelector((1,), JJA),))
    r = yearly_extent_trend(ens, spec, years=range(1, T + 1))
    assert r.slope > 0 and r.ci[0] > 0
    E = yearly_extents(ens, spec, years=range(1, T + 1))
    assert E.shape == (B, T)
    np.testing.assert_allclose(r.mean_extents, E.mean(axis=0), rtol=0, atol=1e-15)


# -- increments ------------------------------------------------------------------

def test_identical_periods_give_zero_increment():
    Y = np.tile(np.random.default_rng(0).normal(size=(1, 2, 2, 12)), (1, 1, 2, 1))
    ens = toy_ensemble(Y)
    per = (PeriodSelector((1, 2), JJA), PeriodSelector((3, 4), JJA))
    assert daily_increment(ens, 0, 1, 2, 5, per) == 0.0


def test_uniform_shift_gives_its_size():
    base = np.random.default_rng(0).normal(size=(1, 2, 2, 12))
    Y = np.concatenate([base, base + 2.0], axis=2)
    ens = toy_ensemble(Y.astype(np.float32))
    per = (PeriodSelector((1, 2), JJA), PeriodSelector((3, 4), JJA))
    Z = increment_field(ens, 0, per)
    ok = ~np.isnan(Z)
    assert ok.sum() == 2 * 2 * len(JJA)
    np.testing.assert_allclose(Z[ok], 2.0, atol=1e-5)
    with pytest.raises(ValueError):
        daily_increment(ens, 0, 0, 1, 3, (PeriodSelector((1, 2), JJA), PeriodSelector((3,), JJA)))


def test_increment_mean_equals_period_mean_difference():
    ens = _rand_ens(B=3, S=4, T=6, seed=6)
    p1, p2 = PeriodSelector((1, 2, 3), JJA), PeriodSelector((4, 5, 6), JJA)
    for b in range(3):
        Z = increment_field(ens, b, (p1, p2))
        Y = np.asarray(ens.Y[b], dtype=np.float64)
        d = np.array(JJA) - 1
        diff = Y[:, 3:][:, :, d].reshape(4, -1).mean(axis=1) - Y[:, :3][:, :, d].reshape(4, -1).mean(axis=1)
        got = np.nanmean(Z.reshape(4, -1), axis=1)
        assert np.all(np.abs(got - diff) <= 1e-12)


def test_increment_event_indicator():
    ens = _rand_ens(seed=9)
    per = (PeriodSelector((1, 2), JJA), PeriodSelector((3, 4), JJA))
    spec = EventSpec("daily_increment", 0.5, 1, None, per)
    for s in range(5):
        for j in (1, 2):
            for l in JJA:
                z = daily_increment(ens, 1, s, j, l, per)
                assert event_indicator(ens, spec, 1, s, j, l) == int(z > 0.5)


# -- station data ----------------------------------------------------------------

def test_empirical_extent_half_of_eighteen():
    Y = np.zeros((18, 1, 12))
    Y[:9] = 5.0
    spec = EventSpec("daily_over_ref", 1.0, 1, ReferenceSurface(np.zeros(18)), (PeriodSelector((1,), JJA),))
    assert empirical_extent(Y, spec, 1, 4) == 0.5
    Y[0, 0, 3] = np.nan      # dropping one exceeding station leaves 8 of 17
    assert empirical_extent(Y, spec, 1, 4) == pytest.approx(8 / 17, abs=1e-15)


def test_empirical_extent_without_data_raises():
    Y = np.full((3, 1, 12), np.nan)
    spec = EventSpec("daily_over_ref", 1.0, 1, ReferenceSurface(np.zeros(3)), (PeriodSelector((1,), JJA),))
    with pytest.raises(ValueError):
        empirical_extent(Y, spec, 1, 4)
    assert np.isnan(empirical_yearly_extents(Y, spec, [1], JJA)[0])


def test_empirical_extent_equals_uniform_grid_extent():
    rng = np.random.default_rng(1)
    Yst = 20 + rng.normal(size=(6, 2, 12))
    grid = GridSpec([Site(f"s{i}", i, 40, 0) for i in range(6)], np.ones(6))
    ens = toy_ensemble(Yst[None], grid=grid)
    spec = EventSpec("daily_over_ref_persist", 0.3, 3, ReferenceSurface(np.full(6, 20.0)),
                     (PeriodSelector((1, 2), JJA),))
    for t in (1, 2):
        for l in range(3, 11):
            assert empirical_extent(Yst, spec, t, l) == pytest.approx(extent(ens, spec, "ALL", 0, t, l), abs=1e-12)


def test_empirical_trend_on_synthetic_warming():
    # 18 stations warming 0.02 C/yr with unit daily noise: the exceedance share grows
    rng = np.random.default_rng(0)
    T, L = 60, 92
    Y = rng.normal(size=(18, T, L)) + 0.02 * np.arange(T)[None, :, None]
    spec = EventSpec("daily_over_ref", 0.0, 1, ReferenceSurface(np.zeros(18)),
                     (PeriodSelector((1,), range(1, L + 1)),))
    E = empirical_yearly_extents(Y, spec, range(1, T + 1), range(1, L + 1))
    per_decade = 10 * np.polyfit(np.arange(T), E, 1)[0]
    # slope of Phi(0.02 t) near t = 30 is 0.02 * phi(0.6) ~ 0.0067 per year
    assert 0.05 <= per_decade <= 0.085


# -- summaries -------------------------------------------------------------------

def test_posterior_summary_examples():
    s = posterior_summary([2.5])
    assert s.mean == 2.5 and s.sd == 0.0
    assert posterior_summary([0.0, 1.0]).mean == 0.5
    x = np.linspace(0, 1, 1001)
    s = posterior_summary(x)
    assert abs(s.quantiles[0.05] - 0.05) <= 1e-3 and abs(s.quantiles[0.95] - 0.95) <= 1e-3
    assert s.quantiles[0.05] == pytest.approx(oracles.quantile_sorted(x, 0.05), abs=1e-15)
    assert s.counts.sum() == 1001 and len(s.edges) == 21
    with pytest.raises(ValueError):
        posterior_summary([])


def test_csv_formats():
    grid = toy_grid(2, regions=False)
    text = surface_csv(None, grid, [0.123456789, 1.0])
    lines = text.splitlines()
    assert lines[0] == "grid_id,lon,lat,value"
    assert lines[1].endswith(",0.123457") and lines[2].endswith(",1")
    assert extent_csv(None, [0.5, 0.25]).splitlines() == ["replicate,value", "1,0.5", "2,0.25"]


# -- properties ------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_monotone_in_threshold_and_persistence(seed):
    ens = _rand_ens(B=3, S=4, T=2, seed=seed, scale=1.5)
    ref = reference_mean(ens, PeriodSelector((1, 2), JJA))
    ind = {}
    for k in (1, 2, 3):
        for c in (0.0, 1.0, 2.0):
            spec = _over(ens, c, k, years=(1, 2), ref=ref)
            ind[c, k] = np.stack([slot_indicators(ens, spec, b)[0] for b in range(3)])
    common = counted_days(JJA, 12, (-1, 1))
    for k in (1, 2, 3):
        assert np.all(ind[2.0, k] <= ind[1.0, k]) and np.all(ind[1.0, k] <= ind[0.0, k])
    for c in (0.0, 1.0, 2.0):
        a, b2, b3 = (ind[c, k][..., common] for k in (1, 2, 3))
        assert np.all(b3 <= b2) and np.all(b2 <= a)
