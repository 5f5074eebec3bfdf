import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from extentlab.core import (
    ALL_REGION, DEFAULT_SEASON, CalendarError, GridSpec, PeriodSelector, SeasonConfig, Site, StationSeries,
    date_from_index, day_index, decade, jja_selector, region_weights, stack_series, substream,
)
from oracles import calendar_days


def test_day_index_window_start_and_end():
    assert (day_index(dt.date(1956, 5, 1)).t, day_index(dt.date(1956, 5, 1)).l) == (1, 1)
    end = day_index(dt.date(1956, 9, 30))
    assert (end.t, end.l) == (1, 153)
    assert DEFAULT_SEASON.season_length == 153


def test_day_index_matches_calendar_enumeration():
    days = calendar_days(2015, (5, 1), (9, 30))
    for date, l, doy in days:
        ix = day_index(date)
        assert (ix.t, ix.l, ix.doy) == (60, l, doy)
    ix = day_index(dt.date(2015, 6, 1))
    assert (ix.t, ix.l) == (60, 32)


def test_leap_years_keep_the_calendar_alignment():
    # a leap year and a common year map June 1st to the same window day
    assert day_index(dt.date(2004, 6, 1)).l == day_index(dt.date(2005, 6, 1)).l == 32
    assert day_index(dt.date(2004, 6, 1)).doy == 152


@pytest.mark.parametrize("date", [dt.date(1990, 4, 30), dt.date(1990, 10, 1), dt.date(1990, 1, 15)])
def test_day_index_rejects_dates_outside_window(date):
    with pytest.raises(CalendarError, match="not in warm period"):
        day_index(date)


def test_day_index_rejects_years_before_start():
    with pytest.raises(CalendarError):
        day_index(dt.date(1950, 6, 1))


@given(st.integers(1, 80), st.integers(1, 153))
def test_date_round_trip(t, l):
    ix = day_index(date_from_index(t, l))
    assert (ix.t, ix.l) == (t, l)


def test_jja_days_are_92_and_start_on_june_first():
    days = DEFAULT_SEASON.jja_days()
    assert len(days) == 92
    assert days[0] == 32 and days[-1] == 123
    assert date_from_index(1, days[-1]) == dt.date(1956, 8, 31)


def test_jja_selector_sizes():
    assert jja_selector(range(11, 21)).size == 920
    assert jja_selector([5]).size == 92
    with pytest.raises(ValueError, match="empty period"):
        jja_selector([])
    assert decade(1966).years == tuple(range(11, 21))


def test_period_selector_dedupes_and_validates():
    p = PeriodSelector((3, 1, 3), (5, 4))
    assert p.years == (1, 3) and p.days == (4, 5)
    with pytest.raises(ValueError):
        PeriodSelector((0,), (1,))
    with pytest.raises(ValueError, match="exceed"):
        PeriodSelector((1,), (200,)).check(DEFAULT_SEASON)


@pytest.mark.parametrize("kw", [
    dict(start=(11, 1), end=(2, 1)),
    dict(start=(1, 1), end=(5, 1), jja_start=(1, 2), jja_end=(1, 3)),
    dict(start=(6, 1), end=(6, 30)),
])
def test_season_validation(kw):
    with pytest.raises(ValueError):
        SeasonConfig(**kw)


def test_region_weights_uniform_and_area_weighted():
    pts = [Site(str(i), 0.0, 40.0 + i, 0.0) for i in range(4)]
    g = GridSpec(pts, [1.0] * 4)
    np.testing.assert_allclose(region_weights(g), 0.25)
    g = GridSpec(pts, [16.0, 16.0, 16.0, 1.0], {"N": [True, True, False, False], "none": [False] * 4})
    np.testing.assert_allclose(region_weights(g, ALL_REGION), [16 / 49, 16 / 49, 16 / 49, 1 / 49], rtol=1e-15)
    np.testing.assert_allclose(region_weights(g, "N"), [0.5, 0.5, 0, 0])
    with pytest.raises(ValueError):
        region_weights(g, "none")
    with pytest.raises(KeyError):
        region_weights(g, "missing")


def test_grid_rejects_nonpositive_area():
    with pytest.raises(ValueError):
        GridSpec([Site("a", 0, 0, 0)], [0.0])


def test_station_series_validation():
    site = Site("x", 0, 40, 100)
    v = np.full((2, 5), 20.0)
    v[0, 1] = np.nan
    s = StationSeries(site, v)
    assert s.n_missing == 1
    assert s == StationSeries(site, v.copy())
    bad = v.copy()
    bad[1, 1] = 80
    with pytest.raises(ValueError, match="outside"):
        StationSeries(site, bad)
    bad[1, 1] = np.inf
    with pytest.raises(ValueError):
        StationSeries(site, bad)
    with pytest.raises(ValueError):
        stack_series([s, StationSeries(site, np.zeros((3, 5)))])


def test_site_must_be_finite():
    with pytest.raises(ValueError):
        Site("x", np.nan, 0, 0)


def test_substreams_are_reproducible_and_distinct():
    a = substream(7, "gen.replicate", 3).standard_normal(5)
    b = substream(7, "gen.replicate", 3).standard_normal(5)
    c = substream(7, "gen.replicate", 4).standard_normal(5)
    d = substream(8, "gen.replicate", 3).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
    with pytest.raises(ValueError):
        substream(1, -1)


@settings(max_examples=50)
@given(st.lists(st.floats(0.1, 100), min_size=1, max_size=20))
def test_region_weights_sum_to_one(areas):
    g = GridSpec([Site(str(i), 0, 0, 0) for i in range(len(areas))], areas)
    w = region_weights(g)
    assert abs(w.sum() - 1) < 1e-12 and np.all(w > 0)
