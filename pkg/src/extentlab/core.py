"""Domain types, calendar indexing and grid bookkeeping.

Index conventions used across the package:

* ``t`` is the 1-based year index within the study period
  (``t = 1`` is ``SeasonConfig.start_year``).
* ``l`` is the 1-based day index within the warm-period window
  (``l = 1`` is the window start, e.g. May 1st).
* Arrays of daily values are laid out ``[..., t - 1, l - 1]``; missing
  values are ``NaN``.
"""
from __future__ import annotations

import datetime as dt
import math
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

#: plausibility bounds for daily maximum temperature, degrees C
TEMP_BOUNDS = (-30.0, 55.0)

ALL_REGION = "ALL"

# a non-leap year used to convert (month, day) into day-of-year; windows are
# counted by calendar position so Feb 29 never shifts them
_REF_YEAR = 2001


class CalendarError(ValueError):
    pass


@dataclass(frozen=True)
class Site:
    id: str
    lon: float
    lat: float
    elev: float

    def __post_init__(self):
        if not (math.isfinite(self.elev) and math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise ValueError(f"site {self.id!r}: coordinates and elevation must be finite")


@dataclass(frozen=True)
class SeasonConfig:
    """Warm-period window, by default May 1st to September 30th."""

    start_year: int = 1956
    start: tuple[int, int] = (5, 1)
    end: tuple[int, int] = (9, 30)
    jja_start: tuple[int, int] = (6, 1)
    jja_end: tuple[int, int] = (8, 31)

    def __post_init__(self):
        if self._ref(self.end) < self._ref(self.start):
            raise ValueError("warm-period window may not wrap the year end")
        if self._ref(self.start) <= dt.date(_REF_YEAR, 2, 28) < self._ref(self.end):
            raise ValueError("warm-period window may not contain Feb 29")
        for md in (self.jja_start, self.jja_end):
            if not self._ref(self.start) <= self._ref(md) <= self._ref(self.end):
                raise ValueError("JJA sub-window must lie inside the warm period")

    @staticmethod
    def _ref(md):
        return dt.date(_REF_YEAR, md[0], md[1])

    @property
    def season_length(self) -> int:
        return (self._ref(self.end) - self._ref(self.start)).days + 1

    @property
    def start_doy(self) -> int:
        return self._ref(self.start).timetuple().tm_yday

    def day_of_year(self, l):
        """Calendar day-of-year (non-leap numbering) for window day(s) ``l``."""
        return np.asarray(l) + self.start_doy - 1

    def jja_days(self) -> tuple[int, ...]:
        lo = (self._ref(self.jja_start) - self._ref(self.start)).days + 1
        hi = (self._ref(self.jja_end) - self._ref(self.start)).days + 1
        return tuple(range(lo, hi + 1))

    def year_of(self, t: int) -> int:
        return self.start_year + t - 1

    def t_of(self, year: int) -> int:
        return year - self.start_year + 1


DEFAULT_SEASON = SeasonConfig()


@dataclass(frozen=True)
class DayIndex:
    t: int
    l: int
    doy: int


def day_index(date: dt.date, season: SeasonConfig = DEFAULT_SEASON) -> DayIndex:
    """Map a calendar date to its (year, window-day) index."""
    if date.year < season.start_year:
        raise CalendarError(f"{date.isoformat()} is before the study start year {season.start_year}")
    start = dt.date(date.year, *season.start)
    l = (date - start).days + 1
    if not 1 <= l <= season.season_length:
        raise CalendarError(f"{date.isoformat()} is not in warm period")
    return DayIndex(t=season.t_of(date.year), l=l, doy=int(season.day_of_year(l)))


def date_from_index(t: int, l: int, season: SeasonConfig = DEFAULT_SEASON) -> dt.date:
    if t < 1 or not 1 <= l <= season.season_length:
        raise CalendarError(f"index (t={t}, l={l}) outside the study calendar")
    return dt.date(season.year_of(t), *season.start) + dt.timedelta(days=l - 1)


@dataclass(frozen=True, eq=False)
class StationSeries:
    """Observed daily maxima at one site, ``values[t - 1, l - 1]`` with NaN for missing."""

    site: Site
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("station values must be a (n_years, season_length) array")
        obs = v[np.isfinite(v)]
        if np.isinf(v).any():
            raise ValueError(f"station {self.site.id}: infinite value")
        lo, hi = TEMP_BOUNDS
        if obs.size and (obs.min() < lo or obs.max() > hi):
            raise ValueError(f"station {self.site.id}: temperature outside [{lo}, {hi}]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.values).sum())

    def __eq__(self, other):
        if not isinstance(other, StationSeries):
            return NotImplemented
        return self.site == other.site and np.array_equal(self.values, other.values, equal_nan=True)


def stack_series(series: Sequence[StationSeries]) -> tuple[list[Site], np.ndarray]:
    """Stack station series into ``(sites, Y)`` with ``Y`` shaped (n, T, L)."""
    if not series:
        raise ValueError("no station series")
    shapes = {s.values.shape for s in series}
    if len(shapes) != 1:
        raise ValueError(f"station series have inconsistent shapes {sorted(shapes)}")
    return [s.site for s in series], np.stack([s.values for s in series])


@dataclass(frozen=True, eq=False)
class GridSpec:
    points: tuple[Site, ...]
    cell_area: np.ndarray
    region_labels: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        area = np.array(self.cell_area, dtype=float)
        if area.shape != (len(self.points),):
            raise ValueError("cell_area must have one entry per grid point")
        if not (np.all(np.isfinite(area)) and np.all(area > 0)):
            raise ValueError("cell areas must be positive")
        area.setflags(write=False)
        object.__setattr__(self, "cell_area", area)
        masks = {}
        for name, m in self.region_labels.items():
            m = np.array(m, dtype=bool)
            if m.shape != area.shape:
                raise ValueError(f"region {name!r}: mask has wrong length")
            m.setflags(write=False)
            masks[name] = m
        object.__setattr__(self, "region_labels", masks)

    def __len__(self):
        return len(self.points)

    @property
    def regions(self) -> list[str]:
        return [ALL_REGION] + sorted(self.region_labels)

    def mask(self, region: str) -> np.ndarray:
        if region == ALL_REGION:
            return np.ones(len(self.points), dtype=bool)
        try:
            return self.region_labels[region]
        except KeyError:
            raise KeyError(f"unknown region {region!r}; available: {self.regions}") from None


def region_weights(grid: GridSpec, region: str = ALL_REGION) -> np.ndarray:
    """Area weights over the whole grid, zero outside ``region``, summing to one."""
    mask = grid.mask(region)
    if not mask.any():
        raise ValueError(f"region {region!r} has no grid points")
    w = np.where(mask, grid.cell_area, 0.0)
    return w / w.sum()


@dataclass(frozen=True)
class PeriodSelector:
    years: tuple[int, ...]
    days: tuple[int, ...]

    def __post_init__(self):
        years = tuple(sorted(set(int(y) for y in self.years)))
        days = tuple(sorted(set(int(d) for d in self.days)))
        if not years or not days:
            raise ValueError("empty period")
        if years[0] < 1 or days[0] < 1:
            raise ValueError("period indices are 1-based")
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "days", days)

    @property
    def size(self) -> int:
        return len(self.years) * len(self.days)

    def check(self, season: SeasonConfig) -> "PeriodSelector":
        if self.days[-1] > season.season_length:
            raise ValueError(f"period days exceed season length {season.season_length}")
        return self


def jja_selector(years: Iterable[int], season: SeasonConfig = DEFAULT_SEASON) -> PeriodSelector:
    """June-August days of the given year indices."""
    years = tuple(years)
    if not years:
        raise ValueError("empty period: no years given")
    return PeriodSelector(years=years, days=season.jja_days())


def decade(first_year: int, season: SeasonConfig = DEFAULT_SEASON) -> PeriodSelector:
    """JJA selector for the ten calendar years starting at ``first_year``."""
    t0 = season.t_of(first_year)
    return jja_selector(range(t0, t0 + 10), season)


def _key_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("substream keys must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def substream(seed: int, *path) -> np.random.Generator:
    """Independent generator for a named substream, e.g. ``substream(7, "gen.replicate", 3)``.

    Streams with different paths are statistically independent; the same
    (seed, path) always yields the same stream.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))
