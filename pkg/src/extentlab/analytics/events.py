"""Events on replicate ensembles: indicators, probability surfaces and extents.

Daily events are evaluated on ``(year, day)`` slots of a period.  A slot
counts only when its whole persistence window stays inside the period's
days; averages are taken over counted slots.  Average-based events
(``decade_avg_over_ref``, ``decade_diff``) give one indicator per replicate
and grid point.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .._kernels import persist_indicator
from ..core import ALL_REGION, PeriodSelector, region_weights

KINDS = ("daily_over_ref", "daily_over_ref_persist", "decade_avg_over_ref", "decade_diff",
         "daily_increment", "daily_increment_persist")
DAILY_KINDS = frozenset({"daily_over_ref", "daily_over_ref_persist", "daily_increment",
                         "daily_increment_persist"})
TWO_PERIOD_KINDS = frozenset({"decade_diff", "daily_increment", "daily_increment_persist"})
REFERENCE_KINDS = frozenset({"daily_over_ref", "daily_over_ref_persist", "decade_avg_over_ref"})

#: day offsets of the persistence window for k consecutive days
WINDOWS = {1: (0, 0), 2: (0, 1), 3: (-1, 1)}


@dataclass(frozen=True, eq=False)
class ReferenceSurface:
    """Site-specific reference value ``r(s)``.

    ``values`` is ``(S,)`` for a single surface or ``(B, S)`` when each
    replicate carries its own reference.
    """

    values: np.ndarray
    tag: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim not in (1, 2):
            raise ValueError("reference values must be (S,) or (B, S)")
        if not np.all(np.isfinite(v)):
            raise ValueError("reference surface must be finite everywhere")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def per_replicate(self) -> bool:
        return self.values.ndim == 2

    def at(self, b: int) -> np.ndarray:
        return self.values[b] if self.per_replicate else self.values


@dataclass(frozen=True, eq=False)
class EventSpec:
    """An event definition.

    ``periods`` holds one selector (events over a reference) or two
    selectors ``(earlier, later)`` for between-period increments, paired by
    rank of their years.  ``complement`` negates the indicator on every
    counted slot.
    """

    kind: str
    c: float = 0.0
    k: int = 1
    reference: ReferenceSurface | None = None
    periods: tuple = ()
    complement: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}; expected one of {KINDS}")
        if self.k not in WINDOWS:
            raise ValueError("persistence k must be 1, 2 or 3")
        if self.kind.endswith("_persist"):
            if self.k == 1:
                raise ValueError(f"{self.kind} needs k = 2 or 3")
        elif self.k != 1 and self.kind not in DAILY_KINDS:
            raise ValueError(f"{self.kind} has no persistence window")
        periods = tuple(self.periods)
        for p in periods:
            if not isinstance(p, PeriodSelector):
                raise TypeError("periods must be PeriodSelector instances")
        object.__setattr__(self, "periods", periods)
        if self.kind in TWO_PERIOD_KINDS:
            if len(periods) != 2:
                raise ValueError(f"{self.kind} takes exactly two periods")
            a, b = periods
            if len(a.years) != len(b.years):
                raise ValueError("the two periods must have the same number of years")
            if self.kind in DAILY_KINDS and a.days != b.days:
                raise ValueError("misaligned periods: day sets differ")
        else:
            if len(periods) > 1:
                raise ValueError(f"{self.kind} takes at most one period")
            if self.reference is None:
                raise ValueError(f"{self.kind} needs a reference surface")

    @property
    def daily(self) -> bool:
        return self.kind in DAILY_KINDS

    @property
    def window(self) -> tuple[int, int]:
        return WINDOWS[self.k]

    @property
    def label(self) -> str:
        if self.kind in ("daily_over_ref", "daily_over_ref_persist"):
            lhs = "Y-r"
        elif self.kind == "decade_avg_over_ref":
            lhs = "Ybar_D-r"
        elif self.kind == "decade_diff":
            lhs = "Ybar_D2-Ybar_D1"
        else:
            lhs = "Z"
        text = f"{lhs}>{self.c:g}" + (f";{self.k}" if self.k > 1 else "")
        return f"not({text})" if self.complement else text

    def with_(self, **changes) -> "EventSpec":
        return replace(self, **changes)

    def negated(self) -> "EventSpec":
        return replace(self, complement=not self.complement)


# -- reference surfaces --------------------------------------------------------

def reference_mean(ensemble, period: PeriodSelector, per_replicate: bool = False,
                   threads: int = 1) -> ReferenceSurface:
    """Mean temperature over the period's years and days.

    Pooled over replicates by default, giving one surface; with
    ``per_replicate`` each replicate gets its own ``(B, S)`` row.
    """
    pos = ensemble.year_pos(period.years)
    days = _day_pos(ensemble, period.days)

    def one(b):
        y = np.asarray(ensemble.Y[b][:, pos][:, :, days], dtype=np.float64)
        return y.reshape(y.shape[0], -1).mean(axis=1)

    per_b = np.array(_map(one, range(ensemble.B), threads))
    if per_replicate:
        return ReferenceSurface(per_b, tag=f"mean per replicate, years {period.years[0]}-{period.years[-1]}")
    return ReferenceSurface(per_b.mean(axis=0), tag=f"pooled mean, years {period.years[0]}-{period.years[-1]}")


# -- helpers -------------------------------------------------------------------

def _map(fn, items, threads):
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _day_pos(ensemble, days) -> np.ndarray:
    days = np.asarray(days, dtype=int)
    if days.min() < 1 or days.max() > ensemble.season_length:
        raise ValueError(f"days must lie in 1..{ensemble.season_length}")
    return days - 1


def _periods(spec: EventSpec, period):
    if period is None:
        if not spec.periods:
            raise ValueError("no period given for the event")
        return spec.periods
    if isinstance(period, PeriodSelector):
        period = (period,)
    period = tuple(period)
    if spec.kind in TWO_PERIOD_KINDS:
        return spec.with_(periods=period).periods
    if len(period) != 1:
        raise ValueError(f"{spec.kind} takes one period")
    return period


def counted_days(days, L: int, window: tuple[int, int]) -> np.ndarray:
    """Boolean ``(L,)`` mask of window days whose persistence window stays within ``days``."""
    inside = np.zeros(L, dtype=bool)
    inside[np.asarray(days, dtype=int) - 1] = True
    lo, hi = window
    ok = inside.copy()
    for o in range(lo, hi + 1):
        shifted = np.zeros(L, dtype=bool)
        src = inside[max(o, 0):L + min(o, 0)]
        shifted[max(-o, 0):max(-o, 0) + src.size] = src
        ok &= shifted
    return ok


def _daily_diff(ensemble, spec: EventSpec, periods, b: int) -> np.ndarray:
    """``(S, n_years, L)`` values compared against ``c`` for a daily event."""
    Yb = ensemble.Y[b]
    if spec.kind in TWO_PERIOD_KINDS:
        p1, p2 = periods
        return (np.asarray(Yb[:, ensemble.year_pos(p2.years)], dtype=np.float64)
                - np.asarray(Yb[:, ensemble.year_pos(p1.years)], dtype=np.float64))
    r = spec.reference.at(b)
    return np.asarray(Yb[:, ensemble.year_pos(periods[0].years)], dtype=np.float64) - r[:, None, None]


def _period_mean(ensemble, b, period) -> np.ndarray:
    y = np.asarray(ensemble.Y[b][:, ensemble.year_pos(period.years)][:, :, _day_pos(ensemble, period.days)],
                   dtype=np.float64)
    return y.reshape(y.shape[0], -1).mean(axis=1)


def _average_value(ensemble, spec: EventSpec, periods, b: int) -> np.ndarray:
    if spec.kind == "decade_diff":
        return _period_mean(ensemble, b, periods[1]) - _period_mean(ensemble, b, periods[0])
    return _period_mean(ensemble, b, periods[0]) - spec.reference.at(b)


def slot_indicators(ensemble, spec: EventSpec, b: int, period=None):
    """Indicators of replicate ``b`` on every slot of the period.

    Daily events return ``(ind, counted)`` with ``ind`` uint8
    ``(S, n_years, L)`` over the full window and ``counted`` the ``(L,)``
    mask of days that enter averages.  Average-based events return
    ``(ind, None)`` with ``ind`` of shape ``(S,)``.
    """
    periods = _periods(spec, period)
    if not spec.daily:
        ind = (_average_value(ensemble, spec, periods, b) > spec.c).astype(np.uint8)
        return (1 - ind if spec.complement else ind), None
    lo, hi = spec.window
    ind = persist_indicator(_daily_diff(ensemble, spec, periods, b), spec.c, lo, hi)
    counted = counted_days(periods[0].days, ensemble.season_length, spec.window)
    if spec.complement:
        ind = np.where(counted, 1 - ind, 0).astype(np.uint8)
    else:
        ind[..., ~counted] = 0
    return ind, counted


# -- point-wise evaluation -----------------------------------------------------

def event_indicator(ensemble, spec: EventSpec, b: int, s: int, t: int | None = None, l: int | None = None) -> int:
    """Indicator of the event for replicate ``b`` (0-based) at grid point ``s`` (0-based).

    For daily events ``t`` is the 1-based year index (for increments: the
    1-based rank ``j`` within the paired periods) and ``l`` the 1-based day
    in the warm-period window.  Average-based events ignore ``t`` and ``l``.
    """
    if not spec.daily:
        return int(slot_indicators(ensemble, spec, b)[0][s])
    if t is None or l is None:
        raise ValueError("daily events need a year and a day")
    lo, hi = spec.window
    L = ensemble.season_length
    if l + lo < 1 or l + hi > L:
        raise ValueError(f"persistence window of day {l} lies outside the season 1..{L}")
    Yb = ensemble.Y[b]
    days = [l - 1 + o for o in range(lo, hi + 1)]
    if spec.kind in TWO_PERIOD_KINDS:
        p1, p2 = spec.periods
        if not 1 <= t <= len(p1.years):
            raise ValueError(f"pair index j must lie in 1..{len(p1.years)}")
        i1, i2 = ensemble.year_pos([p1.years[t - 1], p2.years[t - 1]])
        vals = [float(Yb[s, i2, d]) - float(Yb[s, i1, d]) for d in days]
    else:
        (i,) = ensemble.year_pos([t])
        r = float(spec.reference.at(b)[s])
        vals = [float(Yb[s, i, d]) - r for d in days]
    hit = all(v > spec.c for v in vals)
    return int(hit != spec.complement)


def event_probability(ensemble, spec: EventSpec, s: int, t: int | None = None, l: int | None = None) -> float:
    """Fraction of replicates in which the event occurs at one point and day."""
    if ensemble.B < 1:
        raise ValueError("empty ensemble")
    hits = sum(event_indicator(ensemble, spec, b, s, t, l) for b in range(ensemble.B))
    return hits / ensemble.B


def daily_probability(ensemble, spec: EventSpec, period=None, threads: int = 1) -> np.ndarray:
    """Daily probabilities ``(S, n_years, L)`` over the period; NaN on uncounted days."""
    if not spec.daily:
        raise ValueError(f"{spec.kind} has no daily probabilities")

    def one(b):
        return slot_indicators(ensemble, spec, b, period)

    res = _map(one, range(ensemble.B), threads)
    counts = np.zeros(res[0][0].shape, dtype=np.int64)
    for ind, _ in res:
        counts += ind
    p = counts / ensemble.B
    p[..., ~res[0][1]] = np.nan
    return p


def average_probability(ensemble, spec: EventSpec, period=None, threads: int = 1) -> np.ndarray:
    """Per-point average of daily probabilities over counted slots, ``(S,)``.

    Average-based events give the fraction of replicates with the event.
    """
    if not spec.daily:
        periods = _periods(spec, period)
        spec = spec.with_(periods=periods)
        counts = sum(_map(lambda b: slot_indicators(ensemble, spec, b)[0].astype(np.int64),
                          range(ensemble.B), threads))
        return counts / ensemble.B
    p = daily_probability(ensemble, spec, period, threads)
    counted = ~np.isnan(p[0, 0])
    return p[:, :, counted].reshape(p.shape[0], -1).mean(axis=1)


def slot_count(spec: EventSpec, L: int, period=None) -> int:
    """Number of (year, day) slots that enter period averages."""
    periods = _periods(spec, period)
    if not spec.daily:
        return 1
    return len(periods[0].years) * int(counted_days(periods[0].days, L, spec.window).sum())


# -- extents -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExtentSample:
    """Per-replicate extents of an event over a region."""

    values: np.ndarray
    region: str = ALL_REGION
    event: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    def interval(self, level: float = 0.90) -> tuple[float, float]:
        q = (1 - level) / 2
        lo, hi = np.quantile(self.values, [q, 1 - q])
        return float(lo), float(hi)


def _weights(ensemble, region):
    if ensemble.grid is None:
        raise ValueError("ensemble has no grid attached; region weights unavailable")
    return region_weights(ensemble.grid, region)


def extent(ensemble, spec: EventSpec, region: str = ALL_REGION, b: int = 0,
           t: int | None = None, l: int | None = None) -> float:
    """Area-weighted share of ``region`` where the event holds in replicate ``b``.

    Daily events need ``t`` and ``l`` as for :func:`event_indicator`.
    """
    w = _weights(ensemble, region)
    if not spec.daily:
        ind = slot_indicators(ensemble, spec, b)[0]
        return float(w @ ind)
    L = ensemble.season_length
    lo, hi = spec.window
    if t is None or l is None:
        raise ValueError("daily events need a year and a day")
    if l + lo < 1 or l + hi > L:
        raise ValueError(f"persistence window of day {l} lies outside the season 1..{L}")
    # evaluate on a one-slot period covering just the persistence window
    days = tuple(range(l + lo, l + hi + 1))
    if spec.kind in TWO_PERIOD_KINDS:
        p1, p2 = spec.periods
        one = (PeriodSelector((p1.years[t - 1],), days), PeriodSelector((p2.years[t - 1],), days))
    else:
        one = (PeriodSelector((t,), days),)
    ind, _ = slot_indicators(ensemble, spec, b, one)
    return float(w @ ind[:, 0, l - 1].astype(np.float64))


def daily_extents(ensemble, spec: EventSpec, region: str = ALL_REGION, b: int = 0, period=None) -> np.ndarray:
    """Extents of replicate ``b`` on every slot, ``(n_years, L)``; NaN on uncounted days."""
    if not spec.daily:
        raise ValueError(f"{spec.kind} has no daily extents")
    w = _weights(ensemble, region)
    ind, counted = slot_indicators(ensemble, spec, b, period)
    e = np.tensordot(w, ind.astype(np.float64), axes=(0, 0))
    e[:, ~counted] = np.nan
    return e


def average_extent(ensemble, spec: EventSpec, region: str = ALL_REGION, period=None,
                   threads: int = 1) -> ExtentSample:
    """Per-replicate mean of daily extents over counted slots.

    Average-based events give the per-replicate extent directly.
    """
    if spec.daily:
        def one(b):
            e = daily_extents(ensemble, spec, region, b, period)
            return e[~np.isnan(e)].mean()
    else:
        w = _weights(ensemble, region)
        sp = spec.with_(periods=_periods(spec, period))

        def one(b):
            return w @ slot_indicators(ensemble, sp, b)[0].astype(np.float64)

    vals = np.array(_map(one, range(ensemble.B), threads), dtype=np.float64)
    return ExtentSample(vals, region, spec.label, {"B": ensemble.B})


# -- trends --------------------------------------------------------------------

@dataclass(frozen=True)
class TrendResult:
    """Linear trend of yearly average extents.

    ``slope``/``intercept`` come from least squares on the posterior-mean
    yearly extents; ``ci`` holds the 5% and 95% quantiles of the slopes
    fitted to each replicate separately.
    """

    slope: float
    intercept: float
    ci: tuple[float, float]
    replicate_slope_mean: float
    years: tuple
    mean_extents: np.ndarray
    replicate_slopes: np.ndarray


def yearly_extents(ensemble, spec: EventSpec, region: str = ALL_REGION, years=None, days=None,
                   threads: int = 1) -> np.ndarray:
    """Per-replicate average extent in each year, ``(B, n_years)``.

    Only single-reference events (``daily_over_ref*`` and
    ``decade_avg_over_ref``, the latter averaged over one year) are defined
    per year.
    """
    if spec.kind not in REFERENCE_KINDS:
        raise ValueError(f"yearly extents are not defined for {spec.kind}")
    if years is None:
        years = ensemble.years
    if days is None:
        days = spec.periods[0].days if spec.periods else tuple(range(1, ensemble.season_length + 1))
    years = tuple(int(y) for y in years)
    whole = PeriodSelector(years, days)
    w = _weights(ensemble, region)

    if spec.daily:
        def one(b):
            e = daily_extents(ensemble, spec, region, b, whole)
            counted = ~np.isnan(e[0])
            return e[:, counted].mean(axis=1)
    else:
        def one(b):
            return np.array([w @ slot_indicators(ensemble, spec, b, PeriodSelector((t,), days))[0]
                             .astype(np.float64) for t in years])

    return np.array(_map(one, range(ensemble.B), threads))


def _ols(x, y):
    xc = x - x.mean()
    slope = float(xc @ (y - y.mean()) / (xc @ xc))
    return slope, float(y.mean() - slope * x.mean())


def trend_from_extents(years, E: np.ndarray, level: float = 0.90) -> TrendResult:
    """Fit the trend to a ``(B, n_years)`` array of yearly extents."""
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    x = np.asarray(years, dtype=np.float64)
    if x.size < 3:
        raise ValueError("a trend needs at least 3 years")
    if E.shape[1] != x.size:
        raise ValueError("extents and years differ in length")
    mean_e = E.mean(axis=0)
    slope, intercept = _ols(x, mean_e)
    xc = x - x.mean()
    slopes = (E - E.mean(axis=1, keepdims=True)) @ xc / (xc @ xc)
    q = (1 - level) / 2
    lo, hi = np.quantile(slopes, [q, 1 - q])
    return TrendResult(slope, intercept, (float(lo), float(hi)), float(slopes.mean()),
                       tuple(int(t) for t in years), mean_e, slopes)


def yearly_extent_trend(ensemble, spec: EventSpec, region: str = ALL_REGION, years=None, days=None,
                        level: float = 0.90, threads: int = 1) -> TrendResult:
    """Slope per year of the yearly average extent, with its credible interval."""
    if years is None:
        years = ensemble.years
    E = yearly_extents(ensemble, spec, region, years, days, threads)
    return trend_from_extents(years, E, level)


# -- increments ------------------------------------------------------------------

def daily_increment(ensemble, b: int, s: int, j: int, l: int, periods) -> float:
    """Same-day difference between the ``j``-th years (1-based) of the later and earlier period."""
    p1, p2 = periods
    if len(p1.years) != len(p2.years) or p1.days != p2.days:
        raise ValueError("misaligned periods")
    if not 1 <= j <= len(p1.years):
        raise ValueError(f"j must lie in 1..{len(p1.years)}")
    i1, i2 = ensemble.year_pos([p1.years[j - 1], p2.years[j - 1]])
    return float(ensemble.Y[b][s, i2, l - 1]) - float(ensemble.Y[b][s, i1, l - 1])


def increment_field(ensemble, b: int, periods) -> np.ndarray:
    """All increments ``Z[s, j-1, l-1]`` of replicate ``b`` over the period days (other days NaN)."""
    p1, p2 = periods
    if len(p1.years) != len(p2.years) or p1.days != p2.days:
        raise ValueError("misaligned periods")
    Yb = ensemble.Y[b]
    Z = (np.asarray(Yb[:, ensemble.year_pos(p2.years)], dtype=np.float64)
         - np.asarray(Yb[:, ensemble.year_pos(p1.years)], dtype=np.float64))
    mask = np.ones(ensemble.season_length, dtype=bool)
    mask[_day_pos(ensemble, p1.days)] = False
    Z[:, :, mask] = np.nan
    return Z


# -- station data --------------------------------------------------------------

def station_reference_mean(Y: np.ndarray, period: PeriodSelector) -> ReferenceSurface:
    """Mean of observed values over the period at each station, ignoring missing days."""
    Y = np.asarray(Y, dtype=np.float64)
    sub = Y[:, np.asarray(period.years) - 1][:, :, np.asarray(period.days) - 1]
    sub = sub.reshape(sub.shape[0], -1)
    n = np.sum(~np.isnan(sub), axis=1)
    if np.any(n == 0):
        raise ValueError("a station has no observations in the reference period")
    return ReferenceSurface(np.nansum(sub, axis=1) / n, tag="station mean")


def _station_values(spec: EventSpec, Y, t, l):
    lo, hi = spec.window
    L = Y.shape[2]
    if l + lo < 1 or l + hi > L:
        raise ValueError(f"persistence window of day {l} lies outside the season 1..{L}")
    days = np.arange(l - 1 + lo, l + hi)
    if spec.kind in TWO_PERIOD_KINDS:
        p1, p2 = spec.periods
        return Y[:, p2.years[t - 1] - 1][:, days] - Y[:, p1.years[t - 1] - 1][:, days]
    return Y[:, t - 1][:, days] - spec.reference.values[:, None]


def empirical_extent(Y, spec: EventSpec, t: int, l: int) -> float:
    """Unweighted share of stations where a daily event holds on day ``(t, l)``.

    ``Y`` is the ``(n, T, L)`` station array with NaN for missing values;
    stations lacking any value the indicator needs are left out.
    """
    if not spec.daily:
        raise ValueError("empirical extents are defined for daily events only")
    Y = np.asarray(Y, dtype=np.float64)
    if spec.reference is not None and spec.reference.values.shape != (Y.shape[0],):
        raise ValueError("reference must have one value per station")
    v = _station_values(spec, Y, t, l)
    ok = ~np.isnan(v).any(axis=1)
    if not ok.any():
        raise ValueError(f"no station has the data needed on day (t={t}, l={l})")
    hit = (v[ok] > spec.c).all(axis=1)
    if spec.complement:
        hit = ~hit
    return float(hit.mean())


def empirical_yearly_extents(Y, spec: EventSpec, years, days) -> np.ndarray:
    """Average over ``days`` of the empirical extent in each year; days without data are skipped."""
    out = []
    lo, hi = spec.window
    dayset = set(days)
    for t in years:
        vals = []
        for l in days:
            if not all((l + o) in dayset for o in range(lo, hi + 1)):
                continue
            try:
                vals.append(empirical_extent(Y, spec, t, l))
            except ValueError:
                continue
        out.append(np.mean(vals) if vals else np.nan)
    return np.array(out)
