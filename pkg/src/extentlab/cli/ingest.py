"""Station and grid CSV ingestion and export."""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import DEFAULT_SEASON, TEMP_BOUNDS, CalendarError, GridSpec, SeasonConfig, Site, StationSeries, day_index

STATION_HEADER = ("station_id", "lon", "lat", "elev_m", "date", "tmax_c")
GRID_HEADER = ("grid_id", "lon", "lat", "elev_m", "cell_area_km2", "regions")


class ValidationError(ValueError):
    """Bad input data or configuration."""


@dataclass
class StationReport:
    series: list
    missing: dict = field(default_factory=dict)
    outside_window: int = 0

    def lines(self) -> list[str]:
        out = [f"{len(self.series)} stations, {self.series[0].values.shape[0]} years" if self.series else "0 stations"]
        out += [f"  {sid}: {n} missing days" for sid, n in self.missing.items()]
        if self.outside_window:
            out.append(f"  {self.outside_window} rows outside the warm period or study years skipped")
        return out


def _float(text, line, name):
    try:
        v = float(text)
    except ValueError:
        raise ValidationError(f"line {line}: {name} {text!r} is not a number") from None
    if not math.isfinite(v):
        raise ValidationError(f"line {line}: {name} must be finite")
    return v


def _check_header(row, expected, path):
    if row is None or tuple(h.strip() for h in row) != expected:
        raise ValidationError(f"{path}: header must be {','.join(expected)}")


def ingest_stations(path, season: SeasonConfig = DEFAULT_SEASON) -> StationReport:
    """Read station rows into one :class:`StationSeries` per station.

    Rows whose date falls outside the warm-period window or before the
    study start are skipped and counted.  The study period runs to the
    last year present in the file.
    """
    path = Path(path)
    sites: dict[str, Site] = {}
    obs: dict[str, dict] = {}
    skipped = 0
    last_year = None
    lo, hi = TEMP_BOUNDS
    with open(path, newline="") as f:
        reader = csv.reader(f)
        _check_header(next(reader, None), STATION_HEADER, path)
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(STATION_HEADER):
                raise ValidationError(f"line {line}: expected {len(STATION_HEADER)} fields, got {len(row)}")
            sid, lon, lat, elev, date, tmax = (c.strip() for c in row)
            if not sid:
                raise ValidationError(f"line {line}: empty station_id")
            site = Site(sid, _float(lon, line, "lon"), _float(lat, line, "lat"), _float(elev, line, "elev_m"))
            if sites.setdefault(sid, site) != site:
                raise ValidationError(f"line {line}: station {sid} changes its coordinates")
            try:
                day = dt.date.fromisoformat(date)
            except ValueError:
                raise ValidationError(f"line {line}: bad date {date!r}") from None
            value = math.nan
            if tmax:
                value = _float(tmax, line, "tmax_c")
                if not lo <= value <= hi:
                    raise ValidationError(f"line {line}: tmax_c {value} outside [{lo}, {hi}] at station {sid}")
            series = obs.setdefault(sid, {})
            if day in series:
                raise ValidationError(f"line {line}: duplicate row for station {sid} on {day.isoformat()}")
            series[day] = value
            if day.year >= season.start_year:
                last_year = day.year if last_year is None else max(last_year, day.year)
    if not sites:
        raise ValidationError(f"{path}: no station rows")
    if last_year is None:
        raise ValidationError(f"{path}: no rows in or after {season.start_year}")
    T = last_year - season.start_year + 1
    out, missing = [], {}
    for sid, site in sites.items():
        Y = np.full((T, season.season_length), np.nan)
        for day, value in obs[sid].items():
            try:
                ix = day_index(day, season)
            except CalendarError:
                skipped += 1
                continue
            Y[ix.t - 1, ix.l - 1] = value
        s = StationSeries(site, Y)
        out.append(s)
        missing[sid] = s.n_missing
    return StationReport(out, missing, skipped)


def export_stations(series, path, season: SeasonConfig = DEFAULT_SEASON) -> None:
    """Write series in the ingestion format; missing days get an empty tmax."""
    from ..core import date_from_index

    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(STATION_HEADER)
        for s in series:
            T, L = s.values.shape
            for t in range(1, T + 1):
                for l in range(1, L + 1):
                    v = s.values[t - 1, l - 1]
                    w.writerow([s.site.id, repr(s.site.lon), repr(s.site.lat), repr(s.site.elev),
                                date_from_index(t, l, season).isoformat(), "" if np.isnan(v) else repr(float(v))])


def ingest_grid(path) -> GridSpec:
    """Read grid points, cell areas and region labels."""
    path = Path(path)
    points, areas, labels = [], [], []
    seen = set()
    with open(path, newline="") as f:
        reader = csv.reader(f)
        _check_header(next(reader, None), GRID_HEADER, path)
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(GRID_HEADER):
                raise ValidationError(f"line {line}: expected {len(GRID_HEADER)} fields, got {len(row)}")
            gid, lon, lat, elev, area, regions = (c.strip() for c in row)
            if gid in seen:
                raise ValidationError(f"line {line}: duplicate grid_id {gid}")
            seen.add(gid)
            a = _float(area, line, "cell_area_km2")
            if a <= 0:
                raise ValidationError(f"line {line}: cell_area_km2 must be positive")
            points.append(Site(gid, _float(lon, line, "lon"), _float(lat, line, "lat"), _float(elev, line, "elev_m")))
            areas.append(a)
            labels.append({r.strip() for r in regions.split(";") if r.strip()})
    if not points:
        raise ValidationError(f"{path}: no grid rows")
    names = sorted(set().union(*labels))
    if "ALL" in names:
        raise ValidationError(f"{path}: region label ALL is reserved")
    masks = {name: np.array([name in lab for lab in labels]) for name in names}
    return GridSpec(points, np.array(areas), masks)


def export_grid(grid: GridSpec, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(GRID_HEADER)
        for i, p in enumerate(grid.points):
            regions = ";".join(name for name, m in sorted(grid.region_labels.items()) if m[i])
            w.writerow([p.id, repr(p.lon), repr(p.lat), repr(p.elev), repr(float(grid.cell_area[i])), regions])
