"""Station data prepared for fitting: stacked values, planar coordinates and decay."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import DEFAULT_SEASON, SeasonConfig, Site, StationSeries, stack_series
from ..gp import decay_from_dmax, distance_matrix, project_km


def harmonics(season: SeasonConfig, days=None) -> np.ndarray:
    """``(L, 2)`` array of (sin, cos) of ``2*pi*doy/365`` for window days."""
    if days is None:
        days = np.arange(1, season.season_length + 1)
    ang = 2.0 * np.pi * season.day_of_year(np.asarray(days)) / 365.0
    return np.column_stack([np.sin(ang), np.cos(ang)])


@dataclass(frozen=True, eq=False)
class ModelData:
    sites: tuple[Site, ...]
    Y: np.ndarray                   # (n, T, L), NaN = missing
    season: SeasonConfig = DEFAULT_SEASON
    ref_lat: float | None = None
    decay: float | None = None

    def __post_init__(self):
        Y = np.array(self.Y, dtype=float)
        if Y.ndim != 3 or Y.shape[0] != len(self.sites):
            raise ValueError("Y must be shaped (n_sites, n_years, season_length)")
        if Y.shape[2] != self.season.season_length:
            raise ValueError(f"Y has {Y.shape[2]} days per year, season has {self.season.season_length}")
        Y.setflags(write=False)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "sites", tuple(self.sites))
        ref_lat = self.ref_lat
        if ref_lat is None:
            ref_lat = float(np.mean([s.lat for s in self.sites]))
        object.__setattr__(self, "ref_lat", ref_lat)
        xy = project_km(self.sites, ref_lat)
        object.__setattr__(self, "xy", xy)
        dist = distance_matrix(xy)
        object.__setattr__(self, "dist", dist)
        if self.decay is None and len(self.sites) >= 2:
            object.__setattr__(self, "decay", decay_from_dmax(dist))

    @classmethod
    def from_series(cls, series: Sequence[StationSeries], season: SeasonConfig = DEFAULT_SEASON, **kw):
        sites, Y = stack_series(series)
        return cls(sites=tuple(sites), Y=Y, season=season, **kw)

    @property
    def n_sites(self) -> int:
        return self.Y.shape[0]

    @property
    def n_years(self) -> int:
        return self.Y.shape[1]

    @property
    def season_length(self) -> int:
        return self.Y.shape[2]

    @property
    def elev(self) -> np.ndarray:
        return np.array([s.elev for s in self.sites])

    @property
    def years(self) -> np.ndarray:
        return np.arange(1, self.n_years + 1, dtype=float)

    def digest(self) -> str:
        h = hashlib.sha256()
        for s in self.sites:
            h.update(f"{s.id}|{s.lon!r}|{s.lat!r}|{s.elev!r}\n".encode())
        h.update(np.ascontiguousarray(self.Y).tobytes())
        h.update(repr(self.season).encode())
        return h.hexdigest()
