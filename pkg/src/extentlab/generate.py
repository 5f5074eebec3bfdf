"""Posterior predictive generation of daily temperature replicates on a grid.

Composition sampling: for replicate ``b`` take an evenly thinned posterior
draw, krige every GP term from the stations to the grid under that draw's
hyperparameters, then run the AR(1) recursion with fresh Gaussian errors.
Replicate ``b`` (1-based) uses RNG substream ``(seed, "gen.replicate", b)``.

Ensemble file layout (little endian)::

    magic b"XLENS\\0\\0\\0", version u32, B u32, n_grid u32, n_years u32,
    season_length u32, first_year u32, seed u64, store sha256 (32 bytes)

followed by ``B`` chunks of float32 ``[s][t][l]`` values.  A UTF-8 JSON
manifest is written next to it as ``<path>.json``.
"""
from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from ._kernels import ar1_anomalies
from .core import DEFAULT_SEASON, GridSpec, SeasonConfig, Site, StationSeries, substream
from .gp import decay_from_dmax, distance_matrix, kriging_plan, mvn_sample, project_km
from .model.data import harmonics
from .model.likelihood import mean_surface
from .model.params import ModelParameters, TruthSpec
from .model.store import PosteriorStore

MAGIC = b"XLENS\0\0\0"
VERSION = 1
_HEAD = struct.Struct("<8sIIIIIIQ32s")


class EnsembleFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridFields:
    """All spatial terms of one posterior draw at the grid points."""

    elev: np.ndarray            # (S,)
    beta0_field: np.ndarray     # (S,)
    alpha_field: np.ndarray     # (S,)
    z_rho: np.ndarray           # (S,)
    z_sigma: np.ndarray         # (S,)
    eta: np.ndarray             # (n_years, S) local yearly intercepts (both parts)
    psi: np.ndarray             # (n_years,)
    years: tuple                # year indices t of the rows of eta / psi
    draw_index: int = -1

    @property
    def rho(self):
        return np.tanh(self.z_rho / 2.0)

    @property
    def sigma2(self):
        return np.exp(self.z_sigma)


def station_fields(params: ModelParameters, elev, years=None) -> GridFields:
    """The draw's own values at its fitting sites, as :class:`GridFields`."""
    if years is None:
        years = range(1, params.n_years + 1)
    years = tuple(int(t) for t in years)
    rows = np.array(years) - 1
    return GridFields(np.asarray(elev, float), params.beta0_field, params.alpha_field, params.z_rho,
                      params.z_sigma, params.local_intercepts[rows], params.psi[rows], years)


def _gp_field(plan, values, mean, variance, rng):
    if variance == 0:
        shape = (np.shape(values)[0], plan.n_new) if np.ndim(values) == 2 else (plan.n_new,)
        return np.full(shape, float(mean))
    return plan.sample(values, mean, variance, rng=rng)


def krige_fields(draw: ModelParameters, station_xy, grid_xy, grid_elev, decay: float, years,
                 rng: np.random.Generator, draw_index: int = -1) -> GridFields:
    """Sample every GP term of ``draw`` at the grid given its station values.

    Coordinates are planar km from :func:`extentlab.gp.project_km` using the
    fit's reference latitude.  Grid points that coincide with a station take
    the station values exactly.  ``eta0`` (the site-independent part of the
    local yearly intercept) is drawn afresh at non-station points.
    """
    years = tuple(int(t) for t in years)
    if not years:
        raise ValueError("no years requested")
    if min(years) < 1 or max(years) > draw.n_years:
        raise ValueError(f"years must lie in the fitted period 1..{draw.n_years}")
    rows = np.array(years) - 1
    plan = kriging_plan(station_xy, grid_xy, decay)
    b0 = _gp_field(plan, draw.beta0_field, 0.0, draw.s2_beta0, rng)
    a = _gp_field(plan, draw.alpha_field, 0.0, draw.s2_alpha, rng)
    zr = _gp_field(plan, draw.z_rho, draw.z_rho_mean, draw.s2_zrho, rng)
    zs = _gp_field(plan, draw.z_sigma, draw.z_sigma_mean, draw.s2_zsigma, rng)
    eta = _gp_field(plan, draw.eta[rows], 0.0, draw.s2_eta, rng)
    eta0 = np.empty((len(years), plan.n_new))
    eta0[:, plan.snap_new] = draw.eta0[rows][:, plan.snap_obs]
    eta0[:, plan.free] = np.sqrt(draw.s2_0) * rng.standard_normal((len(years), plan.free.size))
    return GridFields(np.asarray(grid_elev, float), b0, a, zr, zs, eta + eta0, draw.psi[rows], years,
                      draw_index)


def simulate_replicate(fields: GridFields, draw: ModelParameters, years, rng: np.random.Generator,
                       season: SeasonConfig = DEFAULT_SEASON) -> np.ndarray:
    """Daily temperatures ``Y[s, t, l]`` for the requested years.

    Day-1 anomalies are drawn from the stationary law
    N(0, sigma2 / (1 - rho^2)); later days follow the AR(1) recursion.
    """
    years = tuple(int(t) for t in years)
    pos = [fields.years.index(t) for t in years]
    harm = harmonics(season)
    m = mean_surface(draw.fixed, fields.elev, years, harm, fields.beta0_field, fields.alpha_field,
                     fields.psi[pos], fields.eta[pos])
    rho = fields.rho
    sd = np.sqrt(fields.sigma2)
    sd0 = sd / np.sqrt(1.0 - rho * rho)
    z = rng.standard_normal(m.shape)
    return m + ar1_anomalies(z, rho, sd, sd0)


@dataclass(eq=False)
class ReplicateEnsemble:
    """Replicates ``Y[b, s, t, l]`` (float32) over grid points, years and window days."""

    Y: np.ndarray
    grid: GridSpec | None
    years: tuple
    season: SeasonConfig = DEFAULT_SEASON
    seed: int = 0
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        self.years = tuple(int(t) for t in self.years)
        if self.Y.ndim != 4 or self.Y.shape[2] != len(self.years):
            raise ValueError("Y must be shaped (B, n_grid, n_years, season_length)")
        if self.grid is not None and self.Y.shape[1] != len(self.grid):
            raise ValueError("ensemble and grid sizes differ")

    @property
    def B(self) -> int:
        return self.Y.shape[0]

    @property
    def n_grid(self) -> int:
        return self.Y.shape[1]

    @property
    def season_length(self) -> int:
        return self.Y.shape[3]

    def year_pos(self, years) -> np.ndarray:
        try:
            return np.array([self.years.index(int(t)) for t in years])
        except ValueError:
            raise ValueError(f"years {sorted(years)} not all in ensemble years "
                             f"{self.years[0]}..{self.years[-1]}") from None

    def replicate(self, b: int) -> np.ndarray:
        """Replicate ``b`` (0-based) as float64 ``(S, T, L)``."""
        return np.asarray(self.Y[b], dtype=np.float64)

    def header(self) -> bytes:
        store_hash = bytes.fromhex(self.manifest.get("store_sha256", "0" * 64))
        B, S, T, L = self.Y.shape
        return _HEAD.pack(MAGIC, VERSION, B, S, T, L, self.years[0], int(self.seed), store_hash)

    def save(self, path) -> None:
        path = Path(path)
        if list(self.years) != list(range(self.years[0], self.years[0] + len(self.years))):
            raise ValueError("only contiguous year ranges can be saved")
        with open(path, "wb") as f:
            f.write(self.header())
            for b in range(self.B):
                f.write(np.ascontiguousarray(self.Y[b], dtype="<f4").tobytes())
        Path(str(path) + ".json").write_text(json.dumps(self.manifest, indent=1, sort_keys=True))

    @classmethod
    def load(cls, path, grid: GridSpec | None = None, season: SeasonConfig | None = None) -> "ReplicateEnsemble":
        """Memory-map an ensemble file; replicates are read lazily."""
        path = Path(path)
        with open(path, "rb") as f:
            raw = f.read(_HEAD.size)
        if len(raw) < _HEAD.size:
            raise EnsembleFormatError("truncated ensemble header")
        magic, version, B, S, T, L, year0, seed, store_hash = _HEAD.unpack(raw)
        if magic != MAGIC:
            raise EnsembleFormatError("not an ensemble file")
        if version != VERSION:
            raise EnsembleFormatError(f"unsupported ensemble version {version}")
        expected = _HEAD.size + 4 * B * S * T * L
        if path.stat().st_size != expected:
            raise EnsembleFormatError("ensemble file size does not match its header")
        Y = np.memmap(path, dtype="<f4", mode="r", offset=_HEAD.size, shape=(B, S, T, L))
        mpath = Path(str(path) + ".json")
        manifest = json.loads(mpath.read_text()) if mpath.exists() else {}
        manifest.setdefault("store_sha256", store_hash.hex())
        if season is None:
            season = _season_from_manifest(manifest) or DEFAULT_SEASON
        if grid is not None and "grid_ids" in manifest and manifest["grid_ids"] != [p.id for p in grid.points]:
            raise EnsembleFormatError("grid does not match the ensemble's grid ids")
        return cls(Y, grid, tuple(range(year0, year0 + T)), season, seed, manifest)

    def digest(self) -> str:
        h = hashlib.sha256(self.header())
        for b in range(self.B):
            h.update(np.ascontiguousarray(self.Y[b], dtype="<f4").tobytes())
        return h.hexdigest()


def _season_from_manifest(manifest):
    s = manifest.get("season")
    if not s:
        return None
    return SeasonConfig(start_year=s["start_year"], start=tuple(s["start"]), end=tuple(s["end"]),
                        jja_start=tuple(s["jja_start"]), jja_end=tuple(s["jja_end"]))


def _season_manifest(season: SeasonConfig) -> dict:
    return {"start_year": season.start_year, "start": list(season.start), "end": list(season.end),
            "jja_start": list(season.jja_start), "jja_end": list(season.jja_end)}


def generate_ensemble(store: PosteriorStore, grid: GridSpec, years, B: int, seed: int,
                      season: SeasonConfig | None = None, threads: int = 1, out=None,
                      replace: bool = False) -> ReplicateEnsemble:
    """Generate ``B`` replicates over ``grid`` for year indices ``years``.

    The station geometry, reference latitude and decay come from the store's
    manifest.  If ``out`` is a path the ensemble is streamed to disk and
    returned memory-mapped.  Output is independent of ``threads``.
    ``replace`` allows ``B`` above the number of stored draws by reusing them.
    """
    if len(store) == 0:
        raise ValueError("empty posterior store")
    man = store.manifest
    if season is None:
        season = _season_from_manifest(man) or DEFAULT_SEASON
    years = tuple(int(t) for t in years)
    ref_lat = man["ref_lat"]
    station_xy = project_km(np.array(man["lonlat"]), ref_lat)
    grid_xy = project_km(grid.points, ref_lat)
    grid_elev = np.array([p.elev for p in grid.points])
    decay = float(man["decay"])
    picks = store.thinned_indices(B, replace)
    L = season.season_length
    shape = (B, len(grid), len(years), L)

    manifest = {
        "software": f"extentlab {__version__}",
        "B": B, "seed": int(seed), "years": list(years),
        "draw_indices": picks.tolist(),
        "draw_mapping": "evenly spaced thinning over the store",
        "substreams": "gen.replicate.<b>, b = 1..B",
        "store_sha256": store.digest(),
        "grid_ids": [p.id for p in grid.points],
        "ref_lat": ref_lat, "decay": decay,
        "season": _season_manifest(season),
        "layout": "[b][s][t][l] float32",
    }

    if out is not None:
        out = Path(out)
        ens = ReplicateEnsemble(np.zeros((0,) + shape[1:], np.float32), grid, years, season, seed, manifest)
        header = ens.header()[:8 + 4] + struct.pack("<I", B) + ens.header()[16:]
        with open(out, "wb") as f:
            f.write(header)
            f.truncate(len(header) + 4 * int(np.prod(shape)))
        Y = np.memmap(out, dtype="<f4", mode="r+", offset=len(header), shape=shape)
    else:
        Y = np.empty(shape, dtype=np.float32)

    def one(b):
        rng = substream(seed, "gen.replicate", b + 1)
        draw = store[int(picks[b])]
        fields = krige_fields(draw, station_xy, grid_xy, grid_elev, decay, years, rng, int(picks[b]))
        Y[b] = simulate_replicate(fields, draw, years, rng, season)

    with threadpool_limits(1):
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(one, range(B)))
        else:
            for b in range(B):
                one(b)

    if out is not None:
        Y.flush()
        del Y
        Path(str(out) + ".json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
        return ReplicateEnsemble.load(out, grid, season)
    return ReplicateEnsemble(Y, grid, years, season, seed, manifest)


# -- synthetic truth -----------------------------------------------------------

def draw_random_effects(truth: TruthSpec, sites: Sequence[Site], n_years: int, rng: np.random.Generator,
                        decay: float | None = None) -> ModelParameters:
    """A full parameter set at ``sites``: fixed values from ``truth``, random terms from their priors."""
    xy = project_km(sites)
    dist = distance_matrix(xy)
    if decay is None:
        decay = decay_from_dmax(dist)
    R = np.exp(-decay * dist)
    n = len(sites)
    b0 = mvn_sample(np.zeros(n), truth.s2_beta0 * R, rng)
    a = mvn_sample(np.zeros(n), truth.s2_alpha * R, rng)
    zr = mvn_sample(np.full(n, truth.z_rho_mean), truth.s2_zrho * R, rng)
    zs = mvn_sample(np.full(n, truth.z_sigma_mean), truth.s2_zsigma * R, rng)
    psi = np.concatenate([[0.0], np.sqrt(truth.s2_psi) * rng.standard_normal(n_years - 1)])
    eta = mvn_sample(np.zeros(n), truth.s2_eta * R, rng, size=n_years)
    eta0 = np.sqrt(truth.s2_0) * rng.standard_normal((n_years, n))
    return ModelParameters(
        beta0=truth.beta0, beta1=truth.beta1, beta2=truth.beta2, beta3=truth.beta3, alpha=truth.alpha,
        beta0_field=b0, alpha_field=a, psi=psi, eta=eta, eta0=eta0, z_rho=zr, z_sigma=zs,
        z_rho_mean=truth.z_rho_mean, z_sigma_mean=truth.z_sigma_mean,
        s2_beta0=truth.s2_beta0, s2_alpha=truth.s2_alpha, s2_psi=truth.s2_psi, s2_eta=truth.s2_eta,
        s2_zrho=truth.s2_zrho, s2_zsigma=truth.s2_zsigma, s2_0=truth.s2_0)


def simulate_synthetic_truth(truth: TruthSpec, sites: Sequence[Site], n_years: int, seed: int,
                             season: SeasonConfig = DEFAULT_SEASON, missing_rate: float = 0.0):
    """Station series generated by the model itself, for recovery tests.

    Returns ``(series, params, manifest)`` where ``params`` holds the realized
    random effects at the stations.
    """
    rng = substream(seed, "truth")
    params = draw_random_effects(truth, sites, n_years, rng)
    elev = np.array([s.elev for s in sites])
    years = tuple(range(1, n_years + 1))
    Y = simulate_replicate(station_fields(params, elev, years), params, years, rng, season)
    if missing_rate > 0:
        Y[rng.random(Y.shape) < missing_rate] = np.nan
    series = [StationSeries(site, Y[i]) for i, site in enumerate(sites)]
    manifest = {"seed": int(seed), "substream": "truth", "n_years": n_years,
                "truth": {k: getattr(truth, k) for k in truth.__dataclass_fields__},
                "missing_rate": missing_rate}
    return series, params, manifest


def synthetic_store(truth: TruthSpec, sites: Sequence[Site], n_years: int, n_draws: int, seed: int,
                    season: SeasonConfig = DEFAULT_SEASON) -> PosteriorStore:
    """A store of independent prior-predictive parameter sets under ``truth``.

    Stands in for a fitted posterior when the generating model is known.
    """
    sites = list(sites)
    xy_ll = [[s.lon, s.lat] for s in sites]
    ref_lat = float(np.mean([s.lat for s in sites]))
    decay = decay_from_dmax(distance_matrix(project_km(sites, ref_lat)))
    draws = [draw_random_effects(truth, sites, n_years, substream(seed, "truth.draw", k), decay)
             for k in range(n_draws)]
    manifest = {"ref_lat": ref_lat, "decay": decay, "lonlat": xy_ll,
                "site_ids": [s.id for s in sites], "elev": [s.elev for s in sites],
                "season": _season_manifest(season), "n_years": n_years, "synthetic": True}
    return PosteriorStore.from_params(draws, np.zeros(n_draws, dtype=int), manifest)
