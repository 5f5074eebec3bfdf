"""Pipeline stages behind the ``extentlab`` subcommands.

Files in the output directory::

    simulate  stations.csv, grid.csv (at the configured paths), truth.json
    fit       posterior.xlpost, diagnostics.csv
    generate  ensemble.xlens (+ .json manifest)
    analyze   reference_mean.csv, prob_*.csv, extent_*.csv, extent_summary.csv,
              trend.csv, checks.csv
    report    report.txt

Each stage also writes ``manifest_<stage>.json``.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .. import __version__
from ..analytics import (
    EventSpec, average_extent, average_probability, extent_csv, increment_field, posterior_summary,
    reference_mean, slot_count, slot_indicators, surface_csv, write_csv, yearly_extent_trend,
)
from ..analytics.summary import SUMMARY_HEADER, fmt
from ..core import GridSpec, PeriodSelector, Site, region_weights, substream
from ..generate import ReplicateEnsemble, generate_ensemble, simulate_synthetic_truth
from ..gp import project_km
from ..model import ModelData, PosteriorStore, diagnostics, fit
from .config import RunConfig
from .ingest import ValidationError, export_grid, export_stations, ingest_grid, ingest_stations

log = logging.getLogger(__name__)

STORE_FILE = "posterior.xlpost"
ENSEMBLE_FILE = "ensemble.xlens"
IDENTITY_TOL = 1e-12


class MissingArtifact(OSError):
    pass


class IdentityCheckFailed(ArithmeticError):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(cfg: RunConfig, stage: str, inputs, outputs, extra=None, threads: int = 1) -> Path:
    man = {
        "stage": stage,
        "software": f"extentlab {__version__}",
        "config_path": str(cfg.path),
        "config": cfg.raw,
        "seed": cfg.seed,
        "threads": threads,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs},
    }
    if extra:
        man.update(extra)
    path = cfg.output / f"manifest_{stage}.json"
    path.write_text(json.dumps(man, indent=1, sort_keys=True, default=str))
    return path


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise MissingArtifact(f"missing {what}: {path} (run the earlier stage first)")
    return path


# -- simulate ------------------------------------------------------------------

def _elevation(lon, lat, sim):
    """Smooth synthetic relief: rising to the north with a ridge in the east."""
    (x0, x1), (y0, y1), (e0, e1) = sim.lon_range, sim.lat_range, sim.elev_range
    u = (np.asarray(lon) - x0) / (x1 - x0)
    v = (np.asarray(lat) - y0) / (y1 - y0)
    return e0 + (e1 - e0) * np.clip(0.7 * v ** 2 + 0.3 * np.exp(-((u - 0.75) / 0.2) ** 2) * v, 0, 1)


def synthetic_sites(cfg: RunConfig) -> list[Site]:
    sim = cfg.simulate
    rng = substream(cfg.seed, "simulate.sites")
    lon = rng.uniform(*sim.lon_range, size=sim.n_stations)
    lat = rng.uniform(*sim.lat_range, size=sim.n_stations)
    elev = _elevation(lon, lat, sim)
    return [Site(f"ST{i + 1:02d}", float(round(lon[i], 4)), float(round(lat[i], 4)), float(round(elev[i], 1)))
            for i in range(sim.n_stations)]


def synthetic_grid(cfg: RunConfig) -> GridSpec:
    sim = cfg.simulate
    lons = np.linspace(*sim.lon_range, sim.grid_nx)
    lats = np.linspace(*sim.lat_range, sim.grid_ny)
    ref_lat = float(np.mean(sim.lat_range))
    dx, dy = np.diff(project_km(np.array([[lons[0], ref_lat], [lons[1], ref_lat + lats[1] - lats[0]]]), ref_lat),
                     axis=0)[0]
    mid = float(np.mean(sim.lon_range))
    pts, west = [], []
    for j, la in enumerate(lats):
        for i, lo in enumerate(lons):
            pts.append(Site(f"G{j:02d}{i:02d}", float(round(lo, 4)), float(round(la, 4)),
                            float(round(float(_elevation(lo, la, sim)), 1))))
            west.append(lo < mid)
    west = np.array(west)
    area = round(abs(float(dx * dy)), 3)
    return GridSpec(pts, np.full(len(pts), area), {"WEST": west, "EAST": ~west})


def cmd_simulate(cfg: RunConfig, threads: int = 1) -> dict:
    cfg.output.mkdir(parents=True, exist_ok=True)
    sites = synthetic_sites(cfg)
    sim = cfg.simulate
    series, params, man = simulate_synthetic_truth(sim.truth, sites, sim.n_years, cfg.seed, cfg.season,
                                                   sim.missing_rate)
    cfg.stations.parent.mkdir(parents=True, exist_ok=True)
    cfg.grid.parent.mkdir(parents=True, exist_ok=True)
    export_stations(series, cfg.stations, cfg.season)
    export_grid(synthetic_grid(cfg), cfg.grid)
    truth_path = cfg.output / "truth.json"
    truth = {"fixed": dict(zip(("beta0", "beta1", "beta2", "beta3", "alpha"), map(float, params.fixed))),
             "z_rho_mean": params.z_rho_mean, "z_sigma_mean": params.z_sigma_mean,
             "variances": {k: getattr(params, k) for k in ("s2_beta0", "s2_alpha", "s2_psi", "s2_eta",
                                                           "s2_zrho", "s2_zsigma", "s2_0")},
             "generator": man}
    truth_path.write_text(json.dumps(truth, indent=1, sort_keys=True))
    write_manifest(cfg, "simulate", [cfg.path], [cfg.stations, cfg.grid, truth_path],
                   {"substreams": ["simulate.sites", "truth"]}, threads)
    return {"stations": len(sites), "years": sim.n_years}


# -- fit -----------------------------------------------------------------------

def cmd_fit(cfg: RunConfig, threads: int = 1) -> dict:
    report = ingest_stations(_require(cfg.stations, "station file"), cfg.season)
    for line in report.lines():
        log.info(line)
    data = ModelData.from_series(report.series, cfg.season)
    cfg.output.mkdir(parents=True, exist_ok=True)
    store = fit(data, cfg.priors, cfg.mcmc, threads=threads)
    out = cfg.output / STORE_FILE
    store.save(out)
    diag = cfg.output / "diagnostics.csv"
    rows = diagnostics(store)
    write_csv(diag, ("parameter", "mean", "sd", "rhat", "ess"),
              [(r["parameter"], r["mean"], r["sd"], r["rhat"], r["ess"]) for r in rows])
    write_manifest(cfg, "fit", [cfg.path, cfg.stations], [out, diag],
                   {"missing_days": report.missing, "skipped_rows": report.outside_window,
                    "decay": data.decay, "ref_lat": data.ref_lat,
                    "design": store.manifest.get("design"), "substreams": store.manifest.get("substreams"),
                    "store_sha256": store.digest()}, threads)
    return {"draws": len(store), "store": str(out)}


# -- generate ------------------------------------------------------------------

def cmd_generate(cfg: RunConfig, threads: int = 1) -> dict:
    store = PosteriorStore.load(_require(cfg.output / STORE_FILE, "posterior store"))
    grid = ingest_grid(_require(cfg.grid, "grid file"))
    n_years = int(store.manifest["n_years"])
    years = cfg.year_indices(cfg.gen_years) if cfg.gen_years else tuple(range(1, n_years + 1))
    if min(years) < 1 or max(years) > n_years:
        raise ValidationError(f"[generation] years must lie within the fitted period "
                              f"{cfg.season.start_year}-{cfg.season.year_of(n_years)}")
    out = cfg.output / ENSEMBLE_FILE
    ens = generate_ensemble(store, grid, years, cfg.replicates, cfg.seed, cfg.season, threads, out,
                             replace=cfg.resample)
    write_manifest(cfg, "generate", [cfg.path, cfg.grid, cfg.output / STORE_FILE],
                   [out, Path(str(out) + ".json")],
                   {"draw_indices": ens.manifest["draw_indices"], "decay": ens.manifest["decay"],
                    "substreams": ens.manifest["substreams"]}, threads)
    return {"replicates": ens.B, "grid_points": ens.n_grid, "years": len(years)}


# -- analyze -------------------------------------------------------------------

def _events(cfg: RunConfig, ref):
    """Expand event families into ``(event_id, period_name, EventSpec, family)``."""
    out = []
    for ev in cfg.events:
        two = ev.kind in ("decade_diff", "daily_increment", "daily_increment_persist")
        base = ev.kind.replace("_persist", "")
        for c in ev.c:
            for k in ev.k:
                kind = base + "_persist" if k > 1 and base in ("daily_over_ref", "daily_increment") else base
                tag = f"{ev.name}_c{c:g}_k{k}" + ("_not" if ev.complement else "")
                if two:
                    periods = tuple(cfg.periods[p] for p in ev.periods)
                    spec = EventSpec(kind, c, k, None, periods, ev.complement)
                    out.append((tag, "-".join(ev.periods), spec, ev))
                else:
                    for pn in ev.periods:
                        spec = EventSpec(kind, c, k, ref, (cfg.periods[pn],), ev.complement)
                        out.append((tag, pn, spec, ev))
    return out


def identity_checks(ens, spec: EventSpec, region: str, avg, threads: int = 1) -> list[tuple]:
    """Exact identities on one event: complement, day/space average swap, slot count, increments."""
    checks = []
    comp = average_extent(ens, spec.negated(), region, threads=threads)
    checks.append(("complement", float(np.max(np.abs(avg.values + comp.values - 1.0)))))
    if spec.daily:
        w = region_weights(ens.grid, region)
        errs = []
        for b in range(ens.B):
            ind, counted = slot_indicators(ens, spec, b)
            per_point = ind[:, :, counted].reshape(ind.shape[0], -1).mean(axis=1)
            errs.append(abs(float(w @ per_point) - avg.values[b]))
        checks.append(("day_space_swap", max(errs)))
        n = slot_count(spec, ens.season_length)
        lo, hi = spec.window
        days = spec.periods[0].days
        expected = len(spec.periods[0].years) * sum(
            all((l + o) in days for o in range(lo, hi + 1)) for l in days)
        checks.append(("slot_count", float(abs(n - expected))))
    if spec.kind in ("daily_increment", "daily_increment_persist", "decade_diff"):
        p1, p2 = spec.periods
        errs = []
        for b in range(ens.B):
            Z = increment_field(ens, b, (p1, p2))
            zbar = np.nanmean(Z.reshape(Z.shape[0], -1), axis=1)
            dbar = (_pmean(ens, b, p2) - _pmean(ens, b, p1))
            errs.append(float(np.max(np.abs(zbar - dbar))))
        checks.append(("increment_mean", max(errs)))
    return checks


def _pmean(ens, b, p):
    y = np.asarray(ens.Y[b][:, ens.year_pos(p.years)][:, :, np.array(p.days) - 1], dtype=np.float64)
    return y.reshape(y.shape[0], -1).mean(axis=1)


def cmd_analyze(cfg: RunConfig, threads: int = 1) -> dict:
    ens_path = cfg.output / ENSEMBLE_FILE
    if not ens_path.is_file():
        raise MissingArtifact(f"missing ensemble: {ens_path} (run 'generate' first)")
    grid = ingest_grid(_require(cfg.grid, "grid file"))
    ens = ReplicateEnsemble.load(ens_path, grid, cfg.season)
    for r in cfg.regions:
        grid.mask(r)
    outputs = []
    ref = None
    if cfg.reference:
        ref = reference_mean(ens, cfg.periods[cfg.reference], cfg.per_replicate_reference, threads)
        if not ref.per_replicate:
            path = cfg.output / "reference_mean.csv"
            surface_csv(path, grid, ref.values)
            outputs.append(path)
    summary_rows, trend_rows, check_rows = [], [], []
    failed = []
    for tag, pname, spec, ev in _events(cfg, ref):
        prob = average_probability(ens, spec, threads=threads)
        path = cfg.output / f"prob_{tag}_{pname}.csv"
        surface_csv(path, grid, prob)
        outputs.append(path)
        for region in cfg.regions:
            avg = average_extent(ens, spec, region, threads=threads)
            path = cfg.output / f"extent_{tag}_{pname}_{region}.csv"
            extent_csv(path, avg.values)
            outputs.append(path)
            s = posterior_summary(avg.values)
            summary_rows.append((spec.label, pname, region, s.n, s.mean, s.sd) + tuple(s.quantiles.values()))
            for name, err in identity_checks(ens, spec, region, avg, threads):
                ok = err <= IDENTITY_TOL
                check_rows.append((spec.label, pname, region, name, err, "pass" if ok else "FAIL"))
                if not ok:
                    failed.append(f"{name} for {spec.label} {pname} {region}: {err:g}")
        if ev.trend and spec.kind in ("daily_over_ref", "daily_over_ref_persist", "decade_avg_over_ref") \
                and pname == ev.periods[0]:
            years = cfg.year_indices(cfg.trend_years) if cfg.trend_years else ens.years
            for region in cfg.regions:
                tr = yearly_extent_trend(ens, spec, region, years, spec.periods[0].days, threads=threads)
                trend_rows.append((spec.label, region, f"{cfg.season.year_of(years[0])}-"
                                   f"{cfg.season.year_of(years[-1])}", tr.slope, tr.intercept,
                                   tr.ci[0], tr.ci[1], tr.replicate_slope_mean))
    for name, header, rows in (
            ("extent_summary.csv", ("event", "period") + SUMMARY_HEADER[1:], summary_rows),
            ("trend.csv", ("event", "region", "years", "slope", "intercept", "q05", "q95",
                           "replicate_slope_mean"), trend_rows),
            ("checks.csv", ("event", "period", "region", "identity", "max_abs_error", "status"), check_rows)):
        path = cfg.output / name
        write_csv(path, header, rows)
        outputs.append(path)
    write_manifest(cfg, "analyze", [cfg.path, cfg.grid, ens_path], outputs,
                   {"reference": cfg.reference, "per_replicate_reference": cfg.per_replicate_reference,
                    "float_format": "%.6g", "ci": "central empirical 5%/95% quantiles"}, threads)
    if failed:
        raise IdentityCheckFailed("identity checks failed: " + "; ".join(failed))
    return {"events": len(summary_rows), "checks": len(check_rows)}


# -- report --------------------------------------------------------------------

def _read_csv(path):
    import csv

    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def render_report(summary_rows, trend_rows) -> str:
    """Posterior mean (90% interval) of average extents: events by rows, period x region by columns."""
    cols = []
    for r in summary_rows:
        key = (r["period"], r["region"])
        if key not in cols:
            cols.append(key)
    events = []
    for r in summary_rows:
        if r["event"] not in events:
            events.append(r["event"])
    cell = {(r["event"], r["period"], r["region"]): r for r in summary_rows}
    head = ["event"] + [f"{p} {g}" for p, g in cols]
    lines = [head]
    for e in events:
        row = [e]
        for p, g in cols:
            r = cell.get((e, p, g))
            row.append(f"{float(r['mean']):.2f} ({float(r['q05']):.2f}, {float(r['q95']):.2f})" if r else "")
        lines.append(row)
    widths = [max(len(x[i]) for x in lines) for i in range(len(head))]
    text = ["Average extent: posterior mean (90% interval)", ""]
    text += ["  ".join(x[i].ljust(widths[i]) for i in range(len(head))).rstrip() for x in lines]
    if trend_rows:
        text += ["", "Yearly extent trend (per year): OLS on posterior means, 90% interval from replicate slopes", ""]
        for r in trend_rows:
            text.append(f"{r['event']:<16} {r['region']:<6} {r['years']}  slope {fmt(float(r['slope']))} "
                        f"({fmt(float(r['q05']))}, {fmt(float(r['q95']))})")
    return "\n".join(text) + "\n"


def cmd_report(cfg: RunConfig, threads: int = 1) -> dict:
    summ = _require(cfg.output / "extent_summary.csv", "analysis summary")
    trend = cfg.output / "trend.csv"
    text = render_report(_read_csv(summ), _read_csv(trend) if trend.is_file() else [])
    path = cfg.output / "report.txt"
    path.write_text(text)
    print(text, end="")
    inputs = [cfg.path, summ] + ([trend] if trend.is_file() else [])
    write_manifest(cfg, "report", inputs, [path], threads=threads)
    return {"report": str(path)}


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "generate": cmd_generate, "analyze": cmd_analyze,
            "report": cmd_report}
