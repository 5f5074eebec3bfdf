"""Run configuration: INI sections with key = value pairs.

Paths are relative to the config file.  Periods are given in calendar
years (``1966-1975``) and cover JJA days unless followed by ``season``.
"""
from __future__ import annotations

import configparser
import os
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..core import PeriodSelector, SeasonConfig
from ..model.params import McmcConfig, PriorConfig, TruthSpec
from .ingest import ValidationError

THREADS_ENV = "EXTENTLAB_THREADS"


@dataclass(frozen=True)
class EventConfig:
    """One event family; ``c`` and ``k`` lists expand to their cross product."""

    name: str
    kind: str
    c: tuple
    k: tuple
    periods: tuple
    complement: bool = False
    trend: bool = False


@dataclass(frozen=True)
class SimulateConfig:
    n_stations: int = 10
    n_years: int = 20
    lon_range: tuple = (-2.0, 1.0)
    lat_range: tuple = (41.0, 42.5)
    elev_range: tuple = (150.0, 1500.0)
    grid_nx: int = 10
    grid_ny: int = 6
    missing_rate: float = 0.0
    truth: TruthSpec = TruthSpec()


@dataclass(frozen=True)
class RunConfig:
    path: Path
    seed: int
    output: Path
    stations: Path
    grid: Path
    season: SeasonConfig
    priors: PriorConfig
    mcmc: McmcConfig
    replicates: int
    resample: bool
    gen_years: tuple            # calendar years
    periods: dict               # name -> PeriodSelector (year indices)
    period_years: dict          # name -> (first, last) calendar years
    reference: str
    per_replicate_reference: bool
    regions: tuple
    trend_years: tuple          # calendar years
    events: tuple
    simulate: SimulateConfig = SimulateConfig()
    raw: dict = field(default_factory=dict)

    def year_indices(self, years) -> tuple:
        return tuple(self.season.t_of(y) for y in years)


def _md(text, key):
    m = re.fullmatch(r"\s*(\d{1,2})-(\d{1,2})\s*", text)
    if not m:
        raise ValidationError(f"[season] {key}: expected MM-DD, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _year_range(text, where):
    m = re.fullmatch(r"\s*(\d{4})\s*(?:-\s*(\d{4}))?\s*", text)
    if not m:
        raise ValidationError(f"{where}: expected YYYY or YYYY-YYYY, got {text!r}")
    a = int(m.group(1))
    b = int(m.group(2) or a)
    if b < a:
        raise ValidationError(f"{where}: empty year range {text!r}")
    return a, b


def _list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _typed(section, cls, exclude=(), prefix=""):
    """Build dataclass ``cls`` from matching keys of ``section``."""
    kw = {}
    for f in fields(cls):
        key = prefix + f.name
        if f.name in exclude or section is None or key not in section:
            continue
        raw = section[key]
        typ = type(f.default)
        try:
            kw[f.name] = raw.strip() if typ is str else typ(float(raw)) if typ is int else typ(raw)
        except ValueError:
            raise ValidationError(f"[{section.name}] {key}: bad value {raw!r}") from None
    try:
        return cls(**kw)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"[{section.name if section is not None else cls.__name__}] {e}") from None


def load_config(path, seed: int | None = None, check_inputs: bool = True) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read(path)
    except configparser.Error as e:
        raise ValidationError(f"{path}: {e}") from None
    base = path.parent
    sec = lambda name: cp[name] if cp.has_section(name) else None
    run = sec("run")
    if run is None:
        raise ValidationError("missing [run] section")

    def p(key, default):
        return (base / run.get(key, default)).resolve()

    if seed is None:
        try:
            seed = int(run.get("seed", "0"))
        except ValueError:
            raise ValidationError("[run] seed must be an integer") from None
    if seed < 0:
        raise ValidationError("seed must be non-negative")

    s = sec("season")
    season_kw = {}
    if s is not None:
        if "start_year" in s:
            season_kw["start_year"] = int(s["start_year"])
        for key in ("start", "end", "jja_start", "jja_end"):
            if key in s:
                season_kw[key] = _md(s[key], key)
    try:
        season = SeasonConfig(**season_kw)
    except ValueError as e:
        raise ValidationError(f"[season] {e}") from None

    priors = _typed(sec("priors"), PriorConfig)
    mcmc = _typed(sec("mcmc"), McmcConfig, exclude=("seed",))
    mcmc = McmcConfig(**{**mcmc.__dict__, "seed": seed})

    g = sec("generation")
    replicates = int(g.get("replicates", "100")) if g is not None else 100
    if replicates < 1:
        raise ValidationError("[generation] replicates must be >= 1")
    resample = g.getboolean("resample", False) if g is not None else False
    gen_years = None
    if g is not None and "years" in g:
        a, b = _year_range(g["years"], "[generation] years")
        gen_years = tuple(range(a, b + 1))

    periods, period_years = {}, {}
    ps = sec("periods")
    if ps is not None:
        for name, text in ps.items():
            parts = text.split()
            a, b = _year_range(parts[0], f"[periods] {name}")
            days = parts[1] if len(parts) > 1 else "jja"
            if days == "jja":
                dd = season.jja_days()
            elif days == "season":
                dd = tuple(range(1, season.season_length + 1))
            else:
                raise ValidationError(f"[periods] {name}: days must be 'jja' or 'season'")
            if a < season.start_year:
                raise ValidationError(f"[periods] {name}: starts before {season.start_year}")
            periods[name] = PeriodSelector(tuple(season.t_of(y) for y in range(a, b + 1)), dd)
            period_years[name] = (a, b)

    an = sec("analysis")
    reference = an.get("reference", "") if an is not None else ""
    per_rep = an.getboolean("per_replicate_reference", False) if an is not None else False
    regions = tuple(_list(an.get("regions", "ALL"))) if an is not None else ("ALL",)
    trend_years = ()
    if an is not None and "trend_years" in an:
        a, b = _year_range(an["trend_years"], "[analysis] trend_years")
        trend_years = tuple(range(a, b + 1))

    events = []
    for name in cp.sections():
        if not name.startswith("event."):
            continue
        e = cp[name]
        ev_name = name[len("event."):]
        try:
            ev = EventConfig(
                name=ev_name, kind=e.get("kind", ""),
                c=tuple(float(x) for x in _list(e.get("c", "0"))),
                k=tuple(int(x) for x in _list(e.get("k", "1"))),
                periods=tuple(_list(e.get("periods", ""))),
                complement=e.getboolean("complement", False),
                trend=e.getboolean("trend", False))
        except ValueError as err:
            raise ValidationError(f"[{name}] {err}") from None
        for pn in ev.periods:
            if pn not in periods:
                raise ValidationError(f"[{name}] unknown period {pn!r}")
        events.append(ev)
    if events and reference and reference not in periods:
        raise ValidationError(f"[analysis] unknown reference period {reference!r}")

    sim = sec("simulate")
    simulate = SimulateConfig()
    if sim is not None:
        def rng_pair(key, default):
            if key not in sim:
                return default
            vals = [float(x) for x in _list(sim[key])]
            if len(vals) != 2 or vals[0] >= vals[1]:
                raise ValidationError(f"[simulate] {key}: expected 'low, high'")
            return tuple(vals)

        truth = _typed(sim, TruthSpec, prefix="truth.")
        try:
            simulate = SimulateConfig(
                n_stations=int(sim.get("n_stations", 10)), n_years=int(sim.get("n_years", 20)),
                lon_range=rng_pair("lon_range", SimulateConfig.lon_range),
                lat_range=rng_pair("lat_range", SimulateConfig.lat_range),
                elev_range=rng_pair("elev_range", SimulateConfig.elev_range),
                grid_nx=int(sim.get("grid_nx", 10)), grid_ny=int(sim.get("grid_ny", 6)),
                missing_rate=float(sim.get("missing_rate", 0.0)), truth=truth)
        except ValueError as err:
            raise ValidationError(f"[simulate] {err}") from None
        if simulate.n_stations < 2 or simulate.n_years < 2:
            raise ValidationError("[simulate] needs at least 2 stations and 2 years")

    raw = {name: dict(cp[name]) for name in cp.sections()}
    cfg = RunConfig(path=path.resolve(), seed=seed, output=p("output", "out"),
                    stations=p("stations", "stations.csv"), grid=p("grid", "grid.csv"), season=season,
                    priors=priors, mcmc=mcmc, replicates=replicates, resample=resample, gen_years=gen_years or (),
                    periods=periods, period_years=period_years, reference=reference,
                    per_replicate_reference=per_rep, regions=regions, trend_years=trend_years,
                    events=tuple(events), simulate=simulate, raw=raw)
    return cfg


def default_threads(cli_value: int | None) -> int:
    if cli_value is not None:
        n = cli_value
    else:
        try:
            n = int(os.environ.get(THREADS_ENV, "1"))
        except ValueError:
            raise ValidationError(f"{THREADS_ENV} must be an integer") from None
    if n < 1:
        raise ValidationError("threads must be >= 1")
    return n
