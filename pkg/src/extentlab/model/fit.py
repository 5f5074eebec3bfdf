"""Multi-chain model fitting."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import numpy as np
from threadpoolctl import threadpool_limits

from .. import __version__
from ..core import substream
from .data import ModelData
from .params import McmcConfig, PriorConfig
from .sampler import SamplerContext, run_chain
from .store import PosteriorStore

log = logging.getLogger(__name__)

DESIGN_FLAGS = {
    "day1_init": "stationary_marginal",
    "missing_days": "dropped; day after a gap scored with stationary marginal",
    "harmonic_argument": "calendar_day_of_year_nonleap",
    "time_centering": "fixed_trend_centered_at_midpoint_prior_transformed",
    "field_centering": "none",
    "local_yearly_intercept": "eta GP (s2_eta) + site-independent eta0 (s2_0)",
    "z_means_update": "conjugate_normal",
    "metropolis_target_accept": None,
    "distance": "equirectangular_km",
}


def fit(data: ModelData, priors: PriorConfig = PriorConfig(), config: McmcConfig = McmcConfig(),
        threads: int = 1) -> PosteriorStore:
    """Run ``config.n_chains`` chains and collect thinned post-burn-in draws.

    Chain ``c`` draws from substream ``(seed, "fit.chain", c)``; the output
    does not depend on ``threads``.
    """
    if data.n_sites < 2 or data.n_years < 2:
        raise ValueError("fitting needs at least 2 stations and 2 years")
    ctx = SamplerContext(data, priors, config)

    def one(c):
        res = run_chain(ctx, substream(config.seed, "fit.chain", c))
        log.info("chain %d: post-burn-in acceptance z_rho %.2f z_sigma %.2f", c,
                 res.accept_post[0].mean(), res.accept_post[1].mean())
        return res

    with threadpool_limits(1):
        if threads > 1 and config.n_chains > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(one, range(config.n_chains)))
        else:
            results = [one(c) for c in range(config.n_chains)]

    params, chain = [], []
    for c, res in enumerate(results):
        params.extend(res.draws)
        chain.extend([c] * len(res.draws))
    flags = dict(DESIGN_FLAGS, metropolis_target_accept=config.target_accept, blocking=config.blocking)
    manifest = {
        "software": f"extentlab {__version__}",
        "priors": asdict(priors),
        "mcmc": asdict(config),
        "data_sha256": data.digest(),
        "site_ids": [s.id for s in data.sites],
        "elev": data.elev.tolist(),
        "lonlat": [[s.lon, s.lat] for s in data.sites],
        "season": {"start_year": data.season.start_year, "start": list(data.season.start),
                   "end": list(data.season.end), "jja_start": list(data.season.jja_start),
                   "jja_end": list(data.season.jja_end)},
        "n_years": data.n_years,
        "ref_lat": data.ref_lat,
        "decay": data.decay,
        "decay_rule": "3/d_max over stations, shared by all GP terms",
        "correlation_jitter": ctx.r_jitter,
        "substreams": [f"fit.chain.{c}" for c in range(config.n_chains)],
        "acceptance": [
            {"chain": c, "z_rho_burn": r.accept_burn[0].tolist(), "z_sigma_burn": r.accept_burn[1].tolist(),
             "z_rho": r.accept_post[0].tolist(), "z_sigma": r.accept_post[1].tolist(),
             "step_z_rho": r.steps[0].tolist(), "step_z_sigma": r.steps[1].tolist()}
            for c, r in enumerate(results)
        ],
        "design": flags,
    }
    store = PosteriorStore.from_params(params, np.array(chain), manifest)
    return store
