"""Gibbs sampler with Metropolis sub-steps for the space-time temperature model.

One sweep updates, in order:

(a-c) the linear mean effects -- fixed effects, the intercept/trend GP fields
      at the stations, the yearly intercepts psi[2:] and the local yearly
      intercepts -- from their Gaussian full conditional, either as one joint
      block ("joint") or as three blocks ("separate");
(d)   the seven variances from inverse-gamma full conditionals;
(e)   z_rho and z_sigma site by site with adaptive random-walk Metropolis,
      then the two field means from their normal full conditionals.

Given rho(s) and sigma2(s) the AR(1) likelihood is Gaussian in the mean
effects after the Prais-Winsten transform: days with an observed predecessor
contribute ``y_l - rho*y_{l-1}``, other days ``sqrt(1 - rho^2) * y_l``.
Everything constant within a (station, year) collapses to 3x3 sufficient
statistics, so assembling the full-conditional precision is cheap.

Internally the fixed trend uses the centered year ``t - t_mid``; the prior is
transformed exactly so this is a pure reparameterization, undone in
:meth:`ChainState.to_params`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ..gp import cholesky_jitter, rho_from_z, z_from_rho
from .data import ModelData, harmonics
from .likelihood import LOG2PI, anomaly_stats, day_masks
from .params import VARIANCE_NAMES, McmcConfig, ModelParameters, PriorConfig

log = logging.getLogger(__name__)

BLOCKS = {
    "joint": (("fixed", "fields", "years"),),
    "separate": (("fixed",), ("fields",), ("years",)),
}


class SamplerError(RuntimeError):
    """Non-finite values produced by a Gibbs block; ``dump`` holds the offending state."""

    def __init__(self, block, message, dump=None):
        super().__init__(f"block {block}: {message}")
        self.block = block
        self.dump = dump or {}


class SamplerContext:
    """Data-dependent constants shared by every sweep of every chain."""

    def __init__(self, data: ModelData, priors: PriorConfig = PriorConfig(),
                 config: McmcConfig = McmcConfig()):
        if data.decay is None:
            raise ValueError("data has no decay parameter (need >= 2 stations)")
        self.data, self.priors, self.config = data, priors, config
        n, T, L = data.Y.shape
        self.n, self.T, self.L = n, T, L
        self.elev = data.elev
        self.harm = harmonics(data.season)
        self.t_raw = np.arange(1, T + 1, dtype=float)
        self.t_mid = (T + 1) / 2.0
        self.tc = self.t_raw - self.t_mid

        R = np.exp(-data.decay * data.dist)
        Lr, self.r_jitter = cholesky_jitter(R, name="station correlation")
        self.Rinv = linalg.cho_solve((Lr, True), np.eye(n))
        self.Rinv = 0.5 * (self.Rinv + self.Rinv.T)
        self.Rinv_diag = np.diag(self.Rinv).copy()
        self.one_Rinv_one = float(self.Rinv.sum())

        self.cond, self.marg = day_masks(data.Y)
        Yz = np.where(np.isfinite(data.Y), data.Y, 0.0)
        self.Yz = Yz
        self.Yprev = np.zeros_like(Yz)
        self.Yprev[..., 1:] = Yz[..., :-1]
        self.harm_prev = np.zeros_like(self.harm)
        self.harm_prev[1:] = self.harm[:-1]

        # coefficient layout of the linear mean effects
        o = 0
        self.ix_fixed = np.arange(o, o + 5); o += 5
        self.ix_b0 = np.arange(o, o + n); o += n
        self.ix_a = np.arange(o, o + n); o += n
        self.ix_psi = np.arange(o, o + T - 1); o += T - 1
        self.ix_eta = np.arange(o, o + T * n).reshape(T, n); o += T * n
        self.ix_eta0 = np.arange(o, o + T * n).reshape(T, n); o += T * n
        self.p = o
        dummy = o  # receives the pinned psi[0]; dropped after assembly
        groups = {
            "fixed": self.ix_fixed,
            "fields": np.concatenate([self.ix_b0, self.ix_a]),
            "years": np.concatenate([self.ix_psi, self.ix_eta.ravel(), self.ix_eta0.ravel()]),
        }
        self.blocks = [np.sort(np.concatenate([groups[g] for g in blk])) for blk in BLOCKS[config.blocking]]
        self.block_names = ["+".join(blk) for blk in BLOCKS[config.blocking]]

        ii, tt = np.meshgrid(np.arange(n), np.arange(T), indexing="ij")
        ii, tt = ii.ravel(), tt.ravel()
        psi_col = np.where(tt >= 1, self.ix_psi[np.maximum(tt - 1, 0)], dummy)
        J = np.column_stack([
            np.full(n * T, 1), np.full(n * T, 2), np.full(n * T, 0), np.full(n * T, 3), np.full(n * T, 4),
            self.ix_b0[ii], self.ix_a[ii], psi_col, self.ix_eta[tt, ii], self.ix_eta0[tt, ii],
        ])
        K = np.zeros((n * T, 3, 10))
        K[:, 0, 0] = 1.0
        K[:, 1, 1] = 1.0
        K[:, 2, 2:] = np.column_stack([
            np.ones(n * T), self.elev[ii], self.tc[tt], np.ones(n * T), self.t_raw[tt],
            np.ones(n * T), np.ones(n * T), np.ones(n * T),
        ])
        self.J, self.K = J, K
        self._flat = (J[:, :, None] * (self.p + 1) + J[:, None, :]).ravel()

        # prior precision of (beta0c, beta1, beta2, beta3, alpha): the N(0, sd^2)
        # prior sits on the uncentered intercept beta0 = beta0c - alpha * t_mid
        M = np.eye(5)
        M[0, 4] = -self.t_mid
        self.fixed_prec = M.T @ M / priors.normal_sd_fixed ** 2

    # -- linear mean effects ------------------------------------------------
    def sufficient_stats(self, rho, sigma2):
        """Per (station, year) 3x3 precision and 3-vector for (beta1, beta2, g)."""
        r = np.asarray(rho)[:, None, None]
        s = np.sqrt(1.0 - r * r)
        cond, marg = self.cond, self.marg
        ytil = np.where(cond, self.Yz - r * self.Yprev, np.where(marg, s * self.Yz, 0.0))
        xh = np.where(cond[..., None], self.harm[None, None] - r[..., None] * self.harm_prev[None, None],
                      np.where(marg[..., None], s[..., None] * self.harm[None, None], 0.0))
        c = np.where(cond, 1.0 - r, np.where(marg, s, 0.0))
        X = np.concatenate([xh, c[..., None]], axis=-1)
        w = 1.0 / np.asarray(sigma2)
        M = np.einsum("itla,itlb->itab", X, X) * w[:, None, None, None]
        v = np.einsum("itla,itl->ita", X, ytil) * w[:, None, None]
        return M.reshape(-1, 3, 3), v.reshape(-1, 3)

    def data_precision(self, rho, sigma2):
        """Likelihood precision matrix and linear term over the ``p`` mean effects."""
        M, v = self.sufficient_stats(rho, sigma2)
        blocks = np.einsum("kai,kab,kbj->kij", self.K, M, self.K)
        rhs = np.einsum("kai,ka->ki", self.K, v)
        q = self.p + 1
        Q = np.bincount(self._flat, weights=blocks.ravel(), minlength=q * q).reshape(q, q)
        b = np.bincount(self.J.ravel(), weights=rhs.ravel(), minlength=q)
        return Q[:-1, :-1], b[:-1]

    def prior_precision(self, var: dict) -> np.ndarray:
        P = np.zeros((self.p, self.p))
        f = self.ix_fixed
        P[np.ix_(f, f)] = self.fixed_prec
        P[np.ix_(self.ix_b0, self.ix_b0)] = self.Rinv / var["s2_beta0"]
        P[np.ix_(self.ix_a, self.ix_a)] = self.Rinv / var["s2_alpha"]
        P[self.ix_psi, self.ix_psi] = 1.0 / var["s2_psi"]
        for t in range(self.T):
            e = self.ix_eta[t]
            P[np.ix_(e, e)] = self.Rinv / var["s2_eta"]
        e0 = self.ix_eta0.ravel()
        P[e0, e0] = 1.0 / var["s2_0"]
        return P

    def posterior_precision(self, state: "ChainState"):
        Q, b = self.data_precision(rho_from_z(state.z_rho), np.exp(state.z_sigma))
        return Q + self.prior_precision(state.var), b

    def linear_conditional(self, state, idx, P=None, b=None):
        """Mean and covariance of the mean effects ``idx`` given everything else."""
        if P is None:
            P, b = self.posterior_precision(state)
        rest = np.setdiff1d(np.arange(self.p), idx)
        Pss = P[np.ix_(idx, idx)]
        rhs = b[idx] - P[np.ix_(idx, rest)] @ state.theta[rest]
        L, _ = cholesky_jitter(Pss, name="mean-effect precision")
        mean = linalg.cho_solve((L, True), rhs)
        return mean, linalg.cho_solve((L, True), np.eye(len(idx)))

    def sample_linear(self, state, idx, rng, P, b):
        rest = np.setdiff1d(np.arange(self.p), idx)
        Pss = P[np.ix_(idx, idx)]
        rhs = b[idx] - P[np.ix_(idx, rest)] @ state.theta[rest] if rest.size else b[idx]
        L, _ = cholesky_jitter(Pss, name="mean-effect precision")
        mean = linalg.cho_solve((L, True), rhs)
        z = rng.standard_normal(len(idx))
        return mean + linalg.solve_triangular(L.T, z, lower=False)

    # -- helpers ------------------------------------------------------------
    def unpack(self, theta):
        psi = np.concatenate([[0.0], theta[self.ix_psi]])
        return dict(fixed_c=theta[self.ix_fixed], b0=theta[self.ix_b0], a=theta[self.ix_a],
                    psi=psi, eta=theta[self.ix_eta], eta0=theta[self.ix_eta0])

    def mean_from_theta(self, theta):
        u = self.unpack(theta)
        b0c, b1, b2, b3, al = u["fixed_c"]
        g = (b0c + b3 * self.elev[:, None] + al * self.tc[None, :]
             + u["b0"][:, None] + u["a"][:, None] * self.t_raw[None, :]
             + u["psi"][None, :] + u["eta"].T + u["eta0"].T)
        return g[:, :, None] + (self.harm @ np.array([b1, b2]))[None, None, :]

    def prior_conditional(self, z, i, mean, s2):
        """Mean and variance of site ``i`` of a GP field given the other sites."""
        dz = z - mean
        dot = float(self.Rinv[i] @ dz) - self.Rinv_diag[i] * dz[i]
        return mean - dot / self.Rinv_diag[i], s2 / self.Rinv_diag[i]


@dataclass
class ChainState:
    theta: np.ndarray
    z_rho: np.ndarray
    z_sigma: np.ndarray
    z_rho_mean: float
    z_sigma_mean: float
    var: dict
    steps: np.ndarray                       # (2, n) random-walk scales for z_rho, z_sigma
    accepted: np.ndarray = None             # (2, n) accepted proposals since last reset
    proposed: int = 0
    window_accepted: np.ndarray = None
    window_proposed: int = 0
    n_adapt: int = 0
    iteration: int = 0

    def __post_init__(self):
        n = self.z_rho.shape[0]
        if self.accepted is None:
            self.accepted = np.zeros((2, n))
        if self.window_accepted is None:
            self.window_accepted = np.zeros((2, n))

    def copy(self) -> "ChainState":
        return ChainState(self.theta.copy(), self.z_rho.copy(), self.z_sigma.copy(),
                          self.z_rho_mean, self.z_sigma_mean, dict(self.var), self.steps.copy(),
                          self.accepted.copy(), self.proposed, self.window_accepted.copy(),
                          self.window_proposed, self.n_adapt, self.iteration)

    def to_params(self, ctx: SamplerContext) -> ModelParameters:
        u = ctx.unpack(self.theta)
        b0c, b1, b2, b3, al = (float(x) for x in u["fixed_c"])
        return ModelParameters(
            beta0=b0c - al * ctx.t_mid, beta1=b1, beta2=b2, beta3=b3, alpha=al,
            beta0_field=u["b0"], alpha_field=u["a"], psi=u["psi"], eta=u["eta"], eta0=u["eta0"],
            z_rho=self.z_rho, z_sigma=self.z_sigma,
            z_rho_mean=self.z_rho_mean, z_sigma_mean=self.z_sigma_mean, **self.var)

    @classmethod
    def from_params(cls, params: ModelParameters, ctx: SamplerContext, steps=None) -> "ChainState":
        theta = np.zeros(ctx.p)
        theta[ctx.ix_fixed] = [params.beta0 + params.alpha * ctx.t_mid, params.beta1,
                               params.beta2, params.beta3, params.alpha]
        theta[ctx.ix_b0] = params.beta0_field
        theta[ctx.ix_a] = params.alpha_field
        theta[ctx.ix_psi] = params.psi[1:]
        theta[ctx.ix_eta] = params.eta
        theta[ctx.ix_eta0] = params.eta0
        if steps is None:
            steps = np.vstack([np.full(ctx.n, ctx.config.step_zrho), np.full(ctx.n, ctx.config.step_zsigma)])
        return cls(theta, np.array(params.z_rho), np.array(params.z_sigma), params.z_rho_mean,
                   params.z_sigma_mean, {k: getattr(params, k) for k in VARIANCE_NAMES}, steps)


def initial_state(ctx: SamplerContext, rng: np.random.Generator) -> ChainState:
    """Least-squares start with per-site AR(1) moments, dispersed by ``rng``."""
    Y = ctx.data.Y
    valid = np.isfinite(Y)
    n, T, L = Y.shape
    X = np.stack(np.broadcast_arrays(
        np.ones((n, T, L)), ctx.harm[None, None, :, 0], ctx.harm[None, None, :, 1],
        ctx.elev[:, None, None], ctx.tc[None, :, None]), axis=-1)
    coef, *_ = np.linalg.lstsq(X[valid], Y[valid], rcond=None)
    resid = np.where(valid, Y - X @ coef, np.nan)
    rho = np.empty(n)
    s2 = np.empty(n)
    for i in range(n):
        r = resid[i]
        pair = np.isfinite(r[:, 1:]) & np.isfinite(r[:, :-1])
        x0, x1 = r[:, :-1][pair], r[:, 1:][pair]
        rho[i] = np.clip(np.sum(x0 * x1) / max(np.sum(x0 * x0), 1e-12), -0.95, 0.95) if pair.any() else 0.5
        v = np.nanvar(r) if np.isfinite(r).any() else 1.0
        s2[i] = max(v * (1.0 - rho[i] ** 2), 1e-3)
    theta = np.zeros(ctx.p)
    theta[ctx.ix_fixed] = coef + rng.normal(0.0, 0.1, 5) * np.array([1.0, 0.1, 0.1, 1e-4, 1e-3])
    z_rho = z_from_rho(rho) + rng.normal(0.0, 0.05, n)
    z_sigma = np.log(s2) + rng.normal(0.0, 0.05, n)
    var = dict(s2_beta0=1.0, s2_alpha=1e-3, s2_psi=0.5, s2_eta=0.5,
               s2_zrho=0.1, s2_zsigma=0.1, s2_0=0.5)
    steps = np.vstack([np.full(n, ctx.config.step_zrho), np.full(n, ctx.config.step_zsigma)])
    return ChainState(theta, z_rho, z_sigma, float(z_rho.mean()), float(z_sigma.mean()), var, steps)


def _inv_gamma(rng, shape, rate):
    return rate / rng.gamma(shape)


def variance_conditionals(state: ChainState, ctx: SamplerContext) -> dict:
    """(shape, rate) of the inverse-gamma full conditional of each variance."""
    a0, b0 = ctx.priors.inv_gamma_shape, ctx.priors.inv_gamma_rate
    u = ctx.unpack(state.theta)
    Ri = ctx.Rinv
    n, T = ctx.n, ctx.T
    dr = state.z_rho - state.z_rho_mean
    ds = state.z_sigma - state.z_sigma_mean
    eta = u["eta"]
    return {
        "s2_beta0": (a0 + n / 2, b0 + 0.5 * u["b0"] @ Ri @ u["b0"]),
        "s2_alpha": (a0 + n / 2, b0 + 0.5 * u["a"] @ Ri @ u["a"]),
        "s2_psi": (a0 + (T - 1) / 2, b0 + 0.5 * np.sum(u["psi"][1:] ** 2)),
        "s2_eta": (a0 + n * T / 2, b0 + 0.5 * np.einsum("ti,ij,tj->", eta, Ri, eta)),
        "s2_zrho": (a0 + n / 2, b0 + 0.5 * dr @ Ri @ dr),
        "s2_zsigma": (a0 + n / 2, b0 + 0.5 * ds @ Ri @ ds),
        "s2_0": (a0 + n * T / 2, b0 + 0.5 * np.sum(u["eta0"] ** 2)),
    }


def field_mean_conditional(z, s2: float, prior_sd: float, ctx: SamplerContext) -> tuple[float, float]:
    """Normal full conditional (mean, variance) of the constant mean of a GP field."""
    prec = 1.0 / prior_sd ** 2 + ctx.one_Rinv_one / s2
    return float(ctx.Rinv.sum(axis=0) @ z) / s2 / prec, 1.0 / prec


def sample_field_mean(z, s2: float, prior_sd: float, ctx: SamplerContext, rng) -> float:
    m, v = field_mean_conditional(z, s2, prior_sd, ctx)
    return m + math.sqrt(v) * rng.standard_normal()


def _site_lp(rho, s2, st):
    """Scalar AR(1) log-likelihood for one site (stats tuple)."""
    n_marg, s_marg, n_cond, s00, s01, s11 = st
    one_m = 1.0 - rho * rho
    if not one_m > 0.0 or not s2 > 0.0:
        return -math.inf
    quad = one_m * s_marg + s00 - 2.0 * rho * s01 + rho * rho * s11
    lp = -0.5 * (n_marg + n_cond) * (LOG2PI + math.log(s2)) - 0.5 * quad / s2
    if n_marg:
        lp += 0.5 * n_marg * math.log(one_m)
    return lp


def metropolis_site(z, i, which, stats, other, cm, cv, step, rng):
    """One random-walk Metropolis update of ``z[i]``; returns True if accepted.

    ``which`` is 0 for z_rho (``other`` = sigma2 at the site) and 1 for
    z_sigma (``other`` = rho at the site).  The target is the site's AR(1)
    likelihood times the Gaussian prior conditional N(cm, cv).
    """
    cur = z[i]
    prop = cur + step * rng.standard_normal()
    log_u = math.log(rng.random())

    def lp(v):
        if which == 0:
            ll = _site_lp(math.tanh(0.5 * v), other, stats)
        else:
            ll = _site_lp(other, math.exp(v), stats)
        return ll - 0.5 * (v - cm) ** 2 / cv

    lp_cur, lp_prop = lp(cur), lp(prop)
    if math.isnan(lp_prop) or math.isnan(lp_cur):
        raise SamplerError("z_rho" if which == 0 else "z_sigma", f"NaN log-posterior at site {i}",
                           {"site": i, "current": cur, "proposal": prop, "stats": stats})
    if log_u < lp_prop - lp_cur:
        z[i] = prop
        return True
    return False


def _check(block, **arrays):
    for k, v in arrays.items():
        if not np.all(np.isfinite(v)):
            raise SamplerError(block, f"non-finite values in {k}", {k: np.asarray(v).tolist()})


def gibbs_sweep(state: ChainState, ctx: SamplerContext, rng: np.random.Generator,
                adapt: bool = False) -> ChainState:
    """One full sweep over every block; returns the updated copy of ``state``."""
    s = state.copy()
    s.iteration += 1

    # (a-c) linear mean effects
    P, b = ctx.posterior_precision(s)
    _check("precision", P=P, b=b)
    for name, idx in zip(ctx.block_names, ctx.blocks):
        s.theta[idx] = ctx.sample_linear(s, idx, rng, P, b)
        _check(name, theta=s.theta[idx])

    # (d) variances
    for k, (shape, rate) in variance_conditionals(s, ctx).items():
        s.var[k] = float(_inv_gamma(rng, shape, rate))
        _check(k, value=s.var[k])
        if not s.var[k] > 0:
            raise SamplerError(k, "variance underflow", {"shape": shape, "rate": rate})

    # (e) autocorrelation and variance fields
    anom = ctx.data.Y - ctx.mean_from_theta(s.theta)
    st = anomaly_stats(anom, ctx.cond, ctx.marg)
    site_stats = list(zip(*(st[k].tolist() for k in ("n_marg", "s_marg", "n_cond", "s00", "s01", "s11"))))
    for i in range(ctx.n):
        cm, cv = ctx.prior_conditional(s.z_rho, i, s.z_rho_mean, s.var["s2_zrho"])
        ok = metropolis_site(s.z_rho, i, 0, site_stats[i], math.exp(s.z_sigma[i]), cm, cv, s.steps[0, i], rng)
        s.accepted[0, i] += ok
        s.window_accepted[0, i] += ok
    for i in range(ctx.n):
        cm, cv = ctx.prior_conditional(s.z_sigma, i, s.z_sigma_mean, s.var["s2_zsigma"])
        ok = metropolis_site(s.z_sigma, i, 1, site_stats[i], math.tanh(0.5 * s.z_rho[i]), cm, cv,
                             s.steps[1, i], rng)
        s.accepted[1, i] += ok
        s.window_accepted[1, i] += ok
    s.proposed += 1
    s.window_proposed += 1

    s.z_rho_mean = sample_field_mean(s.z_rho, s.var["s2_zrho"], ctx.priors.normal_sd_zrho, ctx, rng)
    s.z_sigma_mean = sample_field_mean(s.z_sigma, s.var["s2_zsigma"], ctx.priors.normal_sd_zsigma, ctx, rng)
    _check("z fields", z_rho=s.z_rho, z_sigma=s.z_sigma, means=[s.z_rho_mean, s.z_sigma_mean])

    if adapt and s.window_proposed >= ctx.config.adapt_window:
        _adapt(s, ctx.config.target_accept)
    return s


def _adapt(s: ChainState, target: float) -> None:
    s.n_adapt += 1
    rate = s.window_accepted / s.window_proposed
    gain = 1.0 / math.sqrt(s.n_adapt)
    s.steps *= np.exp(gain * (rate - target) * 2.0)
    s.window_accepted[:] = 0.0
    s.window_proposed = 0


@dataclass
class ChainResult:
    draws: list
    accept_burn: np.ndarray
    accept_post: np.ndarray
    steps: np.ndarray
    extra: dict = field(default_factory=dict)


def run_chain(ctx: SamplerContext, rng: np.random.Generator, state: ChainState | None = None,
              callback=None) -> ChainResult:
    cfg = ctx.config
    if state is None:
        state = initial_state(ctx, rng)
    draws = []
    accept_burn = np.zeros((2, ctx.n))
    for it in range(1, cfg.n_iter + 1):
        state = gibbs_sweep(state, ctx, rng, adapt=it <= cfg.burn_in)
        if it == cfg.burn_in:
            accept_burn = state.accepted / max(state.proposed, 1)
            state.accepted[:] = 0.0
            state.proposed = 0
        if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            draws.append(state.to_params(ctx))
        if callback is not None:
            callback(it, state)
    accept_post = state.accepted / max(state.proposed, 1)
    return ChainResult(draws, accept_burn, accept_post, state.steps.copy())
