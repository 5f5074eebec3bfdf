"""Parameter containers for the autoregressive space-time temperature model.

The mean surface is

    m[t, l](s) = beta0 + alpha*t + beta1*sin(2*pi*doy_l/365) + beta2*cos(2*pi*doy_l/365)
                 + beta3*elev(s) + b0(s) + a(s)*t + psi[t] + eta[t](s) + eta0[t](s)

and anomalies ``Y - m`` follow a site-wise AR(1) with coefficient
``rho(s) = tanh(z_rho(s)/2)`` and innovation variance
``sigma2(s) = exp(z_sigma(s))``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from ..gp import rho_from_z, sigma2_from_z

FIXED_NAMES = ("beta0", "beta1", "beta2", "beta3", "alpha")
VARIANCE_NAMES = ("s2_beta0", "s2_alpha", "s2_psi", "s2_eta", "s2_zrho", "s2_zsigma", "s2_0")
SITE_FIELDS = ("beta0_field", "alpha_field", "z_rho", "z_sigma")
YEAR_SITE_FIELDS = ("eta", "eta0")


@dataclass(frozen=True, eq=False)
class ModelParameters:
    """One draw of every model unknown at the fitting sites.

    Arrays are indexed by station ``i`` and year ``t - 1``; ``psi[0]`` is the
    pinned first-year effect and is always zero.  ``eta`` is the spatially
    correlated part of the local yearly intercept (variance ``s2_eta``) and
    ``eta0`` its site-independent part (variance ``s2_0``).
    """

    beta0: float
    beta1: float
    beta2: float
    beta3: float
    alpha: float
    beta0_field: np.ndarray
    alpha_field: np.ndarray
    psi: np.ndarray
    eta: np.ndarray
    eta0: np.ndarray
    z_rho: np.ndarray
    z_sigma: np.ndarray
    z_rho_mean: float
    z_sigma_mean: float
    s2_beta0: float
    s2_alpha: float
    s2_psi: float
    s2_eta: float
    s2_zrho: float
    s2_zsigma: float
    s2_0: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray) or isinstance(v, (list, tuple)):
                a = np.array(v, dtype=float)
                a.setflags(write=False)
                object.__setattr__(self, f.name, a)
            else:
                object.__setattr__(self, f.name, float(v))
        n = self.beta0_field.shape[0]
        T = self.psi.shape[0]
        for name in ("alpha_field", "z_rho", "z_sigma"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
        for name in YEAR_SITE_FIELDS:
            if getattr(self, name).shape != (T, n):
                raise ValueError(f"{name} must have shape ({T}, {n})")

    @property
    def n_sites(self) -> int:
        return self.beta0_field.shape[0]

    @property
    def n_years(self) -> int:
        return self.psi.shape[0]

    @property
    def rho(self) -> np.ndarray:
        return rho_from_z(self.z_rho)

    @property
    def sigma2(self) -> np.ndarray:
        return sigma2_from_z(self.z_sigma)

    @property
    def local_intercepts(self) -> np.ndarray:
        return self.eta + self.eta0

    @property
    def fixed(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in FIXED_NAMES])

    def replace(self, **changes) -> "ModelParameters":
        return replace(self, **changes)

    def check(self) -> None:
        """Raise if the draw violates the model's structural invariants."""
        if self.psi[0] != 0.0:
            raise ValueError("psi[0] must be pinned to zero")
        for k in VARIANCE_NAMES:
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")
        r = self.rho
        if not np.all(np.abs(r) < 1):
            raise ValueError("rho outside (-1, 1)")
        if not np.all(self.sigma2 > 0):
            raise ValueError("sigma2 must be positive")

    # flat layout used by the posterior store
    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.append((f.name, tuple(np.shape(v))))
        return out

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(getattr(self, f.name)) for f in fields(self)])

    @classmethod
    def from_vector(cls, vec, layout) -> "ModelParameters":
        kw, pos = {}, 0
        for name, shape in layout:
            size = int(np.prod(shape)) if shape else 1
            chunk = vec[pos:pos + size]
            kw[name] = float(chunk[0]) if not shape else np.array(chunk).reshape(shape)
            pos += size
        if pos != len(vec):
            raise ValueError("vector length does not match layout")
        return cls(**kw)

    def scalar_names(self) -> list[str]:
        """Column names for flat CSV export, e.g. ``eta[3,0]``."""
        names = []
        for name, shape in self.layout():
            if not shape:
                names.append(name)
            else:
                for idx in np.ndindex(*shape):
                    names.append(f"{name}[{','.join(map(str, idx))}]")
        return names


@dataclass(frozen=True)
class PriorConfig:
    """Prior hyperparameters (normal fixed effects, inverse-gamma variances)."""

    normal_sd_fixed: float = 100.0
    inv_gamma_shape: float = 0.1
    inv_gamma_rate: float = 0.1
    normal_sd_zrho: float = 100.0
    normal_sd_zsigma: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"prior {k} must be positive")


@dataclass(frozen=True)
class McmcConfig:
    n_iter: int = 5000
    burn_in: int = 1000
    thin: int = 1
    n_chains: int = 1
    seed: int = 0
    step_zrho: float = 0.1
    step_zsigma: float = 0.1
    adapt_window: int = 50
    target_accept: float = 0.44
    blocking: str = "joint"

    def __post_init__(self):
        if not self.n_iter > self.burn_in >= 0:
            raise ValueError("n_iter must exceed burn_in")
        if self.thin < 1 or self.n_chains < 1 or self.adapt_window < 1:
            raise ValueError("thin, n_chains and adapt_window must be >= 1")
        if (self.n_iter - self.burn_in) % self.thin:
            raise ValueError("n_iter - burn_in must be a multiple of thin")
        if self.blocking not in ("joint", "separate"):
            raise ValueError("blocking must be 'joint' or 'separate'")
        if not (self.step_zrho > 0 and self.step_zsigma > 0):
            raise ValueError("Metropolis step scales must be positive")

    @property
    def draws_per_chain(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin


@dataclass(frozen=True)
class TruthSpec:
    """Generating values for synthetic data; random effects are drawn from their priors."""

    beta0: float = 30.0
    beta1: float = -2.0
    beta2: float = -4.0
    beta3: float = -0.0065
    alpha: float = 0.02
    z_rho_mean: float = float(np.log(1.9 / 0.1))
    z_sigma_mean: float = float(np.log(3.0))
    s2_beta0: float = 1.0
    s2_alpha: float = 1e-4
    s2_psi: float = 0.5
    s2_eta: float = 0.2
    s2_zrho: float = 0.05
    s2_zsigma: float = 0.05
    s2_0: float = 0.1
