"""Model parameters and the claim-size distribution abstraction.

The surplus process is x + c t - (compound Poisson, rate lam) + sigma B_t.
Dividends above a barrier are discounted by e^{-q t} and by r per claim
that has already occurred; d is the Parisian grace period. Everything
downstream is a pure function of a ValidatedModel.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .gridmath import GridFunction, convolve_values, trapezoid


class ModelError(ValueError):
    pass


class NonPositivePremium(ModelError):
    pass


class NegativeLoading(ModelError):
    pass


class RNotInUnitInterval(ModelError):
    pass


class InvalidParameter(ModelError):
    pass


@dataclass(frozen=True)
class ModelParams:
    lam: float          # claim arrival rate
    c: float            # premium rate
    sigma: float        # diffusion volatility
    q: float            # time discount rate
    r: float            # per-claim discount factor, in (0, 1]
    d: float            # Parisian delay (math.inf allowed)


def exp_conv_power(mu, n, x):
    """n-fold self-convolution of an exponential(mu) density.

    mu^n x^{n-1} e^{-mu x} / (n-1)!. n = 0 is a point mass at zero and
    must be special-cased by the caller.
    """
    if n < 1:
        raise ValueError("n = 0 is the point mass at zero; handle it separately")
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    ok = x >= 0
    if np.any(ok):
        xo = x[ok]
        ln = n * math.log(mu) - math.lgamma(n) - mu * xo
        with np.errstate(divide="ignore", invalid="ignore"):
            lx = np.where(xo > 0, (n - 1) * np.log(np.where(xo > 0, xo, 1.0)), 0.0)
        v = np.exp(ln + lx)
        if n == 1:
            out[ok] = v
        else:
            v = np.where(xo > 0, v, 0.0)
            out[ok] = v
    if out.ndim == 0:
        return float(out)
    return out


class ExponentialClaims:
    """Exponential claim sizes with rate mu (mean 1/mu)."""

    kind = "exponential"

    def __init__(self, mu):
        if mu <= 0:
            raise InvalidParameter("claim rate mu must be positive")
        self.mu = float(mu)

    @property
    def mean(self):
        return 1.0 / self.mu

    def density(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= 0, self.mu * np.exp(-self.mu * np.maximum(x, 0.0)), 0.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= 0, -np.expm1(-self.mu * np.maximum(x, 0.0)), 0.0)
        return float(out) if out.ndim == 0 else out

    def laplace(self, s):
        return self.mu / (self.mu + s)

    def conv_power(self, n, x):
        return exp_conv_power(self.mu, n, x)

    def key(self):
        return ("exp", self.mu)


class TabulatedClaims:
    """Claim density on a uniform grid [0, x_max].

    Convolution powers come from repeated grid convolution and are
    cached; point evaluation is linear interpolation.
    """

    kind = "tabulated"

    def __init__(self, grid: GridFunction):
        if abs(grid.lo) > 1e-12:
            raise InvalidParameter("tabulated density must start at 0")
        if np.any(grid.values < -1e-12):
            raise InvalidParameter("tabulated density has negative values")
        mass = grid.trapz()
        if abs(mass - 1.0) > 1e-8:
            raise InvalidParameter("tabulated density mass %.3e is not 1" % mass)
        # crude but conservative tail check: remaining mass under an
        # exponential hugging the last two samples
        tail = grid.values[-1] * grid.step * 10.0 + grid.values[-1] ** 2
        if grid.values[-1] > 0 and tail > 1e-10:
            if grid.values[-1] * grid.step > 1e-10:
                raise InvalidParameter("mass beyond the grid end is not negligible")
        self.grid = grid
        self._powers = {1: grid.values}

    @property
    def mean(self):
        return float(trapezoid(self.grid.x * self.grid.values, dx=self.grid.step))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(
            (x >= 0) & (x <= self.grid.hi),
            np.interp(np.clip(x, 0.0, self.grid.hi), self.grid.x, self.grid.values),
            0.0,
        )
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        cum = np.concatenate(
            [[0.0], np.cumsum(0.5 * self.grid.step * (self.grid.values[1:] + self.grid.values[:-1]))]
        )
        x = np.asarray(x, dtype=float)
        out = np.interp(np.clip(x, 0.0, self.grid.hi), self.grid.x, cum)
        out = np.where(x < 0, 0.0, out)
        return float(out) if out.ndim == 0 else out

    def laplace(self, s):
        w = np.exp(-s * self.grid.x) * self.grid.values
        return float(trapezoid(w, dx=self.grid.step))

    def _power_values(self, n):
        if n not in self._powers:
            prev = self._power_values(n - 1)
            self._powers[n] = convolve_values(self.grid.values, prev, self.grid.step)
        return self._powers[n]

    def conv_power(self, n, x):
        if n < 1:
            raise ValueError("n = 0 is the point mass at zero; handle it separately")
        v = self._power_values(n)
        x = np.asarray(x, dtype=float)
        out = np.where(
            (x >= 0) & (x <= self.grid.hi),
            np.interp(np.clip(x, 0.0, self.grid.hi), self.grid.x, v),
            0.0,
        )
        return float(out) if out.ndim == 0 else out

    def key(self):
        return ("tab", self.grid.lo, self.grid.hi, self.grid.step,
                hash(self.grid.values.tobytes()))


@dataclass(frozen=True)
class ValidatedModel:
    params: ModelParams
    claims: object
    theta: float

    @property
    def lam(self):
        return self.params.lam

    @property
    def c(self):
        return self.params.c

    @property
    def sigma(self):
        return self.params.sigma

    @property
    def q(self):
        return self.params.q

    @property
    def r(self):
        return self.params.r

    @property
    def d(self):
        return self.params.d

    def key(self):
        p = self.params
        return (p.lam, p.c, p.sigma, p.q, p.r, p.d) + self.claims.key()


def validate(params: ModelParams, dist) -> ValidatedModel:
    """Check parameter invariants and compute the safety loading."""
    if params.c <= 0:
        raise NonPositivePremium("premium rate c must be positive")
    if params.lam <= 0:
        raise InvalidParameter("arrival rate must be positive")
    if params.sigma < 0:
        raise InvalidParameter("volatility must be nonnegative")
    if params.q <= 0:
        raise InvalidParameter("discount rate must be positive")
    if not (0.0 < params.r <= 1.0):
        raise RNotInUnitInterval("r must lie in (0, 1]")
    if params.d < 0:
        raise InvalidParameter("Parisian delay must be nonnegative")
    mean_claim = dist.mean
    if mean_claim <= 0:
        raise InvalidParameter("claim mean must be positive")
    theta = params.c / (params.lam * mean_claim) - 1.0
    if theta <= 0:
        raise NegativeLoading(
            "net profit condition violated: c = %.6g <= lam * E[C] = %.6g"
            % (params.c, params.lam * mean_claim)
        )
    return ValidatedModel(params=params, claims=dist, theta=theta)


@lru_cache(maxsize=16)
def _exp_table_cached(mu, step, x_max):
    x = np.arange(round(x_max / step) + 1) * step
    vals = mu * np.exp(-mu * x)
    return GridFunction(lo=0.0, hi=x_max, step=step, values=vals)


def tabulated_exponential(mu, step=1e-3, x_max=30.0):
    """An exponential density sampled onto a grid, for the general
    pipeline; mass beyond x_max must be negligible."""
    if math.exp(-mu * x_max) > 1e-10:
        raise InvalidParameter("x_max too small for the requested mu")
    g = _exp_table_cached(float(mu), float(step), float(x_max))
    vals = g.values / (trapezoid(g.values, dx=g.step))  # renormalize grid mass
    return TabulatedClaims(GridFunction(lo=0.0, hi=x_max, step=step, values=vals))
