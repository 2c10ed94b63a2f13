"""Two-sided-exit functions under claim-count discounting.

h(x) is the expected value of r^{claims so far} e^{-q tau} on the
event that the surplus climbs from x to the barrier a before staying
below zero for longer than the grace period d. It is built from the
unnormalized solution xi of

    sigma^2/2 xi'' + c xi' - (lam+q) xi
        + lam r [ (f * xi)(x) + xi(0) w_d(x) ] = 0,     xi(0) = 1,

where the w_d term carries the below-zero continuation
xi(z) = xi(0) * Phi_d(-z) for z in (-c d, 0):

    w_d(x) = int_0^inf Phi_d(y) f(y + x) dy.

With sigma = 0 the equation is first order and marches from xi(0)=1;
the equivalent renewal form

    xi = [zeta - (lam r / c) (zeta * w_d)] + (lam r / c) (T_rho f) * xi

(zeta(x) = e^{rho x}) sums by Neumann iteration. With sigma > 0 the
solution family is

    xi = sum_n (2 lam r / sigma^2)^n (beta * T_rho f)^{*n} * phi,
    beta(x) = e^{-(rho + 2c/sigma^2) x},
    phi = (rho + 2c/sigma^2 + p) (zeta*beta) + beta
          - (2 lam r / sigma^2) (zeta*beta*w_d),

with one free slope p = xi'(0) fixed by shooting: the interior
residual of the equation is insensitive to p (any p gives a solution
of the homogeneous-extended family), so the identifying condition is
the slope of the below-zero continuation at 0-, and the reported
residual is the larger of the interior residual and that interface
mismatch. Everything here works on uniform grids via the exponential
panel and Neumann machinery in gridmath.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .gridmath import (
    GridFunction,
    NonConvergenceError,
    convolve_values,
    cumexp,
    convolve_exp,
    derivative,
    dickson,
    dickson_exp,
    golden_min,
    neumann_series,
    neumann_series_exp,
    volterra_march,
)
from .lundberg import lundberg_root
from . import expmodel
from .firstpassage import upcross_table, _phi_sigma_pos

_CACHE = {}


@dataclass(frozen=True)
class WdFunction:
    grid: GridFunction


@dataclass(frozen=True)
class HFunction:
    grid: GridFunction
    hp: GridFunction
    hpp: GridFunction
    a: float
    xi_prime_zero: Optional[float]
    ide_residual: float


def _simpson_weights(n, step):
    """Composite Simpson weights for n uniformly spaced nodes.

    When n is even the last interval gets a trapezoid patch, which keeps
    the rule valid for any node count at step**4 accuracy elsewhere.
    """
    if n < 3:
        w = np.full(n, step)
        if n == 2:
            w *= 0.5
        return w
    m = n if n % 2 == 1 else n - 1
    w = np.zeros(n)
    w[:m] = 1.0
    w[1:m - 1:2] = 4.0
    w[2:m - 1:2] = 2.0
    w[:m] *= step / 3.0
    if m < n:
        w[m - 1] += 0.5 * step
        w[m] += 0.5 * step
    return w


def _u_weight(model):
    """u(d) = int_0^inf Phi_d(y) mu e^{-mu y} dy for exponential claims."""
    mu = model.claims.mu
    d = model.d
    if d == 0:
        return 0.0
    if model.sigma == 0.0:
        return expmodel.u_of_d(model, d)
    rho = lundberg_root(model).rho
    if math.isinf(d):
        return mu / (rho + mu)
    key = (model.key(), "u_weight")
    if key not in _CACHE:
        ystep = 2e-2
        y_max = 40.0 / mu
        ys = np.arange(0.0, y_max + ystep / 2, ystep)
        phi, _, _ = _phi_sigma_pos(model, d, ys)
        wts = _simpson_weights(len(ys), ystep)
        _CACHE[key] = float(np.sum(wts * phi * mu * np.exp(-mu * ys)))
    return _CACHE[key]


def _w_values(model, xs):
    """w_d sampled on the solver grid xs (uniform, starts at 0)."""
    d = model.d
    if d == 0:
        return np.zeros_like(xs)
    if model.claims.kind == "exponential":
        return _u_weight(model) * np.exp(-model.claims.mu * xs)
    # tabulated: quadrature of Phi against the shifted density
    grid = model.claims.grid
    ystep = 2e-2
    ys = np.arange(0.0, grid.hi + ystep / 2, ystep)
    key = (model.key(), "phi_for_w", float(ystep), float(ys[-1]))
    if key not in _CACHE:
        _CACHE[key] = upcross_table(model, d, ys)
    phi = _CACHE[key]
    out = np.zeros_like(xs)
    wts = _simpson_weights(len(ys), ystep)
    for j in range(len(ys)):
        if phi[j] == 0.0:
            continue
        out += wts[j] * phi[j] * model.claims.density(xs + ys[j])
    return out


def w_d(model, x):
    """Below-zero continuation forcing w_d at x (scalar or array)."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < 0):
        raise ValueError("w_d is defined for x >= 0")
    vals = _w_values(model, xs)
    return float(vals[0]) if np.ndim(x) == 0 else vals


def w_d_table(model, x_max, step) -> WdFunction:
    n = int(round(x_max / step))
    xs = step * np.arange(n + 1)
    return WdFunction(grid=GridFunction(0.0, n * step, step, _w_values(model, xs)))


def _density_on(model, xs):
    if model.claims.kind == "exponential":
        mu = model.claims.mu
        return mu * np.exp(-mu * xs)
    return model.claims.density(xs)


def _t_rho_f(model, rho, xs, step):
    """T_rho f on the solver grid."""
    if model.claims.kind == "exponential":
        return dickson_exp(rho, model.claims.mu, xs)
    # resample the density to the solver step over its full support,
    # run the backward recursion there, keep the solver window
    hi = model.claims.grid.hi
    m = int(math.ceil(hi / step))
    full_x = step * np.arange(m + 1)
    fv = model.claims.density(full_x)
    tg = dickson(rho, GridFunction(0.0, m * step, step, fv))
    return tg.values[: len(xs)]


def h_d_sigma0(model, a, step=1e-4) -> HFunction:
    """Exit function for the drift-only model (sigma = 0)."""
    if model.sigma != 0.0:
        raise ValueError("h_d_sigma0 requires sigma = 0")
    if a <= 0:
        raise ValueError("barrier a must be positive")
    lam, c, q, r = model.lam, model.c, model.q, model.r
    rho = lundberg_root(model).rho
    n = max(int(round(a / step)), 8)
    step = a / n
    xs = step * np.arange(n + 1)

    f_res = _density_on(model, xs)
    trf = _t_rho_f(model, rho, xs, step)
    zeta = np.exp(rho * xs)
    w = _w_values(model, xs)

    coeff = lam * r / c
    forcing = zeta - coeff * zeta * cumexp(rho, w, step)
    kern = GridFunction(0.0, n * step, step, trf)
    forc = GridFunction(0.0, n * step, step, forcing)
    try:
        xi = neumann_series(kern, forc, coeff).values
    except NonConvergenceError:
        xi = volterra_march(kern, forc, coeff).values

    # derivatives read off the equation itself, not finite differences
    f_xi = convolve_values(f_res, xi, step)
    xip = ((lam + q) * xi - lam * r * f_xi - lam * r * w) / c
    f_xip = convolve_values(f_res, xip, step)
    if model.claims.kind == "exponential":
        wp = -model.claims.mu * w
    else:
        wp = derivative(GridFunction(0.0, n * step, step, w), 1).values
    xipp = ((lam + q) * xip - lam * r * (f_res * xi[0] + f_xip) - lam * r * wp) / c

    Z = xi[-1]
    gf = GridFunction(0.0, n * step, step, xi / Z)
    hf = HFunction(
        grid=gf,
        hp=gf.with_values(xip / Z),
        hpp=gf.with_values(xipp / Z),
        a=a,
        xi_prime_zero=None,
        ide_residual=0.0,
    )
    res = ide_residual(model, hf)
    return HFunction(grid=hf.grid, hp=hf.hp, hpp=hf.hpp, a=a,
                     xi_prime_zero=None, ide_residual=res)


def _continuation_slope(model):
    """-d/dy Phi_d(y) at y = 0+, the slope the shot solution must meet."""
    d = model.d
    if math.isinf(d):
        return lundberg_root(model).rho
    hstep = 2e-2
    ys = np.array([0.0, hstep, 2 * hstep, 3 * hstep])
    phi, _, _ = _phi_sigma_pos(model, d, ys)
    # one-sided 2nd-order stencil, Phi(0) = 1 exactly
    slope = (-3.0 * phi[0] + 4.0 * phi[1] - phi[2]) / (2.0 * hstep)
    return -slope


def _sigma_pos_pieces(model, a, step):
    """Everything p-independent of the sigma > 0 solve.

    xi depends affinely on the shot slope p, so six Neumann sums give
    xi, xi', xi'' for every p at once:
    xi = A + p B, xi' = C + p D, xi'' = E + p F.
    """
    lam, c, q, r, sigma = model.lam, model.c, model.q, model.r, model.sigma
    rho = lundberg_root(model).rho
    b1 = rho + 2.0 * c / (sigma * sigma)
    gam = 2.0 * lam * r / (sigma * sigma)

    n = max(int(round(a / step)), 8)
    step = a / n
    xs = step * np.arange(n + 1)
    f_res = _density_on(model, xs)
    trf = _t_rho_f(model, rho, xs, step)
    if math.isinf(model.d):
        w = trf.copy()
    else:
        w = _w_values(model, xs)

    beta = np.exp(-b1 * xs)
    erx = np.exp(rho * xs)
    zb = (erx - beta) / (rho + b1)
    dzb = (rho * erx + b1 * beta) / (rho + b1)
    d2zb = (rho * rho * erx - b1 * b1 * beta) / (rho + b1)

    exp_kind = model.claims.kind == "exponential"
    if exp_kind:
        mu = model.claims.mu
        kern = (mu / (rho + mu)) * (np.exp(-mu * xs) - beta) / (b1 - mu)
        bw = convolve_exp(b1, w, step)
    else:
        kern = convolve_exp(b1, trf, step)
        bw = convolve_exp(b1, w, step)
    zbw = erx * cumexp(rho, bw, step)
    dzbw = bw + rho * zbw
    d2zbw = (w - b1 * bw) + rho * dzbw
    kernp = trf - b1 * kern

    phi0 = b1 * zb + beta - gam * zbw
    dphi0 = b1 * dzb - b1 * beta - gam * dzbw
    d2phi0 = b1 * d2zb + b1 * b1 * beta - gam * d2zbw

    def solve(values):
        forc = GridFunction(0.0, n * step, step, values)
        if exp_kind:
            wgt = mu / ((rho + mu) * (b1 - mu))
            return neumann_series_exp([mu, b1], [wgt, -wgt], forc, gam).values
        kg = GridFunction(0.0, n * step, step, kern)
        try:
            return neumann_series(kg, forc, gam).values
        except NonConvergenceError:
            return volterra_march(kg, forc, gam).values

    A = solve(phi0)
    B = solve(zb)
    C = solve(dphi0 + gam * kern)
    D = solve(dzb)
    E = solve(d2phi0 + gam * kernp)
    F = solve(d2zb + gam * kern)

    fA = convolve_values(f_res, A, step)
    fB = convolve_values(f_res, B, step)
    half_s2 = 0.5 * sigma * sigma
    res_base = half_s2 * E + c * C - (lam + q) * A + lam * r * (fA + w)
    res_lin = half_s2 * F + c * D - (lam + q) * B + lam * r * fB

    return {
        "step": step, "xs": xs, "A": A, "B": B, "C": C, "D": D,
        "E": E, "F": F, "res_base": res_base, "res_lin": res_lin,
        "half_s2": half_s2, "n": n,
    }


def _extrap_zero(vals):
    """Quadratic extrapolation of grid samples at 1,2,3 steps to 0+."""
    return 3.0 * vals[1] - 3.0 * vals[2] + vals[3]


def _shoot(model, a, step):
    pieces = _sigma_pos_pieces(model, a, step)
    p_star = _continuation_slope(model)
    lo_i, hi_i = pieces["n"] // 20 + 2, pieces["n"] - 2

    def residual(p):
        interior = float(np.max(np.abs(
            pieces["res_base"][lo_i:hi_i] + p * pieces["res_lin"][lo_i:hi_i])))
        slope0 = _extrap_zero(pieces["C"] + p * pieces["D"])
        interface = pieces["half_s2"] * abs(slope0 - p_star)
        return max(interior, interface)

    lo = 0.2 * p_star if p_star > 0 else p_star - 1.0
    hi = 3.0 * p_star if p_star > 0 else p_star + 1.0
    p_hat, _ = golden_min(residual, lo, hi, tol=1e-10)
    return pieces, p_hat, residual(p_hat), p_star


def shoot_xi_prime_zero(model, a, step=1e-5):
    """Slope xi'(0) selected by residual-minimizing shooting."""
    if model.sigma <= 0.0:
        raise ValueError("shooting applies to sigma > 0 only")
    _, p_hat, res, p_star = _shoot(model, a, step)
    if res > 1e-4:
        raise NonConvergenceError(
            "shooting residual floor %.3e exceeds 1e-4 "
            "(continuation slope %.6f, shot slope %.6f)" % (res, p_star, p_hat),
            last_norm=res,
        )
    return p_hat


def h_d_sigma_pos(model, a, step=1e-5) -> HFunction:
    """Exit function for the diffusion-perturbed model (sigma > 0)."""
    if model.sigma <= 0.0:
        raise ValueError("h_d_sigma_pos requires sigma > 0")
    if a <= 0:
        raise ValueError("barrier a must be positive")
    pieces, p_hat, res, p_star = _shoot(model, a, step)
    if res > 1e-4:
        raise NonConvergenceError(
            "shooting residual floor %.3e exceeds 1e-4 "
            "(continuation slope %.6f, shot slope %.6f)" % (res, p_star, p_hat),
            last_norm=res,
        )
    xi = pieces["A"] + p_hat * pieces["B"]
    xip = pieces["C"] + p_hat * pieces["D"]
    xipp = pieces["E"] + p_hat * pieces["F"]
    Z = xi[-1]
    n, st = pieces["n"], pieces["step"]
    gf = GridFunction(0.0, n * st, st, xi / Z)
    return HFunction(
        grid=gf,
        hp=gf.with_values(xip / Z),
        hpp=gf.with_values(xipp / Z),
        a=a,
        xi_prime_zero=p_hat,
        ide_residual=res,
    )


def ide_residual(model, h: HFunction) -> float:
    """Sup-norm equation residual of a constructed exit function.

    The below-zero continuation h(z) = h(0) Phi_d(-z) enters through
    the w_d term. For sigma = 0 the derivative is re-taken by finite
    differences, making the check independent of how h was built; for
    sigma > 0 the carried analytic derivatives are used, because a
    second difference at the stiff rate rho + 2c/sigma^2 would only
    measure interpolation noise.
    """
    grid = h.grid
    step = grid.step
    xs = grid.x
    lam, c, q, r = model.lam, model.c, model.q, model.r
    f_res = _density_on(model, xs)
    w = _w_values(model, xs)
    conv = convolve_values(f_res, grid.values, step) + grid.values[0] * w
    if model.sigma == 0.0:
        hp = derivative(grid, 1).values
        res = c * hp - (lam + q) * grid.values + lam * r * conv
    else:
        res = (0.5 * model.sigma ** 2 * h.hpp.values + c * h.hp.values
               - (lam + q) * grid.values + lam * r * conv)
    lo = max(2, len(xs) // 100)
    return float(np.max(np.abs(res[lo:-2])))


def h_callable(model, h: HFunction):
    """Whole-line evaluator for an exit function.

    Inside [0, a] the grid is interpolated; on (-c d, 0) the value is
    h(0) times the recovery transform of the deficit; below -c d it is
    zero. Evaluation above the barrier is a contract violation.
    """
    grid = h.grid
    cd = model.c * model.d

    def fun(x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x_arr > grid.hi + 1e-9):
            raise ValueError("h is defined only up to its barrier")
        out = np.zeros_like(x_arr)
        inside = x_arr >= 0
        out[inside] = np.interp(x_arr[inside], grid.x, grid.values)
        neg = (~inside) & (x_arr > -cd)
        if np.any(neg):
            out[neg] = grid.values[0] * upcross_table(model, model.d, -x_arr[neg])
        return float(out[0]) if np.ndim(x) == 0 else out

    return fun
