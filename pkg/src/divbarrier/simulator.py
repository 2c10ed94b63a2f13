"""Monte Carlo oracle for the regulated risk process.

Paths follow x + c t - sum of claims + sigma B_t, reflected at a
barrier (dividends are the reflection amounts), with Parisian ruin:
a path dies once it stays strictly below zero for longer than the
grace period d, the clock restarting whenever the path is >= 0.

With sigma = 0 the simulation is exact and event driven: between
claims the path is a line, so barrier hits, recoveries from deficit
and Parisian deadlines are all explicit. Dividend stream collected at
the barrier over [t1, t2] with k claims so far is worth
r^k c (e^{-q t1} - e^{-q t2}) / q under per-payment discounting.
With sigma > 0 the path takes Euler steps of size dt between claim
epochs (stepping exactly onto each claim time), reflection and
absorption resolved per step, zero crossings of the Parisian clock
placed by linear interpolation within the step.

Two discount semantics are offered because they genuinely differ:
"per_payment" weights each dividend by r^{claims so far at payment},
"terminal_factor" weights the whole discounted stream by r^{claims at
ruin}, counting the claim that starts the fatal excursion. With a
barrier at 0, no grace period and unit claims mean they separate
cleanly: c/(lam+q) versus r c/(lam+q).

Determinism: paths run in fixed chunks of 16384, each chunk seeded by
SeedSequence(seed, spawn_key=(chunk,)) through Philox, and the
reduction runs in chunk order, so results are bit-identical for a
given (model, arguments, config) regardless of how work is scheduled.
"""

import math
from dataclasses import dataclass

import numpy as np

CHUNK = 16384
RETIRE_TOL = 1e-12

_MODES = ("per_payment", "terminal_factor")


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    seed: int = 12345
    dt: float = 1e-4
    t_max: float = None
    discount_mode: str = "per_payment"

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.discount_mode not in _MODES:
            raise ValueError("discount_mode must be one of %s" % (_MODES,))


@dataclass(frozen=True)
class SimEstimate:
    mean: float
    stderr: float
    n_paths: int
    truncation_bias_bound: float


def _horizon(model, cfg):
    if cfg.t_max is not None:
        return cfg.t_max
    # e^{-q t_max} <= 1e-8
    return math.log(1e8) / model.q


def _rng(seed, chunk_idx):
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(chunk_idx,))
    return np.random.Generator(np.random.Philox(ss))


class _ClaimSampler:
    def __init__(self, model):
        self.kind = model.claims.kind
        if self.kind == "exponential":
            self.scale = 1.0 / model.claims.mu
        else:
            grid = model.claims.grid
            xs = grid.x
            cdf = np.concatenate(([0.0], np.cumsum(
                0.5 * (grid.values[1:] + grid.values[:-1]) * grid.step)))
            cdf /= cdf[-1]
            # collapse flat stretches so interp inverts cleanly
            keep = np.concatenate(([True], np.diff(cdf) > 1e-15))
            self.cdf = cdf[keep]
            self.xs = xs[keep]

    def draw(self, rng, n):
        if self.kind == "exponential":
            return rng.exponential(self.scale, n)
        return np.interp(rng.random(n), self.cdf, self.xs)


def _combine(chunks_vals, chunks_bounds, n):
    s = 0.0
    s2 = 0.0
    b = 0.0
    for v in chunks_vals:
        s += float(np.sum(v))
        s2 += float(np.sum(v * v))
    for tb in chunks_bounds:
        b += float(tb)
    mean = s / n
    var = max(s2 - n * mean * mean, 0.0) / (n - 1) if n > 1 else 0.0
    return mean, math.sqrt(var / n), b / n


def _chunk_sizes(n_paths):
    out = []
    left = n_paths
    while left > 0:
        out.append(min(CHUNK, left))
        left -= CHUNK
    return out


def simulate_value(model, a, x, cfg: SimConfig) -> SimEstimate:
    """Expected discounted dividends under a barrier at a, started at x."""
    if a < 0:
        raise ValueError("barrier must be >= 0")
    t_max = _horizon(model, cfg)
    sampler = _ClaimSampler(model)
    terminal = cfg.discount_mode == "terminal_factor"
    vals, bounds = [], []
    for ci, m in enumerate(_chunk_sizes(cfg.n_paths)):
        rng = _rng(cfg.seed, ci)
        if model.sigma == 0.0:
            v, tb = _value_chunk_sigma0(model, a, x, m, rng, sampler,
                                        t_max, terminal)
        else:
            v, tb = _value_chunk_sigma_pos(model, a, x, m, rng, sampler,
                                           t_max, terminal, cfg.dt)
        vals.append(v)
        bounds.append(tb)
    mean, se, bias = _combine(vals, bounds, cfg.n_paths)
    return SimEstimate(mean, se, cfg.n_paths, bias)


def _value_chunk_sigma0(model, a, x0, m, rng, sampler, t_max, terminal):
    lam, c, q, r, d = model.lam, model.c, model.q, model.r, model.d
    x = np.full(m, float(x0))
    t = np.zeros(m)
    K = np.zeros(m, dtype=np.int64)
    s0 = np.full(m, np.nan)  # start of the running sub-zero excursion
    D = np.zeros(m)          # per-payment discounted dividends
    S = np.zeros(m)          # r-free discounted dividends (terminal mode)
    out = np.zeros(m)
    bound_total = 0.0
    lump = max(float(x0) - a, 0.0)
    if lump > 0.0:
        D += lump
        S += lump
        x[:] = a
    if x0 < 0:
        s0[:] = 0.0

    alive = np.ones(m, dtype=bool)
    cq = c / q
    while np.any(alive):
        idx = np.nonzero(alive)[0]
        n = len(idx)
        T = rng.exponential(1.0 / lam, n)
        C = sampler.draw(rng, n)
        xi, ti, Ki, s0i = x[idx], t[idx], K[idx], s0[idx]
        rK = np.power(r, Ki.astype(float))

        up = ~(xi < 0)
        # --- paths at or above zero: drift to the barrier, then pay ---
        if np.any(up):
            ui = np.nonzero(up)[0]
            tb = (a - xi[ui]) / c
            hit = T[ui] >= tb
            h_ = ui[hit]
            if len(h_):
                t1 = ti[h_] + tb[hit]
                t2 = ti[h_] + T[h_]
                seg = cq * (np.exp(-q * t1) - np.exp(-q * t2))
                D[idx[h_]] += rK[h_] * seg
                S[idx[h_]] += seg
                xi[h_] = a - C[h_]
            nh = ui[~hit]
            if len(nh):
                xi[nh] = xi[nh] + c * T[nh] - C[nh]
            ti[ui] += T[ui]
            Ki[ui] += 1
            newneg = up & (xi < 0)
            s0i[newneg] = ti[newneg]

        # --- paths below zero: claim, recovery, or Parisian deadline ---
        dn = ~up
        if np.any(dn):
            di = np.nonzero(dn)[0]
            trec = -xi[di] / c
            tdead = (s0i[di] + d) - ti[di]
            ruin = tdead <= np.minimum(T[di], trec)
            rec = (~ruin) & (trec <= T[di])
            claim = ~(ruin | rec)
            ru = di[ruin]
            if len(ru):
                g = idx[ru]
                out[g] = S[g] * rK[ru] if terminal else D[g]
                alive[g] = False
            rc = di[rec]
            if len(rc):
                ti[rc] += trec[rec]
                xi[rc] = 0.0
                s0i[rc] = np.nan
            cl = di[claim]
            if len(cl):
                xi[cl] = xi[cl] + c * T[cl] - C[cl]
                ti[cl] += T[cl]
                Ki[cl] += 1

        x[idx], t[idx], K[idx], s0[idx] = xi, ti, Ki, s0i

        # --- retire paths whose remaining worth is negligible ---
        live = np.nonzero(alive)[0]
        if len(live):
            rKl = np.power(r, K[live].astype(float))
            future = rKl * cq * np.exp(-q * t[live])
            if terminal:
                drift = rKl * S[live] + future
            else:
                drift = future
            done = (drift < RETIRE_TOL) | (t[live] >= t_max)
            g = live[done]
            if len(g):
                rKg = np.power(r, K[g].astype(float))
                out[g] = S[g] * rKg if terminal else D[g]
                bound_total += float(np.sum(
                    (rKg * S[g] + rKg * cq * np.exp(-q * t[g])) if terminal
                    else rKg * cq * np.exp(-q * t[g])))
                alive[g] = False
    return out, bound_total


def _value_chunk_sigma_pos(model, a, x0, m, rng, sampler, t_max, terminal, dt):
    lam, c, q, r, d = model.lam, model.c, model.q, model.r, model.d
    sig = model.sigma
    x = np.full(m, min(float(x0), a))
    t = np.zeros(m)
    K = np.zeros(m, dtype=np.int64)
    neg_since = np.full(m, np.nan)
    D = np.zeros(m)
    S = np.zeros(m)
    out = np.zeros(m)
    bound_total = 0.0
    lump = max(float(x0) - a, 0.0)
    if lump > 0.0:
        D += lump
        S += lump
    if x0 < 0:
        neg_since[:] = 0.0
    T_next = rng.exponential(1.0 / lam, m)
    alive = np.ones(m, dtype=bool)
    cq = c / q

    while np.any(alive):
        idx = np.nonzero(alive)[0]
        n = len(idx)
        xi, ti = x[idx], t[idx]
        h = np.minimum(dt, np.maximum(T_next[idx] - ti, 0.0))
        Z = rng.standard_normal(n)
        xn = xi + c * h + sig * np.sqrt(h) * Z
        tn = ti + h

        # reflection at the barrier pays the overflow as a dividend,
        # strictly before any claim landing at the step's end
        over = xn > a
        if np.any(over):
            pay = xn[over] - a
            disc = np.exp(-q * tn[over]) * pay
            g = idx[over]
            D[g] += np.power(r, K[g].astype(float)) * disc
            S[g] += disc
            xn[over] = a

        # Parisian clock, part 1: diffusion crossings interpolated
        # within the step while xn is still the pre-claim endpoint
        was = xi < 0
        mid = xn < 0
        enter_diff = (~was) & mid
        if np.any(enter_diff):
            x_lo, x_hi = xi[enter_diff], xn[enter_diff]
            den = x_lo - x_hi
            frac = np.where(np.abs(den) > 0, x_lo / den, 0.0)
            neg_since[idx[enter_diff]] = (ti[enter_diff]
                                          + np.clip(frac, 0, 1) * h[enter_diff])
        leave = was & (~mid)
        if np.any(leave):
            neg_since[idx[leave]] = np.nan

        at_claim = tn >= T_next[idx] - 1e-15
        nc = int(np.count_nonzero(at_claim))
        if nc:
            C = sampler.draw(rng, nc)
            xn[at_claim] -= C
            K[idx[at_claim]] += 1
            T_next[idx[at_claim]] = tn[at_claim] + rng.exponential(1.0 / lam, nc)

        # part 2: claim-caused drops are stamped at the claim instant
        now = xn < 0
        enter_claim = (~mid) & now
        if np.any(enter_claim):
            neg_since[idx[enter_claim]] = tn[enter_claim]
        x[idx], t[idx] = xn, tn

        stay = np.nonzero(alive)[0]
        elapsed = t[stay] - neg_since[stay]
        dead = elapsed >= d
        dead = np.where(np.isnan(elapsed), False, dead)
        g = stay[dead]
        if len(g):
            rKg = np.power(r, K[g].astype(float))
            out[g] = S[g] * rKg if terminal else D[g]
            alive[g] = False

        live = np.nonzero(alive)[0]
        if len(live):
            rKl = np.power(r, K[live].astype(float))
            future = rKl * cq * np.exp(-q * t[live])
            drift = rKl * S[live] + future if terminal else future
            done = (drift < RETIRE_TOL) | (t[live] >= t_max)
            g = live[done]
            if len(g):
                rKg = np.power(r, K[g].astype(float))
                out[g] = S[g] * rKg if terminal else D[g]
                bound_total += float(np.sum(
                    (rKg * S[g] + rKg * cq * np.exp(-q * t[g])) if terminal
                    else rKg * cq * np.exp(-q * t[g])))
                alive[g] = False
    return out, bound_total


def simulate_h(model, a, x, cfg: SimConfig) -> SimEstimate:
    """E[r^N e^{-q tau_a} on reaching a before Parisian ruin], from x."""
    cd = model.c * model.d
    if not (-cd < x <= a) and not (x == a):
        raise ValueError("x must satisfy -c d < x <= a")
    t_max = _horizon(model, cfg)
    sampler = _ClaimSampler(model)
    vals, bounds = [], []
    for ci, m in enumerate(_chunk_sizes(cfg.n_paths)):
        rng = _rng(cfg.seed, ci)
        if model.sigma == 0.0:
            v, tb = _h_chunk_sigma0(model, a, x, m, rng, sampler, t_max)
        else:
            v, tb = _h_chunk_sigma_pos(model, a, x, m, rng, sampler,
                                       t_max, cfg.dt)
        vals.append(v)
        bounds.append(tb)
    mean, se, bias = _combine(vals, bounds, cfg.n_paths)
    return SimEstimate(mean, se, cfg.n_paths, bias)


def _h_chunk_sigma0(model, a, x0, m, rng, sampler, t_max):
    lam, c, q, r, d = model.lam, model.c, model.q, model.r, model.d
    x = np.full(m, float(x0))
    t = np.zeros(m)
    K = np.zeros(m, dtype=np.int64)
    s0 = np.full(m, np.nan)
    out = np.zeros(m)
    bound_total = 0.0
    if x0 < 0:
        s0[:] = 0.0
    alive = np.ones(m, dtype=bool)

    while np.any(alive):
        idx = np.nonzero(alive)[0]
        n = len(idx)
        T = rng.exponential(1.0 / lam, n)
        C = sampler.draw(rng, n)
        xi, ti, Ki, s0i = x[idx], t[idx], K[idx], s0[idx]

        up = ~(xi < 0)
        if np.any(up):
            ui = np.nonzero(up)[0]
            tb = (a - xi[ui]) / c
            absorb = T[ui] >= tb
            ab = ui[absorb]
            if len(ab):
                g = idx[ab]
                out[g] = np.power(r, Ki[ab].astype(float)) * np.exp(
                    -q * (ti[ab] + tb[absorb]))
                alive[g] = False
            nh = ui[~absorb]
            if len(nh):
                xi[nh] = xi[nh] + c * T[nh] - C[nh]
                ti[nh] += T[nh]
                Ki[nh] += 1
                newneg = xi[nh] < 0
                s0i[nh[newneg]] = ti[nh[newneg]]

        dn = ~up  # only paths that started this round below zero
        if np.any(dn):
            di = np.nonzero(dn)[0]
            trec = -xi[di] / c
            tdead = (s0i[di] + d) - ti[di]
            ruin = tdead <= np.minimum(T[di], trec)
            rec = (~ruin) & (trec <= T[di])
            claim = ~(ruin | rec)
            ru = di[ruin]
            if len(ru):
                alive[idx[ru]] = False  # value stays 0
            rc = di[rec]
            if len(rc):
                ti[rc] += trec[rec]
                xi[rc] = 0.0
                s0i[rc] = np.nan
            cl = di[claim]
            if len(cl):
                xi[cl] = xi[cl] + c * T[cl] - C[cl]
                ti[cl] += T[cl]
                Ki[cl] += 1

        x[idx], t[idx], K[idx], s0[idx] = xi, ti, Ki, s0i

        live = np.nonzero(alive)[0]
        if len(live):
            worth = np.power(r, K[live].astype(float)) * np.exp(-q * t[live])
            done = (worth < RETIRE_TOL) | (t[live] >= t_max)
            g = live[done]
            if len(g):
                bound_total += float(np.sum(
                    np.power(r, K[g].astype(float)) * np.exp(-q * t[g])))
                alive[g] = False
    return out, bound_total


def _h_chunk_sigma_pos(model, a, x0, m, rng, sampler, t_max, dt):
    lam, c, q, r, d = model.lam, model.c, model.q, model.r, model.d
    sig = model.sigma
    x = np.full(m, float(x0))
    t = np.zeros(m)
    K = np.zeros(m, dtype=np.int64)
    neg_since = np.full(m, np.nan)
    out = np.zeros(m)
    bound_total = 0.0
    if x0 < 0:
        neg_since[:] = 0.0
    if x0 >= a:
        return np.ones(m), 0.0
    T_next = rng.exponential(1.0 / lam, m)
    alive = np.ones(m, dtype=bool)

    while np.any(alive):
        idx = np.nonzero(alive)[0]
        n = len(idx)
        xi, ti = x[idx], t[idx]
        h = np.minimum(dt, np.maximum(T_next[idx] - ti, 0.0))
        Z = rng.standard_normal(n)
        xn = xi + c * h + sig * np.sqrt(h) * Z
        tn = ti + h

        # absorb at the barrier with an interpolated hit time
        hit = xn >= a
        if np.any(hit):
            with np.errstate(invalid="ignore", divide="ignore"):
                frac = (a - xi[hit]) / (xn[hit] - xi[hit])
            frac = np.clip(np.nan_to_num(frac, nan=0.0), 0.0, 1.0)
            t_hit = ti[hit] + frac * h[hit]
            g = idx[hit]
            out[g] = np.power(r, K[g].astype(float)) * np.exp(-q * t_hit)
            alive[g] = False

        go = ~hit
        gi = idx[go]
        xg, tg = xn[go], tn[go]

        was = xi[go] < 0
        mid = xg < 0
        enter_diff = (~was) & mid
        if np.any(enter_diff):
            x_lo, x_hi = xi[go][enter_diff], xg[enter_diff]
            den = x_lo - x_hi
            frac = np.where(np.abs(den) > 0, x_lo / den, 0.0)
            neg_since[gi[enter_diff]] = (ti[go][enter_diff]
                                         + np.clip(frac, 0, 1) * h[go][enter_diff])
        leave = was & (~mid)
        if np.any(leave):
            neg_since[gi[leave]] = np.nan

        at_claim = tg >= T_next[gi] - 1e-15
        nc = int(np.count_nonzero(at_claim))
        if nc:
            C = sampler.draw(rng, nc)
            xg[at_claim] -= C
            K[gi[at_claim]] += 1
            T_next[gi[at_claim]] = tg[at_claim] + rng.exponential(1.0 / lam, nc)

        now = xg < 0
        enter_claim = (~mid) & now
        if np.any(enter_claim):
            neg_since[gi[enter_claim]] = tg[enter_claim]
        x[gi], t[gi] = xg, tg

        stay = np.nonzero(alive)[0]
        elapsed = t[stay] - neg_since[stay]
        dead = np.where(np.isnan(elapsed), False, elapsed >= d)
        alive[stay[dead]] = False  # ruined, value 0

        live = np.nonzero(alive)[0]
        if len(live):
            worth = np.power(r, K[live].astype(float)) * np.exp(-q * t[live])
            done = (worth < RETIRE_TOL) | (t[live] >= t_max)
            g = live[done]
            if len(g):
                bound_total += float(np.sum(
                    np.power(r, K[g].astype(float)) * np.exp(-q * t[g])))
                alive[g] = False
    return out, bound_total


def simulate_upcross(model, y, d, cfg: SimConfig) -> SimEstimate:
    """E[r^N e^{-q tau_y}; tau_y <= d] for first passage from 0 up to y."""
    if y < 0:
        raise ValueError("level y must be >= 0")
    sampler = _ClaimSampler(model)
    vals, bounds = [], []
    for ci, m in enumerate(_chunk_sizes(cfg.n_paths)):
        rng = _rng(cfg.seed, ci)
        if model.sigma == 0.0:
            v, tb = _upcross_chunk_sigma0(model, y, d, m, rng, sampler)
        else:
            v, tb = _upcross_chunk_sigma_pos(model, y, d, m, rng, sampler,
                                             cfg.dt)
        vals.append(v)
        bounds.append(tb)
    mean, se, bias = _combine(vals, bounds, cfg.n_paths)
    return SimEstimate(mean, se, cfg.n_paths, bias)


def _upcross_chunk_sigma0(model, y, d, m, rng, sampler):
    lam, c, q, r = model.lam, model.c, model.q, model.r
    x = np.zeros(m)
    t = np.zeros(m)
    K = np.zeros(m, dtype=np.int64)
    out = np.zeros(m)
    bound_total = 0.0
    if y == 0.0:
        return np.ones(m), 0.0
    alive = np.ones(m, dtype=bool)
    while np.any(alive):
        idx = np.nonzero(alive)[0]
        n = len(idx)
        T = rng.exponential(1.0 / lam, n)
        C = sampler.draw(rng, n)
        xi, ti, Ki = x[idx], t[idx], K[idx]
        ty = (y - xi) / c
        t_left = d - ti
        # arrival wins ties against the deadline (tau <= d succeeds)
        arrive = (ty <= T) & (ty <= t_left)
        timeout = (~arrive) & (t_left <= T) & np.isfinite(t_left)
        claim = ~(timeout | arrive)
        to = idx[timeout]
        alive[to] = False
        ar = idx[arrive]
        if len(ar):
            out[ar] = np.power(r, Ki[arrive].astype(float)) * np.exp(
                -q * (ti[arrive] + ty[arrive]))
            alive[ar] = False
        cl = np.nonzero(claim)[0]
        if len(cl):
            xi[cl] = xi[cl] + c * T[cl] - C[cl]
            ti[cl] += T[cl]
            Ki[cl] += 1
        x[idx], t[idx], K[idx] = xi, ti, Ki
        live = np.nonzero(alive)[0]
        if len(live):
            worth = np.power(r, K[live].astype(float)) * np.exp(-q * t[live])
            done = worth < RETIRE_TOL
            g = live[done]
            if len(g):
                bound_total += float(np.sum(
                    np.power(r, K[g].astype(float)) * np.exp(-q * t[g])))
                alive[g] = False
    return out, bound_total


def _upcross_chunk_sigma_pos(model, y, d, m, rng, sampler, dt):
    lam, c, q, r = model.lam, model.c, model.q, model.r
    sig = model.sigma
    x = np.zeros(m)
    t = np.zeros(m)
    K = np.zeros(m, dtype=np.int64)
    out = np.zeros(m)
    bound_total = 0.0
    if y == 0.0:
        return np.ones(m), 0.0
    cap = d if math.isfinite(d) else 1e6
    T_next = rng.exponential(1.0 / lam, m)
    alive = np.ones(m, dtype=bool)
    while np.any(alive):
        idx = np.nonzero(alive)[0]
        n = len(idx)
        xi, ti = x[idx], t[idx]
        h = np.minimum(dt, np.maximum(T_next[idx] - ti, 0.0))
        Z = rng.standard_normal(n)
        xn = xi + c * h + sig * np.sqrt(h) * Z
        tn = ti + h
        hit = xn >= y
        if np.any(hit):
            with np.errstate(invalid="ignore", divide="ignore"):
                frac = (y - xi[hit]) / (xn[hit] - xi[hit])
            frac = np.clip(np.nan_to_num(frac, nan=0.0), 0.0, 1.0)
            t_hit = ti[hit] + frac * h[hit]
            ok = t_hit <= d
            g = idx[hit]
            out[g[ok]] = np.power(r, K[g[ok]].astype(float)) * np.exp(
                -q * t_hit[ok])
            alive[g] = False
        go = ~hit
        gi = idx[go]
        xg, tg = xn[go], tn[go]
        at_claim = tg >= T_next[gi] - 1e-15
        nc = int(np.count_nonzero(at_claim))
        if nc:
            C = sampler.draw(rng, nc)
            xg[at_claim] -= C
            K[gi[at_claim]] += 1
            T_next[gi[at_claim]] = tg[at_claim] + rng.exponential(1.0 / lam, nc)
        x[gi], t[gi] = xg, tg
        over = t[gi] >= cap
        if np.any(over):
            g = gi[over]
            if not math.isfinite(d):
                bound_total += float(np.sum(
                    np.power(r, K[g].astype(float)) * np.exp(-q * t[g])))
            alive[g] = False
        live = np.nonzero(alive)[0]
        if len(live):
            worth = np.power(r, K[live].astype(float)) * np.exp(-q * t[live])
            g = live[worth < RETIRE_TOL]
            if len(g):
                bound_total += float(np.sum(
                    np.power(r, K[g].astype(float)) * np.exp(-q * t[g])))
                alive[g] = False
    return out, bound_total
