"""Stable evaluation of tilted partition functions, moments and densities.

All integrals over (0, inf) are computed after the substitution x = e^t,
in log space with the exponent maximum subtracted before exponentiation,
so that arbitrarily scaled tilts never overflow.  Panels are refined by
adaptive bisection of Gauss-Legendre rules; tails are truncated where the
log-integrand falls a fixed number of nats below its maximum.

The reference measure is lambda = (1/Z) exp(-phi_1(x)) dx, so a tilt
vector p corresponds to the Lebesgue density

    x  |->  exp(c_1 phi_1(x) + ... + c_k phi_k(x)) / Z_tilde,

with Lebesgue coefficients c_1 = p_1 - 1 and c_i = p_i for i >= 2.
"""

import functools
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DomainError, MomentDivergence, QuadratureError

__all__ = [
    "QuadratureParams",
    "TiltedDensity",
    "in_domain",
    "log_partition",
    "moments",
    "covariance",
    "tilted_density",
    "density_at",
    "log_density_at",
    "cdf",
    "quantile",
    "log_prob_interval",
    "lebesgue_coefficients",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)


@dataclass(frozen=True)
class QuadratureParams:
    """Tolerances and budgets for the adaptive integrator."""

    rel_tol: float = 1e-10
    panel_budget: int = 4000
    tail_cut_nats: float = 60.0
    cdf_panels: int = 1024

    def __post_init__(self):
        if not (0.0 < self.rel_tol <= 1e-4):
            raise ArgumentError("rel_tol must lie in (0, 1e-4]")


_DEFAULT_PARAMS = QuadratureParams()


def lebesgue_coefficients(obs_set, p):
    """Coefficients of the phi_i in the Lebesgue exponent of the tilt."""
    c = np.array(p, dtype=float)
    if c.shape != (obs_set.k,):
        raise ArgumentError("tilt vector must have length k=%d" % obs_set.k)
    c[0] -= 1.0
    return c


def in_domain(obs_set, p):
    """Lexicographic finiteness condition for the log-partition function.

    True iff p_k < 0, or p_k = 0 and p_{k-1} < 0, ..., or all of
    p_k, ..., p_2 are zero and p_1 < 1.  Strict inequalities throughout.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (obs_set.k,):
        raise ArgumentError("tilt vector must have length k=%d" % obs_set.k)
    for i in range(obs_set.k - 1, 0, -1):
        if p[i] < 0.0:
            return True
        if p[i] != 0.0:
            return False
    return p[0] < 1.0


def _log_weight(obs_set, c, extra_logs, t):
    """Log-integrand in t-space: sum_i c_i phi_i(e^t) + t (+ extra logs).

    extra_logs is a list of observable indices whose log-value is added,
    used for moment numerators; non-finite values are treated as -inf
    (the exponent has decayed past floating-point range).
    """
    x = np.exp(t)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        g = np.array(t, dtype=float, copy=True)
        for i, ci in enumerate(c):
            if ci != 0.0:
                g = g + ci * obs_set.items[i].eval(x)
        for i in extra_logs:
            g = g + np.log(obs_set.items[i].eval(x))
    return np.where(np.isnan(g), -np.inf, g)


def _bracket(gfun, cut_nats, divergence_check=False):
    """Find [t_lo, t_hi] containing all t with g(t) > max(g) - cut_nats."""
    lo, hi = -80.0, 60.0
    for _ in range(4):
        ts = np.linspace(lo, hi, 2801)
        gs = gfun(ts)
        gmax = np.max(gs)
        if not np.isfinite(gmax):
            raise QuadratureError("log-integrand has no finite maximum")
        above = gs > gmax - cut_nats
        left_open = above[0]
        right_open = above[-1]
        if not left_open and not right_open:
            idx = np.where(above)[0]
            t_lo = ts[max(idx[0] - 1, 0)]
            t_hi = ts[min(idx[-1] + 1, len(ts) - 1)]
            return t_lo, t_hi, gmax
        if left_open:
            lo *= 2.0
        if right_open:
            hi *= 2.0
    if divergence_check:
        raise MomentDivergence("integrand tail does not decay within probe range")
    raise QuadratureError("could not bracket the integrand support")


def _gl_panel(gfun, gmax, lo, hi):
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    vals = np.exp(gfun(mid + half * _GL_NODES) - gmax)
    return half * float(np.dot(_GL_WEIGHTS, vals))


def _adaptive_log_integral(gfun, t_lo, t_hi, gmax, params, divergence_check=False):
    """log of integral of exp(g(t)) dt over [t_lo, t_hi], scaled stably.

    The pass is seeded with panels of bounded width: a narrow interior
    peak hiding inside one wide coarse panel would otherwise produce a
    wildly underestimated error scale and exhaust the panel budget.
    """
    n0 = int(min(1024, max(1, np.ceil((t_hi - t_lo) / 0.25))))
    edges = np.linspace(t_lo, t_hi, n0 + 1)
    seeds = [
        (edges[i], edges[i + 1], _gl_panel(gfun, gmax, edges[i], edges[i + 1]))
        for i in range(n0)
    ]
    coarse = sum(s[2] for s in seeds)
    scale = max(coarse, np.exp(-params.tail_cut_nats))
    tol_abs = params.rel_tol * scale
    total = 0.0
    panels = 0
    stack = [(lo, hi, val, tol_abs / n0) for lo, hi, val in seeds]
    while stack:
        lo, hi, parent, tol = stack.pop()
        panels += 1
        if panels > params.panel_budget:
            raise QuadratureError("panel budget exceeded")
        mid = 0.5 * (lo + hi)
        left = _gl_panel(gfun, gmax, lo, mid)
        right = _gl_panel(gfun, gmax, mid, hi)
        if abs(left + right - parent) <= tol or (hi - lo) < 1e-13:
            total += left + right
        else:
            stack.append((lo, mid, left, 0.5 * tol))
            stack.append((mid, hi, right, 0.5 * tol))
    if total <= 0.0:
        raise QuadratureError("integral underflowed to zero")
    return float(np.log(total) + gmax)


def _log_integral(obs_set, c, extra_logs, params, divergence_check=False):
    gfun = lambda t: _log_weight(obs_set, c, extra_logs, t)
    t_lo, t_hi, gmax = _bracket(gfun, params.tail_cut_nats, divergence_check)
    return _adaptive_log_integral(gfun, t_lo, t_hi, gmax, params, divergence_check)


@functools.lru_cache(maxsize=256)
def _log_base_norm(obs_set, rel_tol):
    """log Z of the reference measure lambda = (1/Z) exp(-phi_1) dx."""
    params = QuadratureParams(rel_tol=rel_tol)
    c = np.zeros(obs_set.k)
    c[0] = -1.0
    return _log_integral(obs_set, tuple(c), (), params)


def _coeffs(obs_set, p):
    return lebesgue_coefficients(obs_set, p)


def log_partition(obs_set, p, params=None):
    """H(p) = log of integral of exp(sum p_i phi_i) d lambda.

    H(0) = 0 exactly by construction: the same integration code path
    evaluates the numerator and the base normalizer.
    """
    params = params or _DEFAULT_PARAMS
    if not in_domain(obs_set, p):
        raise DomainError("tilt %s outside the domain" % (list(p),))
    c = _coeffs(obs_set, p)
    log_num = _log_integral(obs_set, c, (), params)
    return log_num - _log_base_norm(obs_set, params.rel_tol)


def moments(obs_set, p, params=None):
    """First moments E[phi_i] under the tilted density at p."""
    params = params or _DEFAULT_PARAMS
    if not in_domain(obs_set, p):
        raise DomainError("tilt %s outside the domain" % (list(p),))
    c = _coeffs(obs_set, p)
    log_den = _log_integral(obs_set, c, (), params)
    out = np.empty(obs_set.k)
    for i in range(obs_set.k):
        log_num = _log_integral(obs_set, c, (i,), params, divergence_check=True)
        out[i] = np.exp(log_num - log_den)
    return out


def covariance(obs_set, p, params=None):
    """Centered covariance matrix of (phi_1, ..., phi_k) under the tilt."""
    params = params or _DEFAULT_PARAMS
    if not in_domain(obs_set, p):
        raise DomainError("tilt %s outside the domain" % (list(p),))
    c = _coeffs(obs_set, p)
    log_den = _log_integral(obs_set, c, (), params)
    k = obs_set.k
    m = np.empty(k)
    for i in range(k):
        m[i] = np.exp(
            _log_integral(obs_set, c, (i,), params, divergence_check=True) - log_den
        )
    second = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            val = np.exp(
                _log_integral(obs_set, c, (i, j), params, divergence_check=True)
                - log_den
            )
            second[i, j] = second[j, i] = val
    cov = second - np.outer(m, m)
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True, eq=False)
class TiltedDensity:
    """Exponential-family density against Lebesgue measure on (0, inf).

    density(x) = exp(sum_i p_i phi_i(x) - phi_1(x)) / Z_tilde, with
    log_norm = log Z_tilde.  A CDF cache is built once at construction
    (single-threaded warm-up); afterwards cdf/quantile calls are pure.
    """

    set: object
    p: tuple
    log_norm: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def lebesgue_coeffs(self):
        return lebesgue_coefficients(self.set, self.p)


def tilted_density(obs_set, p, params=None):
    """Construct a normalized TiltedDensity, warming its CDF cache."""
    params = params or _DEFAULT_PARAMS
    if not in_domain(obs_set, p):
        raise DomainError("tilt %s outside the domain" % (list(p),))
    c = _coeffs(obs_set, p)
    log_norm = _log_integral(obs_set, c, (), params)
    d = TiltedDensity(set=obs_set, p=tuple(float(v) for v in p), log_norm=log_norm)
    _warm_cdf_cache(d, params)
    return d


def _warm_cdf_cache(d, params):
    c = _coeffs(d.set, d.p)
    gfun = lambda t: _log_weight(d.set, c, (), t)
    t_lo, t_hi, gmax = _bracket(gfun, params.tail_cut_nats + 20.0)
    edges = np.linspace(t_lo, t_hi, params.cdf_panels + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    halves = 0.5 * (edges[1:] - edges[:-1])
    # (panels, nodes) evaluation of the scaled integrand
    tt = mids[:, None] + halves[:, None] * _GL_NODES[None, :]
    vals = np.exp(gfun(tt) - gmax)
    panel_ints = halves * (vals @ _GL_WEIGHTS)
    cum = np.concatenate([[0.0], np.cumsum(panel_ints)])
    total = cum[-1]
    if total <= 0.0:
        raise QuadratureError("CDF cache underflowed")
    d._cache.update(
        {"edges": edges, "cum": cum, "total": total, "gmax": gmax, "c": c}
    )


def _cdf_t(d, tvals):
    """Vectorized CDF evaluated at t = log(x)."""
    cache = d._cache
    edges, cum, total, gmax, c = (
        cache["edges"],
        cache["cum"],
        cache["total"],
        cache["gmax"],
        cache["c"],
    )
    tvals = np.asarray(tvals, dtype=float)
    t = np.clip(tvals, edges[0], edges[-1])
    idx = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(edges) - 2)
    lo = edges[idx]
    mid = 0.5 * (lo + t)
    half = 0.5 * (t - lo)
    tt = mid[..., None] + half[..., None] * _GL_NODES
    gfun = lambda z: _log_weight(d.set, c, (), z)
    vals = np.exp(gfun(tt) - gmax)
    partial = half * (vals @ _GL_WEIGHTS)
    out = (cum[idx] + partial) / total
    out = np.where(tvals <= edges[0], 0.0, out)
    out = np.where(tvals >= edges[-1], 1.0, out)
    return np.clip(out, 0.0, 1.0)


def log_density_at(d, x):
    """Log of the Lebesgue density at x > 0 (vectorized)."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ArgumentError("density support is (0, inf)")
    c = d.lebesgue_coeffs
    g = np.zeros_like(x)
    for i, ci in enumerate(c):
        if ci != 0.0:
            g = g + ci * d.set.items[i].eval(x)
    return g - d.log_norm


def density_at(d, x):
    """Lebesgue density at x > 0 (vectorized)."""
    return np.exp(log_density_at(d, x))


def cdf(d, x):
    """CDF at x (vectorized); uses the warmed panel cache."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ArgumentError("CDF argument must be nonnegative")
    with np.errstate(divide="ignore"):
        t = np.where(x > 0, np.log(np.maximum(x, 1e-300)), -np.inf)
    return _cdf_t(d, t)


def quantile(d, u, params=None):
    """Monotone inverse of the CDF, to 1e-10 absolute tolerance in
    probability (vectorized).  Bisection over the cached panel grid."""
    u_arr = np.asarray(u, dtype=float)
    scalar = u_arr.ndim == 0
    u_arr = np.atleast_1d(u_arr)
    if np.any((u_arr <= 0.0) | (u_arr >= 1.0)):
        raise ArgumentError("quantile argument must lie in (0, 1)")
    edges = d._cache["edges"]
    lo = np.full(u_arr.shape, edges[0])
    hi = np.full(u_arr.shape, edges[-1])
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        fm = _cdf_t(d, mid)
        take_hi = fm < u_arr
        lo = np.where(take_hi, mid, lo)
        hi = np.where(take_hi, hi, mid)
    out = np.exp(0.5 * (lo + hi))
    return float(out[0]) if scalar else out


def log_prob_interval(d, a, b, params=None):
    """log P(a < X < b) under d, computed in log space (no cancellation)."""
    params = params or _DEFAULT_PARAMS
    if not (0.0 <= a < b):
        raise ArgumentError("need 0 <= a < b")
    c = d._cache.get("c")
    if c is None:
        c = d.lebesgue_coeffs
    gfun = lambda t: _log_weight(d.set, c, (), t)
    t_lo = np.log(a) if a > 0 else -80.0
    t_hi = np.log(b) if np.isfinite(b) else 80.0
    ts = np.linspace(t_lo, t_hi, 2001)
    gmax = float(np.max(gfun(ts)))
    if not np.isfinite(gmax):
        raise QuadratureError("interval integrand not finite")
    log_int = _adaptive_log_integral(gfun, t_lo, t_hi, gmax, params)
    return log_int - d.log_norm
