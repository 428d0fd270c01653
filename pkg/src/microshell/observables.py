"""Constraint observables and validation of their growth assumptions.

An observable set is an ordered family phi_1 < phi_2 < ... < phi_k of
positive, increasing functions on (0, infinity) whose empirical means are
constrained.  The conditions certified here (C1-C4) are:

  C1: each phi_i is positive and strictly increasing,
  C2: integral of exp(-c * phi_i) over (0, inf) is finite for small c > 0,
  C3: there is kappa > 1 with phi_i(x)^kappa < phi_{i+1}(x) for large x,
  C4: there are C, M with C^-1 phi_i^-M < phi_i' < C phi_i^M for large x.

These are asymptotic statements; they are certified on a finite log-spaced
grid with fitted constants, which is the only testable surrogate.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidObservableSet

__all__ = [
    "Observable",
    "ObservableSet",
    "ValidationReport",
    "power_set",
    "default_grid",
    "validate_assumptions",
]


@dataclass(frozen=True)
class Observable:
    """A single constraint function with its derivative."""

    eval: Callable[[float], float]
    deriv: Callable[[float], float]
    label: str

    def __hash__(self):
        return hash((id(self.eval), id(self.deriv), self.label))


@dataclass(frozen=True, eq=False)
class ObservableSet:
    """Ordered family of observables, fastest-growing last.

    For the POWERS family the exponents are recorded so that closed forms
    (phase floor g1, growth exponents gamma) are available; gamma_i is the
    growth exponent of phi_i composed with the inverse of phi_k.
    """

    k: int
    items: tuple
    family_tag: str  # "POWERS" or "CUSTOM"
    exponents: Optional[tuple] = None
    gamma: Optional[tuple] = None

    def __post_init__(self):
        if self.k < 1 or len(self.items) != self.k:
            raise InvalidObservableSet("need k >= 1 observables")
        if self.family_tag == "POWERS" and self.exponents is None:
            raise InvalidObservableSet("POWERS set requires exponents")

    def __eq__(self, other):
        if not isinstance(other, ObservableSet):
            return NotImplemented
        if self.family_tag == "POWERS" and other.family_tag == "POWERS":
            return self.exponents == other.exponents
        return self is other

    def __hash__(self):
        if self.family_tag == "POWERS":
            return hash(("POWERS", self.exponents))
        return hash(("CUSTOM", id(self)))


@dataclass
class ConditionResult:
    passed: bool
    witnesses: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    note: str = ""


@dataclass
class ValidationReport:
    passed: bool
    per_condition: dict  # {"C1": ConditionResult, ...}
    probe_range: tuple = (0.0, 0.0)


def _power_observable(e):
    def f(x, _e=e):
        return x ** _e

    def df(x, _e=e):
        return _e * x ** (_e - 1.0)

    return Observable(eval=f, deriv=df, label="x^%g" % e)


def power_set(exponents):
    """Observable set phi_i(x) = x^{e_i} for strictly increasing e_i > 0."""
    exponents = tuple(float(e) for e in exponents)
    if len(exponents) == 0:
        raise InvalidObservableSet("empty exponent list")
    if any(e <= 0 for e in exponents):
        raise InvalidObservableSet("exponents must be positive")
    if any(b <= a for a, b in zip(exponents, exponents[1:])):
        raise InvalidObservableSet("exponents must be strictly increasing")
    k = len(exponents)
    items = tuple(_power_observable(e) for e in exponents)
    gamma = None
    if k >= 2:
        gamma = tuple(e / exponents[-1] for e in exponents[:-1])
    return ObservableSet(
        k=k, items=items, family_tag="POWERS", exponents=exponents, gamma=gamma
    )


def default_grid(x_max=1e6, n_points=4000):
    """Log-spaced probe grid on (0, x_max]."""
    return np.geomspace(1e-6, x_max, n_points)


def _safe_eval(fn, xs):
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.array([fn(float(x)) for x in xs], dtype=float)
    return vals


def _check_c1(obs, grid):
    res = ConditionResult(passed=True)
    for i, ob in enumerate(obs):
        vals = _safe_eval(ob.eval, grid)
        ders = _safe_eval(ob.deriv, grid)
        ok = np.all(np.isfinite(vals)) and np.all(vals > 0) and np.all(ders > 0)
        if not ok:
            res.passed = False
            bad = np.where(~(np.isfinite(vals) & (vals > 0) & (ders > 0)))[0]
            res.witnesses[ob.label] = float(grid[bad[0]])
    return res


def _check_c2(obs, grid):
    res = ConditionResult(passed=True)
    for ob in obs:
        vals = _safe_eval(ob.eval, grid)
        if not np.all(np.isfinite(vals)):
            res.passed = False
            res.witnesses[ob.label] = "overflow"
            continue
        for c in (0.1, 1.0):
            integrand = np.exp(-c * vals)
            total = np.trapezoid(integrand, grid)
            # the trapezoid on the truncated grid must be finite and the
            # integrand negligible at the right edge (tail controlled)
            if not np.isfinite(total) or integrand[-1] > 1e-10:
                res.passed = False
                res.witnesses[ob.label] = float(grid[-1])
    return res


def _check_c3(obs, grid):
    res = ConditionResult(passed=True)
    top = grid[grid >= np.sqrt(grid[0] * grid[-1])]  # top half in log scale
    kappas = []
    for i in range(len(obs) - 1):
        lo_v = _safe_eval(obs[i].eval, top)
        hi_v = _safe_eval(obs[i + 1].eval, top)
        finite = np.isfinite(lo_v) & np.isfinite(hi_v) & (lo_v > 0)
        if not np.all(finite):
            res.passed = False
            res.witnesses["pair_%d" % i] = "overflow"
            continue

        def holds(kappa):
            with np.errstate(over="ignore"):
                lhs = lo_v ** kappa
            return np.all(np.isfinite(lhs) & (lhs < hi_v))

        # binary search for some kappa in (1, 4]
        lo_k, hi_k = 1.0, 4.0
        found = None
        for _ in range(60):
            mid = 0.5 * (lo_k + hi_k)
            if holds(mid):
                found = mid
                lo_k = mid  # try to enlarge
            else:
                hi_k = mid
            if hi_k - lo_k < 1e-6:
                break
        if found is None or found <= 1.0 + 1e-9:
            res.passed = False
            res.witnesses["pair_%d" % i] = float(top[0])
        else:
            kappas.append(found)
    if kappas:
        res.constants["kappa"] = float(min(kappas))
    return res


def _check_c4(obs, grid):
    res = ConditionResult(passed=True)
    top = grid[grid >= np.sqrt(grid[0] * grid[-1])]
    fitted_M, fitted_C = 0.0, 1.0
    for ob in obs:
        vals = _safe_eval(ob.eval, top)
        ders = _safe_eval(ob.deriv, top)
        ok = np.isfinite(vals) & np.isfinite(ders) & (vals > 1.0) & (ders > 0)
        if not np.any(ok):
            res.passed = False
            res.witnesses[ob.label] = "no usable probe points"
            continue
        if not np.all(np.isfinite(vals) & np.isfinite(ders) & (ders > 0)):
            res.passed = False
            res.witnesses[ob.label] = "overflow"
            continue
        v, d = vals[ok], ders[ok]
        ratio = np.abs(np.log(d)) / np.log(v)
        M = float(np.max(ratio)) + 0.5
        C = 2.0
        with np.errstate(over="ignore"):
            lower = v ** (-M) / C
            upper = C * v ** M  # inf is an acceptable (vacuous) upper bound
        if not np.all((lower < d) & (d < upper)):
            res.passed = False
            res.witnesses[ob.label] = float(top[0])
        fitted_M = max(fitted_M, M)
        fitted_C = max(fitted_C, C)
    res.constants["M"] = fitted_M
    res.constants["C"] = fitted_C
    return res


def validate_assumptions(obs_set, grid=None):
    """Certify conditions C1-C4 for an observable set on a probe grid.

    Overflow at a probe point is reported as a condition failure, never
    raised.  Deterministic given the grid.
    """
    if grid is None:
        grid = default_grid()
    grid = np.asarray(grid, dtype=float)
    obs = obs_set.items
    per = {
        "C1": _check_c1(obs, grid),
        "C2": _check_c2(obs, grid),
        "C3": _check_c3(obs, grid) if obs_set.k >= 2 else ConditionResult(True, note="k=1, vacuous"),
        "C4": _check_c4(obs, grid),
    }
    passed = all(c.passed for c in per.values())
    return ValidationReport(
        passed=passed, per_condition=per, probe_range=(float(grid[0]), float(grid[-1]))
    )
