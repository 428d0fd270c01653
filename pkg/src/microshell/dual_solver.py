"""Maximum-entropy dual solves, phase functions and regime classification.

The dual problem minimizes the strictly convex map p |-> H(p) - p.v over
the lexicographic domain of H.  A damped Newton iteration (covariance as
Hessian, Armijo backtracking with factor 0.5) matches moments; boundary
constraints (the trailing free coordinate must stay strictly below its
bound) are enforced by capping the line search so the gap can at most
halve per step.

Regimes:
  EXTRANEOUS   - the reduced problem (last tilt zero) matches the first
                 k-1 moments and the target a_k is at least the reduced
                 k-th moment g2; the last constraint does not tilt the
                 limit marginal and its surplus localizes.
  INTERIOR_S1  - a_k below g2; a full tilt with p_k < 0 matches all k.
  FULL_TILT_S2 - the reduced problem is infeasible but a full tilt exists.
  INADMISSIBLE - a_k at or below the floor g1, or no tilt of any kind.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import quadrature as quad
from .errors import (
    ArgumentError,
    ClassificationInconclusive,
    Infeasible,
    NoFullTilt,
    SolverStall,
)

__all__ = [
    "DualSolution",
    "PhaseReport",
    "solve_reduced",
    "solve_full",
    "g1",
    "g1_closed_form_available",
    "g2",
    "classify",
    "limiting_marginal",
    "REGIMES",
]

REGIMES = ("EXTRANEOUS", "INTERIOR_S1", "FULL_TILT_S2", "INADMISSIBLE")

_MOMENT_TOL = 1e-8
_MAX_ITER = 200
_DRIFT_WINDOW = 20
_MAX_STEP = 5.0


@dataclass(frozen=True)
class DualSolution:
    """A solved tilt with its achieved moments."""

    p: tuple
    achieved: tuple
    log_partition_value: float
    iterations: int
    residual: float


@dataclass(frozen=True)
class PhaseReport:
    regime: str
    g1: Optional[float] = None
    g2: Optional[float] = None
    reduced: Optional[DualSolution] = None
    full: Optional[DualSolution] = None
    notes: tuple = ()


class _BoundaryDrift(Exception):
    """Internal: iterate pinned against the trailing-coordinate bound with
    its moment stuck below target."""


class _AscentDiverged(Exception):
    """Internal: iterate diverged (target outside the reachable moment set
    from below)."""


def _stats(obs_set, p, m, params):
    """H(p), first m moments and m-by-m covariance in one shared pass."""
    c = quad.lebesgue_coefficients(obs_set, p)
    log_den = quad._log_integral(obs_set, c, (), params)
    h = log_den - quad._log_base_norm(obs_set, params.rel_tol)
    mom = np.empty(m)
    for i in range(m):
        mom[i] = np.exp(
            quad._log_integral(obs_set, c, (i,), params, divergence_check=True)
            - log_den
        )
    second = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            second[i, j] = second[j, i] = np.exp(
                quad._log_integral(obs_set, c, (i, j), params, divergence_check=True)
                - log_den
            )
    cov = second - np.outer(mom, mom)
    return h, mom, 0.5 * (cov + cov.T)


def _objective(obs_set, p, targets_m, m, params):
    c = quad.lebesgue_coefficients(obs_set, p)
    log_den = quad._log_integral(obs_set, c, (), params)
    h = log_den - quad._log_base_norm(obs_set, params.rel_tol)
    return h - float(np.dot(p[:m], targets_m))


def _match_prefix(obs_set, targets_m, params, init=None):
    """Match the first m moments with tilt (p_1, ..., p_m, 0, ..., 0).

    The trailing free coordinate p_m must stay strictly below its bound
    (0 for m >= 2, 1 for m == 1, reflecting the reference weight on
    phi_1).  It is optimized through the substitution
    p_m = bound - exp(u), which makes the bound unreachable without
    constraining the step of the remaining coordinates; damped Newton
    with the chain-rule Hessian and Armijo backtracking runs in the
    substituted variables.  Raises _BoundaryDrift when the iterate
    certifies that the m-th target exceeds every reachable m-th moment
    on this face (p_m pinned at the bound with its moment short), and
    _AscentDiverged when the target prefix is unreachable from below.
    """
    k = obs_set.k
    m = len(targets_m)
    targets_m = np.asarray(targets_m, dtype=float)
    bound = 0.0 if m >= 2 else 1.0
    u = np.zeros(m)  # u[:m-1] = p[:m-1]; u[m-1] = log(bound - p_m)
    if init is not None:
        init = np.asarray(init, dtype=float)
        u[: m - 1] = init[: m - 1]
        u[m - 1] = math.log(max(bound - init[m - 1], 1e-12))
    else:
        u[m - 1] = math.log(1e-2) if m >= 2 else 0.0

    def to_p(uvec):
        p = np.zeros(k)
        p[: m - 1] = uvec[: m - 1]
        p[m - 1] = bound - math.exp(uvec[m - 1])
        return p

    p = to_p(u)
    f_cur = _objective(obs_set, p, targets_m, m, params)
    drift_count = 0
    resid_hist = []
    for it in range(1, _MAX_ITER + 1):
        h, mom, cov = _stats(obs_set, p, m, params)
        grad = mom - targets_m
        resid = float(np.max(np.abs(grad)))
        resid_hist.append(resid)
        if resid <= _MOMENT_TOL:
            return p, it, resid
        # chain rule: dp_m/du_m = -e^u
        dpdu = -math.exp(u[m - 1])
        grad_u = grad.copy()
        grad_u[m - 1] *= dpdu
        hess = cov.copy()
        hess[m - 1, :] *= dpdu
        hess[:, m - 1] *= dpdu
        hess[m - 1, m - 1] += grad[m - 1] * dpdu
        # Levenberg damping until the solve gives a descent direction
        lam = 0.0
        for _ in range(30):
            try:
                d = np.linalg.solve(hess + lam * np.eye(m), -grad_u)
            except np.linalg.LinAlgError:
                d = None
            if d is not None and float(np.dot(grad_u, d)) < 0:
                break
            lam = max(2.0 * lam, 1e-8 * max(1.0, float(np.max(np.abs(hess)))))
        else:
            d = -grad_u
        dmax = float(np.max(np.abs(d)))
        if dmax > _MAX_STEP:
            d *= _MAX_STEP / dmax
        gTd = float(np.dot(grad_u, d))
        alpha = 1.0
        accepted = False
        for _ in range(60):
            trial_u = u + alpha * d
            trial_p = to_p(trial_u)
            f_new = _objective(obs_set, trial_p, targets_m, m, params)
            if f_new <= f_cur + 1e-4 * alpha * gTd + 1e-14:
                u, p, f_cur = trial_u, trial_p, f_new
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            drift_count = _DRIFT_WINDOW
        # drift bookkeeping: pressed against the bound (u very negative)
        # with the trailing moment still short of its target
        near_bound = (bound - p[m - 1]) < 1e-9
        pushing = d[m - 1] < 0 and mom[m - 1] < targets_m[m - 1]
        if pushing:
            drift_count += 1
        else:
            drift_count = 0
        plateau = (
            len(resid_hist) > _DRIFT_WINDOW
            and resid_hist[-1] > 0.5 * resid_hist[-_DRIFT_WINDOW]
        )
        if pushing and (near_bound or (drift_count >= _DRIFT_WINDOW and plateau)):
            raise _BoundaryDrift(
                "p_%d pinned at %g with moment %g below target %g"
                % (m, p[m - 1], mom[m - 1], targets_m[m - 1])
            )
        if float(np.max(np.abs(p))) > 1e7 or u[m - 1] > 50.0:
            raise _AscentDiverged("iterate diverged at %s" % (p.tolist(),))
    if drift_count > 0:
        raise _BoundaryDrift("iteration cap with persistent boundary pressure")
    raise SolverStall("no convergence in %d iterations" % _MAX_ITER)


def _solution(obs_set, p, targets, matched, iterations, params):
    achieved = quad.moments(obs_set, p, params)
    h = quad.log_partition(obs_set, p, params)
    resid = float(np.max(np.abs(achieved[:matched] - np.asarray(targets)[:matched])))
    return DualSolution(
        p=tuple(float(v) for v in p),
        achieved=tuple(float(v) for v in achieved),
        log_partition_value=float(h),
        iterations=iterations,
        residual=resid,
    )


def solve_reduced(obs_set, targets, params=None):
    """Match the first k-1 moments with zero k-th tilt.

    Walks down the lexicographic boundary: first an interior solve with
    p_{k-1} < 0; if the iterate drifts onto the face p_{k-1} = 0, the
    face problem is solved with one fewer free coordinate and the
    remaining moment constraints are checked a posteriori.  Raises
    Infeasible when the targets are certifiably unreachable (the prefix
    lies in S2 or outside the admissible set).
    """
    params = params or quad._DEFAULT_PARAMS
    k = obs_set.k
    if k < 2:
        raise ArgumentError("reduced solve needs k >= 2")
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (k - 1,) or np.any(targets <= 0):
        raise ArgumentError("need k-1 positive targets")
    m = k - 1
    best = None
    for level in range(m, 0, -1):
        try:
            p, iters, _ = _match_prefix(obs_set, targets[:level], params)
        except _BoundaryDrift:
            continue
        except _AscentDiverged as exc:
            raise Infeasible("targets unreachable: %s" % exc, best=best) from exc
        sol = _solution(obs_set, p, targets, level, iters, params)
        best = sol
        extra = np.asarray(sol.achieved[level:m]) - targets[level:m]
        if np.all(np.abs(extra) <= 1e-6):
            return sol
        if np.any(extra < -1e-6):
            raise Infeasible(
                "moment %d reachable at most %g on the boundary face, target %g"
                % (
                    int(np.argmax(extra < -1e-6)) + level + 1,
                    sol.achieved[level:m][int(np.argmax(extra < -1e-6))],
                    targets[level:m][int(np.argmax(extra < -1e-6))],
                ),
                best=best,
            )
        raise SolverStall(
            "boundary face overshoots a matched target; no reduced solution found",
            best=best,
        )
    raise Infeasible("all boundary faces drifted; prefix lies in S2", best=best)


def solve_full(obs_set, targets, params=None):
    """Match all k moments with an interior tilt (p_k < 0 for k >= 2,
    p_1 < 1 for k == 1)."""
    params = params or quad._DEFAULT_PARAMS
    k = obs_set.k
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (k,) or np.any(targets <= 0):
        raise ArgumentError("need k positive targets")
    try:
        p, iters, _ = _match_prefix(obs_set, targets, params)
    except _BoundaryDrift as exc:
        raise NoFullTilt(
            "no interior tilt matches all moments (extraneous regime): %s" % exc
        ) from exc
    except _AscentDiverged as exc:
        raise Infeasible("targets unreachable by any tilt: %s" % exc) from exc
    return _solution(obs_set, p, targets, k, iters, params)


def g2(obs_set, targets, params=None):
    """k-th moment of the reduced (zero k-th tilt) solution; the phase
    boundary between the interior and extraneous regimes."""
    sol = solve_reduced(obs_set, targets, params)
    return float(sol.achieved[obs_set.k - 1])


def g1_closed_form_available(obs_set):
    if obs_set.family_tag != "POWERS":
        return False
    e = obs_set.exponents
    return obs_set.k == 2 or (obs_set.k == 3 and e == (1.0, 2.0, 3.0))


def g1(obs_set, targets, params=None):
    """Floor of the k-th moment compatible with the first k-1 moments.

    Closed forms for the POWERS family with k = 2 (Jensen floor
    v_1^(e_2/e_1)) and exponents (1,2,3) (two-point-mass floor
    v_2^2 / v_1).  Otherwise a numerical lower-envelope approximation:
    the k-th tilt is pinned at -t for increasing t and the decreasing
    k-th moments are extrapolated; flagged approximate via
    g1_closed_form_available().
    """
    params = params or quad._DEFAULT_PARAMS
    targets = np.asarray(targets, dtype=float)
    k = obs_set.k
    if targets.shape != (k - 1,):
        raise ArgumentError("g1 takes the first k-1 targets")
    if obs_set.family_tag == "POWERS":
        e = obs_set.exponents
        if k == 2:
            return float(targets[0] ** (e[1] / e[0]))
        if k == 3 and e == (1.0, 2.0, 3.0):
            return float(targets[1] ** 2 / targets[0])
    # generic approximation: pin p_k = -t, match the first k-1 moments
    vals = []
    ts = (1.0, 10.0, 100.0, 1000.0)
    for t in ts:
        vals.append(_pinned_last_moment(obs_set, targets, t, params))
    # Aitken extrapolation of the tail of the decreasing sequence
    e0, e1_, e2_ = vals[-3], vals[-2], vals[-1]
    denom = (e2_ - e1_) - (e1_ - e0)
    if abs(denom) > 1e-14:
        extrap = e2_ - (e2_ - e1_) ** 2 / denom
        if np.isfinite(extrap) and extrap <= e2_:
            return float(extrap)
    return float(e2_)


def _pinned_last_moment(obs_set, targets, t, params):
    """E[phi_k] with p_k fixed at -t and the first k-1 moments matched."""
    k = obs_set.k
    m = k - 1
    p = np.zeros(k)
    p[k - 1] = -t
    f = lambda q: _pin_objective(obs_set, q, targets, t, params)
    f_cur, mom, cov = f(p[:m])
    for _ in range(_MAX_ITER):
        grad = mom - targets
        if float(np.max(np.abs(grad))) <= _MOMENT_TOL:
            break
        try:
            d = np.linalg.solve(cov, -grad)
        except np.linalg.LinAlgError:
            d = np.linalg.solve(cov + 1e-12 * np.eye(m), -grad)
        dmax = float(np.max(np.abs(d)))
        if dmax > _MAX_STEP:
            d *= _MAX_STEP / dmax
        alpha, gTd = 1.0, float(np.dot(grad, d))
        for _ in range(50):
            trial = p[:m] + alpha * d
            f_new, mom_new, cov_new = f(trial)
            if f_new <= f_cur + 1e-4 * alpha * gTd + 1e-14:
                p[:m], f_cur, mom, cov = trial, f_new, mom_new, cov_new
                break
            alpha *= 0.5
    full = p.copy()
    ach = quad.moments(obs_set, full, params)
    return float(ach[k - 1])


def _pin_objective(obs_set, q, targets, t, params):
    k = obs_set.k
    m = k - 1
    p = np.zeros(k)
    p[:m] = q
    p[k - 1] = -t
    h, mom, cov = _stats(obs_set, p, m, params)
    return h - float(np.dot(q, targets)), mom, cov


def classify(obs_set, targets, params=None):
    """Four-way phase classification of a target moment vector."""
    params = params or quad._DEFAULT_PARAMS
    k = obs_set.k
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (k,) or np.any(targets <= 0):
        raise ArgumentError("need k positive targets")
    notes = []

    if k == 1:
        # single constraint: no reduced problem exists, the constraint
        # always binds and no surplus can be shed, mirroring the
        # full-tilt regime
        floor = float(obs_set.items[0].eval(1e-12))
        if targets[0] <= floor:
            return PhaseReport(regime="INADMISSIBLE", g1=floor)
        try:
            full = solve_full(obs_set, targets, params)
        except (Infeasible, NoFullTilt) as exc:
            return PhaseReport(regime="INADMISSIBLE", g1=floor, notes=(str(exc),))
        return PhaseReport(
            regime="FULL_TILT_S2",
            g1=floor,
            full=full,
            notes=("k=1: constraint always binds",),
        )

    prefix = targets[: k - 1]
    g1v = None
    if g1_closed_form_available(obs_set):
        # prefix admissibility for the (1,2,3) family: v2 > v1^2
        if obs_set.k == 3 and prefix[1] <= prefix[0] ** 2:
            return PhaseReport(
                regime="INADMISSIBLE", notes=("prefix outside admissible set",)
            )
        g1v = g1(obs_set, prefix, params)
        if targets[k - 1] <= g1v:
            return PhaseReport(regime="INADMISSIBLE", g1=g1v)

    reduced = None
    try:
        reduced = solve_reduced(obs_set, prefix, params)
    except Infeasible:
        pass
    except SolverStall as exc:
        raise ClassificationInconclusive(
            "reduced solve stalled", reduced=exc.best
        ) from exc

    if reduced is not None:
        g2v = float(reduced.achieved[k - 1])
        if targets[k - 1] >= g2v:
            return PhaseReport(
                regime="EXTRANEOUS", g1=g1v, g2=g2v, reduced=reduced
            )
        try:
            full = solve_full(obs_set, targets, params)
        except NoFullTilt as exc:
            raise ClassificationInconclusive(
                "a_k below g2 but no interior tilt found", reduced=reduced
            ) from exc
        except Infeasible:
            return PhaseReport(
                regime="INADMISSIBLE",
                g1=g1v,
                g2=g2v,
                reduced=reduced,
                notes=("a_k below the reachable floor",),
            )
        return PhaseReport(
            regime="INTERIOR_S1", g1=g1v, g2=g2v, reduced=reduced, full=full
        )

    # reduced infeasible: S2 prefix (or inadmissible)
    try:
        full = solve_full(obs_set, targets, params)
    except (NoFullTilt, Infeasible) as exc:
        return PhaseReport(
            regime="INADMISSIBLE", g1=g1v, notes=("no tilt of any kind: %s" % exc,)
        )
    except SolverStall as exc:
        raise ClassificationInconclusive("full solve stalled", full=exc.best) from exc
    return PhaseReport(regime="FULL_TILT_S2", g1=g1v, full=full)


def limiting_marginal(obs_set, targets, params=None, report=None):
    """Limit law of a single coordinate: the reduced density in the
    extraneous regime (its k-th moment is g2, not a_k), otherwise the
    full-tilt density."""
    params = params or quad._DEFAULT_PARAMS
    if report is None:
        report = classify(obs_set, targets, params)
    if report.regime == "INADMISSIBLE":
        raise Infeasible("no limiting marginal for inadmissible targets")
    sol = report.reduced if report.regime == "EXTRANEOUS" else report.full
    return quad.tilted_density(obs_set, sol.p, params)
