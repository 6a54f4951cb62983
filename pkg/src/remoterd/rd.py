"""Rate-distortion solvers on finite alphabets.

Everything here is alternating minimization over (kernel, marginal) pairs
at a fixed Lagrange multiplier, plus bisection layers that hit distortion
targets.  The solved object is the surrogate problem: minimize I(X;Z)
subject to E[dbar(X,Z)] <= d_s, whose optimum equals the hidden-source
problem at the same target.  Joint variants add a second reproduction and
a second multiplier; the fixed-marginal variant keeps the output law
pinned and needs no alternation at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    Degenerate,
    Infeasible,
    MissingDxTable,
    NotConverged,
    OutOfRange,
)
from .model import SourceModel, d_min_max

RATE_RTOL = 1e-12          # relative change of the rate iterate at convergence
MARGINAL_ATOL = 1e-14      # extra settle condition on the output marginal
SUPPORT_PRUNE = 1e-300     # marginal mass below this is dropped outright
MAX_ITERATIONS = 100000


@dataclass(frozen=True)
class ConditionalKernel:
    """Row-stochastic matrix P(column | row). Rows follow the observation
    alphabet; columns follow the reproduction alphabet (or reproduction
    pairs in row-major (z, y) order for joint problems)."""

    matrix: np.ndarray

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValueError("kernel must be a nonnegative finite 2-d matrix")
        rows = m.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-12):
            raise ValueError("kernel rows must sum to 1 within 1e-12")
        m /= rows[:, None]
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class RDSolution:
    """One solved operating point.

    rate is in nats.  For joint solutions the kernel/marginal columns range
    over reproduction pairs, pair_shape = (|S_hat|, |X_hat|) gives the
    row-major layout, and lambda_x / d_x_achieved are populated.
    """

    kernel: ConditionalKernel
    marginal: np.ndarray
    rate: float
    d_s_achieved: float
    lambda_s: float
    iterations: int
    converged: bool
    d_x_achieved: float = None
    lambda_x: float = None
    pair_shape: tuple = None

    @property
    def is_joint(self) -> bool:
        return self.pair_shape is not None


@dataclass(frozen=True)
class RDCurve:
    """A sweep of solved points along a distortion grid."""

    d_s: np.ndarray
    rate_nats: np.ndarray
    lambda_s: np.ndarray

    def csv_rows(self):
        yield "d_s,rate_nats,lambda_s"
        for d, r, l in zip(self.d_s, self.rate_nats, self.lambda_s):
            yield f"{float(d)!r},{float(r)!r},{float(l)!r}"


# -- core alternating minimization -----------------------------------------


def _tilt(cost: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Kernel rows proportional to q(z) * exp(-cost(x, z)), row-shifted so
    the largest exponent is zero before exponentiation."""
    with np.errstate(divide="ignore"):
        logq = np.where(q > 0.0, np.log(np.where(q > 0.0, q, 1.0)), -np.inf)
    expo = logq[None, :] - cost
    expo = expo - expo.max(axis=1, keepdims=True)
    k = np.exp(expo)
    return k / k.sum(axis=1, keepdims=True)


def _rate_of(p_x: np.ndarray, kernel: np.ndarray, q: np.ndarray) -> float:
    mask = kernel > 0.0
    logk = np.zeros_like(kernel)
    logk[mask] = np.log(kernel[mask])
    logq = np.zeros_like(q)
    nz = q > 0.0
    logq[nz] = np.log(q[nz])
    return float(np.einsum("x,xz,xz->", p_x, kernel, logk - logq[None, :]))


def _ba_cost(p_x: np.ndarray, cost: np.ndarray, max_iter: int):
    """Alternating minimization for exponent -cost.  Returns the final
    (kernel, marginal, rate, iterations, converged)."""
    n_r = cost.shape[1]
    q = np.full(n_r, 1.0 / n_r)          # marginal of the uniform kernel
    rate_prev = np.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        kernel = _tilt(cost, q)
        q_new = p_x @ kernel
        q_new[q_new < SUPPORT_PRUNE] = 0.0
        q_new /= q_new.sum()
        rate = _rate_of(p_x, kernel, q_new)
        rate_settled = abs(rate - rate_prev) < RATE_RTOL * max(abs(rate), 1e-15)
        marginal_settled = np.max(np.abs(q_new - q)) < MARGINAL_ATOL
        q = q_new
        rate_prev = rate
        if rate_settled:
            converged = True
            if marginal_settled:
                break
    # Rebuild the kernel from the settled marginal so the returned pair is
    # an exact tilted match (the optimality identities below hold to float
    # precision instead of to iteration tolerance).
    kernel = _tilt(cost, q)
    rate = _rate_of(p_x, kernel, q)
    return kernel, q, rate, iterations, converged


def ba_fixed_multiplier(model: SourceModel, lambda_s: float,
                        max_iter: int = MAX_ITERATIONS) -> RDSolution:
    """Solve the single-constraint problem at a fixed multiplier.

    Args:
        model: source model.
        lambda_s: nonnegative multiplier on the surrogate distortion.
        max_iter: iteration cap; on hitting it the best iterate is returned
            with converged=False rather than raising.

    Returns:
        RDSolution at this multiplier (rate in nats).
    """
    if lambda_s < 0:
        raise OutOfRange(f"lambda_s must be nonnegative, got {lambda_s!r}")
    dbar = model.surrogate_matrix()
    kernel, q, rate, iters, conv = _ba_cost(model.p_x, lambda_s * dbar, max_iter)
    d_ach = float(np.einsum("x,xz,xz->", model.p_x, kernel, dbar))
    return RDSolution(
        kernel=ConditionalKernel(kernel), marginal=q, rate=rate,
        d_s_achieved=d_ach, lambda_s=float(lambda_s),
        iterations=iters, converged=conv,
    )


def _bisect_multiplier(evaluate, target: float, tol: float, max_steps: int = 220):
    """Bisect a nonincreasing multiplier -> distortion map to hit target.

    evaluate(lam) returns (solution, achieved).  Returns the solution whose
    achieved distortion is within tol of target.
    """
    lo = 0.0
    sol_lo, d_lo = evaluate(lo)
    if abs(d_lo - target) <= tol:
        return sol_lo
    hi = 1.0
    sol_hi, d_hi = evaluate(hi)
    grow = 0
    while d_hi > target:
        hi *= 4.0
        sol_hi, d_hi = evaluate(hi)
        grow += 1
        if grow > 60:
            raise NotConverged(f"could not bracket the target distortion {target!r}")
    if abs(d_hi - target) <= tol:
        return sol_hi
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        sol, d_mid = evaluate(mid)
        if abs(d_mid - target) <= tol:
            return sol
        if d_mid > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(1.0, hi):
            break
    raise NotConverged(
        f"bisection stalled at distortion {d_mid!r} for target {target!r}"
    )


def solve_for_distortion(model: SourceModel, d_s: float,
                         tol: float = 1e-10) -> RDSolution:
    """Solve for a distortion target inside the open feasible interval.

    Bisects the multiplier until |achieved - d_s| <= tol (tol is kept a
    decade under the documented 1e-9 so slackness-pinned identities close).
    """
    lo, hi = d_min_max(model)
    if not (lo < d_s < hi):
        raise OutOfRange(f"d_s={d_s!r} outside the open interval ({lo!r}, {hi!r})")

    def evaluate(lam):
        sol = ba_fixed_multiplier(model, lam)
        if not sol.converged:
            raise NotConverged(f"alternating minimization at lambda={lam!r}")
        return sol, sol.d_s_achieved

    return _bisect_multiplier(evaluate, d_s, tol)


def rd_curve(model: SourceModel, d_s_grid) -> RDCurve:
    grid = np.asarray(d_s_grid, dtype=float)
    sols = [solve_for_distortion(model, float(d)) for d in grid]
    return RDCurve(
        d_s=grid,
        rate_nats=np.array([s.rate for s in sols]),
        lambda_s=np.array([s.lambda_s for s in sols]),
    )


# -- joint problems ---------------------------------------------------------


def _joint_costs(model: SourceModel):
    if model.d_x_table is None:
        raise MissingDxTable("joint solve requires x_hat_symbols and d_x_table")
    dbar = model.surrogate_matrix()
    n_z, n_y = len(model.s_hat), len(model.x_hat)
    dbar_pairs = np.repeat(dbar, n_y, axis=1)
    dx_pairs = np.tile(model.d_x_table, (1, n_z))
    return dbar_pairs, dx_pairs, (n_z, n_y)


def ba_joint(model: SourceModel, lambda_s: float, lambda_x: float,
             max_iter: int = MAX_ITERATIONS) -> RDSolution:
    """Fixed-multiplier solve over reproduction pairs (z, y)."""
    if lambda_s < 0 or lambda_x < 0:
        raise OutOfRange("multipliers must be nonnegative")
    dbar_pairs, dx_pairs, pair_shape = _joint_costs(model)
    cost = lambda_s * dbar_pairs + lambda_x * dx_pairs
    kernel, q, rate, iters, conv = _ba_cost(model.p_x, cost, max_iter)
    d_s_ach = float(np.einsum("x,xz,xz->", model.p_x, kernel, dbar_pairs))
    d_x_ach = float(np.einsum("x,xz,xz->", model.p_x, kernel, dx_pairs))
    return RDSolution(
        kernel=ConditionalKernel(kernel), marginal=q, rate=rate,
        d_s_achieved=d_s_ach, lambda_s=float(lambda_s),
        d_x_achieved=d_x_ach, lambda_x=float(lambda_x),
        iterations=iters, converged=conv, pair_shape=pair_shape,
    )


def _dx_interval(model: SourceModel):
    lo = float(np.dot(model.p_x, model.d_x_table.min(axis=1)))
    hi = float(np.dot(model.p_x, model.d_x_table).min())
    return lo, hi


def degenerate_joint_completion(model: SourceModel, solution: RDSolution) -> RDSolution:
    """Extend a single-constraint solution to a joint one at lambda_x = 0.

    The observation reproduction is the deterministic map y = f(z) that
    minimizes the posterior-averaged d_x per output symbol; it adds no rate
    (Y is a function of Z) and realizes the smallest d_x available without
    touching the solved kernel.  This is the canonical solution on the
    degenerate region where the d_x constraint is slack.
    """
    if model.d_x_table is None:
        raise MissingDxTable("completion requires x_hat_symbols and d_x_table")
    k_z = solution.kernel.matrix
    q_z = solution.marginal
    n_z, n_y = len(model.s_hat), len(model.x_hat)
    # posterior-averaged observation distortion c(z, y) = sum_x P(x|z) d_x(x,y)
    joint_xz = model.p_x[:, None] * k_z
    with np.errstate(invalid="ignore", divide="ignore"):
        post = np.where(q_z[None, :] > 0, joint_xz / np.where(q_z > 0, q_z, 1.0)[None, :], 0.0)
    c = post.T @ model.d_x_table
    f = np.argmin(c, axis=1)
    kernel = np.zeros((len(model.x), n_z * n_y))
    marginal = np.zeros(n_z * n_y)
    for zi in range(n_z):
        col = zi * n_y + int(f[zi])
        kernel[:, col] = k_z[:, zi]
        marginal[col] = q_z[zi]
    d_x_ach = float(sum(q_z[zi] * c[zi, f[zi]] for zi in range(n_z)))
    return RDSolution(
        kernel=ConditionalKernel(kernel), marginal=marginal, rate=solution.rate,
        d_s_achieved=solution.d_s_achieved, lambda_s=solution.lambda_s,
        d_x_achieved=d_x_ach, lambda_x=0.0,
        iterations=solution.iterations, converged=solution.converged,
        pair_shape=(n_z, n_y),
    )


def solve_joint_for_distortions(model: SourceModel, d_s: float, d_x: float,
                                tol: float = 1e-8) -> RDSolution:
    """Solve the two-constraint problem with both constraints binding.

    Nested bisection: the outer loop adjusts lambda_s, the inner loop
    matches the observation distortion via lambda_x.  A pair for which an
    optimal solution leaves one constraint slack is rejected with
    Degenerate naming that constraint: such points belong to a boundary
    where the second multiplier vanishes and no equality solution exists.
    """
    if model.d_x_table is None:
        raise MissingDxTable("joint solve requires x_hat_symbols and d_x_table")
    lo_s, hi_s = d_min_max(model)
    if not (lo_s < d_s < hi_s):
        raise OutOfRange(f"d_s={d_s!r} outside the open interval ({lo_s!r}, {hi_s!r})")
    lo_x, hi_x = _dx_interval(model)
    if not (lo_x < d_x < hi_x):
        raise OutOfRange(f"d_x={d_x!r} outside the open interval ({lo_x!r}, {hi_x!r})")

    # Slack-constraint screens.  Solve each single-constraint problem and
    # complete it with the cheapest deterministic coupling for the other
    # reproduction; if that already meets the other target, the optimum of
    # the pair problem leaves that constraint slack.
    sol_s = solve_for_distortion(model, d_s)
    completion = degenerate_joint_completion(model, sol_s)
    if completion.d_x_achieved <= d_x:
        raise Degenerate(
            f"d_x constraint is slack at the optimum: the d_s-only solution "
            f"already reaches d_x={completion.d_x_achieved!r} <= {d_x!r}",
            constraint="d_x",
        )
    if _best_ds_given_dx_only(model, d_x) <= d_s:
        raise Degenerate(
            "d_s constraint is slack at the optimum", constraint="d_s",
        )

    def inner(lam_s):
        def evaluate(lam_x):
            sol = ba_joint(model, lam_s, lam_x)
            if not sol.converged:
                raise NotConverged(f"joint solve at ({lam_s!r}, {lam_x!r})")
            return sol, sol.d_x_achieved
        return _bisect_multiplier(evaluate, d_x, tol * 0.1)

    def outer(lam_s):
        sol = inner(lam_s)
        return sol, sol.d_s_achieved

    sol = _bisect_multiplier(outer, d_s, tol)
    if abs(sol.d_x_achieved - d_x) > tol:
        raise NotConverged("inner distortion target drifted during the outer solve")
    return sol


def _best_ds_given_dx_only(model: SourceModel, d_x: float) -> float:
    """Smallest surrogate distortion reachable by completing the d_x-only
    solution with a deterministic z = g(y) coupling (no extra rate)."""
    dx = model.d_x_table
    dbar = model.surrogate_matrix()

    def evaluate(lam):
        kernel, q, _rate, _iters, conv = _ba_cost(model.p_x, lam * dx, MAX_ITERATIONS)
        if not conv:
            raise NotConverged(f"observation-only solve at lambda={lam!r}")
        d_ach = float(np.einsum("x,xy,xy->", model.p_x, kernel, dx))
        return (kernel, q), d_ach

    kernel, q = _bisect_multiplier(evaluate, d_x, 1e-9)
    joint_xy = model.p_x[:, None] * kernel
    with np.errstate(invalid="ignore", divide="ignore"):
        post = np.where(q[None, :] > 0, joint_xy / np.where(q > 0, q, 1.0)[None, :], 0.0)
    c = post.T @ dbar            # c(y, z) = E[dbar(X, z) | Y = y]
    return float(np.dot(q, c.min(axis=1)))


# -- fixed output marginal ---------------------------------------------------


def generalized_rd(model: SourceModel, output_marginal, d: float):
    """Minimum divergence D(P_{Z|X} || P_Y | P_X) at a fixed output law.

    The optimizer belongs to the tilted family built on P_Y, so no
    alternation is needed: a single multiplier search on the constraint
    does it.  Returns (rate_nats, lambda_star, ConditionalKernel).
    """
    p_y = np.array(output_marginal, dtype=float)
    if p_y.shape != (len(model.s_hat),) or np.any(p_y < 0) or abs(p_y.sum() - 1.0) > 1e-12:
        raise OutOfRange("output_marginal must be a probability vector on the reproduction alphabet")
    p_y = p_y / p_y.sum()
    dbar = model.surrogate_matrix()
    support = p_y > 0.0
    d_floor = float(np.dot(model.p_x, dbar[:, support].min(axis=1)))
    if d <= d_floor:
        raise Infeasible(
            f"target {d!r} is at or below the fixed-marginal floor {d_floor!r}"
        )

    with np.errstate(divide="ignore"):
        log_py = np.where(support, np.log(np.where(support, p_y, 1.0)), -np.inf)

    def kernel_at(lam):
        expo = log_py[None, :] - lam * dbar
        expo = expo - expo.max(axis=1, keepdims=True)
        k = np.exp(expo)
        return k / k.sum(axis=1, keepdims=True)

    def achieved(lam):
        k = kernel_at(lam)
        return k, float(np.einsum("x,xz,xz->", model.p_x, k, dbar))

    k0, d0 = achieved(0.0)
    if d0 <= d:
        return 0.0, 0.0, ConditionalKernel(k0)

    lo, hi = 0.0, 1.0
    k_hi, d_hi = achieved(hi)
    grow = 0
    while d_hi > d:
        hi *= 4.0
        k_hi, d_hi = achieved(hi)
        grow += 1
        if grow > 60:
            raise NotConverged(f"could not bracket fixed-marginal target {d!r}")
    best = None
    for _ in range(240):
        mid = 0.5 * (lo + hi)
        k_mid, d_mid = achieved(mid)
        if abs(d_mid - d) <= 1e-11:
            best = (mid, k_mid)
            break
        if d_mid > d:
            lo = mid
        else:
            hi = mid
    if best is None:
        raise NotConverged(f"fixed-marginal bisection stalled for target {d!r}")
    lam, k = best
    mask = k > 0
    logk = np.where(mask, np.log(np.where(mask, k, 1.0)), 0.0)
    rate = float(np.einsum("x,xz,xz->", model.p_x, k,
                           np.where(mask, logk - log_py[None, :], 0.0)))
    return rate, lam, ConditionalKernel(k)
