"""Tilted informations and dispersions at a solved operating point.

Two random variables organize the second-order analysis.  The direct form

    j_X(x) = -log E[exp(lambda * (d_s - dbar(x, Z*)))]

averages over the optimal output marginal and has mean equal to the rate.
The indirect form replaces the surrogate distortion with the realized
hidden-source distortion,

    jt(s, x, z) = i(x; z) + lambda * ((s - z)^2 - d_s),

and again has mean equal to the rate; its variance exceeds Var[j_X] by
exactly lambda^2 times the average conditional variance of the hidden
distortion (law of total variance, since E[jt | X, Z] recovers j_X on the
support).  Joint operating points carry a second multiplier and replace
single reproductions with (z, y) pairs; only the z component is noisy, so
the same variance split holds with lambda_s alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import LengthMismatch, OutOfRange, ZeroMarginal
from .model import SourceModel
from .rd import RDSolution

_TARGET_ATOL = 1e-8   # how closely the solution must sit on its targets


@dataclass(frozen=True)
class TiltedContext:
    """A model plus a solved point, with the target distortions pinned."""

    model: SourceModel
    solution: RDSolution
    d_s: float
    d_x: float = None

    def __post_init__(self):
        sol = self.solution
        if sol.lambda_s <= 0:
            raise OutOfRange("tilted quantities need an interior point (lambda_s > 0)")
        if abs(sol.d_s_achieved - self.d_s) > _TARGET_ATOL:
            raise OutOfRange(
                f"solution achieves d_s={sol.d_s_achieved!r}, not the target {self.d_s!r}"
            )
        if self.d_x is not None:
            if not sol.is_joint:
                raise OutOfRange("d_x given but the solution is not joint")
            if abs(sol.d_x_achieved - self.d_x) > _TARGET_ATOL:
                raise OutOfRange(
                    f"solution achieves d_x={sol.d_x_achieved!r}, not the target {self.d_x!r}"
                )
        elif sol.is_joint:
            raise OutOfRange("joint solution needs an explicit d_x target")

    @property
    def is_joint(self) -> bool:
        return self.d_x is not None

    def _column(self, z, y=None) -> int:
        zi = self.model.s_hat.index(z)
        if not self.is_joint:
            if y is not None:
                raise OutOfRange("y given for a single-reproduction context")
            return zi
        if y is None:
            raise OutOfRange("joint context needs both z and y")
        n_y = self.solution.pair_shape[1]
        return zi * n_y + self.model.x_hat.index(y)


@dataclass(frozen=True)
class DispersionReport:
    """Exact dispersion summary; identity_residual is the law-of-total-
    variance defect and should sit at float-rounding level."""

    v_tilde: float
    v_direct: float
    cond_var_term: float
    lambda_s: float
    identity_residual: float

    def as_dict(self) -> dict:
        return {
            "v_tilde": self.v_tilde,
            "v_direct": self.v_direct,
            "cond_var_term": self.cond_var_term,
            "lambda_s": self.lambda_s,
            "identity_residual": self.identity_residual,
        }


def info_density(ctx: TiltedContext, x, z, y=None) -> float:
    """log kernel(x -> column) / marginal(column); -inf off the kernel
    support, ZeroMarginal if the marginal itself has no mass there."""
    col = ctx._column(z, y)
    xi = ctx.model.x.index(x)
    q = ctx.solution.marginal[col]
    if q <= 0.0:
        raise ZeroMarginal(f"output marginal vanishes at column {col}")
    k = ctx.solution.kernel.matrix[xi, col]
    if k <= 0.0:
        return float("-inf")
    return float(np.log(k) - np.log(q))


def _exponents(ctx: TiltedContext) -> np.ndarray:
    """Per (x, column) exponent lambda*(d_s - dbar) [+ lambda_x*(d_x - d_x(x,y))]
    plus log-marginal, i.e. the summands of exp(-j_X)."""
    model, sol = ctx.model, ctx.solution
    lam = sol.lambda_s
    if not ctx.is_joint:
        cost = lam * (ctx.d_s - model.surrogate_matrix())
    else:
        n_z, n_y = sol.pair_shape
        dbar = np.repeat(model.surrogate_matrix(), n_y, axis=1)
        dx = np.tile(model.d_x_table, (1, n_z))
        cost = lam * (ctx.d_s - dbar) + sol.lambda_x * (ctx.d_x - dx)
    q = sol.marginal
    with np.errstate(divide="ignore"):
        logq = np.where(q > 0, np.log(np.where(q > 0, q, 1.0)), -np.inf)
    return logq[None, :] + cost


def tilted_direct(ctx: TiltedContext, x) -> float:
    """j_X(x) in nats, evaluated with a max-shifted log-sum-exp."""
    xi = ctx.model.x.index(x)
    return float(-logsumexp(_exponents(ctx)[xi]))


def tilted_direct_joint(ctx: TiltedContext, x) -> float:
    if not ctx.is_joint:
        raise OutOfRange("context is not joint")
    return tilted_direct(ctx, x)


def tilted_indirect(ctx: TiltedContext, s, x, z) -> float:
    """jt(s, x, z): info density plus the lambda-weighted excess of the
    realized hidden distortion over the target."""
    lam = ctx.solution.lambda_s
    dsz = (float(s) - float(z)) ** 2
    return info_density(ctx, x, z) + lam * (dsz - ctx.d_s)


def tilted_indirect_joint(ctx: TiltedContext, s, x, z, y) -> float:
    if not ctx.is_joint:
        raise OutOfRange("context is not joint")
    lam, lam_x = ctx.solution.lambda_s, ctx.solution.lambda_x
    dsz = (float(s) - float(z)) ** 2
    xi = ctx.model.x.index(x)
    dxy = ctx.model.d_x_table[xi, ctx.model.x_hat.index(y)]
    return info_density(ctx, x, z, y) + lam * (dsz - ctx.d_s) + lam_x * (dxy - ctx.d_x)


def tilted_all_direct(ctx: TiltedContext) -> np.ndarray:
    """j_X over the whole observation alphabet (vectorized)."""
    return -logsumexp(_exponents(ctx), axis=1)


def dispersion(ctx: TiltedContext) -> DispersionReport:
    """Exact moments of both tilted informations by full enumeration.

    No sampling is involved: the sums run over every (noise, x, column)
    triple with positive weight, so the report is reproducible to float
    precision and the total-variance identity closes at rounding level.
    """
    model, sol = ctx.model, ctx.solution
    lam = sol.lambda_s
    p_x = model.p_x
    kern = sol.kernel.matrix
    q = sol.marginal
    w_vals, w_probs = model.noise.support, model.noise.probs

    if ctx.is_joint:
        n_z, n_y = sol.pair_shape
        z_vals = np.repeat(model.s_hat.symbols, n_y)
        extra = sol.lambda_x * (np.tile(model.d_x_table, (1, n_z)) - ctx.d_x)
    else:
        z_vals = model.s_hat.symbols
        extra = np.zeros_like(kern)

    j_x = tilted_all_direct(ctx)
    v_direct = float(np.dot(p_x, (j_x - np.dot(p_x, j_x)) ** 2))

    # info densities on the support; zero-weight cells are masked out
    mask = (kern > 0) & (q[None, :] > 0)
    info = np.zeros_like(kern)
    info[mask] = np.log(kern[mask]) - np.log(np.broadcast_to(q, kern.shape)[mask])

    # full enumeration over (x, column, w)
    a = model.phi[:, None] - z_vals[None, :]          # phi(x) - z per cell
    weight_xz = p_x[:, None] * kern
    mean_jt = 0.0
    mean_sq = 0.0
    cond_var = 0.0
    for w, pw in zip(w_vals, w_probs):
        d_real = (a + w) ** 2
        jt = info + lam * (d_real - ctx.d_s) + extra
        mean_jt += pw * float((weight_xz * np.where(mask, jt, 0.0)).sum())
        mean_sq += pw * float((weight_xz * np.where(mask, jt * jt, 0.0)).sum())
    # conditional variance of the realized hidden distortion per cell
    d_mean = np.zeros_like(a)
    d_sq = np.zeros_like(a)
    for w, pw in zip(w_vals, w_probs):
        d_real = (a + w) ** 2
        d_mean += pw * d_real
        d_sq += pw * d_real ** 2
    cond_var = float((weight_xz * np.where(mask, d_sq - d_mean**2, 0.0)).sum())

    v_tilde = mean_sq - mean_jt**2
    residual = abs(v_tilde - (v_direct + lam * lam * cond_var))
    return DispersionReport(
        v_tilde=float(v_tilde),
        v_direct=v_direct,
        cond_var_term=cond_var,
        lambda_s=float(lam),
        identity_residual=float(residual),
    )


def lambda_capital(model: SourceModel, output_marginal, d: float, lam: float, x) -> float:
    """Normalizer of the tilted family at a fixed output law:
    -log E[exp(lam * (d - dbar(x, Y)))], Y ~ output_marginal."""
    p_y = np.asarray(output_marginal, dtype=float)
    if p_y.shape != (len(model.s_hat),):
        raise LengthMismatch("output_marginal length must match the reproduction alphabet")
    xi = model.x.index(x)
    dbar_row = model.surrogate_matrix()[xi]
    support = p_y > 0
    with np.errstate(divide="ignore"):
        logp = np.log(p_y[support])
    return float(-logsumexp(logp + lam * (d - dbar_row[support])))
