"""Normal-approximation machinery.

Per-sequence central limit statistics for the blockwise hidden distortion,
the uniform normal-approximation constant zeta, the distortion slack
delta_s(t, k), the closed-form root theta_tilde of the slack equation, and
the two-term (plus optional log k) codebook-size formula.

Conventions: everything is in nats; c0 is the explicit constant of the
normal-approximation bound for sums of independent, non-identically
distributed summands.  The default 0.5600 is a published valid choice; it
enters only through products, so callers may tighten it as sharper
constants appear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, ndtri

from .errors import DomainError, LengthMismatch
from .model import SourceModel, validate_model

C0_DEFAULT = 0.5600

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def q_func(t: float) -> float:
    """Upper tail of the standard normal, via the complementary error
    function (accurate in both tails)."""
    return 0.5 * erfc(float(t) / _SQRT2)


def q_inv(p: float) -> float:
    """Inverse of q_func on (0, 1).

    ndtri supplies the quantile; one Newton step against the erfc-based
    tail polishes it so the round trip |q_func(q_inv(p)) - p| stays below
    1e-12 absolute across the domain.
    """
    p = float(p)
    if not (0.0 < p < 1.0):
        raise DomainError(f"q_inv needs p in (0,1), got {p!r}")
    t = -ndtri(p)
    density = _INV_SQRT_2PI * math.exp(-0.5 * t * t)
    if density > 0.0:
        t += (q_func(t) - p) / density
    return float(t)


# -- per-sequence Berry-Esseen statistics -----------------------------------


@dataclass(frozen=True)
class BEStats:
    """Central-limit statistics of the blockwise hidden distortion for one
    (x^k, z^k) pair: mean mu_k, variance v_k, averaged third absolute
    moment t_k, and the normalized bound b_k = c0 * t_k / v_k^{3/2}."""

    theta: float
    mu_k: float
    v_k: float
    t_k: float
    b_k: float
    k: int


def be_stats(model: SourceModel, x_seq, z_seq, c0: float = C0_DEFAULT) -> BEStats:
    """Exact per-sequence statistics of (1/k) sum (phi(x_i) + W_i - z_i)^2.

    theta is the noiseless squared offset; the mean adds Var[W], the
    variance is affine in theta because the odd noise moments vanish, and
    t_k enumerates the third absolute central moment letter by letter.
    """
    x_seq = np.asarray(x_seq, dtype=float)
    z_seq = np.asarray(z_seq, dtype=float)
    if x_seq.shape != z_seq.shape or x_seq.ndim != 1 or x_seq.size == 0:
        raise LengthMismatch(f"sequences of shapes {x_seq.shape} and {z_seq.shape}")
    k = x_seq.size
    mom = validate_model(model)
    a = model.phi_of(x_seq) - z_seq
    theta = float(np.mean(a * a))
    mu_k = theta + mom.sigma_w2
    v_k = 4.0 * mom.sigma_w2 * theta + mom.sigma_w2_var
    w, pw = model.noise.support, model.noise.probs
    centered = w[None, :] ** 2 + 2.0 * a[:, None] * w[None, :] - mom.sigma_w2
    t_k = float(np.mean(np.abs(centered) ** 3 @ pw))
    b_k = c0 * t_k / v_k ** 1.5
    return BEStats(theta=theta, mu_k=mu_k, v_k=v_k, t_k=t_k, b_k=b_k, k=k)


def zeta(model: SourceModel, c0: float = C0_DEFAULT) -> float:
    """Uniform bound on b_k over all sequences: c0 * T0 / Var[W^2]^{3/2},
    with T0 the worst-case per-letter third absolute moment."""
    mom = validate_model(model)
    return c0 * mom.t0 / mom.sigma_w2_sd ** 3


def delta_s(model: SourceModel, d_s: float, t: float, k: int,
            c0: float = C0_DEFAULT) -> float:
    """Distortion slack sqrt(V1/k) * q_inv(t - zeta/sqrt(k)).

    V1 = 4*Var[W]*(d_s - Var[W]) + Var[W^2] is the conditional variance of
    the hidden distortion pinned by slackness at an interior target.
    """
    mom = validate_model(model)
    arg = t - zeta(model, c0) / math.sqrt(k)
    if not (0.0 < arg < 1.0):
        raise DomainError(
            f"quantile argument t - zeta/sqrt(k) = {arg!r} outside (0,1)"
        )
    v1 = 4.0 * mom.sigma_w2 * (d_s - mom.sigma_w2) + mom.sigma_w2_var
    if v1 < 0.0:
        raise DomainError(f"V1 = {v1!r} < 0 at d_s = {d_s!r}")
    return math.sqrt(v1 / k) * q_inv(arg)


def theta_tilde(model: SourceModel, d_s: float, t: float, k: int,
                c0: float = C0_DEFAULT) -> float:
    """Closed-form root of f(theta | t, k) = d_s - Var[W], where

        f(theta | t, k) = theta + sqrt((4*Var[W]*theta + Var[W^2])/k)
                          * q_inv(t - zeta/sqrt(k)).

    Squaring the defining equation gives a quadratic whose lower branch
    always satisfies the original sign constraint, so the returned value is
    the exact root whenever the quantile argument is in range.
    """
    mom = validate_model(model)
    arg = t - zeta(model, c0) / math.sqrt(k)
    if not (0.0 < arg < 1.0):
        raise DomainError(
            f"quantile argument t - zeta/sqrt(k) = {arg!r} outside (0,1)"
        )
    qq = q_inv(arg)
    sw2 = mom.sigma_w2
    v1 = 4.0 * sw2 * (d_s - sw2) + mom.sigma_w2_var
    disc = v1 / k + 4.0 * sw2 * sw2 * qq * qq / (k * k)
    if disc < 0.0:
        raise DomainError(f"negative discriminant {disc!r}")
    return d_s - sw2 + 2.0 * sw2 * qq * qq / k - math.sqrt(disc) * qq


# -- second-order codebook size ----------------------------------------------


@dataclass(frozen=True)
class SecondOrderParams:
    """Inputs of the two-term expansion; log_k_coeff scales an optional
    ln(k) remainder (the expansion guarantees only O(log k), so the
    coefficient is a user choice, default 0)."""

    rate: float
    v_tilde: float
    epsilon: float
    k: int
    log_k_coeff: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise DomainError(f"epsilon must be in (0,1), got {self.epsilon!r}")
        if self.v_tilde < 0.0:
            raise DomainError(f"v_tilde must be nonnegative, got {self.v_tilde!r}")
        if self.k < 1:
            raise DomainError(f"k must be at least 1, got {self.k!r}")


def second_order_terms(params: SecondOrderParams) -> tuple:
    """(rate term, dispersion term, log-k term) of log M in nats."""
    rate_term = params.k * params.rate
    disp_term = math.sqrt(params.k * params.v_tilde) * q_inv(params.epsilon)
    logk_term = params.log_k_coeff * math.log(params.k)
    return rate_term, disp_term, logk_term


def second_order_log_m(params: SecondOrderParams) -> float:
    """log M = k*rate + sqrt(k*v_tilde)*q_inv(epsilon) + coeff*ln(k), nats."""
    return float(sum(second_order_terms(params)))


def excess_prob_gaussian(model: SourceModel, x_seq, z_seq, d_s: float,
                         c0: float = C0_DEFAULT) -> tuple:
    """Normal estimate of the per-sequence excess probability plus its
    certified half width.

    Returns (Q(sqrt(k)*(d_s - mu_k)/sqrt(v_k)), b_k/sqrt(k)); the exact
    tail probability is guaranteed to lie within the band.
    """
    stats = be_stats(model, x_seq, z_seq, c0)
    t = math.sqrt(stats.k) * (d_s - stats.mu_k) / math.sqrt(stats.v_k)
    return q_func(t), stats.b_k / math.sqrt(stats.k)
