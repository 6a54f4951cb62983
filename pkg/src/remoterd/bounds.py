"""One-shot achievability bounds for random codes at finite blocklength.

The central object is the conditional excess probability

    pi(x^k, z^k) = P[(1/k) sum (phi(x_i) + W_i - z_i)^2 > d_s | X^k = x^k],

computable exactly by convolving the k per-letter distortion laws.  On top
of it sit the codebook-averaged achievability bound (an integral of the
M-th power of an inner survival probability), its relaxed closed-form
chain, the joint variant with a second reconstruction under a separate
distortion constraint, and an empirical check of the exponent inequality
linking the covering probability g to the tilted information sum.

All block events compare distortion sums against k times the target rather
than averages against the target; for lattice-valued noise the sums are
exact in floating point, so ties resolve identically everywhere.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (BudgetExceeded, DomainError, LengthMismatch, OutOfRange,
                     SupportOverflow)
from .gaussian import C0_DEFAULT, delta_s, zeta
from .model import SourceModel
from .rd import RDSolution
from .tilted import TiltedContext, tilted_all_direct

MERGE_ATOL = 1e-12
SUPPORT_CAP = 10 ** 6
ENUM_CAP = 4 * 10 ** 6    # (x^k, codeword) pair budget for method="exact"


@dataclass(frozen=True)
class DistortionDistribution:
    """Exact law of a k-fold average distortion: ascending atom values with
    their probabilities."""

    values: np.ndarray
    probs: np.ndarray
    k: int

    @property
    def support(self) -> list:
        return list(zip(self.values.tolist(), self.probs.tolist()))

    def prob_greater(self, threshold: float) -> float:
        return float(self.probs[self.values > threshold].sum())

    def prob_at_most(self, threshold: float) -> float:
        return float(self.probs[self.values <= threshold].sum())


@dataclass(frozen=True)
class BoundEstimate:
    """A probability estimate with its 95% half-width; exact evaluations
    carry half_width 0 and no seed."""

    value: float
    half_width: float
    method: str
    seed: int = None
    samples: int = 0


@dataclass(frozen=True)
class RelaxedBreakdown:
    """Additive parts of the relaxed bound: the codebook-miss term
    e^{-M/gamma}, the quantile middle term with its sampling half-width,
    and the truncation term 2*zeta/sqrt(k)."""

    codebook_term: float
    middle_term: float
    truncation_term: float
    middle_half_width: float

    @property
    def value(self) -> float:
        return self.codebook_term + self.middle_term + self.truncation_term


# -- exact convolution of distortion sums ------------------------------------


def _merge_atoms(values: np.ndarray, probs: np.ndarray):
    order = np.argsort(values, kind="stable")
    v, p = values[order], probs[order]
    if v.size <= 1:
        return v, p
    starts = np.empty(v.size, dtype=bool)
    starts[0] = True
    np.greater(np.diff(v), MERGE_ATOL, out=starts[1:])
    groups = np.cumsum(starts) - 1
    merged_p = np.zeros(int(groups[-1]) + 1)
    np.add.at(merged_p, groups, p)
    return v[starts], merged_p


def _convolve_sum(letter_laws, cap: int):
    """Law of the sum of independent per-letter laws, each an (values,
    probs) pair, with atoms merged when equal within MERGE_ATOL."""
    values = np.zeros(1)
    probs = np.ones(1)
    for lv, lp in letter_laws:
        values = (values[:, None] + lv[None, :]).ravel()
        probs = (probs[:, None] * lp[None, :]).ravel()
        values, probs = _merge_atoms(values, probs)
        if values.size > cap:
            raise SupportOverflow(
                f"convolution support reached {values.size} atoms (cap {cap})"
            )
    return values, probs


def _offsets(model: SourceModel, x_seq, z_seq) -> np.ndarray:
    x_seq = np.asarray(x_seq, dtype=float)
    z_seq = np.asarray(z_seq, dtype=float)
    if x_seq.shape != z_seq.shape or x_seq.ndim != 1 or x_seq.size == 0:
        raise LengthMismatch(
            f"sequences of shapes {x_seq.shape} and {z_seq.shape}"
        )
    return model.phi_of(x_seq) - z_seq


def _hidden_sum_law(model: SourceModel, offsets: np.ndarray, cap: int):
    """Law of sum_i (offsets_i + W_i)^2 over the i.i.d. noise."""
    w, pw = model.noise.support, model.noise.probs
    return _convolve_sum([((a + w) ** 2, pw) for a in offsets], cap)


def distortion_distribution(model: SourceModel, x_seq, z_seq,
                            cap: int = SUPPORT_CAP) -> DistortionDistribution:
    """Exact law of the average hidden distortion d_s(S^k, z^k) given
    X^k = x^k.  Reconstruction letters may be any reals."""
    offsets = _offsets(model, x_seq, z_seq)
    values, probs = _hidden_sum_law(model, offsets, cap)
    return DistortionDistribution(values=values / offsets.size, probs=probs,
                                  k=int(offsets.size))


def _pi_of_offsets(model: SourceModel, offsets, d_s: float, cap: int,
                   cache: dict = None) -> float:
    offsets = np.asarray(offsets, dtype=float)
    key = None
    if cache is not None:
        key = tuple(sorted(offsets.tolist()))
        hit = cache.get(key)
        if hit is not None:
            return hit
    values, probs = _hidden_sum_law(model, offsets, cap)
    out = float(probs[values > offsets.size * d_s].sum())
    if cache is not None:
        cache[key] = out
    return out


def pi_exact(model: SourceModel, x_seq, z_seq, d_s: float,
             cap: int = SUPPORT_CAP) -> float:
    """Exact P[(1/k) sum (phi(x_i) + W_i - z_i)^2 > d_s | X^k = x^k]."""
    return _pi_of_offsets(model, _offsets(model, x_seq, z_seq), d_s, cap)


def pi_mc(model: SourceModel, x_seq, z_seq, d_s: float, samples: int,
          seed: int) -> BoundEstimate:
    """Monte Carlo estimate of pi_exact from i.i.d. noise draws."""
    samples = int(samples)
    if samples < 1:
        raise OutOfRange(f"samples must be at least 1, got {samples}")
    offsets = _offsets(model, x_seq, z_seq)
    rng = np.random.default_rng(seed)
    w = rng.choice(model.noise.support, size=(samples, offsets.size),
                   p=model.noise.probs)
    sums = ((offsets[None, :] + w) ** 2).sum(axis=1)
    p_hat = np.count_nonzero(sums > offsets.size * d_s) / samples
    half = 1.96 * math.sqrt(p_hat * (1.0 - p_hat) / samples)
    return BoundEstimate(value=float(p_hat), half_width=half, method="mc",
                         seed=seed, samples=samples)


# -- covering probability over the optimal output distribution ---------------


def _z_marginal(solution: RDSolution):
    """Output-letter marginal of a solution; joint solutions fold the pair
    marginal over the second coordinate."""
    if solution.is_joint:
        n_z, n_y = solution.pair_shape
        return solution.marginal.reshape(n_z, n_y).sum(axis=1)
    return solution.marginal


def g_prob(model: SourceModel, solution: RDSolution, x_seq, d_s: float,
           t: float, k: int, c0: float = C0_DEFAULT, method: str = "exact",
           samples: int = 10 ** 5, seed: int = 0,
           cap: int = SUPPORT_CAP) -> BoundEstimate:
    """Probability that a single codeword drawn from the optimal output
    marginal covers x^k with surrogate distortion at most d_s - delta_s(t, k).

    The event is on the noiseless part: (1/k) sum (phi(x_i) - Z*_i)^2
    + Var[W] <= d_s - delta_s(t, k), inclusive.
    """
    x_seq = np.asarray(x_seq, dtype=float)
    if x_seq.ndim != 1 or x_seq.size != k:
        raise LengthMismatch(f"x^k has shape {x_seq.shape}, expected ({k},)")
    slack = delta_s(model, d_s, t, k, c0)
    threshold = k * (d_s - slack - model.sigma_w2)
    phis = model.phi_of(x_seq)
    q = _z_marginal(solution)
    live = q > 0.0
    z_vals, qz = model.s_hat.symbols[live], q[live]
    if method == "exact":
        laws = [((phi - z_vals) ** 2, qz) for phi in phis]
        values, probs = _convolve_sum(laws, cap)
        value = float(probs[values <= threshold].sum())
        return BoundEstimate(value=value, half_width=0.0, method="exact")
    samples = int(samples)
    rng = np.random.default_rng(seed)
    draws = rng.choice(z_vals.size, size=(samples, k), p=qz)
    sums = ((phis[None, :] - z_vals[draws]) ** 2).sum(axis=1)
    p_hat = np.count_nonzero(sums <= threshold) / samples
    half = 1.96 * math.sqrt(p_hat * (1.0 - p_hat) / samples)
    return BoundEstimate(value=float(p_hat), half_width=half, method="mc",
                         seed=seed, samples=samples)


# -- codebook-averaged achievability ------------------------------------------


def _survival_integral(values: np.ndarray, weights: np.ndarray,
                       m: float) -> float:
    """Integral over t in [0, 1] of P[V > t]^m for the discrete law given
    by ascending `values` in [0, 1] with `weights`.

    Exact for the given law: the survival function is a step function, so
    the integral is a finite sum of tail^m times gap terms.  Powers are
    taken in floating point and underflow to 0 for astronomically large m,
    which only drops nonnegative terms.
    """
    gaps = np.diff(np.concatenate(((0.0,), values)))
    tails = np.cumsum(weights[::-1])[::-1]
    return float(np.dot(np.power(tails, float(m)), gaps))


def _positive_support(probs: np.ndarray):
    idx = np.flatnonzero(probs > 0.0)
    return idx, probs[idx]


def _product_weight(probs: np.ndarray, seq) -> float:
    out = 1.0
    for i in seq:
        out *= probs[i]
    return out


def _check_enum_budget(n_outer: int, n_inner: int, k: int):
    total = float(n_outer) ** k * float(n_inner) ** k
    if total > ENUM_CAP:
        raise BudgetExceeded(
            f"exact enumeration needs {total:.3g} pairs (cap {ENUM_CAP}); "
            "use method='mc'"
        )


def _pi_law_for_x(model, phis, col_vals, col_probs, d_s, k, cap, cache):
    """Exact law of pi(x^k, Z*^k) under the product codeword draw, for one
    fixed x^k, by enumerating codeword sequences."""
    pis, weights = [], []
    for cols in itertools.product(range(col_vals.size), repeat=k):
        w_z = _product_weight(col_probs, cols)
        offs = phis - col_vals[np.asarray(cols, dtype=int)]
        pis.append(_pi_of_offsets(model, offs, d_s, cap, cache))
        weights.append(w_z)
    pis = np.asarray(pis)
    weights = np.asarray(weights)
    order = np.argsort(pis, kind="stable")
    return pis[order], weights[order]


def oneshot_bound(model: SourceModel, solution: RDSolution, d_s: float,
                  k: int, m, method: str = "mc", samples: int = 256,
                  inner: int = 512, seed: int = 0,
                  cap: int = SUPPORT_CAP) -> BoundEstimate:
    """Achievability bound int_0^1 E_X[ P_Z[pi(X^k, Z*^k) > t]^M ] dt for a
    random codebook of M i.i.d. product-marginal codewords.

    method="exact" enumerates both sequence spaces (small k only) and is
    deterministic.  method="mc" samples X^k (outer) and, per sample, `inner`
    codeword draws whose empirical pi-law is integrated exactly as a step
    function; raising the inner empirical survival to the M-th power biases
    upward (Jensen), keeping the estimate on the valid, conservative side
    of the bound.
    """
    if m < 1:
        raise OutOfRange(f"M must be at least 1, got {m!r}")
    q = _z_marginal(solution)
    zi, qz = _positive_support(q)
    z_vals = model.s_hat.symbols[zi]
    cache: dict = {}
    if method == "exact":
        xi, px = _positive_support(model.p_x)
        _check_enum_budget(xi.size, zi.size, k)
        total = 0.0
        for xs in itertools.product(range(xi.size), repeat=k):
            w_x = _product_weight(px, xs)
            phis = model.phi[xi[np.asarray(xs, dtype=int)]]
            pis, weights = _pi_law_for_x(model, phis, z_vals, qz, d_s, k,
                                         cap, cache)
            total += w_x * _survival_integral(pis, weights, m)
        return BoundEstimate(value=total, half_width=0.0, method="exact")
    samples = int(samples)
    rng = np.random.default_rng(seed)
    xs = rng.choice(model.p_x.size, size=(samples, k), p=model.p_x)
    per_sample = np.empty(samples)
    flat_weights = np.full(inner, 1.0 / inner)
    for j in range(samples):
        phis = model.phi[xs[j]]
        draws = rng.choice(z_vals.size, size=(inner, k), p=qz)
        offs = phis[None, :] - z_vals[draws]
        pis = np.sort([_pi_of_offsets(model, offs[i], d_s, cap, cache)
                       for i in range(inner)])
        per_sample[j] = _survival_integral(pis, flat_weights, m)
    value = float(per_sample.mean())
    half = 1.96 * float(per_sample.std(ddof=1)) / math.sqrt(samples) \
        if samples > 1 else 1.0
    return BoundEstimate(value=value, half_width=half, method="mc",
                         seed=seed, samples=samples)


# -- relaxed closed-form chain -------------------------------------------------


def _quantile_of_law(values: np.ndarray, weights: np.ndarray,
                     level: float) -> float:
    """Smallest value at which the CDF reaches `level`; +inf if never."""
    cum = np.cumsum(weights)
    idx = int(np.searchsorted(cum, level, side="left"))
    if idx >= values.size:
        return math.inf
    return float(values[idx])


def oneshot_relaxed_breakdown(model: SourceModel, solution: RDSolution,
                              d_s: float, k: int, gamma: float, m,
                              c0: float = C0_DEFAULT, method: str = "mc",
                              samples: int = 512, inner: int = 1024,
                              seed: int = 0,
                              cap: int = SUPPORT_CAP) -> RelaxedBreakdown:
    """Parts of the relaxed achievability bound

        e^{-M/gamma}
        + int_{2 zeta / sqrt k}^1 P[gamma * P[pi <= t | X^k] < 1] dt
        + 2 zeta / sqrt k.

    For each x^k the inner CDF is nondecreasing in t, so the t-set where
    the event holds is an interval ending at the (1/gamma)-quantile of the
    pi-law; the middle term is the mean clipped quantile excess over t0.
    """
    if gamma <= 0.0:
        raise OutOfRange(f"gamma must be positive, got {gamma!r}")
    if m < 1:
        raise OutOfRange(f"M must be at least 1, got {m!r}")
    t0 = 2.0 * zeta(model, c0) / math.sqrt(k)
    if t0 >= 1.0:
        raise DomainError(
            f"2*zeta/sqrt(k) = {t0!r} >= 1; blocklength too small"
        )
    codebook_term = math.exp(-float(m) / gamma)
    level = 1.0 / gamma
    q = _z_marginal(solution)
    zi, qz = _positive_support(q)
    z_vals = model.s_hat.symbols[zi]
    cache: dict = {}

    def clipped_excess(pis, weights):
        t_star = _quantile_of_law(pis, weights, level)
        return min(max(t_star, t0), 1.0) - t0

    if method == "exact":
        xi, px = _positive_support(model.p_x)
        _check_enum_budget(xi.size, zi.size, k)
        middle = 0.0
        for xs in itertools.product(range(xi.size), repeat=k):
            w_x = _product_weight(px, xs)
            phis = model.phi[xi[np.asarray(xs, dtype=int)]]
            pis, weights = _pi_law_for_x(model, phis, z_vals, qz, d_s, k,
                                         cap, cache)
            middle += w_x * clipped_excess(pis, weights)
        return RelaxedBreakdown(codebook_term=codebook_term,
                                middle_term=middle, truncation_term=t0,
                                middle_half_width=0.0)
    samples = int(samples)
    rng = np.random.default_rng(seed)
    xs = rng.choice(model.p_x.size, size=(samples, k), p=model.p_x)
    flat_weights = np.full(inner, 1.0 / inner)
    per_sample = np.empty(samples)
    for j in range(samples):
        phis = model.phi[xs[j]]
        draws = rng.choice(z_vals.size, size=(inner, k), p=qz)
        offs = phis[None, :] - z_vals[draws]
        pis = np.sort([_pi_of_offsets(model, offs[i], d_s, cap, cache)
                       for i in range(inner)])
        per_sample[j] = clipped_excess(pis, flat_weights)
    middle = float(per_sample.mean())
    half = 1.96 * float(per_sample.std(ddof=1)) / math.sqrt(samples) \
        if samples > 1 else 1.0
    return RelaxedBreakdown(codebook_term=codebook_term, middle_term=middle,
                            truncation_term=t0, middle_half_width=half)


def oneshot_relaxed_bound(model: SourceModel, solution: RDSolution,
                          d_s: float, k: int, gamma: float, m,
                          c0: float = C0_DEFAULT, method: str = "mc",
                          samples: int = 512, inner: int = 1024,
                          seed: int = 0, cap: int = SUPPORT_CAP) -> float:
    """Value of the relaxed chain; see oneshot_relaxed_breakdown."""
    parts = oneshot_relaxed_breakdown(model, solution, d_s, k, gamma, m, c0,
                                      method, samples, inner, seed, cap)
    return parts.value


# -- joint variant --------------------------------------------------------------


def _block_dx_exceeds(model: SourceModel, x_idx, y_idx, d_x: float,
                      k: int) -> bool:
    return float(model.d_x_table[x_idx, y_idx].sum()) > k * d_x


def oneshot_joint_bound(model: SourceModel, joint_solution: RDSolution,
                        d_s: float, d_x: float, k: int, m,
                        method: str = "mc", samples: int = 256,
                        inner: int = 512, seed: int = 0,
                        cap: int = SUPPORT_CAP) -> BoundEstimate:
    """Joint-code achievability bound with codewords (z^k, y^k) drawn from
    the pair marginal.

    The per-pair excess probability is the union of the hidden-distortion
    event and the observation-distortion event; the latter is deterministic
    given (x^k, y^k), so it is checked first and short-circuits pi to 1.
    """
    if not joint_solution.is_joint:
        raise OutOfRange("joint bound requires a joint solution")
    if m < 1:
        raise OutOfRange(f"M must be at least 1, got {m!r}")
    n_z, n_y = joint_solution.pair_shape
    ci, qc = _positive_support(joint_solution.marginal)
    col_z = model.s_hat.symbols[ci // n_y]
    col_y = ci % n_y
    cache: dict = {}

    def pi_joint(x_idx, phis, cols):
        if _block_dx_exceeds(model, x_idx, col_y[cols], d_x, k):
            return 1.0
        return _pi_of_offsets(model, phis - col_z[cols], d_s, cap, cache)

    if method == "exact":
        xi, px = _positive_support(model.p_x)
        _check_enum_budget(xi.size, ci.size, k)
        total = 0.0
        for xs in itertools.product(range(xi.size), repeat=k):
            w_x = _product_weight(px, xs)
            x_idx = xi[np.asarray(xs, dtype=int)]
            phis = model.phi[x_idx]
            pis, weights = [], []
            for cols in itertools.product(range(ci.size), repeat=k):
                cols = np.asarray(cols, dtype=int)
                weights.append(_product_weight(qc, cols))
                pis.append(pi_joint(x_idx, phis, cols))
            pis = np.asarray(pis)
            weights = np.asarray(weights)
            order = np.argsort(pis, kind="stable")
            total += w_x * _survival_integral(pis[order], weights[order], m)
        return BoundEstimate(value=total, half_width=0.0, method="exact")
    samples = int(samples)
    rng = np.random.default_rng(seed)
    xs = rng.choice(model.p_x.size, size=(samples, k), p=model.p_x)
    flat_weights = np.full(inner, 1.0 / inner)
    per_sample = np.empty(samples)
    for j in range(samples):
        x_idx = xs[j]
        phis = model.phi[x_idx]
        draws = rng.choice(ci.size, size=(inner, k), p=qc)
        pis = np.sort([pi_joint(x_idx, phis, draws[i]) for i in range(inner)])
        per_sample[j] = _survival_integral(pis, flat_weights, m)
    value = float(per_sample.mean())
    half = 1.96 * float(per_sample.std(ddof=1)) / math.sqrt(samples) \
        if samples > 1 else 1.0
    return BoundEstimate(value=value, half_width=half, method="mc",
                         seed=seed, samples=samples)


# -- exponent diagnostic ---------------------------------------------------------


def g_exponent_check(model: SourceModel, solution: RDSolution, d_s: float,
                     k: int, t_grid, c0: float = C0_DEFAULT,
                     samples: int = 1000, seed: int = 0, c_const: float = 5.0,
                     cap: int = SUPPORT_CAP) -> float:
    """Fraction of (sample, t) pairs at which the covering probability obeys

        -log g(X^k, t) - sum_i j_X(X_i) - k * lambda_s * delta_s(t, k)
            <= c_const * ln k.

    Sampled X^k are drawn from the source; g is evaluated exactly.  The
    inequality holds up to an existential constant, so the fraction is
    reported as a diagnostic rather than asserted against a threshold;
    samples where g vanishes count as violations.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    t0 = 2.0 * zeta(model, c0) / math.sqrt(k)
    if t0 >= 1.0:
        raise DomainError(
            f"2*zeta/sqrt(k) = {t0!r} >= 1; t-range is empty"
        )
    if t_grid.size == 0 or np.any(t_grid < t0) or np.any(t_grid > 1.0):
        raise DomainError(
            f"t_grid must lie in [{t0!r}, 1]"
        )
    slacks = np.array([delta_s(model, d_s, t, k, c0) for t in t_grid])
    ctx = TiltedContext(model, solution, d_s)
    j_per_symbol = tilted_all_direct(ctx)
    lam = solution.lambda_s
    budget = c_const * math.log(k)
    q = _z_marginal(solution)
    live = q > 0.0
    z_vals, qz = model.s_hat.symbols[live], q[live]
    rng = np.random.default_rng(seed)
    xs = rng.choice(model.p_x.size, size=(int(samples), k), p=model.p_x)
    hits = 0
    for row in xs:
        phis = model.phi[row]
        laws = [((phi - z_vals) ** 2, qz) for phi in phis]
        values, probs = _convolve_sum(laws, cap)
        j_sum = float(j_per_symbol[row].sum())
        for slack in slacks:
            g = float(probs[values <= k * (d_s - slack - model.sigma_w2)].sum())
            if g > 0.0:
                stat = -math.log(g) - j_sum - k * lam * slack
                if stat <= budget:
                    hits += 1
    return hits / (int(samples) * t_grid.size)
