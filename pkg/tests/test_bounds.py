"""Distortion-sum laws, covering probabilities and one-shot bounds.

Every frozen number here is backed by an enumeration the test runs itself:
brute-force sums over the cubed noise support, binomial counts for the
covering event, and a hand-walked step-function integral.  Monte Carlo
paths are checked against the exact paths at three half-widths.
"""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from remoterd import (
    BoundEstimate,
    ba_joint,
    delta_s,
    be_stats,
    distortion_distribution,
    g_exponent_check,
    g_prob,
    oneshot_bound,
    oneshot_joint_bound,
    oneshot_relaxed_bound,
    oneshot_relaxed_breakdown,
    pi_exact,
    pi_mc,
)
from remoterd.bounds import _survival_integral
from remoterd.errors import (
    BudgetExceeded,
    DomainError,
    LengthMismatch,
    OutOfRange,
    SupportOverflow,
)


def brute_pi(model, x_seq, z_seq, d_s):
    """P[sum (phi(x)+W-z)^2 > k d_s] by enumerating the noise cube."""
    offs = model.phi_of(np.asarray(x_seq, dtype=float)) - np.asarray(z_seq)
    k = offs.size
    w, pw = model.noise.support, model.noise.probs
    total = 0.0
    for draw in itertools.product(range(w.size), repeat=k):
        idx = np.asarray(draw, dtype=int)
        if float(((offs + w[idx]) ** 2).sum()) > k * d_s:
            total += float(pw[idx].prod())
    return total


# -- exact law of the hidden distortion -----------------------------------------


def test_distribution_single_matched_letter(bes):
    dd = distortion_distribution(bes, [0], [0.0])
    assert dd.k == 1
    assert dd.values.tolist() == [0.0, 0.25]
    assert dd.probs.tolist() == [0.5, 0.5]
    assert dd.support == [(0.0, 0.5), (0.25, 0.5)]
    assert dd.prob_greater(0.2) == 0.5
    assert dd.prob_at_most(0.25) == 1.0   # inclusive on the right
    assert dd.prob_greater(0.25) == 0.0   # strict on the left


def test_distribution_moments_match_sequence_stats(bes):
    rng = np.random.default_rng(9)
    for _ in range(6):
        k = int(rng.integers(1, 6))
        x = rng.integers(0, 2, size=k)
        z = rng.integers(0, 2, size=k).astype(float)
        dd = distortion_distribution(bes, x, z)
        stats = be_stats(bes, x, z)
        mean = float(dd.values @ dd.probs)
        var = float(dd.values ** 2 @ dd.probs) - mean ** 2
        assert mean == pytest.approx(stats.mu_k, abs=1e-12)
        assert var == pytest.approx(stats.v_k / k, abs=1e-12)
        assert dd.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_pi_exact_hand_values(bes):
    # single matched letter: excess iff W^2 = 1/4
    assert pi_exact(bes, [0], [0.0], 0.2) == 0.5
    # threshold on an atom: the event is strict
    assert pi_exact(bes, [0], [0.0], 0.25) == 0.0
    # two matched letters, sum > 0.4 iff both letters hit 1/4
    assert pi_exact(bes, [0, 0], [0.0, 0.0], 0.2) == 0.25
    assert pi_exact(bes, [0, 1, 1, 0], [0.0, 0.0, 1.0, 1.0], 0.375) == 0.75


def test_pi_exact_equals_noise_enumeration(bes, widenoise):
    rng = np.random.default_rng(17)
    for model in (bes, widenoise):
        for _ in range(8):
            k = int(rng.integers(1, 6))
            x = rng.integers(0, 2, size=k)
            z = rng.integers(0, 2, size=k).astype(float)
            d_s = float(rng.uniform(model.sigma_w2 * 0.5,
                                    model.sigma_w2 + 1.5))
            assert pi_exact(model, x, z, d_s) == brute_pi(model, x, z, d_s)


def test_pi_extremes(bes):
    assert pi_exact(bes, [0, 1], [0.0, 1.0], -0.1) == 1.0
    assert pi_exact(bes, [0, 1], [0.0, 1.0], 3.0) == 0.0


def test_pi_shape_and_cap_errors(bes):
    with pytest.raises(LengthMismatch):
        pi_exact(bes, [0, 1], [0.0], 0.3)
    with pytest.raises(LengthMismatch):
        pi_exact(bes, [], [], 0.3)
    # irrational offsets defeat atom merging, so the support grows as 3^k
    with pytest.raises(SupportOverflow):
        pi_exact(bes, [0, 1, 0], [0.137, 0.591, 0.733], 0.3, cap=10)


def test_pi_mc_matches_exact_and_is_deterministic(bes):
    x, z = [0, 1, 1, 0], [0.0, 0.0, 1.0, 1.0]
    p = pi_exact(bes, x, z, 0.375)
    hits = 0
    for seed in range(200):
        est = pi_mc(bes, x, z, 0.375, samples=400, seed=seed)
        assert est.method == "mc" and est.samples == 400
        if abs(est.value - p) <= est.half_width:
            hits += 1
    # nominal coverage of the 1.96-sigma interval is 95%
    assert hits >= 186
    a = pi_mc(bes, x, z, 0.375, samples=400, seed=3)
    b = pi_mc(bes, x, z, 0.375, samples=400, seed=3)
    assert a == b
    with pytest.raises(OutOfRange):
        pi_mc(bes, x, z, 0.375, samples=0, seed=0)


@settings(max_examples=60, deadline=None, derandomize=True)
@given(data=st.data())
def test_pi_probability_properties(data, bes):
    k = data.draw(st.integers(1, 6))
    x = data.draw(st.lists(st.integers(0, 1), min_size=k, max_size=k))
    z = [float(b) for b in
         data.draw(st.lists(st.integers(0, 1), min_size=k, max_size=k))]
    lo = data.draw(st.floats(0.0, 1.0))
    hi = data.draw(st.floats(0.0, 1.0))
    lo, hi = min(lo, hi), max(lo, hi)
    p_lo, p_hi = pi_exact(bes, x, z, lo), pi_exact(bes, x, z, hi)
    assert 0.0 <= p_hi <= p_lo <= 1.0
    # letter order is irrelevant; with dyadic atoms this is exact
    perm = data.draw(st.permutations(range(k)))
    assert pi_exact(bes, [x[i] for i in perm], [z[i] for i in perm],
                    lo) == p_lo


# -- covering probability --------------------------------------------------------


def test_g_prob_binomial_oracle(bes, bes_solution):
    """At d_s = 0.375 the output marginal is uniform on {0, 1}, so the
    noiseless distortion counts mismatches and the covering event is a
    binomial tail."""
    k, t, c0 = 6, 0.9, 0.005
    x = [0, 1, 0, 1, 0, 1]
    slack = delta_s(bes, 0.375, t, k, c0)
    threshold = k * (0.375 - slack - 0.125)
    assert 1.0 < threshold < 2.0   # at most one mismatched letter
    est = g_prob(bes, bes_solution, x, 0.375, t, k, c0, method="exact")
    assert est.value == pytest.approx(7 / 64, abs=1e-15)
    assert est.half_width == 0.0


def test_g_prob_mc_agrees(bes, bes_solution):
    exact = g_prob(bes, bes_solution, [0, 1, 0, 1, 0, 1], 0.375, 0.9, 6,
                   0.005, method="exact").value
    mc = g_prob(bes, bes_solution, [0, 1, 0, 1, 0, 1], 0.375, 0.9, 6,
                0.005, method="mc", samples=20000, seed=4)
    assert abs(mc.value - exact) <= 3 * mc.half_width


def test_g_prob_shape_error(bes, bes_solution):
    with pytest.raises(LengthMismatch):
        g_prob(bes, bes_solution, [0, 1], 0.375, 0.9, k=6, c0=0.005)


# -- step-function survival integral ----------------------------------------------


def test_survival_integral_hand_walk():
    values = np.array([0.2, 1.0])
    weights = np.array([0.5, 0.5])
    # P[V > t] is 1 on [0, 0.2) and 1/2 on [0.2, 1)
    assert _survival_integral(values, weights, 1) == pytest.approx(0.6)
    assert _survival_integral(values, weights, 2) == pytest.approx(0.4)
    # astronomically large powers underflow to the mass-one prefix
    assert _survival_integral(values, weights, 1e300) == pytest.approx(0.2)


# -- codebook-averaged bound -----------------------------------------------------


def test_oneshot_m1_is_mean_pi(bes, bes_solution):
    """At M = 1 the survival integral collapses to E[pi]; enumerate the
    eight source words against the eight codeword draws directly."""
    q = bes_solution.marginal
    total = 0.0
    for xs in itertools.product(range(2), repeat=3):
        for zs in itertools.product(range(2), repeat=3):
            w = 0.125 * math.prod(float(q[z]) for z in zs)
            total += w * pi_exact(bes, list(xs), [float(z) for z in zs],
                                  0.375)
    got = oneshot_bound(bes, bes_solution, 0.375, k=3, m=1, method="exact")
    assert got.value == pytest.approx(total, abs=1e-13)
    assert got.value == pytest.approx(0.708984375, abs=1e-12)
    assert got.half_width == 0.0


def test_oneshot_nonincreasing_in_m(bes, bes_solution):
    ms = (1, 2, 4, 16, 10 ** 6, 10 ** 12)
    vals = [oneshot_bound(bes, bes_solution, 0.375, 3, m,
                          method="exact").value for m in ms]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == 0.0  # power underflow only drops mass


def test_oneshot_mc_tracks_exact(bes, bes_solution):
    exact = oneshot_bound(bes, bes_solution, 0.375, 3, 1,
                          method="exact").value
    mc = oneshot_bound(bes, bes_solution, 0.375, 3, 1, method="mc",
                       samples=64, inner=256, seed=5)
    assert abs(mc.value - exact) <= 3 * mc.half_width
    # the empirical inner law biases the M-th power upward, never below
    exact64 = oneshot_bound(bes, bes_solution, 0.375, 3, 64,
                            method="exact").value
    mc64 = oneshot_bound(bes, bes_solution, 0.375, 3, 64, method="mc",
                         samples=64, inner=256, seed=6)
    assert mc64.value >= exact64 - 3 * mc64.half_width


def test_oneshot_mc_deterministic(bes, bes_solution):
    kw = dict(method="mc", samples=16, inner=64, seed=9)
    a = oneshot_bound(bes, bes_solution, 0.375, 4, 10, **kw)
    b = oneshot_bound(bes, bes_solution, 0.375, 4, 10, **kw)
    assert a == b


def test_oneshot_budget_and_range(bes, bes_solution):
    with pytest.raises(BudgetExceeded):
        oneshot_bound(bes, bes_solution, 0.375, k=11, m=4, method="exact")
    with pytest.raises(OutOfRange):
        oneshot_bound(bes, bes_solution, 0.375, k=3, m=0)


# -- relaxed chain ---------------------------------------------------------------


def test_relaxed_parts_and_dominance(bes, bes_solution):
    parts = oneshot_relaxed_breakdown(bes, bes_solution, 0.375, k=8,
                                      gamma=3.0, m=5, c0=0.005,
                                      method="exact")
    assert parts.codebook_term == pytest.approx(math.exp(-5 / 3.0), rel=1e-15)
    zeta8 = 0.005 * 0.5244140625 / 0.015625 ** 1.5
    assert parts.truncation_term == pytest.approx(2 * zeta8 / math.sqrt(8),
                                                  rel=1e-12)
    assert parts.middle_half_width == 0.0
    assert parts.value == parts.codebook_term + parts.middle_term \
        + parts.truncation_term
    value = oneshot_relaxed_bound(bes, bes_solution, 0.375, k=8, gamma=3.0,
                                  m=5, c0=0.005, method="exact")
    assert value == parts.value
    plain = oneshot_bound(bes, bes_solution, 0.375, k=8, m=5,
                          method="exact").value
    assert value >= plain - 1e-12


def test_relaxed_mc_tracks_exact(bes, bes_solution):
    exact = oneshot_relaxed_breakdown(bes, bes_solution, 0.375, k=8,
                                      gamma=2.0, m=3, c0=0.005,
                                      method="exact")
    mc = oneshot_relaxed_breakdown(bes, bes_solution, 0.375, k=8, gamma=2.0,
                                   m=3, c0=0.005, method="mc", samples=64,
                                   inner=128, seed=7)
    assert mc.codebook_term == exact.codebook_term
    assert mc.truncation_term == exact.truncation_term
    assert abs(mc.middle_term - exact.middle_term) \
        <= 3 * mc.middle_half_width + 1e-12


def test_relaxed_monotone_in_m(bes, bes_solution):
    vals = [oneshot_relaxed_bound(bes, bes_solution, 0.375, k=8, gamma=3.0,
                                  m=m, c0=0.005, method="exact")
            for m in (1, 4, 16)]
    assert vals[0] > vals[1] > vals[2]


def test_relaxed_domain_and_range(bes, bes_solution):
    # the default constant is far too large at small blocklength
    with pytest.raises(DomainError):
        oneshot_relaxed_bound(bes, bes_solution, 0.375, k=8, gamma=3.0, m=5)
    with pytest.raises(OutOfRange):
        oneshot_relaxed_bound(bes, bes_solution, 0.375, k=8, gamma=0.0, m=5,
                              c0=0.005)
    with pytest.raises(OutOfRange):
        oneshot_relaxed_bound(bes, bes_solution, 0.375, k=8, gamma=3.0, m=0,
                              c0=0.005)


# -- joint variant ---------------------------------------------------------------


def test_joint_requires_joint_solution(bes, bes_solution):
    with pytest.raises(OutOfRange):
        oneshot_joint_bound(bes, bes_solution, 0.375, 0.3, k=3, m=2)


def test_joint_reduces_to_plain_when_dx_slack(bes_hamming, hamming_joint):
    """With the observation target at the table maximum the mismatch event
    never fires, and the pair draw folds to the first coordinate."""
    plain = oneshot_bound(bes_hamming, hamming_joint, 0.375, k=4, m=3,
                          method="exact")
    joint = oneshot_joint_bound(bes_hamming, hamming_joint, 0.375, d_x=1.0,
                                k=4, m=3, method="exact")
    assert joint.value == pytest.approx(plain.value, abs=1e-12)
    assert joint.value == pytest.approx(0.4053945541381836, abs=1e-12)


def test_joint_nonincreasing_in_dx(bes_hamming, hamming_joint):
    loose = oneshot_joint_bound(bes_hamming, hamming_joint, 0.375, d_x=1.0,
                                k=3, m=2, method="exact").value
    tight = oneshot_joint_bound(bes_hamming, hamming_joint, 0.375, d_x=0.0,
                                k=3, m=2, method="exact").value
    assert tight >= loose
    with pytest.raises(OutOfRange):
        oneshot_joint_bound(bes_hamming, hamming_joint, 0.375, 0.3, k=3, m=0)


def test_joint_mc_tracks_exact(bes_hamming, hamming_joint):
    exact = oneshot_joint_bound(bes_hamming, hamming_joint, 0.375, d_x=0.25,
                                k=3, m=2, method="exact").value
    mc = oneshot_joint_bound(bes_hamming, hamming_joint, 0.375, d_x=0.25,
                             k=3, m=2, method="mc", samples=48, inner=256,
                             seed=8)
    assert mc.value >= exact - 3 * mc.half_width


# -- exponent diagnostic ----------------------------------------------------------


def test_g_exponent_holds_with_small_constant(bes, bes_solution):
    frac = g_exponent_check(bes, bes_solution, 0.375, k=8,
                            t_grid=[0.96, 0.98], c0=0.005, samples=60,
                            seed=0, c_const=5.0)
    assert frac == 1.0


def test_g_exponent_domain(bes, bes_solution):
    with pytest.raises(DomainError):
        g_exponent_check(bes, bes_solution, 0.375, k=8, t_grid=[0.5],
                         c0=0.005)   # below 2*zeta/sqrt(k)
    with pytest.raises(DomainError):
        g_exponent_check(bes, bes_solution, 0.375, k=8, t_grid=[1.2],
                         c0=0.005)
    with pytest.raises(DomainError):
        g_exponent_check(bes, bes_solution, 0.375, k=8, t_grid=[0.96])


def test_bound_estimate_fields():
    est = BoundEstimate(value=0.5, half_width=0.1, method="mc", seed=1,
                        samples=10)
    assert est.method == "mc" and est.seed == 1
