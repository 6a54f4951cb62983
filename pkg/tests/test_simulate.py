"""Random-code construction, encoding and excess-probability estimation.

The load-bearing check is the tiny-ensemble equality: at k = 2, M = 2 the
average excess over all sixteen codebooks, with literal lowest-index
tie-breaking, is enumerated outright and must match ensemble_excess_exact
to the last bit of arithmetic.  The rest cross-checks the literal and
ensemble estimators against each other and pins down seeding behavior.
"""

import itertools
import math

import numpy as np
import pytest

from remoterd import (
    ba_joint,
    degenerate_joint_completion,
    encode,
    ensemble_excess_exact,
    estimate_excess,
    estimate_excess_ensemble,
    estimate_excess_joint,
    pi_exact,
    sample_codebook,
    solve_for_distortion,
    streamed_codebook,
)
from remoterd.simulate import Codebook
from remoterd.errors import (
    BudgetExceeded,
    LengthMismatch,
    OutOfRange,
    UnsupportedModel,
)


def brute_ensemble_excess(model, solution, d_s, k, m):
    """Average excess probability over every possible codebook, encoding
    by minimal surrogate sum with ties to the lowest row."""
    q = solution.marginal
    zs = model.s_hat.symbols
    w, pw = model.noise.support, model.noise.probs
    dbar = model.surrogate_matrix()
    n_x = model.p_x.size
    rows = list(itertools.product(range(q.size), repeat=k))
    total = 0.0
    for cb in itertools.product(range(len(rows)), repeat=m):
        p_cb = 1.0
        for r in cb:
            for z in rows[r]:
                p_cb *= float(q[z])
        for x in itertools.product(range(n_x), repeat=k):
            p_x = float(np.prod(model.p_x[list(x)]))
            costs = [sum(dbar[x[i], rows[r][i]] for i in range(k))
                     for r in cb]
            best = min(range(m), key=lambda r: (costs[r], r))
            offs = np.array([model.phi[x[i]] - zs[rows[cb[best]][i]]
                             for i in range(k)])
            p_exc = 0.0
            for draw in itertools.product(range(w.size), repeat=k):
                idx = np.asarray(draw, dtype=int)
                if float(((offs + w[idx]) ** 2).sum()) > k * d_s:
                    p_exc += float(pw[idx].prod())
            total += p_cb * p_x * p_exc
    return total


# -- codebook construction -------------------------------------------------------


def test_codebook_shapes_and_determinism(bes, bes_solution):
    cb = sample_codebook(bes, bes_solution, k=5, m=12, seed=3)
    assert cb.m == 12 and cb.k == 5 and not cb.is_pair
    assert cb.entries.shape == (12, 5)
    assert cb.col_idx.shape == (12, 5)
    again = sample_codebook(bes, bes_solution, k=5, m=12, seed=3)
    assert np.array_equal(cb.col_idx, again.col_idx)
    other = sample_codebook(bes, bes_solution, k=5, m=12, seed=4)
    assert not np.array_equal(cb.col_idx, other.col_idx)


def test_codebook_letter_frequencies(bes, bes_solution):
    cb = sample_codebook(bes, bes_solution, k=4, m=20000, seed=1)
    freq = cb.col_idx.mean()
    assert abs(freq - 0.5) < 0.01   # marginal is uniform at this target


def test_codebook_limits(bes, bes_solution):
    with pytest.raises(BudgetExceeded):
        sample_codebook(bes, bes_solution, k=10, m=100, seed=0, budget=500)
    with pytest.raises(OutOfRange):
        sample_codebook(bes, bes_solution, k=4, m=0, seed=0)
    with pytest.raises(OutOfRange):
        streamed_codebook(bes, bes_solution, k=0, m=4, seed=0)


def test_streamed_prefix_and_row_lookup(bes, bes_solution):
    """Blocks are seeded by (seed, block), so a bigger code with the same
    seed extends the smaller one and arbitrary rows can be rebuilt."""
    small = sample_codebook(bes, bes_solution, k=8, m=4, seed=7)
    big = sample_codebook(bes, bes_solution, k=8, m=64, seed=7)
    assert np.array_equal(big.col_idx[:4], small.col_idx)

    sc = streamed_codebook(bes, bes_solution, k=2, m=100, seed=5, block=16)
    mat = np.concatenate([rows for _, rows in sc.iter_blocks()], axis=0)
    assert mat.shape == (100, 2)
    idx = np.array([0, 15, 16, 17, 33, 99])
    assert np.array_equal(sc.rows(idx), mat[idx])


def test_pair_codebook_entries(bes_hamming, hamming_joint):
    cb = sample_codebook(bes_hamming, hamming_joint, k=6, m=8, seed=2)
    assert cb.is_pair and cb.entries.shape == (8, 6, 2)
    n_y = hamming_joint.pair_shape[1]
    z = bes_hamming.s_hat.symbols[cb.col_idx // n_y]
    y = bes_hamming.x_hat.symbols[cb.col_idx % n_y]
    assert np.array_equal(cb.entries[..., 0], z)
    assert np.array_equal(cb.entries[..., 1], y)
    assert cb.weights == (hamming_joint.lambda_s, hamming_joint.lambda_x)


# -- encoding ---------------------------------------------------------------------


def brute_encode(model, codebook, x_idx):
    if codebook.is_pair:
        lam_s, lam_x = codebook.weights
        n_y = codebook.pair_shape[1]
        dbar = model.surrogate_matrix()

        def letter(a, col):
            return lam_s * dbar[a, col // n_y] \
                + lam_x * model.d_x_table[a, col % n_y]
    else:
        dbar = model.surrogate_matrix()

        def letter(a, col):
            return dbar[a, col]

    best, best_row = math.inf, 0
    for r in range(codebook.m):
        cost = sum(letter(a, c) for a, c in zip(x_idx, codebook.col_idx[r]))
        if cost < best:
            best, best_row = cost, r
    return best_row


def test_encode_matches_reference_loop(bes, bes_solution):
    cb = sample_codebook(bes, bes_solution, k=3, m=5, seed=11)
    for x in itertools.product(range(2), repeat=3):
        assert encode(bes, cb, list(x)) == brute_encode(bes, cb, x)


def test_encode_joint_weighted_cost(bes_hamming, hamming_joint):
    cb = sample_codebook(bes_hamming, hamming_joint, k=3, m=6, seed=13)
    for x in itertools.product(range(2), repeat=3):
        assert encode(bes_hamming, cb, list(x)) == brute_encode(
            bes_hamming, cb, x)


def test_encode_tie_goes_to_lowest_row(bes):
    cols = np.array([[0, 1], [0, 1], [1, 0]])
    cb = Codebook(k=2, entries=bes.s_hat.symbols[cols], seed=0, col_idx=cols)
    assert encode(bes, cb, [0, 1]) == 0


def test_encode_min_pi_rule(bes, bes_solution):
    cb = sample_codebook(bes, bes_solution, k=3, m=6, seed=15)
    for x in itertools.product(range(2), repeat=3):
        got = encode(bes, cb, list(x), rule="min_pi", d_s=0.375)
        pis = [pi_exact(bes, list(x),
                        bes.s_hat.symbols[cb.col_idx[r]], 0.375)
               for r in range(cb.m)]
        assert pis[got] == min(pis)
    with pytest.raises(OutOfRange):
        encode(bes, cb, [0, 1, 0], rule="min_pi")
    with pytest.raises(OutOfRange):
        encode(bes, cb, [0, 1, 0], rule="nearest")
    with pytest.raises(LengthMismatch):
        encode(bes, cb, [0, 1])


# -- literal-codebook trials -------------------------------------------------------


def test_excess_extremes(bes, bes_solution):
    cb = sample_codebook(bes, bes_solution, k=8, m=16, seed=0)
    assert estimate_excess(bes, cb, -0.1, trials=500, seed=1).excess_prob \
        == 1.0
    assert estimate_excess(bes, cb, 3.0, trials=500, seed=1).excess_prob \
        == 0.0
    with pytest.raises(OutOfRange):
        estimate_excess(bes, cb, 0.375, trials=0, seed=1)


def test_excess_thread_count_is_invisible(bes, bes_solution):
    cb = sample_codebook(bes, bes_solution, k=8, m=16, seed=0)
    one = estimate_excess(bes, cb, 0.375, trials=5000, seed=9, threads=1)
    three = estimate_excess(bes, cb, 0.375, trials=5000, seed=9, threads=3)
    assert one == three
    ens_one = estimate_excess_ensemble(bes, bes_solution, 0.375, 8, 16,
                                       trials=5000, seed=9, threads=1)
    ens_three = estimate_excess_ensemble(bes, bes_solution, 0.375, 8, 16,
                                         trials=5000, seed=9, threads=3)
    assert ens_one == ens_three


def test_sim_result_fields(bes, bes_solution):
    cb = sample_codebook(bes, bes_solution, k=8, m=16, seed=0)
    res = estimate_excess(bes, cb, 0.375, trials=100, seed=4)
    assert res.k == 8 and res.trials == 100 and res.seed == 4
    assert res.m_log_nats == pytest.approx(math.log(16), rel=1e-15)
    assert res.d_x is None
    assert 0.0 < res.half_width < 0.15


def test_bigger_codebook_lowers_excess(bes, bes_solution):
    small = sample_codebook(bes, bes_solution, k=8, m=4, seed=7)
    big = sample_codebook(bes, bes_solution, k=8, m=64, seed=7)
    r4 = estimate_excess(bes, small, 0.375, trials=20000, seed=42)
    r64 = estimate_excess(bes, big, 0.375, trials=20000, seed=42)
    assert r64.excess_prob < r4.excess_prob


def test_joint_trials(bes_hamming, hamming_joint, bes, bes_solution):
    cb = sample_codebook(bes_hamming, hamming_joint, k=6, m=8, seed=2)
    res = estimate_excess_joint(bes_hamming, cb, 0.45, 0.4, trials=4000,
                                seed=5)
    assert res.d_x == 0.4 and 0.0 < res.excess_prob < 1.0
    # loosening the observation target can only drop the union event
    loose = estimate_excess_joint(bes_hamming, cb, 0.45, 1.0, trials=4000,
                                  seed=5)
    assert loose.excess_prob <= res.excess_prob
    plain_cb = sample_codebook(bes, bes_solution, k=6, m=8, seed=2)
    with pytest.raises(OutOfRange):
        estimate_excess_joint(bes, plain_cb, 0.45, 0.4, trials=10, seed=0)


# -- codebook-ensemble law ----------------------------------------------------------


def test_ensemble_matches_full_enumeration(bes, bes_solution):
    for d_s in (0.1, 0.2, 0.375):
        want = brute_ensemble_excess(bes, bes_solution, d_s, k=2, m=2)
        got = ensemble_excess_exact(bes, bes_solution, d_s, 2, 2)
        assert got == pytest.approx(want, abs=1e-14)


def test_ensemble_frozen_value(bes, bes_solution):
    got = ensemble_excess_exact(bes, bes_solution, 0.375, 8, 16)
    assert got == pytest.approx(0.30997695605507475, abs=1e-13)


def test_ensemble_nonincreasing_in_m(bes, bes_solution):
    ms = (1, 4, 16, 64, 10 ** 6, 10 ** 12)
    vals = [ensemble_excess_exact(bes, bes_solution, 0.375, 8, m)
            for m in ms]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == 0.0


def test_ensemble_agrees_with_pooled_literal_codes(bes, bes_solution):
    """Two dozen literal codebooks with fresh trial streams pool to the
    ensemble average within a few thousandths."""
    exact = ensemble_excess_exact(bes, bes_solution, 0.375, 8, 16)
    pooled = 0.0
    for seed in range(24):
        cb = sample_codebook(bes, bes_solution, 8, 16, seed=seed)
        r = estimate_excess(bes, cb, 0.375, trials=2500, seed=1000 + seed)
        pooled += r.excess_prob / 24
    assert abs(pooled - exact) < 0.012


def test_ensemble_sampler_tracks_exact(bes, bes_solution):
    exact = ensemble_excess_exact(bes, bes_solution, 0.375, 8, 16)
    est = estimate_excess_ensemble(bes, bes_solution, 0.375, 8, 16,
                                   trials=40000, seed=3)
    assert abs(est.excess_prob - exact) <= 3 * est.half_width
    with pytest.raises(OutOfRange):
        estimate_excess_ensemble(bes, bes_solution, 0.375, 8, 16, trials=0,
                                 seed=3)


def test_ensemble_rejects_asymmetric_score_law(bes_asym):
    """A skewed prior makes the output marginal nonuniform, so the
    per-letter codeword score law differs between source letters."""
    solution = solve_for_distortion(bes_asym, 0.375)
    with pytest.raises(UnsupportedModel):
        ensemble_excess_exact(bes_asym, solution, 0.375, 4, 4)


def test_ensemble_composition_budget(bes, bes_solution):
    with pytest.raises(BudgetExceeded):
        ensemble_excess_exact(bes, bes_solution, 0.375, 8, 16, comp_cap=5)
    with pytest.raises(BudgetExceeded):
        estimate_excess_ensemble(bes, bes_solution, 0.375, 8, 16, trials=10,
                                 seed=0, comp_cap=5)


def test_ensemble_joint_completion(bes_hamming, bes, bes_solution):
    """The observation-slack completion keeps the hidden-distortion law of
    the plain code; an unreachable d_x target reproduces it exactly and a
    binding one can only add excess."""
    base = solve_for_distortion(bes_hamming, 0.375)
    completed = degenerate_joint_completion(bes_hamming, base)
    assert completed.lambda_x == 0.0
    plain = ensemble_excess_exact(bes, bes_solution, 0.375, 8, 16)
    slack = ensemble_excess_exact(bes_hamming, completed, 0.375, 8, 16,
                                  d_x=1.0)
    binding = ensemble_excess_exact(bes_hamming, completed, 0.375, 8, 16,
                                    d_x=0.3)
    assert slack == pytest.approx(plain, abs=1e-13)
    assert binding == pytest.approx(0.33242744106994654, abs=1e-13)
    assert binding >= slack


def test_ensemble_joint_coupled_model(grouped, grouped_joint):
    got = ensemble_excess_exact(grouped, grouped_joint, 0.25, 4, 8, d_x=0.3)
    assert got == pytest.approx(0.7931003287419671, abs=1e-12)
    with pytest.raises(OutOfRange):
        ensemble_excess_exact(grouped, grouped_joint, 0.25, 4, 8)
