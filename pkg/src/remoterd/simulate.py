"""Random-code simulation: build codebooks, encode, measure excess rates.

Two complementary paths are provided.  The literal path materializes (or
streams) an actual codebook of M i.i.d. codewords and runs encode/decode
trials against it.  The ensemble path evaluates the codebook-averaged
excess probability exactly, or samples from the exact law of the chosen
codeword, for models whose per-letter codeword score law does not depend on
the source letter; it is the only tractable route once M*k outgrows memory
and M outgrows per-trial encoding time.

All block events compare distortion sums against k times the target, the
same convention as the bound evaluators.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bounds import SUPPORT_CAP, _merge_atoms, _pi_of_offsets
from .errors import (BudgetExceeded, LengthMismatch, OutOfRange,
                     SupportOverflow, UnsupportedModel)
from .model import SourceModel
from .rd import RDSolution

CHUNK_TRIALS = 2048          # fixed trial chunk, independent of thread count
MATERIALIZE_BUDGET = 50_000_000   # codebook letters held in memory at once
STREAM_BLOCK = 65536         # codewords regenerated per streamed block
COMPOSITION_CAP = 200_000    # letter-type compositions the ensemble path enumerates


@dataclass(frozen=True)
class SimResult:
    """Outcome of a simulation run; half_width is a 95% Wilson interval."""

    excess_prob: float
    half_width: float
    trials: int
    k: int
    m_log_nats: float
    d_s: float
    seed: int
    d_x: float = None


@dataclass(frozen=True, eq=False)
class Codebook:
    """A materialized random code: M rows of k reproduction letters.

    entries holds symbol values, shape (M, k) for plain codes and
    (M, k, 2) for joint codes whose letters are (z, y) pairs.  col_idx
    holds the same codewords as indices (into the reproduction alphabet,
    or into z*n_y + y pair columns), which is what the encoders consume.
    weights carries the encoder multipliers copied from the solution that
    produced the code.
    """

    k: int
    entries: np.ndarray
    seed: int
    col_idx: np.ndarray
    pair_shape: tuple = None
    weights: tuple = None

    @property
    def m(self) -> int:
        return int(self.col_idx.shape[0])

    @property
    def is_pair(self) -> bool:
        return self.pair_shape is not None

    def iter_blocks(self):
        yield 0, self.col_idx

    def rows(self, indices) -> np.ndarray:
        return self.col_idx[indices]


@dataclass(frozen=True, eq=False)
class StreamedCodebook:
    """A random code regenerated from its seed in fixed blocks instead of
    being held in memory; block b is drawn from a generator seeded with
    (seed, b), so any subset of rows can be rebuilt deterministically."""

    k: int
    m: int
    seed: int
    support_cols: np.ndarray
    support_probs: np.ndarray
    block: int = STREAM_BLOCK
    pair_shape: tuple = None
    weights: tuple = None

    @property
    def is_pair(self) -> bool:
        return self.pair_shape is not None

    def _block_rows(self, b: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence((int(self.seed), int(b))))
        count = min(self.block, self.m - b * self.block)
        picks = rng.choice(self.support_cols.size, size=(count, self.k),
                           p=self.support_probs)
        return self.support_cols[picks]

    def iter_blocks(self):
        for b in range((self.m + self.block - 1) // self.block):
            yield b * self.block, self._block_rows(b)

    def rows(self, indices) -> np.ndarray:
        indices = np.asarray(indices)
        out = np.empty((indices.size, self.k), dtype=np.int64)
        blocks = indices // self.block
        for b in np.unique(blocks):
            rows = self._block_rows(int(b))
            sel = blocks == b
            out[sel] = rows[indices[sel] - b * self.block]
        return out


def _solution_support(model: SourceModel, solution: RDSolution):
    live = np.flatnonzero(solution.marginal > 0.0)
    return live.astype(np.int64), solution.marginal[live]


def _entries_from_cols(model, cols, pair_shape):
    if pair_shape is None:
        return model.s_hat.symbols[cols]
    n_z, n_y = pair_shape
    z = model.s_hat.symbols[cols // n_y]
    y = model.x_hat.symbols[cols % n_y]
    return np.stack((z, y), axis=-1)


def _solution_weights(solution: RDSolution):
    if solution.is_joint:
        return (solution.lambda_s, solution.lambda_x)
    return None


def streamed_codebook(model: SourceModel, solution: RDSolution, k: int, m,
                      seed: int, block: int = STREAM_BLOCK) -> StreamedCodebook:
    """Seed-defined code of m codewords regenerated on demand."""
    if m < 1 or k < 1:
        raise OutOfRange(f"need M >= 1 and k >= 1, got M={m!r} k={k!r}")
    cols, probs = _solution_support(model, solution)
    return StreamedCodebook(k=int(k), m=int(m), seed=int(seed),
                            support_cols=cols, support_probs=probs,
                            block=int(block), pair_shape=solution.pair_shape,
                            weights=_solution_weights(solution))


def sample_codebook(model: SourceModel, solution: RDSolution, k: int, m,
                    seed: int, budget: int = MATERIALIZE_BUDGET) -> Codebook:
    """Materialize m i.i.d. length-k codewords, letters drawn from the
    solution's output marginal.  Entries match streamed_codebook with the
    same seed block for block."""
    if m < 1 or k < 1:
        raise OutOfRange(f"need M >= 1 and k >= 1, got M={m!r} k={k!r}")
    if float(m) * k > budget:
        raise BudgetExceeded(
            f"codebook needs {float(m) * k:.3g} letters (budget {budget}); "
            "use streamed_codebook"
        )
    streamed = streamed_codebook(model, solution, k, m, seed)
    cols = np.concatenate([rows for _, rows in streamed.iter_blocks()], axis=0)
    return Codebook(k=int(k), entries=_entries_from_cols(model, cols,
                                                         solution.pair_shape),
                    seed=int(seed), col_idx=cols,
                    pair_shape=solution.pair_shape,
                    weights=_solution_weights(solution))


# -- encoding ------------------------------------------------------------------


def _letter_cost_table(model: SourceModel, codebook) -> np.ndarray:
    """Per-letter encoder cost, indexed [x symbol, codeword column]."""
    if not codebook.is_pair:
        return model.surrogate_matrix()
    lam_s, lam_x = codebook.weights if codebook.weights else (1.0, 1.0)
    n_z, n_y = codebook.pair_shape
    dbar = np.repeat(model.surrogate_matrix(), n_y, axis=1)
    dx = np.tile(model.d_x_table, (1, n_z))
    return lam_s * dbar + lam_x * dx


def _argmin_codewords(model: SourceModel, codebook, x_idx: np.ndarray,
                      cost_table: np.ndarray) -> np.ndarray:
    """First index attaining the minimal blockwise encoder cost, for a
    whole chunk of source rows at once.

    Costs decompose per letter, so each block's chunk-by-codeword cost
    matrix is a sum over source symbols of a one-hot matmul; ties resolve
    to the lowest codeword index because block updates require a strict
    improvement and np.argmin returns first minima.
    """
    chunk = x_idx.shape[0]
    onehots = [(x_idx == a).astype(float) for a in range(model.p_x.size)]
    best_cost = np.full(chunk, np.inf)
    best_idx = np.zeros(chunk, dtype=np.int64)
    for start, cols in codebook.iter_blocks():
        cost = np.zeros((chunk, cols.shape[0]))
        for a, onehot in enumerate(onehots):
            cost += onehot @ cost_table[a][cols].T
        block_arg = np.argmin(cost, axis=1)
        block_cost = cost[np.arange(chunk), block_arg]
        better = block_cost < best_cost
        best_cost[better] = block_cost[better]
        best_idx[better] = start + block_arg[better]
    return best_idx


def encode(model: SourceModel, codebook, x_seq,
           rule: str = "min_surrogate", d_s: float = None) -> int:
    """Index of the codeword encoding x^k; ties go to the lowest index.

    min_surrogate minimizes the blockwise surrogate distortion (the
    lambda-weighted pair cost for joint codes).  min_pi minimizes the exact
    conditional excess probability at the given distortion target and is
    intended for small-scale studies.
    """
    x_idx = model.x.indices(x_seq)
    if x_idx.size != codebook.k:
        raise LengthMismatch(
            f"x^k has length {x_idx.size}, codebook blocklength {codebook.k}"
        )
    if rule == "min_surrogate":
        table = _letter_cost_table(model, codebook)
        return int(_argmin_codewords(model, codebook, x_idx[None, :], table)[0])
    if rule != "min_pi":
        raise OutOfRange(f"unknown encoding rule {rule!r}")
    if d_s is None:
        raise OutOfRange("min_pi encoding needs the distortion target d_s")
    n_y = codebook.pair_shape[1] if codebook.is_pair else None
    phis = model.phi[x_idx]
    best, best_idx, cache = math.inf, 0, {}
    for start, cols in codebook.iter_blocks():
        z_idx = cols // n_y if n_y is not None else cols
        for r in range(cols.shape[0]):
            offs = phis - model.s_hat.symbols[z_idx[r]]
            pi = _pi_of_offsets(model, offs, d_s, SUPPORT_CAP, cache)
            if pi < best:
                best, best_idx = pi, start + r
    return best_idx


# -- excess-probability trials ---------------------------------------------------


def _wilson_half_width(p_hat: float, n: int) -> float:
    z = 1.96
    denom = 1.0 + z * z / n
    return z * math.sqrt(p_hat * (1.0 - p_hat) / n + z * z / (4.0 * n * n)) / denom


def _chunk_seeds(seed: int, n_chunks: int):
    return np.random.SeedSequence(seed).spawn(n_chunks)


def _chunk_sizes(trials: int, chunk: int):
    sizes = [chunk] * (trials // chunk)
    if trials % chunk:
        sizes.append(trials % chunk)
    return sizes


def _run_chunks(worker, trials: int, seed: int, chunk: int, threads: int) -> int:
    sizes = _chunk_sizes(trials, chunk)
    seeds = _chunk_seeds(seed, len(sizes))
    if threads <= 1:
        return sum(worker(n, s) for n, s in zip(sizes, seeds))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return sum(pool.map(worker, sizes, seeds))


def _m_log(m) -> float:
    return float(np.log(float(m)))


def _trial_excess(model, codebook, d_s, d_x, rule, count, chunk_seed):
    """One chunk of i.i.d. (X^k, W^k) trials against a fixed codebook;
    returns the number of excess events."""
    rng = np.random.default_rng(chunk_seed)
    k = codebook.k
    x_idx = rng.choice(model.p_x.size, size=(count, k), p=model.p_x)
    w = rng.choice(model.noise.support, size=(count, k), p=model.noise.probs)
    if rule == "min_surrogate":
        table = _letter_cost_table(model, codebook)
        chosen = _argmin_codewords(model, codebook, x_idx, table)
    else:
        x_symbols = model.x.symbols[x_idx]
        chosen = np.array([
            encode(model, codebook, x_symbols[r], rule, d_s)
            for r in range(count)
        ])
    cols = codebook.rows(chosen)
    n_y = codebook.pair_shape[1] if codebook.is_pair else None
    z_idx = cols // n_y if n_y is not None else cols
    offsets = model.phi[x_idx] - model.s_hat.symbols[z_idx]
    excess = ((offsets + w) ** 2).sum(axis=1) > k * d_s
    if d_x is not None:
        y_idx = cols % n_y
        excess |= model.d_x_table[x_idx, y_idx].sum(axis=1) > k * d_x
    return int(np.count_nonzero(excess))


def estimate_excess(model: SourceModel, codebook, d_s: float, trials: int,
                    seed: int, rule: str = "min_surrogate",
                    threads: int = 1, chunk: int = CHUNK_TRIALS) -> SimResult:
    """Empirical excess-distortion probability of a fixed code under
    min-cost encoding, over i.i.d. (X^k, W^k) trials.

    Trials run in fixed-size chunks with seeds spawned from the root seed,
    so the result is bit-identical for any thread count.
    """
    trials = int(trials)
    if trials < 1:
        raise OutOfRange(f"trials must be at least 1, got {trials}")
    hits = _run_chunks(
        lambda n, s: _trial_excess(model, codebook, d_s, None, rule, n, s),
        trials, seed, chunk, threads)
    p_hat = hits / trials
    return SimResult(excess_prob=p_hat,
                     half_width=_wilson_half_width(p_hat, trials),
                     trials=trials, k=codebook.k, m_log_nats=_m_log(codebook.m),
                     d_s=d_s, seed=int(seed))


def estimate_excess_joint(model: SourceModel, codebook, d_s: float,
                          d_x: float, trials: int, seed: int,
                          threads: int = 1,
                          chunk: int = CHUNK_TRIALS) -> SimResult:
    """Joint-code excess probability: the hidden-distortion event or the
    observation-distortion event, whichever fires."""
    if not codebook.is_pair:
        raise OutOfRange("joint trials need a pair codebook")
    trials = int(trials)
    if trials < 1:
        raise OutOfRange(f"trials must be at least 1, got {trials}")
    hits = _run_chunks(
        lambda n, s: _trial_excess(model, codebook, d_s, d_x,
                                   "min_surrogate", n, s),
        trials, seed, chunk, threads)
    p_hat = hits / trials
    return SimResult(excess_prob=p_hat,
                     half_width=_wilson_half_width(p_hat, trials),
                     trials=trials, k=codebook.k, m_log_nats=_m_log(codebook.m),
                     d_s=d_s, d_x=d_x, seed=int(seed))


# -- exact codebook ensemble ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _LetterItem:
    """One per-letter codeword outcome: encoder cost, hidden-distortion law
    given that outcome, observation distortion (joint codes), and the
    probability of drawing it."""

    cost: float
    law_values: np.ndarray
    law_probs: np.ndarray
    dx: float
    prob: float


def _canonical_law(values: np.ndarray, probs: np.ndarray):
    acc: dict = {}
    for v, p in zip(values.tolist(), probs.tolist()):
        key = round(v, 12)
        acc[key] = acc.get(key, 0.0) + p
    return tuple(sorted(acc.items()))


def _letter_items(model: SourceModel, solution: RDSolution, joint: bool):
    """Per-letter codeword outcome law, verified identical for every source
    letter; raises UnsupportedModel when it is not.

    The ensemble path rests on this exchangeability: when the law of
    (encoder cost, conditional distortion law, observation distortion) per
    codeword letter does not depend on X, the chosen codeword's statistics
    depend on the codebook only through i.i.d. scores.
    """
    cols, probs = _solution_support(model, solution)
    if joint:
        if not solution.is_joint:
            raise OutOfRange("observation constraint needs a joint solution")
        n_y = solution.pair_shape[1]
        z_idx, y_idx = cols // n_y, cols % n_y
        lam_s, lam_x = solution.lambda_s, solution.lambda_x
    else:
        if solution.is_joint:
            raise OutOfRange("pair solutions need an observation target d_x")
        z_idx, y_idx = cols, None
        lam_s, lam_x = 1.0, 0.0
    dbar = model.surrogate_matrix()
    w, pw = model.noise.support, model.noise.probs
    z_vals = model.s_hat.symbols[z_idx]
    per_x = []
    for a in np.flatnonzero(model.p_x > 0.0):
        table: dict = {}
        for c in range(cols.size):
            cost = lam_s * dbar[a, z_idx[c]]
            dx = 0.0
            if y_idx is not None:
                dx = float(model.d_x_table[a, y_idx[c]])
                cost += lam_x * dx
            offs = model.phi[a] - z_vals[c]
            law = _canonical_law((offs + w) ** 2, pw)
            key = (round(float(cost), 12), law, round(dx, 12))
            table[key] = table.get(key, 0.0) + float(probs[c])
        per_x.append(table)
    first = per_x[0]
    for other in per_x[1:]:
        if set(other) != set(first) or any(
                abs(other[key] - first[key]) > 1e-12 for key in first):
            raise UnsupportedModel(
                "per-letter codeword score law depends on the source letter; "
                "use a literal codebook"
            )
    items = []
    for (cost, law, dx), prob in sorted(first.items()):
        lv = np.array([v for v, _ in law])
        lp = np.array([p for _, p in law])
        items.append(_LetterItem(cost=cost, law_values=lv, law_probs=lp,
                                 dx=dx, prob=prob))
    return items


def _compositions(items, k: int, cap: int):
    """All ways to split k letters across the item types, grouped by total
    encoder cost.

    Returns ascending unique cost levels with, per level, the count matrix
    of its compositions, their conditional probabilities, and the level's
    total probability under a single codeword draw.
    """
    n_types = len(items)
    total = math.comb(k + n_types - 1, n_types - 1)
    if total > cap:
        raise BudgetExceeded(
            f"{total} letter-type compositions exceed the cap {cap}"
        )
    log_r = [math.log(it.prob) if it.prob > 0 else -math.inf for it in items]
    costs = [it.cost for it in items]
    rows, row_costs, row_probs = [], [], []
    for head in itertools.combinations(range(k + n_types - 1), n_types - 1):
        bounds = (-1,) + head + (k + n_types - 1,)
        counts = [bounds[i + 1] - bounds[i] - 1 for i in range(n_types)]
        logw = math.lgamma(k + 1)
        for n, lr in zip(counts, log_r):
            logw += n * lr - math.lgamma(n + 1)
        rows.append(counts)
        row_costs.append(math.fsum(n * c for n, c in zip(counts, costs)))
        row_probs.append(math.exp(logw))
    rows = np.asarray(rows, dtype=np.int64)
    row_costs = np.asarray(row_costs)
    row_probs = np.asarray(row_probs)
    order = np.argsort(row_costs, kind="stable")
    rows, row_costs, row_probs = rows[order], row_costs[order], row_probs[order]
    starts = np.empty(row_costs.size, dtype=bool)
    starts[0] = True
    np.greater(np.diff(row_costs), 1e-12, out=starts[1:])
    group_ids = np.cumsum(starts) - 1
    levels = []
    for g in range(int(group_ids[-1]) + 1):
        sel = group_ids == g
        probs = row_probs[sel]
        mass = float(probs.sum())
        cond = probs / mass if mass > 0 else probs
        levels.append((float(row_costs[sel][0]), rows[sel], cond, mass))
    return levels


def _min_cost_level_probs(levels, m) -> np.ndarray:
    """P[the cheapest of M i.i.d. codewords sits at each cost level].

    The survival values T_i = P[one draw costs at least level i] are taken
    from whichever cumulative direction is accurate where they are needed:
    near 1 the head-sum complement keeps T_0 exactly 1 (so powering by an
    astronomically large M cannot wipe out the total mass), in the far tail
    the reverse sum avoids cancellation.
    """
    mass = np.array([lv[3] for lv in levels])
    head = np.concatenate(((0.0,), np.cumsum(mass)))[:-1]
    rev = np.cumsum(mass[::-1])[::-1]
    tails = np.where(head < 0.5, 1.0 - head, rev)
    tails = np.concatenate((np.clip(tails, 0.0, 1.0), (0.0,)))
    powered = np.power(tails, float(m))
    return np.maximum(powered[:-1] - powered[1:], 0.0)


def _law_powers(item: _LetterItem, k: int, cap: int):
    """Laws of n-fold sums of one item's distortion law, n = 0..k."""
    powers = [(np.zeros(1), np.ones(1))]
    for _ in range(k):
        v, p = powers[-1]
        values = (v[:, None] + item.law_values[None, :]).ravel()
        probs = (p[:, None] * item.law_probs[None, :]).ravel()
        values, probs = _merge_atoms(values, probs)
        if values.size > cap:
            raise SupportOverflow(
                f"item power support reached {values.size} atoms (cap {cap})"
            )
        powers.append((values, probs))
    return powers


def _tail_prob_of_sum(laws, threshold: float) -> float:
    """P[sum of independent draws, one per law, > threshold]; the last law
    is folded via a sorted tail lookup instead of a full convolution."""
    values = np.zeros(1)
    probs = np.ones(1)
    for lv, lp in laws[:-1]:
        values = (values[:, None] + lv[None, :]).ravel()
        probs = (probs[:, None] * lp[None, :]).ravel()
        values, probs = _merge_atoms(values, probs)
    lv, lp = laws[-1]
    tail = np.concatenate((np.cumsum(lp[::-1])[::-1], (0.0,)))
    idx = np.searchsorted(lv, threshold - values, side="right")
    return float(np.dot(probs, tail[idx]))


def ensemble_excess_exact(model: SourceModel, solution: RDSolution,
                          d_s: float, k: int, m, d_x: float = None,
                          cap: int = SUPPORT_CAP,
                          comp_cap: int = COMPOSITION_CAP) -> float:
    """Exact codebook-ensemble average of the excess probability under
    min-cost encoding.

    The cheapest codeword's cost level follows a min-of-M law over the
    single-draw cost levels; conditioned on the level, the chosen codeword
    is a fresh draw from that level, so its letter-type composition and
    then its distortion law are exact finite mixtures.
    """
    joint = d_x is not None
    items = _letter_items(model, solution, joint)
    levels = _compositions(items, k, comp_cap)
    level_probs = _min_cost_level_probs(levels, m)
    dx_per_item = np.array([it.dx for it in items])
    powers = [_law_powers(it, k, cap) for it in items]
    total = 0.0
    for (cost, counts, cond, _), p_level in zip(levels, level_probs):
        if p_level <= 0.0:
            continue
        level_pi = 0.0
        for row, w_row in zip(counts, cond):
            if joint and float(row @ dx_per_item) > k * d_x:
                level_pi += w_row
                continue
            laws = [powers[j][n] for j, n in enumerate(row) if n > 0]
            if not laws:
                continue
            level_pi += w_row * _tail_prob_of_sum(laws, k * d_s)
        total += p_level * level_pi
    return total


def _ensemble_chunk(model, levels, level_probs, items, d_s, d_x, k,
                    count, chunk_seed) -> int:
    rng = np.random.default_rng(chunk_seed)
    lvl = rng.choice(len(levels), size=count, p=level_probs)
    counts = np.empty((count, len(items)), dtype=np.int64)
    for g in np.unique(lvl):
        sel = np.flatnonzero(lvl == g)
        _, rows, cond, _ = levels[g]
        picks = rng.choice(rows.shape[0], size=sel.size, p=cond)
        counts[sel] = rows[picks]
    totals = np.zeros(count)
    for j, item in enumerate(items):
        need = counts[:, j]
        draws = rng.choice(item.law_values, size=int(need.sum()),
                           p=item.law_probs)
        ends = np.cumsum(need)
        cs = np.concatenate(((0.0,), np.cumsum(draws)))
        totals += cs[ends] - cs[ends - need]
    excess = totals > k * d_s
    if d_x is not None:
        dx_vals = np.array([it.dx for it in items])
        excess |= counts @ dx_vals > k * d_x
    return int(np.count_nonzero(excess))


def estimate_excess_ensemble(model: SourceModel, solution: RDSolution,
                             d_s: float, k: int, m, trials: int, seed: int,
                             d_x: float = None, threads: int = 1,
                             chunk: int = CHUNK_TRIALS,
                             comp_cap: int = COMPOSITION_CAP) -> SimResult:
    """Trials drawn from the exact law of the chosen codeword's distortion
    under the codebook ensemble; each trial samples the cheapest codeword's
    cost level, its letter-type composition, and fresh noise.

    Equivalent in distribution to estimate_excess averaged over codebooks,
    with no M-dependence in the per-trial cost, so it scales to codebook
    sizes far beyond what can be built.
    """
    trials = int(trials)
    if trials < 1:
        raise OutOfRange(f"trials must be at least 1, got {trials}")
    joint = d_x is not None
    items = _letter_items(model, solution, joint)
    levels = _compositions(items, k, comp_cap)
    level_probs = _min_cost_level_probs(levels, m)
    level_probs = level_probs / level_probs.sum()
    hits = _run_chunks(
        lambda n, s: _ensemble_chunk(model, levels, level_probs, items,
                                     d_s, d_x, k, n, s),
        trials, seed, chunk, threads)
    p_hat = hits / trials
    return SimResult(excess_prob=p_hat,
                     half_width=_wilson_half_width(p_hat, trials),
                     trials=trials, k=int(k), m_log_nats=_m_log(m),
                     d_s=d_s, d_x=d_x, seed=int(seed))
