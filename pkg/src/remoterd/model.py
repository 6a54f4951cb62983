"""Finite source models for noisy lossy compression.

A model is the tuple (X, P_X, phi, W, S_hat[, X_hat, d_x]): a finite
observation alphabet with prior P_X, a real-valued map phi applied to the
observation, additive zero-mean noise W with finite support, and a finite
reproduction alphabet for the hidden source S = phi(X) + W.  The hidden
fidelity criterion is squared error; averaging it over the noise gives the
surrogate distortion

    dbar(x, z) = E[(S - z)^2 | X = x] = (phi(x) - z)^2 + Var[W],

which is the single quantity every downstream solver works with.  An
optional second alphabet X_hat and table d_x support joint problems where
the observation itself must also be reproduced.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateNoise,
    LengthMismatch,
    MissingDxTable,
    MomentViolation,
    ConfigError,
)

# Absolute tolerance for validating that a probability vector sums to one.
# Vectors passing the check are renormalized so downstream sums are exact.
PROB_ATOL = 1e-12

# Absolute tolerance on the zero-mean and zero-third-moment noise checks.
MOMENT_ATOL = 1e-12


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


def _validated_probs(probs, what: str) -> np.ndarray:
    p = np.array(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ConfigError(f"{what} must be a nonempty 1-d probability vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ConfigError(f"{what} must be finite and nonnegative")
    total = float(p.sum())
    if abs(total - 1.0) > PROB_ATOL:
        raise ConfigError(f"{what} sums to {total!r}, off by more than {PROB_ATOL}")
    p /= total
    p.flags.writeable = False
    return p


@dataclass(frozen=True)
class Alphabet:
    """An ordered finite set of real symbol labels.

    Order is meaningful: probability vectors, phi values and distortion
    tables are all aligned with it.
    """

    symbols: np.ndarray
    _index: dict = field(repr=False, compare=False, default=None)

    def __init__(self, symbols):
        sym = _readonly(symbols)
        if sym.ndim != 1 or sym.size == 0:
            raise ConfigError("alphabet must be a nonempty 1-d list of symbols")
        if not np.all(np.isfinite(sym)):
            raise ConfigError("alphabet symbols must be finite")
        if len(set(sym.tolist())) != sym.size:
            raise ConfigError("alphabet symbols must be distinct")
        object.__setattr__(self, "symbols", sym)
        object.__setattr__(self, "_index", {v: i for i, v in enumerate(sym.tolist())})

    def __len__(self) -> int:
        return int(self.symbols.size)

    def index(self, symbol) -> int:
        """Position of `symbol`, matching exactly."""
        try:
            return self._index[float(symbol)]
        except KeyError:
            raise ConfigError(f"symbol {symbol!r} not in alphabet") from None

    def indices(self, seq) -> np.ndarray:
        return np.array([self.index(v) for v in np.asarray(seq, dtype=float)])


@dataclass(frozen=True)
class NoiseSpec:
    """Additive noise law: finite support with matching probabilities."""

    support: np.ndarray
    probs: np.ndarray

    def __init__(self, support, probs):
        sup = _readonly(support)
        p = _validated_probs(probs, "noise_probs")
        if sup.shape != p.shape:
            raise ConfigError("noise support and probability lengths differ")
        if not np.all(np.isfinite(sup)):
            raise ConfigError("noise support must be finite")
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "probs", p)

    def moment(self, order: int) -> float:
        return float(np.dot(self.probs, self.support ** order))


@dataclass(frozen=True)
class ModelMoments:
    """Noise moments and the uniform third-moment bound for one model.

    t0 bounds, over all (x, z) pairs, the third absolute central moment of
    the per-letter distortion summand (W + a)^2 with a = phi(x) - z; it is
    the constant behind every normal-approximation certificate downstream.
    """

    sigma_w: float        # sqrt Var[W]
    sigma_w2: float       # E[W^2] = Var[W]
    sigma_w2_var: float   # Var[W^2]
    sigma_w2_sd: float    # sqrt Var[W^2]
    e_w4: float
    e_w6: float
    t0: float


@dataclass(frozen=True)
class SourceModel:
    """Immutable bundle of alphabets, prior, phi, noise and distortions."""

    x: Alphabet
    p_x: np.ndarray
    phi: np.ndarray
    noise: NoiseSpec
    s_hat: Alphabet
    x_hat: Alphabet = None
    d_x_table: np.ndarray = None

    def __init__(self, x, p_x, phi, noise, s_hat, x_hat=None, d_x_table=None):
        if not isinstance(x, Alphabet):
            x = Alphabet(x)
        if not isinstance(s_hat, Alphabet):
            s_hat = Alphabet(s_hat)
        if x_hat is not None and not isinstance(x_hat, Alphabet):
            x_hat = Alphabet(x_hat)
        if not isinstance(noise, NoiseSpec):
            raise ConfigError("noise must be a NoiseSpec")
        p = _validated_probs(p_x, "p_x")
        if p.shape != (len(x),):
            raise ConfigError("p_x length must match the observation alphabet")
        ph = _readonly(phi)
        if ph.shape != (len(x),):
            raise ConfigError("phi must list one real value per observation symbol")
        if not np.all(np.isfinite(ph)):
            raise ConfigError("phi values must be finite")
        table = None
        if d_x_table is not None:
            if x_hat is None:
                raise ConfigError("d_x_table given without x_hat_symbols")
            table = _readonly(np.reshape(np.asarray(d_x_table, dtype=float), (len(x), len(x_hat))))
            if not np.all(np.isfinite(table)) or np.any(table < 0):
                raise ConfigError("d_x_table entries must be finite and nonnegative")
        elif x_hat is not None:
            raise ConfigError("x_hat_symbols given without d_x_table")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p_x", p)
        object.__setattr__(self, "phi", ph)
        object.__setattr__(self, "noise", noise)
        object.__setattr__(self, "s_hat", s_hat)
        object.__setattr__(self, "x_hat", x_hat)
        object.__setattr__(self, "d_x_table", table)

    # -- convenience views used throughout the numeric modules ------------

    @property
    def sigma_w2(self) -> float:
        return self.noise.moment(2)

    def surrogate_matrix(self) -> np.ndarray:
        """dbar(x, z) as an (|X|, |S_hat|) array."""
        diff = self.phi[:, None] - self.s_hat.symbols[None, :]
        return diff * diff + self.sigma_w2

    def phi_of(self, x_seq) -> np.ndarray:
        return self.phi[self.x.indices(x_seq)]


def validate_model(model: SourceModel) -> ModelMoments:
    """Check the noise moment assumptions and return the derived moments.

    Raises MomentViolation when E[W] or E[W^3] is nonzero beyond tolerance,
    and DegenerateNoise when Var[W] or Var[W^2] vanishes (either collapse
    removes the randomness the fluctuation analysis quantifies).
    """
    w = model.noise
    m1, m2, m3 = w.moment(1), w.moment(2), w.moment(3)
    if abs(m1) > MOMENT_ATOL:
        raise MomentViolation(f"noise mean must be 0, got {m1!r}")
    if abs(m3) > MOMENT_ATOL:
        raise MomentViolation(f"noise third moment must be 0, got {m3!r}")
    if m2 <= MOMENT_ATOL:
        raise DegenerateNoise("noise variance is zero; the observation is noiseless")
    e_w4 = w.moment(4)
    var_w2 = e_w4 - m2 * m2
    if var_w2 <= MOMENT_ATOL:
        raise DegenerateNoise(
            "Var[W^2] is zero; squared noise is deterministic and the "
            "per-letter distortion variance floor vanishes"
        )
    e_w6 = w.moment(6)
    # Uniform bound on the centered third absolute moment of (W + a)^2 over
    # every realizable offset a = phi(x) - z.
    offsets = (model.phi[:, None] - model.s_hat.symbols[None, :]).ravel()
    t0 = 0.0
    for a in offsets:
        centered = w.support**2 + 2.0 * a * w.support - m2
        t0 = max(t0, float(np.dot(w.probs, np.abs(centered) ** 3)))
    return ModelMoments(
        sigma_w=float(np.sqrt(m2)),
        sigma_w2=float(m2),
        sigma_w2_var=float(var_w2),
        sigma_w2_sd=float(np.sqrt(var_w2)),
        e_w4=float(e_w4),
        e_w6=float(e_w6),
        t0=t0,
    )


def surrogate_distortion(model: SourceModel, x, z) -> float:
    """dbar(x, z) = (phi(x) - z)^2 + Var[W] for single symbols."""
    xi = model.x.index(x)
    zv = float(z)
    if zv not in model.s_hat._index:
        raise ConfigError(f"symbol {z!r} not in the reproduction alphabet")
    diff = model.phi[xi] - zv
    return float(diff * diff + model.sigma_w2)


def block_distortion(model: SourceModel, seq_a, seq_b, measure: str) -> float:
    """Average per-letter distortion between two equal-length sequences.

    measure selects the letter cost:
      * "squared":   (a_i - b_i)^2 on raw real values,
      * "surrogate": dbar(a_i, b_i) with a_i observation symbols and b_i
                     reproduction symbols,
      * "d_x":       table lookup with a_i observation symbols and b_i
                     observation-reproduction symbols.
    """
    a = np.asarray(seq_a, dtype=float)
    b = np.asarray(seq_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise LengthMismatch(f"sequences of shapes {a.shape} and {b.shape}")
    if measure == "squared":
        d = a - b
        return float(np.mean(d * d))
    if measure == "surrogate":
        diff = model.phi[model.x.indices(a)] - b
        for v in b:
            if float(v) not in model.s_hat._index:
                raise ConfigError(f"symbol {v!r} not in the reproduction alphabet")
        return float(np.mean(diff * diff) + model.sigma_w2)
    if measure == "d_x":
        if model.d_x_table is None:
            raise MissingDxTable("model defines no observation distortion table")
        return float(np.mean(model.d_x_table[model.x.indices(a), model.x_hat.indices(b)]))
    raise ConfigError(f"unknown distortion measure {measure!r}")


def d_min_max(model: SourceModel) -> tuple:
    """Endpoints of the nontrivial surrogate-distortion interval.

    The lower endpoint lets each observation pick its own best reproduction;
    the upper endpoint is the best single fixed reproduction.  Targets are
    meaningful strictly between the two.
    """
    dbar = model.surrogate_matrix()
    lo = float(np.dot(model.p_x, dbar.min(axis=1)))
    hi = float(np.dot(model.p_x, dbar).min())
    return lo, hi


# -- model description files ----------------------------------------------

_MODEL_KEYS = {
    "x_symbols", "p_x", "phi", "noise_support", "noise_probs",
    "s_hat_symbols", "x_hat_symbols", "d_x_table",
}


def model_from_dict(spec: dict) -> SourceModel:
    """Build a model from the documented config mapping (see cli module)."""
    if not isinstance(spec, dict):
        raise ConfigError("model description must be a mapping")
    unknown = set(spec) - _MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown model keys: {sorted(unknown)}")
    missing = {"x_symbols", "p_x", "phi", "noise_support", "noise_probs", "s_hat_symbols"} - set(spec)
    if missing:
        raise ConfigError(f"missing model keys: {sorted(missing)}")
    return SourceModel(
        x=Alphabet(spec["x_symbols"]),
        p_x=spec["p_x"],
        phi=spec["phi"],
        noise=NoiseSpec(spec["noise_support"], spec["noise_probs"]),
        s_hat=Alphabet(spec["s_hat_symbols"]),
        x_hat=Alphabet(spec["x_hat_symbols"]) if "x_hat_symbols" in spec else None,
        d_x_table=spec.get("d_x_table"),
    )


def load_model(path) -> SourceModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"model file {path}: {exc}") from None
    return model_from_dict(spec)
