"""Shared models and solved operating points for the test suite.

The workhorse is the binary-symmetric model (uniform bit, identity phi,
noise -1/2, 0, +1/2 with probabilities 1/4, 1/2, 1/4, binary reproduction):
its surrogate problem reduces to a Hamming problem with effective crossover
d = d_s - 1/8, so the rate and multiplier have closed forms that serve as
independent oracles throughout.  The other models stress what the binary
one cannot: a non-uniform prior (nonzero direct dispersion), a 4-ary
observation with a 3-letter reproduction (full-support non-uniform
marginal), a Hamming observation constraint (degenerate joint region), a
grouped phi (genuinely coupled joint region), and wide noise (small
normal-approximation constant under the default c0).
"""

import numpy as np
import pytest

from remoterd import (
    NoiseSpec,
    SourceModel,
    TiltedContext,
    ba_joint,
    dispersion,
    solve_for_distortion,
    solve_joint_for_distortions,
)

BES_NOISE = ([-0.5, 0.0, 0.5], [0.25, 0.5, 0.25])


def make_bes(p0: float = 0.5) -> SourceModel:
    return SourceModel(x=[0, 1], p_x=[p0, 1.0 - p0], phi=[0.0, 1.0],
                       noise=NoiseSpec(*BES_NOISE), s_hat=[0.0, 1.0])


def make_bes_hamming(p0: float = 0.5) -> SourceModel:
    return SourceModel(x=[0, 1], p_x=[p0, 1.0 - p0], phi=[0.0, 1.0],
                       noise=NoiseSpec(*BES_NOISE), s_hat=[0.0, 1.0],
                       x_hat=[0, 1], d_x_table=[[0.0, 1.0], [1.0, 0.0]])


def make_fourary() -> SourceModel:
    return SourceModel(x=[0, 1, 2, 3], p_x=[0.2, 0.3, 0.3, 0.2],
                       phi=[0.0, 0.7, 1.3, 2.0],
                       noise=NoiseSpec(*BES_NOISE), s_hat=[0.0, 1.0, 2.0])


def make_fourary_dx() -> SourceModel:
    # arbitrary asymmetric two-letter observation table; used only for
    # joint identity checks at fixed multipliers
    return SourceModel(x=[0, 1, 2, 3], p_x=[0.2, 0.3, 0.3, 0.2],
                       phi=[0.0, 0.7, 1.3, 2.0],
                       noise=NoiseSpec(*BES_NOISE), s_hat=[0.0, 1.0, 2.0],
                       x_hat=[0, 1],
                       d_x_table=[[0.0, 1.0], [0.3, 0.4], [0.7, 0.2],
                                  [1.0, 0.0]])


def make_grouped() -> SourceModel:
    # two observations per phi value: reproducing x well requires splitting
    # codewords that the surrogate problem alone would merge, so both
    # constraints can bind at once
    return SourceModel(x=[0, 1, 2, 3], p_x=[0.25] * 4, phi=[0.0, 0.0, 1.0, 1.0],
                       noise=NoiseSpec(*BES_NOISE), s_hat=[0.0, 1.0],
                       x_hat=[0, 1, 2, 3],
                       d_x_table=(1.0 - np.eye(4)).tolist())


def make_widenoise() -> SourceModel:
    return SourceModel(x=[0, 1], p_x=[0.5, 0.5], phi=[0.0, 1.0],
                       noise=NoiseSpec([-2.0, 0.0, 2.0], [0.25, 0.5, 0.25]),
                       s_hat=[0.0, 1.0])


@pytest.fixture(scope="session")
def bes():
    return make_bes()


@pytest.fixture(scope="session")
def bes_asym():
    return make_bes(0.3)


@pytest.fixture(scope="session")
def fourary():
    return make_fourary()


@pytest.fixture(scope="session")
def bes_hamming():
    return make_bes_hamming()


@pytest.fixture(scope="session")
def grouped():
    return make_grouped()


@pytest.fixture(scope="session")
def widenoise():
    return make_widenoise()


@pytest.fixture(scope="session")
def bes_solution(bes):
    """The reference operating point d_s = 0.375 (lambda = ln 3)."""
    return solve_for_distortion(bes, 0.375)


@pytest.fixture(scope="session")
def bes_report(bes, bes_solution):
    return dispersion(TiltedContext(bes, bes_solution, 0.375))


@pytest.fixture(scope="session")
def hamming_joint(bes_hamming):
    """A joint point at fixed multipliers (both positive); its achieved
    distortions serve as targets wherever a joint context is needed."""
    return ba_joint(bes_hamming, 1.2, 0.8)


@pytest.fixture(scope="session")
def grouped_joint(grouped):
    """The genuinely coupled two-target solve (both multipliers positive)."""
    return solve_joint_for_distortions(grouped, 0.25, 0.3)
