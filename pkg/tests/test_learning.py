import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dplab.adversary import PhaseLayout, hard_instance_length, learning_attack
from dplab.core import ParameterError, RandomSource
from dplab.learners import (
    AllZeroLearner,
    NonPrivatePointLearner,
    PointHypothesis,
    RandomPointLearner,
    ZeroHypothesis,
    mistakes,
)


def test_hypotheses():
    assert ZeroHypothesis()(np.arange(4)).tolist() == [0, 0, 0, 0]
    assert PointHypothesis(2)(np.arange(4)).tolist() == [0, 0, 1, 0]
    assert PointHypothesis(2).at(2) == 1


def test_nonprivate_learner_single_mistake():
    ex = [(5, 0), (3, 0), (7, 1), (7, 1), (2, 0), (7, 1)]
    assert mistakes(NonPrivatePointLearner(), ex) == 1
    assert mistakes(NonPrivatePointLearner(), [(1, 0), (2, 0)]) == 0


def test_phase_layout():
    lay = PhaseLayout.for_horizon(16)
    assert lay.k == 4
    assert lay.block(2).tolist() == [5, 6, 7, 8]
    assert list(lay.rounds(2)) == [4, 5, 6, 7]
    q = lay.sample_queries(RandomSource(0))
    for j in range(1, 5):
        assert set(q[list(lay.rounds(j))]) <= set(lay.block(j).tolist())
    with pytest.raises(ParameterError):
        PhaseLayout.for_horizon(15)


@given(st.integers(2, 200))
def test_hard_grid_fits_in_a_phase(k):
    lay = PhaseLayout(k * k, k)
    assert lay.hard_k >= 1
    assert hard_instance_length(lay.hard_k) <= k < hard_instance_length(lay.hard_k + 1)


def test_attack_on_all_zero_learner_forces_k_mistakes():
    rep = learning_attack(AllZeroLearner, 256, 40, RandomSource(1))
    assert rep.case == 2
    assert rep.mean_mistakes == rep.hard_k == 3
    assert rep.cond_phase_sum == 0.0


def test_attack_on_consistent_learner_gives_one_mistake():
    rep = learning_attack(NonPrivatePointLearner, 256, 40, RandomSource(1))
    assert rep.case == 2
    assert rep.mean_mistakes == 1.0
    assert rep.c_total == 1.0


def test_random_learner_lands_in_case_one():
    T = 64
    rep = learning_attack(lambda r: RandomPointLearner(T + 1, r), T, 200, RandomSource(2))
    assert rep.case == 1
    # each round errs with probability 1/(T+1) on the all-zero labels; sd of the mean ~ 0.07
    assert rep.expected_mistakes == pytest.approx(T / (T + 1), abs=0.3)
