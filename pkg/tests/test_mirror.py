import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dplab.core import ParameterError, RandomSource, UpdateStream
from dplab.mirror import (
    MirrorState,
    audit_jdp,
    build_pi_ladder,
    composed_epsilon,
    derive_mirror_params,
    mirror_mistakes,
    mirror_step,
    mistake_counts,
    product_pmf,
    simulate_mirror,
    top_probabilities,
    verify_pi_ladder,
)


def ratio_ok(p, q, eps):
    """All four pure-eps ratio inequalities between Bern(p) and Bern(q)."""
    bound = math.exp(eps) * (1 + 1e-12)
    pairs = [(p, q), (q, p), (1 - p, 1 - q), (1 - q, 1 - p)]
    return all(a <= bound * b for a, b in pairs)


def test_ladder_worked_example():
    lad = build_pi_ladder(math.log(2), 0.05)
    assert lad.L == 4
    assert lad.cap == pytest.approx(1 / 3)
    want = [0.05, 0.1, 0.2, 1 / 3, 2 / 3, 0.8, 0.9, 0.95]
    assert [lad.prob(i) for i in range(1, 9)] == pytest.approx(want, abs=1e-15)
    assert lad.prob(0) == 0.0 and lad.prob(9) == 1.0 and lad.prob(100) == 1.0
    for i in range(1, 8):
        assert ratio_ok(lad.prob(i), lad.prob(i + 1), math.log(2))
    assert verify_pi_ladder(lad)


def test_junction_identity():
    for eps in (0.05, 0.3, 1.0, 2.0):
        cap = 1 / (1 + math.exp(eps))
        assert 1 - cap == pytest.approx(math.exp(eps) * cap, rel=1e-14)


def test_verify_rejects_perturbed_rungs():
    lad = build_pi_ladder(math.log(2), 0.05)
    rungs = list(lad.rungs)
    rungs[3] *= math.exp(2 * lad.eps_prime)
    assert not verify_pi_ladder(replace(lad, rungs=tuple(rungs)))
    rungs = list(lad.rungs)
    rungs[1] = 0.04
    assert not verify_pi_ladder(replace(lad, rungs=tuple(rungs)))


def test_ladder_parameter_errors():
    with pytest.raises(ParameterError):
        build_pi_ladder(0.0, 0.05)
    with pytest.raises(ParameterError):
        build_pi_ladder(1.0, 0.1)


def test_ladder_degenerate_when_delta_above_cap():
    lad = build_pi_ladder(2.0, 0.09)  # cap = 0.119
    assert lad.L == 1 or lad.prob(1) == 0.09
    assert verify_pi_ladder(lad)


@settings(max_examples=200)
@given(st.floats(0.01, 3.0), st.floats(1e-4, 0.0999))
def test_ladder_properties(eps, delta):
    lad = build_pi_ladder(eps, delta)
    probs = [lad.prob(i) for i in range(0, 2 * lad.L + 3)]
    assert probs == sorted(probs)
    for i in range(1, 2 * lad.L + 1):
        assert delta <= probs[i] <= 1 - delta
    for i in range(1, 2 * lad.L):
        assert ratio_ok(probs[i], probs[i + 1], eps)
    assert lad.prob(2 * lad.L) == 1 - delta
    assert verify_pi_ladder(lad)


# -- parameter derivation -------------------------------------------------


def advanced_composition(eps_prime, m, delta_pp):
    return m * eps_prime * (math.exp(eps_prime) - 1) / 2 + eps_prime * math.sqrt(2 * m * math.log(1 / delta_pp))


@pytest.mark.parametrize("eps,delta", [(1, 0.05), (2, 0.05), (0.5, 0.01), (0.1, 0.001)])
def test_derived_params_satisfy_composition(eps, delta):
    p = derive_mirror_params(eps, delta)
    lad = p.ladder()
    assert lad.L == p.L
    assert p.steps == 2 * p.L - 1
    assert advanced_composition(p.eps_prime, p.steps, delta / 4) <= eps * (1 + 1e-12)
    assert 2 * p.delta_prime + p.delta_pp <= delta
    # the boundary is tight: a slightly larger eps' breaks the budget
    bigger = p.eps_prime * (1 + 1e-6)
    m = 2 * build_pi_ladder(bigger, delta / 4).L - 1
    assert advanced_composition(bigger, m, delta / 4) > eps


def test_single_step_composition_substitution():
    e, d = 0.2, 0.05
    assert composed_epsilon(e, 1, d / 4) == pytest.approx(e * (math.exp(e) - 1) / 2 + e * math.sqrt(2 * math.log(4 / d)))


def test_doubling_delta_never_decreases_eps_prime():
    for eps in (0.5, 1.0, 2.0):
        for delta in (0.001, 0.005, 0.02, 0.04):
            assert derive_mirror_params(eps, 2 * delta).eps_prime >= derive_mirror_params(eps, delta).eps_prime


def test_derive_params_errors():
    with pytest.raises(ParameterError):
        derive_mirror_params(2.5, 0.05)
    with pytest.raises(ParameterError):
        derive_mirror_params(1.0, 0.2)


# -- the mechanism --------------------------------------------------------

LADDER = build_pi_ladder(math.log(2), 0.05)


def test_zero_input_is_always_bottom():
    st_ = MirrorState(2, LADDER)
    rng = RandomSource(0)
    assert not any(mirror_step(st_, 0, rng) for _ in range(50))
    assert st_.C == 0


def test_first_K_ones_are_bottom_then_ladder():
    K = 2
    hits = []
    for seed in range(4000):
        s = MirrorState(K, LADDER)
        rng = RandomSource(seed)
        first = [mirror_step(s, 1, rng) for _ in range(K + 1)]
        assert not any(first[:K])
        hits.append(first[K])
    assert abs(np.mean(hits) - 0.05) < 0.015


def test_top_is_deterministic_past_the_ladder():
    K = 3
    s = MirrorState(K, LADDER)
    rng = RandomSource(1)
    out = [mirror_step(s, 1, rng) for _ in range(K + 2 * LADDER.L + 10)]
    assert all(out[K + 2 * LADDER.L :])


def test_simulate_matches_interleaved_online_replay():
    stream = UpdateStream((RandomSource(4).uniform(30) < 0.6).astype(int))
    rng = RandomSource(7)
    batch = simulate_mirror(stream, 2, LADDER, 10, rng)
    for i in range(10):
        s, r = MirrorState(2, LADDER), rng.trial(i)
        assert batch[i].tolist() == [s.step(b, r) for b in stream]


def test_mirror_mistakes_examples():
    K = 3
    s = UpdateStream([1] * (K + 5))
    score = mirror_mistakes(np.zeros(len(s), bool), s, K)
    assert (score.mistakes, score.violations) == (5, 0)
    z = UpdateStream.zeros(6)
    assert mirror_mistakes(np.zeros(6, bool), z, K) == type(score)(0, 0)
    bad = np.zeros(len(s), bool)
    bad[0] = True  # top before K prior ones
    assert mirror_mistakes(bad, s, K).violations == 1
    with pytest.raises(ParameterError):
        mirror_mistakes(np.zeros(3, bool), s, K)


def test_mistake_bound_all_streams_small():
    K, T = 2, 10
    for v in range(2**T):
        s = UpdateStream.from_int(v, T)
        out = simulate_mirror(s, K, LADDER, 20, RandomSource(v))
        score = mirror_mistakes(out, s, K)
        assert (score.mistakes <= 2 * LADDER.L).all()
        assert (score.violations == 0).all()


def test_mistake_counts_distribution():
    s = UpdateStream.ones(20)
    K = 2
    counts = mistake_counts(s, K, LADDER, 20000, RandomSource(3))
    p = top_probabilities(s, K, LADDER)
    n = s.prefix_sums()
    assert counts.mean() == pytest.approx((1 - p[n > K]).sum(), abs=0.03)


# -- audit ----------------------------------------------------------------


def test_product_pmf_sums_to_one():
    outcomes = np.array(np.meshgrid(*[[0, 1]] * 3, indexing="ij")).reshape(3, -1).T.astype(bool)
    pmf = product_pmf(np.array([0.1, 0.5, 0.9]), outcomes)
    assert pmf.sum() == pytest.approx(1.0)
    assert pmf[0, 0] == pytest.approx(0.9 * 0.5 * 0.1)


def test_probability_vectors_differ_in_few_coordinates():
    K, T = 2, 14
    ones = UpdateStream.ones(T)
    p_all = top_probabilities(ones, K, LADDER)
    for i in range(1, T + 1):
        q = top_probabilities(ones.flip(i), K, LADDER)
        keep = np.arange(T) != i - 1
        diff = np.abs(p_all - q)[keep]
        changed = diff > 0
        assert changed.sum() <= 2 * LADDER.L + 1
        # coordinates that are not pure-eps' close: only the two ladder ends, each off by delta'
        loose = [t for t in np.flatnonzero(changed) if not ratio_ok(p_all[keep][t], q[keep][t], LADDER.eps_prime)]
        assert len(loose) <= 2
        assert all(diff[t] <= LADDER.delta_prime + 1e-15 for t in loose)


def test_audit_identical_pairs_have_zero_divergence():
    from dplab.core import hockey_stick_arrays

    outcomes = np.array(np.meshgrid(*[[0, 1]] * 4, indexing="ij")).reshape(4, -1).T.astype(bool)
    pmf = product_pmf(np.array([0.05, 0.2, 0.9, 1.0]), outcomes)
    assert hockey_stick_arrays(pmf, pmf, 0.0).max() == 0.0


def test_audit_passes_derived_params_small():
    rep = audit_jdp(1.0, 0.05, 1, 8)
    assert rep.passed and rep.max_divergence <= 0.05
    assert rep.pairs == 8 * 2 ** 7
    assert set(rep.as_dict()) == {
        "eps", "delta", "eps_prime", "delta_prime", "L", "T", "K", "max_divergence", "pairs", "pass",
    }


def test_audit_catches_an_overly_steep_ladder():
    # a ln 2 ladder composes far beyond eps = 0.1 over a short horizon
    rep = audit_jdp(0.1, 0.05, 1, 10, ladder=LADDER)
    assert not rep.passed


def test_audit_rejects_large_T():
    with pytest.raises(ParameterError):
        audit_jdp(1.0, 0.05, 1, 23)
