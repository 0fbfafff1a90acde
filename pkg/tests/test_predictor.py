import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dplab.core import ParameterError, RandomSource
from dplab.mirror import build_pi_ladder
from dplab.predictor import (
    STAR,
    Flag,
    LabeledExample,
    PointPredictor,
    PredictorConfig,
    ProtocolError,
    baseline_mistakes,
    default_k,
    histogram_threshold,
    nonprivate_point_learner,
    read_examples,
    realizable_stream_generator,
    run_predictor,
    sparse_histogram,
    write_examples,
)


def test_histogram_empty_is_star():
    assert sparse_histogram([], 1.0, 0.05, RandomSource(0)) is STAR


def test_histogram_noiseless_threshold():
    assert sparse_histogram([5] * 8, 1.0, 0.05, noiseless=True, threshold=1) == 5
    assert sparse_histogram([5] * 8, 1.0, 0.05, noiseless=True) is STAR  # tau = 8.38
    assert sparse_histogram([3, 3, 9, 9], 1.0, 0.05, noiseless=True, threshold=1) == 3


def test_histogram_threshold_value():
    assert histogram_threshold(1.0, 0.05) == pytest.approx(2 * math.log(40) + 1)
    assert default_k(1.0, 0.05) == 15


def test_histogram_identifies_heavy_element():
    # count >= tau + (2/eps) ln 200 misses only if Lap(2/eps) < -(2/eps) ln 200: prob 1/400
    eps, delta = 1.0, 0.05
    m = math.ceil(histogram_threshold(eps, delta) + (2 / eps) * math.log(200))
    hits = [sparse_histogram([7] * m, eps, delta, RandomSource(s)) == 7 for s in range(3000)]
    assert np.mean(hits) >= 0.99


@given(st.lists(st.integers(0, 20), max_size=60), st.integers(0, 2**32 - 1))
def test_histogram_never_invents_elements(points, seed):
    out = sparse_histogram(points, 0.5, 0.05, RandomSource(seed))
    assert out is STAR or out in points


def cfg(**kw):
    return PredictorConfig(1.0, 0.05, **kw)


CFG = cfg()


def test_config_defaults():
    assert (CFG.k, CFG.K) == (15, 300)
    assert CFG.mistake_budget == 300 + 2 * CFG.ladder.L
    assert CFG.fake_threshold == pytest.approx(math.log(20))


def test_protocol_errors():
    p = PointPredictor(CFG, RandomSource(0))
    with pytest.raises(ProtocolError):
        p.feed_label(0)
    p.predict(3)
    with pytest.raises(ProtocolError):
        p.predict(4)


def test_all_negative_stream_stays_silent():
    ex = [LabeledExample(x, 0) for x in range(200)]
    p = PointPredictor(CFG, RandomSource(1))
    assert run_predictor(p, ex) == 0
    assert p.flag is Flag.COLLECTING and p.count == 0


def test_realizable_noiseless_trace():
    c = cfg(noiseless=True)
    T, x_star = 1200, 4
    ex = realizable_stream_generator(x_star, T, range(1, T + 1, 2), 50, RandomSource(2))
    p = PointPredictor(c, RandomSource(3))
    preds = []
    for e in ex:
        preds.append(p.predict(e.x))
        p.feed_label(e.y)
    assert p.x_star == x_star and p.flag is Flag.FOLLOWING
    wrong = sum(a != e.y for a, e in zip(preds, ex))
    assert wrong <= c.mistake_budget
    # predictions are 0 on the first K target queries and 1 beyond the ladder
    targets = [i for i, e in enumerate(ex) if e.y == 1]
    assert not any(preds[i] for i in targets[: c.K])
    assert all(preds[i] for i in targets[c.K + 2 * c.ladder.L :])
    assert not any(preds[i] for i, e in enumerate(ex) if e.y == 0)


def test_small_delay_exercises_flag_two():
    c = cfg(K=20, ladder=build_pi_ladder(math.log(2), 0.05))
    ex = realizable_stream_generator(1, 200, range(1, 201, 2), 30, RandomSource(0))
    p = PointPredictor(c, RandomSource(5))
    assert run_predictor(p, ex) <= c.K + 2 * c.ladder.L
    assert p.flag in (Flag.FOLLOWING, Flag.DEAD)


def test_zero_labels_on_target_kill_the_predictor():
    k = CFG.k
    history = [LabeledExample(5, 0)] * (9 * k) + [LabeledExample(5, 1)] * 600
    killed = found = 0
    for seed in range(100):
        p = PointPredictor(CFG, RandomSource(seed))
        run_predictor(p, history)
        if p.x_star == 5:
            found += 1
            killed += p.flag is Flag.DEAD
    assert found >= 90
    # Fake >= 9k - |Lap(1)| vs ln 20: failure needs |Lap| > 132
    assert killed == found


def test_dead_and_collecting_predict_zero():
    k = CFG.k
    history = [LabeledExample(5, 0)] * (9 * k) + [LabeledExample(5, 1)] * 700
    p = PointPredictor(CFG, RandomSource(0))
    for e in history:
        out = p.predict(e.x)
        if p.flag in (Flag.COLLECTING, Flag.DEAD):
            assert out == 0
        p.feed_label(e.y)


def test_mistakes_invariant_to_permuting_negatives():
    T = 900
    base = realizable_stream_generator(3, T, range(1, T + 1, 3), 100, RandomSource(9))
    perm = list(base)
    neg = [i for i, e in enumerate(base) if e.y == 0]
    window = neg[100:400]
    shuffled = np.random.default_rng(0).permutation([base[i] for i in window])
    for i, e in zip(window, shuffled):
        perm[i] = e
    c = cfg(K=60)
    a = run_predictor(PointPredictor(c, RandomSource(4)), base)
    b = run_predictor(PointPredictor(c, RandomSource(4)), perm)
    assert a == b


def test_nonprivate_learner_examples():
    ex = [LabeledExample(1, 0), LabeledExample(2, 0), LabeledExample(9, 1), LabeledExample(4, 0), LabeledExample(9, 1)]
    learner = nonprivate_point_learner()
    wrong_at = []
    for t, e in enumerate(ex, 1):
        if learner.predict(e.x) != e.y:
            wrong_at.append(t)
        learner.observe(e.x, e.y)
    assert wrong_at == [3]
    assert baseline_mistakes([LabeledExample(x, 0) for x in range(10)]) == 0


def test_generator_examples():
    rng = RandomSource(0)
    none = realizable_stream_generator(4, 50, [], 10, rng)
    assert all(e.y == 0 and e.x != 4 for e in none)
    full = realizable_stream_generator(4, 20, range(1, 21), 10, rng)
    assert all(e == LabeledExample(4, 1) for e in full)
    mixed = realizable_stream_generator(4, 300, range(1, 301, 7), 10, rng)
    assert all(e.y == int(e.x == 4) for e in mixed)
    assert all(0 <= e.x < 10 for e in mixed)
    with pytest.raises(ParameterError):
        realizable_stream_generator(4, 10, [11], 10, rng)


def test_examples_file_roundtrip(tmp_path):
    ex = realizable_stream_generator(2, 30, [3, 9], 8, RandomSource(1))
    path = tmp_path / "ex.txt"
    write_examples(ex, path)
    assert path.read_text().splitlines()[2] == "2 1"
    assert read_examples(path) == ex
    path.write_text("1 2 3\n")
    with pytest.raises(ParameterError):
        read_examples(path)
