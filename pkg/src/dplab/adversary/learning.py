"""Attack on private online learners for point functions.

The query distribution has sqrt(T) phases of sqrt(T) rounds each; phase j
queries points drawn uniformly from its own block X_j with label 0. If every
point of every block is labelled 1 often enough, the learner pays mistakes
directly (Case 1). Otherwise a rarely-gambled point k' is found (Case 2),
the query sequence is fixed, and the hard-instance construction inserts
(k', 1) examples into that phase, treating "h_i(k') = 1" as halting.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from ..core import ParameterError, RandomSource, UpdateStream
from ..learners import OnlineLearner
from .hard_instance import (
    HaltDistribution,
    HardInstance,
    build_hard_instance,
    halt_distribution_from_times,
    hard_instance_length,
    hoeffding_radius,
    stream_key,
)

LearnerFactory = Callable[[RandomSource], OnlineLearner]

CASE2_THRESHOLD = 0.001
WITNESS_FREQUENCY = 0.99
MAX_CANDIDATES = 10_000


@dataclass
class PhaseLayout:
    T: int
    k: int

    @classmethod
    def for_horizon(cls, T: int) -> "PhaseLayout":
        k = math.isqrt(T)
        if k * k != T or k < 2:
            raise ParameterError(f"T must be a perfect square >= 4, got {T}")
        return cls(T, k)

    def block(self, j: int) -> np.ndarray:
        """Points X_j = {(j-1)k + 1, ..., jk} for 1-based phase j."""
        return np.arange((j - 1) * self.k + 1, j * self.k + 1)

    def rounds(self, j: int) -> range:
        """0-based round indices of phase j."""
        return range((j - 1) * self.k, j * self.k)

    def sample_queries(self, rng: RandomSource) -> np.ndarray:
        offsets = np.repeat(np.arange(self.k) * self.k + 1, self.k)
        return offsets + rng.gen.integers(0, self.k, size=self.T)

    @property
    def hard_k(self) -> int:
        """Largest k_h whose hard-instance grid 2^(k_h+1) - 2 fits in one phase."""
        return int(math.floor(math.log2(self.k + 2))) - 1


@dataclass
class LearningAttackReport:
    T: int
    phase_length: int
    case: int
    trials: int
    min_phase_sum: float
    expected_mistakes: float
    case1_lower_bound: float
    witness_phase: Optional[int] = None
    witness_point: Optional[int] = None
    cond_phase_sum: Optional[float] = None
    cond_tolerance: Optional[float] = None
    candidates_tried: Optional[int] = None
    hard_k: Optional[int] = None
    grid_length: Optional[int] = None
    insert_positions: Optional[str] = None
    c_total: Optional[float] = None
    mean_mistakes: Optional[float] = None
    note: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def _probe_run(learner: OnlineLearner, queries: np.ndarray, labels: np.ndarray, layout: PhaseLayout):
    """Play one run, probing each hypothesis on the active phase block."""
    hits = np.zeros((layout.T, layout.k), dtype=np.int8)
    for i in range(layout.T):
        j = i // layout.k + 1
        hits[i] = learner.hypothesis()(layout.block(j))
        learner.observe(int(queries[i]), int(labels[i]))
    return hits


def _first_hit(learner: OnlineLearner, queries, labels, point: int, rounds: list[int]) -> int:
    """1-based grid index of the first probed round with h(point) = 1, else 0."""
    watch = {r: g for g, r in enumerate(rounds, start=1)}
    last = rounds[-1]
    for i in range(last + 1):
        if i in watch and learner.hypothesis().at(point):
            return watch[i]
        learner.observe(int(queries[i]), int(labels[i]))
    return 0


def _count_mistakes(learner: OnlineLearner, queries, labels) -> int:
    wrong = 0
    for x, y in zip(queries, labels):
        wrong += learner.hypothesis().at(int(x)) != y
        learner.observe(int(x), int(y))
    return wrong


def learning_attack(
    learner_factory: LearnerFactory,
    T: int,
    trials: int,
    rng: RandomSource,
    witness_runs: int = 100,
    max_candidates: int = MAX_CANDIDATES,
    oracle_trials: Optional[int] = None,
) -> LearningAttackReport:
    layout = PhaseLayout.for_horizon(T)
    k = layout.k
    zeros = np.zeros(T, dtype=np.int64)
    oracle_trials = oracle_trials or trials

    queries = np.empty((trials, T), dtype=np.int64)
    hits = np.empty((trials, T, k), dtype=np.int8)
    for s in range(trials):
        queries[s] = layout.sample_queries(rng.derive(1).trial(s))
        hits[s] = _probe_run(learner_factory(rng.derive(2).trial(s)), queries[s], zeros, layout)

    p_hat = hits.mean(axis=0)  # (round, point-in-block)
    phase_sums = p_hat.reshape(k, k, k).sum(axis=1)  # (phase, point-in-block)
    expected = float(p_hat.sum() / k)
    report = LearningAttackReport(
        T, k, 1, trials, float(phase_sums.min()), expected, CASE2_THRESHOLD * k
    )

    if phase_sums.min() >= CASE2_THRESHOLD:
        report.note = "every phase sum >= 0.001"
        return report

    j0, c0 = np.unravel_index(np.argmin(phase_sums), phase_sums.shape)
    j, point = int(j0) + 1, int(layout.block(int(j0) + 1)[c0])
    phase = list(layout.rounds(j))
    avoid = (queries[:, phase] != point).all(axis=1)
    n_avoid = int(avoid.sum())
    report.witness_phase, report.witness_point = j, point
    if n_avoid:
        report.cond_phase_sum = float(hits[avoid][:, phase, c0].mean(axis=0).sum())
        report.cond_tolerance = math.sqrt(math.log(200) / (2 * n_avoid))

    base = _find_witness_sequence(learner_factory, layout, j, point, rng, witness_runs, max_candidates, report)
    if base is None:
        report.note = "no Case-2 witness sequence within budget; reporting Case 1 mistake mass"
        return report

    report.case = 2
    k_h = layout.hard_k
    grid = phase[: hard_instance_length(k_h)]

    def oracle(bits: UpdateStream) -> HaltDistribution:
        q, y = _insert(base, grid, bits, point)
        sub = rng.derive(5, stream_key(bits))
        halts = np.array(
            [_first_hit(learner_factory(sub.trial(s)), q, y, point, grid) for s in range(oracle_trials)]
        )
        return halt_distribution_from_times(halts, len(grid), hoeffding_radius(len(grid), oracle_trials))

    hard: HardInstance = build_hard_instance(oracle, k_h)
    q, y = _insert(base, grid, hard.stream, point)
    final = rng.derive(6)
    counts = [_count_mistakes(learner_factory(final.trial(s)), q, y) for s in range(trials)]

    report.hard_k = k_h
    report.grid_length = len(grid)
    report.insert_positions = " ".join(str(grid[g - 1] + 1) for g in hard.stream.one_positions())
    report.c_total = hard.c_total
    report.mean_mistakes = float(np.mean(counts))
    return report


def _insert(base: np.ndarray, grid: list[int], bits: UpdateStream, point: int):
    q = base.copy()
    y = np.zeros_like(base)
    for g in bits.one_positions():
        q[grid[g - 1]] = point
        y[grid[g - 1]] = 1
    return q, y


def _find_witness_sequence(learner_factory, layout, j, point, rng, runs, max_candidates, report):
    """Rejection-sample query sequences avoiding ``point`` in phase j until one
    keeps h_i(point) = 0 across the phase in >= 99% of learner runs."""
    phase = list(layout.rounds(j))
    zeros = np.zeros(layout.T, dtype=np.int64)
    allowed_failures = math.floor((1 - WITNESS_FREQUENCY) * runs)
    for cand in range(max_candidates):
        seq = layout.sample_queries(rng.derive(3).trial(cand))
        if (seq[phase] == point).any():
            continue
        failures = 0
        sub = rng.derive(4, cand)
        for s in range(runs):
            if _first_hit(learner_factory(sub.trial(s)), seq, zeros, point, phase):
                failures += 1
                if failures > allowed_failures:
                    break
        if failures <= allowed_failures:
            report.candidates_tried = cand + 1
            return seq
    report.candidates_tried = max_candidates
    return None
