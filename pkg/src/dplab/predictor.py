"""Private online prediction for point functions.

The predictor stays silent (predicts 0) until it has seen k positive labels,
privately identifies the target with a stability-based histogram, and from
then on defers to a JDP-Mirror fed with "is this the target" bits. A noisy
count of negative labels on the target (``Fake``) guards the switch to
nonzero predictions, so inconsistent inputs end in the all-zero branch.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import ParameterError, RandomSource, StateError, laplace_sample
from .learners import NonPrivatePointLearner
from .mirror import MirrorParams, MirrorState, PiLadder, derive_mirror_params

STAR = None  # histogram failure symbol; never equal to a domain element


class ProtocolError(StateError):
    """Predictions and labels were not interleaved."""


@dataclass(frozen=True)
class LabeledExample:
    x: int
    y: int

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ParameterError(f"label must be 0 or 1, got {self.y}")
        if self.x < 0:
            raise ParameterError(f"domain elements are non-negative, got {self.x}")


def histogram_threshold(eps: float, delta: float) -> float:
    return (2 / eps) * math.log(2 / delta) + 1


def sparse_histogram(
    points: Iterable[int],
    eps: float,
    delta: float,
    rng: Optional[RandomSource] = None,
    noiseless: bool = False,
    threshold: Optional[float] = None,
):
    """Noisy arg-max over the distinct elements, or STAR below threshold.

    Noise Lap(2/eps) is drawn per distinct element in ascending order; ties go
    to the smallest element.
    """
    if not eps > 0 or not 0 < delta < 1:
        raise ParameterError("need eps > 0 and 0 < delta < 1")
    values, counts = np.unique(np.asarray(list(points), dtype=np.int64), return_counts=True)
    if values.size == 0:
        return STAR
    noisy = counts.astype(float)
    if not noiseless:
        if rng is None:
            raise ParameterError("rng is required unless noiseless")
        noisy += [laplace_sample(2 / eps, rng) for _ in range(values.size)]
    tau = histogram_threshold(eps, delta) if threshold is None else threshold
    best = int(np.argmax(noisy))
    return int(values[best]) if noisy[best] >= tau else STAR


def default_k(eps: float, delta: float) -> int:
    return math.ceil((4 / eps) * math.log(2 / delta))


class Flag(IntEnum):
    COLLECTING = 0
    ARMED = 1
    FOLLOWING = 2
    DEAD = 3


@dataclass
class PredictorConfig:
    eps: float = 1.0
    delta: float = 0.05
    k: Optional[int] = None
    K: Optional[int] = None
    mirror: Optional[MirrorParams] = None
    ladder: Optional[PiLadder] = None
    noiseless: bool = False

    def __post_init__(self):
        if not 0 < self.eps <= 2 or not 0 < self.delta < 0.1:
            raise ParameterError("need 0 < eps <= 2 and 0 < delta < 0.1")
        if self.k is None:
            self.k = default_k(self.eps, self.delta)
        if self.K is None:
            self.K = 20 * self.k
        if self.ladder is None:
            self.mirror = self.mirror or derive_mirror_params(self.eps, self.delta)
            self.ladder = self.mirror.ladder()

    @property
    def fake_threshold(self) -> float:
        return (1 / self.eps) * math.log(1 / self.delta)

    @property
    def mistake_budget(self) -> int:
        return self.K + 2 * self.ladder.L


@dataclass
class PointPredictor:
    """Online predictor; call ``predict(x)`` then ``feed_label(y)`` each round."""

    config: PredictorConfig
    rng: RandomSource
    flag: Flag = Flag.COLLECTING
    count: int = 0
    x_star: Optional[int] = STAR
    history: list[LabeledExample] = field(default_factory=list)
    mirror: Optional[MirrorState] = None
    fake: Optional[float] = None
    _pending: Optional[int] = None

    def _noise(self, scale: float) -> float:
        return 0.0 if self.config.noiseless else laplace_sample(scale, self.rng)

    def _is_target(self, x: int) -> int:
        return int(self.x_star is not STAR and x == self.x_star)

    def predict(self, x: int) -> int:
        if self._pending is not None:
            raise ProtocolError("label for the previous query has not been fed")
        self._pending = x
        if self.flag in (Flag.COLLECTING, Flag.DEAD):
            return 0
        top = self.mirror.step(self._is_target(x), self.rng)
        if self.flag is Flag.ARMED and top:
            self.fake = self._fake_count() + self._noise(1 / self.config.eps)
            if self.fake >= self.config.fake_threshold:
                self.flag = Flag.DEAD
                return 0
            self.flag = Flag.FOLLOWING
        return int(top)

    def _fake_count(self) -> int:
        """Negative labels among the first 10k earlier occurrences of the target."""
        cap = 10 * self.config.k
        seen = zeros = 0
        for ex in self.history:
            if ex.x == self.x_star:
                zeros += ex.y == 0
                seen += 1
                if seen == cap:
                    break
        return zeros

    def feed_label(self, y: int) -> None:
        if self._pending is None:
            raise ProtocolError("label fed before a prediction")
        self.history.append(LabeledExample(self._pending, y))
        self._pending = None
        if self.flag is Flag.COLLECTING:
            self.count += y
            if self.count >= self.config.k:
                self._identify()

    def _identify(self) -> None:
        cfg = self.config
        positives = [ex.x for ex in self.history if ex.y == 1]
        self.x_star = sparse_histogram(positives, cfg.eps, cfg.delta, self.rng, noiseless=cfg.noiseless)
        self.mirror = MirrorState(cfg.K, cfg.ladder)
        replay = [self.mirror.step(self._is_target(ex.x), self.rng) for ex in self.history]
        self.flag = Flag.DEAD if any(replay) else Flag.ARMED


def run_predictor(predictor, examples: Sequence[LabeledExample]) -> int:
    """Mistake count of a predictor exposing predict/feed_label."""
    wrong = 0
    for ex in examples:
        wrong += predictor.predict(ex.x) != ex.y
        predictor.feed_label(ex.y)
    return wrong


class _LearnerAsPredictor:
    def __init__(self, learner):
        self.learner = learner
        self._x = None

    def predict(self, x):
        self._x = x
        return self.learner.predict(x)

    def feed_label(self, y):
        self.learner.observe(self._x, y)


def nonprivate_point_learner() -> NonPrivatePointLearner:
    return NonPrivatePointLearner()


def baseline_mistakes(examples: Sequence[LabeledExample]) -> int:
    return run_predictor(_LearnerAsPredictor(nonprivate_point_learner()), examples)


def realizable_stream_generator(
    x_star: int, T: int, positive_positions: Iterable[int], domain_size: int, rng: RandomSource
) -> list[LabeledExample]:
    """(x_star, 1) at the given 1-based positions, uniform non-target points
    labelled 0 elsewhere."""
    if not 0 <= x_star < domain_size or domain_size < 2:
        raise ParameterError("x_star must lie in a domain of size >= 2")
    positive = set(positive_positions)
    if any(not 1 <= p <= T for p in positive):
        raise ParameterError("positive positions must lie in [1, T]")
    draws = rng.gen.integers(0, domain_size - 1, size=T)
    others = draws + (draws >= x_star)
    return [
        LabeledExample(x_star, 1) if t in positive else LabeledExample(int(others[t - 1]), 0)
        for t in range(1, T + 1)
    ]


def random_positive_positions(T: int, density: float, rng: RandomSource) -> list[int]:
    return [t + 1 for t in np.flatnonzero(rng.uniform(T) < density)]


def read_examples(path: str | os.PathLike) -> list[LabeledExample]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParameterError(f"{path}:{lineno}: expected 'x y'")
            out.append(LabeledExample(int(parts[0]), int(parts[1])))
    return out


def write_examples(examples: Iterable[LabeledExample], path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.writelines(f"{ex.x} {ex.y}\n" for ex in examples)
