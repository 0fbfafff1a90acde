"""Online learners for point functions and the hypotheses they release."""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from .core import RandomSource


class Hypothesis(ABC):
    """A {0,1}-valued function on the integer domain, queryable pointwise."""

    @abstractmethod
    def __call__(self, points) -> np.ndarray: ...

    def at(self, x: int) -> int:
        return int(self(np.array([x]))[0])


class ZeroHypothesis(Hypothesis):
    def __call__(self, points):
        return np.zeros(np.shape(points), dtype=np.int8)


class PointHypothesis(Hypothesis):
    def __init__(self, x: int):
        self.x = x

    def __call__(self, points):
        return (np.asarray(points) == self.x).astype(np.int8)


class OnlineLearner(ABC):
    """Releases a hypothesis each round, before seeing that round's example."""

    @abstractmethod
    def hypothesis(self) -> Hypothesis: ...

    @abstractmethod
    def observe(self, x: int, y: int) -> None: ...

    def predict(self, x: int) -> int:
        return self.hypothesis().at(x)


class AllZeroLearner(OnlineLearner):
    def __init__(self, rng: RandomSource | None = None):
        self._h = ZeroHypothesis()

    def hypothesis(self):
        return self._h

    def observe(self, x, y):
        pass


class NonPrivatePointLearner(OnlineLearner):
    """Consistent learner: all-zero until the first positive (x, 1), then c_x.

    Makes at most one mistake on any stream realizable by a point function.
    """

    def __init__(self, rng: RandomSource | None = None):
        self._h: Hypothesis = ZeroHypothesis()

    def hypothesis(self):
        return self._h

    def observe(self, x, y):
        if y == 1 and isinstance(self._h, ZeroHypothesis):
            self._h = PointHypothesis(x)


class RandomPointLearner(OnlineLearner):
    """Releases c_j for j uniform over {0, ..., domain_size - 1}, fresh each round."""

    def __init__(self, domain_size: int, rng: RandomSource):
        self.domain_size = domain_size
        self.rng = rng

    def hypothesis(self):
        return PointHypothesis(int(self.rng.gen.integers(self.domain_size)))

    def observe(self, x, y):
        pass


def mistakes(learner: OnlineLearner, examples) -> int:
    """Play the prediction game once and count h_i(x_i) != y_i."""
    count = 0
    for x, y in examples:
        count += learner.hypothesis().at(x) != y
        learner.observe(x, y)
    return int(count)
