"""Map an update stream onto an offline threshold-query instance."""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction

from ..core import ParameterError, UpdateStream


@dataclass(frozen=True)
class QueryDataset:
    """Points in [0, 1] and a non-decreasing sequence of thresholds.

    Values are exact fractions so that counting points at or below a query
    has no rounding ambiguity at the boundaries.
    """

    points: tuple[Fraction, ...]
    queries: tuple[Fraction, ...]

    def __post_init__(self):
        if any(not 0 <= v <= 1 for v in self.points + self.queries):
            raise ParameterError("points and queries must lie in [0, 1]")
        if any(a > b for a, b in zip(self.queries, self.queries[1:])):
            raise ParameterError("queries must be non-decreasing")

    def answers(self) -> list[int]:
        """Number of points at or below each query."""
        pts = sorted(self.points)
        return [bisect_right(pts, q) for q in self.queries]


def stream_to_query_instance(stream: UpdateStream) -> QueryDataset:
    """Point i/(T+1) for every 1 at position i; queries 1/T, 2/T, ..., 1."""
    T = len(stream)
    points = tuple(Fraction(i, T + 1) for i in stream.one_positions())
    queries = tuple(Fraction(j, T) for j in range(1, T + 1))
    return QueryDataset(points, queries)


def query_instance_to_stream(dataset: QueryDataset) -> UpdateStream:
    """Inverse on the image of stream_to_query_instance."""
    T = len(dataset.queries)
    bits = [0] * T
    for p in dataset.points:
        i = p * (T + 1)
        if i.denominator != 1 or not 1 <= i <= T or bits[int(i) - 1]:
            raise ParameterError(f"point {p} is not on the grid 1/(T+1), ..., T/(T+1)")
        bits[int(i) - 1] = 1
    return UpdateStream(bits)
