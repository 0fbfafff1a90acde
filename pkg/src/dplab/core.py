"""Shared primitives: streams, seeded randomness, divergences and error metrics."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Hashable, Iterable, Mapping, Sequence, TypeVar

import numpy as np

T_ = TypeVar("T_")
R_ = TypeVar("R_")


class ParameterError(ValueError):
    """Raised when an operation receives arguments outside its domain."""


class StateError(RuntimeError):
    """Raised when an online mechanism is stepped in an invalid state."""


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 <= self.delta < 1:
            raise ParameterError(f"delta must lie in [0, 1), got {self.delta}")


@dataclass(frozen=True)
class UpdateStream:
    """A finite sequence of event indicators Delta_1..Delta_T."""

    bits: tuple[int, ...]

    def __init__(self, bits: Iterable[int]):
        bits = tuple(int(b) for b in bits)
        if not bits:
            raise ParameterError("stream must have positive length")
        if any(b not in (0, 1) for b in bits):
            raise ParameterError("stream entries must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def zeros(cls, length: int) -> "UpdateStream":
        return cls([0] * length)

    @classmethod
    def ones(cls, length: int) -> "UpdateStream":
        return cls([1] * length)

    @classmethod
    def from_int(cls, value: int, length: int) -> "UpdateStream":
        """Stream whose position t (1-based) is bit t-1 of ``value``."""
        return cls((value >> i) & 1 for i in range(length))

    @classmethod
    def parse(cls, text: str) -> "UpdateStream":
        return cls(int(c) for c in text.strip())

    def __len__(self) -> int:
        return len(self.bits)

    def __getitem__(self, i):
        return self.bits[i]

    def __iter__(self):
        return iter(self.bits)

    @property
    def length(self) -> int:
        return len(self.bits)

    @property
    def weight(self) -> int:
        return sum(self.bits)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.bits, dtype=np.int64)

    def prefix_sums(self) -> np.ndarray:
        return np.cumsum(self.as_array())

    def _check_position(self, position: int) -> None:
        if not 1 <= position <= len(self.bits):
            raise ParameterError(f"position {position} outside [1, {len(self.bits)}]")

    def flip(self, position: int) -> "UpdateStream":
        """Flip the bit at 1-based ``position``."""
        self._check_position(position)
        bits = list(self.bits)
        bits[position - 1] ^= 1
        return UpdateStream(bits)

    def with_one(self, position: int) -> "UpdateStream":
        self._check_position(position)
        bits = list(self.bits)
        bits[position - 1] = 1
        return UpdateStream(bits)

    def one_positions(self) -> list[int]:
        return [t + 1 for t, b in enumerate(self.bits) if b]

    def to_text(self) -> str:
        return "".join(str(b) for b in self.bits) + "\n"


def read_stream(path: str | os.PathLike) -> UpdateStream:
    return UpdateStream.parse(Path(path).read_text())


def write_stream(stream: UpdateStream, path: str | os.PathLike) -> None:
    Path(path).write_text(stream.to_text())


class FiniteDistribution(dict):
    """Outcome -> probability mapping, normalized to within 1e-9."""

    TOLERANCE = 1e-9

    def __init__(self, probs: Mapping[Hashable, float] = (), validate: bool = True):
        super().__init__(probs)
        if validate:
            if any(p < 0 for p in self.values()):
                raise ParameterError("probabilities must be nonnegative")
            total = math.fsum(self.values())
            if abs(total - 1.0) > self.TOLERANCE:
                raise ParameterError(f"probabilities sum to {total}, not 1")

    @classmethod
    def bernoulli(cls, p: float) -> "FiniteDistribution":
        return cls({0: 1.0 - p, 1: p})


@dataclass
class RandomSource:
    """A reproducible random substream addressed by ``(seed, index)``.

    Draws are consumed from a lazily created PCG64 generator, so two sources
    with the same address yield bit-identical sequences.
    """

    seed: int
    index: int = 0
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            self._gen = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence([self.seed & (2**64 - 1), self.index]))
            )
        return self._gen

    def trial(self, i: int) -> "RandomSource":
        """Substream for unit of work ``i`` under the same master seed."""
        return RandomSource(self.seed, i)

    def derive(self, *keys: int) -> "RandomSource":
        """A fresh master seed deterministically derived from this address and ``keys``."""
        ss = np.random.SeedSequence([self.seed & (2**64 - 1), self.index, *keys])
        return RandomSource(int(ss.generate_state(1, np.uint64)[0]))

    def uniform(self, size=None):
        return self.gen.random(size)


def laplace_from_uniform(u, scale: float):
    """Inverse CDF of Laplace(0, scale) at centered uniform ``u`` in [-1/2, 1/2)."""
    u = np.asarray(u, dtype=float)
    tail = np.maximum(1.0 - 2.0 * np.abs(u), np.finfo(float).tiny)
    out = -scale * np.sign(u) * np.log(tail)
    return float(out) if out.ndim == 0 else out


def laplace_sample(scale: float, rng: RandomSource) -> float:
    if not scale > 0:
        raise ParameterError(f"Laplace scale must be positive, got {scale}")
    return laplace_from_uniform(rng.uniform() - 0.5, scale)


def laplace_samples(scale: float, rng: RandomSource, size) -> np.ndarray:
    """``size`` draws, identical to calling :func:`laplace_sample` repeatedly."""
    if not scale > 0:
        raise ParameterError(f"Laplace scale must be positive, got {scale}")
    return laplace_from_uniform(rng.uniform(size) - 0.5, scale)


def bernoulli(p: float, rng: RandomSource) -> int:
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"probability must lie in [0, 1], got {p}")
    return int(rng.uniform() < p)


def _aligned(P: Mapping, Q: Mapping) -> tuple[np.ndarray, np.ndarray]:
    if set(P) != set(Q):
        raise ParameterError("distributions are over different outcome spaces")
    keys = list(P)
    return (
        np.array([P[x] for x in keys], dtype=float),
        np.array([Q[x] for x in keys], dtype=float),
    )


def hockey_stick_divergence(P: Mapping, Q: Mapping, epsilon: float) -> float:
    """sum_x max(0, P(x) - e^eps Q(x)); P is (eps, d)-close to Q one way iff this is <= d."""
    p, q = _aligned(P, Q)
    return hockey_stick_arrays(p, q, epsilon)


def hockey_stick_arrays(p: np.ndarray, q: np.ndarray, epsilon: float, axis=-1):
    """Vectorized hockey-stick divergence over aligned probability arrays."""
    val = np.maximum(0.0, np.asarray(p) - math.exp(epsilon) * np.asarray(q)).sum(axis=axis)
    return float(val) if np.ndim(val) == 0 else val


# Slack for float rounding at ratio-equality junctions, e.g. (1 - cap) = e^eps * cap.
ROUNDING_SLACK = 1e-12


def check_indistinguishable(
    P: Mapping, Q: Mapping, eps: float, delta: float, atol: float = ROUNDING_SLACK
) -> bool:
    return (
        hockey_stick_divergence(P, Q, eps) <= delta + atol
        and hockey_stick_divergence(Q, P, eps) <= delta + atol
    )


def neighbors(stream: UpdateStream) -> list[UpdateStream]:
    return [stream.flip(t) for t in range(1, len(stream) + 1)]


def linf_error(estimates: Sequence[float], stream: UpdateStream) -> float:
    est = np.asarray(estimates, dtype=float)
    if est.shape != (len(stream),):
        raise ParameterError(f"expected {len(stream)} estimates, got {est.shape}")
    return float(np.max(np.abs(est - stream.prefix_sums())))


def worker_count() -> int:
    """Worker cap from DPLAB_THREADS (default: CPU count)."""
    env = os.environ.get("DPLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ParameterError(f"DPLAB_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def parallel_map(fn: Callable[[T_], R_], items: Iterable[T_]) -> list[R_]:
    """Order-preserving map over a thread pool capped by :func:`worker_count`."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
