"""Continual counters, threshold monitors and the threshold-monitor success judge.

Every monitor exists in up to three forms that must agree:

* an online state machine (``step`` one bit at a time),
* a vectorized ``batch`` simulator that consumes the per-trial substream
  ``rng.trial(i)`` in exactly the order the online machine would,
* an ``exact`` halting distribution for analytically tractable monitors.

Halting times are 1-based; :data:`NO_HALT` (0) marks a run that never halts.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    ParameterError,
    RandomSource,
    StateError,
    UpdateStream,
    bernoulli,
    laplace_from_uniform,
    laplace_sample,
)

NO_HALT = 0
TRIAL_CHUNK = 2048

# Frozen from scripts/calibrate.py (seed 31337, 5000 runs, T=1024, eps=1).
# Tree: l-inf error / log2(T)^1.5 has 0.95 quantile 4.90 and 0.99 quantile 5.61.
TREE_ERROR_CONSTANT = 5.6
# SVT: k = ceil(c ln T / eps) with c = 16 succeeded in >= 0.997 of runs on each canonical stream.
SVT_K_CONSTANT = 16.0


def tree_error_envelope(T: int, constant: float = TREE_ERROR_CONSTANT) -> float:
    return constant * math.log2(T) ** 1.5


def svt_k(T: int, eps: float, constant: float = SVT_K_CONSTANT) -> int:
    return math.ceil(constant * math.log(T) / eps)


def _tree_height(T: int) -> int:
    return max(1, math.ceil(math.log2(T))) if T > 1 else 1


def _first_true(mask: np.ndarray) -> np.ndarray:
    """1-based index of the first True per row, NO_HALT where none."""
    hit = mask.any(axis=1)
    return np.where(hit, mask.argmax(axis=1) + 1, NO_HALT)


def _stack_uniforms(rng: RandomSource, trials: range, width: int) -> np.ndarray:
    if width == 0:
        return np.zeros((len(trials), 0))
    return np.stack([rng.trial(i).uniform(width) for i in trials])


# -- counters ---------------------------------------------------------------


class CounterMechanism(ABC):
    """Online counter: one estimate of the running count per consumed bit."""

    def __init__(self, T: int):
        if T < 1:
            raise ParameterError("T must be at least 1")
        self.T = T
        self.t = 0

    def step(self, bit: int) -> float:
        if self.t >= self.T:
            raise StateError(f"counter already consumed T={self.T} bits")
        self.t += 1
        return self._step(int(bit))

    @abstractmethod
    def _step(self, bit: int) -> float: ...

    def run(self, stream: UpdateStream) -> np.ndarray:
        return np.array([self.step(b) for b in stream], dtype=float)


class ZeroCounter(CounterMechanism):
    """Reports 0 forever; (0, 0)-DP with error equal to the stream weight."""

    def _step(self, bit: int) -> float:
        return 0.0


def zero_counter(T: int) -> ZeroCounter:
    return ZeroCounter(T)


def tree_nodes(t: int, height: int) -> list[tuple[int, int]]:
    """Dyadic nodes (level, index) whose intervals partition [1, t].

    Node (j, q) covers [q*2^j + 1, (q+1)*2^j]. Levels run 0..height-1, so
    t = 2^height is covered by the two top-level nodes.
    """
    top = height - 1
    nodes = [(top, q) for q in range(t >> top)]
    for j in range(top - 1, -1, -1):
        if (t >> j) & 1:
            nodes.append((j, (t >> j) - 1))
    return nodes


def tree_draw_schedule(T: int) -> list[tuple[int, int]]:
    """Nodes in the order their noise is drawn: by closing time, then level."""
    h = _tree_height(T)
    order = []
    for t in range(1, T + 1):
        for j in range(h):
            if t % (1 << j):
                break
            order.append((j, t // (1 << j) - 1))
    return order


class BinaryTreeCounter(CounterMechanism):
    """Binary tree mechanism over ceil(log2 T) levels.

    Each bit lies in exactly one node per level, so Laplace noise of scale
    ``height / eps`` per node makes the whole release sequence eps-DP.
    """

    def __init__(self, T: int, eps: float, rng: RandomSource | None = None, noiseless: bool = False):
        super().__init__(T)
        if not eps > 0:
            raise ParameterError("eps must be positive")
        if rng is None and not noiseless:
            raise ParameterError("a RandomSource is required unless noiseless")
        self.eps = eps
        self.rng = rng
        self.noiseless = noiseless
        self.height = _tree_height(T)
        self.scale = self.height / eps
        self._open = [0] * self.height
        self._noisy: dict[tuple[int, int], float] = {}

    def _step(self, bit: int) -> float:
        t = self.t
        for j in range(self.height):
            self._open[j] += bit
        for j in range(self.height):
            if t % (1 << j):
                break
            noise = 0.0 if self.noiseless else laplace_sample(self.scale, self.rng)
            self._noisy[(j, t // (1 << j) - 1)] = self._open[j] + noise
            self._open[j] = 0
        return float(sum(self._noisy[n] for n in tree_nodes(t, self.height)))

    @staticmethod
    def coverage_matrix(T: int) -> np.ndarray:
        """(T, M) 0/1 matrix: row t-1 selects the drawn nodes summed at time t."""
        h = _tree_height(T)
        schedule = tree_draw_schedule(T)
        col = {node: c for c, node in enumerate(schedule)}
        A = np.zeros((T, len(schedule)))
        for t in range(1, T + 1):
            for node in tree_nodes(t, h):
                A[t - 1, col[node]] = 1.0
        return A

    @classmethod
    def batch_estimates(
        cls, stream: UpdateStream, eps: float, trials: range, rng: RandomSource, noiseless: bool = False
    ) -> np.ndarray:
        T = len(stream)
        exact = stream.prefix_sums().astype(float)
        if noiseless:
            return np.tile(exact, (len(trials), 1))
        A = cls.coverage_matrix(T)
        u = _stack_uniforms(rng, trials, A.shape[1])
        noise = laplace_from_uniform(u - 0.5, _tree_height(T) / eps)
        return exact + noise @ A.T


def binary_tree_counter(T: int, eps: float, rng: RandomSource | None = None, noiseless: bool = False):
    return BinaryTreeCounter(T, eps, rng, noiseless=noiseless)


# -- monitors ---------------------------------------------------------------


@dataclass(frozen=True)
class MonitorTranscript:
    outputs: tuple[bool, ...]
    halt_time: Optional[int]

    def __post_init__(self):
        tops = [i + 1 for i, o in enumerate(self.outputs) if o]
        if len(tops) > 1 or (tops and tops[0] != len(self.outputs)):
            raise ParameterError("a transcript has at most one top, as its final output")
        if (tops[0] if tops else None) != self.halt_time:
            raise ParameterError("halt_time must equal the position of the top")

    def to_text(self) -> str:
        return "".join("1" if o else "0" for o in self.outputs)


class MonitorMechanism(ABC):
    """Online threshold monitor: False is bottom, True is top (and halts)."""

    def __init__(self, T: int, k: int):
        if T < 1:
            raise ParameterError("T must be at least 1")
        if k < 1:
            raise ParameterError("k must be at least 1")
        self.T = T
        self.k = k
        self.t = 0
        self.n = 0
        self.halt_time: Optional[int] = None

    @property
    def halted(self) -> bool:
        return self.halt_time is not None

    def step(self, bit: int) -> bool:
        if self.halted:
            raise StateError("monitor already halted")
        if self.t >= self.T:
            raise StateError(f"monitor already consumed T={self.T} bits")
        bit = int(bit)
        self.t += 1
        self.n += bit
        top = bool(self._decide(bit))
        if top:
            self.halt_time = self.t
        return top

    @abstractmethod
    def _decide(self, bit: int) -> bool: ...

    def run(self, stream: UpdateStream) -> MonitorTranscript:
        outputs = []
        for b in stream:
            outputs.append(self.step(b))
            if self.halted:
                break
        return MonitorTranscript(tuple(outputs), self.halt_time)


class SVTMonitor(MonitorMechanism):
    """AboveThreshold on the prefix sums against threshold 3k/4.

    Threshold noise Lap(2/eps) is drawn once; each test draws Lap(4/eps).
    """

    def __init__(self, T: int, k: int, eps: float, rng: RandomSource | None = None, noiseless: bool = False):
        super().__init__(T, k)
        if k < 2:
            raise ParameterError("SVT monitor needs k >= 2")
        if not eps > 0:
            raise ParameterError("eps must be positive")
        if rng is None and not noiseless:
            raise ParameterError("a RandomSource is required unless noiseless")
        self.eps = eps
        self.rng = rng
        self.noiseless = noiseless
        self.threshold = 0.75 * k
        self.tau = 0.0 if noiseless else laplace_sample(2.0 / eps, rng)

    def _decide(self, bit: int) -> bool:
        nu = 0.0 if self.noiseless else laplace_sample(4.0 / self.eps, self.rng)
        return self.n + nu >= self.threshold + self.tau

    @staticmethod
    def batch(stream, trials, rng, *, T, k, eps, noiseless=False):
        n = stream.prefix_sums()
        if noiseless:
            return np.full(len(trials), _first_true((n >= 0.75 * k)[None, :])[0])
        u = _stack_uniforms(rng, trials, len(stream) + 1) - 0.5
        tau = laplace_from_uniform(u[:, :1], 2.0 / eps)
        nu = laplace_from_uniform(u[:, 1:], 4.0 / eps)
        return _first_true(n + nu >= 0.75 * k + tau)


def sampling_threshold(k: int, delta: float) -> int:
    return max(1, math.ceil(0.75 * k * delta - 1e-9))


class SamplingMonitor(MonitorMechanism):
    """Keeps each arriving 1 with probability delta; halts when the kept count
    reaches max(1, ceil(3k/4 * delta))."""

    def __init__(self, T: int, k: int, delta: float, rng: RandomSource | None = None):
        super().__init__(T, k)
        if not 0 < delta <= 1:
            raise ParameterError("delta must lie in (0, 1]")
        self.delta = delta
        self.rng = rng
        self.threshold = sampling_threshold(k, delta)
        self.kept = 0

    def _decide(self, bit: int) -> bool:
        if bit:
            self.kept += bernoulli(self.delta, self.rng)
        return self.kept >= self.threshold

    @staticmethod
    def batch(stream, trials, rng, *, T, k, delta):
        ones = np.array(stream.one_positions(), dtype=np.int64)
        c = sampling_threshold(k, delta)
        if len(ones) < c:
            return np.full(len(trials), NO_HALT)
        kept = np.cumsum(_stack_uniforms(rng, trials, len(ones)) < delta, axis=1)
        reach = kept >= c
        return np.where(reach.any(axis=1), ones[reach.argmax(axis=1)], NO_HALT)

    @staticmethod
    def exact(stream, *, T, k, delta):
        from scipy.special import comb

        c = sampling_threshold(k, delta)
        probs = np.zeros(len(stream))
        n = 0
        for t, b in enumerate(stream):
            if b:
                n += 1
                if n >= c:
                    probs[t] = comb(n - 1, c - 1, exact=True) * delta**c * (1 - delta) ** (n - c)
        return probs


class CounterMonitor(MonitorMechanism):
    """Halts the first time the wrapped counter's estimate reaches 3k/4."""

    def __init__(self, counter: CounterMechanism, k: int):
        if counter.t != 0:
            raise ParameterError("counter must be freshly initialized")
        super().__init__(counter.T, k)
        self.counter = counter
        self.threshold = 0.75 * k

    def _decide(self, bit: int) -> bool:
        return self.counter.step(bit) >= self.threshold


def counter_to_monitor(counter: CounterMechanism, k: int) -> CounterMonitor:
    return CounterMonitor(counter, k)


class ExactMonitor(MonitorMechanism):
    """Non-private reference: top exactly when the count first reaches ceil(3k/4)."""

    def __init__(self, T: int, k: int, rng: RandomSource | None = None):
        super().__init__(T, k)
        self.threshold = math.ceil(0.75 * k)

    def _decide(self, bit: int) -> bool:
        return self.n >= self.threshold

    @staticmethod
    def exact(stream, *, T, k):
        probs = np.zeros(len(stream))
        hit = np.flatnonzero(stream.prefix_sums() >= math.ceil(0.75 * k))
        if hit.size:
            probs[hit[0]] = 1.0
        return probs


class NeverHaltMonitor(MonitorMechanism):
    """Test double: always bottom; (0, 0)-DP."""

    def __init__(self, T: int, k: int, rng: RandomSource | None = None):
        super().__init__(T, k)

    def _decide(self, bit: int) -> bool:
        return False

    @staticmethod
    def exact(stream, *, T, k):
        return np.zeros(len(stream))


class HaltAtStepOneMonitor(MonitorMechanism):
    """Test double: halts at step 1 with probability q, regardless of input."""

    def __init__(self, T: int, k: int, q: float = 1.0, rng: RandomSource | None = None):
        super().__init__(T, k)
        self.q = q
        self.rng = rng

    def _decide(self, bit: int) -> bool:
        return self.t == 1 and bool(bernoulli(self.q, self.rng))

    @staticmethod
    def exact(stream, *, T, k, q=1.0):
        probs = np.zeros(len(stream))
        probs[0] = q
        return probs

    @staticmethod
    def batch(stream, trials, rng, *, T, k, q=1.0):
        return np.where(_stack_uniforms(rng, trials, 1)[:, 0] < q, 1, NO_HALT)


class HaltAtFirstOneMonitor(MonitorMechanism):
    """Test double: at the first arriving 1, halts with probability q; else never."""

    def __init__(self, T: int, k: int, q: float = 0.5, rng: RandomSource | None = None):
        super().__init__(T, k)
        self.q = q
        self.rng = rng

    def _decide(self, bit: int) -> bool:
        return bool(bit) and self.n == 1 and bool(bernoulli(self.q, self.rng))

    @staticmethod
    def exact(stream, *, T, k, q=0.5):
        probs = np.zeros(len(stream))
        ones = stream.one_positions()
        if ones:
            probs[ones[0] - 1] = q
        return probs

    @staticmethod
    def batch(stream, trials, rng, *, T, k, q=0.5):
        ones = stream.one_positions()
        if not ones:
            return np.full(len(trials), NO_HALT)
        return np.where(_stack_uniforms(rng, trials, 1)[:, 0] < q, ones[0], NO_HALT)


# -- factories --------------------------------------------------------------


@dataclass
class MonitorFactory:
    """Builds fresh monitors per trial and, where available, batch/exact paths.

    ``batch(stream, trials, rng)`` returns halting times for the trial indices
    in ``trials``; trial i must reproduce ``build(rng.trial(i)).run(stream)``.
    """

    name: str
    T: int
    k: int
    build: Callable[[RandomSource], MonitorMechanism]
    batch: Optional[Callable[[UpdateStream, range, RandomSource], np.ndarray]] = None
    exact: Optional[Callable[[UpdateStream], np.ndarray]] = None
    params: dict = field(default_factory=dict)

    def __call__(self, rng: RandomSource) -> MonitorMechanism:
        return self.build(rng)

    def halt_times(self, stream: UpdateStream, trials: int, rng: RandomSource) -> np.ndarray:
        if len(stream) != self.T:
            raise ParameterError(f"stream length {len(stream)} != T={self.T}")
        if self.batch is None:
            return np.array(
                [self.build(rng.trial(i)).run(stream).halt_time or NO_HALT for i in range(trials)],
                dtype=np.int64,
            )
        parts = [
            self.batch(stream, range(lo, min(lo + TRIAL_CHUNK, trials)), rng)
            for lo in range(0, trials, TRIAL_CHUNK)
        ]
        return np.concatenate(parts).astype(np.int64)


def _with_batch(cls, **params):
    return lambda stream, trials, rng: cls.batch(stream, trials, rng, **params)


def _with_exact(cls, **params):
    return lambda stream: cls.exact(stream, **params)


def svt_factory(T: int, k: int, eps: float, noiseless: bool = False) -> MonitorFactory:
    p = dict(T=T, k=k, eps=eps, noiseless=noiseless)
    return MonitorFactory(
        "svt", T, k, lambda rng: SVTMonitor(rng=rng, **p), _with_batch(SVTMonitor, **p), params=p
    )


def sampling_factory(T: int, k: int, delta: float) -> MonitorFactory:
    p = dict(T=T, k=k, delta=delta)
    return MonitorFactory(
        "sampling",
        T,
        k,
        lambda rng: SamplingMonitor(rng=rng, **p),
        _with_batch(SamplingMonitor, **p),
        _with_exact(SamplingMonitor, **p),
        params=p,
    )


def tree_monitor_factory(T: int, k: int, eps: float, noiseless: bool = False) -> MonitorFactory:
    def batch(stream, trials, rng):
        est = BinaryTreeCounter.batch_estimates(stream, eps, trials, rng, noiseless=noiseless)
        return _first_true(est >= 0.75 * k)

    return MonitorFactory(
        "tree",
        T,
        k,
        lambda rng: CounterMonitor(BinaryTreeCounter(T, eps, rng, noiseless=noiseless), k),
        batch,
        params=dict(T=T, k=k, eps=eps, noiseless=noiseless),
    )


def zero_counter_monitor_factory(T: int, k: int) -> MonitorFactory:
    return MonitorFactory(
        "zero",
        T,
        k,
        lambda rng: CounterMonitor(ZeroCounter(T), k),
        lambda stream, trials, rng: np.full(len(trials), NO_HALT),
        lambda stream: np.zeros(len(stream)),
        params=dict(T=T, k=k),
    )


def _simple_factory(cls, name, T, k, **extra):
    p = dict(T=T, k=k, **extra)
    return MonitorFactory(name, T, k, lambda rng: cls(rng=rng, **p), None, _with_exact(cls, **p), params=p)


def exact_monitor_factory(T: int, k: int) -> MonitorFactory:
    f = _simple_factory(ExactMonitor, "exact", T, k)
    f.batch = lambda stream, trials, rng: np.full(len(trials), _exact_halt(f.exact(stream)))
    return f


def never_halt_factory(T: int, k: int) -> MonitorFactory:
    f = _simple_factory(NeverHaltMonitor, "never", T, k)
    f.batch = lambda stream, trials, rng: np.full(len(trials), NO_HALT)
    return f


def halt_at_step_one_factory(T: int, k: int, q: float = 1.0) -> MonitorFactory:
    f = _simple_factory(HaltAtStepOneMonitor, "halt-step-one", T, k, q=q)
    f.batch = _with_batch(HaltAtStepOneMonitor, **f.params)
    return f


def halt_at_first_one_factory(T: int, k: int, q: float = 0.5) -> MonitorFactory:
    f = _simple_factory(HaltAtFirstOneMonitor, "halt-first-one", T, k, q=q)
    f.batch = _with_batch(HaltAtFirstOneMonitor, **f.params)
    return f


def _exact_halt(probs: np.ndarray) -> int:
    hit = np.flatnonzero(probs >= 1.0)
    return int(hit[0]) + 1 if hit.size else NO_HALT


def canonical_streams(T: int, k: int) -> tuple[UpdateStream, UpdateStream, UpdateStream]:
    """All-zero, all-one, and k ones starting right after T/2."""
    if k > T - T // 2:
        raise ParameterError("burst of k ones does not fit after T/2")
    burst = [0] * (T // 2) + [1] * k + [0] * (T - T // 2 - k)
    return UpdateStream.zeros(T), UpdateStream.ones(T), UpdateStream(burst)


MONITORS = ("svt", "sampling", "tree", "zero", "exact", "never")


def make_monitor_factory(name: str, T: int, k: int, eps: float = 0.5, delta: float = 0.0, noiseless: bool = False):
    if name == "svt":
        return svt_factory(T, k, eps, noiseless)
    if name == "sampling":
        return sampling_factory(T, k, delta)
    if name == "tree":
        return tree_monitor_factory(T, k, eps, noiseless)
    if name == "zero":
        return zero_counter_monitor_factory(T, k)
    if name == "exact":
        return exact_monitor_factory(T, k)
    if name == "never":
        return never_halt_factory(T, k)
    raise ParameterError(f"unknown monitor {name!r}; expected one of {MONITORS}")


# -- success judge ----------------------------------------------------------


def success_mask(halt_times: np.ndarray, stream: UpdateStream, k: int) -> np.ndarray:
    """Per-run success under the threshold-monitor rules.

    A run succeeds iff it never halts while the count is below k/2 and it has
    halted by the first step at which the count reaches k.
    """
    n = stream.prefix_sums()
    halt_times = np.asarray(halt_times)
    half = np.flatnonzero(2 * n >= k)
    full = np.flatnonzero(n >= k)
    earliest = half[0] + 1 if half.size else None
    latest = full[0] + 1 if full.size else None
    halted = halt_times != NO_HALT
    if earliest is None:
        ok_early = ~halted
    else:
        ok_early = ~halted | (halt_times >= earliest)
    ok_late = np.ones_like(halted) if latest is None else halted & (halt_times <= latest)
    return ok_early & ok_late


def transcript_succeeds(transcript: MonitorTranscript, stream: UpdateStream, k: int) -> bool:
    ht = transcript.halt_time or NO_HALT
    return bool(success_mask(np.array([ht]), stream, k)[0])


def evaluate_success(factory: MonitorFactory, stream: UpdateStream, trials: int, rng: RandomSource) -> float:
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    return float(success_mask(factory.halt_times(stream, trials, rng), stream, factory.k).mean())
