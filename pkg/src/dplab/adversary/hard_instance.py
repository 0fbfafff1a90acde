"""Hard-instance construction against threshold monitors, and its audits."""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from ..core import ParameterError, RandomSource, UpdateStream
from ..mechanisms import NO_HALT, MonitorFactory, success_mask

CONFIDENCE = 0.99


@dataclass
class HaltDistribution:
    """Per-step halting probabilities p_1..p_T plus the never-halt mass.

    ``radius`` is a per-entry confidence half-width (0 for exact oracles).
    """

    probs: np.ndarray
    p_non: float
    radius: float = 0.0

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if np.any(self.probs < 0) or np.any(self.probs > 1) or not 0 <= self.p_non <= 1:
            raise ParameterError("halting probabilities must lie in [0, 1]")
        slack = max(1e-9, len(self.probs) * self.radius)
        if abs(self.probs.sum() + self.p_non - 1.0) > slack:
            raise ParameterError("halting probabilities do not sum to 1")

    @property
    def T(self) -> int:
        return len(self.probs)

    def p(self, i: int) -> float:
        return float(self.probs[i - 1])

    def interval(self, lo: int, hi: int) -> float:
        """Sum of p_j for lo <= j <= hi (1-based, empty when hi < lo)."""
        if hi < lo:
            return 0.0
        return float(self.probs[lo - 1 : hi].sum())


Oracle = Callable[[UpdateStream], HaltDistribution]


def hoeffding_radius(T: int, N: int, confidence: float = CONFIDENCE) -> float:
    return math.sqrt(math.log(2 * T / (1 - confidence)) / (2 * N))


def halt_distribution_from_times(halt_times: np.ndarray, T: int, radius: float = 0.0) -> HaltDistribution:
    N = len(halt_times)
    counts = np.bincount(np.asarray(halt_times, dtype=np.int64), minlength=T + 1)
    return HaltDistribution(counts[1:] / N, counts[NO_HALT] / N, radius)


def estimate_halt_distribution(
    factory: MonitorFactory, stream: UpdateStream, N: int, rng: RandomSource
) -> HaltDistribution:
    if N < 1:
        raise ParameterError("N must be at least 1")
    T = len(stream)
    return halt_distribution_from_times(factory.halt_times(stream, N, rng), T, hoeffding_radius(T, N))


def exact_halt_distribution(factory: MonitorFactory, stream: UpdateStream) -> HaltDistribution:
    if factory.exact is None:
        raise ParameterError(f"monitor {factory.name!r} has no exact halting distribution")
    probs = factory.exact(stream)
    return HaltDistribution(probs, max(0.0, 1.0 - float(probs.sum())))


def stream_key(stream: UpdateStream) -> int:
    digest = hashlib.sha256(bytes(stream.bits)).digest()
    return int.from_bytes(digest[:8], "little")


def monte_carlo_oracle(factory: MonitorFactory, N: int, rng: RandomSource) -> Oracle:
    """Oracle whose randomness is keyed by the queried stream, so repeated
    queries of one stream return the same estimate."""

    def oracle(stream: UpdateStream) -> HaltDistribution:
        return estimate_halt_distribution(factory, stream, N, rng.derive(stream_key(stream)))

    return oracle


def exact_oracle(factory: MonitorFactory) -> Oracle:
    return lambda stream: exact_halt_distribution(factory, stream)


@dataclass
class RoundRecord:
    round: int
    ell: int
    r: int
    m: int
    c_left: float
    c_right: float
    branch: str
    placed: int
    c_total: float
    potential: float
    potential_after: float


@dataclass
class HardInstance:
    stream: UpdateStream
    ell: int
    c_total: float
    k: int
    radius: float = 0.0
    trace: list[RoundRecord] = field(default_factory=list)

    @property
    def T(self) -> int:
        return len(self.stream)


def hard_instance_length(k: int) -> int:
    """T = 2 + 4 + ... + 2^k."""
    return 2 ** (k + 1) - 2


def build_hard_instance(oracle: Oracle, k: int, T: Optional[int] = None) -> HardInstance:
    """Recursive interval halving that places k ones before the returned ell.

    Each round compares the halting mass in the left and right halves of the
    active interval, commits the cheaper half and places one 1. Uses k + 1
    oracle calls (one per intermediate stream, including the all-zero one).
    """
    if k < 1:
        raise ParameterError("k must be at least 1")
    expected = hard_instance_length(k)
    if T is not None and T != expected:
        raise ParameterError(f"T must equal 2^(k+1) - 2 = {expected}, got {T}")
    T = expected

    stream = UpdateStream.zeros(T)
    dist = oracle(stream)
    radius = dist.radius
    ell, r, c_total = 1, T, 0.0
    trace = []
    for i in range(1, k + 1):
        assert (ell + r) % 2 == 1, "interval must have even length"
        m = (ell + r + 1) // 2
        c_left = dist.interval(ell, m - 1)
        c_right = dist.interval(m, r)
        potential = c_left + c_right
        if c_left <= c_right:
            placed, branch = ell, "left"
            stream = stream.with_one(ell)
            dist = oracle(stream)
            c_total += dist.p(ell)
            ell, r = ell + 1, m - 1
        else:
            placed, branch = m, "right"
            stream = stream.with_one(m)
            dist = oracle(stream)
            c_total += c_left + dist.p(m)
            ell = m + 1
        radius = max(radius, dist.radius)
        trace.append(
            RoundRecord(i, ell, r, m, c_left, c_right, branch, placed, c_total, potential, dist.interval(ell, r))
        )
    return HardInstance(stream, ell, c_total, k, radius, trace)


def statistical_tolerance(hard: HardInstance, N: int) -> float:
    return hard.radius * (hard.k + 1) + math.sqrt(math.log(200) / (2 * N))


@dataclass
class HaltMassReport:
    p_hat: float
    c_total: float
    tolerance: float
    passed: bool


def halted_before(halt_times: np.ndarray, ell: int) -> float:
    h = np.asarray(halt_times)
    return float(((h != NO_HALT) & (h < ell)).mean())


def halt_mass_check(factory: MonitorFactory, hard: HardInstance, N: int, rng: RandomSource) -> HaltMassReport:
    """Compare c_total with a fresh estimate of Pr[halt before update ell on D^(k)]."""
    p_hat = halted_before(factory.halt_times(hard.stream, N, rng), hard.ell)
    tol = statistical_tolerance(hard, N)
    return HaltMassReport(p_hat, hard.c_total, tol, abs(p_hat - hard.c_total) <= tol)


def dp_halt_mass_bound(eps: float, delta: float, k: int, beta0: float) -> float:
    """Upper bound e^eps (beta0 + 2 k delta) / (1 - e^eps / 2) on c_total."""
    if math.exp(eps) >= 2:
        raise ParameterError("bound is vacuous unless e^eps < 2")
    return math.exp(eps) * (beta0 + 2 * k * delta) / (1 - 0.5 * math.exp(eps))


@dataclass
class AttackReport:
    mechanism: str
    k: int
    T: int
    eps: Optional[float]
    delta: Optional[float]
    N: int
    beta0_hat: float
    c_total: float
    p_hat: float
    success_D0: float
    success_Dk: float
    min_success: float
    bound: Optional[float]
    tolerance: float
    flag: str

    def as_dict(self) -> dict:
        return asdict(self)


def attack_report(
    factory: MonitorFactory,
    eps: Optional[float],
    delta: Optional[float],
    k: int,
    N: int,
    rng: RandomSource,
    oracle: Optional[Oracle] = None,
) -> AttackReport:
    """Run the hard-instance attack end to end against one monitor family.

    ``eps=None`` declares a non-private monitor: no bound and flag NOT-DP.
    Flag VIOLATION means c_total exceeded the DP bound beyond statistical
    tolerance, i.e. the monitor is not (eps, delta)-DP as declared.
    """
    T = hard_instance_length(k)
    if factory.T != T or factory.k != k:
        raise ParameterError(f"factory must be built for T={T}, k={k}")
    hard = build_hard_instance(oracle or monte_carlo_oracle(factory, N, rng.derive(1)), k)

    zeros = UpdateStream.zeros(T)
    success_D0 = float(success_mask(factory.halt_times(zeros, N, rng.derive(2)), zeros, k).mean())
    beta0 = 1.0 - success_D0
    halts_k = factory.halt_times(hard.stream, N, rng.derive(3))
    success_Dk = float(success_mask(halts_k, hard.stream, k).mean())
    p_hat = halted_before(halts_k, hard.ell)
    tol = statistical_tolerance(hard, N)

    bound = None
    if eps is None:
        flag = "NOT-DP"
    elif math.exp(eps) >= 2:
        flag = "VACUOUS"
    else:
        bound = dp_halt_mass_bound(eps, delta or 0.0, k, beta0)
        flag = "VIOLATION" if hard.c_total > bound + tol else "OK"
    return AttackReport(
        factory.name, k, T, eps, delta, N, beta0, hard.c_total, p_hat,
        success_D0, success_Dk, min(success_D0, success_Dk), bound, tol, flag,
    )
