"""JDP-Mirror: echo input ones after a delay, jointly differentially private.

On each arriving 1 the mirror outputs top with probability pi(i), where i is
the number of ones seen beyond the first K. The pi ladder climbs from delta'
to 1 - delta' in steps that are pairwise eps'-indistinguishable, so
flipping one input shifts every later rung by one and each shifted output
pays at most eps' (or delta' at the two ends).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np

from .core import (
    FiniteDistribution,
    ParameterError,
    RandomSource,
    UpdateStream,
    bernoulli,
    check_indistinguishable,
    hockey_stick_arrays,
    parallel_map,
)


@dataclass(frozen=True)
class PiLadder:
    """Rung probabilities; ``rungs[i]`` is pi(i) for 0 <= i <= 2L."""

    eps_prime: float
    delta_prime: float
    L: int
    rungs: tuple[float, ...]

    @property
    def cap(self) -> float:
        return 1.0 / (1.0 + math.exp(self.eps_prime))

    def prob(self, i: int) -> float:
        if i <= 0:
            return 0.0
        if i > 2 * self.L:
            return 1.0
        return self.rungs[i]

    def probs(self, indices) -> np.ndarray:
        idx = np.asarray(indices)
        table = np.append(np.asarray(self.rungs), 1.0)
        return table[np.clip(idx, 0, 2 * self.L + 1)]


def build_pi_ladder(eps_prime: float, delta_prime: float) -> PiLadder:
    """Geometric ascent from delta' capped at 1/(1+e^eps'), mirrored down to 1 - delta'."""
    if not eps_prime > 0:
        raise ParameterError("eps_prime must be positive")
    if not 0 < delta_prime < 0.1:
        raise ParameterError("delta_prime must lie in (0, 0.1)")
    cap = 1.0 / (1.0 + math.exp(eps_prime))
    L = 1
    while delta_prime * math.exp((L - 1) * eps_prime) < cap:
        L += 1
    up = [delta_prime] + [min(delta_prime * math.exp((i - 1) * eps_prime), cap) for i in range(2, L + 1)]
    down = [1.0 - p for p in reversed(up)]
    return PiLadder(eps_prime, delta_prime, L, tuple([0.0] + up + down))


def verify_pi_ladder(ladder: PiLadder) -> bool:
    L, d = ladder.L, ladder.delta_prime
    rungs = ladder.rungs
    if L < 1 or len(rungs) != 2 * L + 1:
        return False
    if any(not 0.0 <= p <= 1.0 for p in rungs):
        return False
    if rungs[0] != 0.0 or rungs[1] != d or rungs[2 * L] != 1.0 - d:
        return False
    if ladder.prob(2 * L + 1) != 1.0:
        return False
    for i in range(1, L + 1):
        if not math.isclose(rungs[2 * L + 1 - i], 1.0 - rungs[i], rel_tol=0, abs_tol=1e-15):
            return False
    for i in range(1, 2 * L):
        P = FiniteDistribution.bernoulli(rungs[i])
        Q = FiniteDistribution.bernoulli(rungs[i + 1])
        if not check_indistinguishable(P, Q, ladder.eps_prime, 0.0):
            return False
    return True


# -- privacy accounting -----------------------------------------------------


def composed_epsilon(eps_prime: float, steps: int, delta_pp: float) -> float:
    """Advanced composition of ``steps`` eps'-DP mechanisms with slack delta''."""
    return steps * eps_prime * math.expm1(eps_prime) / 2 + eps_prime * math.sqrt(
        2 * steps * math.log(1 / delta_pp)
    )


def ladder_steps(L: int) -> int:
    """eps'-indistinguishable outputs that can differ between neighbors: rungs 2..2L."""
    return 2 * L - 1


@dataclass(frozen=True)
class MirrorParams:
    eps: float
    delta: float
    eps_prime: float
    delta_prime: float
    delta_pp: float
    L: int
    steps: int
    composed_eps: float
    composed_delta: float

    def ladder(self) -> PiLadder:
        return build_pi_ladder(self.eps_prime, self.delta_prime)


def _ladder_length(eps_prime: float, delta_prime: float) -> int:
    cap = 1.0 / (1.0 + math.exp(eps_prime))
    if delta_prime >= cap:
        return 1
    L = 1 + math.ceil(math.log(cap / delta_prime) / eps_prime)
    # ceil can overshoot by one at exact powers; match build_pi_ladder exactly
    while L > 1 and delta_prime * math.exp((L - 2) * eps_prime) >= cap:
        L -= 1
    return L


def derive_mirror_params(eps: float, delta: float) -> MirrorParams:
    """Largest eps' whose ladder composes to at most (eps, delta).

    delta is split as delta' = delta'' = delta/4 so 2 delta' + delta'' <= delta.
    The feasible set in eps' is a union of intervals (L jumps down as eps'
    grows), so we scan a log grid for the largest feasible point and bisect
    to the boundary above it.
    """
    if not 0 < eps <= 2:
        raise ParameterError("eps must lie in (0, 2]")
    if not 0 < delta < 0.1:
        raise ParameterError("delta must lie in (0, 0.1)")
    d1 = d2 = delta / 4

    def total(e: float) -> float:
        return composed_epsilon(e, ladder_steps(_ladder_length(e, d1)), d2)

    grid = np.geomspace(1e-7, eps, 4000)
    feasible = [e for e in grid if total(e) <= eps]
    if not feasible:
        raise ParameterError(f"no feasible eps' for eps={eps}, delta={delta}")
    lo = max(feasible)
    above = grid[grid > lo]
    if above.size:
        hi = float(above[0])
        for _ in range(80):
            mid = (lo + hi) / 2
            if total(mid) <= eps:
                lo = mid
            else:
                hi = mid
    L = _ladder_length(lo, d1)
    steps = ladder_steps(L)
    return MirrorParams(eps, delta, lo, d1, d2, L, steps, composed_epsilon(lo, steps, d2), 2 * d1 + d2)


# -- the mechanism ----------------------------------------------------------


@dataclass
class MirrorState:
    """Counter C of ones consumed; the active rung is max(0, C - K)."""

    K: int
    ladder: PiLadder
    C: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ParameterError("delay K must be at least 1")

    @property
    def rung(self) -> int:
        return max(0, self.C - self.K)

    def step(self, bit: int, rng: RandomSource) -> bool:
        if not bit:
            return False
        self.C += 1
        return bool(bernoulli(self.ladder.prob(self.rung), rng))


def mirror_step(state: MirrorState, delta_t: int, rng: RandomSource) -> bool:
    return state.step(delta_t, rng)


def top_probabilities(stream: UpdateStream, K: int, ladder: PiLadder) -> np.ndarray:
    """Pr[output t is top]; outputs are independent given the input."""
    bits = stream.as_array()
    return np.where(bits == 1, ladder.probs(stream.prefix_sums() - K), 0.0)


def simulate_mirror(stream: UpdateStream, K: int, ladder: PiLadder, trials: int, rng: RandomSource) -> np.ndarray:
    """(trials, T) boolean outputs; row i consumes rng.trial(i) as the online
    mechanism would (one uniform per arriving 1)."""
    p = top_probabilities(stream, K, ladder)
    ones = np.flatnonzero(stream.as_array())
    out = np.zeros((trials, len(stream)), dtype=bool)
    for i in range(trials):
        out[i, ones] = rng.trial(i).uniform(len(ones)) < p[ones]
    return out


@dataclass
class MirrorScore:
    mistakes: int
    violations: int


def mirror_mistakes(outputs, stream: UpdateStream, K: int) -> MirrorScore:
    """Mistakes: a 1 beyond the K-th answered bottom. Violations: top on a 0,
    or top with fewer than K prior ones."""
    out = np.asarray(outputs, dtype=bool)
    bits = stream.as_array().astype(bool)
    if out.shape[-1] != len(stream):
        raise ParameterError("outputs and stream lengths differ")
    n = stream.prefix_sums()
    mistakes = (bits & (n > K) & ~out).sum(axis=-1)
    prior = n - bits
    violations = (out & (~bits | (prior < K))).sum(axis=-1)
    if np.ndim(mistakes) == 0:
        return MirrorScore(int(mistakes), int(violations))
    return MirrorScore(mistakes, violations)


def mistake_counts(stream: UpdateStream, K: int, ladder: PiLadder, trials: int, rng: RandomSource) -> np.ndarray:
    """Mistakes for ``trials`` vectorized runs drawn from one substream."""
    p = top_probabilities(stream, K, ladder)
    n = stream.prefix_sums()
    at_risk = np.flatnonzero(stream.as_array().astype(bool) & (n > K))
    if at_risk.size == 0:
        return np.zeros(trials, dtype=np.int64)
    u = rng.uniform((trials, at_risk.size))
    return (u >= p[at_risk]).sum(axis=1)


# -- exact JDP audit --------------------------------------------------------

MAX_AUDIT_T = 22


@dataclass
class AuditReport:
    eps: float
    delta: float
    eps_prime: float
    delta_prime: float
    L: int
    T: int
    K: int
    max_divergence: float
    pairs: int
    passed: bool = field(default=False)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def _outcome_bits(n: int) -> np.ndarray:
    return np.array(list(product((0, 1), repeat=n)), dtype=bool)


def product_pmf(p: np.ndarray, outcomes: np.ndarray) -> np.ndarray:
    """Probabilities of each outcome row under independent Bernoulli(p) coordinates."""
    p = np.atleast_2d(p)
    return np.prod(np.where(outcomes[None, :, :], p[:, None, :], 1.0 - p[:, None, :]), axis=2)


def neighbor_pairs(T: int):
    """(stream, position) for every stream with a 1 at the position; flipping it
    yields the neighbor. Covers every unordered neighbor pair once."""
    for v in range(2**T):
        s = UpdateStream.from_int(v, T)
        for pos in s.one_positions():
            yield s, pos


def audit_jdp(
    eps: float,
    delta: float,
    K: int,
    T: int,
    params: MirrorParams | None = None,
    ladder: PiLadder | None = None,
    chunk: int = 256,
) -> AuditReport:
    """Exact two-sided hockey-stick divergence over all neighbor pairs.

    For each pair, the output vector with the changed coordinate removed is a
    product of Bernoullis, enumerated over all 2^(T-1) outcomes.
    """
    if T > MAX_AUDIT_T:
        raise ParameterError(f"T={T} exceeds exact-enumeration limit {MAX_AUDIT_T}")
    if ladder is None:
        params = params or derive_mirror_params(eps, delta)
        ladder = params.ladder()

    cells: dict[bytes, tuple[np.ndarray, np.ndarray]] = {}
    pairs = 0
    for s, pos in neighbor_pairs(T):
        pairs += 1
        keep = np.arange(T) != pos - 1
        p = top_probabilities(s, K, ladder)[keep]
        q = top_probabilities(s.flip(pos), K, ladder)[keep]
        cells.setdefault(p.tobytes() + q.tobytes(), (p, q))

    outcomes = _outcome_bits(T - 1)
    items = list(cells.values())

    def chunk_max(lo: int) -> float:
        P = np.array([a for a, _ in items[lo : lo + chunk]])
        Q = np.array([b for _, b in items[lo : lo + chunk]])
        pp, qq = product_pmf(P, outcomes), product_pmf(Q, outcomes)
        div = np.maximum(hockey_stick_arrays(pp, qq, eps), hockey_stick_arrays(qq, pp, eps))
        return float(div.max())

    worst = max(parallel_map(chunk_max, range(0, len(items), chunk)), default=0.0)
    return AuditReport(
        eps, delta, ladder.eps_prime, ladder.delta_prime, ladder.L, T, K, worst, pairs, worst <= delta
    )
