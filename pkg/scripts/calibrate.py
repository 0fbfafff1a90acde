"""Preliminary Monte-Carlo runs that fix the frozen constants in mechanisms.py.

Uses its own seed, distinct from every test seed, so the frozen values are
not tuned on the runs that later check them.

    python3 scripts/calibrate.py
"""

import math

import numpy as np

from dplab.core import RandomSource, UpdateStream
from dplab.mechanisms import BinaryTreeCounter, canonical_streams, evaluate_success, svt_factory

SEED = 31337
T, EPS = 1024, 1.0


def tree_constant(runs: int = 5000) -> None:
    rng = RandomSource(SEED).derive(1)
    stream = UpdateStream.zeros(T)
    est = BinaryTreeCounter.batch_estimates(stream, EPS, range(runs), rng)
    ratio = np.abs(est).max(axis=1) / math.log2(T) ** 1.5
    for q in (0.5, 0.95, 0.99, 0.999):
        print(f"tree: quantile {q}: C = {np.quantile(ratio, q):.3f}")


def svt_constant(runs: int = 5000) -> None:
    rng = RandomSource(SEED).derive(2)
    for c in np.arange(4.0, 24.5, 1.0):
        k = math.ceil(c * math.log(T) / EPS)
        fac = svt_factory(T, k, EPS)
        rates = [evaluate_success(fac, s, runs, rng.derive(i)) for i, s in enumerate(canonical_streams(T, k))]
        print(f"svt: c={c:4.1f} k={k:4d} success={' '.join(f'{r:.4f}' for r in rates)}")


if __name__ == "__main__":
    tree_constant()
    svt_constant()
