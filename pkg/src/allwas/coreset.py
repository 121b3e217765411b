"""Submodular coverage objective over a distance matrix and its greedy
maximizer.

The coverage value of a selection S is the total distance saved relative
to an auxiliary element s0 that covers everything at a flat cost:
F(S) = L({s0}) - L(S ∪ {s0}) with L(S) = sum_i min_{j in S} d(i, j).
F is monotone and submodular for any nonnegative matrix, so lazy greedy
with an upper-bound heap returns the same sequence as naive greedy while
skipping most gain evaluations.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import AllwasError, ConfigError
from .gradspace import DistanceMatrix

_BRUTE_FORCE_LIMIT = 2_000_000


@dataclass(frozen=True)
class SelectionState:
    """Greedy selection result: chosen ids in order, per-element coverage
    minima (capped by the s0 cost), and the objective value reached."""

    selected: tuple
    minima: np.ndarray
    value: float
    s0_cost: float


def default_s0_cost(matrix: DistanceMatrix) -> float:
    """Flat coverage cost of the auxiliary element: just above the largest
    pairwise distance, so any real element strictly improves on it."""
    top = float(matrix.entries.max()) if matrix.n else 0.0
    return 1.01 * top if top > 0 else 1.0


def objective_L(matrix: DistanceMatrix, selected, s0_cost: float) -> float:
    """sum_i min(s0_cost, min_{j in selected} d(i, j)); |V| * s0_cost when
    the selection is empty."""
    if s0_cost <= 0:
        raise ConfigError("s0_cost must be positive")
    minima = _minima(matrix, selected, s0_cost)
    return float(minima.sum())


def _minima(matrix: DistanceMatrix, selected, s0_cost: float) -> np.ndarray:
    minima = np.full(matrix.n, float(s0_cost))
    for sample_id in selected:
        col = matrix.entries[:, matrix.index_of(sample_id)]
        np.minimum(minima, col, out=minima)
    return minima


def _gain(minima: np.ndarray, col: np.ndarray) -> float:
    """Marginal gain of adding the element with distance column ``col``."""
    return float(np.maximum(minima - col, 0.0).sum())


def greedy_select(
    matrix: DistanceMatrix,
    k: int,
    warm_start=(),
    s0_cost: float | None = None,
    method: str = "lazy",
) -> SelectionState:
    """Append k elements greedily, each maximizing the marginal coverage
    gain given the warm start (already-selected ids) and the auxiliary
    element. Ties break to the lowest id. ``method="naive"`` re-evaluates
    every candidate each step and is used to validate the lazy path.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    warm_start = list(warm_start)
    if k + len(warm_start) > matrix.n:
        raise AllwasError(
            f"cannot select {k} beyond warm start of {len(warm_start)} "
            f"from {matrix.n} elements")
    if s0_cost is None:
        s0_cost = default_s0_cost(matrix)
    if s0_cost <= 0:
        raise ConfigError("s0_cost must be positive")

    minima = _minima(matrix, warm_start, s0_cost)
    taken = set(warm_start)
    candidates = [i for i in matrix.ids if i not in taken]
    selected = []

    if method == "naive":
        for _ in range(k):
            best_id, best_gain = None, -1.0
            for cand in candidates:
                if cand in taken:
                    continue
                gain = _gain(minima, matrix.entries[:, matrix.index_of(cand)])
                if gain > best_gain:
                    best_id, best_gain = cand, gain
            selected.append(best_id)
            taken.add(best_id)
            np.minimum(minima, matrix.entries[:, matrix.index_of(best_id)], out=minima)
    elif method == "lazy":
        # Heap of (-upper bound, id, stamp); a popped entry whose bound was
        # recomputed in the current round is the exact argmax, and the
        # (-gain, id) ordering reproduces naive's lowest-id tie-breaking.
        cols = {i: matrix.entries[:, matrix.index_of(i)] for i in candidates}
        heap = [(-_gain(minima, cols[i]), i, 0) for i in candidates]
        heapq.heapify(heap)
        for round_no in range(1, k + 1):
            while True:
                neg_gain, cand, stamp = heapq.heappop(heap)
                if cand in taken:
                    continue
                if stamp == round_no or (round_no == 1 and stamp == 0):
                    selected.append(cand)
                    taken.add(cand)
                    np.minimum(minima, cols[cand], out=minima)
                    break
                heapq.heappush(heap, (-_gain(minima, cols[cand]), cand, round_no))
    else:
        raise ConfigError(f"unknown greedy method {method!r}")

    value = matrix.n * s0_cost - float(minima.sum())
    return SelectionState(tuple(selected), minima, value, float(s0_cost))


def brute_force_opt(matrix: DistanceMatrix, k: int, s0_cost: float | None = None):
    """Exact maximizer of the coverage objective by subset enumeration.

    Returns (ids, value). Refuses instances with more than 2e6 subsets.
    """
    if s0_cost is None:
        s0_cost = default_s0_cost(matrix)
    n = matrix.n
    if k < 1 or k > n:
        raise ConfigError(f"k={k} out of range for {n} elements")
    if math.comb(n, k) > _BRUTE_FORCE_LIMIT:
        raise AllwasError(f"C({n},{k}) exceeds the enumeration limit")
    entries = matrix.entries
    best_ids, best_value = None, -1.0
    base = np.full(n, float(s0_cost))
    for combo in itertools.combinations(range(n), k):
        minima = np.minimum(base, entries[:, combo].min(axis=1))
        value = n * s0_cost - float(minima.sum())
        if value > best_value:
            best_ids = combo
            best_value = value
    return tuple(matrix.ids[i] for i in best_ids), best_value
