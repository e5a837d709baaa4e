"""Minimum-cost assignment via the auction algorithm with epsilon scaling.

Integer cost matrices are solved exactly: the final phase runs with
epsilon < 1/n, which bounds the assignment within n*epsilon < 1 of the
optimum, i.e. at it.
"""

from __future__ import annotations

import itertools

import numpy as np


class AuctionError(RuntimeError):
    """Auction failed to converge within its bid budget."""


def _auction_phase(benefit: np.ndarray, prices: np.ndarray, eps: float,
                   max_bids: int) -> np.ndarray:
    n = benefit.shape[0]
    person_to = np.full(n, -1, dtype=np.int64)
    object_to = np.full(n, -1, dtype=np.int64)
    unassigned = list(range(n - 1, -1, -1))
    bids = 0
    while unassigned:
        bids += 1
        if bids > max_bids:
            raise AuctionError(f"no convergence after {max_bids} bids")
        i = unassigned.pop()
        values = benefit[i] - prices
        j = int(np.argmax(values))
        best = values[j]
        values[j] = -np.inf
        second = float(np.max(values)) if n > 1 else best - eps
        prices[j] += best - second + eps
        prev = object_to[j]
        if prev >= 0:
            person_to[prev] = -1
            unassigned.append(int(prev))
        object_to[j] = i
        person_to[i] = j
    return person_to


def solve_square(cost: np.ndarray, max_bids: int | None = None) -> np.ndarray:
    """Assign each row of a square cost matrix to a distinct column at minimum
    total cost. Returns the column index per row."""
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise ValueError("cost matrix must be square")
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    benefit = -cost
    spread = float(benefit.max() - benefit.min())
    if max_bids is None:
        max_bids = 1_000_000 + 5_000 * n * n
    prices = np.zeros(n)
    eps_final = 1.0 / (n + 1)
    eps = max(1.0, spread / 2.0)
    try:
        while True:
            assignment = _auction_phase(benefit, prices, eps, max_bids)
            if eps <= eps_final:
                return assignment
            eps = max(eps / 5.0, eps_final)
    except AuctionError:
        if n <= 8:
            return brute_force_assignment(cost)
        raise


def brute_force_assignment(cost: np.ndarray) -> np.ndarray:
    """Exhaustive minimum over all permutations (small matrices only)."""
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    best = None
    best_total = np.inf
    for perm in itertools.permutations(range(n)):
        total = sum(cost[i, perm[i]] for i in range(n))
        if total < best_total:
            best_total = total
            best = perm
    return np.array(best, dtype=np.int64)


def optimal_assignment(cost: np.ndarray) -> tuple[np.ndarray, float]:
    """Minimum-cost assignment for a (possibly rectangular) cost matrix.

    Pads to square with zero-cost dummies, so with more rows than columns some
    rows stay unassigned (-1), and with more columns than rows the extra
    columns go unused. Returns (column per row, total cost over real pairs).
    """
    cost = np.asarray(cost, dtype=np.float64)
    rows, cols = cost.shape
    n = max(rows, cols)
    padded = np.zeros((n, n))
    padded[:rows, :cols] = cost
    assignment = solve_square(padded)
    result = np.full(rows, -1, dtype=np.int64)
    total = 0.0
    for i in range(rows):
        j = int(assignment[i])
        if j < cols:
            result[i] = j
            total += cost[i, j]
    return result, total
