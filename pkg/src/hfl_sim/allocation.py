"""Sub-carrier allocation that maximizes the minimum expected uplink rate.

The greedy scheme starts from one carrier per user and repeatedly grants one
more carrier to the user whose current expected rate is lowest.  Because a
user's expected rate never decreases when it gains a carrier and never
changes when others do, the greedy result attains the exhaustive-search
optimum; `brute_force_allocate` enumerates every partition as the oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations

from .channel import LinkBudget, ThresholdSolution, optimize_threshold

BRUTE_FORCE_MAX_USERS = 5
BRUTE_FORCE_MAX_CARRIERS = 12


class InfeasibleAllocation(ValueError):
    pass


@dataclass
class AllocationResult:
    counts: list[int]
    rates: list[float]
    thresholds: list[ThresholdSolution]
    min_rate: float

    def to_dict(self) -> dict:
        return {
            "counts": list(self.counts),
            "rates": list(self.rates),
            "gamma_th": [t.gamma_th for t in self.thresholds],
            "rho": [t.rho for t in self.thresholds],
            "min_rate": self.min_rate,
            "carrier_indices": assign_carrier_indices(self.counts),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_feasible(n_users: int, m_available: int) -> None:
    if n_users < 1:
        raise InfeasibleAllocation("at least one user required")
    if m_available < n_users:
        raise InfeasibleAllocation(
            f"{m_available} carriers cannot give {n_users} users one carrier each"
        )


def allocate_maxmin(budgets: list[LinkBudget], m_available: int) -> AllocationResult:
    """Greedy max-min allocation of m_available carriers over the users.

    Ties on the minimum rate go to the lowest user index.
    """
    k = len(budgets)
    _check_feasible(k, m_available)
    counts = [1] * k
    sols = [optimize_threshold(1, b) for b in budgets]
    rates = [s.expected_rate for s in sols]
    for _ in range(m_available - k):
        worst = min(range(k), key=lambda i: (rates[i], i))
        counts[worst] += 1
        sols[worst] = optimize_threshold(counts[worst], budgets[worst])
        rates[worst] = counts[worst] * sols[worst].expected_rate
    return AllocationResult(counts, rates, sols, min(rates))


def _compositions(total: int, parts: int):
    """All tuples of `parts` positive integers summing to `total`, in
    lexicographic order."""
    if parts == 1:
        yield (total,)
        return
    for cuts in combinations(range(1, total), parts - 1):
        prev = 0
        counts = []
        for c in cuts:
            counts.append(c - prev)
            prev = c
        counts.append(total - prev)
        yield tuple(counts)


def brute_force_allocate(budgets: list[LinkBudget], m_available: int) -> AllocationResult:
    """Exhaustive max-min oracle over every carrier partition.

    Guarded to small instances; ties on the optimum go to the
    lexicographically smallest count vector.
    """
    k = len(budgets)
    _check_feasible(k, m_available)
    if k > BRUTE_FORCE_MAX_USERS or m_available > BRUTE_FORCE_MAX_CARRIERS:
        raise InfeasibleAllocation(
            "brute force limited to "
            f"{BRUTE_FORCE_MAX_USERS} users and {BRUTE_FORCE_MAX_CARRIERS} carriers"
        )
    cache: dict[tuple[int, int], tuple[float, ThresholdSolution]] = {}

    def rate(i: int, n: int) -> tuple[float, ThresholdSolution]:
        if (i, n) not in cache:
            sol = optimize_threshold(n, budgets[i])
            cache[(i, n)] = (n * sol.expected_rate, sol)
        return cache[(i, n)]

    best = None
    for counts in _compositions(m_available, k):
        worst = min(rate(i, n)[0] for i, n in enumerate(counts))
        if best is None or worst > best[0]:
            best = (worst, counts)
    min_rate, counts = best
    rates = [rate(i, n)[0] for i, n in enumerate(counts)]
    sols = [rate(i, n)[1] for i, n in enumerate(counts)]
    return AllocationResult(list(counts), rates, sols, min_rate)


def assign_carrier_indices(counts: list[int]) -> list[list[int]]:
    """Label concrete carrier indices per user as consecutive blocks."""
    out = []
    base = 0
    for n in counts:
        out.append(list(range(base, base + n)))
        base += n
    return out
