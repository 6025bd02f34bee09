"""Repeated seeded trials with deterministic aggregation.

Per-trial seeds derive from (master_seed, trial_index), so results are
reproducible and independent of any execution order; aggregation is a
deterministic reduction over trial indices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from numpy.random import SeedSequence

from .channel import floor_index
from .protocol import Scheme, plan_scheme, run_trial
from .rates import ModeParams

_Z95 = 1.959963984540054


@dataclass(frozen=True)
class AggregateStats:
    """Aggregated simulation outcome across trials."""

    trials: int
    mean_sum_rate: float
    sum_rate_ci95: tuple[float, float]
    failure_rate_1: float
    failure_rate_2: float

    @property
    def failure_rate(self) -> float:
        return 0.5 * (self.failure_rate_1 + self.failure_rate_2)


def trial_seed(master_seed: int, index: int) -> SeedSequence:
    """Stable per-trial seed derivation."""
    return SeedSequence((master_seed, index))


def simulate(
    p: ModeParams,
    n: int,
    n_t: int,
    delta_t: float,
    scheme: Scheme,
    guard_coeff: float,
    trials: int,
    master_seed: int,
) -> AggregateStats:
    """Run independent trials and aggregate.

    A user whose block decode fails contributes zero bits for that trial, so
    the per-trial sum rate is (bits_delivered_1 + bits_delivered_2) / n.
    """
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    plan = plan_scheme(p, n, scheme, guard_coeff)
    sum_rates = []
    fail1 = fail2 = 0
    for k in range(trials):
        stats = run_trial(p, n, n_t, delta_t, plan, trial_seed(master_seed, k))
        sum_rates.append(stats.sum_rate)
        fail1 += not stats.decode_ok_1
        fail2 += not stats.decode_ok_2
    mean = sum(sum_rates) / trials
    if trials > 1:
        var = sum((x - mean) ** 2 for x in sum_rates) / (trials - 1)
        half = _Z95 * math.sqrt(var / trials)
    else:
        half = 0.0
    return AggregateStats(
        trials=trials,
        mean_sum_rate=mean,
        sum_rate_ci95=(mean - half, mean + half),
        failure_rate_1=fail1 / trials,
        failure_rate_2=fail2 / trials,
    )


def convergence_sweep(
    p: ModeParams,
    scheme: Scheme,
    n_list: list[int],
    trials: int,
    master_seed: int,
    *,
    delta_t: float | None = None,
    guard_coeff: float = 3.0,
    n_t: int | None = None,
) -> list[tuple[int, float, float]]:
    """One (n, mean_sum_rate, failure_rate) row per blocklength, ascending.

    Unless given, the transient mode defaults to ceil(n^(2/3)) slots at the
    mode-B erasure probability, clamped to the room mode A leaves.
    """
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly ascending")
    dt = p.delta_b if delta_t is None else delta_t
    rows = []
    for n in n_list:
        nt = default_transient_length(n, p.eta) if n_t is None else n_t
        agg = simulate(p, n, nt, dt, scheme, guard_coeff, trials, master_seed)
        rows.append((n, agg.mean_sum_rate, agg.failure_rate))
    return rows


def default_transient_length(n: int, eta: float) -> int:
    """ceil(n^(2/3)), clamped so the schedule still fits."""
    return max(0, min(math.ceil(n ** (2.0 / 3.0)), n - floor_index(eta * n)))
