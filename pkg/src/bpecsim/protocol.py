"""Feedback network-coding protocol over a sampled multi-modal channel.

The transmitter runs event-driven rounds of three phases: uncoded packets for
user 1, uncoded packets for user 2, then XOR multicast of the two virtual
queues (packets each user is still missing but the other user overheard).
An inter-modal trial runs one core round spanning the mode boundary plus an
optional fresh-tail round that refills slack reserved by the concentration
guard.  Intra-modal trials run one round per non-transient mode; the
no-feedback baseline sends idealized erasure-coded streams.

Two drivers produce identical ``TrialStats``: a per-slot reference loop
(supports action recording, per-slot observers and deadline-free runs) and a
batched driver that jumps between resolution slots for large blocklengths.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple, Optional

import numpy as np
from numpy.random import SeedSequence, default_rng

from .channel import (
    ChannelSampler,
    ModeSchedule,
    build_schedule,
    ceil_index,
    floor_index,
)
from .rates import (
    ModeParams,
    UnsupportedParametersError,
    optimal_raw_fraction,
)

_INF = math.inf


class Scheme(Enum):
    INTER_MODAL = "inter"
    INTRA_MODAL = "intra"
    NO_FEEDBACK = "nofb"


class Phase(Enum):
    RAW1 = "raw1"
    RAW2 = "raw2"
    MULTICAST = "multicast"
    FRESH_TAIL = "fresh_tail"
    DONE = "done"


class PacketStatus(Enum):
    FRESH = "fresh"
    AWAITING = "awaiting"
    OVERHEARD_ONLY = "overheard_only"
    DELIVERED = "delivered"


class PacketId(NamedTuple):
    user: int
    index: int


class Action(NamedTuple):
    """One transmitted symbol: an uncoded packet or the XOR of a queue pair."""

    kind: str  # "raw" | "xor"
    pids: tuple[PacketId, ...]
    bit: int


class ProtocolError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SchemePlan:
    """Precomputed per-trial budget.

    For the inter-modal scheme ``m1``/``m2`` size the core round and
    ``tail1``/``tail2`` the fresh-tail round; a user's full message is the sum.
    Intra-modal messages split into per-mode rounds ``run_a``/``run_b``; the
    no-feedback baseline carries per-mode erasure-code sizes per user.
    """

    scheme: Scheme
    n: int
    n_a: int
    m1: int
    m2: int
    alpha: float
    guard: int
    tail1: int = 0
    tail2: int = 0
    run_a: int = 0
    run_b: int = 0
    fec_a: tuple[int, int] = (0, 0)
    fec_b: tuple[int, int] = (0, 0)

    def message_size(self, user: int) -> int:
        if self.scheme is Scheme.INTER_MODAL:
            return (self.m1 if user == 1 else self.m2) + (
                self.tail1 if user == 1 else self.tail2
            )
        return self.m1 if user == 1 else self.m2


def _resolve_span(
    t0: float, units: float, boundary: float, p_a: float, p_b: float
) -> tuple[float, float, float]:
    """Expected finish time of `units` Bernoulli successes from time t0, at
    success rate p_a per slot before `boundary` and p_b after.

    Returns (end_time, units_before_boundary, time_variance_estimate); the
    variance uses geometric sums, with the mode-crossing part converted at the
    post-boundary rate.
    """
    if units <= 0:
        return t0, 0.0, 0.0
    if t0 < boundary:
        cap = (boundary - t0) * p_a
        if units <= cap:
            end = t0 + units / p_a
            return end, units, units * (1.0 - p_a) / p_a**2
        in_a = cap
        rest = units - cap
        if p_b <= 0:
            return _INF, in_a, _INF
        var = (boundary - t0) * p_a * (1.0 - p_a) / p_b**2 + rest * (1.0 - p_b) / p_b**2
        return boundary + rest / p_b, in_a, var
    if p_b <= 0:
        return _INF, 0.0, _INF
    return t0 + units / p_b, 0.0, units * (1.0 - p_b) / p_b**2


def _round_timeline(
    t0: float, m: int, n_a: float, delta_a: float, delta_b: float
) -> tuple[float, float]:
    """Expected completion time and variance estimate for one three-phase
    round with m packets per user starting at time t0 (transmitter view:
    erasure delta_a before n_a, delta_b after)."""
    if m <= 0:
        return t0, 0.0
    pr_a, pr_b = 1.0 - delta_a**2, 1.0 - delta_b**2
    pd_a, pd_b = 1.0 - delta_a, 1.0 - delta_b
    q_a = delta_a / (1.0 + delta_a)
    q_b = delta_b / (1.0 + delta_b)

    t1, in_a1, var_r1 = _resolve_span(t0, m, n_a, pr_a, pr_b)
    t2, in_a2, var_r2 = _resolve_span(t1, m, n_a, pr_a, pr_b)
    if not math.isfinite(t2):
        return _INF, _INF

    backlog = []
    backlog_var = []
    for in_a in (in_a1, in_a2):
        in_b = m - in_a
        backlog.append(in_a * q_a + in_b * q_b)
        backlog_var.append(in_a * q_a * (1.0 - q_a) + in_b * q_b * (1.0 - q_b))

    ends, sigmas = [], []
    for b, vb in zip(backlog, backlog_var):
        e, _, vd = _resolve_span(t2, b, n_a, pd_a, pd_b)
        if not math.isfinite(e):
            return _INF, _INF
        end_rate = pd_b if e > n_a else pd_a
        sigmas.append(math.sqrt(vd + (vb / end_rate**2 if end_rate > 0 else 0.0)))
        ends.append(e)

    t_mc = max(ends)
    sig_q = max(sigmas)
    if abs(ends[0] - ends[1]) < sig_q:  # near-tied queues: expected max exceeds max mean
        t_mc += 0.5642 * sig_q
    drain_crosses = t2 < n_a < t_mc
    slope = (pd_a / pd_b) if (drain_crosses and pd_b > 0) else 1.0
    var_total = slope**2 * (var_r1 + var_r2) + (0.8264 * sig_q) ** 2
    return t_mc, var_total


def _plan_intermodal(p: ModeParams, n: int, guard_coeff: float) -> SchemePlan:
    if p.delta_a < p.delta_b:
        raise UnsupportedParametersError(
            "inter-modal scheme requires delta_a >= delta_b"
        )
    if p.delta_a >= 1.0 or p.delta_b >= 1.0:
        raise UnsupportedParametersError(
            "inter-modal scheme requires both erasure probabilities below 1"
        )
    n_a = floor_index(p.eta * n)
    guard = max(0, ceil_index(guard_coeff * n ** (2.0 / 3.0)))
    alpha = min(optimal_raw_fraction(p), p.eta)
    m_core = max(0, floor_index((1.0 - p.delta_a**2) * (alpha * n - guard) / 2.0))

    core_end, core_var = _round_timeline(0.0, m_core, n_a, p.delta_a, p.delta_b)
    tail = 0
    if math.isfinite(core_end):
        # Size the fresh tail to refill the expected slack, keeping a margin
        # of three standard deviations of the completion-time estimate.
        def tail_fits(m_t: int, margin: float) -> bool:
            end, _ = _round_timeline(core_end, m_t, n_a, p.delta_a, p.delta_b)
            return end <= n - margin

        margin = 3.0 * math.sqrt(core_var) + 1.0
        for _ in range(2):
            lo, hi = 0, n
            while lo < hi:
                mid = (lo + hi + 1) // 2
                if tail_fits(mid, margin):
                    lo = mid
                else:
                    hi = mid - 1
            tail = lo
            _, tail_var = _round_timeline(core_end, tail, n_a, p.delta_a, p.delta_b)
            margin = 3.0 * math.sqrt(core_var + tail_var) + 1.0
    return SchemePlan(
        scheme=Scheme.INTER_MODAL,
        n=n,
        n_a=n_a,
        m1=m_core,
        m2=m_core,
        alpha=alpha,
        guard=guard,
        tail1=tail,
        tail2=tail,
    )


def _plan_intramodal(p: ModeParams, n: int, guard_coeff: float) -> SchemePlan:
    n_a = floor_index(p.eta * n)
    n_b = n - n_a
    guard = max(0, ceil_index(guard_coeff * n ** (2.0 / 3.0)))

    def round_size(length: int, delta: float) -> int:
        if length <= 0:
            return 0
        g = max(0, ceil_index(guard_coeff * length ** (2.0 / 3.0)))
        return max(0, floor_index((1.0 - delta**2) * (length - g) / (2.0 + delta)))

    run_a = round_size(n_a, p.delta_a)
    run_b = round_size(n_b, p.delta_b)
    m = run_a + run_b
    return SchemePlan(
        scheme=Scheme.INTRA_MODAL,
        n=n,
        n_a=n_a,
        m1=m,
        m2=m,
        alpha=0.0,
        guard=guard,
        run_a=run_a,
        run_b=run_b,
    )


def _even_count(start: int, stop: int) -> int:
    """Even integers in [start, stop)."""
    return (stop + 1) // 2 - (start + 1) // 2


def _plan_nofeedback(p: ModeParams, n: int, guard_coeff: float) -> SchemePlan:
    n_a = floor_index(p.eta * n)
    guard = max(0, ceil_index(guard_coeff * n ** (2.0 / 3.0)))
    derate = max(0.0, 1.0 - guard / n)

    def stream_sizes(start: int, stop: int, delta: float) -> tuple[int, int]:
        share1 = _even_count(start, stop)
        share2 = (stop - start) - share1
        k1 = max(0, floor_index((1.0 - delta) * derate * share1))
        k2 = max(0, floor_index((1.0 - delta) * derate * share2))
        return k1, k2

    fec_a = stream_sizes(0, n_a, p.delta_a)
    fec_b = stream_sizes(n_a, n, p.delta_b)
    return SchemePlan(
        scheme=Scheme.NO_FEEDBACK,
        n=n,
        n_a=n_a,
        m1=fec_a[0] + fec_b[0],
        m2=fec_a[1] + fec_b[1],
        alpha=0.0,
        guard=guard,
        fec_a=fec_a,
        fec_b=fec_b,
    )


def plan_scheme(p: ModeParams, n: int, scheme: Scheme, guard_coeff: float) -> SchemePlan:
    """Size a trial's message and phase budget.

    The plan uses only the non-transient mode knowledge (delta_a, delta_b and
    the boundary derived from eta); transient modes are invisible to it.
    """
    if n < 1:
        raise ValueError(f"blocklength must be at least 1, got {n}")
    if guard_coeff < 0:
        raise ValueError(f"guard coefficient must be non-negative, got {guard_coeff}")
    if scheme is Scheme.INTER_MODAL:
        return _plan_intermodal(p, n, guard_coeff)
    if scheme is Scheme.INTRA_MODAL:
        return _plan_intramodal(p, n, guard_coeff)
    return _plan_nofeedback(p, n, guard_coeff)


# ---------------------------------------------------------------------------
# Reference state machines
# ---------------------------------------------------------------------------


class _Stage(Enum):
    RAW1 = 0
    RAW2 = 1
    MC = 2
    DONE = 3


class _Engine:
    """One three-phase round over a fixed pair of packet lists.

    Multicast pairs the current queue heads afresh each slot, so each virtual
    queue drains at its own link rate.  When one queue has emptied, its side of
    the XOR is padded with the most recently resolved packet from that queue
    (known to both receivers), so the other head stays decodable; with no such
    packet the remaining head goes out uncoded.
    """

    def __init__(
        self,
        pkts1: list[PacketId],
        pkts2: list[PacketId],
        statuses: dict[PacketId, PacketStatus],
        start_t: int,
        label: str,
        boundaries: dict[str, Optional[int]],
    ):
        self.q1 = pkts1
        self.q2 = pkts2
        self.pos1 = 0
        self.pos2 = 0
        self.v1: list[PacketId] = []
        self.v2: list[PacketId] = []
        self.vpos1 = 0
        self.vpos2 = 0
        self.statuses = statuses
        self.label = label
        self.boundaries = boundaries
        self.stage = _Stage.RAW1
        for key in ("raw1", "raw2", "multicast"):
            boundaries[self._key(key)] = None
        self._advance(start_t)

    def _key(self, phase: str) -> str:
        return f"{self.label}{phase}"

    @property
    def done(self) -> bool:
        return self.stage is _Stage.DONE

    def _advance(self, t_next: int) -> None:
        """Move past exhausted stages; t_next is the slot count elapsed so far."""
        if self.stage is _Stage.RAW1 and self.pos1 >= len(self.q1):
            self.boundaries[self._key("raw1")] = t_next
            self.stage = _Stage.RAW2
        if self.stage is _Stage.RAW2 and self.pos2 >= len(self.q2):
            self.boundaries[self._key("raw2")] = t_next
            self.stage = _Stage.MC
        if (
            self.stage is _Stage.MC
            and self.vpos1 >= len(self.v1)
            and self.vpos2 >= len(self.v2)
        ):
            self.boundaries[self._key("multicast")] = t_next
            self.stage = _Stage.DONE

    def _mc_sides(self) -> tuple[Optional[PacketId], Optional[PacketId]]:
        """Current XOR constituents: queue head, or the last resolved packet
        once the queue has emptied."""
        if self.vpos1 < len(self.v1):
            side1 = self.v1[self.vpos1]
        else:
            side1 = self.v1[-1] if self.v1 else None
        if self.vpos2 < len(self.v2):
            side2 = self.v2[self.vpos2]
        else:
            side2 = self.v2[-1] if self.v2 else None
        return side1, side2

    def next_action(self, bits1: np.ndarray, bits2: np.ndarray) -> Action:
        def bit_of(pid: PacketId) -> int:
            return int((bits1 if pid.user == 1 else bits2)[pid.index])

        if self.stage is _Stage.RAW1:
            pid = self.q1[self.pos1]
            self.statuses[pid] = PacketStatus.AWAITING
            return Action("raw", (pid,), bit_of(pid))
        if self.stage is _Stage.RAW2:
            pid = self.q2[self.pos2]
            self.statuses[pid] = PacketStatus.AWAITING
            return Action("raw", (pid,), bit_of(pid))
        if self.stage is _Stage.MC:
            side1, side2 = self._mc_sides()
            if side1 is not None and side2 is not None:
                return Action("xor", (side1, side2), bit_of(side1) ^ bit_of(side2))
            pid = side1 if side1 is not None else side2
            return Action("raw", (pid,), bit_of(pid))
        raise ProtocolError("no action in a finished round")

    def apply_feedback(self, t: int, s1: int, s2: int) -> None:
        if self.stage is _Stage.RAW1 or self.stage is _Stage.RAW2:
            own, other = (s1, s2) if self.stage is _Stage.RAW1 else (s2, s1)
            if self.stage is _Stage.RAW1:
                pid = self.q1[self.pos1]
            else:
                pid = self.q2[self.pos2]
            if own:
                self.statuses[pid] = PacketStatus.DELIVERED
            elif other:
                self.statuses[pid] = PacketStatus.OVERHEARD_ONLY
                (self.v1 if pid.user == 1 else self.v2).append(pid)
            else:
                return  # retransmit: packet stays at the head
            if self.stage is _Stage.RAW1:
                self.pos1 += 1
            else:
                self.pos2 += 1
        elif self.stage is _Stage.MC:
            if s1 and self.vpos1 < len(self.v1):
                self.statuses[self.v1[self.vpos1]] = PacketStatus.DELIVERED
                self.vpos1 += 1
            if s2 and self.vpos2 < len(self.v2):
                self.statuses[self.v2[self.vpos2]] = PacketStatus.DELIVERED
                self.vpos2 += 1
        self._advance(t + 1)


class Transmitter:
    """Causal transmitter state: rounds, queues and per-packet statuses.

    ``ignore_boundaries`` removes the intra-modal mode switch (used by
    deadline-free runs, where every round simply drains).
    """

    def __init__(
        self,
        plan: SchemePlan,
        bits1: np.ndarray,
        bits2: np.ndarray,
        ignore_boundaries: bool = False,
    ):
        if plan.scheme is Scheme.NO_FEEDBACK:
            raise ProtocolError("the no-feedback baseline has no transmitter state")
        self.plan = plan
        self.bits1 = bits1
        self.bits2 = bits2
        self.ignore_boundaries = ignore_boundaries
        self.statuses: dict[PacketId, PacketStatus] = {}
        self.boundaries: dict[str, Optional[int]] = {}
        for user, total in ((1, plan.message_size(1)), (2, plan.message_size(2))):
            for i in range(total):
                self.statuses[PacketId(user, i)] = PacketStatus.FRESH
        if plan.scheme is Scheme.INTER_MODAL:
            self._core = _Engine(
                [PacketId(1, i) for i in range(plan.m1)],
                [PacketId(2, i) for i in range(plan.m2)],
                self.statuses,
                0,
                "",
                self.boundaries,
            )
            self._tail: Optional[_Engine] = None
            if self._has_tail():
                for key in ("tail_raw1", "tail_raw2", "tail_multicast"):
                    self.boundaries[key] = None
        else:
            self._core = _Engine(
                [PacketId(1, i) for i in range(plan.run_a)],
                [PacketId(2, i) for i in range(plan.run_a)],
                self.statuses,
                0,
                "a_",
                self.boundaries,
            )
            self._tail = None
            self._engine_b = _Engine(
                [PacketId(1, plan.run_a + i) for i in range(plan.run_b)],
                [PacketId(2, plan.run_a + i) for i in range(plan.run_b)],
                self.statuses,
                plan.n_a,
                "b_",
                self.boundaries,
            )

    def _has_tail(self) -> bool:
        return self.plan.tail1 + self.plan.tail2 > 0

    def _active_engine(self, t: int) -> Optional[_Engine]:
        if self.plan.scheme is Scheme.INTER_MODAL:
            if not self._core.done:
                return self._core
            if self._has_tail():
                if self._tail is None:
                    self._tail = _Engine(
                        [PacketId(1, self.plan.m1 + i) for i in range(self.plan.tail1)],
                        [PacketId(2, self.plan.m2 + i) for i in range(self.plan.tail2)],
                        self.statuses,
                        t,
                        "tail_",
                        self.boundaries,
                    )
                return self._tail if not self._tail.done else None
            return None
        if self.ignore_boundaries:
            if not self._core.done:
                return self._core
            return self._engine_b if not self._engine_b.done else None
        if t < self.plan.n_a:
            return self._core if not self._core.done else None
        return self._engine_b if not self._engine_b.done else None

    def done_at(self, t: int) -> bool:
        engine = self._active_engine(t)
        if engine is not None:
            return False
        if (
            self.plan.scheme is Scheme.INTRA_MODAL
            and not self.ignore_boundaries
            and t < self.plan.n_a
        ):
            return False  # idle gap before the mode-B round starts
        return True

    @property
    def phase(self) -> Phase:
        if self.plan.scheme is Scheme.INTER_MODAL:
            if not self._core.done:
                return {
                    _Stage.RAW1: Phase.RAW1,
                    _Stage.RAW2: Phase.RAW2,
                    _Stage.MC: Phase.MULTICAST,
                }[self._core.stage]
            if self._has_tail() and (self._tail is None or not self._tail.done):
                return Phase.FRESH_TAIL
            return Phase.DONE
        for engine in (self._core, self._engine_b):
            if not engine.done:
                return {
                    _Stage.RAW1: Phase.RAW1,
                    _Stage.RAW2: Phase.RAW2,
                    _Stage.MC: Phase.MULTICAST,
                }[engine.stage]
        return Phase.DONE

    @property
    def raw_queue_1(self) -> list[PacketId]:
        return [
            pid
            for pid, st in self.statuses.items()
            if pid.user == 1 and st in (PacketStatus.FRESH, PacketStatus.AWAITING)
        ]

    @property
    def raw_queue_2(self) -> list[PacketId]:
        return [
            pid
            for pid, st in self.statuses.items()
            if pid.user == 2 and st in (PacketStatus.FRESH, PacketStatus.AWAITING)
        ]

    @property
    def v_1_given_2(self) -> list[PacketId]:
        out = []
        for engine in self._engines():
            out.extend(engine.v1[engine.vpos1 :])
        return out

    @property
    def v_2_given_1(self) -> list[PacketId]:
        out = []
        for engine in self._engines():
            out.extend(engine.v2[engine.vpos2 :])
        return out

    def _engines(self) -> list[_Engine]:
        engines = [self._core]
        if self.plan.scheme is Scheme.INTER_MODAL:
            if self._tail is not None:
                engines.append(self._tail)
        else:
            engines.append(self._engine_b)
        return engines

    def next_action(self, t: int) -> Optional[Action]:
        """Pick slot t's symbol from feedback through slot t-1; None when idle."""
        if self.done_at(t):
            raise ProtocolError("transmitter is done; no further actions")
        engine = self._active_engine(t)
        if engine is None:
            return None
        return engine.next_action(self.bits1, self.bits2)

    def apply_feedback(self, t: int, action: Optional[Action], s1: int, s2: int) -> None:
        if action is None:
            return
        engine = self._active_engine(t)
        engine.apply_feedback(t, s1, s2)


class Receiver:
    """Receiver-side bookkeeping: own packets, overheard packets, coded symbols."""

    def __init__(self, user: int):
        self.user = user
        self.received_own: dict[int, int] = {}
        self.overheard: dict[PacketId, int] = {}
        self.coded_observations: list[tuple[tuple[PacketId, ...], int]] = []

    def observe(self, action: Action) -> None:
        """Record one received symbol (call only when this user's link is on)."""
        if action.kind == "raw":
            pid = action.pids[0]
            if pid.user == self.user:
                self.received_own[pid.index] = action.bit
            else:
                self.overheard[pid] = action.bit
            return
        mine = action.pids[0] if action.pids[0].user == self.user else action.pids[1]
        other = action.pids[1] if action.pids[0].user == self.user else action.pids[0]
        if mine.index not in self.received_own:
            # every useful multicast reception resolves exactly one own packet
            assert other in self.overheard, "multicast symbol not resolvable"
        self.coded_observations.append((action.pids, action.bit))

    def decode(self, m: int) -> tuple[bool, dict[int, int]]:
        """Single-pass substitution; every coded symbol has one own constituent."""
        recovered = dict(self.received_own)
        for pids, bit in self.coded_observations:
            mine = pids[0] if pids[0].user == self.user else pids[1]
            if mine.index in recovered:
                continue
            other = pids[1] if pids[0].user == self.user else pids[0]
            known = self.overheard.get(other)
            if known is None:
                continue
            recovered[mine.index] = bit ^ known
        ok = all(i in recovered for i in range(m))
        return ok, recovered


# ---------------------------------------------------------------------------
# Trial statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialStats:
    """Outcome of one simulated block."""

    n: int
    m1: int
    m2: int
    decode_ok_1: bool
    decode_ok_2: bool
    bits_delivered_1: int
    bits_delivered_2: int
    phase_boundaries: dict[str, Optional[int]]
    empirical_erasure: dict[str, Optional[tuple[float, float]]]
    raw_slots: Optional[int] = None  # core-round raw-phase length
    backlog_1: Optional[int] = None  # virtual-queue sizes entering multicast
    backlog_2: Optional[int] = None

    @property
    def sum_rate(self) -> float:
        return (self.bits_delivered_1 + self.bits_delivered_2) / self.n


def _empirical_erasure(
    schedule: ModeSchedule, s1: np.ndarray, s2: np.ndarray
) -> dict[str, Optional[tuple[float, float]]]:
    out: dict[str, Optional[tuple[float, float]]] = {"A": None, "T": None, "B": None}
    sums = {k: [0, 0, 0] for k in out}  # erased1, erased2, slots
    for start, stop, mode in schedule.segments():
        key = mode.kind.value
        seg1 = s1[start:stop]
        seg2 = s2[start:stop]
        sums[key][0] += int(seg1.size - seg1.sum())
        sums[key][1] += int(seg2.size - seg2.sum())
        sums[key][2] += stop - start
    for key, (e1, e2, cnt) in sums.items():
        if cnt:
            out[key] = (e1 / cnt, e2 / cnt)
    return out


# ---------------------------------------------------------------------------
# Reference driver
# ---------------------------------------------------------------------------


def _nofb_stats(
    plan: SchemePlan, schedule: ModeSchedule, s1: np.ndarray, s2: np.ndarray
) -> TrialStats:
    n_a = plan.n_a
    n = plan.n
    ok = [True, True]
    for user, s in ((1, s1), (2, s2)):
        for (start, stop), (k1, k2) in (((0, n_a), plan.fec_a), ((n_a, n), plan.fec_b)):
            need = k1 if user == 1 else k2
            if need == 0:
                continue
            parity = 0 if user == 1 else 1
            seg = s[start:stop]
            offset = (parity - start) % 2
            got = int(seg[offset::2].sum())
            if got < need:
                ok[user - 1] = False
    m1, m2 = plan.m1, plan.m2
    return TrialStats(
        n=n,
        m1=m1,
        m2=m2,
        decode_ok_1=ok[0],
        decode_ok_2=ok[1],
        bits_delivered_1=m1 if ok[0] else 0,
        bits_delivered_2=m2 if ok[1] else 0,
        phase_boundaries={},
        empirical_erasure=_empirical_erasure(schedule, s1, s2),
    )


def _run_reference(
    plan: SchemePlan,
    schedule: ModeSchedule,
    s1: np.ndarray,
    s2: np.ndarray,
    bits1: np.ndarray,
    bits2: np.ndarray,
    observer: Optional[Callable],
    run_to_completion: bool,
    sampler: Optional[ChannelSampler],
) -> TrialStats:
    if plan.scheme is Scheme.NO_FEEDBACK:
        if run_to_completion:
            raise ProtocolError("the no-feedback baseline has no queues to drain")
        return _nofb_stats(plan, schedule, s1, s2)
    tx = Transmitter(plan, bits1, bits2, ignore_boundaries=run_to_completion)
    rx1 = Receiver(1)
    rx2 = Receiver(2)
    s1_list = s1.tolist()
    s2_list = s2.tolist()
    horizon = len(s1_list)
    t = 0
    while True:
        if tx.done_at(t):
            break
        if t >= horizon:
            if not run_to_completion:
                break
            if sampler is None:
                raise ProtocolError("deadline-free runs need a channel sampler")
            ext1, ext2 = sampler.slots(horizon + 1, horizon + 4097)
            s1_list.extend(ext1.tolist())
            s2_list.extend(ext2.tolist())
            horizon += 4096
        action = tx.next_action(t)
        sa, sb = s1_list[t], s2_list[t]
        if action is not None:
            if sa:
                rx1.observe(action)
            if sb:
                rx2.observe(action)
            tx.apply_feedback(t, action, sa, sb)
        if observer is not None:
            observer(t, action, tx)
        t += 1

    m1 = plan.message_size(1)
    m2 = plan.message_size(2)
    ok1, rec1 = rx1.decode(m1)
    ok2, rec2 = rx2.decode(m2)
    if ok1:
        assert all(rec1[i] == int(bits1[i]) for i in range(m1)), "decode mismatch"
    if ok2:
        assert all(rec2[i] == int(bits2[i]) for i in range(m2)), "decode mismatch"

    boundaries = dict(tx.boundaries)
    raw_slots = None
    backlog_1 = backlog_2 = None
    core = tx._core
    key2 = core._key("raw2")
    if boundaries.get(key2) is not None:
        raw_slots = boundaries[key2]
        backlog_1 = len(core.v1)
        backlog_2 = len(core.v2)
    return TrialStats(
        n=plan.n,
        m1=m1,
        m2=m2,
        decode_ok_1=ok1,
        decode_ok_2=ok2,
        bits_delivered_1=m1 if ok1 else 0,
        bits_delivered_2=m2 if ok2 else 0,
        phase_boundaries=boundaries,
        empirical_erasure=_empirical_erasure(schedule, s1, s2),
        raw_slots=raw_slots,
        backlog_1=backlog_1,
        backlog_2=backlog_2,
    )


# ---------------------------------------------------------------------------
# Batched driver
# ---------------------------------------------------------------------------


class _RoundResult(NamedTuple):
    resolved1: int
    resolved2: int
    end0: Optional[int]  # next free slot when the round completed, else None
    raw1_end: Optional[int]
    raw2_end: Optional[int]
    mc_end: Optional[int]
    backlog1: int
    backlog2: int


def _batched_round(
    s1: np.ndarray,
    s2: np.ndarray,
    useful_idx: np.ndarray,
    s1_idx: np.ndarray,
    s2_idx: np.ndarray,
    t0: int,
    limit: int,
    m1: int,
    m2: int,
) -> _RoundResult:
    """Replay one three-phase round over slots [t0, limit) by jumping between
    resolution slots; matches the per-slot reference exactly."""
    # raw phase, user 1
    i0 = int(np.searchsorted(useful_idx, t0))
    sel1 = useful_idx[i0 : i0 + m1]
    sel1 = sel1[sel1 < limit]
    del1 = int(s1[sel1].sum())
    v1_count = len(sel1) - del1
    if len(sel1) < m1:
        return _RoundResult(del1, 0, None, None, None, None, v1_count, 0)
    raw1_end = int(sel1[-1]) + 1 if m1 else t0

    # raw phase, user 2
    i0 = int(np.searchsorted(useful_idx, raw1_end))
    sel2 = useful_idx[i0 : i0 + m2]
    sel2 = sel2[sel2 < limit]
    del2 = int(s2[sel2].sum())
    v2_count = len(sel2) - del2
    if len(sel2) < m2:
        return _RoundResult(del1, del2, None, raw1_end, None, None, v1_count, v2_count)
    raw2_end = int(sel2[-1]) + 1 if m2 else raw1_end

    # multicast: heads re-pair each slot, so each queue drains on its own link
    mc_last = raw2_end
    resolved = []
    complete = True
    for idx, count in ((s1_idx, v1_count), (s2_idx, v2_count)):
        k = int(np.searchsorted(idx, raw2_end))
        slots = idx[k : k + count]
        slots = slots[slots < limit]
        resolved.append(len(slots))
        if len(slots) < count:
            complete = False
        elif count:
            mc_last = max(mc_last, int(slots[-1]) + 1)
    mc_end = mc_last if complete else None
    return _RoundResult(
        del1 + resolved[0],
        del2 + resolved[1],
        mc_end,
        raw1_end,
        raw2_end,
        mc_end,
        v1_count,
        v2_count,
    )


def _run_batched(
    plan: SchemePlan, schedule: ModeSchedule, s1: np.ndarray, s2: np.ndarray
) -> TrialStats:
    if plan.scheme is Scheme.NO_FEEDBACK:
        return _nofb_stats(plan, schedule, s1, s2)
    useful_idx = np.flatnonzero(s1 | s2)
    s1_idx = np.flatnonzero(s1)
    s2_idx = np.flatnonzero(s2)
    n = plan.n
    boundaries: dict[str, Optional[int]] = {}

    if plan.scheme is Scheme.INTER_MODAL:
        core = _batched_round(s1, s2, useful_idx, s1_idx, s2_idx, 0, n, plan.m1, plan.m2)
        boundaries["raw1"] = core.raw1_end
        boundaries["raw2"] = core.raw2_end
        boundaries["multicast"] = core.mc_end
        res1, res2 = core.resolved1, core.resolved2
        if plan.tail1 + plan.tail2 > 0:
            if core.end0 is not None:
                tail = _batched_round(
                    s1, s2, useful_idx, s1_idx, s2_idx, core.end0, n, plan.tail1, plan.tail2
                )
                boundaries["tail_raw1"] = tail.raw1_end
                boundaries["tail_raw2"] = tail.raw2_end
                boundaries["tail_multicast"] = tail.mc_end
                res1 += tail.resolved1
                res2 += tail.resolved2
            else:
                boundaries["tail_raw1"] = None
                boundaries["tail_raw2"] = None
                boundaries["tail_multicast"] = None
        raw_slots = core.raw2_end
        backlog_1 = core.backlog1 if core.raw2_end is not None else None
        backlog_2 = core.backlog2 if core.raw2_end is not None else None
    else:
        round_a = _batched_round(
            s1, s2, useful_idx, s1_idx, s2_idx, 0, plan.n_a, plan.run_a, plan.run_a
        )
        round_b = _batched_round(
            s1, s2, useful_idx, s1_idx, s2_idx, plan.n_a, n, plan.run_b, plan.run_b
        )
        boundaries["a_raw1"] = round_a.raw1_end
        boundaries["a_raw2"] = round_a.raw2_end
        boundaries["a_multicast"] = round_a.mc_end
        boundaries["b_raw1"] = round_b.raw1_end
        boundaries["b_raw2"] = round_b.raw2_end
        boundaries["b_multicast"] = round_b.mc_end
        res1 = round_a.resolved1 + round_b.resolved1
        res2 = round_a.resolved2 + round_b.resolved2
        raw_slots = round_a.raw2_end
        backlog_1 = round_a.backlog1 if round_a.raw2_end is not None else None
        backlog_2 = round_a.backlog2 if round_a.raw2_end is not None else None

    m1 = plan.message_size(1)
    m2 = plan.message_size(2)
    ok1 = res1 == m1
    ok2 = res2 == m2
    return TrialStats(
        n=n,
        m1=m1,
        m2=m2,
        decode_ok_1=ok1,
        decode_ok_2=ok2,
        bits_delivered_1=m1 if ok1 else 0,
        bits_delivered_2=m2 if ok2 else 0,
        phase_boundaries=boundaries,
        empirical_erasure=_empirical_erasure(schedule, s1, s2),
        raw_slots=raw_slots,
        backlog_1=backlog_1,
        backlog_2=backlog_2,
    )


# ---------------------------------------------------------------------------
# Trial entry point
# ---------------------------------------------------------------------------


def run_trial(
    p: ModeParams,
    n: int,
    n_t: int,
    delta_t: float,
    plan: SchemePlan,
    seed: int | SeedSequence,
    *,
    channel: Optional[tuple[np.ndarray, np.ndarray]] = None,
    observer: Optional[Callable] = None,
    run_to_completion: bool = False,
    driver: str = "auto",
) -> TrialStats:
    """Simulate one block with unit-delay feedback.

    ``channel`` injects explicit slot-state arrays (deterministic tests);
    otherwise slots come from a counter-addressable sampler seeded by ``seed``.
    ``observer(t, action, transmitter)`` is called once per slot after feedback
    and forces the per-slot reference driver, as does ``run_to_completion``.
    """
    schedule = build_schedule(n, p.eta, n_t, p.delta_a, delta_t, p.delta_b)
    if plan.n != n or plan.n_a != schedule.n_a:
        raise ValueError("plan was built for a different blocklength or eta")
    ss = seed if isinstance(seed, SeedSequence) else SeedSequence(seed)
    channel_ss, msg_ss = ss.spawn(2)
    sampler = None
    if channel is not None:
        s1 = np.asarray(channel[0], dtype=np.uint8)
        s2 = np.asarray(channel[1], dtype=np.uint8)
        if len(s1) != n or len(s2) != n:
            raise ValueError("injected channel arrays must have length n")
    else:
        sampler = ChannelSampler(schedule, channel_ss)
        s1, s2 = sampler.slots(1, n + 1)

    if driver not in ("auto", "reference", "batched"):
        raise ValueError(f"unknown driver {driver!r}")
    needs_reference = observer is not None or run_to_completion
    if driver == "batched" and needs_reference:
        raise ValueError("observers and deadline-free runs need the reference driver")
    if run_to_completion and channel is not None:
        raise ValueError("deadline-free runs cannot use an injected channel")

    if driver == "reference" or needs_reference:
        rng = default_rng(msg_ss)
        bits1 = rng.integers(0, 2, size=plan.message_size(1), dtype=np.uint8)
        bits2 = rng.integers(0, 2, size=plan.message_size(2), dtype=np.uint8)
        return _run_reference(
            plan, schedule, s1, s2, bits1, bits2, observer, run_to_completion, sampler
        )
    return _run_batched(plan, schedule, s1, s2)
