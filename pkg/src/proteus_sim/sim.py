"""Deterministic discrete-event kernel with gateable clock domains.

Simulated time is an integer tick count (1 tick = 1 picosecond).  All
model activity is expressed as events on a single heap; events with the
same fire time execute in insertion order, which makes every run fully
deterministic.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field


class SimError(Exception):
    """Base class for simulator errors."""


class SchedulingInPast(SimError):
    pass


class UnknownDomain(SimError):
    pass


class Simulator:
    """Single-threaded event loop over integer picosecond time."""

    def __init__(self) -> None:
        self.now = 0
        self._heap: list[tuple[int, int, object]] = []
        self._seq = 0
        self.executed = 0
        self._domains: dict[str, ClockDomain] = {}

    def schedule_at(self, time: int, action) -> int:
        """Enqueue ``action`` to run at absolute ``time``; returns the event id."""
        if time < self.now:
            raise SchedulingInPast(f"cannot schedule at {time} ps, now is {self.now} ps")
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, action))
        return self._seq

    def schedule_after(self, delay: int, action) -> int:
        return self.schedule_at(self.now + delay, action)

    def step(self) -> bool:
        """Execute the next event, advancing time to it.  False if queue empty."""
        if not self._heap:
            return False
        time, _seq, action = heapq.heappop(self._heap)
        self.now = time
        self.executed += 1
        action()
        return True

    def peek_next_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def run_until(self, t_end: int) -> tuple[int, int]:
        """Run all events with fire time <= t_end; returns (now, executed count).

        On return ``now`` equals ``t_end`` even if the queue drained earlier.
        """
        if t_end < self.now:
            raise SchedulingInPast(f"cannot run to {t_end} ps, now is {self.now} ps")
        heap = self._heap
        pop = heapq.heappop
        executed = 0
        while heap and heap[0][0] <= t_end:
            time, _seq, action = pop(heap)
            self.now = time
            executed += 1
            action()
        self.now = t_end
        self.executed += executed
        return t_end, executed

    def run_until_idle(self, t_limit: int | None = None) -> tuple[int, int]:
        """Run until the queue drains (or past ``t_limit``); now stays at the
        last executed event."""
        heap = self._heap
        pop = heapq.heappop
        executed = 0
        while heap and (t_limit is None or heap[0][0] <= t_limit):
            time, _seq, action = pop(heap)
            self.now = time
            executed += 1
            action()
        self.executed += executed
        return self.now, executed

    # -- clock domains -----------------------------------------------------

    def add_domain(self, name: str, period: int, phase: int = 0) -> "ClockDomain":
        if name in self._domains:
            raise ValueError(f"domain {name!r} already registered")
        dom = ClockDomain(name, period, phase, _sim=self)
        self._domains[name] = dom
        return dom

    def domain(self, name: str) -> "ClockDomain":
        try:
            return self._domains[name]
        except KeyError:
            raise UnknownDomain(name) from None

    def set_clock_gate(self, name: str, enabled: bool) -> None:
        """Gate (enabled=False) or ungate (enabled=True) a domain's edges."""
        dom = self.domain(name)
        if enabled:
            dom.ungate()
        else:
            dom.gate()


@dataclass
class ClockDomain:
    """A periodic edge source.

    Edges occur on the fixed lattice ``phase + k*period`` (k >= 0).  Gating
    masks edges without shifting the lattice: after ungating, the next edge
    is the first lattice point at or after the current time that has not
    already fired.
    """

    name: str
    period: int
    phase: int = 0
    gated: bool = False
    _sim: Simulator | None = field(default=None, repr=False)
    _subscribers: list = field(default_factory=list, repr=False)
    _epoch: int = 0
    _last_fired: int = -1
    _pending: bool = False

    def __post_init__(self) -> None:
        if self.period <= 0:
            raise ValueError("period must be > 0")
        if not 0 <= self.phase < self.period:
            raise ValueError("phase must lie in [0, period)")

    def next_edge_at(self, t: int) -> int:
        """First lattice point >= t."""
        if t <= self.phase:
            return self.phase
        return self.phase + -(-(t - self.phase) // self.period) * self.period

    def edges_between(self, t1: int, t2: int) -> int:
        """Number of edges in [t1, t2), by closed formula."""
        if t2 <= t1:
            return 0
        p, ph = self.period, self.phase
        lo = max(t1, 0)
        return (t2 - ph - 1) // p - (lo - ph - 1) // p

    # -- edge delivery -----------------------------------------------------

    def subscribe(self, fn) -> None:
        """Call ``fn(edge_time)`` on every edge from now on (while ungated)."""
        self._subscribers.append(fn)
        self._arm()

    def unsubscribe(self, fn) -> None:
        self._subscribers.remove(fn)
        if not self._subscribers:
            self._epoch += 1
            self._pending = False

    def gate(self) -> None:
        if self.gated:
            return
        self.gated = True
        self._epoch += 1
        self._pending = False

    def ungate(self) -> None:
        if not self.gated:
            return
        self.gated = False
        self._arm()

    def _arm(self) -> None:
        if self.gated or self._pending or not self._subscribers:
            return
        assert self._sim is not None, "domain not attached to a simulator"
        t = self.next_edge_at(self._sim.now)
        if t == self._last_fired:
            t += self.period
        self._epoch += 1
        self._pending = True
        self._schedule_edge(t, self._epoch)

    def _schedule_edge(self, t: int, epoch: int) -> None:
        self._sim.schedule_at(t, lambda: self._fire(t, epoch))

    def _fire(self, t: int, epoch: int) -> None:
        if epoch != self._epoch or self.gated:
            return
        self._last_fired = t
        nxt = t + self.period
        self._schedule_edge(nxt, epoch)
        for fn in tuple(self._subscribers):
            fn(t)
