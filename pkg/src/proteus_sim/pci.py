"""Timed model of host RAM and the shared 33 MHz/32-bit PCI bus.

One bus master (the board) moves 4 bytes per bus cycle between page-locked
host regions and on-chip buffers.  Host CPU contention appears only as
stall windows, during which no data cycles occur and active bursts are
preempted; a preempted job is resumed by its owner from the next address.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum

from .sim import Simulator

PCI_CLOCK_PERIOD = 30303  # ps; 4 bytes per cycle reproduces the 132 MB/s peak
PAGE_ALIGN = 4096
ADDRESS_SPACE = 2**32


class PciError(Exception):
    pass


class OutOfAddressSpace(PciError):
    pass


class UnmappedAddress(PciError):
    pass


class HostMemory:
    """Map of non-overlapping, page-aligned shared regions."""

    def __init__(self, base: int = 0x0010_0000) -> None:
        self._next_base = base
        self._regions: dict[int, tuple[int, bytearray]] = {}
        self._next_id = 0

    def map_shared_region(self, nbytes: int) -> tuple[int, int]:
        if nbytes <= 0:
            raise ValueError("region size must be > 0")
        base = -(-self._next_base // PAGE_ALIGN) * PAGE_ALIGN
        if base + nbytes > ADDRESS_SPACE:
            raise OutOfAddressSpace(f"cannot fit {nbytes} bytes at {base:#x}")
        region_id = self._next_id
        self._next_id += 1
        self._regions[region_id] = (base, bytearray(nbytes))
        self._next_base = base + nbytes
        return region_id, base

    def region(self, region_id: int) -> bytearray:
        return self._regions[region_id][1]

    def region_base(self, region_id: int) -> int:
        return self._regions[region_id][0]

    def locate(self, address: int, nbytes: int) -> tuple[bytearray, int]:
        """Resolve an address span to (backing buffer, offset)."""
        for base, buf in self._regions.values():
            if base <= address and address + nbytes <= base + len(buf):
                return buf, address - base
        raise UnmappedAddress(f"{nbytes} bytes at {address:#x} not inside any region")

    def write(self, address: int, data: bytes) -> None:
        buf, off = self.locate(address, len(data))
        buf[off:off + len(data)] = data

    def read(self, address: int, nbytes: int) -> bytes:
        buf, off = self.locate(address, nbytes)
        return bytes(buf[off:off + nbytes])


@dataclass
class PciConfig:
    clock_period: int = PCI_CLOCK_PERIOD
    bus_width: int = 4
    grant_latency_cycles: int = 8
    max_burst_cycles: int = 4096

    @property
    def peak_bytes_per_second(self) -> float:
        return self.bus_width / (self.clock_period * 1e-12)


class Direction(Enum):
    TO_DEVICE = "to_device"
    TO_HOST = "to_host"


class TxnState(Enum):
    WAITING = "waiting"
    BURSTING = "bursting"
    PREEMPTED = "preempted"
    DONE = "done"


@dataclass
class BusTransaction:
    master_id: str
    direction: Direction
    start_address: int
    total_bytes: int
    word_sink: object = None    # fn(word, nbytes), TO_DEVICE
    word_source: object = None  # fn(nbytes) -> word, TO_HOST
    on_finish: object = None    # fn(txn), called when DONE or PREEMPTED
    transferred_bytes: int = 0
    state: TxnState = TxnState.WAITING
    cycles_used: int = field(default=0, repr=False)


class PciBus:
    """Single-master burst engine with grant latency, burst limit, stalls."""

    def __init__(self, sim: Simulator, host_mem: HostMemory, config: PciConfig | None = None,
                 trace=None, record_cycles: bool = False) -> None:
        self.sim = sim
        self.host = host_mem
        self.config = config or PciConfig()
        self.trace = trace
        self.record_cycles = record_cycles
        self.cycle_log: list[tuple[int, int, str]] = []
        self.busy = False
        self.busy_ticks = 0
        self.total_data_cycles = 0
        self.total_data_bytes = 0
        self._stalls: list[tuple[int, int]] = []  # sorted (start, end)
        self._master_fetch = None
        self._wake_pending = False
        self._burst_start = 0

    # -- stalls --------------------------------------------------------------

    def inject_stall(self, start: int, duration: int) -> None:
        if duration <= 0:
            raise ValueError("stall duration must be > 0")
        bisect.insort(self._stalls, (start, start + duration))

    def stalled_at(self, t: int) -> bool:
        i = bisect.bisect_right(self._stalls, (t, ADDRESS_SPACE << 32))
        return i > 0 and self._stalls[i - 1][1] > t

    def stall_clear_time(self, t: int) -> int:
        """End of the merged chain of stall windows covering time t."""
        end = t
        for start, stop in self._stalls:
            if start > end:
                break
            if stop > end:
                end = stop
        return end

    # -- master hookup ---------------------------------------------------------

    def set_master(self, fetch) -> None:
        """fetch() -> BusTransaction | None, consulted whenever the bus idles."""
        self._master_fetch = fetch

    def poke(self) -> None:
        """Grant the bus to the master's next transaction if possible."""
        if self.busy or self._master_fetch is None:
            return
        now = self.sim.now
        if self.stalled_at(now):
            self._schedule_wake(self.stall_clear_time(now))
            return
        txn = self._master_fetch()
        if txn is not None:
            self.begin_burst(txn)

    def _schedule_wake(self, t: int) -> None:
        if self._wake_pending:
            return
        self._wake_pending = True

        def wake():
            self._wake_pending = False
            self.poke()

        self.sim.schedule_at(t, wake)

    # -- bursts ----------------------------------------------------------------

    def begin_burst(self, txn: BusTransaction) -> BusTransaction:
        """Start a granted burst; the bus must be idle and unstalled."""
        assert not self.busy, "bus already granted"
        assert txn.state is TxnState.WAITING
        buf, off = self.host.locate(txn.start_address, txn.total_bytes)
        self.busy = True
        txn.state = TxnState.BURSTING
        self._burst_start = self.sim.now
        if self.trace:
            self.trace.record("pci", "grant", txn.master_id)
        first = self.sim.now + self.config.grant_latency_cycles * self.config.clock_period
        self._schedule_word(txn, buf, off, first)
        return txn

    def _schedule_word(self, txn, buf, off, t):
        self.sim.schedule_at(t, lambda: self._word_event(txn, buf, off, t))

    def _word_event(self, txn, buf, off, t):
        if txn.state is not TxnState.BURSTING:
            return
        if self.stalled_at(t):
            self._finish(txn, TxnState.PREEMPTED, t)
            return
        done = txn.transferred_bytes
        n = txn.total_bytes - done
        if n > 4:
            n = 4
        pos = off + done
        if txn.direction is Direction.TO_DEVICE:
            txn.word_sink(int.from_bytes(buf[pos:pos + n], "little"), n)
        else:
            word = txn.word_source(n)
            buf[pos:pos + n] = (word & ((1 << (8 * n)) - 1)).to_bytes(n, "little")
        txn.transferred_bytes = done + n
        txn.cycles_used += 1
        self.total_data_cycles += 1
        self.total_data_bytes += n
        if self.record_cycles:
            self.cycle_log.append((t, n, txn.master_id))
        period = self.config.clock_period
        if txn.transferred_bytes >= txn.total_bytes:
            self.sim.schedule_at(t + period, lambda: self._finish(txn, TxnState.DONE, t + period))
        elif txn.cycles_used >= self.config.max_burst_cycles:
            self.sim.schedule_at(t + period,
                                 lambda: self._finish(txn, TxnState.PREEMPTED, t + period))
        else:
            self._schedule_word(txn, buf, off, t + period)

    def _finish(self, txn, state, t):
        txn.state = state
        self.busy = False
        self.busy_ticks += t - self._burst_start
        if self.trace:
            self.trace.record("pci", "complete" if state is TxnState.DONE else "preempt",
                              f"{txn.master_id} {txn.transferred_bytes}/{txn.total_bytes}B")
        if txn.on_finish is not None:
            txn.on_finish(txn)
        self.poke()


def measure_throughput(cycles, window: tuple[int, int], period: int) -> float:
    """Bytes/second over ``window`` = (t0, t1) ps, from (time, nbytes, ...) records.

    Each record's bytes are spread uniformly over its cycle [t, t+period),
    so no window can measure above the wire rate.
    """
    t0, t1 = window
    if t1 <= t0:
        raise ValueError("window must be non-empty")
    lo = bisect.bisect_left(cycles, (t0 - period, -1, ""))
    moved = 0.0
    for rec in cycles[lo:]:
        t, n = rec[0], rec[1]
        if t >= t1:
            break
        overlap = min(t + period, t1) - max(t, t0)
        if overlap > 0:
            moved += n * overlap / period
    return moved / ((t1 - t0) * 1e-12)
