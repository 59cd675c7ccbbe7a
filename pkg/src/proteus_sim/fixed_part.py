"""Fixed-part building blocks: stream buffers, transfer arbitration,
busmaster address bookkeeping, the register file, and interrupt logic.

These are the pieces of on-chip logic loaded at boot.  They are kept as
plain state machines and decision functions; the timed wiring to the bus
and clocks lives in the board module.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum, IntFlag

from .pci import BusTransaction, Direction


class TargetId(Enum):
    UPSTREAM = "upstream"
    DOWNSTREAM = "downstream"
    SELECTMAP_READ = "selectmap_read"
    SELECTMAP_WRITE = "selectmap_write"


ARBITRATION_ORDER = (TargetId.UPSTREAM, TargetId.DOWNSTREAM,
                     TargetId.SELECTMAP_READ, TargetId.SELECTMAP_WRITE)

HOST_BOUND = frozenset({TargetId.UPSTREAM, TargetId.SELECTMAP_READ})


class BufferOverflow(Exception):
    pass


class BufferUnderflow(Exception):
    pass


class BadIndex(Exception):
    pass


@dataclass
class ArbiterState:
    last_granted: TargetId | None = None


def arbitrate(state: ArbiterState, pending) -> TargetId:
    """Pick the next bus user among pending targets.

    A target never wins twice in a row while other requests are pending;
    ties go to the fixed cyclic order starting just after the last grant.
    """
    pending = set(pending)
    if not pending:
        raise ValueError("arbitrate requires at least one pending target")
    if len(pending) > 1:
        pending.discard(state.last_granted)
    start = 0 if state.last_granted is None else ARBITRATION_ORDER.index(state.last_granted) + 1
    for i in range(len(ARBITRATION_ORDER)):
        candidate = ARBITRATION_ORDER[(start + i) % len(ARBITRATION_ORDER)]
        if candidate in pending:
            state.last_granted = candidate
            return candidate
    raise AssertionError("unreachable")


class StreamBuffer:
    """Dual-port 256x32 FIFO bridging two clock domains.

    Port discipline (one word per cycle per side) is owned by the callers;
    the buffer enforces capacity and FIFO order and notifies listeners on
    every enqueue/dequeue so fill-status logic can react.
    """

    def __init__(self, capacity: int = 256, fill_low: int = 64, fill_high: int = 192,
                 name: str = "") -> None:
        if not 0 < fill_low <= fill_high <= capacity:
            raise ValueError("thresholds must satisfy 0 < low <= high <= capacity")
        self.capacity = capacity
        self.fill_low = fill_low
        self.fill_high = fill_high
        self.name = name
        self._words: deque[int] = deque()
        self._enqueue_listeners: list = []
        self._dequeue_listeners: list = []

    @property
    def occupancy(self) -> int:
        return len(self._words)

    @property
    def free_words(self) -> int:
        return self.capacity - len(self._words)

    def on_enqueue(self, fn) -> None:
        self._enqueue_listeners.append(fn)

    def on_dequeue(self, fn) -> None:
        self._dequeue_listeners.append(fn)

    def push(self, word: int) -> None:
        if len(self._words) >= self.capacity:
            raise BufferOverflow(f"{self.name or 'buffer'} full at {self.capacity} words")
        self._words.append(word & 0xFFFFFFFF)
        for fn in self._enqueue_listeners:
            fn()

    def pop(self) -> int:
        if not self._words:
            raise BufferUnderflow(f"{self.name or 'buffer'} empty")
        word = self._words.popleft()
        for fn in self._dequeue_listeners:
            fn()
        return word

    def clear(self) -> None:
        self._words.clear()


@dataclass
class TransferRequest:
    target: TargetId
    direction: Direction
    address: int
    nbytes: int


@dataclass
class DmaAddressState:
    """Busmaster address provider state for one target's job."""

    next_address: int = 0
    bytes_remaining: int = 0

    def load(self, base: int, total: int) -> None:
        self.next_address = base
        self.bytes_remaining = total

    def advance(self, nbytes: int) -> None:
        self.next_address += nbytes
        self.bytes_remaining -= nbytes

    @property
    def active(self) -> bool:
        return self.bytes_remaining > 0


def on_fill_status(target: TargetId, buffer: StreamBuffer, addr: DmaAddressState,
                   max_burst_bytes: int) -> TransferRequest | None:
    """Transfer-event trigger from a buffer's fill status.

    Device-bound targets refill once the buffer drains to the low mark;
    host-bound targets drain once it reaches the high mark, or flush the
    tail when the whole remainder of the job is already buffered.
    """
    if not addr.active:
        return None
    if target in HOST_BOUND:
        occ = buffer.occupancy
        if occ >= buffer.fill_high or (occ > 0 and occ * 4 >= addr.bytes_remaining):
            n = min(occ * 4, addr.bytes_remaining, max_burst_bytes)
            return TransferRequest(target, Direction.TO_HOST, addr.next_address, n)
    else:
        if buffer.occupancy <= buffer.fill_low:
            n = min(buffer.free_words * 4, addr.bytes_remaining, max_burst_bytes)
            if n > 0:
                return TransferRequest(target, Direction.TO_DEVICE, addr.next_address, n)
    return None


def busmaster_resume(addr: DmaAddressState, target: TargetId, txn: BusTransaction,
                     buffer: StreamBuffer, max_burst_bytes: int) -> TransferRequest:
    """Restart a preempted transfer at the next address."""
    remainder = txn.total_bytes - txn.transferred_bytes
    if target in HOST_BOUND:
        space = buffer.occupancy * 4
    else:
        space = buffer.free_words * 4
    n = min(remainder, space, max_burst_bytes)
    assert n > 0, "resume with nothing left to move"
    return TransferRequest(target, txn.direction, addr.next_address, n)


class Side(Enum):
    HOST = "host"
    KERNEL = "kernel"


class RegisterFile:
    """16 x 32-bit registers shared between the host and the kernel."""

    SIZE = 16

    def __init__(self) -> None:
        self._regs = [0] * self.SIZE

    def read(self, index: int) -> int:
        self._check(index)
        return self._regs[index]

    def write(self, index: int, value: int) -> None:
        self._check(index)
        self._regs[index] = value & 0xFFFFFFFF

    def access(self, side: Side, index: int, op: str, value: int = 0) -> int:
        if op == "read":
            return self.read(index)
        if op == "write":
            self.write(index, value)
            return value & 0xFFFFFFFF
        raise ValueError(f"unknown op {op!r}")

    def _check(self, index: int) -> None:
        if not 0 <= index < self.SIZE:
            raise BadIndex(f"register index {index} outside 0..{self.SIZE - 1}")


# Device register map (word offsets in the PCI window).
REG_DOWN_BASE = 0
REG_DOWN_LEN = 1
REG_UP_BASE = 2
REG_UP_LEN = 3
REG_CFG_BASE = 4
REG_CFG_LEN = 5
REG_CONTROL = 6
REG_STATUS = 7
KERNEL_REGS = range(8, 14)
REG_IRQ_MASK = 14
REG_IRQ_CAUSE = 15

CTRL_START_DOWN = 1 << 0
CTRL_START_UP = 1 << 1
CTRL_START_RECONFIG = 1 << 2
CTRL_START_READBACK = 1 << 3


class IrqCause(IntFlag):
    RECONFIG_DONE = 1 << 0
    READBACK_DONE = 1 << 1
    UPSTREAM_DONE = 1 << 2
    DOWNSTREAM_DONE = 1 << 3
    KERNEL_REQUEST = 1 << 4


class InterruptLine:
    """Cause set with mask; asserted while any unmasked cause is pending."""

    def __init__(self, on_event=None) -> None:
        self.pending = IrqCause(0)
        self.masked = IrqCause(0)
        self.log: list[tuple[int, str]] = []
        self._on_event = on_event

    @property
    def asserted(self) -> bool:
        return bool(self.pending & ~self.masked)

    def raise_(self, cause: IrqCause, time: int = 0) -> None:
        self.pending |= cause
        self.log.append((time, cause.name or str(cause)))
        if self._on_event is not None:
            self._on_event("raise", cause)

    def acknowledge(self, cause: IrqCause) -> None:
        self.pending &= ~cause
        if self._on_event is not None:
            self._on_event("ack", cause)
