"""Configuration controller bridging the buffered 32-bit stream to the
byte-wide configuration port.

Writes consume one byte per configuration-clock cycle, a word leaving the
buffer every four cycles; when the buffer runs dry the controller pauses
by gating the configuration clock and resumes on the next enqueued word.
Readback runs the same engine in reverse.  Flash boot bypasses the bus
and loads a full image at a fixed byte rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from . import bitstream as bits
from .fixed_part import StreamBuffer
from .sim import ClockDomain, Simulator


class SelectMapError(Exception):
    pass


class NotIdle(SelectMapError):
    pass


class ChecksumMismatch(SelectMapError):
    pass


def split_word(word: int) -> list[int]:
    """32-bit word to four bytes, least-significant byte first."""
    return [(word >> (8 * k)) & 0xFF for k in range(4)]


def join_bytes(parts) -> int:
    word = 0
    for k, b in enumerate(parts):
        word |= (b & 0xFF) << (8 * k)
    return word


class Mode(Enum):
    IDLE = "idle"
    CONFIGURING = "configuring"
    READBACK = "readback"
    PAUSED = "paused"


@dataclass
class ConfigResult:
    duration: int   # payload phase, ps
    pauses: int
    bytes: int      # payload bytes written to configuration memory


@dataclass
class ReadbackResult:
    duration: int   # payload phase, ps
    bytes: int


@dataclass
class BootReport:
    duration: int
    ok: bool


class _Job:
    __slots__ = ("total", "done", "image", "payload_len", "first_payload_time",
                 "last_payload_end", "allow_fixed", "on_done")

    def __init__(self, total, image, allow_fixed=False, on_done=None):
        self.total = total
        self.done = 0
        self.image = image
        self.payload_len = total - bits.WRAPPER_BYTES
        self.first_payload_time = None
        self.last_payload_end = None
        self.allow_fixed = allow_fixed
        self.on_done = on_done


class SelectMapController:
    """Streams bitstream images between the shared data buffer and the
    configuration memory at one byte per configuration-clock cycle."""

    def __init__(self, sim: Simulator, clock: ClockDomain, buffer: StreamBuffer,
                 config_mem: bits.ConfigurationMemory, trace=None,
                 record_byte_times: bool = False) -> None:
        self.sim = sim
        self.clock = clock
        self.buffer = buffer
        self.config_mem = config_mem
        self.trace = trace
        self.record_byte_times = record_byte_times
        self.byte_times: list[int] = []
        self.pause_windows: list[tuple[int, int]] = []
        self.mode = Mode.IDLE
        self.pauses = 0
        self._resume_mode = Mode.IDLE
        self._pause_start = 0
        self._epoch = 0
        self._awaiting_data = False
        self._job: _Job | None = None
        self.last_config: ConfigResult | None = None
        self.last_readback: ReadbackResult | None = None
        buffer.on_enqueue(self._feed_arrived)
        buffer.on_dequeue(self._space_freed)

    # -- configuration writes ------------------------------------------------

    def start_configure(self, total_bytes: int, allow_fixed: bool = False,
                        on_done=None) -> None:
        """Consume a staged image of ``total_bytes`` (wrapper included) from
        the buffer, then validate and apply it atomically."""
        if self.mode is not Mode.IDLE:
            raise NotIdle(f"controller is {self.mode.value}")
        if total_bytes <= bits.WRAPPER_BYTES:
            raise ValueError("image shorter than header and checksum")
        self.pauses = 0
        self.pause_windows.clear()
        self._job = _Job(total_bytes, bytearray(total_bytes), allow_fixed, on_done)
        self.mode = Mode.CONFIGURING
        if self.trace:
            self.trace.record("selectmap", "configure_start", f"{total_bytes}B")
        if self.buffer.occupancy:
            self._schedule_fetch(self.clock.next_edge_at(self.sim.now))
        else:
            # The transfer has not begun yet, so waiting for the first word
            # is not a pause; underflow pauses count only mid-stream.
            self._awaiting_data = True

    def _schedule_fetch(self, t: int) -> None:
        epoch = self._epoch
        self.sim.schedule_at(t, lambda: self._fetch(t, epoch))

    def _fetch(self, t: int, epoch: int) -> None:
        if epoch != self._epoch or self.mode is not Mode.CONFIGURING:
            return
        job = self._job
        if self.buffer.occupancy == 0:
            self._pause(t)
            return
        word = self.buffer.pop()
        period = self.clock.period
        n = job.total - job.done
        if n > 4:
            n = 4
        for k in range(n):
            job.image[job.done + k] = (word >> (8 * k)) & 0xFF
        self._account_bytes(job, t, n, period)
        job.done += n
        if job.done >= job.total:
            self.sim.schedule_at(t + n * period, self._complete_configure)
        else:
            self._schedule_fetch(t + n * period)

    def _account_bytes(self, job, t, n, period):
        payload_from = bits.HEADER_BYTES
        payload_to = payload_from + job.payload_len
        for k in range(n):
            idx = job.done + k
            if payload_from <= idx < payload_to:
                when = t + k * period
                if job.first_payload_time is None:
                    job.first_payload_time = when
                job.last_payload_end = when + period
        if self.record_byte_times:
            self.byte_times.extend(t + k * period for k in range(n))

    def _complete_configure(self) -> None:
        job = self._job
        self.mode = Mode.IDLE
        self._job = None
        try:
            bs = bits.parse(bytes(job.image))
        except bits.BadChecksum as exc:
            raise ChecksumMismatch(str(exc)) from exc
        if bs.kind is not bits.BitstreamKind.PARTIAL and not job.allow_fixed:
            raise bits.FixedRegionViolation("full bitstream over the bus is not allowed")
        self.config_mem.apply(bs, allow_fixed=job.allow_fixed)
        result = ConfigResult(job.last_payload_end - job.first_payload_time,
                              self.pauses, job.payload_len)
        self.last_config = result
        if self.trace:
            self.trace.record("selectmap", "configure_done",
                              f"{result.bytes}B in {result.duration}ps "
                              f"({result.pauses} pauses)")
        if job.on_done is not None:
            job.on_done(bs, result)

    # -- readback ---------------------------------------------------------------

    def start_readback(self, first_column: int, column_count: int,
                       kernel_id: int = 0, on_done=None) -> int:
        """Emit the region image into the buffer; returns total image bytes."""
        if self.mode is not Mode.IDLE:
            raise NotIdle(f"controller is {self.mode.value}")
        image = self.config_mem.readback(first_column, column_count, kernel_id)
        self.pauses = 0
        self.pause_windows.clear()
        self._job = _Job(len(image), image, on_done=on_done)
        self.mode = Mode.READBACK
        if self.trace:
            self.trace.record("selectmap", "readback_start",
                              f"cols {first_column}+{column_count} {len(image)}B")
        self._schedule_emit(self.clock.next_edge_at(self.sim.now))
        return len(image)

    def _schedule_emit(self, t: int) -> None:
        epoch = self._epoch
        self.sim.schedule_at(t, lambda: self._emit(t, epoch))

    def _emit(self, t: int, epoch: int) -> None:
        if epoch != self._epoch or self.mode is not Mode.READBACK:
            return
        job = self._job
        if self.buffer.free_words == 0:
            self._pause(t)
            return
        period = self.clock.period
        n = job.total - job.done
        if n > 4:
            n = 4
        word = int.from_bytes(job.image[job.done:job.done + n], "little")
        self._account_bytes(job, t, n, period)
        job.done += n
        self.buffer.push(word)
        if job.done >= job.total:
            self.sim.schedule_at(t + n * period, self._complete_readback)
        else:
            self._schedule_emit(t + n * period)

    def _complete_readback(self) -> None:
        job = self._job
        self.mode = Mode.IDLE
        self._job = None
        result = ReadbackResult(job.last_payload_end - job.first_payload_time, job.payload_len)
        self.last_readback = result
        if self.trace:
            self.trace.record("selectmap", "readback_done",
                              f"{result.bytes}B in {result.duration}ps")
        if job.on_done is not None:
            job.on_done(result)

    # -- pause / resume ----------------------------------------------------------

    def _pause(self, t: int) -> None:
        self._resume_mode = self.mode
        self.mode = Mode.PAUSED
        self.pauses += 1
        self._pause_start = t
        self._epoch += 1
        self.clock.gate()
        if self.trace:
            reason = "buffer empty" if self._resume_mode is Mode.CONFIGURING else "buffer full"
            self.trace.record("selectmap", "pause", reason)

    def _resume(self) -> None:
        now = self.sim.now
        self.pause_windows.append((self._pause_start, now))
        self.mode = self._resume_mode
        self.clock.ungate()
        if self.trace:
            self.trace.record("selectmap", "resume", "")
        t = self.clock.next_edge_at(now)
        if self.mode is Mode.CONFIGURING:
            self._schedule_fetch(t)
        else:
            self._schedule_emit(t)

    def _feed_arrived(self) -> None:
        if self._awaiting_data and self.mode is Mode.CONFIGURING:
            self._awaiting_data = False
            self._schedule_fetch(self.clock.next_edge_at(self.sim.now))
        elif self.mode is Mode.PAUSED and self._resume_mode is Mode.CONFIGURING:
            self._resume()

    def _space_freed(self) -> None:
        if self.mode is Mode.PAUSED and self._resume_mode is Mode.READBACK:
            self._resume()

    # -- flash boot ----------------------------------------------------------------

    def power_up_boot(self, flash_image: bytes, byte_period: int = 20000,
                      on_done=None) -> BootReport:
        """Load the full boot image from flash at ``byte_period`` ps per byte.

        A bad image (magic, checksum, or not a full bitstream) leaves the
        configuration memory untouched and reports failure.
        """
        try:
            bs = bits.parse(flash_image)
        except bits.BitstreamError:
            bs = None
        if bs is None or bs.kind is not bits.BitstreamKind.FULL:
            if self.trace:
                self.trace.record("boot", "failed", "bad flash image")
            return BootReport(0, ok=False)
        duration = len(bs.payload) * byte_period
        if self.trace:
            self.trace.record("boot", "start", f"{len(bs.payload)}B payload")

        def finish():
            self.config_mem.apply(bs, allow_fixed=True)
            if on_done is not None:
                on_done(bs)

        self.sim.schedule_at(self.sim.now + duration, finish)
        return BootReport(duration, ok=True)
