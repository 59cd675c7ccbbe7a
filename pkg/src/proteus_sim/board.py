"""One simulated board: clocks, configuration memory, fixed-part logic,
the SelectMap controller, and the kernel region, attached to host RAM
over the timed PCI bus.

The host drives everything through the register window::

    0 down_base  1 down_len  2 up_base  3 up_len  4 cfg_base  5 cfg_len
    6 control    7 status    8..13 kernel gp      14 irq mask 15 irq cause

``control`` is a write-only command strobe (bit0 start_down, bit1
start_up, bit2 start_reconfig, bit3 start_readback).  For readback,
``cfg_len`` packs the region as (column_count << 16) | first_column and
``cfg_base`` is the destination address.  ``irq cause`` reads the pending
set and acknowledges with write-one-to-clear.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .bitstream import DESK_GEOMETRY, ConfigurationMemory, DeviceGeometry
from .fixed_part import (
    ARBITRATION_ORDER,
    CTRL_START_DOWN,
    CTRL_START_READBACK,
    CTRL_START_RECONFIG,
    CTRL_START_UP,
    REG_CFG_BASE,
    REG_CFG_LEN,
    REG_CONTROL,
    REG_DOWN_BASE,
    REG_DOWN_LEN,
    REG_IRQ_CAUSE,
    REG_IRQ_MASK,
    REG_UP_BASE,
    REG_UP_LEN,
    ArbiterState,
    DmaAddressState,
    InterruptLine,
    IrqCause,
    RegisterFile,
    StreamBuffer,
    TargetId,
    arbitrate,
    busmaster_resume,
    on_fill_status,
)
from .kernels import KernelHost
from .pci import BusTransaction, HostMemory, PciBus, PciConfig, TxnState
from .selectmap import BootReport, SelectMapController
from .sim import Simulator
from .trace import TraceRecorder


class BoardFault(Exception):
    pass


class BoardInert(BoardFault):
    pass


class JobActive(BoardFault):
    pass


class Deadlock(BoardFault):
    pass


@dataclass
class BoardConfig:
    geometry: DeviceGeometry = DESK_GEOMETRY
    pci: PciConfig = field(default_factory=PciConfig)
    cfg_clock_period: int = 20_000   # 50 MHz: 1 byte/cycle = 50 MB/s SelectMap peak
    user_clock_period: int = 20_000
    buffer_capacity: int = 256
    fill_low: int = 64
    fill_high: int = 192
    boot_byte_period: int = 20_000


class DmaEngine:
    """Per-target busmaster control section: one job, one request at a time."""

    def __init__(self, device: "Device", target: TargetId, buffer: StreamBuffer) -> None:
        self.device = device
        self.target = target
        self.buffer = buffer
        self.addr = DmaAddressState()
        self.request = None
        self.txn = None
        self.on_job_done = None
        self.job_bytes = 0
        self.started_at: int | None = None
        self.finished_at: int | None = None

    @property
    def busy(self) -> bool:
        return self.addr.active or self.request is not None or self.txn is not None

    def start(self, base: int, total: int, on_job_done=None) -> None:
        if self.busy:
            raise JobActive(f"{self.target.value} job already active")
        if total <= 0:
            raise ValueError("job length must be > 0")
        self.addr.load(base, total)
        self.on_job_done = on_job_done
        self.job_bytes = total
        self.started_at = self.device.sim.now
        self.finished_at = None
        self.device.evaluate(self.target)

    def sink(self, word: int, nbytes: int) -> None:
        self.buffer.push(word)
        self.addr.advance(nbytes)

    def source(self, nbytes: int) -> int:
        word = self.buffer.pop()
        self.addr.advance(nbytes)
        return word

    def finished(self, txn: BusTransaction) -> None:
        self.txn = None
        if txn.state is TxnState.PREEMPTED:
            self.request = busmaster_resume(self.addr, self.target, txn, self.buffer,
                                            self.device.max_burst_bytes)
        elif self.addr.active:
            self.device.evaluate(self.target)
        else:
            self.finished_at = self.device.sim.now
            done, self.on_job_done = self.on_job_done, None
            if done is not None:
                done()


class Device:
    """The FPGA side: fixed part plus reconfigurable region."""

    def __init__(self, world: "World") -> None:
        self.world = world
        self.sim = world.sim
        cfg = world.config
        trace = world.trace
        self.config = cfg
        self.trace = trace

        self.pci_clk = self.sim.add_domain("pci", cfg.pci.clock_period)
        self.cfg_clk = self.sim.add_domain("cfg", cfg.cfg_clock_period)
        self.user_clk = self.sim.add_domain("user", cfg.user_clock_period)

        self.config_mem = ConfigurationMemory(cfg.geometry)
        self.regs = RegisterFile()
        self.irq = InterruptLine(on_event=self._irq_event)

        def buf(name):
            return StreamBuffer(cfg.buffer_capacity, cfg.fill_low, cfg.fill_high, name)

        self.down_buf = buf("downstream")
        self.up_buf = buf("upstream")
        self.smap_buf = buf("selectmap")

        self.engines = {
            TargetId.UPSTREAM: DmaEngine(self, TargetId.UPSTREAM, self.up_buf),
            TargetId.DOWNSTREAM: DmaEngine(self, TargetId.DOWNSTREAM, self.down_buf),
            TargetId.SELECTMAP_READ: DmaEngine(self, TargetId.SELECTMAP_READ, self.smap_buf),
            TargetId.SELECTMAP_WRITE: DmaEngine(self, TargetId.SELECTMAP_WRITE, self.smap_buf),
        }
        self.arbiter = ArbiterState()

        self.controller = SelectMapController(self.sim, self.cfg_clk, self.smap_buf,
                                              self.config_mem, trace=trace)
        self.kernel_host = KernelHost(self.sim, self.user_clk, self.down_buf, self.up_buf,
                                      self.regs,
                                      lambda: self._raise(IrqCause.KERNEL_REQUEST),
                                      trace=trace)
        self.registry = self.kernel_host.registry

        self.down_buf.on_dequeue(lambda: self.evaluate(TargetId.DOWNSTREAM))
        self.up_buf.on_enqueue(lambda: self.evaluate(TargetId.UPSTREAM))
        self.smap_buf.on_dequeue(lambda: self.evaluate(TargetId.SELECTMAP_WRITE))
        self.smap_buf.on_enqueue(lambda: self.evaluate(TargetId.SELECTMAP_READ))

        world.bus.set_master(self._next_transaction)

        self.booted = False
        self.boot_report: BootReport | None = None
        self.last_config = None
        self.last_readback = None

    # -- power-up -----------------------------------------------------------

    def power_up(self, flash_image: bytes) -> BootReport:
        if self.booted or (self.boot_report is not None and self.boot_report.ok):
            raise JobActive("board already powered up")
        report = self.controller.power_up_boot(flash_image, self.config.boot_byte_period,
                                               on_done=self._boot_done)
        self.boot_report = report
        return report

    def _boot_done(self, _bs) -> None:
        self.booted = True
        if self.trace:
            self.trace.record("boot", "done", "fixed part active")

    def _require_booted(self) -> None:
        if not self.booted:
            raise BoardInert("device registers are inaccessible before boot completes")

    # -- host register window -------------------------------------------------

    def host_reg_read(self, index: int) -> int:
        self._require_booted()
        if index == REG_IRQ_CAUSE:
            return int(self.irq.pending)
        return self.regs.read(index)

    def host_reg_write(self, index: int, value: int) -> None:
        self._require_booted()
        if index == REG_IRQ_CAUSE:
            self.irq.acknowledge(IrqCause(value & 0x1F))
        elif index == REG_IRQ_MASK:
            self.irq.masked = IrqCause(value & 0x1F)
            self.regs.write(index, value)
        elif index == REG_CONTROL:
            self._control(value)
        else:
            self.regs.write(index, value)

    def _control(self, command: int) -> None:
        regs = self.regs
        if command & CTRL_START_DOWN:
            self.engines[TargetId.DOWNSTREAM].start(
                regs.read(REG_DOWN_BASE), regs.read(REG_DOWN_LEN),
                on_job_done=lambda: self._raise(IrqCause.DOWNSTREAM_DONE))
        if command & CTRL_START_UP:
            self.engines[TargetId.UPSTREAM].start(
                regs.read(REG_UP_BASE), regs.read(REG_UP_LEN),
                on_job_done=lambda: self._raise(IrqCause.UPSTREAM_DONE))
        if command & CTRL_START_RECONFIG:
            total = regs.read(REG_CFG_LEN)
            self.controller.start_configure(total, allow_fixed=False,
                                            on_done=self._reconfig_done)
            self.engines[TargetId.SELECTMAP_WRITE].start(regs.read(REG_CFG_BASE), total)
        if command & CTRL_START_READBACK:
            packed = regs.read(REG_CFG_LEN)
            first, count = packed & 0xFFFF, packed >> 16
            total = self.controller.start_readback(first, count,
                                                   on_done=self._readback_done)
            self.engines[TargetId.SELECTMAP_READ].start(
                regs.read(REG_CFG_BASE), total,
                on_job_done=lambda: self._raise(IrqCause.READBACK_DONE))

    def _reconfig_done(self, bs, result) -> None:
        self.last_config = result
        self.kernel_host.activate_from_config(bs)
        self._raise(IrqCause.RECONFIG_DONE)

    def _readback_done(self, result) -> None:
        self.last_readback = result

    def _raise(self, cause: IrqCause) -> None:
        self.irq.raise_(cause, self.sim.now)

    def _irq_event(self, kind: str, cause: IrqCause) -> None:
        if self.trace:
            self.trace.record("irq", kind, cause.name or str(int(cause)))

    # -- busmaster plumbing ------------------------------------------------------

    @property
    def max_burst_bytes(self) -> int:
        return self.config.pci.max_burst_cycles * 4

    def evaluate(self, target: TargetId) -> None:
        """Re-run the fill-status trigger for one target's control section."""
        engine = self.engines[target]
        if engine.txn is None and engine.request is None and engine.addr.active:
            req = on_fill_status(target, engine.buffer, engine.addr, self.max_burst_bytes)
            if req is not None:
                engine.request = req
                self.world.bus.poke()

    def _next_transaction(self) -> BusTransaction | None:
        pending = [t for t in ARBITRATION_ORDER if self.engines[t].request is not None]
        if not pending:
            return None
        target = arbitrate(self.arbiter, pending)
        engine = self.engines[target]
        req, engine.request = engine.request, None
        txn = BusTransaction(target.value, req.direction, req.address, req.nbytes,
                             word_sink=engine.sink, word_source=engine.source,
                             on_finish=engine.finished)
        engine.txn = txn
        return txn


class World:
    """A complete simulated system; one per scenario run."""

    def __init__(self, config: BoardConfig | None = None, tracing: bool = False,
                 record_bus_cycles: bool = False) -> None:
        self.config = config or BoardConfig()
        self.sim = Simulator()
        self.trace = TraceRecorder(self.sim) if tracing else None
        self.host = HostMemory()
        self.bus = PciBus(self.sim, self.host, self.config.pci, trace=self.trace,
                          record_cycles=record_bus_cycles)
        self.device = Device(self)

    def run_until_cause(self, cause: IrqCause, what: str = "") -> None:
        """Advance the event loop until the cause is pending."""
        irq = self.device.irq
        step = self.sim.step
        while not (irq.pending & cause):
            if not step():
                raise Deadlock(f"simulation idle while waiting for {what or cause}")

    def acknowledge(self, cause: IrqCause) -> None:
        self.device.host_reg_write(REG_IRQ_CAUSE, int(cause))
