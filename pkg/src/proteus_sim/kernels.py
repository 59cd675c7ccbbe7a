"""Behavioral stream kernels standing in for synthesized logic.

A partial bitstream carries a kernel id; applying it instantiates the
bound kernel behind the bus-macro interface.  A kernel sees exactly one
cycle-sized port view per user-clock edge: at most one word in, one word
out, the shared registers (writable only at kernel indices), and an
interrupt request line.  Nothing else of the device is reachable.
"""

from __future__ import annotations

from dataclasses import dataclass

from .fixed_part import KERNEL_REGS, RegisterFile, StreamBuffer


class DuplicateId(Exception):
    pass


class KernelAccessViolation(Exception):
    pass


class PortIO:
    """One user-clock cycle's view through the bus-macro signal interface."""

    def __init__(self, down: StreamBuffer, up: StreamBuffer, regs: RegisterFile,
                 raise_irq) -> None:
        self._down = down
        self._up = up
        self._regs = regs
        self._raise_irq = raise_irq
        self.consumed = 0
        self.produced = 0

    def begin_cycle(self) -> None:
        self.consumed = 0
        self.produced = 0

    @property
    def in_available(self) -> int:
        return self._down.occupancy

    @property
    def out_space(self) -> int:
        return self._up.free_words

    def read(self) -> int | None:
        if self.consumed:
            raise KernelAccessViolation("one downstream word per cycle")
        if self._down.occupancy == 0:
            return None
        self.consumed = 1
        return self._down.pop()

    def write(self, word: int) -> None:
        if self.produced:
            raise KernelAccessViolation("one upstream word per cycle")
        self.produced = 1
        self._up.push(word)

    def reg_read(self, index: int) -> int:
        return self._regs.read(index)

    def reg_write(self, index: int, value: int) -> None:
        if index not in KERNEL_REGS:
            raise KernelAccessViolation(f"kernel may only write registers "
                                        f"{KERNEL_REGS.start}..{KERNEL_REGS.stop - 1}")
        self._regs.write(index, value)

    def request_interrupt(self) -> None:
        self._raise_irq()


def kernel_step(kernel, io: PortIO) -> tuple[int, int]:
    """Run one user-clock cycle; returns (consumed, produced) word counts."""
    io.begin_cycle()
    kernel.step(io)
    return io.consumed, io.produced


class IdentityKernel:
    name = "identity"

    def step(self, io: PortIO) -> None:
        if io.in_available and io.out_space:
            io.write(io.read())


class NegateKernel:
    name = "negate"

    def step(self, io: PortIO) -> None:
        if io.in_available and io.out_space:
            io.write(~io.read() & 0xFFFFFFFF)


class AddConstKernel:
    """Adds register 8 (wrapping 32-bit) to every word."""

    name = "add_const"

    def step(self, io: PortIO) -> None:
        if io.in_available and io.out_space:
            io.write((io.read() + io.reg_read(8)) & 0xFFFFFFFF)


class Fir4Kernel:
    """Sliding sum of the current and previous three inputs, wrapping."""

    name = "fir4"

    def __init__(self) -> None:
        self._taps = [0, 0, 0]

    def step(self, io: PortIO) -> None:
        if io.in_available and io.out_space:
            word = io.read()
            io.write((word + sum(self._taps)) & 0xFFFFFFFF)
            self._taps = [word] + self._taps[:2]


BUILTIN_KERNELS = {
    k.name: k for k in (IdentityKernel, NegateKernel, AddConstKernel, Fir4Kernel)
}


@dataclass
class ActivationReport:
    kernel_id: int
    inert: bool
    name: str | None = None


class KernelRegistry:
    """kernel_id -> factory map with at most one live kernel instance."""

    def __init__(self) -> None:
        self._factories: dict[int, tuple[str, object]] = {}
        self.active = None
        self.active_id = 0

    def bind(self, kernel_id: int, behavior) -> None:
        """Register a behavior (built-in name or zero-arg factory) for an id."""
        if kernel_id in self._factories:
            raise DuplicateId(f"kernel id {kernel_id:#x} already bound")
        if isinstance(behavior, str):
            factory = BUILTIN_KERNELS[behavior]
            name = behavior
        else:
            factory = behavior
            name = getattr(behavior, "name", getattr(behavior, "__name__", "custom"))
        self._factories[kernel_id] = (name, factory)

    def bound(self) -> dict[int, str]:
        return {kid: name for kid, (name, _) in self._factories.items()}

    def activate(self, kernel_id: int) -> ActivationReport:
        """Replace the live kernel; unknown ids leave the region inert."""
        self.active = None
        self.active_id = 0
        entry = self._factories.get(kernel_id)
        if entry is None:
            return ActivationReport(kernel_id, inert=True)
        name, factory = entry
        self.active = factory()
        self.active_id = kernel_id
        return ActivationReport(kernel_id, inert=False, name=name)


class KernelHost:
    """Steps the live kernel on user-clock edges while it can make progress.

    The host sleeps after a no-progress cycle and is rewoken by downstream
    enqueues or upstream dequeues, so idle stretches cost no events.
    """

    def __init__(self, sim, domain, down: StreamBuffer, up: StreamBuffer,
                 regs: RegisterFile, raise_irq, trace=None) -> None:
        self.sim = sim
        self.domain = domain
        self.down = down
        self.up = up
        self.regs = regs
        self.registry = KernelRegistry()
        self.trace = trace
        self._io = PortIO(down, up, regs, raise_irq)
        self._awake = False
        down.on_enqueue(self._maybe_wake)
        up.on_dequeue(self._maybe_wake)

    def activate_from_config(self, bs) -> ActivationReport:
        from .fixed_part import REG_STATUS

        report = self.registry.activate(bs.kernel_id)
        self.regs.write(REG_STATUS, 0 if report.inert else bs.kernel_id)
        if self.trace:
            self.trace.record("kernel", "activate",
                              "inert" if report.inert else f"{report.name} {bs.kernel_id:#x}")
        self._maybe_wake()
        return report

    def _maybe_wake(self) -> None:
        if self._awake or self.registry.active is None or self.down.occupancy == 0:
            return
        self._awake = True
        self.domain.subscribe(self._step)

    def _step(self, _t: int) -> None:
        io = self._io
        io.begin_cycle()
        self.registry.active.step(io)
        if not (io.consumed or io.produced):
            self._awake = False
            self.domain.unsubscribe(self._step)
