"""Stream semantic registers: affine address generators feeding prefetch FIFOs.

A configured slot turns reads/writes of FP registers f0..f2 into a strided
memory stream. Addresses follow the odometer law

    addr_k = base + sum_d idx_d(k) * stride_d

with dimension 0 fastest. The standalone ssr_read/ssr_write ops access memory
immediately (no timing); the cluster drives the same slots through per-cycle
prefetch/drain requests so stream traffic contends for TCDM banks like any
other requester.
"""

from dataclasses import dataclass
from collections import deque
from enum import Enum

from .errors import (DirectionMismatch, InvalidConfig, ReconfigWhileActive,
                     StreamExhausted)

N_SLOTS = 3
MAX_DIMS = 4
READ_SLOTS = (0, 1, 2)
WRITE_SLOTS = (2,)


class Direction(Enum):
    READ = 0
    WRITE = 1


@dataclass(frozen=True)
class SsrDim:
    stride: int   # bytes, signed
    bound: int    # iterations in this dimension, >= 1


@dataclass(frozen=True)
class SsrConfig:
    base: int
    dims: tuple          # 1..4 SsrDim entries, innermost first
    direction: Direction = Direction.READ
    element_width: int = 8

    def validate(self, slot=None):
        if not 1 <= len(self.dims) <= MAX_DIMS:
            raise InvalidConfig(f"{len(self.dims)} dims outside 1..{MAX_DIMS}")
        for d in self.dims:
            if d.bound < 1:
                raise InvalidConfig(f"dimension bound {d.bound} < 1")
        if self.element_width not in (4, 8):
            raise InvalidConfig(f"element width {self.element_width} not 4 or 8")
        if not isinstance(self.direction, Direction):
            raise InvalidConfig(f"bad direction {self.direction!r}")
        if slot is not None:
            if self.direction == Direction.READ and slot not in READ_SLOTS:
                raise InvalidConfig(f"slot {slot} is not read-capable")
            if self.direction == Direction.WRITE and slot not in WRITE_SLOTS:
                raise InvalidConfig(f"slot {slot} is not write-capable")

    @property
    def total(self):
        n = 1
        for d in self.dims:
            n *= d.bound
        return n


class AddressGen:
    """Odometer over the configured dimensions."""

    def __init__(self, config: SsrConfig):
        self.config = config
        self.idx = [0] * len(config.dims)
        self.issued = 0

    @property
    def exhausted(self):
        return self.issued >= self.config.total

    def peek(self):
        addr = self.config.base
        for i, d in zip(self.idx, self.config.dims):
            addr += i * d.stride
        return addr

    def advance(self):
        self.issued += 1
        for pos, d in enumerate(self.config.dims):
            self.idx[pos] += 1
            if self.idx[pos] < d.bound:
                return
            self.idx[pos] = 0


class StreamSlot:
    """One stream register slot with its FIFO state."""

    def __init__(self, index, fifo_depth=4):
        self.index = index
        self.fifo_depth = fifo_depth
        self.reset()

    def reset(self):
        self.config = None
        self.gen = None
        self.fifo = deque()        # prefetched raw values (read streams)
        self.write_buf = deque()   # pending (addr, raw) stores (write streams)
        self.popped = 0
        self.pushed = 0
        self.ready = 0             # fifo entries visible to pops this cycle

    @property
    def active(self):
        return self.config is not None

    @property
    def is_read(self):
        return self.active and self.config.direction == Direction.READ

    @property
    def is_write(self):
        return self.active and self.config.direction == Direction.WRITE

    # --- cluster-path hooks ---

    def snapshot(self):
        self.ready = len(self.fifo)

    def want_prefetch(self):
        if self.is_read and not self.gen.exhausted and len(self.fifo) < self.fifo_depth:
            return self.gen.peek()
        return None

    def commit_prefetch(self, raw):
        self.fifo.append(raw)
        self.gen.advance()

    def can_pop(self, n=1):
        return self.ready >= n

    def pop(self):
        if self.popped >= self.config.total:
            raise StreamExhausted(f"stream {self.index} read past its "
                                  f"{self.config.total} elements")
        self.ready -= 1
        self.popped += 1
        return self.fifo.popleft()

    def can_push(self):
        return len(self.write_buf) < self.fifo_depth

    def push(self, raw):
        if self.pushed >= self.config.total:
            raise StreamExhausted(f"stream {self.index} written past its "
                                  f"{self.config.total} elements")
        self.write_buf.append((self.gen.peek(), raw))
        self.gen.advance()
        self.pushed += 1

    def want_drain(self):
        return self.write_buf[0][0] if self.write_buf else None

    def commit_drain(self):
        return self.write_buf.popleft()

    @property
    def drained(self):
        return not self.write_buf


class SsrEngine:
    """Three stream slots plus the enable flag, mapped over f0..f2."""

    def __init__(self, mem=None, fifo_depth=4):
        self.mem = mem
        self.enabled = False
        self.slots = [StreamSlot(i, fifo_depth) for i in range(N_SLOTS)]

    def slot(self, i) -> StreamSlot:
        if not 0 <= i < N_SLOTS:
            raise InvalidConfig(f"no stream slot {i}")
        return self.slots[i]

    def configure(self, slot_idx, config: SsrConfig):
        if self.enabled:
            raise ReconfigWhileActive(f"slot {slot_idx} reconfigured while streaming")
        config.validate(slot_idx)
        s = self.slot(slot_idx)
        s.reset()
        s.config = config
        s.gen = AddressGen(config)

    def enable(self):
        self.enabled = True

    def disable(self):
        # cluster path drains write buffers before calling this
        self.enabled = False
        for s in self.slots:
            s.reset()

    def stream_regs_in_use(self):
        return {s.index for s in self.slots if s.active} if self.enabled else set()

    # --- standalone (untimed) semantics ---

    def read(self, slot_idx):
        """Pop the next element of a read stream directly from memory.

        Returns (raw_bits, stall_cycles); standalone access never stalls.
        """
        s = self.slot(slot_idx)
        if not s.active:
            raise InvalidConfig(f"slot {slot_idx} is not configured")
        if not s.is_read:
            raise DirectionMismatch(f"slot {slot_idx} is configured for writing")
        if s.gen.exhausted:
            raise StreamExhausted(f"stream {slot_idx} read past its "
                                  f"{s.config.total} elements")
        addr = s.gen.peek()
        raw = int.from_bytes(self.mem.read(addr, s.config.element_width), "little")
        s.gen.advance()
        s.popped += 1
        return raw, 0

    def write(self, slot_idx, raw):
        """Push the next element of a write stream directly to memory."""
        s = self.slot(slot_idx)
        if not s.active:
            raise InvalidConfig(f"slot {slot_idx} is not configured")
        if not s.is_write:
            raise DirectionMismatch(f"slot {slot_idx} is configured for reading")
        if s.gen.exhausted:
            raise StreamExhausted(f"stream {slot_idx} written past its "
                                  f"{s.config.total} elements")
        addr = s.gen.peek()
        self.mem.write(addr, (raw & ((1 << (8 * s.config.element_width)) - 1))
                       .to_bytes(s.config.element_width, "little"))
        s.gen.advance()
        s.pushed += 1
        return 0


def iter_addresses(config: SsrConfig):
    """All addresses of a configured stream, in issue order."""
    gen = AddressGen(config)
    while not gen.exhausted:
        yield gen.peek()
        gen.advance()
