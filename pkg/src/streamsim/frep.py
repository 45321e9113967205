"""FP repetition sequencer and FPU issue bookkeeping.

The sequencer owns a 16-entry micro-loop buffer. An frep diverts the next
n_instr FP instructions into the buffer: each one passes through the FPU issue
slot once as a buffer-fill operation (capture pass, no arithmetic, no stream
pops), then the buffer replays autonomously for the full repetition count.
Replay has priority over the FP queue and is never interleaved with it.

The scoreboard models a fully pipelined FPU with per-class latencies; issue
stalls while a source is in flight (RAW) or the destination has a pending
write (WAW). Stream-mapped registers bypass the scoreboard entirely.
"""

from dataclasses import dataclass, field as dfield
from enum import Enum

from .errors import CountZero, NestedFrep
from .isa import FP_FMA, FP_ADDMUL, FP_LOAD, FP_STORE, FP_MOVE, Instruction

BUFFER_DEPTH = 16
FP_QUEUE_DEPTH = 8

# issue-to-result latencies, cycles
LAT_FMA = 3
LAT_ADDMUL = 2
LAT_MOVE = 1
LAT_LOAD = 1
LAT_STORE = 1


def latency_of(mnemonic: str) -> int:
    if mnemonic in FP_FMA:
        return LAT_FMA
    if mnemonic in FP_ADDMUL:
        return LAT_ADDMUL
    if mnemonic in FP_MOVE:
        return LAT_MOVE
    if mnemonic in FP_LOAD:
        return LAT_LOAD
    if mnemonic in FP_STORE:
        return LAT_STORE
    raise ValueError(f"no FPU latency for '{mnemonic}'")


class Mode(Enum):
    IDLE = "idle"
    CAPTURING = "capturing"
    REPLAYING = "replaying"


@dataclass
class FrepState:
    buffer: list = dfield(default_factory=list)
    n_instr: int = 0
    total_iters: int = 0
    iter_idx: int = 0
    inst_ptr: int = 0
    mode: Mode = Mode.IDLE


class Sequencer:
    def __init__(self):
        self.state = FrepState()

    @property
    def mode(self):
        return self.state.mode

    @property
    def idle(self):
        return self.state.mode == Mode.IDLE

    def arm(self, count: int, n_instr: int):
        """Begin a capture of n_instr instructions to be run count times."""
        if not self.idle:
            raise NestedFrep("frep issued while the sequencer is busy")
        if count == 0:
            raise CountZero("frep with repetition count 0")
        if not 1 <= n_instr <= BUFFER_DEPTH:
            raise NestedFrep(f"frep body of {n_instr} exceeds the "
                             f"{BUFFER_DEPTH}-entry buffer")
        st = self.state
        st.buffer = []
        st.n_instr = n_instr
        st.total_iters = count
        st.iter_idx = 0
        st.inst_ptr = 0
        st.mode = Mode.CAPTURING

    def load_slot(self, op):
        """Commit one capture pass; starts replay once the body is complete.

        The buffer holds queue entries, so operands latched at dispatch
        (addresses, integer move sources) stay fixed across iterations.
        """
        st = self.state
        assert st.mode == Mode.CAPTURING
        st.buffer.append(op)
        if len(st.buffer) == st.n_instr:
            st.mode = Mode.REPLAYING
            st.iter_idx = 1
            st.inst_ptr = 0

    def replay_op(self):
        return self.state.buffer[self.state.inst_ptr]

    def replay_position(self):
        return self.state.iter_idx, self.state.total_iters

    def advance_replay(self):
        st = self.state
        st.inst_ptr += 1
        if st.inst_ptr == st.n_instr:
            st.inst_ptr = 0
            st.iter_idx += 1
            if st.iter_idx > st.total_iters:
                st.mode = Mode.IDLE
                st.buffer = []


class Scoreboard:
    """Register -> cycle at which its pending result becomes usable."""

    def __init__(self):
        self.ready = {}

    def ok(self, now, sources, dest=None):
        for r in sources:
            if self.ready.get(r, 0) > now:
                return False
        if dest is not None and self.ready.get(dest, 0) > now:
            return False  # WAW: wait for the older write to land
        return True

    def issue(self, now, dest, lat):
        if dest is not None:
            self.ready[dest] = now + lat


# FP queue entry kinds
OP_ARITH = "arith"      # compute or register move
OP_LOAD = "load"        # fld/flw: memory -> FP reg at FPU issue
OP_STORE = "store"      # fsd/fsw: FP reg -> memory at FPU issue


@dataclass
class QueuedOp:
    kind: str
    instr: Instruction
    addr: int | None = None   # latched at dispatch for loads/stores
    xval: int | None = None   # latched integer source for fmv.d.x
    capture: bool = False     # first pass fills the sequencer buffer instead
                              # of executing; cleared when the op is stored
