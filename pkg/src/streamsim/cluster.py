"""Cycle-stepped model of the compute cluster.

Eight single-issue integer cores share a banked scratchpad (TCDM) and one DMA
engine. Each core owns an FPU fed through a small FP queue, an FREP sequencer
and three stream slots. Every cycle runs in three phases so lockstep stays
deterministic:

  1. plan    - every unit inspects start-of-cycle state and registers the TCDM
               bank requests it would need,
  2. grant   - each bank grants one request (round robin, persistent pointer),
  3. commit  - units apply their planned action if granted, else record a stall.

Bank exclusivity (one grant per bank per cycle) makes commit order irrelevant
for memory, so a sequential sweep is safe.
"""

from dataclasses import dataclass
from collections import deque

from .isa import (Domain, CoreState, alu_result, branch_taken, fp_compute,
                  sext32, MASK32, FP_LOAD, FP_STORE, FP_FMA, FMA_CLASS,
                  INT_ALU, INT_BRANCH)
from .frep import (Sequencer, Scoreboard, QueuedOp, Mode, latency_of,
                   OP_ARITH, OP_LOAD, OP_STORE, FP_QUEUE_DEPTH)
from .ssr import SsrEngine, SsrConfig, SsrDim, Direction, N_SLOTS
from .errors import (CountZero, CycleLimitExceeded, InvalidConfig,
                     InvalidDescriptor, MisalignedAccess, NonFpInCapture,
                     OutOfRangeAccess, OverlappingTransfer, ReconfigWhileActive,
                     SimError, SimulationFault, StreamExhausted)


@dataclass
class ClusterConfig:
    n_cores: int = 8
    tcdm_base: int = 0x0001_0000
    tcdm_size: int = 128 * 1024
    tcdm_banks: int = 32
    bank_width: int = 8
    l2_base: int = 0x8000_0000
    l2_size: int = 2 * 1024 * 1024
    l2_latency: int = 10          # extra cycles for L2/external access
    load_use_latency: int = 1     # TCDM loads complete the cycle after issue
    fp_queue_depth: int = FP_QUEUE_DEPTH
    ssr_fifo_depth: int = 4
    dma_bus_width: int = 64       # bytes per busy cycle (512-bit bus)
    dma_queue_depth: int = 8
    icache_size: int = 8192
    icache_line: int = 32
    # the loader streams the binary through the shared icache, so fetch hits
    # from cycle 0; set True to charge l2_latency on each first line touch
    cold_start_icache: bool = False


@dataclass
class CoreStats:
    fetched: int = 0
    int_retired: int = 0
    custom_retired: int = 0
    fp_executed: int = 0
    fma_executed: int = 0
    flops: int = 0
    int_replay_overlap: int = 0   # integer instructions retired during replay
    stall_bank_conflict: int = 0
    stall_queue_full: int = 0
    stall_frep_wait: int = 0
    stall_drain: int = 0
    stall_icache: int = 0
    stall_mem: int = 0
    stall_dma_full: int = 0
    fp_stall_hazard: int = 0
    fp_stall_stream: int = 0
    fp_stall_bank: int = 0
    fp_idle: int = 0
    cycles_at_halt: int = 0

    def int_stalls(self):
        return (self.stall_bank_conflict + self.stall_queue_full
                + self.stall_frep_wait + self.stall_drain + self.stall_icache
                + self.stall_mem + self.stall_dma_full)

    def fp_slots(self):
        return (self.fp_executed + self.fp_stall_hazard + self.fp_stall_stream
                + self.fp_stall_bank + self.fp_idle)

    @property
    def utilization(self):
        return self.fma_executed / self.cycles_at_halt if self.cycles_at_halt else 0.0


class Memory:
    """Byte-backed TCDM + L2 regions behind one address map."""

    def __init__(self, cfg: ClusterConfig):
        self.cfg = cfg
        self.tcdm = bytearray(cfg.tcdm_size)
        self.l2 = bytearray(cfg.l2_size)

    def _locate(self, addr, n):
        c = self.cfg
        if c.tcdm_base <= addr and addr + n <= c.tcdm_base + c.tcdm_size:
            return self.tcdm, addr - c.tcdm_base
        if c.l2_base <= addr and addr + n <= c.l2_base + c.l2_size:
            return self.l2, addr - c.l2_base
        raise OutOfRangeAccess(f"address 0x{addr:x}+{n} outside TCDM and L2")

    def read(self, addr, n):
        buf, off = self._locate(addr, n)
        return bytes(buf[off:off + n])

    def write(self, addr, data):
        buf, off = self._locate(addr, len(data))
        buf[off:off + len(data)] = data

    def latency(self, addr):
        c = self.cfg
        return 0 if c.tcdm_base <= addr < c.tcdm_base + c.tcdm_size else c.l2_latency

    def in_tcdm(self, addr):
        c = self.cfg
        return c.tcdm_base <= addr < c.tcdm_base + c.tcdm_size

    def bank_of(self, addr):
        c = self.cfg
        if not self.in_tcdm(addr):
            return None
        return ((addr - c.tcdm_base) // c.bank_width) % c.tcdm_banks


class Tcdm:
    """Per-bank round-robin arbitration with persistent pointers."""

    def __init__(self, cfg: ClusterConfig, n_requesters):
        self.cfg = cfg
        self.n_requesters = n_requesters
        self.rr = [0] * cfg.tcdm_banks

    def arbitrate(self, requests):
        """requests: {bank: set(requester ids)} -> {bank: winning id}."""
        grants = {}
        for bank, ids in requests.items():
            ptr = self.rr[bank]
            win = min(ids, key=lambda i: (i - ptr) % self.n_requesters)
            grants[bank] = win
            self.rr[bank] = (win + 1) % self.n_requesters
        return grants


@dataclass
class DmaDescriptor:
    src: int
    dst: int
    inner: int            # bytes per row
    reps: int = 1         # rows
    src_stride: int = 0   # byte distance between row starts
    dst_stride: int = 0

    @classmethod
    def flat(cls, src, dst, length):
        return cls(src=src, dst=dst, inner=length, reps=1)

    @property
    def total_bytes(self):
        return self.inner * self.reps

    def rows(self):
        for r in range(self.reps):
            yield self.src + r * self.src_stride, self.dst + r * self.dst_stride


def _validate_descriptor(desc: DmaDescriptor, mem: Memory):
    if desc.inner < 0 or desc.reps < 1:
        raise InvalidDescriptor(f"bad geometry inner={desc.inner} reps={desc.reps}")
    if desc.inner == 0:
        return
    src_rows, dst_rows = [], []
    for s, d in desc.rows():
        mem._locate(s, desc.inner)
        mem._locate(d, desc.inner)
        src_rows.append((s, s + desc.inner))
        dst_rows.append((d, d + desc.inner))
    for s0, s1 in src_rows:
        for d0, d1 in dst_rows:
            if s0 < d1 and d0 < s1:
                raise OverlappingTransfer(
                    f"src [0x{s0:x},0x{s1:x}) overlaps dst [0x{d0:x},0x{d1:x})")


class DmaEngine:
    """One transfer in flight, descriptor queue behind it, 64 B per busy cycle."""

    def __init__(self, cfg: ClusterConfig, mem: Memory, req_id):
        self.cfg = cfg
        self.mem = mem
        self.req_id = req_id
        self.queue = deque()
        self.active = None
        self.row = 0
        self.offset = 0
        self.slices = []      # pending (src, dst, n) pieces of the current window
        self.busy_cycles = 0
        self.bytes_moved = 0
        self.descriptors_done = 0

    def submit(self, desc: DmaDescriptor):
        _validate_descriptor(desc, self.mem)
        if desc.total_bytes == 0:
            self.descriptors_done += 1   # completes immediately, no cycles
            return True
        if len(self.queue) >= self.cfg.dma_queue_depth:
            return False
        self.queue.append(desc)
        return True

    def outstanding(self):
        return len(self.queue) + (1 if self.active else 0)

    @property
    def idle(self):
        return self.active is None and not self.queue

    def _open_window(self):
        d = self.active
        src = d.src + self.row * d.src_stride + self.offset
        dst = d.dst + self.row * d.dst_stride + self.offset
        n = min(self.cfg.dma_bus_width, d.inner - self.offset)
        # split so each slice touches one bank per TCDM side
        cuts = {0, n}
        bw = self.cfg.bank_width
        for base in (src, dst):
            if self.mem.in_tcdm(base):
                a = (base // bw + 1) * bw - base
                while a < n:
                    cuts.add(a)
                    a += bw
        edges = sorted(cuts)
        self.slices = [(src + a, dst + a, b - a) for a, b in zip(edges, edges[1:])]

    def plan(self, requests):
        if self.active is None:
            if not self.queue:
                return
            self.active = self.queue.popleft()
            self.row = self.offset = 0
            self.slices = []
        if not self.slices:
            self._open_window()
        for s, d, _ in self.slices:
            for bank in (self.mem.bank_of(s), self.mem.bank_of(d)):
                if bank is not None:
                    requests.setdefault(bank, set()).add(self.req_id)

    def commit(self, granted_banks):
        if self.active is None or not self.slices:
            return
        self.busy_cycles += 1
        remaining = []
        moved = 0
        for s, d, n in self.slices:
            sb, db = self.mem.bank_of(s), self.mem.bank_of(d)
            if (sb is None or granted_banks.get(sb) == self.req_id) and \
               (db is None or granted_banks.get(db) == self.req_id):
                self.mem.write(d, self.mem.read(s, n))
                moved += n
            else:
                remaining.append((s, d, n))
        self.bytes_moved += moved
        self.slices = remaining
        if remaining:
            return
        desc = self.active
        self.offset += min(self.cfg.dma_bus_width, desc.inner - self.offset)
        if self.offset >= desc.inner:
            self.offset = 0
            self.row += 1
            if self.row >= desc.reps:
                self.active = None
                self.descriptors_done += 1


class Core:
    """One processor: integer pipe, FP queue, FPU + sequencer, stream slots."""

    def __init__(self, index, cfg: ClusterConfig, mem: Memory):
        self.index = index
        self.cfg = cfg
        self.mem = mem
        self.state = CoreState()
        self.halted = True
        self.stats = CoreStats()
        self.fq = deque()
        self.seq = Sequencer()
        self.sb = Scoreboard()
        self.ssr = SsrEngine(mem, cfg.ssr_fifo_depth)
        self.capture_pending = 0
        self.staged_cfg = [dict() for _ in range(N_SLOTS)]
        self.dma_src = 0
        self.dma_dst = 0
        self.mem_stall = 0          # countdown, with .mem_stall_cause
        self.mem_stall_cause = None
        self.pending_l2 = None      # (instr, addr) completing after mem_stall
        self.fq_ready = 0
        self._int_plan = None
        self._fpu_plan = None

    # request ids: 4*i for the int pipe, 4*i+1+slot for stream engines
    def int_req_id(self):
        return 4 * self.index

    def stream_req_id(self, slot):
        return 4 * self.index + 1 + slot

    def drained(self):
        return (not self.fq and self.seq.idle and self.capture_pending == 0
                and all(s.drained for s in self.ssr.slots))

    def stream_slot_for(self, reg):
        if self.state.ssr_enabled and reg < N_SLOTS:
            slot = self.ssr.slots[reg]
            if slot.active:
                return slot
        return None


class RunResult:
    def __init__(self, cluster):
        self.cycles = cluster.cycle
        self.core_stats = [c.stats for c in cluster.cores]
        self.cores = cluster.cores
        self.memory = cluster.mem
        self.dma_bytes = cluster.dma.bytes_moved
        self.dma_busy_cycles = cluster.dma.busy_cycles
        self.dma_descriptors = cluster.dma.descriptors_done
        self.trace = cluster.trace_rows
        # flat, cycle-ordered list across all watched pcs
        self.watch_hits = sorted((h for hits in cluster.watch_hits.values()
                                  for h in hits), key=lambda h: h["cycle"])

    @property
    def stats(self):
        return self.core_stats[0]

    def total_fma(self):
        return sum(s.fma_executed for s in self.core_stats)

    def total_flops(self):
        return sum(s.flops for s in self.core_stats)

    def flops_per_cycle(self):
        return self.total_flops() / self.cycles if self.cycles else 0.0


def stats_lines(result: RunResult, active_cores=None):
    """Flat, stable key-value serialization of a run's statistics."""
    lines = [f"cluster.cycles {result.cycles}",
             f"cluster.dma_bytes {result.dma_bytes}",
             f"cluster.dma_busy_cycles {result.dma_busy_cycles}",
             f"cluster.dma_descriptors {result.dma_descriptors}",
             f"cluster.flops {result.total_flops()}",
             f"cluster.flops_per_cycle {result.flops_per_cycle():.6f}"]
    n = active_cores if active_cores is not None else len(result.core_stats)
    for i in range(n):
        s = result.core_stats[i]
        p = f"core{i}."
        lines += [
            f"{p}cycles {s.cycles_at_halt}",
            f"{p}fetched {s.fetched}",
            f"{p}int_retired {s.int_retired}",
            f"{p}custom_retired {s.custom_retired}",
            f"{p}fp_executed {s.fp_executed}",
            f"{p}fma_executed {s.fma_executed}",
            f"{p}flops {s.flops}",
            f"{p}utilization {s.utilization:.6f}",
            f"{p}int_replay_overlap {s.int_replay_overlap}",
            f"{p}stall_bank_conflict {s.stall_bank_conflict}",
            f"{p}stall_queue_full {s.stall_queue_full}",
            f"{p}stall_frep_wait {s.stall_frep_wait}",
            f"{p}stall_drain {s.stall_drain}",
            f"{p}stall_icache {s.stall_icache}",
            f"{p}stall_mem {s.stall_mem}",
            f"{p}stall_dma_full {s.stall_dma_full}",
            f"{p}fp_stall_hazard {s.fp_stall_hazard}",
            f"{p}fp_stall_stream {s.fp_stall_stream}",
            f"{p}fp_stall_bank {s.fp_stall_bank}",
            f"{p}fp_idle {s.fp_idle}",
        ]
    return lines


class ClusterSim:
    def __init__(self, config: ClusterConfig | None = None):
        self.cfg = config or ClusterConfig()
        self.mem = Memory(self.cfg)
        self.cores = [Core(i, self.cfg, self.mem) for i in range(self.cfg.n_cores)]
        self.dma = DmaEngine(self.cfg, self.mem, req_id=4 * self.cfg.n_cores)
        self.tcdm = Tcdm(self.cfg, n_requesters=4 * self.cfg.n_cores + 1)
        self.code = {}
        self.cycle = 0
        self.icache_warm = set()
        self.trace_rows = []
        self.trace_enabled = False
        self.watch_pcs = frozenset()
        self.watch_hits = {}

    # ------------------------------------------------------------- loading

    def load_program(self, program, active_cores=None, entries=None):
        """Install an assembled program and reset the cores.

        `entries` may give a per-core entry pc/label; cores beyond
        `active_cores` stay halted. At reset a0 = core index, a1 = n_cores.
        """
        self.code = dict(program.instructions)
        if not self.cfg.cold_start_icache:
            for addr in self.code:
                self.icache_warm.add(addr // self.cfg.icache_line)
        for addr, data in program.data_segments:
            self.mem.write(addr, data)
        n_active = active_cores if active_cores is not None else self.cfg.n_cores
        for i, core in enumerate(self.cores):
            core.state = CoreState()
            core.state.x[10] = i
            core.state.x[11] = self.cfg.n_cores
            core.halted = i >= n_active
            if not core.halted:
                if entries is not None:
                    e = entries[i] if i < len(entries) else None
                    core.state.pc = program.resolve(e) if e is not None else program.entry
                else:
                    core.state.pc = program.entry

    def load_image(self, records):
        for addr, data in records:
            self.mem.write(addr, data)

    def dma_submit(self, desc: DmaDescriptor):
        if not self.dma.submit(desc):
            raise InvalidDescriptor("DMA descriptor queue full")

    # ------------------------------------------------------------- faults

    def _fault(self, core, exc_or_msg):
        raise SimulationFault(str(exc_or_msg), core=core.index, pc=core.state.pc,
                              cycle=self.cycle) from (
            exc_or_msg if isinstance(exc_or_msg, BaseException) else None)

    # ------------------------------------------------------------- FPU phase

    def _plan_fpu(self, core, requests):
        core._fpu_plan = None
        if core.halted:
            return
        if core.seq.mode == Mode.REPLAYING:
            qop = core.seq.replay_op()
            source = "replay"
        elif core.fq_ready > 0:
            qop = core.fq[0]
            source = "queue"
        else:
            core._fpu_plan = ("idle",)
            return
        if qop.capture:
            core._fpu_plan = ("capture", qop)
            return

        instr = qop.instr
        pops = {}      # slot index -> pop count
        sb_srcs = []
        dest = None
        push_slot = None
        mn = instr.mnemonic

        def classify_src(reg):
            slot = core.stream_slot_for(reg)
            if slot is not None:
                if not slot.is_read:
                    self._fault(core, f"read of write-stream f{reg}")
                pops[reg] = pops.get(reg, 0) + 1
            else:
                sb_srcs.append(reg)

        if qop.kind == OP_ARITH:
            if mn in FP_FMA:
                for r in (instr.rs1, instr.rs2, instr.rs3):
                    classify_src(r)
            elif mn == "fmv.d":
                classify_src(instr.rs1)
            elif mn == "fmv.d.x":
                pass  # integer source latched at dispatch
            else:  # fadd/fsub/fmul
                for r in (instr.rs1, instr.rs2):
                    classify_src(r)
            slot = core.stream_slot_for(instr.rd)
            if slot is not None:
                if not slot.is_write:
                    self._fault(core, f"write to read-stream f{instr.rd}")
                push_slot = slot
            else:
                dest = instr.rd
        elif qop.kind == OP_STORE:
            classify_src(instr.rs2)
        elif qop.kind == OP_LOAD:
            slot = core.stream_slot_for(instr.rd)
            if slot is not None:
                self._fault(core, f"load destination f{instr.rd} is stream-mapped")
            dest = instr.rd

        for reg, n in pops.items():
            slot = core.ssr.slots[reg]
            if not slot.can_pop(n):
                if slot.gen.exhausted and not slot.fifo:
                    self._fault(core, StreamExhausted(
                        f"stream {reg} read past its {slot.config.total} elements"))
                core._fpu_plan = ("stall", "stream")
                return
        if push_slot is not None and not push_slot.can_push():
            core._fpu_plan = ("stall", "stream")
            return
        if not core.sb.ok(self.cycle, sb_srcs, dest):
            core._fpu_plan = ("stall", "hazard")
            return

        plan = ("issue", source, qop, pops, dest, push_slot)
        if qop.kind in (OP_LOAD, OP_STORE):
            # FP loads/stores contend under the core's own request id
            bank = self.mem.bank_of(qop.addr)
            requests.setdefault(bank, set()).add(core.int_req_id())
            plan = plan + (bank,)
        core._fpu_plan = plan

    def _commit_fpu(self, core, grants):
        plan = core._fpu_plan
        st = core.stats
        ev = "-"
        if plan is None:
            return ev
        kind = plan[0]
        if kind == "idle":
            st.fp_idle += 1
            return ev
        if kind == "stall":
            if plan[1] == "stream":
                st.fp_stall_stream += 1
            else:
                st.fp_stall_hazard += 1
            return f"stall:{plan[1]}"
        if kind == "capture":
            qop = plan[1]
            qop.capture = False
            core.seq.load_slot(qop)
            core.fq.popleft()
            core.fq_ready -= 1
            st.fp_executed += 1
            return f"capture {qop.instr.mnemonic}"

        _, source, qop, pops, dest, push_slot, *bank = plan
        instr = qop.instr
        mn = instr.mnemonic
        if bank and grants.get(bank[0]) != core.int_req_id():
            st.fp_stall_bank += 1
            return "stall:bank"

        # gather operand bits (stream pops happen exactly once per occurrence)
        def src_bits(reg):
            slot = core.stream_slot_for(reg)
            if slot is not None:
                return slot.pop()
            return core.state.f[reg]

        try:
            if qop.kind == OP_ARITH:
                if mn == "fmv.d":
                    res = src_bits(instr.rs1)
                elif mn == "fmv.d.x":
                    res = qop.xval & MASK32
                elif mn in FP_FMA:
                    a, b, c = (src_bits(instr.rs1), src_bits(instr.rs2),
                               src_bits(instr.rs3))
                    res = fp_compute(instr, a, b, c)
                else:
                    a, b = src_bits(instr.rs1), src_bits(instr.rs2)
                    res = fp_compute(instr, a, b)
                if push_slot is not None:
                    push_slot.push(res)
                else:
                    core.state.f[dest] = res
                    core.sb.issue(self.cycle, dest, latency_of(mn))
                if mn in FMA_CLASS:
                    st.fma_executed += 1
                    lanes = 2 if mn.endswith(".s") else 1
                    st.flops += lanes * (2 if mn in FP_FMA else 1)
            elif qop.kind == OP_LOAD:
                width = 8 if mn == "fld" else 4
                raw = int.from_bytes(self.mem.read(qop.addr, width), "little")
                core.state.f[dest] = raw
                core.sb.issue(self.cycle, dest, latency_of(mn))
            else:  # OP_STORE
                width = 8 if mn == "fsd" else 4
                raw = src_bits(instr.rs2) & ((1 << (8 * width)) - 1)
                self.mem.write(qop.addr, raw.to_bytes(width, "little"))
        except SimError as e:
            self._fault(core, e)

        st.fp_executed += 1
        if source == "replay":
            i, n = core.seq.replay_position()
            core.seq.advance_replay()
            return f"{mn} [iter {i}/{n}]"
        core.fq.popleft()
        core.fq_ready -= 1
        return mn

    # ------------------------------------------------------------- stream phase

    def _plan_streams(self, core, requests):
        core._stream_plans = []
        if core.halted or not core.state.ssr_enabled:
            return
        for slot in core.ssr.slots:
            if not slot.active:
                continue
            addr = slot.want_prefetch()
            if addr is not None:
                bank = self.mem.bank_of(addr)
                if bank is None:
                    self._fault(core, f"stream {slot.index} address 0x{addr:x} "
                                      "outside TCDM")
                requests.setdefault(bank, set()).add(core.stream_req_id(slot.index))
                core._stream_plans.append(("prefetch", slot, addr, bank))
                continue
            addr = slot.want_drain()
            if addr is not None:
                bank = self.mem.bank_of(addr)
                if bank is None:
                    self._fault(core, f"stream {slot.index} address 0x{addr:x} "
                                      "outside TCDM")
                requests.setdefault(bank, set()).add(core.stream_req_id(slot.index))
                core._stream_plans.append(("drain", slot, addr, bank))

    def _commit_streams(self, core, grants):
        for kind, slot, addr, bank in core._stream_plans:
            if grants.get(bank) != core.stream_req_id(slot.index):
                continue  # lost arbitration, retry next cycle
            try:
                if kind == "prefetch":
                    w = slot.config.element_width
                    slot.commit_prefetch(int.from_bytes(self.mem.read(addr, w), "little"))
                else:
                    a, raw = slot.commit_drain()
                    w = slot.config.element_width
                    self.mem.write(a, (raw & ((1 << (8 * w)) - 1)).to_bytes(w, "little"))
            except SimError as e:
                self._fault(core, e)

    # ------------------------------------------------------------- integer phase

    def _plan_int(self, core, requests):
        core._int_plan = None
        if core.halted:
            return
        if core.mem_stall > 0:
            core._int_plan = ("mem_wait",)
            return
        if core.pending_l2 is not None:
            core._int_plan = ("l2_complete",)
            return
        pc = core.state.pc
        instr = self.code.get(pc)
        if instr is None:
            self._fault(core, f"no instruction at pc 0x{pc:x}")
        line = pc // self.cfg.icache_line
        if line not in self.icache_warm:
            core._int_plan = ("icache_miss", line)
            return
        if core.capture_pending > 0:
            if instr.domain != Domain.FP:
                self._fault(core, NonFpInCapture(
                    f"'{instr.mnemonic}' inside an frep capture range"))
            if len(core.fq) >= self.cfg.fp_queue_depth:
                core._int_plan = ("stall", "queue_full", instr)
                return
            qop = self._make_qop(core, instr)
            qop.capture = True
            core._int_plan = ("capture", qop, instr)
            return

        mn = instr.mnemonic
        if instr.domain == Domain.FP:
            if len(core.fq) >= self.cfg.fp_queue_depth:
                core._int_plan = ("stall", "queue_full", instr)
                return
            core._int_plan = ("dispatch", self._make_qop(core, instr), instr)
            return
        if mn in INT_ALU or mn in INT_BRANCH or mn in ("jal", "jalr"):
            core._int_plan = ("alu", instr)
            return
        if mn in ("lw", "sw"):
            addr = (core.state.x[instr.rs1] + instr.imm) & MASK32
            if addr % 4:
                self._fault(core, MisalignedAccess(f"0x{addr:x} not 4-byte aligned"))
            if self.mem.in_tcdm(addr):
                bank = self.mem.bank_of(addr)
                requests.setdefault(bank, set()).add(core.int_req_id())
                core._int_plan = ("int_mem", instr, addr, bank)
            else:
                core._int_plan = ("l2_start", instr, addr)
            return
        # custom ops
        if mn == "frep":
            if not core.seq.idle or core.capture_pending:
                core._int_plan = ("stall", "frep_wait", instr)
            else:
                core._int_plan = ("frep", instr)
            return
        if mn in ("ssr_cfg_write", "ssr_cfg_read", "ssr_enable", "ssr_disable",
                  "dm_src", "dm_dst", "dm_copy", "dm_poll", "halt"):
            if mn in ("ssr_disable", "halt") and not core.drained():
                core._int_plan = ("stall", "drain", instr)
                return
            if mn == "dm_copy" and len(self.dma.queue) >= self.cfg.dma_queue_depth:
                core._int_plan = ("stall", "dma_full", instr)
                return
            core._int_plan = ("custom", instr)
            return
        self._fault(core, f"'{mn}' cannot be executed here")

    def _make_qop(self, core, instr):
        mn = instr.mnemonic
        if mn in FP_LOAD or mn in FP_STORE:
            addr = (core.state.x[instr.rs1] + instr.imm) & MASK32
            width = 8 if mn in ("fld", "fsd") else 4
            if addr % width:
                self._fault(core, MisalignedAccess(f"0x{addr:x} not {width}-byte aligned"))
            if not self.mem.in_tcdm(addr):
                self._fault(core, f"FP memory access 0x{addr:x} outside TCDM")
            kind = OP_LOAD if mn in FP_LOAD else OP_STORE
            return QueuedOp(kind, instr, addr=addr)
        if mn == "fmv.d.x":
            return QueuedOp(OP_ARITH, instr, xval=core.state.x[instr.rs1])
        return QueuedOp(OP_ARITH, instr)

    def _retire_int(self, core, instr):
        st = core.stats
        st.fetched += 1
        if instr.domain == Domain.INT:
            st.int_retired += 1
            if core.seq.mode == Mode.REPLAYING:
                st.int_replay_overlap += 1
        elif instr.domain == Domain.CUSTOM:
            st.custom_retired += 1
        if core.state.pc in self.watch_pcs:
            self.watch_hits.setdefault(core.state.pc, []).append({
                "cycle": self.cycle,
                "core": core.index,
                "fetched": st.fetched,
                "fp_executed": st.fp_executed,
                "fma_executed": st.fma_executed,
                "int_retired": st.int_retired,
            })

    def _commit_int(self, core, grants):
        plan = core._int_plan
        st = core.stats
        if plan is None:
            return "-"
        kind = plan[0]
        state = core.state
        if kind == "mem_wait":
            core.mem_stall -= 1
            if core.mem_stall_cause == "icache":
                st.stall_icache += 1
            else:
                st.stall_mem += 1
            if core.mem_stall == 0:
                core.mem_stall_cause = None
            return "stall:mem"
        if kind == "l2_complete":
            instr, addr = core.pending_l2
            core.pending_l2 = None
            if instr.mnemonic == "lw":
                state.set_x(instr.rd, int.from_bytes(self.mem.read(addr, 4), "little"))
            else:
                self.mem.write(addr, (state.x[instr.rs2] & MASK32).to_bytes(4, "little"))
            self._retire_int(core, instr)
            state.pc += 4
            return f"{state.pc - 4:#x} {instr.mnemonic}"
        if kind == "icache_miss":
            self.icache_warm.add(plan[1])
            core.mem_stall = self.cfg.l2_latency
            core.mem_stall_cause = "icache"
            st.stall_icache += 1
            core.mem_stall -= 1
            if core.mem_stall == 0:
                core.mem_stall_cause = None
            return "stall:icache"
        if kind == "stall":
            cause = plan[1]
            if cause == "queue_full":
                st.stall_queue_full += 1
            elif cause == "frep_wait":
                st.stall_frep_wait += 1
            elif cause == "drain":
                st.stall_drain += 1
            elif cause == "dma_full":
                st.stall_dma_full += 1
            return f"stall:{cause}"

        pc = state.pc
        if kind == "alu":
            instr = plan[1]
            mn = instr.mnemonic
            self._retire_int(core, instr)
            if mn in INT_ALU:
                state.set_x(instr.rd, alu_result(state, instr))
                state.pc += 4
            elif mn in INT_BRANCH:
                state.pc = instr.imm if branch_taken(state, instr) else state.pc + 4
            elif mn == "jal":
                state.set_x(instr.rd, state.pc + 4)
                state.pc = instr.imm
            else:  # jalr
                target = (state.x[instr.rs1] + instr.imm) & MASK32 & ~1
                state.set_x(instr.rd, state.pc + 4)
                state.pc = target
            return f"{pc:#x} {instr.mnemonic}"
        if kind == "int_mem":
            _, instr, addr, bank = plan
            if grants.get(bank) != core.int_req_id():
                st.stall_bank_conflict += 1
                return "stall:bank"
            if instr.mnemonic == "lw":
                state.set_x(instr.rd, int.from_bytes(self.mem.read(addr, 4), "little"))
            else:
                self.mem.write(addr, (state.x[instr.rs2] & MASK32).to_bytes(4, "little"))
            self._retire_int(core, instr)
            state.pc += 4
            return f"{pc:#x} {instr.mnemonic}"
        if kind == "l2_start":
            _, instr, addr = plan
            core.pending_l2 = (instr, addr)
            core.mem_stall = self.cfg.l2_latency
            core.mem_stall_cause = "mem"
            st.stall_mem += 1
            core.mem_stall -= 1
            return "stall:mem"
        if kind in ("dispatch", "capture"):
            _, qop, instr = plan
            core.fq.append(qop)
            if kind == "capture":
                core.capture_pending -= 1
            self._retire_int(core, instr)
            state.pc += 4
            return f"{pc:#x} {instr.mnemonic}"
        if kind == "frep":
            instr = plan[1]
            count = state.x[instr.rs1]
            try:
                core.seq.arm(count, instr.n_instr)
            except (CountZero, SimError) as e:
                self._fault(core, e)
            core.capture_pending = instr.n_instr
            self._retire_int(core, instr)
            state.pc += 4
            return f"{pc:#x} frep"
        if kind == "custom":
            instr = plan[1]
            # another core may have filled the DMA queue earlier this cycle
            if instr.mnemonic == "dm_copy" and \
                    len(self.dma.queue) >= self.cfg.dma_queue_depth:
                st.stall_dma_full += 1
                return "stall:dma_full"
            self._exec_custom(core, instr)
            self._retire_int(core, instr)
            if instr.mnemonic != "halt":
                state.pc += 4
            return f"{pc:#x} {instr.mnemonic}"
        raise AssertionError(f"unhandled plan {kind}")

    def _exec_custom(self, core, instr):
        mn = instr.mnemonic
        state = core.state
        if mn == "ssr_cfg_write":
            if state.ssr_enabled:
                self._fault(core, ReconfigWhileActive(
                    f"slot {instr.slot} reconfigured while streaming"))
            if not 0 <= instr.slot < N_SLOTS:
                self._fault(core, InvalidConfig(f"no stream slot {instr.slot}"))
            value = instr.imm if instr.rs1 is None else state.x[instr.rs1]
            core.staged_cfg[instr.slot][instr.field] = value
        elif mn == "ssr_cfg_read":
            if not 0 <= instr.slot < N_SLOTS:
                self._fault(core, InvalidConfig(f"no stream slot {instr.slot}"))
            state.set_x(instr.rd, core.staged_cfg[instr.slot].get(instr.field, 0))
        elif mn == "ssr_enable":
            try:
                for slot_idx, staged in enumerate(core.staged_cfg):
                    if staged:
                        core.ssr.configure(slot_idx, _config_from_fields(staged))
                core.ssr.enable()
            except SimError as e:
                self._fault(core, e)
            state.ssr_enabled = True
        elif mn == "ssr_disable":
            core.ssr.disable()
            for staged in core.staged_cfg:
                staged.clear()
            state.ssr_enabled = False
        elif mn == "dm_src":
            core.dma_src = state.x[instr.rs1]
        elif mn == "dm_dst":
            core.dma_dst = state.x[instr.rs1]
        elif mn == "dm_copy":
            desc = DmaDescriptor.flat(core.dma_src, core.dma_dst, state.x[instr.rs1])
            try:
                ok = self.dma.submit(desc)
            except SimError as e:
                self._fault(core, e)
            assert ok  # commit path re-checks queue room first
        elif mn == "dm_poll":
            state.set_x(instr.rd, self.dma.outstanding())
        elif mn == "halt":
            core.halted = True
            core.stats.cycles_at_halt = self.cycle + 1
        else:
            raise AssertionError(mn)

    # ------------------------------------------------------------- main loop

    def run(self, max_cycles=1_000_000, trace=False, watch_pcs=None) -> RunResult:
        self.trace_enabled = trace
        self.watch_pcs = frozenset(watch_pcs or ())
        while True:
            if all(c.halted for c in self.cores) and self.dma.idle:
                break
            if self.cycle >= max_cycles:
                raise CycleLimitExceeded(
                    f"simulation exceeded {max_cycles} cycles")
            self._step()
        return RunResult(self)

    def _step(self):
        requests = {}
        for core in self.cores:
            if not core.halted:
                core.fq_ready = len(core.fq)
                for slot in core.ssr.slots:
                    slot.snapshot()
        for core in self.cores:
            self._plan_fpu(core, requests)
            self._plan_streams(core, requests)
            self._plan_int(core, requests)
        self.dma.plan(requests)
        grants = self.tcdm.arbitrate(requests)
        for core in self.cores:
            if core.halted:
                continue
            fp_ev = self._commit_fpu(core, grants)
            self._commit_streams(core, grants)
            int_ev = self._commit_int(core, grants)
            if self.trace_enabled:
                self.trace_rows.append(
                    f"{self.cycle:8d} | core{core.index} | "
                    f"int-pipe: {int_ev:<24} | fp-pipe: {fp_ev}")
        self.dma.commit(grants)
        self.cycle += 1


def _config_from_fields(staged):
    """Build an SsrConfig from the symbolic field writes of the config bus."""
    ndims = staged.get("dims", 1)
    if not 1 <= ndims <= 4:
        raise InvalidConfig(f"dims {ndims} outside 1..4")
    dims = tuple(SsrDim(stride=sext32(staged.get(f"stride{i}", 0)),
                        bound=staged.get(f"bound{i}", 0))
                 for i in range(ndims))
    direction = Direction.WRITE if staged.get("dir", 0) else Direction.READ
    return SsrConfig(base=staged.get("base", 0), dims=dims, direction=direction,
                     element_width=staged.get("width", 8))
