"""Kernel corpus with bank-aware data layouts and scalar references.

Each builder returns a KernelInstance bundling the assembled program, the
initial memory image, a bit-exact result checker, and roofline metadata.

Layouts pad and skew arrays so concurrent stream prefetchers do not collide in
the same TCDM bank cycle after cycle: two unit-stride streams that start in
the same bank advance in lockstep and would conflict on every access, so each
array is placed to open a bank offset against the streams it runs beside.
Checkers fold with the shared fused-multiply-add primitive in the exact
accumulation order the kernels use, so comparisons are bitwise.
"""

import random
import struct
from dataclasses import dataclass, field as dfield

from .asm import assemble, AsmProgram, DATA_BASE
from .cluster import ClusterConfig, ClusterSim
from .fp import fma64, f64_to_bits

TCDM = DATA_BASE
L2 = 0x8000_0000


@dataclass
class KernelInstance:
    name: str
    program: AsmProgram
    active_cores: int = 1
    data: list = dfield(default_factory=list)     # [(addr, bytes)]
    check: object = None                          # callable(sim) -> None
    watch_label: str | None = None
    entries: list | None = None                   # per-core entry labels
    n: int = 0
    flops: int = 0
    traffic_bytes: int = 0    # main-memory traffic; 0 = scratchpad resident

    def watch_pcs(self):
        if self.watch_label is None:
            return []
        return [self.program.labels[self.watch_label]]


def run_kernel(inst: KernelInstance, config: ClusterConfig | None = None,
               max_cycles=2_000_000, trace=False):
    sim = ClusterSim(config)
    sim.load_program(inst.program, active_cores=inst.active_cores,
                     entries=inst.entries)
    sim.load_image(inst.data)
    result = sim.run(max_cycles=max_cycles, trace=trace,
                     watch_pcs=inst.watch_pcs())
    return sim, result


def _pack(vals):
    return struct.pack(f"<{len(vals)}d", *vals)


def _rand_doubles(rng, n):
    return [rng.uniform(-1.0, 1.0) for _ in range(n)]


def _expect(sim, addr, vals, what):
    got = sim.mem.read(addr, 8 * len(vals))
    want = _pack(vals)
    if got != want:
        for i in range(len(vals)):
            g, w = got[8 * i:8 * i + 8], want[8 * i:8 * i + 8]
            if g != w:
                raise AssertionError(
                    f"{what}[{i}]: got {g.hex()} want {w.hex()} "
                    f"({struct.unpack('<d', g)[0]!r} vs {vals[i]!r})")


def _stream_cfg(slot, base, dims, write=False):
    lines = [f"ssr_cfg_write {slot}, base, {base}"]
    for d, (stride, bound) in enumerate(dims):
        lines.append(f"ssr_cfg_write {slot}, stride{d}, {stride}")
        lines.append(f"ssr_cfg_write {slot}, bound{d}, {bound}")
    if len(dims) > 1:
        lines.append(f"ssr_cfg_write {slot}, dims, {len(dims)}")
    if write:
        lines.append(f"ssr_cfg_write {slot}, dir, 1")
    return lines


# ------------------------------------------------------------------ references

def dot_reference(x, y):
    """Four rotating accumulators, pairwise tree reduction; matches the
    unroll-by-4 structure every dot kernel uses."""
    acc = [0.0, 0.0, 0.0, 0.0]
    for i in range(len(x)):
        acc[i % 4] = fma64(x[i], y[i], acc[i % 4])
    return (acc[0] + acc[1]) + (acc[2] + acc[3])


def axpy_reference(a, x, y):
    return [fma64(xi, a, yi) for xi, yi in zip(x, y)]


def matvec_reference(a_rows, x):
    out = []
    for row in a_rows:
        acc = 0.0
        for aik, xk in zip(row, x):
            acc = fma64(aik, xk, acc)
        out.append(acc)
    return out


def matmul_reference(a, b):
    n = len(a)
    c = [[0.0] * n for _ in range(n)]
    for r in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc = fma64(a[r][k], b[k][j], acc)
            c[r][j] = acc
    return c


# ------------------------------------------------------------------ dot family

def _dot_layout(n):
    x = TCDM
    y = x + 8 * n + 8        # 8-byte pad keeps y's stream one bank behind x's
    r = y + 8 * n + 8
    return x, y, r


def _dot_data(n, seed):
    rng = random.Random(seed)
    x = _rand_doubles(rng, n)
    y = _rand_doubles(rng, n)
    return x, y


def _dot_check(xaddr_r, x, y):
    ref = dot_reference(x, y)

    def check(sim):
        _expect(sim, xaddr_r, [ref], "dot")
    return check


def build_dot_baseline(n=256, seed=0):
    if n % 4 or n < 4:
        raise ValueError("n must be a positive multiple of 4")
    xa, ya, ra = _dot_layout(n)
    x, y = _dot_data(n, seed)
    lines = ["start:"]
    for r in range(4):
        lines.append(f"  fmv.d.x ft{3 + r}, zero")
    for i in range(n):
        acc = f"ft{3 + i % 4}"
        lines += [f"  fld ft0, {xa + 8 * i}(zero)",
                  f"  fld ft1, {ya + 8 * i}(zero)",
                  f"  fmadd.d {acc}, ft0, ft1, {acc}"]
    lines += ["  fadd.d ft3, ft3, ft4",
              "  fadd.d ft5, ft5, ft6",
              "  fadd.d ft3, ft3, ft5",
              f"  fsd ft3, {ra}(zero)",
              "  halt"]
    prog = assemble("\n".join(lines))
    return KernelInstance("dot_baseline", prog, n=n, flops=2 * n + 3,
                          data=[(xa, _pack(x)), (ya, _pack(y))],
                          check=_dot_check(ra, x, y))


def _dot_stream_prologue(n, xa, ya):
    return (_stream_cfg(0, xa, [(8, n)]) + _stream_cfg(1, ya, [(8, n)])
            + [f"  fmv.d.x ft{3 + r}, zero" for r in range(4)]
            + ["  ssr_enable"])


_DOT_EPILOGUE = ["  fadd.d ft3, ft3, ft4",
                 "  fadd.d ft5, ft5, ft6",
                 "  fadd.d ft3, ft3, ft5"]


def build_dot_ssr(n=256, seed=0):
    if n % 4 or n < 4:
        raise ValueError("n must be a positive multiple of 4")
    xa, ya, ra = _dot_layout(n)
    x, y = _dot_data(n, seed)
    lines = (["start:"] + _dot_stream_prologue(n, xa, ya)
             + ["  li t1, 0", f"  li t2, {n // 4}", "loop:"]
             + [f"  fmadd.d ft{3 + r}, ft0, ft1, ft{3 + r}" for r in range(4)]
             + ["  addi t1, t1, 1", "  bltu t1, t2, loop"]
             + _DOT_EPILOGUE
             + [f"  fsd ft3, {ra}(zero)", "  ssr_disable", "  halt"])
    prog = assemble("\n".join(lines))
    return KernelInstance("dot_ssr", prog, n=n, flops=2 * n + 3,
                          data=[(xa, _pack(x)), (ya, _pack(y))],
                          check=_dot_check(ra, x, y))


def build_dot_ssr_frep(n=256, seed=0):
    if n % 4 or n < 8:
        raise ValueError("n must be a multiple of 4, at least 8")
    xa, ya, ra = _dot_layout(n)
    x, y = _dot_data(n, seed)
    lines = (["start:"] + _dot_stream_prologue(n, xa, ya)
             + [f"  li t0, {n // 4}", "  frep t0, 4"]
             + [f"  fmadd.d ft{3 + r}, ft0, ft1, ft{3 + r}" for r in range(4)]
             + _DOT_EPILOGUE
             + [f"  fsd ft3, {ra}(zero)", "  ssr_disable", "  halt"])
    prog = assemble("\n".join(lines))
    return KernelInstance("dot_ssr_frep", prog, n=n, flops=2 * n + 3,
                          data=[(xa, _pack(x)), (ya, _pack(y))],
                          check=_dot_check(ra, x, y))


# ------------------------------------------------------------------ axpy

def build_axpy_ssr(n=256, seed=0):
    """y = a*x + y with x, y read streams and y as the write stream.

    x sits in bank 0 and y in bank 16, so the two read prefetchers and the
    write drain (which trails the reads by a few cycles) never meet.
    """
    if n < 1:
        raise ValueError("n must be positive")
    xa = TCDM
    ya = TCDM + ((8 * n + 255) // 256) * 256 + 128
    aa = ya + 8 * n + 8
    if aa + 8 > TCDM + 128 * 1024:
        raise ValueError("n too large for the scratchpad layout")
    rng = random.Random(seed)
    x = _rand_doubles(rng, n)
    y = _rand_doubles(rng, n)
    a = rng.uniform(-1.0, 1.0)
    ref = axpy_reference(a, x, y)

    lines = (["start:", f"  fld fa0, {aa}(zero)"]
             + _stream_cfg(0, xa, [(8, n)])
             + _stream_cfg(1, ya, [(8, n)])
             + _stream_cfg(2, ya, [(8, n)], write=True)
             + ["  ssr_enable",
                f"  li t0, {n}",
                "  frep t0, 1",
                "  fmadd.d ft2, ft0, fa0, ft1",
                "  ssr_disable",
                "  halt"])
    prog = assemble("\n".join(lines))

    def check(sim):
        _expect(sim, ya, ref, "axpy y")

    return KernelInstance("axpy_ssr", prog, n=n, flops=2 * n, check=check,
                          data=[(xa, _pack(x)), (ya, _pack(y)),
                                (aa, _pack([a]))])


# ------------------------------------------------------------------ matvec

def build_matvec48(n=48, seed=0, streams=True, filler_ints=0):
    """y = A @ x, rows unrolled by four; the stream variant is the
    16-instruction loop whose replay covers 192 of every 204 FPU slots.

    The x vector is padded one bank past A so its prefetcher trails A's
    bank walk instead of colliding with it. `filler_ints` injects that many
    independent integer adds after the captured body to demonstrate
    integer-pipeline progress during replay.
    """
    if n % 4 or n < 8:
        raise ValueError("n must be a multiple of 4, at least 8")
    aa = TCDM
    xa = aa + 8 * n * n + 8
    ya = xa + 8 * n + 8
    if ya + 8 * n > TCDM + 128 * 1024:
        raise ValueError("n too large for the scratchpad layout")
    rng = random.Random(seed)
    rows = [_rand_doubles(rng, n) for _ in range(n)]
    x = _rand_doubles(rng, n)
    ref = matvec_reference(rows, x)

    if not streams:
        lines = ["start:", f"  li t0, {ya}"]
        for r0 in range(0, n, 4):
            for r in range(4):
                lines.append(f"  fmv.d.x ft{3 + r}, zero")
            for k in range(n):
                for r in range(4):
                    lines += [f"  fld ft0, {aa + 8 * (n * (r0 + r) + k)}(zero)",
                              f"  fld ft1, {xa + 8 * k}(zero)",
                              f"  fmadd.d ft{3 + r}, ft0, ft1, ft{3 + r}"]
            for r in range(4):
                lines.append(f"  fsd ft{3 + r}, {ya + 8 * (r0 + r)}(zero)")
        lines.append("  halt")
        prog = assemble("\n".join(lines))
        name = "matvec48_baseline"
        watch = None
    else:
        row = 8 * n
        lines = (["start:"]
                 + _stream_cfg(0, aa, [(row, 4), (8, n), (4 * row, n // 4)])
                 + _stream_cfg(1, xa, [(0, 4), (8, n), (0, n // 4)])
                 + ["  ssr_enable",
                    f"  li t0, {ya}",
                    "  li t1, 0",
                    f"  li t2, {n}",
                    f"  li t3, {n // 4}",
                    "loop:"]
                 + [f"  fmv.d.x ft{3 + r}, zero" for r in range(4)]
                 + ["  frep t2, 4"]
                 + [f"  fmadd.d ft{3 + r}, ft0, ft1, ft{3 + r}" for r in range(4)]
                 + ["  addi t4, t4, 1"] * filler_ints
                 + [f"  fsd ft{3 + r}, {8 * r}(t0)" for r in range(4)]
                 + ["  addi t0, t0, 32",
                    "  addi t1, t1, 1",
                    "loop_end: bltu t1, t3, loop",
                    "  ssr_disable",
                    "  halt"])
        prog = assemble("\n".join(lines))
        name = "matvec48_ssr_frep"
        watch = "loop_end"

    def check(sim):
        _expect(sim, ya, ref, "matvec y")

    return KernelInstance(name, prog, n=n, flops=2 * n * n, check=check,
                          watch_label=watch,
                          data=[(aa, _pack([v for r in rows for v in r])),
                                (xa, _pack(x))])


def build_matvec48_baseline(n=48, seed=0):
    return build_matvec48(n=n, seed=seed, streams=False)


# ------------------------------------------------------------------ matmul

# base banks per core: the A request set {alpha_i + c} for c in 0..3 and the
# B request set {beta_i} stay disjoint mod 32 at every cycle offset, including
# the prefetchers' fixed FIFO lead, so the sixteen saturated read streams
# never meet at a bank while the cores run in lockstep
_MM_A_BANKS = (0, 1, 2, 3, 16, 17, 18, 19)
_MM_B_BANKS = (10, 11, 12, 13, 26, 27, 28, 29)


def build_matmul_ssr_frep(n=32, seed=0, n_cores=8):
    """C = A @ B on all eight cores, each owning four rows.

    Every fmadd pops both read streams, so each stream needs one grant per
    cycle and any lost arbitration is a lost FPU cycle. Three layout rules
    make the streams conflict-free by construction: A rows are padded to n+1
    doubles so the r walk moves one bank per pop; each core's private B copy
    is column-major with a 256-byte column stride, a whole bank rotation, so
    its bank depends on k alone; and the per-core base banks come from the
    disjoint sets above. C goes out through the write stream and its rare
    drains are the only remaining contention.
    """
    if n != 32 or n_cores != 8:
        raise ValueError("layout is engineered for n=32 on 8 cores")
    rpc = n // n_cores
    rng = random.Random(seed)
    a = [_rand_doubles(rng, n) for _ in range(n)]
    b = [_rand_doubles(rng, n) for _ in range(n)]
    ref = matmul_reference(a, b)

    prow = 8 * (n + 1)
    cursor = TCDM

    def place(size, bank):
        nonlocal cursor
        while (cursor // 8) % 32 != bank:
            cursor += 8
        base = cursor
        cursor += size
        return base

    data = []
    a_base, b_base, c_base = [], [], []
    for i in range(n_cores):
        ab = place(rpc * prow, _MM_A_BANKS[i])
        a_base.append(ab)
        block = [v for r in range(rpc) for v in (a[rpc * i + r] + [0.0])]
        data.append((ab, _pack(block)))

        bb = place(n * 256, _MM_B_BANKS[i])
        b_base.append(bb)
        cols = [b[k][j] for j in range(n) for k in range(n)]
        data.append((bb, b"".join(_pack(cols[j * n:(j + 1) * n]).ljust(256, b"\0")
                                  for j in range(n))))

        c_base.append(place(rpc * prow, (_MM_A_BANKS[i] + 4) % 32))
    if cursor > TCDM + 128 * 1024:
        raise ValueError("matrices too large for the scratchpad layout")

    blocks = []
    for i in range(n_cores):
        blocks += ([f"core{i}:"]
                   + _stream_cfg(0, a_base[i], [(prow, rpc), (8, n), (0, n)])
                   + _stream_cfg(1, b_base[i], [(0, rpc), (8, n), (256, n)])
                   + _stream_cfg(2, c_base[i], [(prow, rpc), (8, n)],
                                 write=True)
                   + ["  ssr_enable",
                      "  li t1, 0",
                      f"  li t2, {n}",
                      f"  li t3, {n}",
                      f"col{i}:"]
                   + [f"  fmv.d.x ft{3 + r}, zero" for r in range(rpc)]
                   + [f"  frep t3, {rpc}"]
                   + [f"  fmadd.d ft{3 + r}, ft0, ft1, ft{3 + r}"
                      for r in range(rpc)]
                   + [f"  fmv.d ft2, ft{3 + r}" for r in range(rpc)]
                   + ["  addi t1, t1, 1",
                      f"  bltu t1, t2, col{i}",
                      "  ssr_disable",
                      "  halt"])
    prog = assemble("\n".join(blocks))

    def check(sim):
        for r in range(n):
            base = c_base[r // rpc] + (r % rpc) * prow
            for j in range(n):
                got = struct.unpack("<d", sim.mem.read(base + 8 * j, 8))[0]
                if f64_to_bits(got) != f64_to_bits(ref[r][j]):
                    raise AssertionError(
                        f"matmul c[{r}][{j}]: got {got!r} want {ref[r][j]!r}")

    return KernelInstance("matmul_ssr_frep", prog, active_cores=n_cores,
                          n=n, flops=2 * n * n * n, check=check, data=data,
                          entries=[f"core{i}" for i in range(n_cores)])


# ------------------------------------------------------------------ DMA stream

def build_dma_stream(n=32768, seed=0, chunk=4096):
    """Stream n bytes from L2 into the scratchpad through the DMA engine."""
    if n % chunk or n < chunk:
        raise ValueError(f"n must be a positive multiple of {chunk}")
    if n > 128 * 1024:
        raise ValueError("n exceeds the scratchpad")
    rng = random.Random(seed)
    payload = bytes(rng.getrandbits(8) for _ in range(n))
    lines = ["start:", f"  li t2, {chunk}"]
    for off in range(0, n, chunk):
        lines += [f"  li t0, {L2 + off}",
                  "  dm_src t0",
                  f"  li t1, {TCDM + off}",
                  "  dm_dst t1",
                  "  dm_copy t2"]
    lines += ["poll:",
              "  dm_poll t3",
              "  bne t3, zero, poll",
              "  halt"]
    prog = assemble("\n".join(lines))

    def check(sim):
        got = sim.mem.read(TCDM, n)
        if got != payload:
            raise AssertionError("DMA payload mismatch")

    return KernelInstance("dma_stream", prog, n=n, traffic_bytes=n,
                          check=check, data=[(L2, payload)])


# ------------------------------------------------------------------ TCDM probes

def _tcdm_probe(name, shift, stride, accesses=128):
    """All cores issue `accesses` back-to-back loads with the given per-core
    base shift and per-access stride (bytes)."""
    lines = ["start:",
             f"  li t0, {TCDM}",
             f"  slli t1, a0, {shift}",
             "  add t0, t0, t1"]
    lines += [f"  lw t2, {stride * j}(t0)" for j in range(accesses)]
    lines.append("  halt")
    return KernelInstance(name, assemble("\n".join(lines)), active_cores=8,
                          n=accesses)


def build_tcdm_unit_stride(n=128, seed=0):
    """Core i walks banks (i + 8t) mod 32: all eight cores hit distinct banks
    every cycle, so conflict stalls stay at zero."""
    return _tcdm_probe("tcdm_unit_stride", shift=3, stride=64, accesses=n)


def build_tcdm_same_bank(n=128, seed=0):
    """Stride of one full bank rotation (256 B): every access of every core
    lands in bank 0 and the arbiter serializes them eight to one."""
    return _tcdm_probe("tcdm_same_bank", shift=11, stride=256, accesses=n)


# ------------------------------------------------------------------ registry

KERNELS = {
    "dot_baseline": (build_dot_baseline, "unrolled load/load/fmadd dot product", 256),
    "dot_ssr": (build_dot_ssr, "dot product on two read streams, integer loop", 256),
    "dot_ssr_frep": (build_dot_ssr_frep, "dot product, streams plus replay", 256),
    "axpy_ssr": (build_axpy_ssr, "y = a*x + y with a write stream", 256),
    "matvec48_baseline": (build_matvec48_baseline, "matrix-vector, explicit loads", 48),
    "matvec48_ssr_frep": (build_matvec48, "matrix-vector, the 16-instruction loop", 48),
    "matmul_ssr_frep": (build_matmul_ssr_frep, "blocked matmul on all cores", 32),
    "dma_stream": (build_dma_stream, "bulk L2 to scratchpad copy via DMA", 32768),
    "tcdm_unit_stride": (build_tcdm_unit_stride, "8-core conflict-free bank walk", 128),
    "tcdm_same_bank": (build_tcdm_same_bank, "8-core single-bank serialization", 128),
}


def names():
    return sorted(KERNELS)


def build(name, n=None, seed=0, **kw) -> KernelInstance:
    if name not in KERNELS:
        raise KeyError(name)
    builder, _, default_n = KERNELS[name]
    return builder(n=default_n if n is None else n, seed=seed, **kw)
