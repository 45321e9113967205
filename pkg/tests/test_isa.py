"""Instruction decode and integer/FP execution semantics."""

import random

import pytest

from streamsim import errors
from streamsim.fp import bits_to_f64, f32_pair_to_bits, bits_to_f32_pair, \
    f64_to_bits, fma64
from streamsim.isa import (MASK32, CoreState, Domain, XREGS, alu_result,
                           branch_taken, decode, fp_compute, sext32)


def st_with(**regs):
    st = CoreState()
    for name, val in regs.items():
        st.set_x(XREGS[name], val)
    return st


def test_decode_fields():
    i = decode("addi t0, t1, -3")
    assert (i.mnemonic, i.rd, i.rs1, i.imm) == ("addi", 5, 6, -3)
    assert i.domain == Domain.INT
    f = decode("fmadd.d ft3, ft0, ft1, ft3")
    assert (f.rd, f.rs1, f.rs2, f.rs3) == (3, 0, 1, 3)
    assert f.domain == Domain.FP
    fr = decode("frep t3, 4")
    assert (fr.rs1, fr.n_instr, fr.domain) == (28, 4, Domain.CUSTOM)
    c = decode("ssr_cfg_write 1, stride0, 264")
    assert (c.slot, c.field, c.rs1, c.imm) == (1, "stride0", None, 264)
    c2 = decode("ssr_cfg_write 2, base, t0")
    assert (c2.slot, c2.field, c2.rs1) == (2, "base", 5)


def test_decode_pseudos():
    li = decode("li a0, 0x80000000")
    assert (li.mnemonic, li.rs1, li.imm) == ("addi", 0, 0x80000000)
    mv = decode("mv t0, t1")
    assert (mv.mnemonic, mv.rs1, mv.imm) == ("addi", 6, 0)
    assert decode("nop").mnemonic == "addi"
    j = decode("j 64")
    assert (j.mnemonic, j.rd, j.imm) == ("jal", 0, 64)


def test_decode_rejects():
    for text in ["frobnicate t0", "addi t0, t1", "addi t0, t1, t2, t3",
                 "frep t0, 0", "frep t0, 17", "li t0, 0x1ffffffff",
                 "ssr_cfg_write 1, nosuchfield, 0", "fld ft0, q0(t0)"]:
        with pytest.raises(errors.SimError):
            decode(text)


def test_alu_frozen():
    st = st_with(t1=7, t2=0xFFFFFFFF, t3=0x80000000)
    cases = {
        "addi t0, t1, -3": 4,
        "add t0, t1, t2": 6,             # 7 + (-1) wraps
        "sub t0, t1, t2": 8,
        "slli t0, t1, 4": 112,
        "lui t0, 0x12345": 0x12345000,
    }
    for text, want in cases.items():
        assert alu_result(st, decode(text)) == want, text


def test_alu_wraps_to_32_bits():
    rng = random.Random(11)
    st = CoreState()
    for _ in range(200):
        a, b = rng.getrandbits(32), rng.getrandbits(32)
        st.set_x(6, a)
        st.set_x(7, b)
        got = alu_result(st, decode("add t0, t1, t2"))
        assert got == (a + b) & MASK32


def test_x0_stays_zero():
    st = CoreState()
    st.set_x(0, 1234)
    assert st.x[0] == 0


def test_branches():
    st = st_with(t1=5, t2=0xFFFFFFFF)
    assert branch_taken(st, decode("bltu t1, t2, 0"))        # 5 < 2^32-1
    assert not branch_taken(st, decode("blt t1, t2, 0"))     # 5 > -1 signed
    assert branch_taken(st, decode("bne t1, t2, 0"))
    assert branch_taken(st, decode("beq t1, t1, 0"))
    assert not branch_taken(st, decode("beq t1, t2, 0"))
    assert not branch_taken(st, decode("bltu t2, t1, 0"))


def test_sext32():
    assert sext32(0x7FFFFFFF) == 0x7FFFFFFF
    assert sext32(0x80000000) == -0x80000000
    assert sext32(0xFFFFFFFF) == -1


def test_fp_compute_double():
    i = decode("fmadd.d ft3, ft0, ft1, ft2")
    a, b, c = f64_to_bits(2.5), f64_to_bits(4.0), f64_to_bits(1.0)
    assert bits_to_f64(fp_compute(i, a, b, c)) == 11.0
    s = decode("fmsub.d ft3, ft0, ft1, ft2")
    assert bits_to_f64(fp_compute(s, a, b, c)) == 9.0
    add = decode("fadd.d ft3, ft0, ft1")
    assert bits_to_f64(fp_compute(add, a, b)) == 6.5
    mul = decode("fmul.d ft3, ft0, ft1")
    assert bits_to_f64(fp_compute(mul, a, b)) == 10.0


def test_fp_compute_single_lanes():
    i = decode("fmadd.s ft3, ft0, ft1, ft2")
    a = f32_pair_to_bits(2.0, 3.0)
    b = f32_pair_to_bits(10.0, 100.0)
    c = f32_pair_to_bits(1.0, -1.0)
    lo, hi = bits_to_f32_pair(fp_compute(i, a, b, c))
    assert (lo, hi) == (21.0, 299.0)


def test_fp_compute_matches_fma64():
    rng = random.Random(5)
    i = decode("fmadd.d ft3, ft0, ft1, ft2")
    for _ in range(200):
        a, b, c = (rng.uniform(-1, 1) for _ in range(3))
        got = fp_compute(i, f64_to_bits(a), f64_to_bits(b), f64_to_bits(c))
        assert bits_to_f64(got) == fma64(a, b, c)
