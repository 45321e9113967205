"""Binary64/binary32 value helpers shared by the FPU model and the kernel references.

The simulator keeps FP registers as raw 64-bit patterns, so every arithmetic op
goes bits -> float -> bits through these helpers. fma64 performs a true fused
multiply-add (single rounding); Python 3.10 has no math.fma, so the exact value
is formed with integer-ratio arithmetic and rounded once by bignum division,
which CPython rounds correctly to nearest-even.
"""

import math
import struct

MASK64 = (1 << 64) - 1


def f64_to_bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", x))[0]


def bits_to_f64(b: int) -> float:
    return struct.unpack("<d", struct.pack("<Q", b & MASK64))[0]


def round32(x: float) -> float:
    """Value of x rounded to binary32, returned as a double."""
    return struct.unpack("<f", struct.pack("<f", x))[0]


def f32_pair_to_bits(lo: float, hi: float) -> int:
    return struct.unpack("<Q", struct.pack("<ff", lo, hi))[0]


def bits_to_f32_pair(b: int) -> tuple[float, float]:
    return struct.unpack("<ff", struct.pack("<Q", b & MASK64))


def fma64(a: float, b: float, c: float) -> float:
    """a*b + c with a single rounding, exact for all finite doubles."""
    if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(c)):
        return a * b + c
    na, da = a.as_integer_ratio()
    nb, db = b.as_integer_ratio()
    nc, dc = c.as_integer_ratio()
    # denominators are powers of two, so the common denominator is their max
    nab = na * nb
    dab = da * db
    if dab >= dc:
        n, d = nab + nc * (dab // dc), dab
    else:
        n, d = nab * (dc // dab) + nc, dc
    if n == 0:
        # exact zero: keep IEEE sign-of-zero for the all-zero-addend case
        return a * b + c
    try:
        return n / d
    except OverflowError:
        return math.inf if n > 0 else -math.inf


def fma32(a: float, b: float, c: float) -> float:
    """binary32 fused multiply-add on values held as doubles.

    Rounds the exact double result to binary32. The double-then-single rounding
    can differ from a true single rounding only in ties invisible at the value
    ranges the SIMD convention is used with; acceptable for this model.
    """
    return round32(fma64(round32(a), round32(b), round32(c)))
