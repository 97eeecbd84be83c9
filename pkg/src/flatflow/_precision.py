"""Shared high-precision plumbing: contexts, guard bands, exact serialization.

Everything numeric in this package runs on gmpy2.mpfr under an explicit
precision context.  Decisions (comparisons, branch picks, interval memberships)
are only trusted when the quantities involved clear a guard band of
2^(-bits + GUARD_BITS); anything closer raises PrecisionExhausted so callers
can rerun the experiment at doubled precision.
"""
from __future__ import annotations

from fractions import Fraction

import gmpy2
from gmpy2 import mpfr

GUARD_BITS = 32

# decimal digits carried by one bit of mantissa
_LOG10_2 = 0.30102999566398119521


class PrecisionExhausted(ArithmeticError):
    """A tracked quantity fell inside the precision guard band.

    The remedy is to rerun the computation at higher precision_bits; see
    run_ladder.
    """

    def __init__(self, message: str, quantity=None):
        super().__init__(message)
        self.quantity = quantity


def context(bits: int):
    """Context manager setting the working mpfr precision."""
    if bits < 2:
        raise ValueError("precision_bits must be >= 2")
    return gmpy2.context(precision=bits)


def guard_eps(bits: int) -> mpfr:
    # must be evaluated inside a context wide enough to represent it; any is
    return mpfr(2) ** (GUARD_BITS - bits)


def run_ladder(task, start_bits: int, max_bits: int = 4096):
    """Run task(bits), doubling bits on PrecisionExhausted up to max_bits."""
    bits = start_bits
    while True:
        try:
            return task(bits)
        except PrecisionExhausted:
            if bits >= max_bits:
                raise
            bits = min(2 * bits, max_bits)


def to_fraction(x) -> Fraction:
    """Exact rational value of x (mpfr values are dyadic, so this is lossless)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    q = gmpy2.mpq(x)
    return Fraction(int(q.numerator), int(q.denominator))


def mpfr_from(x) -> mpfr:
    """Convert to mpfr at the current context precision."""
    if isinstance(x, Fraction):
        return mpfr(gmpy2.mpq(x.numerator, x.denominator))
    return mpfr(x)


def sig_digits(bits: int) -> int:
    """Decimal significant digits matching bits of mantissa, capped at 40."""
    return min(40, int(bits * _LOG10_2) + 1)


def sci(x, sig: int = 40) -> str:
    """Normalized scientific-notation string with sig significant digits.

    Locale-free and deterministic; used for all CSV/JSON numeric output.
    """
    x = mpfr(x)
    if gmpy2.is_nan(x):
        return "nan"
    if gmpy2.is_infinite(x):
        return "inf" if x > 0 else "-inf"
    mant, exp, _ = x.digits(10, sig)
    neg = mant.startswith("-")
    digits = mant[1:] if neg else mant
    if digits.strip("0") == "":
        return "0.0e+00"
    head, tail = digits[0], digits[1:].rstrip("0") or "0"
    sign = "-" if neg else ""
    return f"{sign}{head}.{tail}e{exp - 1:+03d}"


def hex_exact(x: mpfr) -> str:
    """Lossless hex-float serialization of an mpfr value."""
    return f"{mpfr(x):a}"


def parse_hex(s: str, bits: int) -> mpfr:
    return mpfr(s, bits, 16)


def wrap01(x: mpfr) -> mpfr:
    """Reduce mod 1 into [0, 1)."""
    return x - gmpy2.floor(x)


def wrap_chart(x: mpfr) -> mpfr:
    """Reduce mod 1 into the chart [-1/2, 1/2)."""
    return x - gmpy2.floor(x + mpfr(1) / 2)


def circle_dist(x, y) -> mpfr:
    """Distance on R/Z (length of the shorter arc)."""
    d = wrap01(mpfr(x) - mpfr(y))
    return min(d, 1 - d)
