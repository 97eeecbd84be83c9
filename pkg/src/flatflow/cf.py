"""Continued fractions and rotation combinatorics, in exact integer arithmetic.

Rotation targets are carried as exact rationals (deep convergents of the
intended irrational).  All closest-return and gap-counting questions are
answered by residue scans mod the target's denominator, so the answers are
exact as long as the requested horizon N stays well below the denominator;
the guards below enforce that.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import gmpy2
from gmpy2 import mpfr

from ._precision import PrecisionExhausted, context, to_fraction

SOURCES = ("exact_rational", "real_approximation", "prescribed")


@dataclass(frozen=True)
class ContinuedFraction:
    partial_quotients: tuple[int, ...]
    source: str = "prescribed"

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if len(self.partial_quotients) == 0:
            raise ValueError("empty continued fraction")
        for a in self.partial_quotients:
            if not isinstance(a, int) or a < 1:
                raise ValueError(f"partial quotients must be integers >= 1, got {a!r}")
        object.__setattr__(self, "partial_quotients", tuple(self.partial_quotients))

    @property
    def depth(self) -> int:
        return len(self.partial_quotients)


@dataclass(frozen=True)
class ConvergentTable:
    """Rows (n, p_n, q_n) for n = 0..depth, built by the standard recurrence."""

    rows: tuple[tuple[int, int, int], ...]

    def p(self, n: int) -> int:
        return self.rows[n][1]

    def q(self, n: int) -> int:
        return self.rows[n][2]

    @property
    def depth(self) -> int:
        return len(self.rows) - 1

    def fraction(self, n: int) -> Fraction:
        return Fraction(self.p(n), self.q(n))

    def denominators(self) -> list[int]:
        return [r[2] for r in self.rows]


def evaluate(cf: ContinuedFraction) -> Fraction:
    """Exact value of the (finite) continued fraction, in (0, 1]."""
    value = Fraction(0)
    for a in reversed(cf.partial_quotients):
        value = Fraction(1, a + value)
    return value


def expand(x, depth: int, precision_bits: int = 128) -> ContinuedFraction:
    """Partial quotients a_1..a_depth of x in (0, 1).

    Exact inputs (Fraction, int ratio strings, floats taken at their binary
    value, mpfr) run Euclid's algorithm exactly and terminate early when the
    expansion ends.  A callable input is treated as a real number provider
    bits -> mpfr; its expansion is recomputed at doubled precision and only
    the agreeing quotient prefix is accepted (quotients are discontinuous in
    the input, so agreement is the stability certificate).
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if callable(x):
        quots = _expand_real(x, depth, precision_bits)
        return ContinuedFraction(tuple(quots), source="real_approximation")
    value = to_fraction(x)
    if not 0 < value < 1:
        raise ValueError("expand requires x strictly inside (0, 1)")
    quots = []
    num, den = value.numerator, value.denominator
    # Euclid on (den, num): a_i = floor(den/num)
    while num != 0 and len(quots) < depth:
        a, rem = divmod(den, num)
        # terminating expansions end ...a_d with a_d >= 2 canonically; divmod
        # produces that form directly except when the remainder hits zero
        quots.append(a)
        den, num = num, rem
    return ContinuedFraction(tuple(quots), source="exact_rational")


def _expand_real(provider: Callable[[int], mpfr], depth: int, bits: int) -> list[int]:
    lo = _quotients_at(provider, depth, bits)
    hi = _quotients_at(provider, depth, 2 * bits)
    agree = []
    for a, b in zip(lo, hi):
        if a != b:
            break
        agree.append(a)
    if len(agree) < depth:
        raise PrecisionExhausted(
            f"only {len(agree)} of {depth} quotients stable at {bits} bits"
        )
    return agree[:depth]


def _quotients_at(provider, depth, bits) -> list[int]:
    with context(bits):
        x = mpfr(provider(bits))
        if not 0 < x < 1:
            raise ValueError("provider must return a value in (0, 1)")
        quots = []
        for _ in range(depth):
            if x <= 0:
                break
            inv = 1 / x
            a = int(gmpy2.floor(inv))
            if a < 1:
                break
            quots.append(a)
            x = inv - a
        return quots


def convergents(cf: ContinuedFraction) -> ConvergentTable:
    rows = [(0, 0, 1)]
    p_prev2, q_prev2 = 1, 0  # virtual index -1
    p_prev, q_prev = 0, 1
    for n, a in enumerate(cf.partial_quotients, start=1):
        p = a * p_prev + p_prev2
        q = a * q_prev + q_prev2
        rows.append((n, p, q))
        p_prev2, q_prev2 = p_prev, q_prev
        p_prev, q_prev = p, q
    return ConvergentTable(tuple(rows))


@dataclass(frozen=True)
class RotationTarget:
    """An irrational rotation number, proxied by a deep convergent.

    value is the exact rational proxy; combinatorial queries against it are
    valid for horizons N small relative to its denominator (guarded below).
    """

    value: Fraction
    cf: ContinuedFraction
    bounded_bound: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.value < 1:
            raise ValueError("rotation target must lie in [0, 1)")
        if self.bounded_bound is not None:
            if any(a > self.bounded_bound for a in self.cf.partial_quotients):
                raise ValueError("partial quotient violates the bounded-type bound")
        table = convergents(self.cf)
        # the proxy must sit strictly between consecutive convergents up to
        # the second-to-last pair (it coincides with the last convergent)
        for n in range(table.depth - 1):
            lo, hi = sorted((table.fraction(n), table.fraction(n + 1)))
            if not lo < self.value < hi:
                raise ValueError(f"value not between convergents {n} and {n+1}")


def target_from_quotients(
    quotients: Sequence[int],
    bounded_bound: Optional[int] = None,
    source: str = "prescribed",
) -> RotationTarget:
    cf = ContinuedFraction(tuple(int(a) for a in quotients), source=source)
    return RotationTarget(value=evaluate(cf), cf=cf, bounded_bound=bounded_bound)


def target_from_real(x, depth: int, precision_bits: int = 128) -> RotationTarget:
    cf = expand(x, depth, precision_bits)
    return RotationTarget(value=evaluate(cf), cf=cf)


def _require_horizon(rho: RotationTarget, needed: int, what: str):
    Q = rho.value.denominator
    if needed >= Q:
        raise PrecisionExhausted(
            f"{what}: horizon {needed} too deep for target denominator {Q}; "
            "deepen the continued fraction"
        )


def _require_margin(rho: RotationTarget, needed: int, what: str):
    # order-sensitive queries stay faithful to the ideal irrational only while
    # the horizon is small against the SECOND largest denominator: the proxy's
    # distance to the ideal is < 1/(q_d q_{d-1}) and residues are 1/q_d apart
    _require_horizon(rho, needed, what)
    table = convergents(rho.cf)
    if table.depth >= 1 and needed >= table.q(table.depth - 1):
        raise PrecisionExhausted(
            f"{what}: horizon {needed} too deep for convergent depth; "
            "deepen the continued fraction"
        )


def closest_returns(rho: RotationTarget, N: int) -> list[int]:
    """All q <= N where the circle distance ||q rho|| hits a new minimum.

    For an irrational these are exactly the convergent denominators; working
    with the rational proxy P/Q is faithful for N < Q (records of the proxy
    and of the ideal target coincide in that range).
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    _require_horizon(rho, N, "closest_returns")
    P, Q = rho.value.numerator, rho.value.denominator
    records = []
    best = None
    r = 0
    for i in range(1, N + 1):
        r = (r + P) % Q
        d = r if 2 * r <= Q else Q - r
        if best is None or d < best:
            best = d
            records.append(i)
    return records


def count_in_gap(rho: RotationTarget, l: int, N: int) -> tuple[int, bool]:
    """Count backward rotation-orbit points in the gap next to 0 at scale q_l.

    Counts i in 1..N with {-i rho} strictly inside the shorter arc between
    {q_l rho} and 0, and reports the flag q_{l+1} * count <= N.  Endpoints are
    exclusive; an exact endpoint hit means the rational proxy is too shallow
    for this N and raises PrecisionExhausted.
    """
    table = convergents(rho.cf)
    if l + 1 > table.depth:
        raise ValueError(f"need q_{l+1}; continued fraction too shallow")
    ql, ql1 = table.q(l), table.q(l + 1)
    if ql > N:
        raise ValueError("precondition q_l <= N violated")
    _require_margin(rho, 2 * N, "count_in_gap")
    P, Q = rho.value.numerator, rho.value.denominator
    r_ql = (ql * P) % Q
    Pb = (-P) % Q  # backward step
    count = 0
    r = 0
    for i in range(1, N + 1):
        r = (r + Pb) % Q
        if r == r_ql or r == 0:
            raise PrecisionExhausted("orbit point collides with a gap endpoint")
        if 2 * r_ql <= Q:
            inside = 0 < r < r_ql
        else:
            inside = r_ql < r < Q
        if inside:
            count += 1
    return count, ql1 * count <= N


def orbit_order(rho: RotationTarget, N: int, direction: int = 1) -> tuple[int, ...]:
    """Indices 0..N sorted by circle position of {direction * i * rho}."""
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    _require_margin(rho, 2 * N, "orbit_order")
    P, Q = rho.value.numerator, rho.value.denominator
    step = (direction * P) % Q
    residues = []
    r = 0
    for i in range(N + 1):
        residues.append((r, i))
        r = (r + step) % Q
    residues.sort()
    return tuple(i for _, i in residues)
