"""Flat-interval circle maps with a prescribed one-sided power law.

The family: fix a flat arc U = (a, b) centered at 0 in the chart [-1/2, 1/2)
and an exponent ell > 0.  On the complementary arc [b, a+1] the lift rises
from c to c+1 like the normalized incomplete integral of the weight
w(s) = (s-b)^(ell-1) * (a+1-s)^(ell-1), and it is constant equal to c on U.
That weight makes both one-sided branches at the flat boundary behave like
x^ell, which is the only local structure the dynamics cares about.

Evaluation does not integrate w numerically each call: the integral is the
symmetric incomplete beta function, computed by a split power series (endpoint
series below 1/4, a central series around 1/2, symmetry above 3/4) whose term
ratio never exceeds 1/4, so roughly bits/2 terms always suffice.  The inverse
branch g is a safeguarded Newton solve on the same series.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import gmpy2
from gmpy2 import mpfr

from . import cf as cfmod
from ._precision import (
    PrecisionExhausted,
    circle_dist,
    context,
    guard_eps,
    hex_exact,
    mpfr_from,
    run_ladder,
    sci,
    sig_digits,
    to_fraction,
    wrap01,
    wrap_chart,
)

_LN2 = math.log(2.0)


class InvalidTargetError(ValueError):
    """Tuning target is rational or too shallow for the requested tolerance."""


class PlateauStallError(PrecisionExhausted):
    """Bisection in the offset cannot escape a mode-locking plateau.

    Subclasses PrecisionExhausted because the documented remedy is the same:
    raise precision_bits and retry.
    """


class DiscontinuityError(ArithmeticError):
    """The inverse branch was evaluated exactly at the critical value."""

    def __init__(self, left, right):
        super().__init__("g is discontinuous here; one-sided limits attached")
        self.left = left
        self.right = right


class _SymBeta:
    """Regularized incomplete beta I_u(ell, ell) specialized to one exponent.

    Built once per Lift inside the working context; value01/inv01 assume the
    caller holds that context.
    """

    def __init__(self, ell: mpfr, bits: int):
        self.ell = ell
        self.bits = bits
        # worst-case series ratio is 1/4, i.e. 2 bits per term
        self.max_terms = (bits + 16) // 2 + 6
        end = []
        mid = []
        d = mpfr(1)
        four_k = mpfr(1)
        for k in range(self.max_terms + 1):
            end.append(d / (ell + k))
            mid.append(d * four_k / (2 * k + 1))
            d = d * (k + 1 - ell) / (k + 1)
            four_k *= 4
        self.end_coeffs = end
        self.mid_coeffs = mid
        self.quarter_pow = mpfr(4) ** (1 - ell)  # prefactor (1/4)^(ell-1)
        self.B = gmpy2.gamma(ell) ** 2 / gmpy2.gamma(2 * ell)
        self.invB = 1 / self.B
        self.halfB = self.B / 2
        self.I_quarter = self._end(mpfr(1) / 4) * self.invB

    def _nterms(self, ratio_var) -> int:
        # series terms scale like ratio_var^k; bound -log2 via the exponent
        if ratio_var == 0:
            return 2
        e = gmpy2.get_exp(ratio_var)  # ratio_var = m * 2^e, m in [1/2, 1)
        return min(self.max_terms, (self.bits + 16) // max(1, -e) + 5)

    @staticmethod
    def _horner(coeffs, n, x):
        acc = coeffs[n]
        k = n - 1
        while k >= 0:
            acc = acc * x + coeffs[k]
            k -= 1
        return acc

    def _end(self, u):
        """Unregularized B(u; ell, ell) for u in (0, 1/4]."""
        n = self._nterms(u)
        return self._horner(self.end_coeffs, n, u) * u**self.ell

    def _mid(self, v):
        """B(1/2 + v) - B(1/2), odd in v, for |v| <= 1/4."""
        w = v * v
        n = self._nterms(4 * w)
        return self.quarter_pow * v * self._horner(self.mid_coeffs, n, w)

    def value01(self, u):
        """I_u(ell, ell) for u in [0, 1]."""
        if u <= 0:
            return mpfr(0)
        if u >= 1:
            return mpfr(1)
        if 4 * u < 1:
            return self._end(u) * self.invB
        if 4 * (1 - u) < 1:
            return 1 - self._end(1 - u) * self.invB
        return (self.halfB + self._mid(u - mpfr(1) / 2)) * self.invB

    def _weight(self, u):
        # (u(1-u))^(ell-1), the unnormalized density
        return (u * (1 - u)) ** (self.ell - 1)

    def inv01(self, y):
        """Solve I_u = y for u, y strictly inside (0, 1)."""
        if not 0 < y < 1:
            raise ValueError("inv01 needs y strictly inside (0, 1)")
        if y < self.I_quarter:
            return self._inv_end(y)
        if y > 1 - self.I_quarter:
            return 1 - self._inv_end(1 - y)
        return self._inv_mid(y)

    def _inv_end(self, y):
        # Newton in t = log u on log(B(e^t)) = log(y B); the log form keeps
        # the iteration well conditioned even when u underflows doubles
        Y = y * self.B
        logY = gmpy2.log(Y)
        ell = self.ell
        t = (logY + gmpy2.log(ell)) / ell
        t_cap = gmpy2.log(mpfr(26) / 100)
        if t > t_cap:
            t = t_cap
        tol = mpfr(2) ** (-self.bits + 2)
        for _ in range(90):
            u = gmpy2.exp(t)
            f = self._end(u)
            resid = gmpy2.log(f) - logY
            # d log f / d t = u w(u) / f
            deriv = gmpy2.exp(ell * t) * (1 - u) ** (ell - 1) / f
            dt = resid / deriv
            t = t - dt
            if t > t_cap:
                t = t_cap
            if abs(dt) < tol * (1 + abs(t)):
                return gmpy2.exp(t)
        raise PrecisionExhausted("inverse beta endpoint Newton failed to settle")

    def _inv_mid(self, y):
        Y = y * self.B - self.halfB
        v = Y / self.quarter_pow  # linear seed
        cap = mpfr(26) / 100
        if v > cap:
            v = cap
        if v < -cap:
            v = -cap
        tol = mpfr(2) ** (-self.bits + 2)
        quarter = mpfr(1) / 4
        for _ in range(90):
            f = self._mid(v) - Y
            dv = f / ((quarter - v * v) ** (self.ell - 1))
            v = v - dv
            if v > cap:
                v = cap
            if v < -cap:
                v = -cap
            if abs(dv) < tol:
                return mpfr(1) / 2 + v
        raise PrecisionExhausted("inverse beta central Newton failed to settle")


@dataclass(frozen=True)
class FlatMapParams:
    """Exact parameter set; everything needed to rebuild the map bit-for-bit.

    ell = lambda1 / (-lambda2) is the one-sided critical exponent; (a, b) is
    the flat arc in the chart [-1/2, 1/2); c is the critical value (the image
    of the flat arc and the discontinuity of the inverse branch).
    """

    ell: Fraction
    lambda1: Fraction
    lambda2: Fraction
    a: Fraction
    b: Fraction
    c: Fraction
    precision_bits: int

    def __post_init__(self):
        if self.ell <= 0:
            raise ValueError("ell must be positive")
        if self.lambda1 <= 0 or self.lambda2 >= 0:
            raise ValueError("need lambda1 > 0 > lambda2")
        if self.ell != self.lambda1 / (-self.lambda2):
            raise ValueError("ell must equal lambda1 / (-lambda2)")
        if not (Fraction(-1, 2) <= self.a < self.b <= Fraction(1, 2)):
            raise ValueError("flat arc must satisfy -1/2 <= a < b <= 1/2")
        if not 0 < self.b - self.a < 1:
            raise ValueError("flat arc must be a proper arc")
        # c is a real offset, not reduced mod 1: the lift's rotation number is
        # monotone in the raw offset, which is what tuning bisects on.  Only
        # c mod 1 matters for the circle dynamics.
        if abs(self.c) > 8:
            raise ValueError("offset c unreasonably large; reduce mod 1 first")
        if self.precision_bits < 64:
            raise ValueError("precision_bits must be >= 64")

    @property
    def flat_length(self) -> Fraction:
        return self.b - self.a


def params_to_json_dict(params: FlatMapParams) -> dict:
    with context(params.precision_bits):
        digs = sig_digits(params.precision_bits)
        disp = {
            name: sci(mpfr_from(getattr(params, name)), digs)
            for name in ("ell", "lambda1", "lambda2", "a", "b", "c")
        }
    disp["precision_bits"] = params.precision_bits
    disp["exact"] = {
        name: str(getattr(params, name))
        for name in ("ell", "lambda1", "lambda2", "a", "b", "c")
    }
    return disp


def params_from_json_dict(obj: dict) -> FlatMapParams:
    exact = obj.get("exact")
    if exact is None:
        raise ValueError("params JSON missing the 'exact' block")
    kwargs = {name: Fraction(exact[name]) for name in
              ("ell", "lambda1", "lambda2", "a", "b", "c")}
    return FlatMapParams(precision_bits=int(obj["precision_bits"]), **kwargs)


class Lift:
    """The lift F of the flat map; all evaluation happens at params.precision_bits."""

    def __init__(self, params: FlatMapParams):
        self.params = params
        self.precision_bits = params.precision_bits
        with context(self.precision_bits):
            self._ell = mpfr_from(params.ell)
            self._a = mpfr_from(params.a)
            self._b = mpfr_from(params.b)
            self._c = mpfr_from(params.c)
            self._L = self._a + 1 - self._b
            self._invL = 1 / self._L
            self._kernel = _SymBeta(self._ell, self.precision_bits)
            # normalization of the raw weight integral over [b, a+1]
            self.Z = self._L ** (2 * self._ell - 1) * self._kernel.B
            self._guard = guard_eps(self.precision_bits)
            self._half = mpfr(1) / 2

    def _ctx(self):
        return context(self.precision_bits)

    # -- evaluation ---------------------------------------------------------

    def eval(self, x):
        """Lift value F(x) for any real x."""
        with self._ctx():
            x = mpfr_from(x)
            k = gmpy2.floor(x - self._a)
            xt = x - k
            if xt <= self._b:
                return self._c + k
            u = (xt - self._b) * self._invL
            return self._c + self._kernel.value01(u) + k

    def eval_circle(self, y):
        """Circle map value in the chart [-1/2, 1/2)."""
        with self._ctx():
            return wrap_chart(self.eval(y))

    def _step(self, y):
        """One circle iteration from a chart point; returns (y_next, shift).

        shift is the integer peeled off when re-reducing to the chart, so lift
        displacements accumulate as (y_n - y_0 + sum of shifts).  Assumes the
        working context is held.
        """
        if self._a < y < self._b:
            w = self._c
        elif y >= self._b:
            w = self._c + self._kernel.value01((y - self._b) * self._invL)
        else:
            w = self._c + self._kernel.value01((y + 1 - self._b) * self._invL) - 1
        s = gmpy2.floor(w + self._half)
        return w - s, int(s)

    # -- inverse branch -----------------------------------------------------

    def g(self, z):
        """Inverse branch of f off the flat arc, as a chart point.

        Discontinuous at the critical value c: raises DiscontinuityError at an
        exact hit and PrecisionExhausted inside the guard band around it.
        """
        with self._ctx():
            z = mpfr_from(z)
            d = wrap01(z - self._c)
            if d == 0:
                raise DiscontinuityError(self.g_left(), self.g_right())
            if d < self._guard or 1 - d < self._guard:
                raise PrecisionExhausted("inverse branch within guard of the critical value")
            u = self._kernel.inv01(d)
            return wrap_chart(self._b + self._L * u)

    def g_left(self):
        """One-sided limit of g at the critical value from below."""
        with self._ctx():
            return mpfr_from(self.params.a)

    def g_right(self):
        """One-sided limit of g at the critical value from above."""
        with self._ctx():
            return mpfr_from(self.params.b)

    # -- orbits and rotation numbers ----------------------------------------

    def orbit_forward(self, n: int, z0=None) -> list:
        """Chart points [z0, f(z0), ..., f^n(z0)]; z0 defaults to the critical value."""
        with self._ctx():
            y = wrap_chart(mpfr_from(self.params.c if z0 is None else z0))
            points = [y]
            for _ in range(n):
                y, _s = self._step(y)
                points.append(y)
            return points

    def rotation_number(self, n_iter: int, x0=None):
        """Direct estimate (F^n(x0) - x0)/n with its a-priori error bound 1/n."""
        if n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        with self._ctx():
            y0 = wrap_chart(mpfr_from(self.params.b if x0 is None else x0))
            y = y0
            shifts = 0
            for _ in range(n_iter):
                y, s = self._step(y)
                shifts += s
            estimate = (y - y0 + shifts) / n_iter
            return estimate, mpfr(1) / n_iter

    def compare_with_rational(self, p: int, q: int, samples: int = 1024) -> int:
        """Sign of rho relative to p/q via the sign of F^q(x) - x - p on a grid.

        Returns +1 (rho > p/q), -1 (rho < p/q) or 0 (sign change: a periodic
        orbit exists, so rho = p/q).  Grid plus the flat endpoints; cost is
        samples * q evaluations, so meant for small q.
        """
        if q < 1:
            raise ValueError("q must be >= 1")
        with self._ctx():
            seen_pos = seen_neg = False
            xs = [mpfr(2 * j - samples) / (2 * samples) for j in range(samples)]
            xs.append(self._a)
            xs.append(self._b)
            for x in xs:
                y = wrap_chart(x)
                y0 = y
                shifts = 0
                for _ in range(q):
                    y, s = self._step(y)
                    shifts += s
                diff = (y - y0 + shifts) - p
                if diff > 0:
                    seen_pos = True
                elif diff < 0:
                    seen_neg = True
                else:
                    return 0
                if seen_pos and seen_neg:
                    return 0
            return 1 if seen_pos else -1

    def rotation_bracket(
        self,
        max_steps: int,
        x0=None,
        target: Optional[Fraction] = None,
        tol: Optional[Fraction] = None,
    ) -> "RotationBracket":
        """Certified rational bracket lo <= rho <= hi from one orbit.

        Every step k pins floor(k rho) exactly: the circular offset of f^k(x0)
        from x0 and the rotation offset {k rho} share their integer part
        because the order of orbit points matches the rotation's order.  The
        bracket (max_k p_k/k, min_k (p_k+1)/k) tightens quadratically at the
        closest-return steps.  Offsets inside the precision guard abort the
        run instead of risking a misclassified winding.

        With target set, returns early once the bracket decides the side of
        the target, or (with tol) once it fits inside [target-tol, target+tol].
        """
        if max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        t_num = t_den = None
        if target is not None:
            target = Fraction(target)
            t_num, t_den = target.numerator, target.denominator
        w_num = w_den = None
        if tol is not None:
            if target is None:
                raise ValueError("tol without target")
            window = Fraction(tol)
            w_num, w_den = window.numerator, window.denominator
        with self._ctx():
            y0 = wrap_chart(mpfr_from(self.params.b if x0 is None else x0))
            y = y0
            shifts = 0
            lo_num, lo_den = -2, 1
            hi_num, hi_den = 2, 1
            guard = self._guard
            for k in range(1, max_steps + 1):
                y, s = self._step(y)
                shifts += s
                delta = y - y0
                wrapped = delta < 0
                if wrapped:
                    delta = delta + 1
                if delta == 0:
                    exact = Fraction(shifts, k)
                    return RotationBracket(exact, exact, k, exact_hit=True)
                if delta < guard or 1 - delta < guard:
                    raise PrecisionExhausted(
                        "orbit offset within precision guard at step %d" % k
                    )
                p = shifts - 1 if wrapped else shifts
                improved = False
                if p * lo_den > lo_num * k:
                    lo_num, lo_den = p, k
                    improved = True
                if (p + 1) * hi_den < hi_num * k:
                    hi_num, hi_den = p + 1, k
                    improved = True
                if improved and t_num is not None:
                    if hi_num * t_den < t_num * hi_den:
                        break
                    if lo_num * t_den > t_num * lo_den:
                        break
                    if w_num is not None:
                        ok_lo = (lo_num * t_den - t_num * lo_den) * w_den >= -w_num * lo_den * t_den
                        ok_hi = (hi_num * t_den - t_num * hi_den) * w_den <= w_num * hi_den * t_den
                        if ok_lo and ok_hi:
                            break
            return RotationBracket(
                Fraction(lo_num, lo_den), Fraction(hi_num, hi_den), k, exact_hit=False
            )


@dataclass(frozen=True)
class RotationBracket:
    lo: Fraction
    hi: Fraction
    steps: int
    exact_hit: bool

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo


# -- construction and tuning ------------------------------------------------


def _make_params(ell, flat_length, c, precision_bits, lambda1=None, lambda2=None) -> FlatMapParams:
    ell_q = to_fraction(ell)
    fl = to_fraction(flat_length)
    if ell_q <= 0:
        raise ValueError("ell must be positive")
    if not 0 < fl < 1:
        raise ValueError("flat_length must be inside (0, 1)")
    if lambda1 is None and lambda2 is None:
        l1, l2 = ell_q, Fraction(-1)
    elif lambda1 is not None and lambda2 is not None:
        l1, l2 = to_fraction(lambda1), to_fraction(lambda2)
    else:
        raise ValueError("give both lambda1 and lambda2 or neither")
    return FlatMapParams(
        ell=ell_q,
        lambda1=l1,
        lambda2=l2,
        a=-fl / 2,
        b=fl / 2,
        c=to_fraction(c),
        precision_bits=int(precision_bits),
    )


def build_map(ell, flat_length, c, precision_bits: int = 128,
              lambda1=None, lambda2=None) -> Lift:
    """Build the lift for exponent ell, flat arc of given length centered at 0,
    and critical value c (any real; reduced to the chart)."""
    return Lift(_make_params(ell, flat_length, c, precision_bits, lambda1, lambda2))


def eval(lift: Lift, x):  # noqa: A001 - mirrors the published operation name
    return lift.eval(x)


def eval_inverse_g(lift: Lift, z):
    return lift.g(z)


def rotation_number(lift: Lift, n_iter: int, x0=None):
    return lift.rotation_number(n_iter, x0)


def compare_with_rational(lift: Lift, p: int, q: int, samples: int = 1024) -> int:
    return lift.compare_with_rational(p, q, samples)


def rotation_bracket(lift: Lift, max_steps: int, **kw) -> RotationBracket:
    return lift.rotation_bracket(max_steps, **kw)


def _dyadic(x: Fraction, bits: int) -> Fraction:
    scale = 1 << bits
    return Fraction(round(x * scale), scale)


def tune(
    ell,
    flat_length,
    target: cfmod.RotationTarget,
    tol,
    precision_bits: int = 128,
    max_bits: int = 4096,
    max_orbit_steps: int = 1_000_000,
) -> FlatMapParams:
    """Find the offset c whose map has rotation number within tol of target.

    Bisection in c (the rotation number is non-decreasing in the offset),
    with each candidate classified by its certified orbit bracket.  A result
    is accepted only when the whole bracket fits inside
    [target - tol, target + tol]; every convergent of the target whose gap to
    the target exceeds tol is then automatically pinned on the correct side.

    Raises InvalidTargetError for rational / too-shallow targets and
    PlateauStallError when bisection exhausts the offset resolution of the
    precision ladder.
    """
    if not isinstance(target, cfmod.RotationTarget):
        raise TypeError("target must be a RotationTarget")
    tol_f = to_fraction(tol)
    if tol_f <= 0:
        raise ValueError("tol must be positive")
    table = cfmod.convergents(target.cf)
    d = table.depth
    if d < 2 or Fraction(1, table.q(d) * table.q(d - 1)) >= tol_f / 8:
        raise InvalidTargetError(
            "target is rational or its continued fraction is too shallow for "
            f"tol={tol}; deepen the expansion"
        )

    def attempt(bits):
        return _tune_at(ell, flat_length, target.value, tol_f, bits, max_orbit_steps)

    return run_ladder(attempt, precision_bits, max_bits)


def _tune_at(ell, flat_length, T: Fraction, tol: Fraction, bits: int,
             max_orbit_steps: int) -> FlatMapParams:
    cache = {}

    def classify(c: Fraction):
        if c in cache:
            return cache[c]
        params = _make_params(ell, flat_length, c, bits)
        lift = Lift(params)
        br = lift.rotation_bracket(max_orbit_steps, target=T, tol=tol)
        if T - tol <= br.lo and br.hi <= T + tol:
            side = 0
        elif br.hi < T:
            side = -1
        elif br.lo > T:
            side = 1
        else:
            raise PrecisionExhausted(
                "rotation bracket undecided at the orbit-depth cap"
            )
        cache[c] = (side, params)
        return side, params

    # witness offsets on both sides of the target rotation number
    c0 = _dyadic(T, 24)
    side, params = classify(c0)
    if side == 0:
        return params
    c_lo = c_hi = None
    if side < 0:
        c_lo = c0
    else:
        c_hi = c0
    step = Fraction(1, 16)
    probe = c0
    for _ in range(16):
        if c_lo is not None and c_hi is not None:
            break
        probe = probe + step if c_hi is None else probe - step
        step *= 2
        side, params = classify(probe)
        if side == 0:
            return params
        if side < 0:
            c_lo = probe if c_lo is None or probe > c_lo else c_lo
        else:
            c_hi = probe if c_hi is None or probe < c_hi else c_hi
    if c_lo is None or c_hi is None:
        raise PlateauStallError("could not find offsets on both sides of the target")

    floor_width = Fraction(1, 1 << max(bits - 8, 16))
    while c_hi - c_lo > floor_width:
        mid = (c_lo + c_hi) / 2
        side, params = classify(mid)
        if side == 0:
            return params
        if side < 0:
            c_lo = mid
        else:
            c_hi = mid
    raise PlateauStallError(
        f"bisection pinned a mode-locking plateau at {bits} bits; raise precision"
    )


# -- preimage geometry ------------------------------------------------------


@dataclass(frozen=True)
class PreimageGeometry:
    """Backward interval chain of the critical value plus forward distances.

    intervals[i-1] holds (i, left, right): the i-th preimage interval, whose
    points need i iterations to reach the critical value; intervals[0] is the
    flat arc itself.  gaps rows (n, q_n, gap, bracket, alpha, theta) measure,
    at each closest-return denominator q_n, the distance from the q_n-th
    preimage interval to the critical value (gap), the same plus the interval
    length (bracket), their ratio alpha = gap/bracket and theta = -log alpha.
    forward rows (n, q_n, point, dist) track the forward critical orbit at the
    same return times.
    """

    params: FlatMapParams
    qtable: cfmod.ConvergentTable
    n_max: int
    intervals: tuple
    gaps: tuple
    forward: tuple
    precision_bits: int

    def alpha(self, n: int):
        return self.gaps[n][4]

    def theta(self, n: int):
        return self.gaps[n][5]

    def forward_dist(self, n: int):
        return self.forward[n][3]


def preimage_geometry(lift: Lift, qtable: cfmod.ConvergentTable, n_max: int) -> PreimageGeometry:
    """Backward intervals up to the q_{n_max}-th preimage and the matching
    forward critical-orbit distances.

    Raises PrecisionExhausted when any tracked gap or length falls inside the
    guard band; rerun with a rebuilt lift at doubled precision (the params are
    exact, so the map is the same).
    """
    if n_max < 0 or n_max > qtable.depth - 1:
        raise ValueError("n_max must fit inside the convergent table")
    bits = lift.precision_bits
    with context(bits):
        guard = guard_eps(bits)
        c = mpfr_from(lift.params.c)
        i_max = qtable.q(n_max)
        left = mpfr_from(lift.params.a)
        right = mpfr_from(lift.params.b)
        intervals = [(1, left, right)]
        for i in range(2, i_max + 1):
            left = lift.g(left)
            right = lift.g(right)
            intervals.append((i, left, right))
        gaps = []
        for n in range(n_max + 1):
            qn = qtable.q(n)
            _, l, r = intervals[qn - 1]
            length = wrap01(r - l)
            gap = min(circle_dist(l, c), circle_dist(r, c))
            if gap < guard or length < guard:
                raise PrecisionExhausted(
                    f"gap at closest return n={n} fell inside the guard band"
                )
            bracket = gap + length
            alpha = gap / bracket
            theta = gmpy2.log(bracket) - gmpy2.log(gap)
            gaps.append((n, qn, gap, bracket, alpha, theta))
        wanted = {}
        for n in range(n_max + 1):
            wanted.setdefault(qtable.q(n), []).append(n)  # q_0 = q_1 is common
        forward = []
        y = wrap_chart(c)
        for j in range(1, i_max + 1):
            y, _s = lift._step(y)
            for n in wanted.get(j, ()):
                dist = circle_dist(y, c)
                if dist < guard:
                    raise PrecisionExhausted(
                        f"forward critical orbit within guard of c at q_{n}"
                    )
                forward.append((n, j, y, dist))
        forward.sort()
        return PreimageGeometry(
            params=lift.params,
            qtable=qtable,
            n_max=n_max,
            intervals=tuple(intervals),
            gaps=tuple(gaps),
            forward=tuple(forward),
            precision_bits=bits,
        )


def geometry_csv_rows(geom: PreimageGeometry) -> list[str]:
    """CSV lines (header first) with one row per closest-return index."""
    digs = sig_digits(geom.precision_bits)
    rows = ["n,qn,gap,bracket,alpha_n,fwd_dist"]
    with context(geom.precision_bits):
        for (n, qn, gap, bracket, alpha, _theta), (fn, _fq, _pt, dist) in zip(
            geom.gaps, geom.forward
        ):
            assert fn == n
            rows.append(
                f"{n},{qn},{sci(gap, digs)},{sci(bracket, digs)},"
                f"{sci(alpha, digs)},{sci(dist, digs)}"
            )
    return rows


# -- orbit order vs rotation order ------------------------------------------


@dataclass(frozen=True)
class OrbitCombinatorics:
    N: int
    map_order: tuple
    rotation_order: tuple
    equal: bool


def _cyclic_anchor(order, anchor=0):
    pos = order.index(anchor)
    return tuple(order[pos:]) + tuple(order[:pos])


def check_orbit_order(lift: Lift, target: cfmod.RotationTarget, N: int) -> OrbitCombinatorics:
    """Compare the circular order of {f^i(c)} with {i*rho} for i = 0..N.

    Equality is the order-isomorphism (semi-conjugacy) invariant; it must hold
    exactly for a correctly tuned map.
    """
    bits = lift.precision_bits
    with context(bits):
        guard = guard_eps(bits)
        pts = lift.orbit_forward(N)
        keyed = sorted((p, i) for i, p in enumerate(pts))
        for (p1, _i1), (p2, _i2) in zip(keyed, keyed[1:]):
            if p2 - p1 < guard:
                raise PrecisionExhausted(
                    "two orbit points within the precision guard; cannot order"
                )
        map_order = _cyclic_anchor(tuple(i for _p, i in keyed))
    rot_order = _cyclic_anchor(cfmod.orbit_order(target, N, direction=1))
    return OrbitCombinatorics(
        N=N,
        map_order=map_order,
        rotation_order=rot_order,
        equal=map_order == rot_order,
    )
