"""Recursive bounds on the gap-ratio sequence theta_n = -log alpha_n.

The driving inequality bounds alpha_n from below by a product of powers of
the two previous alphas, with exponents depending on the partial quotients
and the critical exponent ell.  In log form that is a two-term linear
recurrence; saturating it gives a synthetic envelope sequence, and the
geometric decay theta_n <= K C^n q_{n+1} follows by induction once
C = sup_a ((1 - ell^-a) / ((ell-1) a))^(1/n0) is below one.

The induction's general step needs ell^-a <= C^2, which is the inequality
chain with n0 >= 2; n0 defaults to 2 throughout (the smallest value for
which the argument closes).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import gmpy2
from gmpy2 import mpfr

from . import cf as cfmod
from ._precision import context, mpfr_from, sci, sig_digits

DEFAULT_BITS = 192

THETA_ORIGINS = ("synthetic_recurrence", "measured_from_map")


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class ThetaSequence:
    theta: tuple
    origin: str

    def __post_init__(self):
        if self.origin not in THETA_ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")
        for t in self.theta:
            if not t >= 0:
                raise ValueError("theta values must be >= 0")

    def __len__(self):
        return len(self.theta)


@dataclass(frozen=True)
class BoundParams:
    K: mpfr
    C: mpfr
    n0: int
    ell: mpfr

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError("K must be positive")
        if not 0 < self.C < 1:
            raise ValueError("C must be inside (0, 1)")
        if self.n0 < 1:
            raise ValueError("n0 must be >= 1")
        if not self.ell > 1:
            raise ValueError("ell must exceed 1")

    @classmethod
    def from_theta(cls, theta: ThetaSequence, ell, quotients, n0: int = 2,
                   precision_bits: int = DEFAULT_BITS) -> "BoundParams":
        if n0 < 2:
            raise ValueError("the induction closes only for n0 >= 2")
        if len(theta) < n0:
            raise InsufficientDataError("theta sequence shorter than n0")
        with context(precision_bits):
            C = c_of_ell(ell, quotients, n0, precision_bits)
            K = max(mpfr(theta.theta[n0 - 2]), mpfr(theta.theta[n0 - 1]))
            return cls(K=K, C=C, n0=n0, ell=mpfr_from(ell))


def _base_quantity(ell: mpfr, a: int) -> mpfr:
    # (1 - ell^-a) / ((ell - 1) a); decreasing in a, tends to 1 as ell -> 1+
    return (1 - ell ** (-a)) / ((ell - 1) * a)


def c_of_ell(ell, quotients: Sequence[int], n0: int,
             precision_bits: int = DEFAULT_BITS) -> mpfr:
    """sup over the supplied quotients of the base quantity, to the 1/n0.

    The base quantity is decreasing in a, so over all positive integers the
    supremum sits at a = 1; pass quotients=[1] for that analytic worst case.
    """
    if not quotients:
        raise ValueError("quotients must be nonempty")
    if any(a < 1 for a in quotients):
        raise ValueError("quotients must be >= 1")
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    with context(precision_bits):
        ell = mpfr_from(ell)
        if not ell > 1:
            raise ValueError("c_of_ell requires ell > 1")
        sup = max(_base_quantity(ell, int(a)) for a in set(quotients))
        return sup ** (mpfr(1) / n0)


def theta_step(ell, a_next: int, a_cur: int, theta_prev, theta_prev2,
               precision_bits: int = DEFAULT_BITS) -> mpfr:
    """Saturated recurrence value for theta_n from the two previous terms."""
    if a_next < 1 or a_cur < 1:
        raise ValueError("partial quotients must be >= 1")
    with context(precision_bits):
        ell = mpfr_from(ell)
        if not ell > 1:
            raise ValueError("theta_step requires ell > 1")
        tp = mpfr_from(theta_prev)
        tp2 = mpfr_from(theta_prev2)
        if tp < 0 or tp2 < 0:
            raise ValueError("theta values must be >= 0")
        coeff1 = (1 - ell ** (-a_next)) / (ell - 1)
        coeff2 = ell ** (-a_cur)
        return coeff1 * tp + coeff2 * tp2


def synthetic_theta(ell, quotients: Sequence[int], seeds=(1, 1),
                    precision_bits: int = DEFAULT_BITS) -> ThetaSequence:
    """Envelope sequence theta_0..theta_{d-1} with the recurrence saturated.

    seeds are (theta_0, theta_1); theta_n for n >= 2 uses quotients a_{n+1}
    and a_n, so the sequence stops one short of the quotient depth.
    """
    quotients = [int(a) for a in quotients]
    if len(quotients) < 2:
        raise InsufficientDataError("need at least two quotients")
    with context(precision_bits):
        theta = [mpfr_from(seeds[0]), mpfr_from(seeds[1])]
        for n in range(2, len(quotients)):
            theta.append(
                theta_step(ell, quotients[n], quotients[n - 1],
                           theta[n - 1], theta[n - 2], precision_bits)
            )
        return ThetaSequence(theta=tuple(theta), origin="synthetic_recurrence")


def measured_theta(geometry) -> ThetaSequence:
    """Theta sequence read off a PreimageGeometry (log-space, no underflow)."""
    return ThetaSequence(
        theta=tuple(row[5] for row in geometry.gaps), origin="measured_from_map"
    )


@dataclass(frozen=True)
class BoundReport:
    """Per-n rows (n, q_{n+1}, theta_n, ratio, verdict) plus the conjunction.

    ratio is theta_n / (C^n q_{n+1}); the verdict compares it to K.
    """

    rows: tuple
    overall: bool
    params: BoundParams
    precision_bits: int
    fitted_K: Optional[mpfr] = None

    def csv_rows(self) -> list[str]:
        digs = sig_digits(self.precision_bits)
        out = ["n,qn1,theta,ratio,verdict"]
        with context(self.precision_bits):
            for n, qn1, theta, ratio, verdict in self.rows:
                out.append(
                    f"{n},{qn1},{sci(theta, digs)},{sci(ratio, digs)},"
                    f"{'true' if verdict else 'false'}"
                )
        return out


def verify_proposition(theta: ThetaSequence, qtable: cfmod.ConvergentTable,
                       params: BoundParams,
                       precision_bits: int = DEFAULT_BITS) -> BoundReport:
    """Check theta_n <= K C^n q_{n+1} for n = n0..len(theta)-1.

    For a synthetic sequence with params derived from its own seeds this is
    the induction, restated at the level where it is literally checkable, and
    must pass with zero violations.
    """
    if len(theta) > qtable.depth:
        raise ValueError(
            f"index misalignment: {len(theta)} theta values need q up to "
            f"{len(theta)} but table depth is {qtable.depth}"
        )
    with context(precision_bits):
        K = mpfr(params.K)
        C = mpfr(params.C)
        rows = []
        overall = True
        for n in range(params.n0, len(theta)):
            qn1 = qtable.q(n + 1)
            th = mpfr(theta.theta[n])
            ratio = th / (C**n * qn1)
            verdict = bool(ratio <= K)
            overall = overall and verdict
            rows.append((n, qn1, th, ratio, verdict))
        return BoundReport(rows=tuple(rows), overall=overall, params=params,
                           precision_bits=precision_bits)


def verify_corollary(geometry, qtable: cfmod.ConvergentTable,
                     params: BoundParams, K=None,
                     precision_bits: int = DEFAULT_BITS) -> BoundReport:
    """Same inequality with -log(forward critical-orbit distance) as theta.

    With K=None the smallest workable K is fitted and reported (the verdicts
    are then against the fitted value, hence informative only through the
    fitted constant and the absence of growth across n).
    """
    fwd = geometry.forward
    if len(fwd) <= params.n0:
        raise InsufficientDataError("forward distances do not reach n0")
    with context(precision_bits):
        C = mpfr(params.C)
        pre = []
        for n, qn1_idx, _pt, dist in fwd:
            if n < params.n0:
                continue
            qn1 = qtable.q(n + 1)
            th = -gmpy2.log(mpfr(dist))
            ratio = th / (C**n * qn1)
            pre.append((n, qn1, th, ratio))
        fitted = max(r[3] for r in pre)
        Kv = mpfr(K) if K is not None else fitted
        rows = tuple((n, qn1, th, ratio, bool(ratio <= Kv))
                     for n, qn1, th, ratio in pre)
        overall = all(r[4] for r in rows)
        return BoundReport(rows=rows, overall=overall, params=params,
                           precision_bits=precision_bits, fitted_K=fitted)


@dataclass(frozen=True)
class SenkReport:
    """Per-n margins for the two-term lower bound on alpha_n.

    margin_log_K1 is the largest log K1 making the inequality hold at that n;
    the per-q_n correction column reports margin/q_n, the term the asymptotic
    argument quietly absorbs.
    """

    rows: tuple  # (n, margin_log_K1, K1_n, margin_over_qn)
    K1_min: mpfr
    precision_bits: int


def verify_senk_empirical(geometry, ell, quotients: Sequence[int],
                          precision_bits: Optional[int] = None):
    """Fit the constant in the recursive lower bound from measured alphas.

    Returns (K1_min, SenkReport); K1_min is the largest constant valid for
    every available n, reported as the min of the per-n admissible values.
    """
    gaps = geometry.gaps
    if len(gaps) < 4:
        raise InsufficientDataError("need at least 4 alpha values")
    bits = precision_bits or geometry.precision_bits
    quotients = [int(a) for a in quotients]
    if len(quotients) < len(gaps):
        raise ValueError("quotients shorter than the measured range")
    with context(bits):
        ell = mpfr_from(ell)
        if ell == 1:
            raise ValueError("the recurrence coefficients need ell != 1")
        rows = []
        for n in range(2, len(gaps)):
            th_n = mpfr(gaps[n][5])
            th_1 = mpfr(gaps[n - 1][5])
            th_2 = mpfr(gaps[n - 2][5])
            a_next = quotients[n]
            a_cur = quotients[n - 1]
            coeff1 = (1 - ell ** (-a_next)) / (ell - 1)
            coeff2 = ell ** (-a_cur)
            margin = coeff1 * th_1 + coeff2 * th_2 - th_n
            qn = geometry.qtable.q(n)
            rows.append((n, margin, gmpy2.exp(margin), margin / qn))
        k1_min = min(r[2] for r in rows)
        return k1_min, SenkReport(rows=tuple(rows), K1_min=k1_min,
                                  precision_bits=bits)


@dataclass(frozen=True)
class RatioReport:
    """Two-step forward-distance ratios and the fitted geometric floor."""

    rows: tuple  # (n, r_n, running_inf)
    inf: mpfr
    alpha: mpfr
    C_fit: mpfr
    precision_bits: int


def ratio_sequence(geometry, precision_bits: Optional[int] = None) -> RatioReport:
    """r_n = dist(q_n) / dist(q_{n-2}) with the running infimum.

    Also fits the geometric lower bound dist_n >= C alpha^n with
    alpha = sqrt(inf r_n).  Accepts a PreimageGeometry or a plain sequence of
    distances indexed by n.
    """
    if hasattr(geometry, "forward"):
        dists = [row[3] for row in geometry.forward]
        bits = precision_bits or geometry.precision_bits
    else:
        dists = list(geometry)
        bits = precision_bits or DEFAULT_BITS
    if len(dists) < 3:
        raise InsufficientDataError("need forward distances up to n >= 2")
    with context(bits):
        dists = [mpfr_from(d) for d in dists]
        rows = []
        inf = None
        for n in range(2, len(dists)):
            r = dists[n] / dists[n - 2]
            inf = r if inf is None or r < inf else inf
            rows.append((n, r, inf))
        alpha = gmpy2.sqrt(inf)
        C_fit = min(d / alpha**n for n, d in enumerate(dists))
        return RatioReport(rows=tuple(rows), inf=inf, alpha=alpha, C_fit=C_fit,
                           precision_bits=bits)
