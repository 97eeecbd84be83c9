"""Suspension of the inverse branch with logarithmically singular return times.

A segment of the backward orbit z, g(z), g^2(z), ... carries return times
tau(z_i) = tau0 + kappa * (-log d(z_i, c)); summing times over points landing
in prescribed arcs around the critical value gives occupation ratios, and the
portion of each return spent inside the slow region d < epsilon_cut estimates
the weight gamma of the Dirac part in the physical measure
gamma * delta_s + (1 - gamma) * nu.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import gmpy2
from gmpy2 import mpfr

from . import cf as cfmod
from ._precision import (PrecisionExhausted, circle_dist, context, guard_eps,
                         mpfr_from, sci, sig_digits, to_fraction, wrap01,
                         wrap_chart)
from .flatmap import FlatMapParams, Lift

PROFILES = ("uniform", "saddle_log")


class MissingGeometryError(ValueError):
    pass


@dataclass(frozen=True)
class ReturnTimeModel:
    """tau(z) = tau0 + kappa * (-log d(z, c)), stored exactly.

    kappa defaults to 1/lambda1 (the passage time scale of the linearized
    saddle); kappa = 0 degenerates to the constant-time suspension, which is
    allowed and useful as a control.  epsilon_cut bounds the slow region and
    must leave room on the circle, hence < 1/2.
    """

    tau0: Fraction
    kappa: Fraction
    epsilon_cut: Fraction

    def __post_init__(self):
        object.__setattr__(self, "tau0", to_fraction(self.tau0))
        object.__setattr__(self, "kappa", to_fraction(self.kappa))
        object.__setattr__(self, "epsilon_cut", to_fraction(self.epsilon_cut))
        if self.tau0 <= 0:
            raise ValueError("tau0 must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if not 0 < self.epsilon_cut < Fraction(1, 2):
            raise ValueError("epsilon_cut must lie in (0, 1/2)")

    @classmethod
    def from_map(cls, params: FlatMapParams, tau0=1,
                 epsilon_cut=Fraction(1, 8)) -> "ReturnTimeModel":
        return cls(tau0=to_fraction(tau0),
                   kappa=Fraction(1) / params.lambda1,
                   epsilon_cut=to_fraction(epsilon_cut))

    def tau(self, dist: mpfr) -> mpfr:
        # caller holds the precision context
        return mpfr_from(self.tau0) - mpfr_from(self.kappa) * gmpy2.log(dist)

    def dwell(self, dist: mpfr) -> mpfr:
        """Time below the cut: kappa * max(0, log(epsilon_cut / dist))."""
        eps = mpfr_from(self.epsilon_cut)
        if dist >= eps:
            return mpfr(0)
        return mpfr_from(self.kappa) * (gmpy2.log(eps) - gmpy2.log(dist))


@dataclass(frozen=True)
class OrbitSegment:
    """Backward orbit points z_1..z_{N+1} with their distances and times.

    z_1 is the start (inside the flat arc), z_{i+1} = g(z_i).  t_total sums
    all N+1 times; the final summand t_{N+1} doubles as the partial return
    t-tilde, so 0 < t-tilde <= tau(z_{N+1}) holds by construction.
    """

    model: ReturnTimeModel
    params: FlatMapParams
    N: int
    points: tuple
    dists: tuple
    times: tuple
    t_total: mpfr
    precision_bits: int

    @property
    def t_tilde(self) -> mpfr:
        return self.times[-1]

    def __post_init__(self):
        if not (len(self.points) == len(self.dists) == len(self.times)
                == self.N + 1):
            raise ValueError("segment arrays must have N+1 entries")


def iterate_segment(lift: Lift, model: ReturnTimeModel, z, N: int) -> OrbitSegment:
    """Backward orbit of z under g with the return-time tally.

    z must lie strictly inside the flat arc (the suspension section).  Raises
    PrecisionExhausted if any iterate enters the guard band around the
    critical value; rebuild the lift at doubled precision and retry.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    bits = lift.precision_bits
    with context(bits):
        z = wrap_chart(mpfr_from(z))
        a = mpfr_from(lift.params.a)
        b = mpfr_from(lift.params.b)
        if not a < z < b:
            raise ValueError("start point must lie strictly inside the flat arc")
        c_pt = wrap_chart(mpfr_from(lift.params.c))
        points = [z]
        for _ in range(N):
            points.append(lift.g(points[-1]))
        guard = guard_eps(bits)
        dists = []
        times = []
        total = mpfr(0)
        for p in points:
            d = circle_dist(p, c_pt)
            if d < guard:
                raise PrecisionExhausted(
                    "segment point inside the guard band around the critical value"
                )
            dists.append(d)
            t = model.tau(d)
            times.append(t)
            total += t
        return OrbitSegment(model=model, params=lift.params, N=N,
                            points=tuple(points), dists=tuple(dists),
                            times=tuple(times), t_total=total,
                            precision_bits=bits)


def time_average(segment: OrbitSegment, observable: Callable,
                 profile: str = "uniform") -> mpfr:
    """Time average of an observable along the segment.

    "uniform" weighs each point by its full return time; "saddle_log" by the
    dwell below the cut only.  Both divide by the total flow time, so the
    constant observable 1 averages to exactly 1 under the uniform profile.
    """
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    with context(segment.precision_bits):
        acc = mpfr(0)
        if profile == "uniform":
            for p, t in zip(segment.points, segment.times):
                acc += mpfr_from(observable(p)) * t
        else:
            for p, d in zip(segment.points, segment.dists):
                acc += mpfr_from(observable(p)) * segment.model.dwell(d)
        return acc / segment.t_total


@dataclass(frozen=True)
class GammaDecomposition:
    """Occupation summary of one segment.

    gamma_hat is the fraction of flow time spent below the cut.  When built
    by occupation_times, occupation holds (l, t_Bl) for the tile arcs between
    consecutive closest returns, tA the direct occupation of the arc bounded
    by the returns at q_{n0} and q_{n0+1}, t_inner the corresponding arc one
    generation deeper (so tA = sum of t_Bl + t_inner), counts the visit
    counts per tile, and majorant the logarithmic envelope
    sum_l (-log dist_{l+2}) / q_{l+1} that dominates tA/t up to a constant.
    """

    t: mpfr
    gamma_hat: mpfr
    occupation: tuple = ()
    tA: Optional[mpfr] = None
    n0: Optional[int] = None
    n: Optional[int] = None
    t_inner: Optional[mpfr] = None
    counts: tuple = ()
    majorant: Optional[mpfr] = None
    precision_bits: int = 0


def gamma_estimate(segment: OrbitSegment) -> GammaDecomposition:
    """Fraction of flow time spent within epsilon_cut of the critical value."""
    with context(segment.precision_bits):
        acc = mpfr(0)
        for d in segment.dists:
            acc += segment.model.dwell(d)
        return GammaDecomposition(t=segment.t_total, gamma_hat=acc / segment.t_total,
                                  precision_bits=segment.precision_bits)


def _offset(x: mpfr, c_pt: mpfr) -> mpfr:
    # position of x measured counterclockwise from the critical value
    return wrap01(x - c_pt)


def occupation_times(segment: OrbitSegment, lift: Lift,
                     qtable: cfmod.ConvergentTable, n0: int,
                     n: int) -> GammaDecomposition:
    """Occupation of the return arcs A and the tiles B_l, l = n0..n-1.

    A is the arc bounded by the forward critical orbit points at times q_{n0}
    and q_{n0+1}, containing the critical value; B_l sits between the points
    at q_l and q_{l+2}, on one side.  Boundary hits inside the guard band
    raise PrecisionExhausted rather than misassign a point.
    """
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    if n <= n0:
        raise ValueError("n must exceed n0")
    if n + 1 > qtable.depth:
        raise MissingGeometryError(
            f"occupation up to n={n} needs convergents to q_{n + 1}; "
            f"table depth is {qtable.depth}"
        )
    if segment.params != lift.params:
        raise ValueError("segment and lift were built from different maps")
    bits = segment.precision_bits
    with context(bits):
        guard = guard_eps(bits)
        c_pt = wrap_chart(mpfr_from(lift.params.c))
        # forward critical orbit at the return times q_{n0}..q_{n+1}
        wanted = {qtable.q(l): l for l in range(n0, n + 2)}
        w = {}
        dist_fwd = {}
        y = c_pt
        for j in range(1, qtable.q(n + 1) + 1):
            y, _s = lift._step(y)
            if j in wanted:
                l = wanted[j]
                w[l] = y
                dist_fwd[l] = circle_dist(y, c_pt)
                if dist_fwd[l] < guard:
                    raise PrecisionExhausted(
                        f"forward return at q_{l} inside the guard band"
                    )
        offs = {l: _offset(w[l], c_pt) for l in w}
        half = mpfr(1) / 2
        # consecutive returns alternate sides of the critical value
        for l in range(n0, n + 1):
            if (offs[l] < half) == (offs[l + 1] < half):
                raise RuntimeError(
                    "consecutive closest returns landed on the same side; "
                    "geometry inconsistent with a closest-return table"
                )

        def in_between(delta: mpfr, lo: mpfr, hi: mpfr) -> bool:
            if abs(delta - lo) < guard or abs(delta - hi) < guard:
                raise PrecisionExhausted("segment point on an arc boundary")
            return lo < delta < hi

        def in_A(delta: mpfr, left_off: mpfr, right_off: mpfr) -> bool:
            # arc through the critical value: offsets wrap past 0
            if abs(delta - left_off) < guard or abs(delta - right_off) < guard:
                raise PrecisionExhausted("segment point on an arc boundary")
            return delta > left_off or delta < right_off

        def a_arc(l: int):
            o1, o2 = offs[l], offs[l + 1]
            return (o1, o2) if o1 > half else (o2, o1)  # (left, right)

        left0, right0 = a_arc(n0)
        left_in, right_in = a_arc(n)
        tiles = []
        for l in range(n0, n):
            o1, o2 = offs[l], offs[l + 2]
            tiles.append((l, min(o1, o2), max(o1, o2)))

        tA = mpfr(0)
        t_inner = mpfr(0)
        t_tiles = {l: mpfr(0) for l, _, _ in tiles}
        counts = {l: 0 for l, _, _ in tiles}
        for p, t in zip(segment.points, segment.times):
            delta = _offset(p, c_pt)
            if in_A(delta, left0, right0):
                tA += t
                if in_A(delta, left_in, right_in):
                    t_inner += t
                    continue
                for l, lo, hi in tiles:
                    if in_between(delta, lo, hi):
                        t_tiles[l] += t
                        counts[l] += 1
                        break
                else:
                    raise RuntimeError(
                        "point inside A escaped both the tiles and the inner arc"
                    )
        majorant = mpfr(0)
        for l in range(n0, n):
            majorant += -gmpy2.log(dist_fwd[l + 2]) / qtable.q(l + 1)
        base = gamma_estimate(segment)
        return GammaDecomposition(
            t=base.t, gamma_hat=base.gamma_hat,
            occupation=tuple((l, t_tiles[l]) for l, _, _ in tiles),
            tA=tA, n0=n0, n=n, t_inner=t_inner,
            counts=tuple((l, counts[l]) for l, _, _ in tiles),
            majorant=majorant, precision_bits=bits,
        )


def tau_mu_integral_estimate(lift: Lift, model: ReturnTimeModel,
                             qtable: cfmod.ConvergentTable, N: int,
                             caps: Sequence[int] = (2, 4, 8, 16, 32)):
    """Birkhoff estimate of the integral of tau along the forward critical orbit.

    Distances inside the precision guard are truncated at the guard value and
    counted; the report carries partial averages at the closest-return times
    q_j <= N plus at N/4, N/2, N, and the mass removed by capping tau at
    multiples of tau0.  Non-convergence shows up as drift across the partial
    averages (an infinite integral is the expected outcome when the orbit
    closes in on the critical value fast enough); no error is raised for it.
    """
    if N < 4:
        raise ValueError("N must be >= 4")
    bits = lift.precision_bits
    with context(bits):
        guard = guard_eps(bits)
        c_pt = wrap_chart(mpfr_from(lift.params.c))
        marks = sorted({qtable.q(j) for j in range(qtable.depth + 1)
                        if 1 <= qtable.q(j) <= N}
                       | {N // 4, N // 2, N})
        taus = []
        truncated = 0
        partials = []
        acc = mpfr(0)
        y = c_pt
        for i in range(1, N + 1):
            y, _s = lift._step(y)
            d = circle_dist(y, c_pt)
            if d < guard:
                d = guard
                truncated += 1
            t = model.tau(d)
            taus.append(t)
            acc += t
            if i in marks:
                partials.append((i, acc / i))
        estimate = acc / N
        tau0 = mpfr_from(model.tau0)
        removed = []
        for m in caps:
            T = m * tau0
            mass = mpfr(0)
            for t in taus:
                if t > T:
                    mass += t - T
            removed.append((m, mass / N))
        report = {
            "N": N,
            "estimate": estimate,
            "partials": tuple(partials),
            "truncated_count": truncated,
            "removed_mass": tuple(removed),
            "precision_bits": bits,
        }
        return estimate, report


def prefix_at_time(segment: OrbitSegment, t_mark) -> OrbitSegment:
    """Shortest prefix whose total flow time reaches t_mark.

    The prefix keeps the OrbitSegment invariants: its final summand is the
    partial return t-tilde.  Raises ValueError when the segment is too short.
    """
    with context(segment.precision_bits):
        mark = mpfr_from(t_mark)
        if not mark > 0:
            raise ValueError("t_mark must be positive")
        acc = mpfr(0)
        for i, t in enumerate(segment.times, start=1):
            acc += t
            if acc >= mark:
                if i == segment.N + 1:
                    return segment
                return OrbitSegment(
                    model=segment.model, params=segment.params, N=i - 1,
                    points=segment.points[:i], dists=segment.dists[:i],
                    times=segment.times[:i], t_total=acc,
                    precision_bits=segment.precision_bits,
                )
        raise ValueError(
            f"segment flow time {segment.t_total} does not reach the mark"
        )


def gamma_csv_rows(decomps: Sequence[GammaDecomposition]) -> list[str]:
    """CSV lines t, gamma_hat, occupation of A, n0 (one row per grid mark)."""
    rows = ["t,gamma_hat,tA,n0"]
    for d in decomps:
        digs = sig_digits(d.precision_bits)
        with context(d.precision_bits):
            ta = sci(d.tA, digs) if d.tA is not None else ""
            rows.append(f"{sci(d.t, digs)},{sci(d.gamma_hat, digs)},{ta},"
                        f"{d.n0 if d.n0 is not None else ''}")
    return rows


def segment_csv_rows(segment: OrbitSegment) -> list[str]:
    """CSV lines i, z_i, distance to the critical value, return time."""
    digs = sig_digits(segment.precision_bits)
    rows = ["i,z_i,dist_to_crit,t_i"]
    with context(segment.precision_bits):
        for i, (p, d, t) in enumerate(
            zip(segment.points, segment.dists, segment.times), start=1
        ):
            rows.append(f"{i},{sci(p, digs)},{sci(d, digs)},{sci(t, digs)}")
    return rows
