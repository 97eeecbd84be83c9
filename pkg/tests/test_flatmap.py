"""Map construction, evaluation against an independent quadrature oracle,
the inverse branch, rotation estimates, tuning, and backward geometry."""

import dataclasses
from fractions import Fraction

import gmpy2
import mpmath
import pytest
from gmpy2 import mpfr

from flatflow import cf, flatmap
from flatflow._precision import PrecisionExhausted, context, mpfr_from, wrap01, wrap_chart


@pytest.fixture(scope="module")
def plain_lift():
    # untuned reference map, flat arc (-1/10, 1/10), offset 1/3
    return flatmap.build_map(Fraction(3, 2), Fraction(1, 5), Fraction(1, 3),
                             precision_bits=192)


def oracle_value(params, x: Fraction) -> mpmath.mpf:
    """F(x) - c via mpmath's regularized incomplete beta, independently of
    the package's series evaluation."""
    mpmath.mp.dps = 70
    ell = mpmath.mpf(params.ell.numerator) / params.ell.denominator
    L = Fraction(1) - (params.b - params.a)
    u = mpmath.mpf((x - params.b).numerator) / (x - params.b).denominator
    u /= mpmath.mpf(L.numerator) / L.denominator
    return mpmath.betainc(ell, ell, 0, u, regularized=True)


def test_eval_matches_quadrature_oracle(plain_lift):
    params = plain_lift.params
    for frac in (Fraction(1, 1000), Fraction(1, 10), Fraction(1, 2),
                 Fraction(9, 10), Fraction(999, 1000)):
        x = params.b + frac * (Fraction(1) - params.flat_length)
        with context(192):
            got = plain_lift.eval(x) - mpfr_from(params.c)
        want = oracle_value(params, x)
        rel = abs(mpmath.mpf(str(got)) - want) / want
        assert rel < mpmath.mpf("1e-45"), f"at {frac}: rel err {rel}"


def test_lift_is_degree_one(plain_lift):
    with context(192):
        for x in (mpfr("0.3"), mpfr("-0.41"), mpfr("0.11"), mpfr("2.7")):
            assert plain_lift.eval(x + 1) == plain_lift.eval(x) + 1


def test_flat_arc_collapses_to_critical_value(plain_lift):
    p = plain_lift.params
    with context(192):
        want = mpfr_from(p.c)
        for t in (Fraction(1, 7), Fraction(1, 2), Fraction(6, 7)):
            x = p.a + t * (p.b - p.a)
            assert plain_lift.eval(x) == want
        assert plain_lift.eval(p.b) == want


def test_monotone_nondecreasing_outside_flat(plain_lift):
    p = plain_lift.params
    with context(192):
        xs = [mpfr_from(p.b) + mpfr(k) / 257 * (1 - mpfr_from(p.flat_length))
              for k in range(258)]
        vals = [plain_lift.eval(x) for x in xs]
        for lo, hi in zip(vals, vals[1:]):
            assert lo < hi
        assert vals[0] == mpfr_from(p.c)
        assert vals[-1] == mpfr_from(p.c) + 1


def test_one_sided_power_law_fit(plain_lift):
    # fitted slope of log(F(b+h) - c) against log h, h = 1e-3..1e-5
    p = plain_lift.params
    with context(192):
        b, c = mpfr_from(p.b), mpfr_from(p.c)
        xs, ys = [], []
        for e in (3, 4, 5):
            h = mpfr(10) ** (-e)
            xs.append(gmpy2.log(h))
            ys.append(gmpy2.log(plain_lift.eval(b + h) - c))
        xbar, ybar = sum(xs) / 3, sum(ys) / 3
        slope = sum((x - xbar) * (y - ybar) for x, y in zip(xs, ys)) / \
            sum((x - xbar) ** 2 for x in xs)
        assert abs(slope - mpfr(3) / 2) < mpfr("0.01")


def test_inverse_branch_roundtrip(plain_lift):
    p = plain_lift.params
    with context(192):
        tol = mpfr(2) ** (-150)
        for frac in (Fraction(1, 9), Fraction(2, 5), Fraction(7, 8)):
            x = wrap_chart(mpfr_from(p.b + frac * (Fraction(1) - p.flat_length)))
            z = plain_lift.eval_circle(x)
            back = plain_lift.g(z)
            assert abs(wrap01(back - x)) < tol or abs(wrap01(x - back)) < tol


def test_inverse_branch_limits_and_discontinuity(plain_lift):
    p = plain_lift.params
    with context(192):
        assert plain_lift.g_left() == mpfr_from(p.a)
        assert plain_lift.g_right() == mpfr_from(p.b)
        with pytest.raises(flatmap.DiscontinuityError) as err:
            plain_lift.g(mpfr_from(p.c))
        assert err.value.left == mpfr_from(p.a)
        assert err.value.right == mpfr_from(p.b)
        # just-off-critical falls in the guard band instead; the offset must
        # still be representable next to c at 192 bits, so between 2^-194
        # and the guard radius 2^-160
        with pytest.raises(PrecisionExhausted):
            plain_lift.g(mpfr_from(p.c) + mpfr(2) ** (-170))


def test_rotation_number_estimate_and_bracket(plain_lift):
    est10k, err10k = plain_lift.rotation_number(10**4)
    est50k, err50k = plain_lift.rotation_number(5 * 10**4)
    assert float(err10k) == 1e-4 and float(err50k) == 2e-5
    assert abs(float(est10k) - float(est50k)) < 1e-4 + 2e-5
    bracket = flatmap.rotation_bracket(plain_lift, 20000)
    assert bracket.lo <= bracket.hi
    assert bracket.hi - bracket.lo < Fraction(1, 1000)
    assert bracket.lo - Fraction(1, 20000) <= flatmap.to_fraction(est50k) \
        <= bracket.hi + Fraction(1, 20000)


def test_compare_with_rational_sides(golden_lift):
    # golden rotation number 0.618...: above 1/2, below 2/3
    assert flatmap.compare_with_rational(golden_lift, 1, 2) > 0
    assert flatmap.compare_with_rational(golden_lift, 2, 3) < 0


def test_tune_reaches_tolerance_quick():
    target = cf.target_from_quotients([1] * 35)
    tol = Fraction(1, 10**5)
    params = flatmap.tune(Fraction(3, 2), Fraction(1, 5), target, tol,
                          precision_bits=128)
    bracket = flatmap.rotation_bracket(flatmap.Lift(params), 200000)
    assert abs((bracket.lo + bracket.hi) / 2 - target.value) < 2 * tol
    # deterministic: the same call returns bit-identical parameters
    again = flatmap.tune(Fraction(3, 2), Fraction(1, 5), target, tol,
                         precision_bits=128)
    assert again == params


def test_tune_rejects_shallow_target():
    with pytest.raises(flatmap.InvalidTargetError):
        flatmap.tune(Fraction(3, 2), Fraction(1, 5),
                     cf.target_from_quotients([2, 2]), Fraction(1, 10**6))


def test_params_validation_and_json_roundtrip(golden_params):
    blob = flatmap.params_to_json_dict(golden_params)
    assert flatmap.params_from_json_dict(blob) == golden_params
    with pytest.raises(ValueError):
        flatmap.params_from_json_dict({"precision_bits": 128})
    with pytest.raises(ValueError):
        dataclasses.replace(golden_params, ell=Fraction(-1))
    with pytest.raises(ValueError):
        dataclasses.replace(golden_params, lambda1=Fraction(5, 2))
    with pytest.raises(ValueError):
        dataclasses.replace(golden_params, a=Fraction(2, 5), b=Fraction(1, 5))


def test_check_orbit_order_golden(golden_lift, golden_target):
    comb = flatmap.check_orbit_order(golden_lift, golden_target, 200)
    assert comb.equal
    assert sorted(comb.map_order) == list(range(201))
    assert comb.map_order == comb.rotation_order


def test_preimage_geometry_structure(golden_geometry, golden_qtable):
    geom = golden_geometry
    assert geom.n_max == 12
    assert len(geom.gaps) == 13
    assert len(geom.forward) == 13
    # duplicate q_0 = q_1 = 1 still yields one forward row per index
    assert geom.forward[0][1] == geom.forward[1][1] == 1
    assert geom.forward[0][3] == geom.forward[1][3]
    with context(geom.precision_bits):
        for n, qn, gap, bracket, alpha, theta in geom.gaps:
            assert qn == golden_qtable.q(n)
            assert 0 < gap < bracket
            assert 0 < alpha < 1
            assert theta >= 0
        # backward images of the flat arc are pairwise disjoint, so their
        # lengths must pack inside the circle (they are not monotone: g
        # expands wherever the preimage passes near the flat-arc edges)
        lengths = [wrap01(r - l) for _, l, r in geom.intervals]
        assert sum(lengths) < 1
        assert max(lengths[100:]) < lengths[0] / 10
        for n, j, _pt, dist in geom.forward:
            assert dist > 0


def test_geometry_csv_shape(golden_geometry):
    rows = flatmap.geometry_csv_rows(golden_geometry)
    assert rows[0] == "n,qn,gap,bracket,alpha_n,fwd_dist"
    assert len(rows) == 14


def test_preimage_geometry_depth_guard(golden_lift, golden_qtable):
    with pytest.raises(ValueError):
        flatmap.preimage_geometry(golden_lift, golden_qtable, golden_qtable.depth)
