"""Flow extraction oracles: the hand-derived q/d/M data, the group law,
and the residual decay of the limit statements."""

from fractions import Fraction

import numpy as np
import pytest

from boxflow.errors import DomainError, NilpotencyError
from boxflow.flowlimit import (
    FlowResult,
    compute_flow,
    flow_of,
    group_law_check,
    limit_residual,
    nilpotent_exp,
    normalize_exponents,
    rescale,
    twodim_flow,
    twodim_residual,
)
from boxflow.polyalg import GenPoly, parse_poly
from boxflow.polymatrix import PolyMatrix

F = Fraction


def M(rows):
    return PolyMatrix.from_text(rows)


UPPER = M([["1", "x"], ["0", "1"]])
PRODUCT_UL = M([["1 + x * y", "x"], ["y", "1"]])


# -- rescale ---------------------------------------------------------------


def test_rescale_single_variable():
    out = rescale(UPPER, [F(5, 2)], ["x"])
    assert out == M([["1", "a1 * t^5/2"], ["0", "1"]])


def test_rescale_two_variables():
    out = rescale(PRODUCT_UL, [F(3, 2), F(1)], ["x", "y"])
    expected = M(
        [
            ["1 + a1 * a2 * t^5/2", "a1 * t^3/2"],
            ["a2 * t", "1"],
        ]
    )
    assert out == expected


def test_rescale_requires_identity_at_origin():
    bad = M([["2", "x"], ["0", "1/2"]])
    with pytest.raises(DomainError):
        rescale(bad, [F(1)], ["x"])


# -- normalize_exponents -----------------------------------------------------


def test_normalize_already_compliant():
    c, lam = normalize_exponents([F(5, 2)])
    assert c == 1 and lam == (F(5, 2),)


def test_normalize_integer_exponent_needs_quarter_grid():
    # every half-integer multiple of 2 is an integer, so the search drops
    # to the quarter grid and lands on 5/4
    c, lam = normalize_exponents([F(2)])
    assert c == F(5, 4) and lam == (F(5, 2),)


def test_normalize_pair_of_ones():
    c, lam = normalize_exponents([F(1), F(1)])
    assert c == F(3, 2) and lam == (F(3, 2), F(3, 2))


def test_normalize_postconditions_random():
    import random

    rng = random.Random(44)
    for _ in range(100):
        lam = [F(rng.randint(1, 8), rng.randint(1, 4)) for _ in range(rng.randint(1, 3))]
        c, scaled = normalize_exponents(lam)
        assert c > 0
        assert all(v > 1 for v in scaled)
        assert any(v.denominator != 1 for v in scaled)
        assert scaled == tuple(c * v for v in lam)


# -- compute_flow: the hand-derived case -------------------------------------


@pytest.fixture(scope="module")
def flow_52() -> FlowResult:
    theta = rescale(UPPER, [F(5, 2)], ["x"])
    return compute_flow(theta)


def test_flow_52_exponent_and_order(flow_52):
    assert flow_52.q == F(3, 2)
    assert flow_52.d == 2


def test_flow_52_limit_matrices(flow_52):
    m1 = M([["0", "5/2 * a1"], ["0", "0"]])
    assert flow_52.limits[0] == m1
    assert flow_52.limits[1].is_zero()
    assert flow_52.generator == m1


def test_flow_52_degenerate_locus(flow_52):
    assert flow_52.degenerate_locus == (parse_poly("5/2 * a1"),)
    assert flow_52.is_degenerate({"a1": 0})
    assert not flow_52.is_degenerate({"a1": F(1, 3)})


def test_flow_52_symbolic_flow(flow_52):
    assert flow_of(flow_52) == M([["1", "5/2 * a1 * s"], ["0", "1"]])


def test_flow_of_degenerate_alpha_is_identity(flow_52):
    rho = flow_of(flow_52)
    at_zero = rho.substitute({"a1": GenPoly.zero()})
    assert at_zero == PolyMatrix.identity(2)


def test_compute_flow_rejects_t_constant():
    with pytest.raises(DomainError):
        compute_flow(PolyMatrix.identity(2))


def test_compute_flow_requires_fractional_exponent():
    theta = rescale(UPPER, [F(2)], ["x"])
    with pytest.raises(DomainError):
        compute_flow(theta)


# -- flow_of / nilpotent_exp ---------------------------------------------------


def test_flow_of_identity_when_all_limits_vanish(flow_52):
    degenerate = FlowResult(
        q=flow_52.q,
        d=1,
        limits=(PolyMatrix.zero(2),),
        generator=PolyMatrix.zero(2),
        degenerate_locus=(),
        alpha_vars=flow_52.alpha_vars,
    )
    assert flow_of(degenerate) == PolyMatrix.identity(2)


def test_flow_of_single_jordan_block():
    e12 = PolyMatrix.from_text([["0", "1"], ["0", "0"]])
    res = FlowResult(
        q=F(1),
        d=2,
        limits=(e12, PolyMatrix.zero(2)),
        generator=e12,
        degenerate_locus=(GenPoly.const(1),),
        alpha_vars=(),
    )
    assert flow_of(res) == M([["1", "s"], ["0", "1"]])


def test_nilpotent_exp_examples():
    y = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert nilpotent_exp(y, 3.0) == pytest.approx(np.array([[1, 3], [0, 1]]))
    assert nilpotent_exp(np.zeros((2, 2)), 5.0) == pytest.approx(np.eye(2))
    y3 = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=float)
    expected = np.array([[1, 1, 0.5], [0, 1, 1], [0, 0, 1]])
    assert nilpotent_exp(y3, 1.0) == pytest.approx(expected)


def test_nilpotent_exp_rejects_non_nilpotent():
    with pytest.raises(NilpotencyError):
        nilpotent_exp(np.eye(2), 1.0)


# -- group law ------------------------------------------------------------------


def test_group_law_exact_for_catalog_case(flow_52):
    report = group_law_check(flow_52, trials=100, seed=3)
    assert report.passed
    assert report.symbolic_ok
    assert report.exp_max_err <= 1e-9


def test_group_law_identity_flow(flow_52):
    trivial = FlowResult(
        q=F(1),
        d=1,
        limits=(PolyMatrix.zero(2),),
        generator=PolyMatrix.zero(2),
        degenerate_locus=(),
        alpha_vars=("a1",),
    )
    assert group_law_check(trivial, trials=10, seed=0).passed


def test_group_law_detects_corrupted_limits(flow_52):
    # an M_2 inconsistent with exp(s*M_1) must be caught symbolically
    corrupt = FlowResult(
        q=flow_52.q,
        d=2,
        limits=(flow_52.limits[0], M([["0", "a1"], ["0", "0"]])),
        generator=flow_52.limits[0],
        degenerate_locus=flow_52.degenerate_locus,
        alpha_vars=flow_52.alpha_vars,
    )
    report = group_law_check(corrupt, trials=10, seed=0)
    assert not report.passed
    assert not report.symbolic_ok


# -- limit residual ----------------------------------------------------------------


def test_limit_residual_scale_at_t_1000(flow_52):
    theta = rescale(UPPER, [F(5, 2)], ["x"])
    res = limit_residual(theta, flow_52, {"a1": 1.0}, s=1.0, t=1e3)
    # dominant discarded term is (15/8) s^2 t^{-5/2}
    assert res <= 2.0 * 1e3 ** -2.5
    assert res == pytest.approx(15 / 8 * 1e3 ** -2.5, rel=1e-2)


def test_limit_residual_zero_shift(flow_52):
    theta = rescale(UPPER, [F(5, 2)], ["x"])
    assert limit_residual(theta, flow_52, {"a1": 1.0}, s=0.0, t=1e3) <= 1e-30


def test_limit_residual_decreases_in_t(flow_52):
    theta = rescale(UPPER, [F(5, 2)], ["x"])
    vals = [
        limit_residual(theta, flow_52, {"a1": 0.8}, s=2.0, t=t)
        for t in (1e2, 1e3, 1e4)
    ]
    assert vals[0] > vals[1] > vals[2]


# -- two-variable flows ---------------------------------------------------------------


def test_twodim_flow_xy():
    res = twodim_flow(M([["1", "x * y"], ["0", "1"]]))
    assert res.q == 0
    assert res.lambda_of_y == M([["0", "y"], ["0", "0"]])
    assert res.d == 1
    assert res.lambda0 == M([["0", "1"], ["0", "0"]])
    assert res.flow() == M([["1", "s"], ["0", "1"]])
    assert res.p == 1 and res.b == 2
    assert res.ratio_set == ()
    assert res.dominant_ratio is None


def test_twodim_flow_product_type():
    res = twodim_flow(PRODUCT_UL)
    assert res.q == 0
    assert res.d == 0
    assert res.lambda0 == M([["0", "1"], ["0", "0"]])
    assert res.p == 0 and res.b == 1
    assert res.ratio_set == ()


def test_twodim_flow_mixed_degrees():
    res = twodim_flow(M([["1", "x^2 + x * y^3"], ["0", "1"]]))
    assert res.q == 1
    assert res.lambda0 == M([["0", "2"], ["0", "0"]])
    assert res.flow() == M([["1", "2 * s"], ["0", "1"]])
    assert res.p == 3 and res.b == 4
    assert res.ratio_set == ((F(3), F(1)),)
    assert res.dominant_ratio == (F(3), F(1))


def test_twodim_flow_requires_x_degree():
    with pytest.raises(DomainError):
        twodim_flow(M([["1", "y"], ["0", "1"]]))


def test_twodim_residual_exact_case():
    theta = M([["1", "x * y"], ["0", "1"]])
    res = twodim_flow(theta)
    for x, y in ((3.0, 5.0), (11.0, 2.0)):
        assert twodim_residual(theta, res, s=1.0, x=x, y=y) <= 1e-40


def test_twodim_residual_zero_shift():
    theta = M([["1", "x^2 + x * y^3"], ["0", "1"]])
    res = twodim_flow(theta)
    assert twodim_residual(theta, res, s=0.0, x=10.0, y=3.0) <= 1e-40


def test_twodim_residual_decreases_along_compliant_sequence():
    theta = M([["1", "x^2 + x * y^3"], ["0", "1"]])
    res = twodim_flow(theta)
    # (x, y) = (n^4, n) respects the b = 4 box condition
    vals = [
        twodim_residual(theta, res, s=1.0, x=float(n) ** 4, y=float(n))
        for n in (10, 100, 1000)
    ]
    assert vals[0] > vals[1] > vals[2]
