"""Limiting unipotent one-parameter flows of rescaled polynomial trajectories.

Given a trajectory map rescaled along a box family, ``compute_flow`` extracts
the critical exponent q, the Taylor order d, the limit matrices M_1..M_d and
the nilpotent generator of the limiting flow, all exactly.  The two-variable
variant ``twodim_flow`` extracts the large-x flow together with the box
exponent b that controls when the flow survives joint (x, y) expansion.

Everything symbolic is exact; the residual checks evaluate at high precision
because the quantities measured sit many orders of magnitude below the raw
matrix entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import mpmath
import numpy as np

from .errors import BoxflowError, DomainError, NilpotencyError
from .polyalg import NEG_INF, T_VAR, GenPoly
from .polymatrix import PolyMatrix

XI_VAR = "xi"

_MAX_ORDER = 512  # safety cap; the iteration terminates long before this


# ---------------------------------------------------------------------------
# box rescaling
# ---------------------------------------------------------------------------


def rescale(
    theta_map: PolyMatrix,
    lam: Sequence[Fraction],
    map_vars: Sequence[str],
    alpha_vars: Optional[Sequence[str]] = None,
) -> PolyMatrix:
    """Substitute x_i -> a_i * t^{lambda_i}, turning a trajectory over a box
    family into a single map in (a_1..a_k, t).

    Requires the map to take the identity at the origin.
    """
    lam = [Fraction(v) for v in lam]
    if len(lam) != len(map_vars):
        raise DomainError("one box exponent per map variable is required")
    if any(v <= 0 for v in lam):
        raise DomainError("box exponents must be positive")
    at_zero = theta_map.substitute({v: GenPoly.zero() for v in map_vars})
    if at_zero != PolyMatrix.identity(theta_map.dim):
        raise DomainError(
            f"map must equal the identity at the origin, got {at_zero}"
        )
    if alpha_vars is None:
        alpha_vars = [f"a{i + 1}" for i in range(len(map_vars))]
    bindings = {
        v: GenPoly.monomial(1, {a: 1, T_VAR: l})
        for v, a, l in zip(map_vars, alpha_vars, lam)
    }
    return theta_map.substitute(bindings)


def normalize_exponents(lam: Sequence[Fraction]):
    """Rescale box exponents so each exceeds 1 and at least one is not an
    integer, returning (c, c*lambda).

    Candidates are scanned on dyadic grids of increasing fineness: first
    1, 3/2, 2, 5/2, ... then the new quarter-integer values 5/4, 7/4, ...,
    then eighth-integers, and so on; the first candidate satisfying both
    conditions wins.  Reparameterizing the family parameter by the 1/c
    power leaves the realized boxes unchanged.
    """
    lam = [Fraction(v) for v in lam]
    if not lam or any(v <= 0 for v in lam):
        raise DomainError("box exponents must be positive")

    def admissible(c: Fraction) -> bool:
        scaled = [c * v for v in lam]
        return all(s > 1 for s in scaled) and any(
            s.denominator != 1 for s in scaled
        )

    cap = max(Fraction(2), max(1 / v for v in lam)) + 4
    denom = 2
    while denom <= 1 << 20:
        num = denom if denom == 2 else denom + 1  # start at 1, else first odd > denom
        while Fraction(num, denom) <= cap:
            c = Fraction(num, denom)
            if denom == 2 or num % 2 == 1:  # odd numerators are new to this grid
                if admissible(c):
                    return c, tuple(c * v for v in lam)
            num += 1
        denom *= 2
    raise BoxflowError("exponent normalization search did not terminate")


# ---------------------------------------------------------------------------
# flow extraction in the rescaled parameter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlowResult:
    """Exact data of the limiting flow of a rescaled trajectory.

    q         -- critical exponent (positive rational)
    d         -- Taylor truncation order
    limits    -- M_1 .. M_d, matrices of polynomials in the alpha variables
    generator -- M_1, the nilpotent generator of the flow
    degenerate_locus -- the nonzero entry polynomials of all M_l; the flow
                 collapses to the identity exactly where all of them vanish
    """

    q: Fraction
    d: int
    limits: tuple
    generator: PolyMatrix
    degenerate_locus: tuple
    alpha_vars: tuple

    def is_degenerate(self, alpha: Mapping[str, object]) -> bool:
        """Exact rational test that alpha lies where every M_l vanishes."""
        point = {v: Fraction(alpha[v]) for v in self.alpha_vars if v in alpha}
        for poly in self.degenerate_locus:
            if poly.evaluate_exact(point) != 0:
                return False
        return True


def _taylor_shift_t(matrix: PolyMatrix, max_order: int) -> PolyMatrix:
    """Expand t -> t + xi term by term via the binomial series, truncated
    at xi-order ``max_order``.

    For fractional exponents the series is infinite; every discarded term
    has t-degree strictly below (term degree - max_order), which is what
    makes the truncation safe for the sign test in the flow iteration.
    """

    def shift_entry(p: GenPoly) -> GenPoly:
        out = GenPoly.zero()
        for mono, coeff in p.terms():
            powers = dict(mono)
            e = powers.pop(T_VAR, Fraction(0))
            base = GenPoly.monomial(coeff, powers)
            if e.denominator == 1 and e >= 0:
                top = min(max_order, int(e))
            else:
                top = max_order
            binom = Fraction(1)
            for j in range(top + 1):
                term = GenPoly.monomial(binom, {T_VAR: e - j, XI_VAR: j})
                out = out + base * term
                binom = binom * (e - j) / (j + 1)
        return out

    return matrix.map_entries(shift_entry)


def _mat_tdeg(m: PolyMatrix):
    return m.degree_in(T_VAR)


def compute_flow(theta: PolyMatrix) -> FlowResult:
    """Run the exact degree iteration on a rescaled map theta(alpha, t).

    Preconditions: theta is unimodular, nonconstant in t, and at least one
    t-exponent is not an integer (arrange both via ``normalize_exponents``
    followed by ``rescale``).
    """
    tdeg = theta.degree_in(T_VAR)
    if tdeg is NEG_INF or all(
        exp == 0
        for row in theta.entries
        for e in row
        for mono, _ in e.terms()
        for var, exp in mono
        if var == T_VAR
    ):
        raise DomainError("map is constant in t")
    has_fractional = any(
        var == T_VAR and exp.denominator != 1
        for row in theta.entries
        for e in row
        for mono, _ in e.terms()
        for var, exp in mono
    )
    if not has_fractional:
        raise DomainError(
            "no fractional t-exponent present; normalize the box exponents first"
        )

    alpha_vars = tuple(v for v in theta.variables() if v != T_VAR)
    theta_inv = theta.inverse_sl()

    derivs = [theta]

    def deriv(l: int) -> PolyMatrix:
        while len(derivs) <= l:
            derivs.append(derivs[-1].differentiate(T_VAR))
        return derivs[l]

    # first order whose next derivative has every entry of negative t-degree
    d = None
    for l in range(1, _MAX_ORDER):
        dg = _mat_tdeg(deriv(l + 1))
        if dg is not NEG_INF and dg < 0:
            d = l
            break
    if d is None:
        raise BoxflowError("order search exceeded the safety cap")

    def q_of(order: int) -> Fraction:
        best = None
        for l in range(1, order + 1):
            dg = _mat_tdeg(deriv(l) @ theta_inv)
            if dg is NEG_INF:
                continue
            val = Fraction(dg, l)
            if best is None or val > best:
                best = val
        if best is None:
            raise BoxflowError("all derivative cocycles vanished")
        return best

    def shifted_degree_nonnegative(order: int, q: Fraction) -> bool:
        """Sign of the top t-degree of D^{order+1}theta(t+xi) theta^{-1}
        t^{-q(order+1)}, maximized over all (xi, alpha)-coefficients."""
        nxt = deriv(order + 1)
        d_next = _mat_tdeg(nxt)
        d_inv = _mat_tdeg(theta_inv)
        if d_next is NEG_INF or d_inv is NEG_INF:
            return False
        bound = d_next + d_inv - q * (order + 1)
        if bound < 0:
            return False
        shifted = _taylor_shift_t(nxt, int(math.floor(bound)) + 1)
        prod = (shifted @ theta_inv).scale(
            GenPoly.monomial(1, {T_VAR: -q * (order + 1)})
        )
        dg = _mat_tdeg(prod)
        return dg is not NEG_INF and dg >= 0

    q = q_of(d)
    while shifted_degree_nonnegative(d, q):
        d += 1
        if d >= _MAX_ORDER:
            raise BoxflowError("degree iteration exceeded the safety cap")
        q = q_of(d)

    if q <= 0:
        raise BoxflowError(f"critical exponent must be positive, got {q}")

    limits = []
    for l in range(1, d + 1):
        scaled = (deriv(l) @ theta_inv).scale(
            GenPoly.monomial(1, {T_VAR: -q * l})
        )
        rows = []
        for row in scaled.entries:
            out_row = []
            for e in row:
                lim, _ = e.limit_t_to_infinity()
                out_row.append(lim)
            rows.append(out_row)
        limits.append(PolyMatrix(rows))

    locus = tuple(
        e for m in limits for row in m.entries for e in row if not e.is_zero()
    )
    return FlowResult(
        q=q,
        d=d,
        limits=tuple(limits),
        generator=limits[0],
        degenerate_locus=locus,
        alpha_vars=alpha_vars,
    )


def flow_of(result: FlowResult, s_var: str = "s") -> PolyMatrix:
    """The symbolic flow Id + sum_l M_l s^l / l!."""
    n = result.generator.dim
    acc = PolyMatrix.identity(n)
    fact = 1
    for l, m in enumerate(result.limits, start=1):
        fact *= l
        acc = acc + m.scale(GenPoly.monomial(Fraction(1, fact), {s_var: l}))
    return acc


def nilpotent_exp(y: np.ndarray, s: float) -> np.ndarray:
    """exp(s*Y) for nilpotent Y via the finite sum of N terms."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    final = np.linalg.matrix_power(y, n)
    if np.max(np.abs(final)) >= 1e-9:
        raise NilpotencyError(
            f"Y^{n} has max entry {np.max(np.abs(final)):.3e} >= 1e-9"
        )
    acc = np.eye(n)
    term = np.eye(n)
    for j in range(1, n):
        term = term @ (s * y) / j
        acc = acc + term
    return acc


@dataclass(frozen=True)
class GroupLawReport:
    symbolic_ok: bool
    generator_ok: bool
    exp_max_err: float
    trials: int
    failures: tuple

    @property
    def passed(self) -> bool:
        return self.symbolic_ok and self.generator_ok and not self.failures


def group_law_check(result: FlowResult, trials: int = 100, seed: int = 0) -> GroupLawReport:
    """Verify the one-parameter group law of the extracted flow.

    Symbolically: flow(s1 + s2) = flow(s1) @ flow(s2) as an exact matrix
    identity in the alpha variables and (s1, s2).  Numerically: the
    generator exponentiates back to the flow at sampled rational points.
    """
    failures = []
    rho1 = flow_of(result, "s1")
    rho2 = flow_of(result, "s2")
    rho = flow_of(result, "s")
    rho12 = rho.substitute({"s": GenPoly.variable("s1") + GenPoly.variable("s2")})
    symbolic_ok = rho12 == rho1 @ rho2
    if not symbolic_ok:
        failures.append("flow(s1+s2) != flow(s1)@flow(s2) symbolically")

    generator_ok = result.generator == result.limits[0]
    if not generator_ok:
        failures.append("generator differs from M_1")

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x666C6F77]))
    max_err = 0.0
    for i in range(trials):
        point = {
            v: Fraction(int(rng.integers(0, 128)), 127) for v in result.alpha_vars
        }
        s = Fraction(int(rng.integers(-64, 65)), 32)
        floats = {v: float(x) for v, x in point.items()}
        y0 = result.generator.evaluate(floats)
        try:
            exp_val = nilpotent_exp(y0, float(s))
        except NilpotencyError as err:
            failures.append(f"trial {i}: {err}")
            continue
        direct = rho.evaluate({**floats, "s": float(s)})
        err = float(np.max(np.abs(exp_val - direct)))
        max_err = max(max_err, err)
        if err > 1e-9:
            failures.append(
                f"trial {i}: exp(s*Y) deviates from the flow by {err:.3e}"
            )
    return GroupLawReport(
        symbolic_ok=symbolic_ok,
        generator_ok=generator_ok,
        exp_max_err=max_err,
        trials=trials,
        failures=tuple(failures),
    )


def limit_residual(
    theta: PolyMatrix,
    result: FlowResult,
    alpha: Mapping[str, float],
    s: float,
    t: float,
    dps: int = 60,
) -> float:
    """Max-entry deviation of theta(alpha, t + s t^{-q}) theta(alpha, t)^{-1}
    from the limiting flow at s, evaluated at ``dps`` decimal digits."""
    if not t > 0:
        raise DomainError("t must be positive")
    theta_inv = theta.inverse_sl()
    with mpmath.workdps(dps):
        alpha_mp = {k: mpmath.mpf(v) for k, v in alpha.items()}
        t_mp = mpmath.mpf(t)
        s_mp = mpmath.mpf(s)
        q_mp = mpmath.mpf(result.q.numerator) / mpmath.mpf(result.q.denominator)
        t_shift = t_mp + s_mp * mpmath.power(t_mp, -q_mp)
        a = theta.evaluate_mp({**alpha_mp, T_VAR: t_shift})
        b_inv = theta_inv.evaluate_mp({**alpha_mp, T_VAR: t_mp})
        prod = a * b_inv
        rho = flow_of(result).evaluate_mp({**alpha_mp, "s": s_mp})
        dev = mpmath.mpf(0)
        n = theta.dim
        for i in range(n):
            for j in range(n):
                dev = max(dev, abs(prod[i, j] - rho[i, j]))
        return float(dev)


# ---------------------------------------------------------------------------
# two-variable maps: joint expansion in (x, y)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoDimFlowResult:
    """Flow data of a two-variable map expanded first in x, then in y.

    lambda_of_y is the nilpotent generator as a polynomial matrix in y;
    lambda0 its leading y-coefficient; p the y-degree of the derivative
    cocycle; any box family with the x-side growing faster than the
    y-side to the power b keeps the flow nondegenerate.
    """

    q: Fraction
    d0: int
    lambda_of_y: PolyMatrix
    d: int
    lambda0: PolyMatrix
    p: int
    b: Fraction
    ratio_set: tuple
    dominant_ratio: Optional[tuple]
    x_var: str
    y_var: str

    def flow(self, s_var: str = "s") -> PolyMatrix:
        """exp(s * lambda0), exact (lambda0 is nilpotent with rational
        entries)."""
        n = self.lambda0.dim
        acc = PolyMatrix.identity(n)
        term = PolyMatrix.identity(n)
        for j in range(1, n):
            term = (term @ self.lambda0).scale(
                GenPoly.monomial(Fraction(1, j), {s_var: 1})
            )
            acc = acc + term
        return acc


def twodim_flow(theta_map: PolyMatrix, x_var: str = "x", y_var: str = "y") -> TwoDimFlowResult:
    """Extract (q, lambda(y), d, lambda0, p, b, ratio set) from a
    two-variable unimodular map with positive x-degree."""
    d0 = theta_map.degree_in(x_var)
    if d0 is NEG_INF or d0 <= 0:
        raise DomainError("map must have positive x-degree")
    d0 = int(d0)
    at_zero = theta_map.substitute(
        {x_var: GenPoly.zero(), y_var: GenPoly.zero()}
    )
    if at_zero != PolyMatrix.identity(theta_map.dim):
        raise DomainError("map must equal the identity at the origin")

    # route the x-direction through the distinguished Laurent variable
    work = theta_map.substitute({x_var: GenPoly.variable(T_VAR)})
    work_inv = work.inverse_sl()

    derivs = [work]
    for _ in range(d0):
        derivs.append(derivs[-1].differentiate(T_VAR))

    q = None
    for l in range(1, d0 + 1):
        dg = (derivs[l] @ work_inv).degree_in(T_VAR)
        if dg is NEG_INF:
            continue
        val = Fraction(dg, l)
        if q is None or val > q:
            q = val
    if q is None:
        raise BoxflowError("derivative cocycle vanished identically")
    q = max(q, Fraction(0))

    cocycle = derivs[1] @ work_inv
    scaled = cocycle.scale(GenPoly.monomial(1, {T_VAR: -q}))
    rows = []
    for row in scaled.entries:
        rows.append([e.limit_t_to_infinity()[0] for e in row])
    lam_y = PolyMatrix(rows)
    if lam_y.is_zero():
        raise BoxflowError("flow generator vanished; extraction failed")

    d_deg = lam_y.degree_in(y_var)
    d = int(d_deg) if d_deg is not NEG_INF else 0
    lambda0 = lam_y.map_entries(lambda e: e.coefficient_of(y_var, d))
    if lambda0.is_zero():
        raise BoxflowError("leading coefficient of the generator vanished")
    n = lambda0.dim
    power = lambda0
    for _ in range(n - 1):
        power = power @ lambda0
    if not power.is_zero():
        raise NilpotencyError("generator leading coefficient is not nilpotent")

    p_deg = cocycle.degree_in(y_var)
    p = int(p_deg) if p_deg is not NEG_INF else 0
    b = Fraction(p + 1)

    ratios = set()
    for row in scaled.entries:
        for e in row:
            for mono, _ in e.terms():
                powers = dict(mono)
                r = -powers.get(T_VAR, Fraction(0))
                t_exp = powers.get(y_var, Fraction(0))
                if r != 0 and t_exp >= 0:
                    ratios.add((t_exp, r))
    ratio_set = tuple(sorted(ratios))
    dominant = None
    if ratio_set:
        dominant = max(ratio_set, key=lambda tr: (Fraction(tr[0], tr[1]), tr))

    return TwoDimFlowResult(
        q=q,
        d0=d0,
        lambda_of_y=lam_y,
        d=d,
        lambda0=lambda0,
        p=p,
        b=b,
        ratio_set=ratio_set,
        dominant_ratio=dominant,
        x_var=x_var,
        y_var=y_var,
    )


def twodim_residual(
    theta_map: PolyMatrix,
    result: TwoDimFlowResult,
    s: float,
    x: float,
    y: float,
    dps: int = 60,
) -> float:
    """Deviation between flow(s) @ theta(x, y) and
    theta(x + s y^{-d} x^{-q}, y) in the right-invariant sense: both sides
    are translated back by theta(x, y)^{-1}, which turns the comparison
    into max-entry distance between the shift cocycle and the flow."""
    if not (x > 0 and y > 0):
        raise DomainError("x and y must be positive")
    theta_inv = theta_map.inverse_sl()
    with mpmath.workdps(dps):
        x_mp, y_mp, s_mp = mpmath.mpf(x), mpmath.mpf(y), mpmath.mpf(s)
        q_mp = mpmath.mpf(result.q.numerator) / mpmath.mpf(result.q.denominator)
        x_shift = x_mp + s_mp * mpmath.power(y_mp, -result.d) * mpmath.power(
            x_mp, -q_mp
        )
        a = theta_map.evaluate_mp({result.x_var: x_shift, result.y_var: y_mp})
        base_inv = theta_inv.evaluate_mp({result.x_var: x_mp, result.y_var: y_mp})
        cocycle = a * base_inv
        rho = result.flow().evaluate_mp({"s": s_mp})
        dev = mpmath.mpf(0)
        n = theta_map.dim
        for i in range(n):
            for j in range(n):
                dev = max(dev, abs(cocycle[i, j] - rho[i, j]))
        return float(dev)
