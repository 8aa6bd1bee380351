"""Measure growth of polynomial sublevel sets on boxes.

Implements the sublevel inequality |{|f| < delta}| <= C (delta/sup|f|)^a |B|
with grid-based measure estimates, the sup-extension bound it implies, a
greedy bounded-multiplicity cube covering, and the relative-size
neighborhood construction used to control trajectories near a polynomial
variety.

Functions evaluated on grids follow one calling convention: ``f(points)``
takes an (m, k) array of row points and returns an (m,) array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError
from .polyalg import NEG_INF, GenPoly


@dataclass(frozen=True)
class BoxRegion:
    """Axis-parallel box given by corner vectors, lower < upper."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise DomainError("corner dimensions differ")
        if not all(l < u for l, u in zip(self.lower, self.upper)):
            raise DomainError("box needs lower < upper on every axis")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        vol = 1.0
        for l, u in zip(self.lower, self.upper):
            vol *= u - l
        return vol

    def contains(self, box: "BoxRegion") -> bool:
        return all(
            sl <= ol and ou <= su
            for sl, su, ol, ou in zip(self.lower, self.upper, box.lower, box.upper)
        )

    def corner_grid(self, n: int) -> np.ndarray:
        """Tensor grid with n points per axis, endpoints included."""
        axes = [np.linspace(l, u, n) for l, u in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def midpoint_grid(self, n: int) -> np.ndarray:
        """Tensor grid of the n^k cell midpoints."""
        axes = [
            l + (u - l) * (np.arange(n) + 0.5) / n
            for l, u in zip(self.lower, self.upper)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def cell_volume(self, n: int) -> float:
        return self.volume / float(n) ** self.dim


def poly_grid_fn(p: GenPoly, var_order: Sequence[str]) -> Callable:
    """Vectorized evaluator for a polynomial with integer exponents."""
    var_order = list(var_order)
    terms = []
    for mono, coeff in p.terms():
        powers = dict(mono)
        exps = []
        for v in var_order:
            e = powers.pop(v, Fraction(0))
            if e.denominator != 1 or e < 0:
                raise DomainError("grid evaluation needs nonnegative integer exponents")
            exps.append(int(e))
        if powers:
            raise DomainError(f"unbound variables {sorted(powers)} in grid function")
        terms.append((float(coeff), exps))

    def fn(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(points.shape[0])
        for coeff, exps in terms:
            val = np.full(points.shape[0], coeff)
            for j, e in enumerate(exps):
                if e:
                    val = val * points[:, j] ** e
            out += val
        return out

    return fn


def sup_norm(f: Callable, box: BoxRegion, grid: int) -> float:
    """Max |f| over the corner-inclusive tensor grid (a lower bound on the
    true sup)."""
    if grid < 2:
        raise DomainError("need at least 2 grid points per axis")
    return float(np.max(np.abs(f(box.corner_grid(grid)))))


def sublevel_measure(f: Callable, box: BoxRegion, delta: float, grid: int) -> float:
    """Midpoint tensor-grid estimate of |{x in B : |f(x)| < delta}|."""
    vals = np.abs(f(box.midpoint_grid(grid)))
    return float(np.count_nonzero(vals < delta)) * box.cell_volume(grid)


def sublevel_measure_mc(
    f: Callable, box: BoxRegion, delta: float, samples: int, seed: int
) -> float:
    """Monte Carlo alternative with a 99% Clopper-Pearson upper pad, so the
    estimate errs on the safe side of the inequality."""
    from scipy.stats import beta

    lows = np.array(box.lower)
    spans = np.array(box.upper) - lows
    pts = np.empty((samples, box.dim))
    for i in range(samples):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        pts[i] = lows + spans * rng.random(box.dim)
    hits = int(np.count_nonzero(np.abs(f(pts)) < delta))
    if hits == samples:
        upper = 1.0
    else:
        upper = float(beta.ppf(0.995, hits + 1, samples - hits))
    return upper * box.volume


@dataclass(frozen=True)
class GoodCheck:
    holds: bool
    lhs: float
    rhs: float
    slack: float


def good_inequality_check(
    f: Callable,
    box: BoxRegion,
    delta: float,
    c: float,
    alpha,
    grid: int,
    mc_samples: Optional[int] = None,
    seed: int = 0,
) -> GoodCheck:
    """Test |{|f| < delta}| <= C (delta / sup|f|)^alpha |B| on a grid.

    The right-hand side gets the documented grid slack 2k/grid to absorb
    cell-boundary effects of the midpoint estimate.
    """
    if delta <= 0:
        raise DomainError("delta must be positive")
    if c < 1:
        raise DomainError("C must be at least 1")
    fnorm = sup_norm(f, box, grid)
    if fnorm == 0:
        raise DomainError("sup norm vanishes; inequality is vacuous")
    if mc_samples:
        lhs = sublevel_measure_mc(f, box, delta, mc_samples, seed)
    else:
        lhs = sublevel_measure(f, box, delta, grid)
    rhs = c * (delta / fnorm) ** float(alpha) * box.volume
    slack = 2.0 * box.dim / grid
    return GoodCheck(holds=lhs <= rhs * (1.0 + slack), lhs=lhs, rhs=rhs, slack=slack)


def fit_min_c(
    f: Callable, box: BoxRegion, alpha, delta_grid: Sequence[float], grid: int
) -> float:
    """Empirical minimal constant: max over the delta grid of
    lhs / ((delta/sup|f|)^alpha |B|).

    The function values are evaluated once; sublevel counts for all deltas
    come from a sorted search, identical to per-delta midpoint estimates.
    """
    if len(delta_grid) == 0:
        raise DomainError("need a nonempty delta grid")
    fnorm = sup_norm(f, box, grid)
    if fnorm == 0:
        raise DomainError("sup norm vanishes")
    vals = np.sort(np.abs(f(box.midpoint_grid(grid))))
    cell = box.cell_volume(grid)
    deltas = np.asarray(delta_grid, dtype=float)
    counts = np.searchsorted(vals, deltas, side="left")
    ratios = counts * cell / ((deltas / fnorm) ** float(alpha) * box.volume)
    return float(np.max(ratios))


def transfer_delta_grid(alpha, slack: float, lo: float = 0.005,
                        hi: float = 0.9) -> np.ndarray:
    """Log-spaced relative deltas dense enough that the sublevel ratio can
    drift at most by the grid slack between neighbors: spacing r satisfies
    r^alpha <= 1 + slack."""
    r = (1.0 + slack) ** (1.0 / float(alpha))
    n = max(2, int(math.ceil(math.log(hi / lo) / math.log(r))) + 1)
    return np.geomspace(lo, hi, n)


@dataclass(frozen=True)
class GoodCertificate:
    """Sublevel-growth certificate for a polynomial on a box."""

    c: float
    alpha: Fraction
    delta_grid: tuple
    lhs: tuple
    rhs: tuple

    @property
    def holds_everywhere(self) -> bool:
        return all(l <= r for l, r in zip(self.lhs, self.rhs))


def certify_polynomial(
    p: GenPoly,
    box: BoxRegion,
    var_order: Sequence[str],
    degree_bound: int,
    delta_grid: Sequence[float],
    grid: int = 200,
) -> GoodCertificate:
    """Fit the constant on the delta grid for a degree-bounded polynomial,
    with the exponent pinned to 1/(k*l)."""
    k = len(var_order)
    alpha = Fraction(1, k * degree_bound)
    f = poly_grid_fn(p, var_order)
    c = max(1.0, fit_min_c(f, box, alpha, delta_grid, grid))
    lhs, rhs = [], []
    fnorm = sup_norm(f, box, grid)
    for delta in delta_grid:
        lhs.append(sublevel_measure(f, box, delta, grid))
        rhs.append(c * (delta / fnorm) ** float(alpha) * box.volume)
    return GoodCertificate(
        c=c, alpha=alpha, delta_grid=tuple(delta_grid), lhs=tuple(lhs), rhs=tuple(rhs)
    )


def sup_extension(
    f: Callable,
    box: BoxRegion,
    sub: BoxRegion,
    r: float,
    c: float,
    alpha,
    grid: int,
) -> float:
    """From sup < R on a positive-measure sub-box, bound the sup on the
    whole box by R' = C^(1/a) * R * (|E| / |E'|)^(1/a); verified on the grid."""
    if not box.contains(sub):
        raise DomainError("sub-region must lie inside the box")
    sup_sub = sup_norm(f, sub, grid)
    if not sup_sub < r:
        raise DomainError(f"precondition fails: sup over sub-region {sup_sub} >= {r}")
    a = float(alpha)
    r_prime = c ** (1.0 / a) * r * (box.volume / sub.volume) ** (1.0 / a)
    sup_full = sup_norm(f, box, grid)
    if not sup_full < r_prime:
        raise DomainError(
            f"extension bound violated on the grid: {sup_full} >= {r_prime}"
        )
    return r_prime


# ---------------------------------------------------------------------------
# bounded-multiplicity cube covering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CubeCover:
    centers: np.ndarray         # (m, k) selected cube centers
    halfwidths: np.ndarray      # (m,) selected half-widths
    covered: bool               # every input point lies in a selected cube
    max_multiplicity: int       # measured on the probe grid and inputs
    multiplicity_histogram: dict
    configured_bound: int

    @property
    def within_bound(self) -> bool:
        return self.max_multiplicity <= self.configured_bound


def besicovitch_select(
    centers: Sequence[Sequence[float]],
    halfwidths: Sequence[float],
    bound: Optional[int] = None,
    probe_grid: int = 12,
) -> CubeCover:
    """Greedy covering: scan cubes by decreasing half-width (ties in input
    order) and keep one only if its center is not yet covered.

    Every input point ends up covered - skipped centers lie in an already
    selected cube.  Multiplicity is measured on a probe grid over the
    bounding box plus all input centers, against the configured bound
    (default 2^k + 1).
    """
    pts = np.atleast_2d(np.asarray(centers, dtype=float))
    hws = np.asarray(halfwidths, dtype=float)
    if pts.shape[0] == 0:
        raise DomainError("need at least one cube")
    if pts.shape[0] != hws.shape[0]:
        raise DomainError("one half-width per center is required")
    if np.any(hws <= 0):
        raise DomainError("half-widths must be positive")
    k = pts.shape[1]
    if bound is None:
        bound = 2 ** k + 1

    order = sorted(range(len(hws)), key=lambda i: (-hws[i], i))
    sel_idx = []
    for i in order:
        covered = False
        for j in sel_idx:
            if np.max(np.abs(pts[i] - pts[j])) <= hws[j]:
                covered = True
                break
        if not covered:
            sel_idx.append(i)
    sel_centers = pts[sel_idx]
    sel_hws = hws[sel_idx]

    # coverage of all inputs (closed cubes)
    dist = np.max(np.abs(pts[:, None, :] - sel_centers[None, :, :]), axis=2)
    covered_all = bool(np.all(np.any(dist <= sel_hws[None, :], axis=1)))

    lo = np.min(pts - hws[:, None], axis=0)
    hi = np.max(pts + hws[:, None], axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    axes = [np.linspace(lo[d], hi[d], probe_grid) for d in range(k)]
    mesh = np.meshgrid(*axes, indexing="ij")
    probes = np.stack([m.ravel() for m in mesh], axis=-1)
    probes = np.concatenate([probes, pts], axis=0)
    pdist = np.max(np.abs(probes[:, None, :] - sel_centers[None, :, :]), axis=2)
    mult = np.sum(pdist <= sel_hws[None, :], axis=1)
    hist_vals, hist_counts = np.unique(mult, return_counts=True)
    return CubeCover(
        centers=sel_centers,
        halfwidths=sel_hws,
        covered=covered_all,
        max_multiplicity=int(np.max(mult)),
        multiplicity_histogram={int(v): int(c) for v, c in zip(hist_vals, hist_counts)},
        configured_bound=bound,
    )


# ---------------------------------------------------------------------------
# relative-size neighborhoods of a polynomial variety
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegionSpec:
    """Neighborhood {v : |v| < (r + beta) * norm_scale,
    |P(v)| < beta * poly_scale} of the variety {P = 0}."""

    norm_scale: float
    poly_scale: float


@dataclass(frozen=True)
class NeighborhoodSpec:
    delta: float
    d_radius: float
    r: float
    alpha: float
    variety: GenPoly
    variety_vars: tuple
    phi: RegionSpec
    psi: RegionSpec

    def membership(self, vectors: np.ndarray, region: RegionSpec, beta: float):
        """Vectorized membership of row vectors in a region."""
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        norms = np.linalg.norm(vectors, axis=1)
        pvals = np.abs(poly_grid_fn(self.variety, self.variety_vars)(vectors))
        return (norms < (self.r + beta) * region.norm_scale) & (
            pvals < beta * region.poly_scale
        )


def relative_size_neighborhoods(
    variety: GenPoly,
    variety_vars: Sequence[str],
    r: float,
    eps: float,
    k: int,
    l: int,
    c: float,
    n_cover: int,
    alpha=None,
) -> NeighborhoodSpec:
    """Construct delta = (eps / (c * N))^(1/alpha), the dilated radius
    r/sqrt(delta), and the nested neighborhood pair (Psi inside Phi).

    alpha defaults to 1/(2*m*l*k) with m the degree bound of the variety
    polynomial; an explicit alpha overrides it (the degenerate limiting
    cases exercise values the default formula cannot reach).
    """
    if not 0 < eps < 1:
        raise DomainError("eps must lie strictly between 0 and 1")
    if r <= 0 or c <= 0 or n_cover < 1:
        raise DomainError("r, c must be positive and the cover bound >= 1")
    if alpha is None:
        m = 0
        for v in variety_vars:
            d = variety.degree_in(v)
            if d is not NEG_INF:
                m = max(m, int(d))
        if m == 0:
            raise DomainError("variety polynomial must be nonconstant")
        alpha = Fraction(1, 2 * m * l * k)
    a = float(alpha)
    delta = (eps / (c * n_cover)) ** (1.0 / a)
    return NeighborhoodSpec(
        delta=delta,
        d_radius=r / math.sqrt(delta),
        r=r,
        alpha=a,
        variety=variety,
        variety_vars=tuple(variety_vars),
        phi=RegionSpec(norm_scale=1.0 / math.sqrt(delta), poly_scale=1.0),
        psi=RegionSpec(norm_scale=1.0, poly_scale=delta),
    )


class RelSizeStatus(Enum):
    HOLDS = "holds"
    FAILS = "fails"
    VACUOUS = "vacuous"


@dataclass(frozen=True)
class RelSizeCheck:
    status: RelSizeStatus
    lhs: float
    rhs: float
    eps: float


def orbit_vector_fn(theta_map, map_vars: Sequence[str], v0: Sequence[float]) -> Callable:
    """Vectorized x -> theta(x) v0 for a polynomial matrix."""
    entry_fns = [
        [poly_grid_fn(e, map_vars) for e in row] for row in theta_map.entries
    ]
    v0 = np.asarray(v0, dtype=float)

    def fn(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros((points.shape[0], len(entry_fns)))
        for i, row in enumerate(entry_fns):
            for j, entry in enumerate(row):
                if v0[j] != 0:
                    out[:, i] += entry(points) * v0[j]
        return out

    return fn


def relative_size_check(
    theta_map,
    map_vars: Sequence[str],
    v0: Sequence[float],
    box: BoxRegion,
    spec: NeighborhoodSpec,
    beta: float,
    eps: float,
    grid: int,
) -> RelSizeCheck:
    """Grid comparison
    |{x : theta(x) v0 in Psi}| <= eps * |{x : theta(x) v0 in Phi}|.

    If no grid point leaves Phi the hypothesis fails and the verdict is
    VACUOUS, not a pass.
    """
    pts = box.midpoint_grid(grid)
    vecs = orbit_vector_fn(theta_map, map_vars, v0)(pts)
    in_phi = spec.membership(vecs, spec.phi, beta)
    in_psi = spec.membership(vecs, spec.psi, beta)
    if bool(np.all(in_phi)):
        return RelSizeCheck(RelSizeStatus.VACUOUS, float("nan"), float("nan"), eps)
    cell = box.cell_volume(grid)
    lhs = float(np.count_nonzero(in_psi)) * cell
    rhs = eps * float(np.count_nonzero(in_phi)) * cell
    status = RelSizeStatus.HOLDS if lhs <= rhs else RelSizeStatus.FAILS
    return RelSizeCheck(status, lhs, rhs, eps)
