"""The space of unimodular lattices in dimension 2 and 3: reduction,
Siegel-transform observables, Haar references, and compactness tests.

Observables are Siegel transforms g -> sum over nonzero v in Z^N of
f(g v) for compactly supported radial f; their Haar integral is the
plain integral of f over R^N, which gives the equidistribution
experiments a closed-form reference.

The batch helpers at the bottom vectorize the dimension-2 pipeline
(reduction + enumeration) over large sample arrays; per-sample results
are identical to the scalar path, which keeps grid averages independent
of how work is partitioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np
from scipy.integrate import quad

from .errors import CuspExcursionError, DeterminantError, DomainError

DET_TOL = 1e-9
CUSP_GUARD = 1e-6

INDICATOR_BALL = "indicator"
SMOOTH_BUMP = "bump"


@dataclass(frozen=True)
class TestFunction:
    """Radial compactly supported profile inducing a Siegel observable."""

    kind: str
    radius: float

    def __post_init__(self):
        if self.kind not in (INDICATOR_BALL, SMOOTH_BUMP):
            raise DomainError(f"unknown test function kind {self.kind!r}")
        if self.radius <= 0:
            raise DomainError("radius must be positive")

    @property
    def name(self) -> str:
        return f"siegel:{self.kind}:{self.radius:g}"

    def profile(self, r):
        """Radial profile value(s); vanishes for r > radius."""
        r = np.asarray(r, dtype=float)
        if self.kind == INDICATOR_BALL:
            return (r <= self.radius).astype(float)
        inside = np.clip(1.0 - (r / self.radius) ** 2, 0.0, None)
        return inside ** 2


def parse_observable(text: str) -> TestFunction:
    """Parse names of the form siegel:indicator:R or siegel:bump:R."""
    parts = text.split(":")
    if len(parts) != 3 or parts[0] != "siegel":
        raise DomainError(f"malformed observable {text!r}")
    return TestFunction(kind=parts[1], radius=float(parts[2]))


@dataclass(frozen=True)
class UnimodularLattice:
    """A point of the space of covolume-1 lattices with a cached reduced
    basis (columns) and its shortest length."""

    g: np.ndarray
    reduced: np.ndarray
    shortest: float

    @property
    def dim(self) -> int:
        return self.g.shape[0]


def _check_det(g: np.ndarray) -> None:
    det = float(np.linalg.det(g))
    if abs(det - 1.0) > DET_TOL:
        raise DeterminantError(f"{det:.12g}")


def reduce_basis(g) -> UnimodularLattice:
    """Reduce the column basis: Lagrange swap/shift for N=2, size-reduction
    sweeps with length sorting for N=3.  The change of basis is integer
    unimodular, so the lattice is unchanged."""
    g = np.asarray(g, dtype=float)
    if g.shape not in ((2, 2), (3, 3)):
        raise DomainError("only dimensions 2 and 3 are supported")
    _check_det(g)
    n = g.shape[0]
    basis = g.copy()
    if n == 2:
        u, v = basis[:, 0].copy(), basis[:, 1].copy()
        for _ in range(256):
            if u @ u > v @ v:
                u, v = v, u
            mu = round((u @ v) / (u @ u))
            if mu == 0:
                break
            v = v - mu * u
        else:
            raise DomainError("lattice reduction did not converge")
        reduced = np.column_stack([u, v])
    else:
        reduced = basis
        for _ in range(256):
            before = reduced.copy()
            order = np.argsort([reduced[:, i] @ reduced[:, i] for i in range(3)],
                               kind="stable")
            reduced = reduced[:, order]
            for i in range(3):
                for j in range(3):
                    if i == j:
                        continue
                    denom = reduced[:, i] @ reduced[:, i]
                    mu = round((reduced[:, i] @ reduced[:, j]) / denom)
                    if mu:
                        reduced[:, j] = reduced[:, j] - mu * reduced[:, i]
            if np.array_equal(before, reduced):
                break
        else:
            raise DomainError("lattice reduction did not converge")
        order = np.argsort([reduced[:, i] @ reduced[:, i] for i in range(3)],
                           kind="stable")
        reduced = reduced[:, order]
    lam1_sq = float(reduced[:, 0] @ reduced[:, 0])
    if n == 3:
        # size-reduction alone does not certify the first vector shortest;
        # small-coefficient enumeration over the reduced basis does
        rng = range(-2, 3)
        for c1 in rng:
            for c2 in rng:
                for c3 in rng:
                    if c1 == c2 == c3 == 0:
                        continue
                    v = c1 * reduced[:, 0] + c2 * reduced[:, 1] + c3 * reduced[:, 2]
                    lam1_sq = min(lam1_sq, float(v @ v))
    return UnimodularLattice(g=g, reduced=reduced, shortest=math.sqrt(lam1_sq))


def shortest_vector_length(lattice: UnimodularLattice) -> float:
    return lattice.shortest


def in_compact(lattice: UnimodularLattice, eps0: float) -> bool:
    """Mahler-type compactness test: shortest vector at least eps0."""
    return lattice.shortest >= eps0


def _gram_schmidt(basis: np.ndarray):
    n = basis.shape[1]
    ortho = basis.astype(float).copy()
    mu = np.eye(n)
    for j in range(n):
        for i in range(j):
            denom = ortho[:, i] @ ortho[:, i]
            mu[i, j] = (basis[:, j] @ ortho[:, i]) / denom
            ortho[:, j] = ortho[:, j] - mu[i, j] * ortho[:, i]
    return ortho, mu


def siegel_transform(lattice: UnimodularLattice, f: TestFunction) -> float:
    """Sum of the profile over all nonzero lattice vectors of length at
    most the support radius, enumerated with coefficient bounds from the
    orthogonalized reduced basis."""
    if lattice.shortest < CUSP_GUARD:
        raise CuspExcursionError(
            f"shortest vector {lattice.shortest:.3e} below the enumeration guard"
        )
    basis = lattice.reduced
    n = basis.shape[1]
    ortho, mu = _gram_schmidt(basis)
    ortho_norms = np.sqrt(np.sum(ortho * ortho, axis=0))
    r = f.radius
    total = 0.0
    coeffs = [0] * n

    def recurse(level: int, partial: np.ndarray, budget: float) -> None:
        nonlocal total
        if level < 0:
            norm = float(np.linalg.norm(partial))
            if 0 < norm <= r:
                total += float(f.profile(norm))
            return
        # offset of the level coordinate induced by already fixed coeffs
        shift = sum(mu[level, j] * coeffs[j] for j in range(level + 1, n))
        half = math.sqrt(budget) / ortho_norms[level]
        lo = math.ceil(-half - shift - 1e-12)
        hi = math.floor(half - shift + 1e-12)
        for c in range(lo, hi + 1):
            coeffs[level] = c
            used = (c + shift) ** 2 * ortho_norms[level] ** 2
            recurse(
                level - 1,
                partial + c * basis[:, level],
                max(budget - used, 0.0) + 1e-12,
            )
        coeffs[level] = 0

    recurse(n - 1, np.zeros(n), r * r)
    return total


def haar_expectation(f: TestFunction, n: int) -> float:
    """Integral of the profile over R^n - the Haar reference value of the
    Siegel observable."""
    if n not in (2, 3):
        raise DomainError("only dimensions 2 and 3 are supported")
    if f.kind == INDICATOR_BALL:
        if n == 2:
            return math.pi * f.radius ** 2
        return 4.0 / 3.0 * math.pi * f.radius ** 3
    surface = 2 * math.pi if n == 2 else 4 * math.pi
    integrand = lambda r: float(f.profile(r)) * r ** (n - 1)
    val, _ = quad(integrand, 0.0, f.radius, epsabs=1e-12, epsrel=1e-10)
    return surface * val


def haar_sample(n: int, seed: int) -> list:
    """I.i.d. Haar-distributed unimodular lattices in dimension 2.

    Each sample draws from its own seed-derived stream: the hyperbolic
    coordinate (x, y) by rejection from {|x| <= 1/2, y >= sqrt(3)/2} with
    density proportional to y^-2 (draw x, then y by inverse CDF, accept
    when x^2 + y^2 >= 1), then a uniform rotation angle.
    """
    if n < 1:
        raise DomainError("need at least one sample")
    out = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        while True:
            x = rng.random() - 0.5
            y = (math.sqrt(3) / 2) / (1.0 - rng.random())
            if x * x + y * y >= 1.0:
                break
        phi = 2.0 * math.pi * rng.random()
        sy = math.sqrt(y)
        frame = np.array([[1.0 / sy, x / sy], [0.0, sy]])
        rot = np.array(
            [[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]]
        )
        out.append(reduce_basis(rot @ frame))
    return out


# ---------------------------------------------------------------------------
# vectorized dimension-2 pipeline
# ---------------------------------------------------------------------------

# sup of lambda_1 over unimodular planar lattices (Hermite's bound)
_LAM1_MAX = (4.0 / 3.0) ** 0.25
_EASY_LAM1 = 0.2


def sl2_reduce_batch(mats: np.ndarray):
    """Lagrange-reduce a batch of column bases.  Returns (b1, b2, lam1)
    with b1 the shortest basis vector per sample.

    Iterates on the shrinking set of unreduced samples; per-sample results
    match the scalar path exactly."""
    m = mats.shape[0]
    u = mats[:, :, 0].copy()
    v = mats[:, :, 1].copy()
    idx = np.arange(m)
    for _ in range(256):
        if idx.size == 0:
            break
        au, av = u[idx], v[idx]
        uu = np.sum(au * au, axis=1)
        vv = np.sum(av * av, axis=1)
        swap = uu > vv
        if swap.any():
            tmp = au[swap].copy()
            au[swap] = av[swap]
            av[swap] = tmp
            uu = np.sum(au * au, axis=1)
        mu = np.round(np.sum(au * av, axis=1) / uu)
        av -= mu[:, None] * au
        u[idx] = au
        v[idx] = av
        idx = idx[mu != 0]
    else:
        if idx.size:
            raise DomainError("batch reduction did not converge")
    lam1 = np.sqrt(np.sum(u * u, axis=1))
    return u, v, lam1


def siegel_batch(b1: np.ndarray, b2: np.ndarray, lam1: np.ndarray, f: TestFunction):
    """Siegel observable over a batch of reduced bases.

    Samples with lambda_1 above a fixed threshold go through one shared
    candidate grid of integer coefficient pairs; the rare near-cusp
    samples fall back to the scalar enumeration.  Samples under the
    enumeration guard are flagged excluded and contribute zero.
    """
    m = b1.shape[0]
    values = np.zeros(m)
    excluded = lam1 < CUSP_GUARD
    easy = lam1 >= _EASY_LAM1
    r = f.radius
    # |c2| <= R ||b1|| <= R * Hermite bound; |c1| <= R/lam1 + |mu| |c2|
    c2_max = int(math.floor(_LAM1_MAX * r * (1.0 + 1e-9)))
    c1_max = int(math.ceil(r / _EASY_LAM1 + 0.5001 * c2_max))
    e1x, e1y = b1[easy, 0], b1[easy, 1]
    e2x, e2y = b2[easy, 0], b2[easy, 1]
    acc = np.zeros(e1x.shape[0])
    r2 = r * r
    for c1 in range(-c1_max, c1_max + 1):
        for c2 in range(-c2_max, c2_max + 1):
            if c1 == 0 and c2 == 0:
                continue
            wx = c1 * e1x + c2 * e2x
            wy = c1 * e1y + c2 * e2y
            n2 = wx * wx + wy * wy
            inside = n2 <= r2
            if f.kind == INDICATOR_BALL:
                acc += inside
            else:
                acc += np.where(
                    inside, (1.0 - np.minimum(n2, r2) / r2) ** 2, 0.0
                )
    values[easy] = acc
    hard = ~easy & ~excluded
    for idx in np.nonzero(hard)[0]:
        lattice = UnimodularLattice(
            g=np.column_stack([b1[idx], b2[idx]]),
            reduced=np.column_stack([b1[idx], b2[idx]]),
            shortest=float(lam1[idx]),
        )
        values[idx] = siegel_transform(lattice, f)
    return values, excluded
