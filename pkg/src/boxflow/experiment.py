"""Numerical sweeps: Birkhoff averages of lattice observables over
expanding boxes and subboxes, nondivergence fractions, and the
two-variable box-exponent experiments.

Averages use deterministic midpoint tensor grids (the statements being
checked are Riemann integrals); a seeded Monte Carlo mode with per-index
streams is available for high dimension.  Work is partitioned into
fixed-size chunks evaluated independently per sample, so results are
bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .catalog import MapEntry
from .errors import CuspExcursionError, DomainError
from .flowlimit import twodim_flow, twodim_residual
from .goodness import BoxRegion, poly_grid_fn
from .homspace import (
    CUSP_GUARD,
    TestFunction,
    haar_expectation,
    reduce_basis,
    siegel_batch,
    siegel_transform,
    sl2_reduce_batch,
)

_CHUNK = 1 << 16
_EXCLUSION_BUDGET = 1e-3


@dataclass(frozen=True)
class BoxSpec:
    """Box family member: realized region {(a_1 T^l1, ..., a_k T^lk)} for
    a in the subbox J of the unit cube (J = None means the full cube)."""

    lam: tuple
    T: float
    grid: int
    J: Optional[BoxRegion] = None

    def __post_init__(self):
        if self.grid < 8:
            raise DomainError("need at least 8 grid points per axis")
        if self.T <= 0:
            raise DomainError("box parameter must be positive")
        if self.J is not None:
            k = len(self.lam)
            unit = BoxRegion((0.0,) * k, (1.0,) * k)
            if self.J.dim != k or not unit.contains(self.J):
                raise DomainError("J must be a subbox of the unit cube")

    @property
    def k(self) -> int:
        return len(self.lam)

    def realized_region(self) -> BoxRegion:
        scales = [float(self.T) ** float(l) for l in self.lam]
        if self.J is None:
            lower = (0.0,) * self.k
            upper = tuple(scales)
        else:
            lower = tuple(j * s for j, s in zip(self.J.lower, scales))
            upper = tuple(j * s for j, s in zip(self.J.upper, scales))
        return BoxRegion(lower, upper)


# ---------------------------------------------------------------------------
# chunked grid evaluation
# ---------------------------------------------------------------------------


_SPLITMIX_GAMMA = np.uint64(0x9E3779B97F4A7C15)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer; wrapping uint64 arithmetic throughout."""
    with np.errstate(over="ignore"):
        z = x + _SPLITMIX_GAMMA
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def _index_uniform(seed: int, axis: int, idx: np.ndarray) -> np.ndarray:
    """Uniform [0, 1) draw per sample index from a stable integer hash of
    (seed, axis, index); independent of chunking and worker count."""
    base = _splitmix64(
        np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ (np.uint64(axis) << np.uint64(32))
    )
    bits = _splitmix64(idx.astype(np.uint64) ^ base)
    return (bits >> np.uint64(11)) * 2.0 ** -53


def _chunk_points(region: BoxRegion, grid: int, start: int, stop: int,
                  method: str, seed: int) -> np.ndarray:
    k = region.dim
    idx = np.arange(start, stop)
    lows = np.array(region.lower)
    spans = np.array(region.upper) - lows
    if method == "grid":
        multi = np.stack(np.unravel_index(idx, (grid,) * k), axis=-1)
        return lows + spans * (multi + 0.5) / grid
    if method == "jitter":
        # stratified: one uniform point per grid cell, seed-derived
        multi = np.stack(np.unravel_index(idx, (grid,) * k), axis=-1)
        offs = np.stack([_index_uniform(seed, a, idx) for a in range(k)], axis=-1)
        return lows + spans * (multi + offs) / grid
    if method == "mc":
        offs = np.stack([_index_uniform(seed, a, idx) for a in range(k)], axis=-1)
        return lows + spans * offs
    raise DomainError(f"unknown sampling method {method!r}")


def _eval_chunk(args):
    (matrix, map_vars, region, grid, f, mode, start, stop, method, seed) = args
    pts = _chunk_points(region, grid, start, stop, method, seed)
    n = matrix.dim
    m = pts.shape[0]
    entry_fns = [
        [poly_grid_fn(e, map_vars) for e in row] for row in matrix.entries
    ]
    mats = np.empty((m, n, n))
    for i in range(n):
        for j in range(n):
            mats[:, i, j] = entry_fns[i][j](pts)
    if n == 2:
        b1, b2, lam1 = sl2_reduce_batch(mats)
        if mode == "shortest":
            return lam1, np.zeros(m, dtype=bool)
        values, excluded = siegel_batch(b1, b2, lam1, f)
        return values, excluded
    values = np.zeros(m)
    excluded = np.zeros(m, dtype=bool)
    for i in range(m):
        lat = reduce_basis(mats[i])
        if mode == "shortest":
            values[i] = lat.shortest
            continue
        if lat.shortest < CUSP_GUARD:
            excluded[i] = True
            continue
        values[i] = siegel_transform(lat, f)
    return values, excluded


def _observable_values(
    matrix,
    map_vars,
    region: BoxRegion,
    grid: int,
    f: Optional[TestFunction],
    mode: str = "siegel",
    workers: int = 1,
    method: str = "grid",
    seed: int = 0,
):
    total = grid ** region.dim
    bounds = list(range(0, total, _CHUNK)) + [total]
    tasks = [
        (matrix, map_vars, region, grid, f, mode, lo, hi, method, seed)
        for lo, hi in zip(bounds[:-1], bounds[1:])
        if hi > lo
    ]
    values = np.empty(total)
    excluded = np.empty(total, dtype=bool)
    if workers <= 1 or len(tasks) == 1:
        results = map(_eval_chunk, tasks)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        try:
            results = list(pool.map(_eval_chunk, tasks))
        finally:
            pool.shutdown()
    for task, (vals, excl) in zip(tasks, results):
        lo, hi = task[6], task[7]
        values[lo:hi] = vals
        excluded[lo:hi] = excl
    return values, excluded


@dataclass(frozen=True)
class AverageDetail:
    average: float
    samples: int
    excluded: int
    error_bound: float


def _average(values: np.ndarray, excluded: np.ndarray) -> AverageDetail:
    total = values.shape[0]
    n_excl = int(np.count_nonzero(excluded))
    if n_excl > _EXCLUSION_BUDGET * total:
        raise CuspExcursionError(
            f"cusp guard tripped on {n_excl}/{total} samples",
            excluded=n_excl,
            total=total,
        )
    kept = values[~excluded]
    avg = math.fsum(kept.tolist()) / kept.shape[0]
    bound = 0.0
    if n_excl:
        bound = n_excl / total * float(np.max(kept))
    return AverageDetail(avg, total, n_excl, bound)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def birkhoff_average(entry: MapEntry, box: BoxSpec, f: TestFunction,
                     workers: int = 1, method: str = "grid",
                     seed: int = 0) -> float:
    """Midpoint grid average of the observable over the realized box."""
    values, excluded = _observable_values(
        entry.matrix, entry.map_vars, box.realized_region(), box.grid, f,
        workers=workers, method=method, seed=seed,
    )
    return _average(values, excluded).average


def subbox_average(entry: MapEntry, lam, T: float, J: Optional[BoxRegion],
                   f: TestFunction, grid: int, workers: int = 1) -> float:
    """Average over the alpha-grid in J of the observable along the
    rescaled map; midpoints map to midpoints of the realized box, so this
    matches ``birkhoff_average`` up to grid alignment."""
    box = BoxSpec(lam=tuple(Fraction(v) for v in lam), T=T, grid=grid, J=J)
    values, excluded = _observable_values(
        entry.matrix, entry.map_vars, box.realized_region(), grid, f,
        workers=workers,
    )
    return _average(values, excluded).average


def nondivergence_fraction(entry: MapEntry, box: BoxSpec,
                           eps0_list: Sequence[float],
                           workers: int = 1) -> dict:
    """Fraction of grid samples whose lattice stays eps0-deep in the
    compact part, per eps0."""
    lam1, _ = _observable_values(
        entry.matrix, entry.map_vars, box.realized_region(), box.grid,
        None, mode="shortest", workers=workers,
    )
    total = lam1.shape[0]
    return {
        float(e): float(np.count_nonzero(lam1 >= e)) / total for e in eps0_list
    }


def periodic_reference(entry: MapEntry, f: TestFunction,
                       npts: Optional[int] = None) -> float:
    """Per-period average of the observable over the closed orbit, by
    midpoint tensor quadrature of the orbit map (one axis per orbit
    parameter)."""
    if not entry.closed_orbit or entry.orbit_map is None:
        raise DomainError(f"{entry.name} is not a closed-orbit entry")
    k = len(entry.orbit_vars)
    if npts is None:
        npts = 4096 if k == 1 else 24
    region = BoxRegion((0.0,) * k, (float(entry.period),) * k)
    values, excluded = _observable_values(
        entry.orbit_map, entry.orbit_vars, region, npts, f
    )
    return _average(values, excluded).average


@dataclass(frozen=True)
class ResultRow:
    T: float
    observable: str
    average: float
    reference: float
    gap: float
    rel_gap: float
    samples: int
    excluded: int
    error_bound: float
    nondiv: tuple
    seed: int


@dataclass(frozen=True)
class ExperimentResult:
    map_name: str
    rows: tuple
    diagnostics: tuple = ()

    def csv_text(self) -> str:
        eps_cols = []
        if self.rows and self.rows[0].nondiv:
            eps_cols = [e for e, _ in self.rows[0].nondiv]
        header = (
            ["T", "observable", "average", "reference", "gap", "rel_gap",
             "samples", "excluded", "error_bound"]
            + [f"nondiv_eps{_fmt(e)}" for e in eps_cols]
            + ["seed"]
        )
        lines = [",".join(header)]
        for r in self.rows:
            cells = [
                _fmt(r.T), r.observable, _fmt(r.average), _fmt(r.reference),
                _fmt(r.gap), _fmt(r.rel_gap), str(r.samples), str(r.excluded),
                _fmt(r.error_bound),
            ]
            cells += [_fmt(frac) for _, frac in r.nondiv]
            cells.append(str(r.seed))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def plot_text(self) -> str:
        lines = ["T,observable,rel_gap"]
        for r in self.rows:
            lines.append(f"{_fmt(r.T)},{r.observable},{_fmt(r.rel_gap)}")
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    """17 significant digits: parses back to the exact double."""
    return f"{float(x):.17g}"


def convergence_sweep(
    entry: MapEntry,
    lam,
    T_list: Sequence[float],
    f_list: Sequence[TestFunction],
    J: Optional[BoxRegion] = None,
    grid: int = 200,
    eps0_list: Sequence[float] = (0.1, 0.05),
    seed: int = 0,
    workers: int = 1,
    method: str = "grid",
) -> ExperimentResult:
    """Subbox averages against the reference measure along increasing T.

    The reference is the Haar integral of the observable, except for
    closed-orbit catalog entries, whose reference is the one-period orbit
    average (the limit lives on the closed orbit, not the full space).
    """
    T_list = list(T_list)
    if any(b >= a for a, b in zip(T_list[1:], T_list[:-1])):
        raise DomainError("T values must increase")
    lam = tuple(Fraction(v) for v in lam)
    rows = []
    for T in T_list:
        box = BoxSpec(lam=lam, T=float(T), grid=grid, J=J)
        lam1, _ = _observable_values(
            entry.matrix, entry.map_vars, box.realized_region(), grid, None,
            mode="shortest", workers=workers, method=method, seed=seed,
        )
        total = lam1.shape[0]
        nondiv = tuple(
            (float(e), float(np.count_nonzero(lam1 >= e)) / total)
            for e in eps0_list
        )
        for f in f_list:
            values, excluded = _observable_values(
                entry.matrix, entry.map_vars, box.realized_region(), grid, f,
                workers=workers, method=method, seed=seed,
            )
            detail = _average(values, excluded)
            if entry.closed_orbit:
                ref = periodic_reference(entry, f)
            else:
                ref = haar_expectation(f, entry.dim)
            gap = detail.average - ref
            rows.append(
                ResultRow(
                    T=float(T),
                    observable=f.name,
                    average=detail.average,
                    reference=ref,
                    gap=gap,
                    rel_gap=abs(gap) / abs(ref) if ref else float("inf"),
                    samples=detail.samples,
                    excluded=detail.excluded,
                    error_bound=detail.error_bound,
                    nondiv=nondiv,
                    seed=seed,
                )
            )
    return ExperimentResult(map_name=entry.name, rows=tuple(rows))


def twodim_bcondition_sweep(
    entry: MapEntry,
    b,
    T2_list: Sequence[float],
    f_list: Sequence[TestFunction],
    grid: int = 200,
    eps0_list: Sequence[float] = (0.1, 0.05),
    seed: int = 0,
    workers: int = 1,
    delta3: float = 0.5,
    method: str = "grid",
) -> ExperimentResult:
    """Averages over boxes [0, 1.01 T2^b] x [0, T2] for increasing T2.

    The 1.01 factor keeps the strict box-exponent inequality robust under
    rounding.  Alongside each row, the flow residual is sampled inside the
    compliant region {y < delta3^(1/p) x^(1/p)} as a diagnostic.
    """
    if entry.k != 2:
        raise DomainError("the box-exponent sweep needs a two-variable map")
    T2_list = list(T2_list)
    if any(t2 >= t1 for t1, t2 in zip(T2_list[1:], T2_list[:-1])):
        raise DomainError("T2 values must increase")
    b = Fraction(b)
    flow = twodim_flow(entry.matrix, *entry.map_vars)
    if b <= flow.p:
        raise DomainError(
            f"box exponent {b} must exceed the derivative y-degree {flow.p}"
        )
    rows = []
    diagnostics = []
    for T2 in T2_list:
        x_max = 1.01 * float(T2) ** float(b)
        region = BoxRegion((0.0, 0.0), (x_max, float(T2)))
        lam1, _ = _observable_values(
            entry.matrix, entry.map_vars, region, grid, None,
            mode="shortest", workers=workers, method=method, seed=seed,
        )
        total = lam1.shape[0]
        nondiv = tuple(
            (float(e), float(np.count_nonzero(lam1 >= e)) / total)
            for e in eps0_list
        )
        for f in f_list:
            values, excluded = _observable_values(
                entry.matrix, entry.map_vars, region, grid, f,
                workers=workers, method=method, seed=seed,
            )
            detail = _average(values, excluded)
            ref = haar_expectation(f, entry.dim)
            gap = detail.average - ref
            rows.append(
                ResultRow(
                    T=float(T2),
                    observable=f.name,
                    average=detail.average,
                    reference=ref,
                    gap=gap,
                    rel_gap=abs(gap) / abs(ref),
                    samples=detail.samples,
                    excluded=detail.excluded,
                    error_bound=detail.error_bound,
                    nondiv=nondiv,
                    seed=seed,
                )
            )
        for frac_x in (0.5, 0.9):
            x = frac_x * x_max
            if flow.p > 0:
                y_cap = delta3 ** (1.0 / flow.p) * x ** (1.0 / flow.p)
            else:
                y_cap = float(T2)
            y = min(0.9 * y_cap, 0.9 * float(T2))
            if y <= 0:
                continue
            res = twodim_residual(entry.matrix, flow, s=1.0, x=x, y=y)
            diagnostics.append((float(T2), x, y, res))
    return ExperimentResult(
        map_name=entry.name, rows=tuple(rows), diagnostics=tuple(diagnostics)
    )
