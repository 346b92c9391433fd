"""Polynomial functional calculus on positive semidefinite windowed operators.

A target function on ``[0, λ_max]`` is expanded in Chebyshev polynomials of
the rescaled variable ``y = 2x/λ_max - 1``. Coefficients come from
Chebyshev-Gauss quadrature (a type-II DCT). The truncated series is applied
with the three-term recurrence, so ``P(Δ)`` has propagation ``m * r(Δ)`` and
its entries are exact on the shrunken margin.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.sparse as sp
from numpy.polynomial import chebyshev as C

from .groups import Element, TileFunction, WindowError
from .operators import WindowedOperator, gershgorin_bound

MAX_DEGREE = 4096


@dataclass(frozen=True)
class Heat:
    s: float

    def __call__(self, x):
        return np.exp(-self.s * np.asarray(x, dtype=float))

    def __str__(self):
        return f"heat({self.s:g})"


@dataclass(frozen=True)
class Cutoff:
    """Smooth step from 1 at ``x <= lo`` to 0 at ``x >= hi`` (quintic smootherstep)."""

    lo: float
    hi: float

    def __post_init__(self):
        if not 0 <= self.lo < self.hi:
            raise ValueError("cutoff needs 0 <= lo < hi")

    def __call__(self, x):
        z = np.clip((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        return 1.0 - z**3 * (10.0 - 15.0 * z + 6.0 * z**2)

    def __str__(self):
        return f"cutoff({self.lo:g},{self.hi:g})"


@dataclass
class ChebyshevApprox:
    coeffs: np.ndarray
    lam_max: float
    eps: float
    error_estimate: float
    quadrature_nodes: int

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.lam_max == 0:
            return np.full_like(x, self.coeffs[0])
        return C.chebval(2.0 * x / self.lam_max - 1.0, self.coeffs)


def chebyshev_coefficients(func, lam_max: float, n: int) -> np.ndarray:
    """First ``n`` coefficients from the ``n``-point Chebyshev-Gauss rule."""
    theta = math.pi * (np.arange(n) + 0.5) / n
    x = 0.5 * lam_max * (np.cos(theta) + 1.0)
    c = scipy.fft.dct(np.asarray(func(x), dtype=float), type=2) / n
    c[0] *= 0.5
    return c


def chebyshev_fit(func, lam_max: float, eps: float, max_degree: int = MAX_DEGREE) -> ChebyshevApprox:
    """Adaptive Chebyshev approximant with uniform error at most ``eps``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if lam_max < 0:
        raise ValueError("spectral bound must be nonnegative")
    if lam_max == 0:
        c0 = float(np.asarray(func(np.zeros(1)))[0])
        return ChebyshevApprox(np.array([c0]), 0.0, eps, 0.0, 1)
    n = 64
    while True:
        c = chebyshev_coefficients(func, lam_max, n)
        # aliasing on the kept coefficients is bounded by the discarded half
        if np.abs(c[n // 2 :]).sum() <= eps / 10:
            break
        n *= 2
        if n > 4 * max_degree:
            raise ValueError(
                f"no Chebyshev approximant of degree <= {max_degree} reaches eps={eps:g} "
                f"on [0, {lam_max:g}]"
            )
    tails = np.abs(c[::-1]).cumsum()[::-1]  # tails[j] = sum_{i >= j} |c_i|
    ok = np.flatnonzero(tails <= eps / 2)
    m = max(int(ok[0]) - 1, 0) if len(ok) else n - 1
    if m > max_degree:
        raise ValueError(f"required degree {m} exceeds the cap {max_degree}")
    coeffs = c[: m + 1].copy()
    approx = ChebyshevApprox(coeffs, lam_max, eps, 0.0, n)
    grid = 0.5 * lam_max * (np.cos(np.linspace(0.0, math.pi, 4 * n + 1)) + 1.0)
    err = float(np.abs(approx(grid) - np.asarray(func(grid), dtype=float)).max())
    approx.error_estimate = max(err, float(tails[m + 1]) if m + 1 < n else 0.0)
    if approx.error_estimate > eps:
        raise ValueError(f"Chebyshev approximant misses eps: error {approx.error_estimate:.3g}")
    return approx


def _threads() -> int:
    raw = os.environ.get("L2MORSE_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("L2MORSE_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def parallel_map(fn, items):
    """Ordered map, capped by ``L2MORSE_THREADS``."""
    items = list(items)
    workers = min(_threads(), len(items)) if items else 1
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def chebyshev_apply(delta: sp.csr_array, approx: ChebyshevApprox, X: np.ndarray) -> np.ndarray:
    """``P(Δ) X`` by the three-term recurrence, one fixed serial pass per column block."""
    c = approx.coeffs
    if approx.degree == 0 or approx.lam_max == 0:
        return c[0] * X
    a = 2.0 / approx.lam_max

    def shifted(V):
        return a * (delta @ V) - V

    T0 = X
    T1 = shifted(X)
    Y = c[0] * T0 + c[1] * T1
    for j in range(2, len(c)):
        T0, T1 = T1, 2.0 * shifted(T1) - T0
        Y = Y + c[j] * T1
    return Y


def _apply_blocks(delta, approx, cols: np.ndarray, size: int, chunk: int = 64) -> np.ndarray:
    chunks = [cols[i : i + chunk] for i in range(0, len(cols), chunk)]

    def run(idx):
        X = np.zeros((size, len(idx)))
        X[idx, np.arange(len(idx))] = 1.0
        return chebyshev_apply(delta, approx, X)

    parts = parallel_map(run, chunks)
    return np.concatenate(parts, axis=1) if parts else np.zeros((size, 0))


def _check_psd_input(delta: WindowedOperator):
    if delta.source != delta.target:
        raise ValueError("functional calculus needs an operator from a space to itself")
    if delta.asymmetry() > 1e-12 * max(1.0, gershgorin_bound(delta)):
        raise ValueError(f"{delta.name} is not self-adjoint")


def _result_margin(delta: WindowedOperator, degree: int) -> float:
    if degree == 0:
        return math.inf
    return delta.margin - (degree - 1) * delta.radius


def _need_margin(delta: WindowedOperator, margin: float, required: float, eps: float):
    if margin < required:
        need = delta.cover.window_radius + int(math.ceil(required - margin))
        raise WindowError(
            f"polynomial degree for eps={eps:g} pushes the exactness margin to {margin} "
            f"below {required}; window_radius >= {need} is required",
            required_radius=need,
        )


def poly_calculus(
    delta: WindowedOperator,
    func,
    eps: float = 1e-8,
    spectral_bound: float | None = None,
    require_margin: float = 0.0,
) -> WindowedOperator:
    """``P(Δ)`` with ``|P - func| <= eps`` on ``[0, λ_max]``.

    The result is exact (equal to ``P`` applied to the infinite-cover operator)
    on rows of tiles within the returned margin.
    """
    _check_psd_input(delta)
    lam = gershgorin_bound(delta) if spectral_bound is None else float(spectral_bound)
    approx = chebyshev_fit(func, lam, eps)
    margin = _result_margin(delta, approx.degree)
    _need_margin(delta, margin, require_margin, eps)
    space = delta.source
    Y = _apply_blocks(delta.matrix, approx, np.arange(space.size), space.size)
    mat = sp.csr_array(Y)
    out = WindowedOperator(
        space, space, mat, approx.degree * delta.radius, margin, f"{func}({delta.name})"
    )
    out.approx = approx
    return out


def poly_rows(
    delta: WindowedOperator,
    func,
    eps: float = 1e-8,
    radius: int = 0,
    spectral_bound: float | None = None,
) -> WindowedOperator:
    """Rows of ``P(Δ)`` for the tiles of the box of the given radius.

    ``P(Δ)`` is symmetric, so its rows are the computed columns transposed.
    Rows outside the box are left empty; the returned margin is ``radius``.
    """
    _check_psd_input(delta)
    lam = gershgorin_bound(delta) if spectral_bound is None else float(spectral_bound)
    approx = chebyshev_fit(func, lam, eps)
    margin = _result_margin(delta, approx.degree)
    _need_margin(delta, margin, radius, eps)
    space = delta.source
    tiles = delta.cover.interior_tiles(radius)
    cols = np.concatenate([np.arange(space.size)[space.tile_slice(g)] for g in tiles])
    Y = _apply_blocks(delta.matrix, approx, cols, space.size)
    coo = sp.coo_array(Y.T)
    mat = sp.csr_array((coo.data, (cols[coo.row], coo.col)), shape=(space.size, space.size))
    out = WindowedOperator(
        space, space, mat, approx.degree * delta.radius, radius, f"{func}({delta.name})"
    )
    out.approx = approx
    return out


@dataclass
class TileTraces:
    traces: TileFunction
    approx: ChebyshevApprox
    diagonals: dict  # tile -> diagonal entries of P(Δ) on that tile


def heat_trace_per_tile(
    delta: WindowedOperator,
    s: float,
    eps: float = 1e-8,
    tiles: list[Element] | None = None,
    spectral_bound: float | None = None,
    func=None,
) -> TileTraces:
    """Per-tile traces of ``func(Δ)`` (default ``exp(-sΔ)``) by applying the
    recurrence to each basis vector of the requested tiles."""
    _check_psd_input(delta)
    func = Heat(s) if func is None else func
    lam = gershgorin_bound(delta) if spectral_bound is None else float(spectral_bound)
    approx = chebyshev_fit(func, lam, eps)
    margin = _result_margin(delta, approx.degree)
    cover = delta.cover
    tiles = cover.interior_tiles(margin) if tiles is None else list(tiles)
    worst = max((cover.tile_radius(g) for g in tiles), default=0)
    _need_margin(delta, margin, worst, eps)
    space = delta.source
    cols = np.concatenate([np.arange(space.size)[space.tile_slice(g)] for g in tiles])
    Y = _apply_blocks(delta.matrix, approx, cols, space.size)
    diag = Y[cols, np.arange(len(cols))]
    per = diag.reshape(len(tiles), space.tile_dim)
    vals = {g: float(per[i].sum()) for i, g in enumerate(tiles)}
    diags = {g: per[i].copy() for i, g in enumerate(tiles)}
    return TileTraces(TileFunction(cover.group, vals, window=tiles), approx, diags)


def required_window(base, group, reach: int, degree: int, kmax: int) -> int:
    """Window radius so that tiles up to ``kmax`` stay exact after a degree-``degree``
    polynomial in an operator of radius ``reach`` with margin ``R - reach``."""
    if group.is_finite:
        return 1
    return kmax + reach + max(degree - 1, 0) * reach
