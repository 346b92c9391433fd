"""Tile-blocked operators with tracked propagation and exactness margins.

Matrices live in the orthonormal basis of weight-normalized cells, so the
adjoint is the plain transpose. The margin is a max-norm radius: rows of
tiles ``g`` with ``|g|_inf <= margin`` agree with the infinite-cover operator.
Radii are measured in the word metric.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np
import scipy.sparse as sp

from .groups import Element, FolnerBox, TileFunction, WindowError, folner_average


def _as_csr(mat) -> sp.csr_array:
    out = sp.csr_array(mat)
    out.sum_duplicates()
    out.sort_indices()
    return out


class WindowedOperator:
    def __init__(self, source, target, matrix, radius: int, margin: float, name: str = ""):
        if matrix.shape != (target.size, source.size):
            raise ValueError(f"matrix shape {matrix.shape} != {(target.size, source.size)}")
        self.source = source
        self.target = target
        self.matrix = _as_csr(matrix)
        self.radius = int(radius)
        self.margin = margin
        self.name = name

    def __repr__(self):
        return (
            f"WindowedOperator({self.name or '?'}: {self.source.degrees}->{self.target.degrees}, "
            f"r={self.radius}, margin={self.margin})"
        )

    @property
    def group(self):
        return self.source.group

    @property
    def cover(self):
        return self.source.cover

    # constructors

    @classmethod
    def zero(cls, source, target) -> "WindowedOperator":
        return cls(source, target, sp.csr_array((target.size, source.size)), 0, math.inf, "0")

    @classmethod
    def identity(cls, space) -> "WindowedOperator":
        return cls(space, space, sp.identity(space.size, format="csr"), 0, math.inf, "I")

    @classmethod
    def diagonal(cls, space, values) -> "WindowedOperator":
        values = np.asarray(values, dtype=float)
        return cls(space, space, sp.diags_array(values, format="csr"), 0, math.inf, "diag")

    @classmethod
    def from_blocks(cls, source, target, blocks, radius=None, margin=math.inf, name=""):
        """Assemble from a map ``(g, h) -> dense block`` of shape
        ``(target.tile_dim, source.tile_dim)``."""
        rows, cols, vals = [], [], []
        group = source.group
        r_meas = 0
        for (g, h), blk in blocks.items():
            blk = np.asarray(blk, dtype=float)
            if blk.shape != (target.tile_dim, source.tile_dim):
                raise ValueError(f"block {g},{h} has shape {blk.shape}")
            rs, cs = target.tile_slice(g), source.tile_slice(h)
            ii, jj = np.nonzero(blk)
            rows.append(ii + rs.start)
            cols.append(jj + cs.start)
            vals.append(blk[ii, jj])
            if len(ii):
                r_meas = max(r_meas, group.distance(g, h))
        cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)
        mat = sp.csr_array(
            (cat(vals, float), (cat(rows, np.int64), cat(cols, np.int64))),
            shape=(target.size, source.size),
        )
        return cls(source, target, mat, r_meas if radius is None else radius, margin, name)

    # algebra

    def _check_same(self, other):
        if self.source != other.source or self.target != other.target:
            raise ValueError("operators act between different spaces")

    def __add__(self, other: "WindowedOperator") -> "WindowedOperator":
        self._check_same(other)
        return WindowedOperator(
            self.source,
            self.target,
            self.matrix + other.matrix,
            max(self.radius, other.radius),
            min(self.margin, other.margin),
            f"({self.name}+{other.name})",
        )

    def __sub__(self, other):
        return self + other * -1.0

    def __mul__(self, c: float) -> "WindowedOperator":
        return WindowedOperator(
            self.source, self.target, self.matrix * float(c), self.radius, self.margin, self.name
        )

    __rmul__ = __mul__

    def __matmul__(self, other: "WindowedOperator") -> "WindowedOperator":
        return compose(self, other)

    def adjoint(self) -> "WindowedOperator":
        # rows of A* at tile g need columns of A at g, i.e. rows up to |g|+r
        return WindowedOperator(
            self.target,
            self.source,
            self.matrix.T,
            self.radius,
            self.margin - self.radius,
            f"{self.name}*",
        )

    @property
    def T(self):
        return self.adjoint()

    # inspection

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def block(self, g: Element, h: Element) -> np.ndarray:
        return self.matrix[self.target.tile_slice(g), self.source.tile_slice(h)].toarray()

    def block_pairs(self) -> list[tuple[Element, Element]]:
        coo = self.matrix.tocoo()
        keep = coo.data != 0
        rt = coo.row[keep] // self.target.tile_dim
        ct = coo.col[keep] // self.source.tile_dim
        pairs = sorted(set(zip(rt.tolist(), ct.tolist())))
        tiles = self.source.tiles
        return [(tiles[a], tiles[b]) for a, b in pairs]

    def measured_radius(self) -> int:
        group = self.group
        return max((group.distance(g, h) for g, h in self.block_pairs()), default=0)

    def exact_rows(self) -> list[Element]:
        """Tiles whose rows equal the infinite-cover operator."""
        return self.cover.interior_tiles(self.margin)

    def exact_columns(self) -> list[Element]:
        return self.cover.interior_tiles(self.margin - self.radius)

    def cell_basis_matrix(self) -> sp.csr_array:
        """The same operator in the unnormalized cell basis."""
        wt = np.sqrt(self.target.weights)
        ws = np.sqrt(self.source.weights)
        return _as_csr(sp.diags_array(1.0 / wt) @ self.matrix @ sp.diags_array(ws))

    def asymmetry(self) -> float:
        diff = self.matrix - self.matrix.T
        return float(abs(diff).max()) if diff.nnz else 0.0


def compose(A: WindowedOperator, B: WindowedOperator) -> WindowedOperator:
    """``A ∘ B``: first ``B`` then ``A``."""
    if B.target != A.source:
        raise ValueError(
            f"degree mismatch: {A.name} expects {A.source.degrees}, {B.name} gives {B.target.degrees}"
        )
    return WindowedOperator(
        B.source,
        A.target,
        A.matrix @ B.matrix,
        A.radius + B.radius,
        min(A.margin, B.margin - A.radius),
        f"{A.name}{B.name}",
    )


# per-tile quantities


def _require(tiles: list[Element], allowed: float, what: str, op: WindowedOperator):
    cover = op.cover
    bad = [g for g in tiles if cover.tile_radius(g) > allowed or not cover.contains(g)]
    if bad:
        worst = max(cover.tile_radius(g) for g in bad)
        need = worst if math.isinf(allowed) else cover.window_radius + int(math.ceil(worst - allowed))
        raise WindowError(
            f"{what}: tile {bad[0]} lies outside the exactness margin {allowed} of {op.name}; "
            f"window_radius >= {need} is required",
            required_radius=need,
        )


def _per_tile_sum(values: np.ndarray, tile_dim: int, n_tiles: int) -> np.ndarray:
    return values.reshape(n_tiles, tile_dim).sum(axis=1)


def _tile_function(op, per_tile: np.ndarray, tiles: list[Element]) -> TileFunction:
    idx = op.cover.tile_index
    return TileFunction(op.group, {g: per_tile[idx[g]] for g in tiles}, window=tiles)


def rho2(A: WindowedOperator, tiles: Iterable[Element] | None = None) -> TileFunction:
    """``g -> ||A 1_{gK}||_HS``."""
    tiles = A.exact_columns() if tiles is None else list(tiles)
    _require(tiles, A.margin - A.radius, "rho2", A)
    sq = np.asarray(A.matrix.multiply(A.matrix).sum(axis=0)).ravel()
    per = _per_tile_sum(sq, A.source.tile_dim, A.cover.n_tiles)
    return _tile_function(A, np.sqrt(per), tiles)


def rho2_pairing(A: WindowedOperator, B: WindowedOperator, tiles=None) -> TileFunction:
    """``g -> <A 1_{gK}, B 1_{gK}>_HS``."""
    A._check_same(B)
    allowed = min(A.margin - A.radius, B.margin - B.radius)
    tiles = A.cover.interior_tiles(allowed) if tiles is None else list(tiles)
    _require(tiles, allowed, "rho2_pairing", A)
    prod = np.asarray(A.matrix.multiply(B.matrix).sum(axis=0)).ravel()
    per = _per_tile_sum(prod, A.source.tile_dim, A.cover.n_tiles)
    return _tile_function(A, per, tiles)


def _square(A: WindowedOperator, what: str):
    if A.source != A.target:
        raise ValueError(f"{what} needs an operator from a space to itself")


def rho1(A: WindowedOperator, tiles=None) -> TileFunction:
    """``g -> sum_i |<e_i^g, A e_i^g>|`` over the weight-normalized cells."""
    _square(A, "rho1")
    tiles = A.exact_rows() if tiles is None else list(tiles)
    _require(tiles, A.margin, "rho1", A)
    diag = np.abs(A.matrix.diagonal())
    return _tile_function(A, _per_tile_sum(diag, A.source.tile_dim, A.cover.n_tiles), tiles)


def piecewise_trace(A: WindowedOperator, tiles=None, shift=None) -> TileFunction:
    """``g -> trace of the diagonal block A[g, g]``.

    ``shift`` maps ``(degree, base cell)`` to a group element and evaluates the
    trace over the shifted fundamental domain ``{(σ, g + shift[σ])}``.
    """
    _square(A, "piecewise_trace")
    tiles = A.exact_rows() if tiles is None else list(tiles)
    diag = A.matrix.diagonal()
    space = A.source
    if not shift:
        _require(tiles, A.margin, "piecewise_trace", A)
        return _tile_function(A, _per_tile_sum(diag, space.tile_dim, A.cover.n_tiles), tiles)
    group = A.group
    need = []
    vals = {}
    for g in tiles:
        total = 0.0
        for k in space.degrees:
            for c in range(A.cover.base.counts[k]):
                h = group.add(g, shift.get((k, c), group.identity))
                need.append(h)
                if A.cover.contains(h):
                    total += diag[space.index(k, c, h)]
        vals[g] = total
    _require(need, A.margin, "piecewise_trace", A)
    return TileFunction(group, vals, window=tiles)


def gershgorin_norm(A: WindowedOperator) -> float:
    """Upper bound ``sqrt(||A||_1 ||A||_inf)`` on the operator norm."""
    absm = abs(A.matrix)
    rows = np.asarray(absm.sum(axis=1)).ravel()
    cols = np.asarray(absm.sum(axis=0)).ravel()
    if rows.size == 0 or cols.size == 0:
        return 0.0
    return float(math.sqrt(rows.max() * cols.max()))


def gershgorin_bound(A: WindowedOperator) -> float:
    """Largest Gershgorin row radius plus center, an upper bound on the spectrum."""
    absm = abs(A.matrix)
    rows = np.asarray(absm.sum(axis=1)).ravel()
    return float(rows.max()) if rows.size else 0.0


def random_operator(source, target, radius: int, rng: np.random.Generator, density=1.0,
                    name="R") -> WindowedOperator:
    """Dense random blocks on every tile pair within word distance ``radius``.

    The result is its own infinite-cover operator (it is defined only through
    the window), so the margin is unbounded.
    """
    group = source.group
    blocks = {}
    for g in target.tiles:
        for h in source.tiles:
            if group.distance(g, h) <= radius:
                blk = rng.standard_normal((target.tile_dim, source.tile_dim))
                if density < 1.0:
                    blk *= rng.random(blk.shape) < density
                blocks[(g, h)] = blk
    return WindowedOperator.from_blocks(source, target, blocks, radius, math.inf, name)


def deck_shift(space, g: Element, name="S") -> WindowedOperator:
    """Translation ``(S u)(σ, x + g) = u(σ, x)`` restricted to the window."""
    group = space.group
    rows, cols = [], []
    for x in space.tiles:
        y = group.add(x, g)
        if space.cover.contains(y):
            sx, sy = space.tile_slice(x), space.tile_slice(y)
            rows.extend(range(sy.start, sy.stop))
            cols.extend(range(sx.start, sx.stop))
    mat = sp.csr_array((np.ones(len(rows)), (rows, cols)), shape=(space.size, space.size))
    r = group.norm(g)
    return WindowedOperator(space, space, mat, r, space.cover.margin_after(r), name)


def tile_projection(space, tiles: Iterable[Element], name="P") -> WindowedOperator:
    vals = np.zeros(space.size)
    for g in tiles:
        vals[space.tile_slice(g)] = 1.0
    return WindowedOperator(space, space, sp.diags_array(vals, format="csr"), 0, math.inf, name)


# trace property


@dataclass
class DefectReport:
    ks: list[int]
    averages: list[float]
    bounds: list[float]
    norm_a: float
    norm_b: float
    decay_exponent: float
    within_bound: bool


def trace_commutator_defect(A: WindowedOperator, B: WindowedOperator, k_range) -> DefectReport:
    """Følner averages of ``Tr(AB) - Tr(BA)`` with the boundary bound."""
    if A.source != B.target or B.source != A.target:
        raise ValueError("A and B must be composable both ways")
    ks = list(k_range)
    kmax = max(ks)
    AB, BA = compose(A, B), compose(B, A)
    group = A.group
    if not group.is_finite:
        allowed = min(AB.margin, BA.margin)
        if kmax > allowed:
            need = A.cover.window_radius + int(math.ceil(kmax - allowed))
            raise WindowError(
                f"window must exceed the largest Følner index {kmax} by the combined radius "
                f"{A.radius + B.radius}; window_radius >= {need} is required",
                required_radius=need,
            )
    tiles = group.box(kmax)
    defect = piecewise_trace(AB, tiles) - piecewise_trace(BA, tiles)
    na, nb = gershgorin_norm(A), gershgorin_norm(B)
    rank = min(A.source.tile_dim, A.target.tile_dim)
    r = min(A.radius, B.radius)
    avgs, bounds = [], []
    for k in ks:
        box = FolnerBox.of(group, k)
        avgs.append(folner_average(defect, box))
        bounds.append(2.0 * rank * na * nb * box.boundary_pairs(r) / len(box))
    ok = all(abs(a) <= b * (1 + 1e-9) + 1e-12 * max(1.0, na * nb) for a, b in zip(avgs, bounds))
    kk = np.asarray(ks, float)
    y = np.abs(np.asarray(avgs))
    mask = (y > 0) & (kk > 0)
    if mask.sum() >= 2:
        slope = float(np.polyfit(np.log(kk[mask]), np.log(y[mask]), 1)[0])
    else:
        slope = float("nan")
    return DefectReport(ks, avgs, bounds, na, nb, slope, ok)


def inverse_k_fit(ks, values) -> tuple[float, float]:
    """Fit ``values ≈ C / (2k+1)`` through the origin; return ``(C, R²)``."""
    x = 1.0 / (2.0 * np.asarray(ks, float) + 1.0)
    y = np.asarray(values, float)
    denom = float(x @ x)
    c = float(x @ y) / denom
    ss_res = float(((y - c * x) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return c, r2


# Gaussian decay


@dataclass
class DecayFit:
    log_c1: float
    c2: float
    r_squared: float
    gaussian_class: bool
    distances: list[int]
    profile: list[float]

    @property
    def c1(self) -> float:
        return math.exp(self.log_c1)


def decay_profile(A: WindowedOperator, floor: float = 0.0, rows=None) -> dict[int, float]:
    """Largest absolute entry at each tile distance, over exact rows."""
    rows = A.exact_rows() if rows is None else rows
    idx = A.cover.tile_index
    allowed = {idx[g] for g in rows}
    coo = A.matrix.tocoo()
    rt = coo.row // A.target.tile_dim
    ct = coo.col // A.source.tile_dim
    tiles = A.source.tiles
    group = A.group
    out: dict[int, float] = {}
    for a, b, v in zip(rt.tolist(), ct.tolist(), np.abs(coo.data).tolist()):
        if a not in allowed or v <= floor:
            continue
        d = group.distance(tiles[a], tiles[b])
        if v > out.get(d, 0.0):
            out[d] = v
    return out


def decay_fit(A: WindowedOperator, floor: float = 0.0) -> DecayFit:
    """Fit ``log max|entry|(d) ≈ log C1 - C2 d²`` and certify the envelope.

    The intercept is raised afterwards so the envelope dominates every
    observed distance.
    """
    prof = decay_profile(A, floor)
    if not prof:
        raise ValueError("decay fit of an all-zero operator")
    ds = sorted(prof)
    y = np.log([prof[d] for d in ds])
    x = np.asarray(ds, float) ** 2
    if len(ds) == 1:
        c2, intercept, r2 = 1.0, float(y[0]), 1.0
    else:
        slope, intercept = np.polyfit(x, y, 1)
        c2 = float(-slope)
        pred = intercept + slope * x
        ss_tot = float(((y - y.mean()) ** 2).sum())
        r2 = 1.0 - float(((y - pred) ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
        if c2 <= 0:
            return DecayFit(float(intercept), c2, r2, False, ds, [prof[d] for d in ds])
    log_c1 = float(max(intercept, float(np.max(y + c2 * x))))
    env = np.exp(log_c1 - c2 * x) * (1 + 1e-6)
    ok = c2 > 0 and bool(np.all(np.exp(y) <= env))
    return DecayFit(log_c1, c2, r2, ok, ds, [prof[d] for d in ds])


# dump format


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def dump(A: WindowedOperator, fp: TextIO, tiles=None):
    """Write nonzero blocks: ``blk k g... h... rows cols`` then row-major values."""
    k = ",".join(str(d) for d in A.target.degrees)
    allowed = None if tiles is None else set(tiles)
    for g, h in A.block_pairs():
        if allowed is not None and g not in allowed:
            continue
        blk = A.block(g, h)
        head = ["blk", k, *map(str, g), *map(str, h), str(blk.shape[0]), str(blk.shape[1])]
        fp.write(" ".join(head) + "\n")
        for row in blk:
            fp.write(" ".join(_fmt(v) for v in row) + "\n")


def load_dump(fp: TextIO, rank: int) -> dict[tuple[Element, Element], np.ndarray]:
    out = {}
    lines = iter(fp.read().splitlines())
    for line in lines:
        parts = line.split()
        if not parts:
            continue
        if parts[0] != "blk":
            raise ValueError(f"expected block header, got {line!r}")
        g = tuple(int(x) for x in parts[2 : 2 + rank])
        h = tuple(int(x) for x in parts[2 + rank : 2 + 2 * rank])
        nr, nc = int(parts[-2]), int(parts[-1])
        rows = [[float(v) for v in next(lines).split()] for _ in range(nr)]
        blk = np.array(rows, dtype=float).reshape(nr, nc)
        out[(g, h)] = blk
    return out
