"""Finite base CW complexes and their tiled covers.

A base complex lists its cells per degree and the signed boundary incidences
between them. Each incidence carries a deck offset: the boundary of the cover
cell ``(tau, g)`` contains ``sign * (sigma, g + offset)``. The fundamental
domain ``K`` is the set of lifts at the identity, so the tile ``gK`` is
``{(sigma, g) : sigma in base}``.
"""
from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .groups import Element, GroupModel, WindowError
from .operators import WindowedOperator

DEFAULT_CELL_CAP = 2_000_000


class ComplexError(ValueError):
    pass


@dataclass(frozen=True)
class Incidence:
    tau: int  # k-cell
    sigma: int  # (k-1)-cell
    sign: int
    offset: tuple[int, ...]


class BaseComplex:
    """A finite CW complex with deck-offset labelled incidences."""

    def __init__(
        self,
        counts: Iterable[int],
        incidences: dict[int, list[Incidence]],
        weights: Iterable[Iterable[float]] | None = None,
        offset_rank: int = 1,
        name: str = "complex",
        names: dict[int, dict[str, int]] | None = None,
    ):
        self.counts = tuple(int(m) for m in counts)
        self.dim = len(self.counts) - 1
        self.offset_rank = int(offset_rank)
        self.name = name
        self.incidences = {k: list(incidences.get(k, [])) for k in range(1, self.dim + 1)}
        if weights is None:
            weights = [np.ones(m) for m in self.counts]
        self.weights = tuple(np.asarray(w, dtype=float) for w in weights)
        if names is None:
            names = {k: {str(i): i for i in range(m)} for k, m in enumerate(self.counts)}
        self.names = names
        self._validate()

    @property
    def euler(self) -> int:
        return sum((-1) ** k * m for k, m in enumerate(self.counts))

    def with_weights(self, weights) -> "BaseComplex":
        return BaseComplex(
            self.counts, self.incidences, weights, self.offset_rank, self.name, self.names
        )

    def scaled_weights(self, per_degree: Iterable[float]) -> "BaseComplex":
        per_degree = list(per_degree)
        if len(per_degree) != self.dim + 1:
            raise ComplexError(f"need {self.dim + 1} weights, got {len(per_degree)}")
        return self.with_weights([np.full(m, w) for m, w in zip(self.counts, per_degree)])

    def _validate(self):
        if any(m < 0 for m in self.counts):
            raise ComplexError("negative cell count")
        for k, w in enumerate(self.weights):
            if w.shape != (self.counts[k],):
                raise ComplexError(f"degree {k}: expected {self.counts[k]} weights")
            if np.any(~np.isfinite(w)) or np.any(w <= 0):
                raise ComplexError(f"degree {k}: weights must be positive and finite")
        for k, incs in self.incidences.items():
            for inc in incs:
                if not 0 <= inc.tau < self.counts[k]:
                    raise ComplexError(f"incidence refers to missing {k}-cell {inc.tau}")
                if not 0 <= inc.sigma < self.counts[k - 1]:
                    raise ComplexError(f"incidence refers to missing {k - 1}-cell {inc.sigma}")
                if inc.sign not in (1, -1):
                    raise ComplexError(f"incidence sign must be +-1, got {inc.sign}")
                if len(inc.offset) != self.offset_rank:
                    raise ComplexError(f"offset {inc.offset} has length != {self.offset_rank}")
        bad = self.boundary_squared_defects()
        if bad:
            k, rho, sigma, off, coef = bad[0]
            raise ComplexError(
                f"boundary of boundary is nonzero: degree {k} cell {rho} hits "
                f"({sigma}, offset {off}) with coefficient {coef}"
            )

    def boundary_squared_defects(self) -> list[tuple]:
        """Nonzero coefficients of ``∂∘∂`` computed on the deck offsets."""
        out = []
        for k in range(2, self.dim + 1):
            by_tau = defaultdict(list)
            for inc in self.incidences[k - 1]:
                by_tau[inc.tau].append(inc)
            acc: dict[tuple, int] = defaultdict(int)
            for inc in self.incidences[k]:
                for low in by_tau[inc.sigma]:
                    off = tuple(a + b for a, b in zip(inc.offset, low.offset))
                    acc[(inc.tau, low.sigma, off)] += inc.sign * low.sign
            out.extend((k, *key, c) for key, c in sorted(acc.items()) if c != 0)
        return out


def circle(p: int) -> BaseComplex:
    """Circle with ``p`` vertices; the wrap edge carries deck offset +1."""
    if p < 1:
        raise ComplexError("circle needs p >= 1")
    incs = []
    for i in range(p):
        j = (i + 1) % p
        off = (1,) if i == p - 1 else (0,)
        incs.append(Incidence(i, i, -1, (0,)))
        incs.append(Incidence(i, j, 1, off))
    return BaseComplex((p, p), {1: incs}, offset_rank=1, name=f"circle({p})")


def torus(p: int, q: int) -> BaseComplex:
    """Square-grid torus with deck offsets in both directions.

    Vertex ``(i, j)`` has index ``i + p*j``. Edge ``2*v`` runs in the first
    direction from vertex ``v``, edge ``2*v + 1`` in the second. Face ``v`` is
    the square with lower-left corner ``v``.
    """
    if p < 1 or q < 1:
        raise ComplexError("torus needs p, q >= 1")

    def vert(i, j):
        oi, oj = divmod(i, p)[0], divmod(j, q)[0]
        return (i % p) + p * (j % q), (oi, oj)

    e1, e2 = [], []
    for j in range(q):
        for i in range(p):
            v, _ = vert(i, j)
            right, roff = vert(i + 1, j)
            up, uoff = vert(i, j + 1)
            e1 += [Incidence(2 * v, v, -1, (0, 0)), Incidence(2 * v, right, 1, roff)]
            e1 += [Incidence(2 * v + 1, v, -1, (0, 0)), Incidence(2 * v + 1, up, 1, uoff)]
            e2 += [
                Incidence(v, 2 * v, 1, (0, 0)),
                Incidence(v, 2 * right + 1, 1, roff),
                Incidence(v, 2 * up, -1, uoff),
                Incidence(v, 2 * v + 1, -1, (0, 0)),
            ]
    n = p * q
    return BaseComplex((n, 2 * n, n), {1: e1, 2: e2}, offset_rank=2, name=f"torus({p}x{q})")


def parse_complex(text: str, name: str = "file") -> BaseComplex:
    """Read the line-oriented complex format.

    ``cell k id weight`` declares a k-cell, ``bnd k id_to id_from sign offset...``
    says the boundary of the k-cell ``id_to`` contains ``sign`` times the
    (k-1)-cell ``id_from`` displaced by the deck offset.
    """
    ids: dict[int, dict[str, int]] = defaultdict(dict)
    weights: dict[int, list[float]] = defaultdict(list)
    raw_bnd = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "cell" and len(parts) == 4:
                k, cid, w = int(parts[1]), parts[2], float(parts[3])
                if k < 0:
                    raise ValueError("negative degree")
                if cid in ids[k]:
                    raise ComplexError(f"line {lineno}: duplicate {k}-cell {cid!r}")
                if not w > 0:
                    raise ComplexError(f"line {lineno}: weight must be positive")
                ids[k][cid] = len(ids[k])
                weights[k].append(w)
            elif parts[0] == "bnd" and len(parts) >= 5:
                k, to, frm, sign = int(parts[1]), parts[2], parts[3], int(parts[4])
                off = tuple(int(x) for x in parts[5:])
                raw_bnd.append((lineno, k, to, frm, sign, off))
            else:
                raise ComplexError(f"line {lineno}: unrecognized record {parts[0]!r}")
        except ValueError as exc:
            if isinstance(exc, ComplexError):
                raise
            raise ComplexError(f"line {lineno}: {exc}") from None
    if not ids:
        raise ComplexError("no cells declared")
    dim = max(ids)
    if any(k not in ids for k in range(dim + 1)):
        raise ComplexError("cell degrees must be contiguous from 0")
    ranks = {len(r[5]) for r in raw_bnd}
    if len(ranks) > 1:
        raise ComplexError("inconsistent offset lengths in bnd records")
    rank = ranks.pop() if ranks else 1
    if rank == 0:
        raise ComplexError("bnd records need at least one offset coordinate")
    incs: dict[int, list[Incidence]] = defaultdict(list)
    for lineno, k, to, frm, sign, off in raw_bnd:
        if k < 1 or k > dim:
            raise ComplexError(f"line {lineno}: bnd degree {k} out of range")
        if to not in ids[k]:
            raise ComplexError(f"line {lineno}: dangling incidence, no {k}-cell {to!r}")
        if frm not in ids[k - 1]:
            raise ComplexError(f"line {lineno}: dangling incidence, no {k - 1}-cell {frm!r}")
        if sign not in (1, -1):
            raise ComplexError(f"line {lineno}: sign must be +1 or -1")
        incs[k].append(Incidence(ids[k][to], ids[k - 1][frm], sign, off))
    counts = [len(ids[k]) for k in range(dim + 1)]
    names = {k: dict(ids[k]) for k in range(dim + 1)}
    return BaseComplex(counts, incs, [weights[k] for k in range(dim + 1)], rank, name, names)


def from_file(path: str | Path) -> BaseComplex:
    path = Path(path)
    return parse_complex(path.read_text(encoding="utf-8"), name=path.name)


_SPEC = re.compile(r"^\s*(circle)\s*\(\s*(\d+)\s*\)\s*$|^\s*(torus)\s*\(\s*(\d+)\s*[x×,]\s*(\d+)\s*\)\s*$")


def build_base(spec: str) -> BaseComplex:
    """``circle(p)``, ``torus(pxq)`` or ``file:<path>``."""
    if spec.startswith("file:"):
        return from_file(spec[5:].strip())
    m = _SPEC.match(spec)
    if not m:
        raise ComplexError(f"unrecognized complex spec {spec!r}")
    if m.group(1):
        return circle(int(m.group(2)))
    return torus(int(m.group(4)), int(m.group(5)))


def base_reach(base: BaseComplex, group: GroupModel) -> int:
    """Largest word length of a deck offset in the base incidences."""
    return max(
        (group.norm(group.offset(inc.offset)) for incs in base.incidences.values() for inc in incs),
        default=0,
    )


class CoverComplex:
    """The cover of a base complex materialized on a finite window of tiles.

    Lattice windows are max-norm boxes of radius ``window_radius``; cyclic
    covers are always materialized whole.
    """

    def __init__(
        self,
        base: BaseComplex,
        group: GroupModel,
        window_radius: int,
        cell_cap: int = DEFAULT_CELL_CAP,
    ):
        if window_radius < 1 and not group.is_finite:
            raise ValueError("window_radius must be >= 1")
        if group.kind == "lattice" and group.rank != base.offset_rank:
            raise ComplexError(
                f"{base.name} has {base.offset_rank} offset directions but the group is {group}"
            )
        self.base = base
        self.group = group
        self.window_radius = int(window_radius)
        self.tiles: list[Element] = group.box(self.window_radius)
        total = len(self.tiles) * sum(base.counts)
        if total > cell_cap:
            raise MemoryError(f"cover would hold {total} cells (cap {cell_cap})")
        self.tile_index = {g: i for i, g in enumerate(self.tiles)}
        self.offsets = {
            k: [group.offset(inc.offset) for inc in incs] for k, incs in base.incidences.items()
        }

    def __repr__(self):
        return f"CoverComplex({self.base.name}, {self.group}, R={self.window_radius})"

    @property
    def n_tiles(self) -> int:
        return len(self.tiles)

    @property
    def dim(self) -> int:
        return self.base.dim

    def contains(self, g: Element) -> bool:
        return g in self.tile_index

    def tile_radius(self, g: Element) -> int:
        return self.group.box_norm(g)

    def coboundary_radius(self, k: int) -> int:
        """Word-metric propagation of the degree-k coboundary."""
        offs = self.offsets.get(k + 1, [])
        return max((self.group.norm(o) for o in offs), default=0)

    def margin_after(self, reach: int) -> float:
        if self.group.is_finite:
            return math.inf
        return self.window_radius - reach

    def space(self, *degrees: int) -> "CochainSpace":
        return CochainSpace(self, tuple(degrees) if degrees else tuple(range(self.dim + 1)))

    def interior_tiles(self, margin: float) -> list[Element]:
        return [g for g in self.tiles if self.tile_radius(g) <= margin]


class CochainSpace:
    """Cochains on the window in the orthonormal basis of weight-normalized cells.

    Cells are ordered tile-major (tiles lexicographic), then by degree, then by
    base cell index, so every tile owns a contiguous slice.
    """

    def __init__(self, cover: CoverComplex, degrees: tuple[int, ...]):
        if any(not 0 <= k <= cover.dim for k in degrees) or len(set(degrees)) != len(degrees):
            raise ValueError(f"invalid degrees {degrees} for a {cover.dim}-complex")
        self.cover = cover
        self.degrees = tuple(degrees)
        counts = cover.base.counts
        self.degree_offset = {}
        pos = 0
        for k in self.degrees:
            self.degree_offset[k] = pos
            pos += counts[k]
        self.tile_dim = pos
        self.size = pos * cover.n_tiles
        w = np.concatenate([cover.base.weights[k] for k in self.degrees]) if self.degrees else np.zeros(0)
        self.weights = np.tile(w, cover.n_tiles)

    def __eq__(self, other):
        return (
            isinstance(other, CochainSpace)
            and self.cover is other.cover
            and self.degrees == other.degrees
        )

    def __hash__(self):
        return hash((id(self.cover), self.degrees))

    def __repr__(self):
        return f"CochainSpace(degrees={self.degrees}, tiles={self.cover.n_tiles})"

    @property
    def group(self) -> GroupModel:
        return self.cover.group

    @property
    def tiles(self) -> list[Element]:
        return self.cover.tiles

    def tile_slice(self, g: Element) -> slice:
        try:
            i = self.cover.tile_index[g]
        except KeyError:
            raise WindowError(f"tile {g} is outside the window", None) from None
        return slice(i * self.tile_dim, (i + 1) * self.tile_dim)

    def index(self, k: int, cell: int, g: Element) -> int:
        return self.cover.tile_index[g] * self.tile_dim + self.degree_offset[k] + cell

    def indices(self, k: int, cells: np.ndarray, tile_idx: np.ndarray) -> np.ndarray:
        return tile_idx * self.tile_dim + self.degree_offset[k] + cells

    def tile_of_index(self, i: np.ndarray) -> np.ndarray:
        return np.asarray(i) // self.tile_dim

    def describe(self, i: int) -> tuple[int, int, Element]:
        t, r = divmod(int(i), self.tile_dim)
        for k in reversed(self.degrees):
            if r >= self.degree_offset[k]:
                return k, r - self.degree_offset[k], self.cover.tiles[t]
        raise IndexError(i)


def _incidence_arrays(cover: CoverComplex, k: int):
    """Row/column tile and cell indices of the degree-k -> k+1 coboundary."""
    incs = cover.base.incidences.get(k + 1, [])
    offs = cover.offsets.get(k + 1, [])
    rows_t, rows_c, cols_t, cols_c, signs = [], [], [], [], []
    idx = cover.tile_index
    group = cover.group
    for ti, g in enumerate(cover.tiles):
        for inc, off in zip(incs, offs):
            h = group.add(g, off)
            hj = idx.get(h)
            if hj is None:
                continue
            rows_t.append(ti)
            rows_c.append(inc.tau)
            cols_t.append(hj)
            cols_c.append(inc.sigma)
            signs.append(inc.sign)
    as_int = lambda a: np.asarray(a, dtype=np.int64)
    return as_int(rows_t), as_int(rows_c), as_int(cols_t), as_int(cols_c), np.asarray(signs, float)


def coboundary(cover: CoverComplex, k: int, f=None, t: float = 0.0) -> WindowedOperator:
    """The weighted coboundary ``d_k``, optionally Witten-deformed.

    With a cell function ``f`` the entry over an incidence ``tau ⊃ sigma`` is
    scaled by ``exp(t (f(sigma) - f(tau)))``, i.e. ``d_t = e^{-tf} d e^{tf}``.
    """
    if not 0 <= k < cover.dim:
        raise ValueError(f"no coboundary out of degree {k} on a {cover.dim}-complex")
    src, tgt = cover.space(k), cover.space(k + 1)
    rt, rc, ct, cc, vals = _incidence_arrays(cover, k)
    if f is not None and t != 0.0:
        from .morse import witten_weights

        witten_weights(f, t)  # overflow guard
        vals = vals * np.exp(t * (f.values[k][ct, cc] - f.values[k + 1][rt, rc]))
    w_src, w_tgt = cover.base.weights[k], cover.base.weights[k + 1]
    vals = vals * np.sqrt(w_tgt[rc]) / np.sqrt(w_src[cc])
    rows = tgt.indices(k + 1, rc, rt)
    cols = src.indices(k, cc, ct)
    mat = sp.csr_array((vals, (rows, cols)), shape=(tgt.size, src.size))
    mat.sum_duplicates()
    r0 = cover.coboundary_radius(k)
    return WindowedOperator(src, tgt, mat, r0, cover.margin_after(r0), name=f"d{k}")


def embed(op: WindowedOperator, source, target) -> WindowedOperator:
    """Re-index an operator between single-degree spaces into graded spaces."""
    def remap(space_small, space_big, idx):
        (k,) = space_small.degrees
        t, c = np.divmod(idx, space_small.tile_dim)
        return space_big.indices(k, c, t)

    coo = op.matrix.tocoo()
    rows = remap(op.target, target, coo.row.astype(np.int64))
    cols = remap(op.source, source, coo.col.astype(np.int64))
    mat = sp.csr_array((coo.data, (rows, cols)), shape=(target.size, source.size))
    return WindowedOperator(source, target, mat, op.radius, op.margin, name=op.name)


def laplacian(cover: CoverComplex, k: int, f=None, t: float = 0.0) -> WindowedOperator:
    """``Δ_k = d_{k-1} d_{k-1}^* + d_k^* d_k`` for the (deformed) differential."""
    space = cover.space(k)
    terms = []
    if k > 0:
        d = coboundary(cover, k - 1, f, t)
        terms.append(d @ d.adjoint())
    if k < cover.dim:
        d = coboundary(cover, k, f, t)
        terms.append(d.adjoint() @ d)
    if not terms:
        return WindowedOperator.zero(space, space)
    out = terms[0]
    for term in terms[1:]:
        out = out + term
    out.name = f"Delta{k}"
    return out


def dirac(cover: CoverComplex, f=None, t: float = 0.0) -> WindowedOperator:
    """Graded ``D_t = d_t + d_t^*`` on all degrees."""
    space = cover.space()
    total = WindowedOperator.zero(space, space)
    for k in range(cover.dim):
        d = embed(coboundary(cover, k, f, t), space, space)
        total = total + d + d.adjoint()
    total.name = "D"
    return total


def graded_coboundary(cover: CoverComplex, f=None, t: float = 0.0) -> WindowedOperator:
    space = cover.space()
    total = WindowedOperator.zero(space, space)
    for k in range(cover.dim):
        total = total + embed(coboundary(cover, k, f, t), space, space)
    total.name = "d"
    return total
