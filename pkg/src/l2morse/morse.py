"""Cell functions on covers, Forman matchings and critical-cell counts."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .complex import BaseComplex, CoverComplex
from .groups import Element, TileFunction

MAX_EXPONENT = 300.0


class MorseError(ValueError):
    pass


class CellFunction:
    """Real values on cover cells; ``values[k][tile, cell]`` in window tile order."""

    def __init__(self, cover: CoverComplex, values):
        self.cover = cover
        self.values = [np.asarray(v, dtype=float) for v in values]
        for k, v in enumerate(self.values):
            if v.shape != (cover.n_tiles, cover.base.counts[k]):
                raise ValueError(f"degree {k}: values have shape {v.shape}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"degree {k}: values must be finite")

    def __call__(self, k: int, cell: int, g: Element) -> float:
        return float(self.values[k][self.cover.tile_index[g], cell])

    @property
    def sup_abs(self) -> float:
        return max(float(np.abs(v).max(initial=0.0)) for v in self.values)

    @property
    def spread(self) -> float:
        lo = min(float(v.min(initial=math.inf)) for v in self.values)
        hi = max(float(v.max(initial=-math.inf)) for v in self.values)
        return hi - lo if hi >= lo else 0.0

    @property
    def gradient_bound(self) -> float:
        """``sup |f(τ) - f(σ)|`` over incidences inside the window."""
        best = 0.0
        for rt, rc, ct, cc, k in _window_incidences(self.cover):
            if len(rt):
                diff = self.values[k + 1][rt, rc] - self.values[k][ct, cc]
                best = max(best, float(np.abs(diff).max()))
        return best

    @classmethod
    def constant(cls, cover: CoverComplex, c: float = 0.0) -> "CellFunction":
        return cls(cover, [np.full((cover.n_tiles, m), float(c)) for m in cover.base.counts])

    @classmethod
    def invariant(cls, cover: CoverComplex, base_values) -> "CellFunction":
        return cls(cover, [np.tile(np.asarray(v, float), (cover.n_tiles, 1)) for v in base_values])


def _window_incidences(cover: CoverComplex):
    """Per degree k: (row tile, row cell, col tile, col cell) of k+1 ⊃ k incidences."""
    from .complex import _incidence_arrays

    for k in range(cover.dim):
        rt, rc, ct, cc, _ = _incidence_arrays(cover, k)
        yield rt, rc, ct, cc, k


# patterns


def _circle_length(base: BaseComplex) -> int:
    p = base.counts[0]
    ok = base.dim == 1 and base.counts == (p, p) and base.offset_rank == 1
    if ok:
        want = set()
        for i in range(p):
            want.add((i, i, -1, (0,)))
            want.add((i, (i + 1) % p, 1, (1,) if i == p - 1 else (0,)))
        have = {(x.tau, x.sigma, x.sign, x.offset) for x in base.incidences[1]}
        ok = have == want
    if not ok:
        raise MorseError(f"pattern needs a builtin circle base, got {base.name}")
    return p


def _block_sizes(p: int, c: int) -> list[int]:
    return [p // c + (1 if j < p % c else 0) for j in range(c)]


def zigzag_values(p: int, c: int, rise: float = 0.5, step: float = 0.25):
    """Vertex and edge values of the periodic zigzag on ``circle(p)``.

    Each of the ``c`` blocks climbs from a minimum; edge ``j`` inside a block
    pairs with its upper endpoint and the last edge of the block is critical.
    """
    if not 1 <= c <= p:
        raise MorseError(f"zigzag needs 1 <= c <= p, got c={c}, p={p}")
    fv, fe = np.zeros(p), np.zeros(p)
    i = 0
    for size in _block_sizes(p, c):
        for j in range(size):
            fv[i + j] = j * (rise + step)
            fe[i + j] = j * (rise + step) + rise
        i += size
    return fv, fe


def _circle_matching(p: int) -> dict[int, int]:
    # single-block zigzag: edge j pairs with vertex j + 1
    return {j: j + 1 for j in range(p - 1)}


@dataclass(frozen=True)
class InvariantZigzag:
    c: int = 1
    rise: float = 0.5
    step: float = 0.25

    def cell_function(self, cover: CoverComplex) -> CellFunction:
        base = cover.base
        if base.dim == 2:
            if self.c != 1:
                raise MorseError("torus zigzag supports c = 1 only")
            return CellFunction.invariant(cover, torus_product_values(base, self.step))
        p = _circle_length(base)
        return CellFunction.invariant(cover, zigzag_values(p, self.c, self.rise, self.step))


def _torus_shape(base: BaseComplex) -> tuple[int, int]:
    from .complex import torus

    n = base.counts[0]
    for p in range(1, n + 1):
        if n % p == 0:
            cand = torus(p, n // p)
            if cand.counts == base.counts and cand.name == base.name:
                return p, n // p
    raise MorseError(f"pattern needs a builtin torus base, got {base.name}")


def _topological_levels(nodes, edges) -> dict:
    """Longest-path height in a DAG whose edges ``x -> y`` demand ``f(x) > f(y)``."""
    succ = defaultdict(list)
    indeg = {x: 0 for x in nodes}
    for x, y in edges:
        succ[x].append(y)
        indeg[y] += 1
    order, stack = [], sorted(x for x in nodes if indeg[x] == 0)
    while stack:
        x = stack.pop()
        order.append(x)
        for y in succ[x]:
            indeg[y] -= 1
            if indeg[y] == 0:
                stack.append(y)
    if len(order) != len(nodes):
        raise MorseError("matching is not acyclic on the base quotient")
    level = {}
    for x in reversed(order):
        level[x] = 1 + max((level[y] for y in succ[x]), default=-1)
    return level


def torus_product_values(base: BaseComplex, step: float = 0.25):
    """Invariant discrete Morse function for the product of two circle zigzags.

    Critical cells: one vertex, two edges, one face per tile. Values are the
    heights in the modified Hasse diagram times ``step``.
    """
    p, q = _torus_shape(base)
    mx, my = _circle_matching(p), _circle_matching(q)

    def factors(k, cell):
        # (dim_x, index_x, dim_y, index_y)
        if k == 0:
            return 0, cell % p, 0, cell // p
        if k == 1:
            v = cell // 2
            return (1, v % p, 0, v // p) if cell % 2 == 0 else (0, v % p, 1, v // p)
        return 1, cell % p, 1, cell // p

    def cell_of(dx, ix, dy, iy):
        v = ix + p * iy
        if dx + dy == 0:
            return 0, v
        if dx + dy == 2:
            return 2, v
        return 1, 2 * v if dx == 1 else 2 * v + 1

    inv_x = {v: e for e, v in mx.items()}
    inv_y = {v: e for e, v in my.items()}

    def partner(dim, i, match, inv):
        if dim == 1 and i in match:
            return 0, match[i]
        if dim == 0 and i in inv:
            return 1, inv[i]
        return None

    pairs = {}
    for k, m in enumerate(base.counts):
        for cell in range(m):
            dx, ix, dy, iy = factors(k, cell)
            px = partner(dx, ix, mx, inv_x)
            if px is not None:
                pairs[(k, cell)] = cell_of(px[0], px[1], dy, iy)
                continue
            py = partner(dy, iy, my, inv_y)
            if py is not None:
                pairs[(k, cell)] = cell_of(dx, ix, py[0], py[1])
    nodes = [(k, c) for k, m in enumerate(base.counts) for c in range(m)]
    edges = set()
    for k, incs in base.incidences.items():
        for inc in incs:
            hi, lo = (k, inc.tau), (k - 1, inc.sigma)
            if pairs.get(lo) == hi:
                edges.add((lo, hi))
            else:
                edges.add((hi, lo))
    level = _topological_levels(nodes, sorted(edges))
    return [
        np.array([step * level[(k, c)] for c in range(m)]) for k, m in enumerate(base.counts)
    ]


@dataclass(frozen=True)
class Quasiperiodic:
    """Non-invariant function on ``circle(3)`` covers of ``Z``.

    Tile ``g`` has phase ``u = frac(alpha * g)``. Tiles with ``u < amplitude``
    get two local minima, the others one. Edges follow steepest descent.
    """

    alpha: float = (math.sqrt(5.0) - 1.0) / 2.0
    amplitude: float = 0.3

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise MorseError("quasiperiodic alpha must lie in (0, 1)")
        if not 0 < self.amplitude < min(self.alpha, 1 - self.alpha):
            raise MorseError("quasiperiodic amplitude must lie in (0, min(alpha, 1 - alpha))")

    def phase(self, g: Element) -> float:
        x = self.alpha * g[0]
        return x - math.floor(x)

    def vertex_values(self, g: Element) -> tuple[float, float, float]:
        u = self.phase(g)
        if u < self.amplitude:
            return 0.05 * u, 0.8, 0.1 + 0.05 * u
        return 0.5 + 0.1 * u, 0.1 * u, 0.7 + 0.1 * u

    def cell_function(self, cover: CoverComplex) -> CellFunction:
        if cover.group.kind != "lattice" or cover.group.rank != 1:
            raise MorseError("quasiperiodic pattern needs a rank-1 lattice group")
        if _circle_length(cover.base) != 3:
            raise MorseError("quasiperiodic pattern needs circle(3)")
        fv = np.array([self.vertex_values(g) for g in cover.tiles])
        fe = np.zeros_like(fv)
        for t, g in enumerate(cover.tiles):
            nxt = self.vertex_values((g[0] + 1,))
            ends = [(fv[t, 0], fv[t, 1]), (fv[t, 1], fv[t, 2]), (fv[t, 2], nxt[0])]
            for j, (a, b) in enumerate(ends):
                fe[t, j] = _descent_edge_value(a, b, self._steepest(g, j, a, b))
        return CellFunction(cover, [fv, fe])

    def _steepest(self, g, j, a, b) -> bool:
        """Whether the edge is the steepest descent edge of its upper endpoint."""
        prev = self.vertex_values((g[0] - 1,))
        here = self.vertex_values(g)
        nxt = self.vertex_values((g[0] + 1,))
        # neighbours of each vertex along the line
        nbrs = {
            (0, "here"): (prev[2], here[1]),
            (1, "here"): (here[0], here[2]),
            (2, "here"): (here[1], nxt[0]),
            (0, "next"): (here[2], nxt[1]),
        }
        if a > b:
            upper, other = (j, "here"), b
        else:
            upper, other = ((j + 1, "here") if j < 2 else (0, "next")), a
        return other == min(nbrs[upper])


def _descent_edge_value(a: float, b: float, paired: bool) -> float:
    if a == b:
        raise MorseError("adjacent vertices share a value")
    if paired:
        return 0.5 * (a + b)
    return max(a, b) + 0.25


def _morse_tokens(parts, k, rank, lineno):
    try:
        cell = parts[0]
        off = tuple(int(x) for x in parts[1 : 1 + rank])
    except (IndexError, ValueError):
        raise MorseError(f"line {lineno}: malformed cell reference") from None
    if len(off) != rank:
        raise MorseError(f"line {lineno}: expected {rank} offset coordinates")
    return cell, off


@dataclass
class FileMorse:
    """Values from ``f k cell_id offset... value`` records.

    Tiles without an explicit record reuse the value at offset zero. ``match``
    records are checked against the matching derived from the values.
    """

    values: dict = field(default_factory=dict)  # (k, name, offset) -> value
    matches: list = field(default_factory=list)  # ((k, name, off), (k+1, name, off))

    @classmethod
    def parse(cls, text: str, rank: int) -> "FileMorse":
        values, matches = {}, []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                k = int(parts[1])
            except (IndexError, ValueError):
                raise MorseError(f"line {lineno}: missing degree") from None
            if parts[0] == "f":
                if len(parts) != 3 + rank + 1:
                    raise MorseError(f"line {lineno}: expected f k cell offset(x{rank}) value")
                cell, off = _morse_tokens(parts[2:], k, rank, lineno)
                try:
                    val = float(parts[-1])
                except ValueError:
                    raise MorseError(f"line {lineno}: bad value {parts[-1]!r}") from None
                if not math.isfinite(val):
                    raise MorseError(f"line {lineno}: value must be finite")
                key = (k, cell, off)
                if key in values:
                    raise MorseError(f"line {lineno}: duplicate value for {key}")
                values[key] = val
            elif parts[0] == "match":
                if len(parts) != 2 + 2 * (1 + rank):
                    raise MorseError(f"line {lineno}: expected match k cell offset cell2 offset2")
                a = _morse_tokens(parts[2:], k, rank, lineno)
                b = _morse_tokens(parts[3 + rank :], k + 1, rank, lineno)
                matches.append(((k, *a), (k + 1, *b)))
            else:
                raise MorseError(f"line {lineno}: unknown record {parts[0]!r}")
        return cls(values, matches)

    @classmethod
    def from_file(cls, path, rank: int) -> "FileMorse":
        return cls.parse(Path(path).read_text(encoding="utf-8"), rank)

    def _index(self, base: BaseComplex, k: int, name: str) -> int:
        try:
            return base.names[k][name]
        except KeyError:
            raise MorseError(f"unknown {k}-cell {name!r}") from None

    def cell_function(self, cover: CoverComplex) -> CellFunction:
        base, group = cover.base, cover.group
        zero = (0,) * base.offset_rank
        default = [np.full(m, np.nan) for m in base.counts]
        explicit = {}
        for (k, name, off), val in self.values.items():
            if not 0 <= k <= base.dim:
                raise MorseError(f"degree {k} out of range")
            c = self._index(base, k, name)
            if off == zero:
                default[k][c] = val
            explicit[(k, c, group.offset(off))] = val
        out = []
        for k, m in enumerate(base.counts):
            if np.any(np.isnan(default[k])):
                c = int(np.flatnonzero(np.isnan(default[k]))[0])
                raise MorseError(f"no value at offset zero for {k}-cell {c}")
            arr = np.tile(default[k], (cover.n_tiles, 1))
            out.append(arr)
        for (k, c, g), val in explicit.items():
            t = cover.tile_index.get(g)
            if t is not None:
                out[k][t, c] = val
        return CellFunction(cover, out)

    def check_matches(self, data: "DiscreteMorseData"):
        cover = data.cover
        base, group = cover.base, cover.group
        paired = set(data.pairs)
        for (k, a, ao), (_, b, bo) in self.matches:
            ga, gb = group.offset(ao), group.offset(bo)
            if not (cover.contains(ga) and cover.contains(gb)):
                continue
            key = (
                (k, self._index(base, k, a), cover.tile_index[ga]),
                (k + 1, self._index(base, k + 1, b), cover.tile_index[gb]),
            )
            if key not in paired:
                raise MorseError(f"declared match {a}@{ao} / {b}@{bo} is not induced by f")


# Forman bookkeeping


@dataclass
class DiscreteMorseData:
    f: CellFunction
    pairs: list  # ((k, cell, tile), (k+1, cell, tile))
    critical: list  # per degree bool array (n_tiles, m_k)
    margin: float  # box radius on which matchings are complete

    @property
    def cover(self) -> CoverComplex:
        return self.f.cover

    def reliable_tiles(self) -> list[Element]:
        return self.cover.interior_tiles(self.margin)

    def critical_cells(self, k: int) -> list[tuple[int, Element]]:
        tiles = self.cover.tiles
        ts, cs = np.nonzero(self.critical[k])
        return [(int(c), tiles[t]) for t, c in zip(ts, cs)]

    def separation(self) -> int | None:
        """Least word distance between distinct tiles holding critical cells."""
        group = self.cover.group
        idx = self.cover.tile_index
        keep = [
            g for g in self.reliable_tiles()
            if any(self.critical[k][idx[g]].any() for k in range(len(self.critical)))
        ]
        best = None
        for i, g in enumerate(keep):
            for h in keep[i + 1 :]:
                d = group.distance(g, h)
                best = d if best is None else min(best, d)
        return best


def make_morse(cover: CoverComplex, pattern) -> DiscreteMorseData:
    f = pattern if isinstance(pattern, CellFunction) else pattern.cell_function(cover)
    data = forman_structure(f)
    if isinstance(pattern, FileMorse):
        pattern.check_matches(data)
    return data


def forman_structure(f: CellFunction) -> DiscreteMorseData:
    """Derive the gradient matching of ``f`` and check Forman's conditions."""
    cover = f.cover
    base = cover.base
    exc_up = [np.zeros((cover.n_tiles, m), int) for m in base.counts]
    exc_down = [np.zeros((cover.n_tiles, m), int) for m in base.counts]
    pairs = []
    for rt, rc, ct, cc, k in _window_incidences(cover):
        if not len(rt):
            continue
        # collapse repeated incidences between the same two cells
        keys = np.stack([rt, rc, ct, cc], axis=1)
        keys = np.unique(keys, axis=0)
        rt, rc, ct, cc = keys.T
        exceptional = f.values[k + 1][rt, rc] <= f.values[k][ct, cc]
        np.add.at(exc_up[k], (ct[exceptional], cc[exceptional]), 1)
        np.add.at(exc_down[k + 1], (rt[exceptional], rc[exceptional]), 1)
        for a, b, c, d in zip(ct[exceptional], cc[exceptional], rt[exceptional], rc[exceptional]):
            pairs.append(((k, int(b), int(a)), (k + 1, int(d), int(c))))
    for k in range(base.dim + 1):
        for arr, what in ((exc_up[k], "cofaces"), (exc_down[k], "faces")):
            bad = np.argwhere(arr > 1)
            if len(bad):
                t, c = bad[0]
                raise MorseError(
                    f"Forman condition violated: {k}-cell {c} in tile {cover.tiles[t]} has "
                    f"{arr[t, c]} exceptional {what}"
                )
        both = np.argwhere((exc_up[k] > 0) & (exc_down[k] > 0))
        if len(both):
            t, c = both[0]
            raise MorseError(
                f"Forman condition violated: {k}-cell {c} in tile {cover.tiles[t]} is matched "
                "both up and down"
            )
    critical = [(u == 0) & (d == 0) for u, d in zip(exc_up, exc_down)]
    reach = max((cover.coboundary_radius(k) for k in range(base.dim)), default=0)
    return DiscreteMorseData(f, sorted(pairs), critical, cover.margin_after(reach))


@dataclass
class CriticalCounts:
    counts: list  # per degree TileFunction

    def __getitem__(self, k: int) -> TileFunction:
        return self.counts[k]

    def alternating(self, k: int) -> TileFunction:
        """``c_k - c_{k-1} + ... + (-1)^k c_0``."""
        out = self.counts[k]
        for i in range(k - 1, -1, -1):
            out = out + self.counts[i] * (-1) ** (k - i)
        return out


def count_critical(data: DiscreteMorseData) -> CriticalCounts:
    cover = data.cover
    tiles = data.reliable_tiles()
    idx = cover.tile_index
    out = []
    for crit in data.critical:
        per = crit.sum(axis=1)
        out.append(TileFunction(cover.group, {g: float(per[idx[g]]) for g in tiles}, window=tiles))
    return CriticalCounts(out)


@dataclass
class WittenWeights:
    t: float
    forward: list  # e^{t f} per degree
    inverse: list  # e^{-t f} per degree


def witten_weights(f: CellFunction, t: float) -> WittenWeights:
    if t < 0:
        raise ValueError("Witten parameter t must be >= 0")
    if t * f.spread > MAX_EXPONENT:
        raise OverflowError(
            f"t * (sup f - inf f) = {t * f.spread:.3g} exceeds {MAX_EXPONENT:g}; "
            "rescale f or lower t"
        )
    fwd = [np.exp(t * v) for v in f.values]
    inv = [np.exp(-t * v) for v in f.values]
    return WittenWeights(float(t), fwd, inv)
