"""Deck groups, Følner boxes and functions on the group.

Two group models are supported: the free abelian lattice ``Z^d`` with the
standard generators ``±e_i`` and the cyclic group ``Z/N`` generated by ``±1``.
Elements are plain tuples of integers; cyclic residues are kept in
``range(N)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

Element = tuple[int, ...]


class WindowError(ValueError):
    """A computation needs group elements outside the materialized window."""

    def __init__(self, message: str, required_radius: int | None = None):
        super().__init__(message)
        self.required_radius = required_radius


@dataclass(frozen=True)
class GroupModel:
    kind: str
    rank: int = 1
    order: int = 0

    def __post_init__(self):
        if self.kind == "lattice":
            if self.rank < 1:
                raise ValueError(f"lattice rank must be >= 1, got {self.rank}")
        elif self.kind == "cyclic":
            if self.order < 1:
                raise ValueError(f"cyclic order must be >= 1, got {self.order}")
            object.__setattr__(self, "rank", 1)
        else:
            raise ValueError(f"unknown group kind {self.kind!r}")

    @classmethod
    def lattice(cls, rank: int) -> "GroupModel":
        return cls("lattice", rank=rank)

    @classmethod
    def cyclic(cls, order: int) -> "GroupModel":
        return cls("cyclic", order=order)

    @property
    def is_finite(self) -> bool:
        return self.kind == "cyclic"

    @property
    def identity(self) -> Element:
        return (0,) * self.rank

    def __str__(self) -> str:
        return f"Z^{self.rank}" if self.kind == "lattice" else f"Z/{self.order}"

    def check(self, g: Element) -> Element:
        g = tuple(int(x) for x in g)
        if len(g) != self.rank:
            raise ValueError(f"element {g} does not belong to {self}")
        if self.kind == "cyclic" and not 0 <= g[0] < self.order:
            raise ValueError(f"element {g} is not a reduced residue of {self}")
        return g

    def element(self, *coords: int) -> Element:
        if self.kind == "cyclic":
            return (int(coords[0]) % self.order,)
        return self.check(coords)

    def add(self, g: Element, h: Element) -> Element:
        if self.kind == "cyclic":
            return ((g[0] + h[0]) % self.order,)
        return tuple(a + b for a, b in zip(g, h))

    def inverse(self, g: Element) -> Element:
        if self.kind == "cyclic":
            return ((-g[0]) % self.order,)
        return tuple(-a for a in g)

    def offset(self, vector: Iterable[int]) -> Element:
        """Image of a deck offset vector of the base complex.

        Lattice groups need one coordinate per group rank. Cyclic groups read
        an offset vector through the homomorphism ``v -> sum(v) mod N``.
        """
        vector = tuple(int(v) for v in vector)
        if self.kind == "cyclic":
            return (sum(vector) % self.order,)
        if len(vector) != self.rank:
            raise ValueError(f"offset {vector} has wrong length for {self}")
        return vector

    def norm(self, g: Element) -> int:
        """Word length with respect to the standard symmetric generators."""
        if self.kind == "cyclic":
            r = g[0] % self.order
            return min(r, self.order - r)
        return sum(abs(a) for a in g)

    def box_norm(self, g: Element) -> int:
        # max-norm; cyclic boxes are the whole group, measured by word length
        if self.kind == "cyclic":
            return self.norm(g)
        return max(abs(a) for a in g)

    def distance(self, g: Element, h: Element) -> int:
        g, h = self.check(g), self.check(h)
        return self.norm(self.add(self.inverse(g), h))

    def box(self, k: int) -> list[Element]:
        """Elements of max-norm at most ``k`` in lexicographic order."""
        if self.kind == "cyclic":
            return [(r,) for r in range(self.order)]
        rng = range(-k, k + 1)
        return [tuple(p) for p in itertools.product(rng, repeat=self.rank)]

    def ball(self, m: int) -> list[Element]:
        """The word-metric ball ``G_m`` in lexicographic order."""
        if self.kind == "cyclic":
            return [g for g in self.box(0) if self.norm(g) <= m]
        return [g for g in self.box(m) if self.norm(g) <= m]

    def ball_size(self, m: int) -> int:
        if self.kind == "cyclic":
            return min(self.order, 2 * m + 1)
        d = self.rank
        return sum(2**i * math.comb(d, i) * math.comb(m, i) for i in range(d + 1))

    def generators(self) -> list[Element]:
        if self.kind == "cyclic":
            return [(1 % self.order,), ((-1) % self.order,)]
        out = []
        for i in range(self.rank):
            for s in (1, -1):
                e = [0] * self.rank
                e[i] = s
                out.append(tuple(e))
        return out


def word_distance(group: GroupModel, g: Element, h: Element) -> int:
    return group.distance(g, h)


@dataclass(frozen=True)
class FolnerBox:
    group: GroupModel
    k: int
    members: tuple[Element, ...] = field(repr=False)

    @classmethod
    def of(cls, group: GroupModel, k: int) -> "FolnerBox":
        if k < 0:
            raise ValueError("Følner index must be nonnegative")
        return cls(group, k, tuple(group.box(k)))

    def __len__(self) -> int:
        return len(self.members)

    def translate_ratio(self, g: Element) -> float:
        """``|F △ gF| / |F|`` for the left translate by ``g``."""
        mine = set(self.members)
        moved = {self.group.add(g, h) for h in self.members}
        return len(mine ^ moved) / len(mine)

    def boundary_pairs(self, radius: int) -> int:
        """Number of pairs ``(g, h)`` with ``g`` in the box, ``h`` outside and
        ``d(g, h) <= radius``."""
        if self.group.is_finite:
            return 0
        mine = set(self.members)
        ball = self.group.ball(radius)
        return sum(
            1
            for g in self.members
            for b in ball
            if self.group.add(g, b) not in mine
        )


class TileFunction:
    """A bounded function on the group, materialized on a finite window.

    ``window=None`` marks a function that is known on the whole group: its
    explicit ``values`` plus ``default`` everywhere else. With a finite window
    the function is only trusted on the window; reading outside returns the
    default but averaging refuses to use it.
    """

    def __init__(
        self,
        group: GroupModel,
        values: Mapping[Element, float] | None = None,
        default: float = 0.0,
        window: Iterable[Element] | None = None,
    ):
        self.group = group
        self.values = {group.check(g): float(v) for g, v in (values or {}).items()}
        self.default = float(default)
        self.window = None if window is None else frozenset(group.check(g) for g in window)
        if self.window is not None:
            stray = set(self.values) - self.window
            if stray:
                raise ValueError(f"values given outside the window: {sorted(stray)[:3]}")

    @classmethod
    def constant(cls, group: GroupModel, value: float) -> "TileFunction":
        return cls(group, {}, default=value)

    @classmethod
    def indicator(cls, group: GroupModel, g: Element) -> "TileFunction":
        return cls(group, {group.check(g): 1.0})

    @classmethod
    def from_callable(
        cls, group: GroupModel, fn: Callable[[Element], float], window: Iterable[Element]
    ) -> "TileFunction":
        window = list(window)
        return cls(group, {g: fn(g) for g in window}, window=window)

    def __call__(self, g: Element) -> float:
        return self.values.get(tuple(g), self.default)

    def covers(self, elements: Iterable[Element]) -> bool:
        if self.window is None:
            return True
        return all(tuple(g) in self.window for g in elements)

    def _combine(self, other, op) -> "TileFunction":
        if isinstance(other, TileFunction):
            if other.group != self.group:
                raise ValueError("tile functions live on different groups")
            if self.window is None:
                window = other.window
            elif other.window is None:
                window = self.window
            else:
                window = self.window & other.window
            keys = set(self.values) | set(other.values)
            if window is not None:
                keys = window
            vals = {g: op(self(g), other(g)) for g in keys}
            return TileFunction(self.group, vals, op(self.default, other.default), window)
        c = float(other)
        vals = {g: op(v, c) for g, v in self.values.items()}
        return TileFunction(self.group, vals, op(self.default, c), self.window)

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b)

    def __mul__(self, other):
        return self._combine(other, lambda a, b: a * b)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def sup_norm(self) -> float:
        vals = list(self.values.values())
        if self.window is None or len(vals) < len(self.window):
            vals.append(self.default)
        return max((abs(v) for v in vals), default=0.0)

    def support(self) -> list[Element]:
        if self.window is None and self.default != 0.0:
            raise ValueError("function is not finitely supported")
        return sorted(g for g, v in self.values.items() if v != 0.0)

    def items(self):
        return sorted(self.values.items())


def folner_average(phi: TileFunction, box: FolnerBox) -> float:
    """Mean of ``phi`` over the box, summed in lexicographic element order."""
    if box.group != phi.group:
        raise ValueError("function and Følner box live on different groups")
    if not phi.covers(box.members):
        raise WindowError(
            f"function window does not cover the Følner box F_{box.k}; "
            f"a window of radius >= {box.k} is required",
            required_radius=box.k,
        )
    total = 0.0
    for g in box.members:
        total += phi(g)
    return total / len(box.members)


@dataclass
class OrderReport:
    passed: bool
    ks: list[int]
    averages: list[float]
    limit: float
    boundary_coefficient: float
    tol: float

    @property
    def last(self) -> float:
        return self.averages[-1]


def _boundary_fit(group: GroupModel, ks, averages) -> tuple[float, float]:
    # averages ~ limit + coefficient / |F_k|^(1/d)
    if len(ks) < 2:
        return (averages[-1] if averages else 0.0), 0.0
    x = np.array([1.0 / (2 * k + 1) for k in ks])
    y = np.asarray(averages, dtype=float)
    A = np.column_stack([np.ones_like(x), x])
    (limit, coef), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(limit), float(coef)


def geq_mod_ideal(
    phi: TileFunction, psi: TileFunction, k_range: Iterable[int], tol: float
) -> OrderReport:
    """Følner-average evidence for ``phi >= psi`` modulo the averaging ideal."""
    ks = list(k_range)
    if not ks:
        raise ValueError("empty Følner range")
    diff = phi - psi
    avgs = [folner_average(diff, FolnerBox.of(phi.group, k)) for k in ks]
    passed = all(a >= -tol for a in avgs) and avgs[-1] >= -tol / 2
    limit, coef = _boundary_fit(phi.group, ks, avgs)
    return OrderReport(passed, ks, avgs, limit, coef, tol)


@dataclass
class VanishingReport:
    passed: bool
    ks: list[int]
    averages: list[float]
    bounds: list[float]


def finitely_supported_vanishing_check(
    phi: TileFunction, k_range: Iterable[int]
) -> VanishingReport:
    """Check ``|avg_{F_k} phi| <= sup|phi| * |supp phi| / |F_k|`` for each k."""
    if phi.window is not None:
        raise ValueError(
            "vanishing check needs a function known on the whole group (window=None)"
        )
    support = phi.support()
    norm = phi.sup_norm()
    ks = list(k_range)
    avgs, bounds = [], []
    for k in ks:
        box = FolnerBox.of(phi.group, k)
        avgs.append(folner_average(phi, box))
        bounds.append(norm * len(support) / len(box))
    passed = all(abs(a) <= b * (1 + 1e-12) for a, b in zip(avgs, bounds))
    return VanishingReport(passed, ks, avgs, bounds)
