"""L²-Betti numbers by fiber and finite-cover oracles, heat-trace limits and
the Morse-inequality ledger."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq

from .calculus import Heat, TileTraces, chebyshev_fit, heat_trace_per_tile, parallel_map
from .complex import BaseComplex, CoverComplex, base_reach, coboundary, laplacian
from .groups import FolnerBox, GroupModel, TileFunction, folner_average, geq_mod_ideal
from .morse import CellFunction, count_critical, make_morse
from .operators import gershgorin_bound
from .rng import stream


class BettiError(ValueError):
    pass


@dataclass
class BettiReport:
    values: list
    method: str
    tolerance: float
    samples: int
    diagnostics: dict = field(default_factory=dict)

    def euler(self) -> float:
        return sum((-1) ** k * float(v) for k, v in enumerate(self.values))

    def rows(self):
        return [
            (k, float(v), self.method, self.tolerance, self.samples)
            for k, v in enumerate(self.values)
        ]


# fibers


def fiber_coboundary(base: BaseComplex, k: int, theta, f_base=None, t: float = 0.0) -> np.ndarray:
    """Bloch fiber of ``d_k`` at phase ``theta`` in the weight-normalized basis."""
    theta = np.asarray(theta, dtype=float)
    D = np.zeros((base.counts[k + 1], base.counts[k]), dtype=complex)
    for inc in base.incidences[k + 1]:
        val = inc.sign * np.exp(1j * float(np.dot(theta, inc.offset)))
        if f_base is not None and t:
            val *= math.exp(t * (f_base[k][inc.sigma] - f_base[k + 1][inc.tau]))
        D[inc.tau, inc.sigma] += val
    w_hi, w_lo = base.weights[k + 1], base.weights[k]
    return np.sqrt(w_hi)[:, None] * D / np.sqrt(w_lo)[None, :]


def fiber_laplacians(base: BaseComplex, theta, f_base=None, t: float = 0.0) -> list[np.ndarray]:
    ds = [fiber_coboundary(base, k, theta, f_base, t) for k in range(base.dim)]
    out = []
    for k, m in enumerate(base.counts):
        L = np.zeros((m, m), dtype=complex)
        if k > 0:
            L += ds[k - 1] @ ds[k - 1].conj().T
        if k < base.dim:
            L += ds[k].conj().T @ ds[k]
        out.append(L)
    return out


def _kernel_counts(base, theta, ker_tol, f_base, t):
    laps = fiber_laplacians(base, theta, f_base, t)
    eigs = [np.linalg.eigvalsh(L) for L in laps]
    lam_max = max((float(e.max()) for e in eigs if e.size), default=0.0)
    cut = ker_tol * lam_max
    counts = [int((e <= cut).sum()) for e in eigs]
    counted = max((float(e[e <= cut].max()) for e in eigs if (e <= cut).any()), default=0.0)
    above = min((float(e[e > cut].min()) for e in eigs if (e > cut).any()), default=math.inf)
    return counts, lam_max, counted, above


def floquet_betti(
    base: BaseComplex,
    samples: int = 64,
    ker_tol: float = 1e-8,
    seed: int = 0,
    group: GroupModel | None = None,
    f_base=None,
    t: float = 0.0,
) -> BettiReport:
    """Generic fiber kernel dimensions over pseudo-random phases."""
    if group is not None and group.is_finite:
        raise BettiError("Floquet oracle needs a lattice group; use finite_cover_betti for Z/N")
    if samples < 16:
        raise BettiError("floquet_betti needs at least 16 phase samples")
    rng = stream(seed, "floquet-phases")
    thetas = rng.uniform(0.0, 2.0 * math.pi, size=(samples, base.offset_rank))
    results = parallel_map(lambda th: _kernel_counts(base, th, ker_tol, f_base, t), thetas)
    mat = np.array([r[0] for r in results])
    values = [int(v) for v in mat.min(axis=0)]
    n_max = max(base.counts)
    for counts, lam_max, counted, above in results:
        if list(counts) != values:
            continue
        floor = 64 * np.finfo(float).eps * lam_max * n_max
        if counted > floor:
            raise BettiError(
                f"ker_tol={ker_tol:g} is degenerate: an eigenvalue {counted:.3g} counted as "
                f"kernel exceeds the rounding floor {floor:.3g}"
            )
    disagree = [i for i, row in enumerate(mat) if list(row) != values]
    gap = min(r[3] / r[1] if r[1] else math.inf for r in results)
    return BettiReport(
        values,
        "floquet",
        ker_tol,
        samples,
        {"disagreeing_samples": disagree, "min_relative_gap": gap, "t": t},
    )


def rational_phase_betti(base: BaseComplex, order: int, ker_tol: float = 1e-8, f_base=None,
                         t: float = 0.0) -> list[Fraction]:
    """Kernel dimensions at the characters of ``Z/order``, averaged."""
    total = np.zeros(base.dim + 1, dtype=int)
    for j in range(order):
        theta = np.full(base.offset_rank, 2.0 * math.pi * j / order)
        counts, *_ = _kernel_counts(base, theta, ker_tol, f_base, t)
        total += counts
    return [Fraction(int(v), order) for v in total]


def _numerical_rank(M: np.ndarray, rank_tol: float) -> int:
    if M.size == 0:
        return 0
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    cut = rank_tol * sv[0]
    near = sv[(sv > cut / 10) & (sv < cut * 10)]
    if near.size:
        raise BettiError(
            f"rank is ambiguous at rank_tol={rank_tol:g}: singular values "
            f"{', '.join(f'{x:.3g}' for x in near[:5])} lie within 10x of the cut {cut:.3g}"
        )
    return int((sv > cut).sum())


def finite_cover_betti(
    base: BaseComplex, order: int, rank_tol: float = 1e-10, f=None, t: float = 0.0
) -> BettiReport:
    """``b_k(total cover) / N`` by numerical rank of the coboundaries."""
    group = GroupModel.cyclic(order)
    cover = CoverComplex(base, group, 1)
    fc = f.cell_function(cover) if f is not None and not isinstance(f, CellFunction) else f
    ranks = [
        _numerical_rank(coboundary(cover, k, fc, t).toarray(), rank_tol) for k in range(base.dim)
    ]
    values = []
    for k, m in enumerate(base.counts):
        b = m * order - (ranks[k] if k < base.dim else 0) - (ranks[k - 1] if k > 0 else 0)
        values.append(Fraction(b, order))
    return BettiReport(values, "finite_cover", rank_tol, 0, {"ranks": ranks, "order": order})


def oracle_betti(base, group: GroupModel, samples=64, ker_tol=1e-8, rank_tol=1e-10, seed=0):
    if group.is_finite:
        return finite_cover_betti(base, group.order, rank_tol)
    return floquet_betti(base, samples, ker_tol, seed, group)


# heat traces on automatically sized windows


def heat_traces(
    base: BaseComplex,
    group: GroupModel,
    k: int,
    s: float,
    kmax: int,
    pattern=None,
    t: float = 0.0,
    eps: float = 1e-8,
    window_radius: int = 0,
) -> TileTraces:
    """Per-tile ``Tr(exp(-s Δ_k(t)))`` on ``F_kmax``, growing the window until exact."""
    tiles = group.box(kmax)
    R = max(window_radius, kmax + 4) if not group.is_finite else 1
    while True:
        cover = CoverComplex(base, group, R)
        f = pattern.cell_function(cover) if pattern is not None else None
        delta = laplacian(cover, k, f, t)
        approx = chebyshev_fit(Heat(s), gershgorin_bound(delta), eps)
        margin = delta.margin if approx.degree == 0 else delta.margin - (approx.degree - 1) * delta.radius
        if margin >= kmax:
            return heat_trace_per_tile(delta, s, eps, tiles)
        R += int(math.ceil(kmax - margin))


@dataclass
class HeatBettiReport:
    t_sequence: list
    degrees: list
    ks: list
    averages: dict  # (degree, t) -> list of Følner averages over ks
    fits: dict  # degree -> (a, b, q) or None
    report: BettiReport
    tile_traces: dict  # (degree, t) -> TileFunction

    def final(self, degree: int, t: float) -> float:
        return self.averages[(degree, t)][-1]


def geometric_tail_fit(ts, values):
    """Fit ``a + b q^t`` through the last three points; ``None`` if it does not exist."""
    (t1, t2, t3), (v1, v2, v3) = ts[-3:], values[-3:]
    if v1 == v2 or v2 == v3:
        return (v3, 0.0, 0.0) if v1 == v2 == v3 else None
    ratio = (v2 - v3) / (v1 - v2)

    def g(q):
        return (q**t2 - q**t3) - ratio * (q**t1 - q**t2)

    lo, hi = 1e-12, 1.0 - 1e-12
    if g(lo) * g(hi) > 0:
        return None
    q = brentq(g, lo, hi, xtol=1e-15)
    b = (v1 - v2) / (q**t1 - q**t2)
    a = v3 - b * q**t3
    return float(a), float(b), float(q)


def heat_betti(
    base: BaseComplex,
    group: GroupModel,
    t_sequence,
    k_range,
    degrees=None,
    pattern=None,
    deformation: float = 0.0,
    eps: float = 1e-8,
) -> HeatBettiReport:
    """Følner averages of ``Tr(exp(-t D̃²|Λ^k))`` along an increasing heat time sequence."""
    ts = [float(x) for x in t_sequence]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise BettiError("t_sequence must be increasing")
    ks = list(k_range)
    if group.is_finite:
        ks = [ks[-1]]
    kmax = max(ks)
    degrees = list(range(base.dim + 1)) if degrees is None else list(degrees)
    averages, traces, fits = {}, {}, {}
    jobs = [(k, t) for k in degrees for t in ts]

    def run(job):
        k, t = job
        return heat_traces(base, group, k, t, kmax, pattern, deformation, eps)

    for (k, t), res in zip(jobs, parallel_map(run, jobs)):
        traces[(k, t)] = res.traces
        averages[(k, t)] = [folner_average(res.traces, FolnerBox.of(group, j)) for j in ks]
    values = []
    for k in degrees:
        seq = [averages[(k, t)][-1] for t in ts]
        tol = 2.0 * eps * max(base.counts[k], 1)
        for (ta, a), (tb, b) in zip(zip(ts, seq), zip(ts[1:], seq[1:])):
            if b > a + tol:
                raise BettiError(
                    f"degree {k}: heat trace average rises from {a:.17g} (t={ta:g}) to "
                    f"{b:.17g} (t={tb:g}); calculus eps is too loose"
                )
        fits[k] = geometric_tail_fit(ts, seq) if len(ts) >= 3 else None
        values.append(seq[-1])
    rep = BettiReport(values, "heat_limit", eps, len(ts), {"t_sequence": ts, "fits": fits})
    return HeatBettiReport(ts, degrees, ks, averages, fits, rep, traces)


# invariance under conjugation


def invariant_base_values(base: BaseComplex, group: GroupModel, pattern):
    """Base-cell values of an invariant pattern; refuses non-invariant ones."""
    cover = CoverComplex(base, group, 1)
    f = pattern.cell_function(cover)
    out = []
    for v in f.values:
        if v.size and not np.all(v == v[0]):
            raise BettiError("cell function is not invariant under the deck group")
        out.append(v[0].copy())
    return out


@dataclass
class InvarianceReport:
    passed: bool
    t_list: list
    dims: dict  # t -> list of kernel dims / Betti values
    method: str


def invariance_check(
    base: BaseComplex,
    group: GroupModel,
    pattern,
    t_list,
    samples: int = 64,
    ker_tol: float = 1e-8,
    rank_tol: float = 1e-10,
    seed: int = 0,
) -> InvarianceReport:
    ts = [0.0] + [float(t) for t in t_list]
    dims = {}
    if group.is_finite:
        for t in ts:
            dims[t] = finite_cover_betti(base, group.order, rank_tol, pattern, t).values
        method = "finite_cover"
    else:
        fb = invariant_base_values(base, group, pattern) if pattern is not None else None
        for t in ts:
            dims[t] = floquet_betti(base, samples, ker_tol, seed, group, fb, t).values
        method = "floquet"
    passed = all(dims[t] == dims[0.0] for t in ts)
    return InvarianceReport(passed, ts[1:], dims, method)


# Morse inequalities


@dataclass
class LedgerRow:
    k: int
    lhs_avg: float
    rhs: float
    verdict: bool
    folner_k: int
    defect: float


@dataclass
class HeatRow:
    k: int
    s: float
    t: float
    folner_k: int
    lhs_avg: float
    rhs: float
    verdict: bool


@dataclass
class MorseLedger:
    rows: list
    heat_rows: list
    passed: bool
    count_verdicts: dict  # degree -> bool
    heat_verdicts: dict  # (degree, t) -> bool
    boundary_coefficients: dict  # degree -> fitted O(1/k) coefficient


def alternating_betti(values, k: int) -> float:
    return sum((-1) ** (k - i) * float(values[i]) for i in range(k + 1))


def morse_inequality_eval(
    base: BaseComplex,
    group: GroupModel,
    pattern,
    betti: BettiReport,
    s: float,
    t_list,
    folner_range,
    tol: float,
    eps: float = 1e-8,
) -> MorseLedger:
    ks = list(folner_range)
    if group.is_finite:
        ks = [ks[-1]]
    kmax = max(ks)
    n = base.dim
    cover = CoverComplex(base, group, kmax + max(base_reach(base, group), 1) + 1)
    data = make_morse(cover, pattern)
    counts = count_critical(data)
    rows, verdicts, coefs = [], {}, {}
    for k in range(n + 1):
        lhs = counts.alternating(k)
        rhs = alternating_betti(betti.values, k)
        if k < n:
            rep = geq_mod_ideal(lhs, TileFunction.constant(group, rhs), ks, tol)
            ok_rows = [a >= -tol for a in rep.averages]
            verdicts[k] = rep.passed
        else:
            rep = geq_mod_ideal(lhs, TileFunction.constant(group, rhs), ks, math.inf)
            ok_rows = [abs(a) <= tol for a in rep.averages]
            verdicts[k] = all(ok_rows)
        coefs[k] = rep.boundary_coefficient
        for j, diff, ok in zip(ks, rep.averages, ok_rows):
            rows.append(LedgerRow(k, diff + rhs, rhs, ok, j, diff))
    heat_rows, heat_verdicts = [], {}
    for t in [float(x) for x in t_list]:
        per_degree = [heat_traces(base, group, i, s, kmax, pattern, t, eps).traces for i in range(n + 1)]
        for k in range(n + 1):
            lhs = per_degree[k]
            for i in range(k - 1, -1, -1):
                lhs = lhs + per_degree[i] * (-1) ** (k - i)
            rhs = alternating_betti(betti.values, k)
            slack = tol + 2.0 * eps * sum(base.counts)
            if k < n:
                rep = geq_mod_ideal(lhs, TileFunction.constant(group, rhs), ks, slack)
                oks = [a >= -slack for a in rep.averages]
                heat_verdicts[(k, t)] = rep.passed
            else:
                rep = geq_mod_ideal(lhs, TileFunction.constant(group, rhs), ks, math.inf)
                oks = [abs(a) <= slack for a in rep.averages]
                heat_verdicts[(k, t)] = all(oks)
            for j, diff, ok in zip(ks, rep.averages, oks):
                heat_rows.append(HeatRow(k, float(s), t, j, diff + rhs, rhs, ok))
    passed = all(verdicts.values()) and all(heat_verdicts.values())
    return MorseLedger(rows, heat_rows, passed, verdicts, heat_verdicts, coefs)
