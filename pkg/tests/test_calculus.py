import math

import numpy as np
import pytest
import scipy.linalg
import scipy.special

from l2morse.calculus import (
    MAX_DEGREE,
    Cutoff,
    Heat,
    chebyshev_fit,
    heat_trace_per_tile,
    poly_calculus,
    poly_rows,
    required_window,
)
from l2morse.complex import CoverComplex, circle, laplacian
from l2morse.groups import GroupModel, WindowError
from l2morse.operators import WindowedOperator

Z = GroupModel.lattice(1)


def test_zero_operator_gives_identity():
    space = CoverComplex(circle(3), Z, 2).space(0)
    zero = WindowedOperator.zero(space, space)
    for s in (0.1, 1.0, 7.0):
        H = poly_calculus(zero, Heat(s))
        assert abs(H.matrix - WindowedOperator.identity(space).matrix).max() == 0


def test_scalar_operator():
    space = CoverComplex(circle(3), Z, 2).space(0)
    lam = 3.5
    A = WindowedOperator.diagonal(space, np.full(space.size, lam))
    H = poly_calculus(A, Heat(1.0), 1e-8)
    assert np.allclose(H.matrix.diagonal(), math.exp(-lam), rtol=0, atol=1e-8)
    assert H.matrix.nnz == space.size


@pytest.mark.parametrize("lam, s", [(4.0, 1.0), (8.0, 0.5), (12.0, 2.0)])
def test_chebyshev_fit_meets_tolerance(lam, s):
    approx = chebyshev_fit(Heat(s), lam, 1e-8)
    x = np.linspace(0, lam, 2001)
    assert np.abs(approx(x) - np.exp(-s * x)).max() <= 1e-8
    assert approx.error_estimate <= 1e-8
    # one degree lower must not already be enough by the tail criterion
    assert approx.degree >= 1


def test_chebyshev_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        chebyshev_fit(Heat(1.0), 4.0, 0.0)
    with pytest.raises(ValueError):
        chebyshev_fit(Heat(1.0), -1.0, 1e-8)
    with pytest.raises(ValueError, match="degree <= 16"):
        chebyshev_fit(Heat(1.0), 1e4, 1e-12, max_degree=16)
    assert MAX_DEGREE == 4096


def test_circle1_heat_diagonal_matches_bessel_and_dense_oracle():
    cover = CoverComplex(circle(1), Z, 60)
    delta = laplacian(cover, 0)
    H = poly_calculus(delta, Heat(1.0), 1e-8)
    val = H.block((0,), (0,))[0, 0]
    # lattice heat kernel on Z: e^{-2s} I_0(2s)
    bessel = scipy.special.ive(0, 2.0)
    assert val == pytest.approx(bessel, abs=1e-8)
    assert round(val, 5) == 0.30851
    dense = scipy.linalg.expm(-delta.toarray())
    mid = cover.tile_index[(0,)]
    assert abs(val - dense[mid, mid]) <= 1e-8


def test_margin_shrinks_with_degree():
    cover = CoverComplex(circle(1), Z, 60)
    delta = laplacian(cover, 0)
    H = poly_calculus(delta, Heat(1.0), 1e-8)
    m = H.approx.degree
    assert H.radius == m * delta.radius
    assert H.margin == delta.margin - (m - 1) * delta.radius
    assert H.measured_radius() <= H.radius


def test_larger_window_gives_bit_identical_blocks():
    ops = []
    for R in (30, 45):
        delta = laplacian(CoverComplex(circle(3), Z, R), 1)
        ops.append(poly_calculus(delta, Heat(1.0), 1e-8, spectral_bound=8.0))
    small, big = ops
    assert small.approx.degree == big.approx.degree
    for g in small.exact_rows():
        for h in small.cover.tiles:
            assert np.array_equal(small.block(g, h), big.block(g, h))


def test_window_error_reports_required_radius():
    delta = laplacian(CoverComplex(circle(3), Z, 5), 0)
    with pytest.raises(WindowError) as err:
        poly_calculus(delta, Heat(1.0), 1e-8, require_margin=3)
    need = err.value.required_radius
    assert need > 5
    delta = laplacian(CoverComplex(circle(3), Z, need), 0)
    assert poly_calculus(delta, Heat(1.0), 1e-8, require_margin=3).margin >= 3


def test_non_self_adjoint_input_is_rejected(rng):
    space = CoverComplex(circle(3), Z, 2).space(0)
    blocks = {((0,), (1,)): rng.normal(size=(3, 3))}
    A = WindowedOperator.from_blocks(space, space, blocks)
    with pytest.raises(ValueError, match="self-adjoint"):
        poly_calculus(A, Heat(1.0))


def test_cutoff_shape():
    cut = Cutoff(1.0, 2.0)
    assert cut(0.0) == 1.0 and cut(1.0) == 1.0 and cut(2.0) == 0.0 and cut(3.0) == 0.0
    assert cut(1.5) == pytest.approx(0.5)
    xs = np.linspace(0, 3, 301)
    assert np.all(np.diff(cut(xs)) <= 0)
    with pytest.raises(ValueError):
        Cutoff(2.0, 1.0)


def test_cutoff_calculus_projects_onto_low_spectrum():
    cover = CoverComplex(circle(3), Z, 2)
    space = cover.space(0)
    vals = np.where(np.arange(space.size) % 2 == 0, 0.0, 5.0)
    A = WindowedOperator.diagonal(space, vals)
    P = poly_calculus(A, Cutoff(1.0, 3.0), 1e-6)
    assert np.allclose(P.matrix.diagonal(), (vals == 0).astype(float), atol=1e-6)


def test_poly_rows_agree_with_full_calculus():
    delta = laplacian(CoverComplex(circle(3), Z, 40), 1)
    full = poly_calculus(delta, Heat(0.5), 1e-8)
    rows = poly_rows(delta, Heat(0.5), 1e-8, radius=2)
    assert len(rows.exact_rows()) == 5
    for g in rows.exact_rows():
        for h in [(0,), (1,), (-4,), (9,)]:
            assert np.allclose(rows.block(g, h), full.block(g, h), rtol=0, atol=1e-14)


def test_heat_trace_thread_count_does_not_change_results(monkeypatch):
    delta = laplacian(CoverComplex(circle(3), Z, 30), 0)
    out = []
    for n in ("1", "4"):
        monkeypatch.setenv("L2MORSE_THREADS", n)
        tt = heat_trace_per_tile(delta, 1.0, 1e-8, tiles=[(g,) for g in range(-3, 4)])
        out.append([tt.traces((g,)) for g in range(-3, 4)])
    assert out[0] == out[1]


def test_bad_thread_setting(monkeypatch):
    delta = laplacian(CoverComplex(circle(3), Z, 30), 0)
    monkeypatch.setenv("L2MORSE_THREADS", "-2")
    with pytest.raises(ValueError):
        heat_trace_per_tile(delta, 1.0, 1e-8, tiles=[(0,)])


def test_invariant_heat_traces_are_constant_and_match_fiber_integral():
    delta = laplacian(CoverComplex(circle(3), Z, 30), 0)
    tt = heat_trace_per_tile(delta, 1.0, 1e-8, tiles=[(g,) for g in range(-2, 3)])
    vals = [tt.traces((g,)) for g in range(-2, 3)]
    assert max(vals) - min(vals) <= 1e-12
    # on circle(3) over Z the vertex graph is the path Z, so each tile has three copies
    assert vals[0] == pytest.approx(3 * scipy.special.ive(0, 2.0), abs=3e-8)


def test_required_window():
    assert required_window(circle(3), Z, 1, 10, 4) == 4 + 1 + 9
    assert required_window(circle(3), GroupModel.cyclic(4), 1, 10, 4) == 1
