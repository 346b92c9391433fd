import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from l2morse.groups import (
    FolnerBox,
    GroupModel,
    TileFunction,
    WindowError,
    finitely_supported_vanishing_check,
    folner_average,
    geq_mod_ideal,
    word_distance,
)

Z = GroupModel.lattice(1)
Z2 = GroupModel.lattice(2)


def test_word_distance_examples():
    assert word_distance(Z2, (0, 0), (3, -1)) == 4
    assert word_distance(GroupModel.cyclic(5), (1,), (4,)) == 2
    assert word_distance(Z2, (2, 5), (2, 5)) == 0


def test_word_distance_rejects_foreign_elements():
    with pytest.raises(ValueError):
        word_distance(Z2, (0,), (1, 1))
    with pytest.raises(ValueError):
        word_distance(GroupModel.cyclic(5), (7,), (1,))


def test_bad_group_parameters():
    with pytest.raises(ValueError):
        GroupModel.lattice(0)
    with pytest.raises(ValueError):
        GroupModel.cyclic(0)
    with pytest.raises(ValueError):
        GroupModel("free")


def elements(group):
    if group.is_finite:
        return st.tuples(st.integers(0, group.order - 1))
    return st.tuples(*[st.integers(-50, 50)] * group.rank)


@pytest.mark.parametrize("group", [Z, Z2, GroupModel.lattice(3), GroupModel.cyclic(7)])
def test_metric_axioms_random_triples(group):
    rng = np.random.default_rng(0)
    for _ in range(10_000 // 4):
        if group.is_finite:
            g, h, u = (tuple(rng.integers(0, group.order, 1)) for _ in range(3))
        else:
            g, h, u = (tuple(rng.integers(-20, 21, group.rank)) for _ in range(3))
        g, h, u = (tuple(int(x) for x in v) for v in (g, h, u))
        d = group.distance
        assert d(g, h) == d(h, g)
        assert (d(g, h) == 0) == (g == h)
        assert d(g, u) <= d(g, h) + d(h, u)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_left_invariance(data):
    group = data.draw(st.sampled_from([Z, Z2, GroupModel.cyclic(9)]))
    g, h, u = (data.draw(elements(group)) for _ in range(3))
    assert group.distance(group.add(u, g), group.add(u, h)) == group.distance(g, h)


def test_identity_and_inverse():
    assert Z2.identity == (0, 0)
    assert Z2.inverse((3, -2)) == (-3, 2)
    assert GroupModel.cyclic(5).inverse((2,)) == (3,)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_ball_sizes_are_l1_volumes_and_grow_at_most_exponentially(d):
    group = GroupModel.lattice(d)
    for m in range(0, 51):
        if m <= 6:
            assert len(group.ball(m)) == group.ball_size(m)
        assert group.ball_size(m) <= math.exp(d * math.log(3) * m) or m == 0
    # closed form against a known value: |G_2| in Z^2 is 13
    assert GroupModel.lattice(2).ball_size(2) == 13


@pytest.mark.parametrize("d", [1, 2])
def test_folner_ratio_bound_and_monotone(d):
    group = GroupModel.lattice(d)
    for gen in group.generators():
        ratios = []
        for k in range(1, 12):
            box = FolnerBox.of(group, k)
            r = box.translate_ratio(gen)
            # translating a box by a generator exposes two faces of (2k+1)^(d-1) elements
            assert r == pytest.approx(2 * (2 * k + 1) ** (d - 1) / len(box))
            ratios.append(r)
        assert all(b < a for a, b in zip(ratios, ratios[1:]))


def test_cyclic_folner_box_is_whole_group():
    box = FolnerBox.of(GroupModel.cyclic(6), 3)
    assert len(box) == 6
    assert box.translate_ratio((1,)) == 0.0


def test_folner_average_examples():
    one = TileFunction.constant(Z, 1.0)
    assert folner_average(one, FolnerBox.of(Z, 4)) == 1.0
    delta = TileFunction.indicator(Z, (0,))
    for k in range(6):
        assert folner_average(delta, FolnerBox.of(Z, k)) == pytest.approx(1 / (2 * k + 1))
    alt = TileFunction.from_callable(Z, lambda g: (-1) ** g[0], Z.box(2))
    assert folner_average(alt, FolnerBox.of(Z, 2)) == pytest.approx(1 / 5)


def test_folner_average_names_required_radius():
    phi = TileFunction.from_callable(Z, lambda g: 1.0, Z.box(3))
    with pytest.raises(WindowError) as err:
        folner_average(phi, FolnerBox.of(Z, 5))
    assert err.value.required_radius == 5
    assert "5" in str(err.value)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=9, max_size=9),
    st.lists(st.floats(0, 5), min_size=9, max_size=9),
    st.floats(-3, 3),
)
def test_folner_average_linear_and_monotone(a, b, c):
    tiles = Z.box(4)
    phi = TileFunction(Z, dict(zip(tiles, a)), window=tiles)
    gap = TileFunction(Z, dict(zip(tiles, b)), window=tiles)
    psi = phi + gap
    box = FolnerBox.of(Z, 4)
    lhs = folner_average(phi * c + psi, box)
    rhs = c * folner_average(phi, box) + folner_average(psi, box)
    assert lhs == pytest.approx(rhs, abs=1e-9)
    assert folner_average(phi, box) <= folner_average(psi, box) + 1e-12


def test_geq_mod_ideal_examples():
    one, zero = TileFunction.constant(Z, 1.0), TileFunction.constant(Z, 0.0)
    assert geq_mod_ideal(one, zero, range(1, 5), 1e-9).passed
    assert not geq_mod_ideal(zero, one, range(1, 5), 1e-9).passed
    delta = TileFunction.indicator(Z, (0,))
    rep = geq_mod_ideal(delta, zero, range(10, 41), 1e-6)
    assert rep.passed
    assert rep.averages == pytest.approx([1 / (2 * k + 1) for k in range(10, 41)])
    assert all(b < a for a, b in zip(rep.averages, rep.averages[1:]))
    # exact 1/(2k+1) data: limit 0 and coefficient 1
    assert rep.limit == pytest.approx(0.0, abs=1e-12)
    assert rep.boundary_coefficient == pytest.approx(1.0)


def test_geq_mod_ideal_negative_indicator_within_tolerance():
    neg = -TileFunction.indicator(Z, (0,))
    zero = TileFunction.constant(Z, 0.0)
    # -1/(2k+1) stays above -tol and ends above -tol/2 once k is large
    assert geq_mod_ideal(neg, zero, range(100, 120), 1e-2).passed
    assert not geq_mod_ideal(neg, zero, range(1, 60), 1e-2).passed


def test_vanishing_check_examples():
    delta = TileFunction.indicator(Z, (0,))
    rep = finitely_supported_vanishing_check(delta, range(0, 10))
    assert rep.passed
    assert rep.averages == pytest.approx(rep.bounds)  # equality case
    three = TileFunction(Z2, {(0, 0): 1.0, (1, -1): -2.0, (3, 2): 5.0})
    rep = finitely_supported_vanishing_check(three, range(0, 6))
    assert rep.passed
    # direct sums: F_0 holds only 1, F_1 adds -2, F_3 adds 5
    assert rep.averages[0] == pytest.approx(1.0)
    assert rep.averages[1] == pytest.approx(-1 / 9)
    assert rep.averages[3] == pytest.approx(4 / 49)
    with pytest.raises(ValueError):
        finitely_supported_vanishing_check(TileFunction.constant(Z, 1.0), range(3))


def test_vanishing_check_rejects_windowed_functions():
    phi = TileFunction(Z, {(0,): 1.0}, window=Z.box(2))
    with pytest.raises(ValueError):
        finitely_supported_vanishing_check(phi, range(2))


def test_tile_function_outside_window_returns_default():
    phi = TileFunction(Z, {(0,): 2.0}, default=-1.0, window=[(0,), (1,)])
    assert phi((0,)) == 2.0
    assert phi((7,)) == -1.0
    assert not phi.covers([(7,)])
    with pytest.raises(ValueError):
        TileFunction(Z, {(5,): 1.0}, window=[(0,)])
