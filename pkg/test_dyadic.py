import pytest

from dyadic import (
    DyadicIndex,
    NeighborhoodSpec,
    descendant_count,
    descendants_in_triple,
    locate,
    locate_many,
    neighborhood,
    triple,
)
from errors import DomainError


@pytest.mark.parametrize("t, j, expected", [(0.3, 3, 2), (0.0, 10, 0), (0.999, 4, 15)])
def test_locate(t, j, expected):
    assert locate(t, j) == expected


@pytest.mark.parametrize("t", [-0.1, 1.0, 1.5])
def test_locate_rejects_points_outside_unit_interval(t):
    with pytest.raises(DomainError):
        locate(t, 3)


def test_locate_refines_through_children():
    for t in [0.0, 0.1, 0.3333, 0.5, 0.77, 0.999]:
        for j in range(12):
            k = locate(t, j)
            assert locate(t, j + 1) in (2 * k, 2 * k + 1)


def test_locate_monotone_in_t():
    ts = [i / 97 for i in range(97)]
    for j in (1, 5, 9):
        ks = [locate(t, j) for t in ts]
        assert ks == sorted(ks)
        assert list(locate_many(ts, j)) == ks


@pytest.mark.parametrize("j, k, expected", [(2, 1, (0.0, 0.75)), (0, 0, (-1.0, 2.0)), (3, 4, (0.375, 0.75))])
def test_triple(j, k, expected):
    assert triple(DyadicIndex(j, k)) == expected


def test_descendants_same_scale():
    assert set(descendants_in_triple(DyadicIndex(2, 1), 2)) == {
        DyadicIndex(2, 0), DyadicIndex(2, 1), DyadicIndex(2, 2)
    }


def test_descendants_include_negative_positions():
    expected = {(1, -1), (1, 0), (1, 1), (2, -2), (2, -1), (2, 0), (2, 1), (2, 2), (2, 3)}
    got = {(d.j, d.k) for d in descendants_in_triple(DyadicIndex(1, 0), 2)}
    assert got == expected


def _brute_force_descendants(index, j_max):
    a, b = triple(index)
    out = set()
    for jp in range(index.j, j_max + 1):
        step = 2.0 ** -jp
        for kp in range(int(a / step) - 2, int(b / step) + 2):
            lo, hi = kp * step, (kp + 1) * step
            if a <= lo and hi <= b:
                out.add(DyadicIndex(jp, kp))
    return out


@pytest.mark.parametrize("j, k", [(0, 0), (2, 1), (3, 4), (4, 15), (5, 0)])
def test_descendants_match_interval_inclusion(j, k):
    index = DyadicIndex(j, k)
    got = descendants_in_triple(index, 8)
    assert set(got) == _brute_force_descendants(index, 8)
    assert len(got) == descendant_count(index, 8) == 3 * (2 ** (8 - j + 1) - 1)


def test_descendants_require_coarser_index():
    with pytest.raises(DomainError):
        descendants_in_triple(DyadicIndex(5, 0), 4)


def test_index_tree_navigation():
    index = DyadicIndex(3, 5)
    left, right = index.children()
    assert left.parent() == index and right.parent() == index
    assert index.interval() == (5 / 8, 6 / 8)
    with pytest.raises(DomainError):
        DyadicIndex(0, 0).parent()
    with pytest.raises(DomainError):
        DyadicIndex(-1, 0)


def test_neighborhood():
    assert list(neighborhood(0.3, 3, 2)) == [0, 1, 2, 3, 4]
    assert len(NeighborhoodSpec(4).positions(0)) == 9
    with pytest.raises(DomainError):
        NeighborhoodSpec(-1)
