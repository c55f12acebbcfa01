import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from hiercubes.core import LatticeParams
from hiercubes.errors import TooLarge
from hiercubes.oracle import (MAX_BLOCKS, block_count, block_order, block_probability,
                              configuration_probabilities, counts_table, enumerate_partition,
                              multicanonical_count)

SMALL = [(1, 0), (1, 1), (1, 2), (1, 3), (1, 4), (2, 0), (2, 1), (2, 2), (3, 1)]


def test_partition_examples(d1):
    assert enumerate_partition(d1, 1, [1, 1]).exact == 5
    assert enumerate_partition(d1, 2, [1, 1, 1]).exact == 26
    assert enumerate_partition(d1, 2, [0, 0, 0]).exact == 1
    assert enumerate_partition(d1, 2, [0, 0, 0]).log == 0.0


@pytest.mark.parametrize("d", [1, 2])
def test_count_recursion(d):
    params = LatticeParams(d)
    a = 2
    for n in range(5 if d == 1 else 3):
        assert enumerate_partition(params, n, [1] * (n + 1)).exact == a
        a = 1 + a ** params.m


@pytest.mark.parametrize("d,n", SMALL)
def test_block_structure(d, n):
    params = LatticeParams(d)
    order = block_order(params, n)
    assert len(order) == block_count(params, n) == len(set(order))
    boxes = [(j, tuple(o)) for j, o in order]
    # blocks overlap only by nesting
    for a in range(len(boxes)):
        ja, oa = boxes[a]
        for b in range(a + 1, len(boxes)):
            jb, ob = boxes[b]
            lo = [max(x * 2 ** ja, y * 2 ** jb) for x, y in zip(oa, ob)]
            hi = [min((x + 1) * 2 ** ja, (y + 1) * 2 ** jb) for x, y in zip(oa, ob)]
            if all(l < h for l, h in zip(lo, hi)):
                small, big = (boxes[a], boxes[b]) if ja <= jb else (boxes[b], boxes[a])
                assert all(s * 2 ** small[0] // 2 ** big[0] == t for s, t in zip(small[1], big[1]))


def test_block_probability_examples(d1):
    assert block_probability(d1, 1, [1, 1], (1, (0,))) == Fraction(1, 5)
    assert block_probability(d1, 1, [1, 1], (0, (0,))) == Fraction(2, 5)
    assert block_probability(d1, 1, [1, 0], (1, (0,))) == 0
    with pytest.raises(ValueError):
        block_probability(d1, 1, [1, 1], (0, (2,)))


def test_multicanonical_examples(d1):
    assert multicanonical_count(d1, 1, [1, 0]) == 2
    assert multicanonical_count(d1, 3, [0, 0, 0, 0]) == 1
    assert multicanonical_count(d1, 2, [2, 1, 0]) == 2
    assert multicanonical_count(d1, 2, [3, 1, 0]) == 0
    assert multicanonical_count(d1, 1, [0, 0, 1]) == 0


def test_too_large():
    with pytest.raises(TooLarge):
        enumerate_partition(LatticeParams(1), 5, [1] * 6)
    with pytest.raises(TooLarge):
        enumerate_partition(LatticeParams(2), 3, [1] * 4)
    assert block_count(LatticeParams(1), 4) <= MAX_BLOCKS


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(SMALL), st.lists(st.fractions(0, 5, max_denominator=7), min_size=5, max_size=5))
def test_multicanonical_expansion(dn, z):
    d, n = dn
    params = LatticeParams(d)
    total = Fraction(0)
    for counts, mult in counts_table(params, n):
        w = Fraction(mult)
        for zj, c in zip(z, counts):
            w *= zj ** c
        total += w
    assert total == enumerate_partition(params, n, z).exact


@pytest.mark.parametrize("d,n", [(1, 2), (1, 3), (2, 1)])
def test_covered_fraction_consistency(d, n):
    params = LatticeParams(d)
    rng = random.Random(d * 10 + n)
    z = [Fraction(rng.randint(0, 9), rng.randint(1, 5)) for _ in range(n + 1)]
    masks, probs = configuration_probabilities(params, n, z)
    order = block_order(params, n)
    vols = [params.block_volume(j) for j, _ in order]
    expected = 0.0
    for mask, p in zip(masks.tolist(), probs):
        expected += p * sum(v for b, v in enumerate(vols) if mask >> b & 1)
    covered = sum(block_probability(params, n, z, blk) * params.block_volume(blk[0]) for blk in order)
    assert float(covered) == pytest.approx(expected, rel=1e-12)
    assert math.fsum(probs) == pytest.approx(1.0, rel=1e-14)
