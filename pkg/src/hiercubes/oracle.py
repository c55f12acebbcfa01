"""Brute-force enumeration on small cubes, used as ground truth.

Configurations of the level-n cube are enumerated over the nesting tree:
each node is either occupied by its block or split into its 2**d children
(a level-0 node is occupied or empty).  A configuration is a bitmask over the
blocks of the cube numbered in depth-first pre-order.  Weights are summed
exactly with ``Fraction`` so the oracle out-precisions the float engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import LatticeParams, node_offset
from .errors import InfeasibleCounts, TooLarge

MAX_BLOCKS = 31


def block_count(params: LatticeParams, n: int) -> int:
    """Number of admissible blocks inside the level-n cube."""
    m = params.m
    return sum(m ** (n - j) for j in range(n + 1))


def _check_size(params: LatticeParams, n: int) -> None:
    if n < 0:
        raise ValueError("level must be >= 0")
    nb = block_count(params, n)
    if nb > MAX_BLOCKS:
        raise TooLarge(f"{nb} blocks in the level-{n} cube of dimension {params.d} (cap {MAX_BLOCKS})")


def _subtree_size(m: int, j: int) -> int:
    return sum(m ** i for i in range(j + 1))


def block_order(params: LatticeParams, n: int) -> list[tuple[int, tuple[int, ...]]]:
    """Blocks ``(level, offset)`` in depth-first pre-order; list position = bit index."""
    m = params.m
    out = []

    def visit(depth, index):
        j = n - depth
        out.append((j, node_offset(params, depth, index)))
        if j > 0:
            for c in range(m):
                visit(depth + 1, index * m + c)

    visit(0, 0)
    return out


def block_bit(params: LatticeParams, n: int, depth: int, index: int) -> int:
    """Bit index of the node ``index`` (base-m path digits) ``depth`` splits below the root."""
    m = params.m
    bit = 0
    for t in range(depth):
        digit = (index // m ** (depth - 1 - t)) % m
        bit += 1 + digit * _subtree_size(m, n - t - 1)
    return bit


@lru_cache(maxsize=64)
def _configurations(d: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    """All configurations of a level-j subtree: (masks, counts[K, j+1])."""
    m = 1 << d
    full = np.zeros((1, j + 1), dtype=np.int64)
    full[0, j] = 1
    if j == 0:
        masks = np.array([1, 0], dtype=np.int64)
        counts = np.array([[1], [0]], dtype=np.int64)
        return masks, counts
    cm, cc = _configurations(d, j - 1)
    size = _subtree_size(m, j - 1)
    acc_m = cm << 1
    acc_c = cc
    for c in range(1, m):
        shifted = cm << (1 + c * size)
        acc_m = (acc_m[:, None] | shifted[None, :]).ravel()
        acc_c = (acc_c[:, None, :] + cc[None, :, :]).reshape(-1, j)
    split_c = np.concatenate([acc_c, np.zeros((acc_c.shape[0], 1), dtype=np.int64)], axis=1)
    masks = np.concatenate([np.array([1], dtype=np.int64), acc_m])
    counts = np.concatenate([full, split_c])
    return masks, counts


def configurations(params: LatticeParams, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Every configuration of the level-n cube as (bitmasks, per-level block counts)."""
    _check_size(params, n)
    return _configurations(params.d, n)


def _as_fractions(z: Sequence, n: int) -> list[Fraction]:
    zs = [Fraction(x) for x in list(z)[:n + 1]]
    if any(x < 0 for x in zs):
        raise ValueError("activities must be non-negative")
    return zs + [Fraction(0)] * (n + 1 - len(zs))


def _weight(zs: list[Fraction], count_row) -> Fraction:
    w = Fraction(1)
    for zj, c in zip(zs, count_row):
        if c:
            w *= zj ** int(c)
    return w


def _log_fraction(x: Fraction) -> float:
    if x == 0:
        return -math.inf
    return math.log(x.numerator) - math.log(x.denominator)


@dataclass(frozen=True)
class PartitionValue:
    log: float
    exact: Fraction


def _grouped(counts: np.ndarray, select=None):
    rows = counts if select is None else counts[select]
    if rows.shape[0] == 0:
        return []
    uniq, mult = np.unique(rows, axis=0, return_counts=True)
    return list(zip(uniq.tolist(), mult.tolist()))


@lru_cache(maxsize=256)
def _count_groups(d: int, n: int, bit: int | None = None) -> tuple:
    """Distinct count vectors with multiplicities, optionally restricted to configurations holding ``bit``."""
    masks, counts = _configurations(d, n)
    select = None if bit is None else (masks >> bit) & 1 == 1
    return tuple((tuple(row), mult) for row, mult in _grouped(counts, select))


def enumerate_partition(params: LatticeParams, n: int, z: Sequence) -> PartitionValue:
    """Grand-canonical partition function of the level-n cube by enumeration."""
    _check_size(params, n)
    zs = _as_fractions(z, n)
    xi = sum((mult * _weight(zs, row) for row, mult in _count_groups(params.d, n)), Fraction(0))
    return PartitionValue(_log_fraction(xi), xi)


def _locate(params: LatticeParams, n: int, block) -> int:
    level, offset = block
    offset = tuple(offset)
    if not 0 <= level <= n or len(offset) != params.d:
        raise ValueError(f"block {block!r} is not inside the level-{n} cube")
    order = block_order(params, n)
    try:
        return order.index((level, offset))
    except ValueError:
        raise ValueError(f"block {block!r} is not inside the level-{n} cube") from None


def block_probability(params: LatticeParams, n: int, z: Sequence, block) -> Fraction:
    """Exact probability that ``block = (level, offset)`` belongs to the configuration."""
    _check_size(params, n)
    zs = _as_fractions(z, n)
    bit = _locate(params, n, block)
    num = sum((mult * _weight(zs, row) for row, mult in _count_groups(params.d, n, bit)), Fraction(0))
    den = enumerate_partition(params, n, z).exact
    return num / den


def configuration_probabilities(params: LatticeParams, n: int, z: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """(bitmasks, Gibbs probabilities as floats) for every configuration."""
    masks, counts = configurations(params, n)
    zs = _as_fractions(z, n)
    xi = enumerate_partition(params, n, z).exact
    cache = {}
    probs = np.empty(len(masks))
    for i, row in enumerate(counts.tolist()):
        key = tuple(row)
        if key not in cache:
            cache[key] = float(_weight(zs, row) / xi)
        probs[i] = cache[key]
    return masks, probs


def multicanonical_count(params: LatticeParams, n: int, counts: Sequence[int]) -> int:
    """Number of configurations with exactly ``counts[j]`` blocks of each level j."""
    _, table = configurations(params, n)
    want = list(counts)
    if len(want) > n + 1:
        if any(want[n + 1:]):
            return 0
        want = want[:n + 1]
    want += [0] * (n + 1 - len(want))
    if any(c < 0 for c in want):
        raise InfeasibleCounts("counts must be non-negative")
    return int(np.all(table == np.array(want, dtype=np.int64), axis=1).sum())


def counts_table(params: LatticeParams, n: int) -> list[tuple[tuple[int, ...], int]]:
    """Every feasible count vector with its multiplicity, sorted."""
    _check_size(params, n)
    return sorted(_count_groups(params.d, n))
