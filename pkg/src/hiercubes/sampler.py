"""Exact sampling of the finite-volume Gibbs measure.

Given the effective activities, the level-j node of the tree is occupied by
its block with probability ``zhat_j/(1+zhat_j)``; otherwise it splits and its
2**d children are sampled independently.  Randomness is a pure function of
(seed, replica, tree path): every node owns a 64-bit key, the root key hashes
(seed, replica) and child keys hash (parent key, child number).  Subtrees can
therefore be replayed in isolation and batches can be split freely.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import LatticeParams, node_offset
from .errors import MixedEnsembles
from .pressure import EffectiveActivities

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
CHILD_SALT = 0xD1B54A32D192ED03
# active nodes per chunk in the vectorized sampler
CHUNK_NODES = 1 << 22


def mix64(x: int) -> int:
    """SplitMix64 finalizer (after the golden-ratio increment)."""
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _mix64_np(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def root_key(seed: int, replica: int) -> int:
    return mix64(mix64(seed & MASK64) ^ (replica & MASK64))


def child_key(key: int, c: int) -> int:
    return mix64(key ^ (((c + 1) * CHILD_SALT) & MASK64))


def node_uniform(key: int) -> float:
    """Uniform in [0, 1) from the top 53 bits of the hashed key."""
    return (mix64(key ^ GOLDEN) >> 11) * 2.0 ** -53


def _child_keys_np(keys: np.ndarray, c: int) -> np.ndarray:
    return _mix64_np(keys ^ np.uint64(((c + 1) * CHILD_SALT) & MASK64))


def _uniform_np(keys: np.ndarray) -> np.ndarray:
    return (_mix64_np(keys ^ np.uint64(GOLDEN)) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def occupation_probabilities(eff: EffectiveActivities) -> tuple:
    """``zhat_j/(1+zhat_j)`` per level, evaluated from the logs."""
    out = []
    for lz in eff.log_zhat:
        if lz == -math.inf:
            out.append(0.0)
        elif lz >= 0:
            out.append(1.0 / (1.0 + math.exp(-lz)))
        else:
            e = math.exp(lz)
            out.append(e / (1.0 + e))
    return tuple(out)


@dataclass(frozen=True)
class Occupied:
    level: int


@dataclass(frozen=True)
class EmptySite:
    level: int = 0


@dataclass(frozen=True)
class Split:
    level: int
    children: tuple


@dataclass(frozen=True)
class Configuration:
    root: object
    n: int
    d: int
    seed: int
    replica: int = 0
    path: tuple = ()
    ensemble: str = ""

    def blocks(self) -> list[tuple[int, tuple[int, ...]]]:
        """Occupied blocks as (level, offset) with offsets in units of the block side."""
        params = LatticeParams(self.d)
        m = params.m
        out = []
        stack = [(self.root, 0, 0)]
        while stack:
            node, depth, index = stack.pop()
            if isinstance(node, Occupied):
                out.append((node.level, node_offset(params, depth, index)))
            elif isinstance(node, Split):
                for c in range(m - 1, -1, -1):
                    stack.append((node.children[c], depth + 1, index * m + c))
        return out

    def counts(self) -> list[int]:
        level = self.n - len(self.path)
        N = [0] * (level + 1)
        for j, _ in self.blocks():
            N[j] += 1
        return N

    def covered_volume(self) -> int:
        return sum(c << (self.d * j) for j, c in enumerate(self.counts()))

    def bitmask(self) -> int:
        """Configuration as a bitmask over blocks in depth-first pre-order."""
        m = 1 << self.d
        sizes = {}

        def size(j):
            if j not in sizes:
                sizes[j] = sum(m ** i for i in range(j + 1))
            return sizes[j]

        mask = 0
        stack = [(self.root, 0)]
        while stack:
            node, bit = stack.pop()
            if isinstance(node, Occupied):
                mask |= 1 << bit
            elif isinstance(node, Split):
                for c, child in enumerate(node.children):
                    stack.append((child, bit + 1 + c * size(node.level - 1)))
        return mask


def _sample_node(key: int, level: int, q: Sequence[float], m: int):
    if node_uniform(key) < q[level]:
        return Occupied(level)
    if level == 0:
        return EmptySite()
    return Split(level, tuple(_sample_node(child_key(key, c), level - 1, q, m) for c in range(m)))


def sample_configuration(eff: EffectiveActivities, n: int, seed: int, replica: int = 0,
                         path: Sequence[int] = ()) -> Configuration:
    """One exact sample in the level-n cube (or of the subtree at ``path``).

    ``path`` lists child numbers from the root.  The subtree returned is the
    one the full sample would contain at that node whenever all its ancestors
    split.
    """
    if not 0 <= n <= eff.N:
        raise ValueError(f"level {n} outside 0..{eff.N}")
    params = eff.params
    path = tuple(int(c) for c in path)
    if len(path) > n or any(not 0 <= c < params.m for c in path):
        raise ValueError(f"invalid tree path {path!r}")
    key = root_key(seed, replica)
    for c in path:
        key = child_key(key, c)
    q = occupation_probabilities(eff)
    root = _sample_node(key, n - len(path), q, params.m)
    return Configuration(root, n, eff.d, seed, replica, path, eff.fingerprint())


def _thread_count() -> int:
    env = os.environ.get("HIERCUBES_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


def _batch(q: Sequence[float], d: int, n: int, seed: int, start: int, stop: int, want_masks: bool):
    """Sample replicas [start, stop) level by level; return integer sums."""
    m = 1 << d
    R = stop - start
    replicas = np.arange(start, stop, dtype=np.uint64)
    seed_key = np.uint64(mix64(seed & MASK64))
    keys = _mix64_np(np.full(R, seed_key, dtype=np.uint64) ^ replicas)
    owner = np.arange(R, dtype=np.int64)
    rep = np.ones(R, dtype=bool)
    bits = np.zeros(R, dtype=np.int64)
    size = [sum(m ** i for i in range(j + 1)) for j in range(n + 1)]

    N = np.zeros((R, n + 1), dtype=np.int64)
    fixed = np.zeros(n + 1, dtype=np.int64)
    masks = np.zeros(R, dtype=np.int64) if want_masks else None
    for j in range(n, -1, -1):
        occ = _uniform_np(keys) < q[j]
        N[:, j] = np.bincount(owner[occ], minlength=R)
        fixed[j] = int(np.count_nonzero(occ & rep))
        if want_masks:
            np.add.at(masks, owner[occ], np.left_shift(np.int64(1), bits[occ]))
        if j == 0:
            break
        keep = ~occ
        k, o, r, b = keys[keep], owner[keep], rep[keep], bits[keep]
        keys = np.concatenate([_child_keys_np(k, c) for c in range(m)])
        owner = np.tile(o, m)
        rep = np.concatenate([r] + [np.zeros_like(r)] * (m - 1))
        bits = np.concatenate([b + 1 + c * size[j - 1] for c in range(m)])

    vol = np.array([1 << (d * j) for j in range(n + 1)], dtype=np.float64)
    frac = N * vol / float(1 << (d * n))
    covered = frac.sum(axis=1)
    return {
        "fixed": fixed,
        "N_sum": N.sum(axis=0),
        "frac_sq": (frac ** 2).sum(axis=0),
        "cov_sum": covered.sum(),
        "cov_sq": (covered ** 2).sum(),
        "masks": masks,
    }


def _chunks(R: int, n: int, d: int) -> list[tuple[int, int]]:
    per = max(1, CHUNK_NODES >> (d * n))
    return [(a, min(R, a + per)) for a in range(0, R, per)]


def _run(eff: EffectiveActivities, n: int, replicas: int, seed: int, want_masks: bool):
    if not 0 <= n <= eff.N:
        raise ValueError(f"level {n} outside 0..{eff.N}")
    if replicas < 1:
        raise ValueError("need at least one replica")
    q = occupation_probabilities(eff)
    parts = _chunks(replicas, n, eff.d)
    threads = min(_thread_count(), len(parts))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda ab: _batch(q, eff.d, n, seed, ab[0], ab[1], want_masks), parts))
    else:
        results = [_batch(q, eff.d, n, seed, a, b, want_masks) for a, b in parts]
    return results


def sample_bitmasks(eff: EffectiveActivities, n: int, replicas: int, seed: int) -> np.ndarray:
    """Bitmasks (depth-first block order) of ``replicas`` independent samples."""
    if (1 << eff.d) ** (n + 1) > 1 << 62:
        raise ValueError("cube too large for bitmask output")
    return np.concatenate([r["masks"] for r in _run(eff, n, replicas, seed, True)])


def _mean_se(total: float, sq: float, R: int) -> tuple[float, float]:
    mean = total / R
    if R < 2:
        return mean, math.nan
    var = max(sq - R * mean * mean, 0.0) / (R - 1)
    return mean, math.sqrt(var / R)


@dataclass(frozen=True)
class SampleStats:
    replicas: int
    seed: int
    n: int
    d: int
    rho_fixed: tuple          # (mean, se) per level, representative block
    rho_volume: tuple         # (mean, se) per level, covered-volume average
    sigma: tuple              # (mean, se)
    ensemble: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "replicas": self.replicas,
            "seed": self.seed,
            "n": self.n,
            "d": self.d,
            "rho_fixed": [{"mean": m, "se": s} for m, s in self.rho_fixed],
            "rho_volume": [{"mean": m, "se": s} for m, s in self.rho_volume],
            "sigma": {"mean": self.sigma[0], "se": self.sigma[1]},
        }


def sample_stats(eff: EffectiveActivities, n: int, replicas: int, seed: int) -> SampleStats:
    """Empirical densities over ``replicas`` samples, merged in a fixed chunk order."""
    results = _run(eff, n, replicas, seed, False)
    R = replicas
    fixed = np.sum([r["fixed"] for r in results], axis=0)
    N_sum = np.sum([r["N_sum"] for r in results], axis=0)
    frac_sq = np.sum([r["frac_sq"] for r in results], axis=0)
    cov_sum = math.fsum(r["cov_sum"] for r in results)
    cov_sq = math.fsum(r["cov_sq"] for r in results)
    rho_fixed = tuple(_mean_se(float(f), float(f), R) for f in fixed)
    scale = [float(1 << (eff.d * j)) / float(1 << (eff.d * n)) for j in range(n + 1)]
    rho_vol = tuple(_mean_se(float(N_sum[j]) * scale[j], float(frac_sq[j]), R) for j in range(n + 1))
    return SampleStats(R, seed, n, eff.d, rho_fixed, rho_vol, _mean_se(cov_sum, cov_sq, R),
                       eff.fingerprint())


def empirical_densities(configs: Iterable[Configuration]) -> SampleStats:
    """Statistics of an explicit stream of full-cube configurations."""
    configs = list(configs)
    if not configs:
        raise ValueError("no configurations")
    first = configs[0]
    key = (first.n, first.d, first.ensemble, first.path)
    for c in configs:
        if (c.n, c.d, c.ensemble, c.path) != key:
            raise MixedEnsembles("configurations come from different ensembles or subtrees")
    n, d, R = first.n - len(first.path), first.d, len(configs)
    fixed = [0] * (n + 1)
    N_tot = [0] * (n + 1)
    frac_sq = [0.0] * (n + 1)
    covs = []
    total = float(1 << (d * n))
    for c in configs:
        N = c.counts()
        for j, off in c.blocks():
            if not any(off):
                fixed[j] += 1
        for j in range(n + 1):
            N_tot[j] += N[j]
            frac_sq[j] += (N[j] * (1 << (d * j)) / total) ** 2
        covs.append(c.covered_volume() / total)
    rho_fixed = tuple(_mean_se(f, f, R) for f in fixed)
    rho_vol = tuple(_mean_se(N_tot[j] * (1 << (d * j)) / total, frac_sq[j], R) for j in range(n + 1))
    sigma = _mean_se(math.fsum(covs), math.fsum(x * x for x in covs), R)
    return SampleStats(R, first.seed, n, d, rho_fixed, rho_vol, sigma, first.ensemble)


CONSTANT_Q_NOTE = ("level-dependent occupation probabilities are used; they reduce to a single "
                   "q = 1/v only when v_n does not depend on n")


def fractal_export(config: Configuration, eff: EffectiveActivities | None = None) -> dict:
    """Occupied blocks rescaled into the unit cube ``[0,1]^d``."""
    level = config.n - len(config.path)
    cubes = []
    for j, off in sorted(config.blocks()):
        side = math.ldexp(1.0, j - level)
        cubes.append({"level": j, "corner": [k * side for k in off], "side": side})
    out = {"d": config.d, "n": level, "seed": config.seed, "cubes": cubes,
           "covered_volume": math.fsum(c["side"] ** config.d for c in cubes)}
    if eff is not None:
        out["full_block_probability"] = list(occupation_probabilities(eff)[:level + 1])
        out["note"] = CONSTANT_Q_NOTE
    return out
