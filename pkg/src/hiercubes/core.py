"""Lattice geometry, activity models and stability diagnostics.

A j-block is a cube of side 2**j aligned to the dyadic grid of Z^d.  Activities
are either an explicit finite table (zero beyond its end) or come from block
energies via ``z_j = exp(|B_j| * mu - E_j)``.  Everything is evaluated in the
log domain first because ``z_j`` grows like ``exp(|B_j| mu)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

from .errors import ConfigError

INF = math.inf
# exp() of anything above this is not materialized as a linear value
LINEAR_LOG_CAP = 700.0
E_INF_RTOL = 1e-9


class EInfWarning(UserWarning):
    """Supplied energies do not settle on the declared bulk energy."""


@dataclass(frozen=True)
class LatticeParams:
    d: int

    def __post_init__(self):
        if not isinstance(self.d, int) or isinstance(self.d, bool) or self.d < 1:
            raise ConfigError(f"dimension must be a positive integer, got {self.d!r}")

    @property
    def m(self) -> int:
        """Children per split, 2**d."""
        return 1 << self.d

    def block_volume(self, j: int) -> int:
        if j < 0:
            raise ValueError("level must be >= 0")
        return 1 << (self.d * j)

    def log_block_volume(self, j: int) -> float:
        return self.d * j * math.log(2.0)

    def volume(self, j: int) -> float:
        """|B_j| as a float (exact for every level that fits a double)."""
        return math.ldexp(1.0, self.d * j)


def block_volume(params: LatticeParams, j: int) -> int:
    return params.block_volume(j)


def node_offset(params: LatticeParams, depth: int, index: int) -> tuple[int, ...]:
    """Offset vector (in units of the block side) of a node in a hierarchy tree.

    Nodes ``depth`` splits below the root are numbered ``0 .. m**depth - 1``
    with the path digits (base m, most significant first) as the index.  Bit
    ``a`` of a digit selects the upper half along axis ``a``.
    """
    m = params.m
    offset = [0] * params.d
    for t in range(depth):
        digit = (index // m ** (depth - 1 - t)) % m
        for a in range(params.d):
            offset[a] = 2 * offset[a] + ((digit >> a) & 1)
    return tuple(offset)


def _log_of(x) -> float:
    if x < 0:
        raise ConfigError(f"activities must be non-negative, got {x!r}")
    if x == 0:
        return -INF
    if isinstance(x, Fraction):
        return math.log(x.numerator) - math.log(x.denominator)
    return math.log(x)


class ActivityModel:
    """Common surface of the three activity variants."""

    kind = "abstract"

    def log_activity(self, j: int, params: LatticeParams) -> float:
        raise NotImplementedError

    def reference_rate(self, params: LatticeParams) -> float:
        """Rate subtracted per site before recursing (see ``log_reduced_activity``)."""
        raise NotImplementedError

    def log_reduced_activity(self, j: int, params: LatticeParams) -> float:
        """``log z_j - |B_j| * reference_rate``, evaluated without cancellation."""
        raise NotImplementedError

    @property
    def max_level(self) -> int | None:
        """Last level for which the model is defined (None: all levels)."""
        return None

    def activity(self, j: int, params: LatticeParams) -> float:
        lz = self.log_activity(j, params)
        if lz >= LINEAR_LOG_CAP:
            return INF
        return math.exp(lz)


@dataclass(frozen=True)
class TableModel(ActivityModel):
    """Explicit activities ``z_0..z_K``; every later level has activity 0."""

    z: tuple

    kind = "table"

    def __post_init__(self):
        z = tuple(self.z)
        for x in z:
            if isinstance(x, bool) or not isinstance(x, (int, float, Fraction)):
                raise ConfigError(f"activity entries must be numbers, got {x!r}")
            if not (x >= 0) or x == INF:
                raise ConfigError(f"activities must be finite and >= 0, got {x!r}")
        object.__setattr__(self, "z", z)

    def log_activity(self, j, params):
        if j < 0:
            raise ValueError("level must be >= 0")
        if j >= len(self.z):
            return -INF
        return _log_of(self.z[j])

    def reference_rate(self, params):
        return 0.0

    def log_reduced_activity(self, j, params):
        return self.log_activity(j, params)

    @property
    def support_end(self) -> int:
        """Index of the last nonzero activity (-1 if all vanish)."""
        for j in range(len(self.z) - 1, -1, -1):
            if self.z[j] != 0:
                return j
        return -1


@dataclass(frozen=True)
class EnergyModel(ActivityModel):
    """``z_j(mu) = exp(|B_j| mu - E_j)`` for a supplied prefix ``E_0..E_K``.

    Levels beyond the prefix are undefined; computations truncate there.
    """

    E: tuple
    e_inf: float
    mu: float

    kind = "energy"

    def __post_init__(self):
        E = tuple(float(x) for x in self.E)
        if not E:
            raise ConfigError("energy prefix must not be empty")
        if any(math.isnan(x) or x == -INF for x in E):
            raise ConfigError("energies must be real or +inf")
        if all(x == INF for x in E):
            raise ConfigError("at least one energy must be finite")
        if not math.isfinite(self.e_inf) or not math.isfinite(self.mu):
            raise ConfigError("e_inf and mu must be finite reals")
        object.__setattr__(self, "E", E)

    @classmethod
    def from_reduced(cls, u: Sequence[float], e_inf: float, mu: float, d: int) -> "EnergyModel":
        """Build energies from reduced activities ``u_j = exp(|B_j| e_inf - E_j)``."""
        params = LatticeParams(d)
        E = []
        for j, uj in enumerate(u):
            E.append(INF if uj == 0 else params.volume(j) * e_inf - math.log(uj))
        return cls(tuple(E), e_inf, mu)

    @classmethod
    def surface(cls, J: float, d: int, levels: int, mu: float = 0.0) -> "EnergyModel":
        """Bulk plus boundary energy ``E_j = J(-|B_j| + 2d 2**(j(d-1)))``."""
        params = LatticeParams(d)
        E = tuple(J * (-params.volume(j) + 2 * d * math.ldexp(1.0, j * (d - 1)))
                  for j in range(levels + 1))
        return cls(E, -J, mu)

    @property
    def max_level(self):
        return len(self.E) - 1

    def energy(self, j: int) -> float:
        if j < 0 or j >= len(self.E):
            raise IndexError(f"energy E_{j} not supplied (prefix has {len(self.E)} entries)")
        return self.E[j]

    def log_activity(self, j, params):
        Ej = self.energy(j)
        if Ej == INF:
            return -INF
        return params.volume(j) * self.mu - Ej

    def reference_rate(self, params):
        return self.mu - self.e_inf

    def log_reduced_activity(self, j, params):
        Ej = self.energy(j)
        if Ej == INF:
            return -INF
        return params.volume(j) * self.e_inf - Ej

    def with_mu(self, mu: float) -> "EnergyModel":
        return replace(self, mu=float(mu))


@dataclass(frozen=True)
class ConstantEnergyModel(ActivityModel):
    """Every block costs the same energy: ``E_j = lam`` for all j, so e_inf = 0."""

    lam: float
    mu: float

    kind = "constant_energy"

    def __post_init__(self):
        if not math.isfinite(self.lam) or not math.isfinite(self.mu):
            raise ConfigError("lambda and mu must be finite reals")

    e_inf = 0.0

    def energy(self, j: int) -> float:
        return self.lam

    def log_activity(self, j, params):
        return params.volume(j) * self.mu - self.lam

    def reference_rate(self, params):
        return self.mu

    def log_reduced_activity(self, j, params):
        return -self.lam

    def with_mu(self, mu: float) -> "ConstantEnergyModel":
        return replace(self, mu=float(mu))


def activity(model: ActivityModel, params: LatticeParams, j: int) -> float:
    return model.activity(j, params)


def log_activity(model: ActivityModel, params: LatticeParams, j: int) -> float:
    return model.log_activity(j, params)


def check_energy_tail(model: EnergyModel, params: LatticeParams) -> float:
    """Largest relative deviation of ``E_j/|B_j|`` from e_inf on the last quarter.

    Deviations above 1e-9 only warn: short prefixes are legitimate input.
    """
    K = len(model.E)
    start = K - max(1, K // 4)
    worst = 0.0
    for j in range(start, K):
        Ej = model.E[j]
        if Ej == INF:
            continue
        dev = abs(Ej / params.volume(j) - model.e_inf) / max(1.0, abs(model.e_inf))
        worst = max(worst, dev)
    if worst > E_INF_RTOL:
        warnings.warn(
            f"E_j/|B_j| deviates from e_inf by {worst:.3g} (relative) on the last "
            f"{K - start} supplied levels", EInfWarning, stacklevel=2)
    return worst


@dataclass(frozen=True)
class StabilityReport:
    theta_star: float
    stable: bool
    window: tuple[int, int]
    window_max: float
    tail_limit: float


def stability_report(model: ActivityModel, params: LatticeParams,
                     window: tuple[int, int] | None = None) -> StabilityReport:
    """Estimate ``theta* = limsup log(z_j)/|B_j|``.

    ``window`` is an inclusive level range; by default 0..min(max_level, 48).
    ``window_max`` is the plain maximum over the window, ``tail_limit`` the
    value the zero-extended or parametric sequence tends to.
    """
    if window is None:
        hi = 48 if model.max_level is None else min(48, model.max_level)
        window = (0, hi)
    lo, hi = window
    if hi < lo or lo < 0:
        raise ValueError(f"empty level window {window!r}")
    if model.max_level is not None and hi > model.max_level:
        raise ValueError(f"window exceeds the last defined level {model.max_level}")
    window_max = max(model.log_activity(j, params) / params.volume(j)
                     for j in range(lo, hi + 1))

    if isinstance(model, TableModel):
        # zero-extended: log 0 = -inf from the end of the table onwards
        tail = -INF
    else:
        if isinstance(model, EnergyModel):
            check_energy_tail(model, params)
        tail = model.mu - model.e_inf
    theta = tail
    return StabilityReport(theta_star=theta, stable=theta < INF, window=(lo, hi),
                           window_max=window_max, tail_limit=tail)


def theta_norm(model: ActivityModel, params: LatticeParams, theta: float, N: int) -> float:
    """Truncated ``||z||_theta = sum_j z_j exp(-theta |B_j|) / |B_j|`` over j <= N."""
    terms = []
    for j in range(N + 1):
        lz = model.log_activity(j, params)
        if lz == -INF:
            continue
        v = params.volume(j)
        x = lz - theta * v - math.log(v)
        if x > 709.0:
            return INF
        terms.append(math.exp(x))
    return math.fsum(terms)
