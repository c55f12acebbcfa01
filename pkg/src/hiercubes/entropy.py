"""Multicanonical entropy, its power-series form, chemical potentials and free energy."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

from .core import INF, ActivityModel, LatticeParams, TableModel
from .density import DensityProfile
from .errors import InfeasibleCounts, InfiniteEnergyOccupied, InvalidProfile, OutsideUnitBall, SaturatedProfile
from .pressure import theta_star

try:
    # math.comb is quadratic on large arguments before Python 3.12
    from gmpy2 import comb as _comb
except ImportError:  # pragma: no cover
    _comb = math.comb

DEFAULT_PHI_ORDER = 60


def _xlogy_ratio(x: float, a: float, b: float) -> float:
    """``x * log(a/b)`` with every degenerate case (x=0 or b=0) read as 0."""
    if x == 0 or b == 0:
        return 0.0
    return x * (math.log(a) - math.log(b))


def _gaps(profile: DensityProfile) -> list[float]:
    """``1 - sigma_j`` for j = 0..N+1 (the last one is ``1 - sigma_inf``)."""
    return [max(profile.one_minus_sigma(j), 0.0) for j in range(len(profile.rho) + 1)]


def effective_densities(profile: DensityProfile) -> tuple:
    """``rho_j / (1 - sigma_{j+1})``, with 0/0 read as 0."""
    gaps = _gaps(profile)
    out = []
    for j, r in enumerate(profile.rho):
        out.append(0.0 if r == 0 else min(r / gaps[j + 1], 1.0) if gaps[j + 1] > 0 else 1.0)
    return tuple(out)


def entropy(profile: DensityProfile, params: LatticeParams) -> float:
    """Entropy per site of the block-size distribution ``(rho, sigma_inf)``."""
    gaps = _gaps(profile)
    terms = []
    for j, r in enumerate(profile.rho):
        t = _xlogy_ratio(r, r, gaps[j + 1]) + _xlogy_ratio(gaps[j], gaps[j], gaps[j + 1])
        terms.append(-t / params.volume(j))
    return math.fsum(terms)


def entropy_bound(profile: DensityProfile, params: LatticeParams) -> float:
    """Upper bound ``sum_j (1 - sigma_{j+1}) log 2 / |B_j|`` on the entropy."""
    gaps = _gaps(profile)
    return math.fsum(gaps[j + 1] * math.log(2.0) / params.volume(j) for j in range(len(profile.rho)))


def _binary_entropy(x: float) -> float:
    if x <= 0 or x >= 1:
        return 0.0
    return -(x * math.log(x) + (1 - x) * math.log1p(-x))


def hat_entropy(profile: DensityProfile, params: LatticeParams) -> float:
    """Same entropy written with effective densities: a weighted sum of binary entropies."""
    gaps = _gaps(profile)
    hat = effective_densities(profile)
    return math.fsum(gaps[j + 1] * _binary_entropy(h) / params.volume(j) for j, h in enumerate(hat))


def bernoulli_entropy(profile: DensityProfile, params: LatticeParams) -> float:
    """Entropy of independent blocks with the same densities (ideal mixture)."""
    return math.fsum(_binary_entropy(r) / params.volume(j) for j, r in enumerate(profile.rho))


def phi_series(profile: DensityProfile, params: LatticeParams,
               M: int = DEFAULT_PHI_ORDER) -> tuple[float, float]:
    """Truncated power series ``Phi_M`` and a bound on ``|Phi - Phi_M|``.

    Valid inside the unit ball ``sum_j |rho_j| + sigma_inf < 1``.
    """
    if M < 2:
        raise ValueError("series order must be >= 2")
    r = math.fsum(abs(x) for x in profile.rho) + abs(profile.sigma_inf)
    if r >= 1:
        raise OutsideUnitBall(f"norm {r!r} is not below 1")
    sig = [profile.sigma_level(j) for j in range(len(profile.rho) + 1)]
    terms = []
    for order in range(2, M + 1):
        w = 1.0 / (order * (order - 1))
        for j in range(len(profile.rho)):
            diff = sig[j] ** order - sig[j + 1] ** order
            if diff:
                terms.append(w * diff / params.volume(j))
    tail = r ** (M + 1) / (1 - r) if r > 0 else 0.0
    return math.fsum(terms), tail


def entropy_from_series(profile: DensityProfile, params: LatticeParams,
                        M: int = DEFAULT_PHI_ORDER) -> tuple[float, float]:
    """Entropy through ``-sum_j rho_j (log rho_j - 1)/|B_j| - Phi``, with the series tail bound."""
    phi, tail = phi_series(profile, params, M)
    lead = math.fsum(-r * (math.log(r) - 1) / params.volume(j)
                     for j, r in enumerate(profile.rho) if r > 0)
    return lead - phi, tail


@dataclass(frozen=True)
class ChemicalPotentials:
    mu: tuple
    mu_inf: float


def chemical_potentials(profile: DensityProfile, params: LatticeParams) -> ChemicalPotentials:
    """Per-species chemical potentials conjugate to the densities."""
    gaps = _gaps(profile)
    hat = []
    for j, r in enumerate(profile.rho):
        if r == 0:
            hat.append(0.0)
            continue
        h = r / gaps[j + 1] if gaps[j + 1] > 0 else 1.0
        if h >= 1.0:
            raise SaturatedProfile(f"effective density at level {j} reaches 1")
        hat.append(h)
    # log(1 - hat_k)/|B_k|, accumulated as prefix sums
    logs = [math.log1p(-h) / params.volume(k) for k, h in enumerate(hat)]
    mu = []
    for j, h in enumerate(hat):
        lead = -INF if h == 0 else math.log(h) - math.log1p(-h)
        mu.append(lead - params.volume(j) * math.fsum(logs[:j]))
    return ChemicalPotentials(tuple(mu), -math.fsum(logs))


def bernoulli_chemical_potentials(profile: DensityProfile) -> ChemicalPotentials:
    mu = []
    for r in profile.rho:
        if r >= 1:
            raise SaturatedProfile("density 1 has no finite chemical potential")
        mu.append(-INF if r == 0 else math.log(r) - math.log1p(-r))
    return ChemicalPotentials(tuple(mu), 0.0)


def _energy_of(model, j: int) -> float:
    try:
        return model.energy(j)
    except IndexError as exc:
        raise InvalidProfile(str(exc)) from None


def free_energy(profile: DensityProfile, model, params: LatticeParams) -> float:
    """``sum_j rho_j E_j/|B_j| + sigma_inf e_inf - s`` for an energy-based model."""
    if not hasattr(model, "energy"):
        raise InvalidProfile("free energy needs a model with block energies")
    terms = []
    for j, r in enumerate(profile.rho):
        if r == 0:
            continue
        Ej = _energy_of(model, j)
        if Ej == INF:
            raise InfiniteEnergyOccupied(f"rho_{j} > 0 but E_{j} is infinite")
        terms.append(r * Ej / params.volume(j))
    if profile.sigma_inf:
        terms.append(profile.sigma_inf * model.e_inf)
    terms.append(-entropy(profile, params))
    return math.fsum(terms)


class TableLegendreWarning(UserWarning):
    """Variational formula evaluated on a condensed profile for a table model."""


def legendre_objective(profile: DensityProfile, model: ActivityModel, params: LatticeParams) -> float:
    """``sum_j rho_j log z_j/|B_j| + sigma_inf theta* + s``; maximal at the equilibrium profile."""
    th = theta_star(model, params)
    if profile.sigma_inf > 0 and isinstance(model, TableModel):
        warnings.warn("table activities have no limit rate; objective on sigma_inf > 0 is not "
                      "covered by the variational formula", TableLegendreWarning, stacklevel=2)
    terms = []
    for j, r in enumerate(profile.rho):
        if r == 0:
            continue
        lz = model.log_activity(j, params)
        if lz == -INF:
            return -INF
        terms.append(r * lz / params.volume(j))
    if profile.sigma_inf > 0:
        if th == -INF:
            return -INF
        terms.append(profile.sigma_inf * th)
    terms.append(entropy(profile, params))
    return math.fsum(terms)


def exact_multicanonical_logcount(params: LatticeParams, n: int, counts: Sequence[int]) -> float:
    """Log of the number of configurations in the level-n cube with ``counts[j]`` j-blocks.

    Blocks are placed largest first; after placing the bigger ones the free
    j-slots are counted exactly with integer binomials.
    """
    if n < 0:
        raise ValueError("level must be >= 0")
    counts = list(counts)
    if len(counts) > n + 1:
        if any(counts[n + 1:]):
            raise InfeasibleCounts(f"blocks above level {n} do not fit in the level-{n} cube")
        counts = counts[:n + 1]
    counts += [0] * (n + 1 - len(counts))
    for c in counts:
        if isinstance(c, bool) or not isinstance(c, int) or c < 0:
            raise InfeasibleCounts(f"counts must be non-negative integers, got {c!r}")
    total = params.block_volume(n)
    used = 0
    logs = []
    for j in range(n, -1, -1):
        slots = (total - used) // params.block_volume(j)
        if counts[j] > slots:
            raise InfeasibleCounts(f"{counts[j]} blocks of level {j} but only {slots} free slots")
        logs.append(math.log(int(_comb(slots, counts[j]))))
        used += counts[j] * params.block_volume(j)
    return math.fsum(logs)


def round_counts(profile: DensityProfile, params: LatticeParams, n: int) -> list[int]:
    """Block counts ``N_j ~ rho_j |Lambda_n| / |B_j|`` by largest remainder under the volume cap."""
    total = params.block_volume(n)
    targets = [r * total / params.block_volume(j) if j <= n else 0.0
               for j, r in enumerate(profile.rho)][:n + 1]
    targets += [0.0] * (n + 1 - len(targets))
    counts = [math.floor(t) for t in targets]
    want = round(math.fsum(t * params.block_volume(j) for j, t in enumerate(targets)))
    used = sum(c * params.block_volume(j) for j, c in enumerate(counts))
    order = sorted(range(n + 1), key=lambda j: targets[j] - counts[j], reverse=True)
    for j in order:
        if targets[j] - counts[j] <= 0:
            break
        if used + params.block_volume(j) <= min(want, total) or \
                (used + params.block_volume(j) <= total and targets[j] - counts[j] >= 0.5):
            counts[j] += 1
            used += params.block_volume(j)
    return counts
