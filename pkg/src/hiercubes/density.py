"""Block densities, packing fraction and their inversion back to activities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .core import INF, LINEAR_LOG_CAP, LatticeParams
from .errors import InvalidProfile, SaturatedProfile, Undetermined
from .pressure import EffectiveActivities, PressureResult, classify_regime, log1pexp

# tail sums this close to one make the inversion denominator vanish
SATURATION_EPS = 1e-12
# slack for invariant checks on profiles built from rounded floats
PROFILE_TOL = 1e-12


@dataclass(frozen=True)
class DensityProfile:
    """Block densities rho_0..rho_N, packing fraction and condensed fraction."""

    rho: tuple
    sigma: float
    sigma_inf: float = 0.0
    N: int | None = None

    def __post_init__(self):
        rho = tuple(float(r) for r in self.rho)
        object.__setattr__(self, "rho", rho)
        if self.N is None:
            object.__setattr__(self, "N", len(rho) - 1)
        if any(not math.isfinite(r) for r in rho) or not math.isfinite(self.sigma_inf):
            raise InvalidProfile("densities must be finite")
        if any(r < 0 or r > 1 for r in rho):
            raise InvalidProfile("each rho_j must lie in [0, 1]")
        if self.sigma_inf < 0:
            raise InvalidProfile("sigma_inf must be >= 0")
        total = math.fsum(rho) + self.sigma_inf
        if total > 1 + PROFILE_TOL:
            raise InvalidProfile(f"sum rho_j + sigma_inf = {total!r} exceeds 1")
        if abs(total - self.sigma) > 1e-9 or self.sigma > 1 + PROFILE_TOL:
            raise InvalidProfile(f"sigma = {self.sigma!r} inconsistent with the densities ({total!r})")

    @classmethod
    def from_rho(cls, rho: Sequence[float], sigma_inf: float = 0.0) -> "DensityProfile":
        rho = tuple(float(r) for r in rho)
        return cls(rho, math.fsum(rho) + sigma_inf, float(sigma_inf))

    def one_minus_sigma(self, j: int) -> float:
        """``1 - sigma_j`` where ``sigma_j = sigma_inf + sum_{k>=j} rho_k`` (exactly rounded)."""
        return math.fsum([1.0, -self.sigma_inf] + [-r for r in self.rho[j:]])

    def sigma_level(self, j: int) -> float:
        return math.fsum([self.sigma_inf] + list(self.rho[j:]))

    def nu(self, params: LatticeParams) -> tuple:
        """Block number densities ``rho_j/|B_j|``."""
        return tuple(r / params.volume(j) for j, r in enumerate(self.rho))

    def to_dict(self) -> dict:
        return {"rho": list(self.rho), "sigma": self.sigma, "sigma_inf": self.sigma_inf, "N": self.N}


def _log_densities(log_zhat: Sequence[float]) -> tuple[list[float], float]:
    L = [log1pexp(lz) for lz in log_zhat]
    n = len(L)
    suffix = [0.0] * (n + 1)
    for j in range(n - 1, -1, -1):
        suffix[j] = suffix[j + 1] + L[j]
    log_rho = []
    for j, lz in enumerate(log_zhat):
        log_rho.append(-INF if lz == -INF else lz - L[j] - suffix[j + 1])
    return log_rho, suffix[0]


def finite_volume_densities(eff: EffectiveActivities, n: int) -> DensityProfile:
    """Densities in the cube of level n, from the first n+1 effective activities."""
    if n < 0 or n > eff.N:
        raise ValueError(f"level {n} outside 0..{eff.N}")
    log_rho, total_log = _log_densities(eff.log_zhat[:n + 1])
    rho = tuple(math.exp(lr) for lr in log_rho)
    sigma = -math.expm1(-total_log)
    return DensityProfile(rho, sigma, 0.0, n)


def densities(source: EffectiveActivities | PressureResult) -> DensityProfile:
    """Infinite-volume densities.

    Given a ``PressureResult`` its regime and truncation level are used as is.
    Given bare effective activities the regime is classified here and the
    whole sequence is taken as the summable prefix.
    """
    if isinstance(source, PressureResult):
        regime, eff = source.regime_hint, source.effective
    else:
        eff = source
        regime = classify_regime(eff)
    if regime == "undetermined":
        raise Undetermined("regime of sum zhat_j undetermined; densities not defined")
    if regime == "divergent":
        return DensityProfile(tuple(0.0 for _ in range(eff.N + 1)), 1.0, 1.0, eff.N)
    return finite_volume_densities(eff, eff.N)


def _tail_gaps(profile: DensityProfile) -> list[float]:
    """``1 - sum_{k>=j} rho_k`` for every j, refusing saturated profiles."""
    if profile.sigma_inf != 0:
        raise InvalidProfile("inversion requires sigma_inf = 0 (strict gas phase)")
    gaps = [profile.one_minus_sigma(j) for j in range(len(profile.rho))]
    for j, g in enumerate(gaps):
        if g <= SATURATION_EPS:
            raise SaturatedProfile(f"tail sum from level {j} is {1 - g!r}, saturated")
    return gaps


class Inversion(NamedTuple):
    zhat: tuple
    z: tuple
    log_z: tuple
    p: float


def invert_densities(profile: DensityProfile, params: LatticeParams) -> Inversion:
    """Recover effective and bare activities and the pressure from densities."""
    gaps = _tail_gaps(profile)
    zhat, log_z, L = [], [], []
    for j, (r, g) in enumerate(zip(profile.rho, gaps)):
        zh = r / g
        zhat.append(zh)
        p_prev = math.fsum(L[k] / params.volume(k) for k in range(j))
        log_z.append(-INF if r == 0 else math.log(zh) + params.volume(j) * p_prev)
        L.append(math.log1p(zh))
    z = tuple(INF if lz >= LINEAR_LOG_CAP else math.exp(lz) for lz in log_z)
    p = math.fsum(L[k] / params.volume(k) for k in range(len(L)))
    return Inversion(tuple(zhat), z, tuple(log_z), p)


def equation_of_state(profile: DensityProfile, params: LatticeParams) -> float:
    """Pressure as a function of the densities alone."""
    gaps = _tail_gaps(profile)
    return math.fsum(math.log1p(r / g) / params.volume(j)
                     for j, (r, g) in enumerate(zip(profile.rho, gaps)))


def profile_rows(profile: DensityProfile, params: LatticeParams) -> list[dict]:
    """Per-level table rows: j, rho_j, nu_j, zhat_j, z_j (activities blank if saturated)."""
    try:
        inv = invert_densities(profile, params)
    except (SaturatedProfile, InvalidProfile):
        inv = None
    rows = []
    for j, r in enumerate(profile.rho):
        rows.append({
            "j": j,
            "rho_j": r,
            "nu_j": r / params.volume(j),
            "zhat_j": inv.zhat[j] if inv else None,
            "z_j": inv.z[j] if inv else None,
        })
    return rows
