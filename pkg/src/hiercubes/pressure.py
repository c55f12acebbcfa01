"""Effective activities, finite-volume pressures and the infinite-volume pressure.

The recursion ``Xi_n = z_n + Xi_{n-1}**(2**d)`` is run on the reduced log
partition function ``y_n = log Xi_n - |B_n| * theta_ref`` where ``theta_ref`` is
the model's reference rate (``mu - e_inf`` for energy models, 0 for tables).
With that shift ``log zhat_n = log u_n - 2**d * y_{n-1}`` involves no
cancellation between terms of size ``|B_n| mu``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

from .core import INF, LINEAR_LOG_CAP, ActivityModel, LatticeParams, TableModel
from .errors import Divergent, Undetermined, UnstableModel


def log1pexp(x: float) -> float:
    """``log(1 + exp(x))`` without overflow."""
    if x == -INF:
        return 0.0
    if x > 35.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def _materialize(lx: float) -> float:
    return INF if lx >= LINEAR_LOG_CAP else math.exp(lx)


@dataclass(frozen=True)
class RegimeConfig:
    """Thresholds for the summable/divergent heuristics (engineering choices)."""

    small: float = 1e-6       # zhat below this counts as decayed
    run: int = 8              # consecutive non-decayed levels for "divergent"
    collapse: float = 0.5     # a step ratio below this counts as geometric decay
    sum_cap: float = 1e3      # sum of zhat above this is "divergent" outright
    tail_ratio: float = 0.5   # extrapolation only trusted for ratios below this


DEFAULT_REGIME = RegimeConfig()


@dataclass(frozen=True)
class EffectiveActivities:
    d: int
    log_zhat: tuple
    p_partial: tuple
    log_xi_reduced: tuple
    theta_ref: float
    tail_bound: float = math.nan

    @property
    def N(self) -> int:
        return len(self.log_zhat) - 1

    @property
    def params(self) -> LatticeParams:
        return LatticeParams(self.d)

    @property
    def zhat(self) -> tuple:
        return tuple(_materialize(lz) for lz in self.log_zhat)

    def log1p_zhat(self) -> list[float]:
        return [log1pexp(lz) for lz in self.log_zhat]

    def truncate(self, N: int) -> "EffectiveActivities":
        if N > self.N:
            raise ValueError(f"cannot truncate level {self.N} data at {N}")
        return replace(self, log_zhat=self.log_zhat[:N + 1], p_partial=self.p_partial[:N + 1],
                       log_xi_reduced=self.log_xi_reduced[:N + 1])

    def fingerprint(self) -> str:
        """Short digest identifying the ensemble (used to refuse mixed samples)."""
        h = hashlib.sha256(repr((self.d, self.log_zhat)).encode())
        return h.hexdigest()[:16]


def theta_star(model: ActivityModel, params: LatticeParams) -> float:
    """Tail value of ``log(z_j)/|B_j|`` (``-inf`` for finite tables)."""
    if isinstance(model, TableModel):
        return -INF
    return model.mu - model.e_inf


def effective_activities(model: ActivityModel, params: LatticeParams, N: int) -> EffectiveActivities:
    if N < 0:
        raise ValueError("truncation level must be >= 0")
    if model.max_level is not None and N > model.max_level:
        raise ValueError(f"model is only defined up to level {model.max_level}, asked for {N}")
    th = theta_star(model, params)
    if th == INF or math.isnan(th):
        raise UnstableModel(f"theta* = {th} on levels 0..{N}")

    m = params.m
    ref = model.reference_rate(params)
    lz0 = model.log_activity(0, params)
    L = [log1pexp(lz0)]
    log_zhat = [lz0]
    y = [L[0] - ref]
    p = [L[0]]
    for j in range(1, N + 1):
        lzh = model.log_reduced_activity(j, params) - m * y[-1]
        Lj = log1pexp(lzh)
        log_zhat.append(lzh)
        L.append(Lj)
        y.append(m * y[-1] + Lj)
        p.append(math.fsum(L[k] / params.volume(k) for k in range(j + 1)))
    return EffectiveActivities(params.d, tuple(log_zhat), tuple(p), tuple(y), ref)


def _ratio(log_a: float, log_b: float) -> float:
    """exp(log_a - log_b) with 0/0 -> 0 and x/0 -> inf."""
    if log_a == -INF:
        return 0.0
    if log_b == -INF:
        return INF
    return math.exp(min(log_a - log_b, 700.0))


def geometric_tail(log_terms: list[float], N: int, max_ratio: float) -> float:
    """Extrapolated ``sum_{k>N} t_k`` from the last three terms (inf if not decaying)."""
    if N < 2:
        return INF
    r = max(_ratio(log_terms[N], log_terms[N - 1]), _ratio(log_terms[N - 1], log_terms[N - 2]))
    if r >= max_ratio:
        return INF
    if log_terms[N] == -INF:
        return 0.0
    return math.exp(log_terms[N]) * r / (1.0 - r)


def classify_regime(eff: EffectiveActivities, cfg: RegimeConfig = DEFAULT_REGIME) -> str:
    """'divergent' if sum zhat_j looks infinite on the computed window, else 'summable'.

    Only the divergence side is decided here; whether the summable side has
    converged is the tail test's job.
    """
    zh = eff.zhat
    # a huge sum only counts while the last level has not decayed
    if math.fsum(zh) > cfg.sum_cap and zh[-1] >= cfg.small:
        return "divergent"
    if eff.N >= cfg.run:
        window = range(eff.N - cfg.run + 1, eff.N + 1)
        if all(zh[k] >= cfg.small for k in window) and \
                all(_ratio(eff.log_zhat[k], eff.log_zhat[k - 1]) >= cfg.collapse for k in window):
            return "divergent"
    return "summable"


@dataclass(frozen=True)
class PressureResult:
    p: float
    converged: bool
    N_used: int
    regime_hint: str
    tail_bound: float
    theta_star: float
    effective: EffectiveActivities = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "N_used": self.N_used,
            "converged": self.converged,
            "regime_hint": self.regime_hint,
            "tail_bound": self.tail_bound,
            "theta_star": self.theta_star,
            "zhat": list(self.effective.zhat),
            "p_partial": list(self.effective.p_partial),
        }


def _level_cap(model: ActivityModel, N_max: int) -> int:
    if model.max_level is None:
        return N_max
    return min(N_max, model.max_level)


def pressure(model: ActivityModel, params: LatticeParams, tol: float = 1e-10, N_max: int = 48,
             cfg: RegimeConfig = DEFAULT_REGIME, strict: bool = False) -> PressureResult:
    """Infinite-volume pressure with an extrapolated tail.

    In the summable regime ``p`` is ``p_N`` at the first level whose tail
    estimate drops below ``tol``; ``effective`` is truncated at that level so
    densities computed from it are consistent with ``p``.  In the divergent
    regime ``p = theta*``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    N_cap = _level_cap(model, N_max)
    eff = effective_activities(model, params, N_cap)
    th = theta_star(model, params)
    exact_table = isinstance(model, TableModel) and model.support_end <= N_cap

    if not exact_table and classify_regime(eff, cfg) == "divergent":
        return PressureResult(th, True, N_cap, "divergent", 0.0, th, replace(eff, tail_bound=0.0))

    if exact_table:
        # exact: every later effective activity vanishes
        N = max(model.support_end, 0)
        out = eff.truncate(N)
        return PressureResult(out.p_partial[-1], True, N, "summable", 0.0, th,
                              replace(out, tail_bound=0.0))

    log_t = [lz - params.log_block_volume(k) for k, lz in enumerate(eff.log_zhat)]
    p_last = eff.p_partial[-1]
    for N in range(2, N_cap + 1):
        tail = geometric_tail(log_t, N, cfg.tail_ratio)
        if tail < tol and p_last - eff.p_partial[N] <= tail + tol:
            out = eff.truncate(N)
            return PressureResult(out.p_partial[-1], True, N, "summable", tail, th,
                                  replace(out, tail_bound=tail))

    if strict:
        raise Undetermined(f"neither convergence nor divergence certified up to level {N_cap}")
    tail = geometric_tail(log_t, N_cap, cfg.tail_ratio)
    return PressureResult(p_last, False, N_cap, "undetermined", tail, th,
                          replace(eff, tail_bound=tail))


def log_partition_function(model: ActivityModel, params: LatticeParams, n: int) -> float:
    """``log Xi_{Lambda_n}``; the partition function itself is never formed."""
    eff = effective_activities(model, params, n)
    y = eff.log_xi_reduced[n]
    if eff.theta_ref == 0.0:
        return y
    return y + params.volume(n) * eff.theta_ref


def bernoulli_pressure(model: ActivityModel, params: LatticeParams, tol: float = 1e-10,
                       N_max: int = 48, cap: float = 1e6) -> float:
    """Pressure of the ideal mixture, ``sum_j log(1 + z_j)/|B_j|``.

    Terms of this series decay at best geometrically (ratio 2**-d), so the tail
    extrapolation accepts any ratio below one.
    """
    N_cap = _level_cap(model, N_max)
    if isinstance(model, TableModel):
        N_cap = min(N_cap, max(model.support_end, 0))
    terms = [log1pexp(model.log_activity(j, params)) / params.volume(j) for j in range(N_cap + 1)]
    total = math.fsum(terms)
    if total > cap:
        raise Divergent(f"ideal-mixture pressure exceeds {cap} by level {N_cap}")
    if isinstance(model, TableModel) and model.support_end <= N_cap:
        return total
    log_t = [math.log(t) if t > 0 else -INF for t in terms]
    for N in range(2, N_cap + 1):
        tail = geometric_tail(log_t, N, 1.0)
        partial = math.fsum(terms[:N + 1])
        if tail < tol and total - partial <= tail + tol:
            return partial + tail
    raise Divergent(f"ideal-mixture series shows no tail decay up to level {N_cap}")
