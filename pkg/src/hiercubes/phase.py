"""Phase behaviour of the chemical-potential-dependent model.

Tools: the tangency constant ``c_d`` and critical block energy ``lambda_d``,
fixed points of ``f_eps(x) = 1 + eps x**m``, the inverse full-block
probability ``v_n`` iteration, the certificates for absence of a transition
and for a first-order transition, the ``zeta`` fixed-point solver and a
bisection scan for the critical chemical potential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
from scipy import optimize

from .core import INF, ConstantEnergyModel, EnergyModel, LatticeParams, TableModel
from .density import densities
from .errors import ConfigError, Diverging, NoFixedPoints, Tangent, Undetermined
from .pressure import effective_activities, geometric_tail, log1pexp, pressure

TANGENT_TOL = 1e-14
LAMBDA_BOUNDARY_TOL = 1e-12
ABSENCE_MARGIN = 1e-9
# sum-of-u certificate: relative slack for round-off in the geometric tail
SUM_U_SLACK = 1e-12

NO_TRANSITION = "NoTransition"
CONTINUOUS = "Continuous"
FIRST_ORDER = "FirstOrder"
UNDETERMINED = "Undetermined"


def c_d_exact(params: LatticeParams) -> Fraction:
    m = params.m
    return Fraction((m - 1) ** (m - 1), m ** m)


def c_d(params: LatticeParams) -> float:
    """``sup_{x>=1} (x-1)/x**m``, attained at ``x = m/(m-1)``."""
    return float(c_d_exact(params))


def c_d_numeric(params: LatticeParams) -> float:
    """Same constant by bounded numerical maximization (cross-check)."""
    m = params.m
    res = optimize.minimize_scalar(lambda x: -(x - 1) / x ** m, bounds=(1.0, 4.0), method="bounded",
                                   options={"xatol": 1e-12})
    return -res.fun


def lambda_d(params: LatticeParams) -> float:
    """Critical energy per block of the constant-energy model."""
    return -math.log(c_d(params)) / (params.m - 1)


@dataclass(frozen=True)
class FixedPointPair:
    x_minus: float
    x_plus: float
    eps: float
    residual_minus: float
    residual_plus: float


def _g(x: float, eps: float, m: int) -> float:
    return 1.0 + eps * x ** m - x


def fixed_points(eps: float, params: LatticeParams) -> FixedPointPair:
    """Attractive and repulsive fixed points of ``x -> 1 + eps x**m``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    m = params.m
    c = c_d(params)
    x_star = m / (m - 1)
    if abs(eps - c) < TANGENT_TOL:
        raise Tangent(f"eps = c_d: single neutral fixed point x = {x_star}", x_star)
    if eps > c:
        raise NoFixedPoints(f"eps = {eps!r} > c_d = {c!r}: f(x) > x for every x")

    # iterates from 1 increase monotonically towards x_minus
    x = 1.0
    for _ in range(200):
        nxt = 1.0 + eps * x ** m
        if nxt >= x_star or nxt == x:
            break
        x = nxt
    lo = x if _g(x, eps, m) > 0 else 1.0
    x_minus = optimize.brentq(_g, lo, x_star, args=(eps, m), xtol=1e-15, rtol=1e-15, maxiter=500)
    x_ub = (1.0 / eps) ** (1.0 / (m - 1)) + 1.0
    x_plus = optimize.brentq(_g, x_star, x_ub, args=(eps, m), xtol=1e-15, rtol=1e-15, maxiter=500)
    return FixedPointPair(x_minus, x_plus, eps, abs(_g(x_minus, eps, m)), abs(_g(x_plus, eps, m)))


def _require_energy_model(model):
    if isinstance(model, TableModel) or not hasattr(model, "energy"):
        raise ConfigError("phase analysis needs an energy-based model (table activities have no "
                          "well-defined bulk energy)")


def _level_limit(model, n_max: int) -> int:
    if model.max_level is None:
        return n_max
    return min(n_max, model.max_level)


def log_eps_sequence(model, params: LatticeParams, n_max: int) -> list[float]:
    """``log eps_j = E_j - m E_{j-1}`` for j = 1..n_max (entry 0 is unused, NaN).

    Written as ``m log u_{j-1} - log u_j`` so the bulk parts cancel exactly.
    The chemical potential does not enter.
    """
    _require_energy_model(model)
    n_max = _level_limit(model, n_max)
    m = params.m
    out = [math.nan]
    for j in range(1, n_max + 1):
        lu_prev = model.log_reduced_activity(j - 1, params)
        lu = model.log_reduced_activity(j, params)
        if lu == -INF:
            out.append(INF)
        elif lu_prev == -INF:
            out.append(-INF)
        else:
            out.append(m * lu_prev - lu)
    return out


def v_iteration(model, params: LatticeParams, n_max: int, dps: int | None = None) -> list[float]:
    """``log v_n`` for n = 0..n_max, where ``v_n = Xi_n / z_n``.

    With ``dps`` the recursion runs in mpmath at that many digits and the
    logs are rounded to floats at the end.
    """
    _require_energy_model(model)
    n_max = _level_limit(model, n_max)
    m = params.m
    log_eps = log_eps_sequence(model, params, n_max)
    E0 = model.energy(0)
    if dps is None:
        w = [log1pexp(E0 - model.mu) if E0 != INF else INF]
        for n in range(1, n_max + 1):
            w.append(log1pexp(log_eps[n] + m * w[-1]))
        return w
    with mpmath.workdps(dps):
        v = 1 + mpmath.exp(mpmath.mpf(E0) - mpmath.mpf(model.mu))
        out = [float(mpmath.log(v))]
        for n in range(1, n_max + 1):
            v = 1 + mpmath.exp(mpmath.mpf(log_eps[n])) * v ** m
            out.append(float(mpmath.log(v)))
        return out


@dataclass(frozen=True)
class CriticalOrbit:
    mu_c: float
    x_plus: float
    v: tuple


def critical_orbit(lam: float, params: LatticeParams, n_max: int = 60, dps: int = 60) -> CriticalOrbit:
    """``v_n`` of the constant-energy model at its exact critical point.

    The critical orbit sits on the repulsive fixed point, where every step
    multiplies errors by ``f'(x_plus) > 1``; double precision loses it after a
    few dozen levels, so both the critical point and the orbit are computed
    with ``dps`` digits.
    """
    fp = fixed_points(math.exp(-(params.m - 1) * lam), params)
    m = params.m
    with mpmath.workdps(dps):
        lam_mp = mpmath.mpf(lam)
        eps = mpmath.exp(-(m - 1) * lam_mp)
        x_plus = mpmath.findroot(lambda x: 1 + eps * x ** m - x, mpmath.mpf(fp.x_plus))
        mu_c = lam_mp - mpmath.log(x_plus - 1)
        v = 1 + mpmath.exp(lam_mp - mu_c)
        orbit = [v]
        for _ in range(n_max):
            v = 1 + eps * v ** m
            orbit.append(v)
        return CriticalOrbit(float(mu_c), float(x_plus), tuple(float(x) for x in orbit))


@dataclass(frozen=True)
class PhaseReport:
    kind: str
    mu_c: float
    sigma_c: float | None
    certificate: str
    zeta: tuple | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "mu_c": self.mu_c,
            "sigma_c": self.sigma_c,
            "certificate": self.certificate,
            "zeta": list(self.zeta) if self.zeta is not None else None,
            "details": self.details,
        }


def _tail_window(model, window):
    if window is not None:
        return window
    if model.max_level is None:
        return (1, 16)
    K = model.max_level
    return (max(1, K // 2), K)


def absence_certificate(model, params: LatticeParams, window: tuple[int, int] | None = None,
                        margin: float = ABSENCE_MARGIN) -> bool:
    """True when ``eps_j > c_d + margin`` on the whole tail window.

    False only means no certificate; it does not imply a transition.
    """
    _require_energy_model(model)
    lo, hi = _tail_window(model, window)
    if model.max_level is not None and hi > model.max_level:
        raise ValueError(f"window exceeds the supplied energies (last level {model.max_level})")
    log_eps = log_eps_sequence(model, params, hi)
    worst = min(log_eps[lo:hi + 1])
    return worst > math.log(c_d(params) + margin)


def classify_constant_energy(lam: float, params: LatticeParams) -> PhaseReport:
    lam_c = lambda_d(params)
    if abs(lam - lam_c) <= LAMBDA_BOUNDARY_TOL:
        return PhaseReport(UNDETERMINED, math.nan, None, "ConstantEnergyFixedPoint",
                           details={"lambda_d": lam_c, "reason": "lambda at the tangency value"})
    if lam < lam_c:
        return PhaseReport(NO_TRANSITION, INF, None, "ConstantEnergyFixedPoint",
                           details={"lambda_d": lam_c})
    fp = fixed_points(math.exp(-(params.m - 1) * lam), params)
    mu_c = lam - math.log(fp.x_plus - 1.0)
    return PhaseReport(CONTINUOUS, mu_c, 1.0, "ConstantEnergyFixedPoint",
                       details={"lambda_d": lam_c, "eps": fp.eps, "x_minus": fp.x_minus,
                                "x_plus": fp.x_plus})


@dataclass(frozen=True)
class SumUCheck:
    total: float
    tail_estimate: float
    max_u: float
    summable: bool
    necessary_ok: bool
    certified: bool


def _log_u(model, params, N):
    return [model.log_reduced_activity(j, params) for j in range(N + 1)]


def sum_u_check(model, params: LatticeParams, tol: float = 0.0) -> SumUCheck:
    """Sum of reduced activities ``u_j = exp(|B_j| e_inf - E_j)`` with a geometric tail."""
    _require_energy_model(model)
    N = _level_limit(model, 48)
    log_u = _log_u(model, params, N)
    u = [math.exp(min(lu, 700.0)) for lu in log_u]
    total = math.fsum(u)
    if isinstance(model, ConstantEnergyModel):
        tail = INF if u[0] > 0 else 0.0
    else:
        tail = geometric_tail(log_u, N, 1.0)
        if N < 2 and all(x == 0 for x in u[1:]):
            tail = 0.0
    summable = math.isfinite(tail)
    max_u = max(u)
    necessary_ok = max_u <= 1.0 and summable
    bound = 1.0 / math.e - tol
    certified = necessary_ok and total + tail <= bound + SUM_U_SLACK * (1.0 / math.e)
    return SumUCheck(total, tail, max_u, summable, necessary_ok, certified)


def sum_uj_certificate(model, params: LatticeParams, tol: float = 0.0) -> bool:
    """Sufficient condition ``sum_j u_j <= 1/e`` for a first-order transition."""
    return sum_u_check(model, params, tol).certified


@dataclass(frozen=True)
class ZetaResult:
    zeta: tuple
    residual: float
    converged: bool
    iterations: int
    mu_c_uncertainty: float


def _zeta_map(u: Sequence[float], zeta: Sequence[float], d: int) -> list[float]:
    # exponent_j = sum_{k>=j} log(1+zeta_k) 2**(-d(k-j)), built from the top level down
    out = [0.0] * len(u)
    acc = 0.0
    scale = math.ldexp(1.0, -d)
    for j in range(len(u) - 1, -1, -1):
        acc = math.log1p(zeta[j]) + scale * acc
        out[j] = u[j] * math.exp(acc) if u[j] else 0.0
    return out


def zeta_solver(model, params: LatticeParams, N: int | None = None, tol: float = 1e-15,
                weights: Sequence[float] | None = None, max_iter: int = 100_000) -> ZetaResult:
    """Monotone iteration for ``zeta_j = u_j exp(|B_j| sum_{k>=j} log(1+zeta_k)/|B_k|)``.

    Starts from zero; the first iterate is ``u`` itself.  Iterates must stay
    under the envelope ``u_j exp(a_j)`` (default ``a_j = 1``).
    """
    _require_energy_model(model)
    N = _level_limit(model, 48 if N is None else N)
    log_u = _log_u(model, params, N)
    u = [math.exp(lu) if lu < 700 else INF for lu in log_u]
    a = [1.0] * (N + 1) if weights is None else [float(w) for w in weights][:N + 1]
    if len(a) < N + 1:
        raise ValueError("need one weight per level")
    envelope = [uj * math.exp(aj) for uj, aj in zip(u, a)]

    zeta = [0.0] * (N + 1)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        nxt = _zeta_map(u, zeta, params.d)
        for j, (z, env) in enumerate(zip(nxt, envelope)):
            if z > env * (1 + 1e-12):
                raise Diverging(f"zeta_{j} = {z!r} left the envelope {env!r} at iteration {it}")
        step = max(abs(x - y) for x, y in zip(nxt, zeta))
        zeta = nxt
        if step < tol:
            converged = True
            break
    residual = max(abs(x - y) for x, y in zip(_zeta_map(u, zeta, params.d), zeta))

    # levels above N enter mu_c through log(1+zeta_k)/|B_k| <= u_k e^{a}/|B_k|
    log_terms = [lu - params.log_block_volume(k) for k, lu in enumerate(log_u)]
    beyond = geometric_tail(log_terms, N, 1.0) if N >= 2 else INF
    if model.max_level is not None and all(x == 0 for x in u[1:]) and N >= 1:
        beyond = 0.0
    return ZetaResult(tuple(zeta), residual, converged, it, beyond * math.e)


def first_order_report(model, params: LatticeParams, N: int | None = None,
                       tol: float = 1e-15) -> PhaseReport:
    """Critical point and packing fraction from the ``zeta`` fixed point."""
    res = zeta_solver(model, params, N, tol)
    if not res.converged:
        raise Diverging(f"zeta iteration did not converge in {res.iterations} steps")
    logs = [math.log1p(z) for z in res.zeta]
    mu_c = model.e_inf + math.fsum(L / params.volume(k) for k, L in enumerate(logs))
    total = math.fsum(logs)
    sigma_c = -math.expm1(-total)
    rho_star = []
    suffix = 0.0
    for j in range(len(logs) - 1, -1, -1):
        rho_star.append(math.exp(-suffix) * res.zeta[j] / (1 + res.zeta[j]))
        suffix += logs[j]
    rho_star.reverse()

    eff = effective_activities(model.with_mu(mu_c), params, len(res.zeta) - 1)
    cross = max(abs(z - zh) for z, zh in zip(res.zeta, eff.zhat))
    kind = FIRST_ORDER if sigma_c < 1 else UNDETERMINED
    return PhaseReport(kind, mu_c, sigma_c, "ZetaSolver", res.zeta, details={
        "residual": res.residual,
        "iterations": res.iterations,
        "mu_c_uncertainty": res.mu_c_uncertainty,
        "rho_star": rho_star,
        "zhat_cross_check": cross,
    })


# indicator thresholds for mu_c_scan
SCAN_RUN = 5
GAS_BAND = (0.95, 1.05)
CONDENSED_RATIO = 0.75


def _scan_levels(model, params) -> int:
    if model.max_level is not None:
        return model.max_level
    # keep |B_n| and log v_n inside double range
    return min(400, 960 // params.d)


def phase_indicator(model, params: LatticeParams, n_max: int | None = None) -> str:
    """'gas' if ``log v_n/|B_n|`` settles on a positive limit, 'condensed' if it decays to 0.

    The limit equals ``p(mu) - (mu - e_inf)``; decay is recognised by a
    geometric ratio of successive values, settling by ratios close to one.
    """
    n_max = _scan_levels(model, params) if n_max is None else _level_limit(model, n_max)
    w = v_iteration(model, params, n_max)
    g = []
    for n, wn in enumerate(w):
        if wn == INF:
            return "gas"
        g.append(wn / params.volume(n))
    if g[-1] <= 0.0 or g[-1] < 1e-300:
        return "condensed"
    if len(g) <= SCAN_RUN + 1:
        raise Undetermined("too few levels for the divergence indicator")
    ratios = [g[n] / g[n - 1] for n in range(len(g) - SCAN_RUN, len(g))]
    if all(GAS_BAND[0] <= q <= GAS_BAND[1] for q in ratios):
        return "gas"
    if all(q < CONDENSED_RATIO for q in ratios):
        return "condensed"
    raise Undetermined(f"indicator ambiguous at mu = {model.mu!r}: last ratios {ratios}")


def mu_c_scan(model, params: LatticeParams, mu_range: tuple[float, float], tol: float = 1e-9,
              n_max: int | None = None) -> float:
    """Bisection for the critical chemical potential; +inf if the whole range is gas."""
    _require_energy_model(model)
    if isinstance(model, EnergyModel) and any(E == INF for E in model.E):
        raise ConfigError("mu_c_scan needs finite energies on every level")
    lo, hi = (float(x) for x in mu_range)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
        raise ValueError(f"invalid mu range {mu_range!r}")
    s_lo = phase_indicator(model.with_mu(lo), params, n_max)
    s_hi = phase_indicator(model.with_mu(hi), params, n_max)
    if s_lo == s_hi == "gas":
        return INF
    if s_lo == "condensed":
        raise Undetermined(f"already condensed at the lower end mu = {lo!r}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        try:
            state = phase_indicator(model.with_mu(mid), params, n_max)
        except Undetermined:
            # both ends are classified, so an ambiguous point sits in the crossover band
            return mid
        if state == "gas":
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def classify(model, params: LatticeParams, mu_range: tuple[float, float] | None = None,
             tol: float = 1e-9) -> PhaseReport:
    """Pick the strongest applicable certificate, falling back to a numerical scan."""
    _require_energy_model(model)
    if isinstance(model, ConstantEnergyModel):
        return classify_constant_energy(model.lam, params)
    if absence_certificate(model, params):
        return PhaseReport(NO_TRANSITION, INF, None, "AbsenceLiminf")
    check = sum_u_check(model, params)
    if check.certified:
        report = first_order_report(model, params)
        report.details["sum_u"] = check.total + check.tail_estimate
        return PhaseReport(report.kind, report.mu_c, report.sigma_c, "SumUjBound", report.zeta,
                           report.details)
    if mu_range is None:
        mu_range = (model.e_inf - 20.0, model.e_inf + 20.0)
    mu_c = mu_c_scan(model, params, mu_range, tol)
    details = {"mu_range": list(mu_range), "necessary_conditions_ok": check.necessary_ok}
    sigma_c = None
    if math.isfinite(mu_c):
        below = pressure(model.with_mu(mu_c - 10 * tol), params)
        if below.regime_hint != "undetermined":
            sigma_c = densities(below).sigma
    return PhaseReport(UNDETERMINED, mu_c, sigma_c, "NumericScan", details=details)
