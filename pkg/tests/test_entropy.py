import math
import random
import warnings

import pytest
from hypothesis import given, settings, strategies as st

from hiercubes.core import ConstantEnergyModel, EnergyModel, LatticeParams, TableModel
from hiercubes.density import DensityProfile, densities
from hiercubes.entropy import (TableLegendreWarning, bernoulli_chemical_potentials, bernoulli_entropy,
                               chemical_potentials, effective_densities, entropy, entropy_bound,
                               entropy_from_series, exact_multicanonical_logcount, free_energy,
                               hat_entropy, legendre_objective, phi_series, round_counts)
from hiercubes.errors import InfeasibleCounts, InfiniteEnergyOccupied, OutsideUnitBall, SaturatedProfile
from hiercubes.oracle import multicanonical_count
from hiercubes.pressure import pressure

from conftest import LOG2, profiles, tables

dims = st.sampled_from([1, 2, 3])


def test_entropy_examples(d1, d2):
    assert entropy(DensityProfile.from_rho([0.0, 0.0], 1.0), d1) == 0.0
    for p in (d1, d2):
        assert entropy(DensityProfile.from_rho([0.5, 0.0]), p) == pytest.approx(LOG2, rel=1e-15)


def test_bernoulli_entropy_examples(d1):
    assert bernoulli_entropy(DensityProfile.from_rho([0.0, 0.0]), d1) == 0.0
    assert bernoulli_entropy(DensityProfile.from_rho([0.5, 0.0]), d1) == pytest.approx(LOG2)


def test_bernoulli_agrees_to_first_order(d1):
    base = [0.3, 0.2, 0.1]
    diffs = []
    for t in (1e-2, 1e-3, 1e-4):
        prof = DensityProfile.from_rho([t * r for r in base])
        s = entropy(prof, d1)
        diffs.append(abs(s - bernoulli_entropy(prof, d1)) / s)
    # relative difference shrinks with the density
    assert diffs[0] > diffs[1] > diffs[2]
    assert diffs[2] < 1e-3


@settings(max_examples=200)
@given(profiles(), dims)
def test_entropy_bounds(prof, d):
    params = LatticeParams(d)
    s = entropy(prof, params)
    assert -1e-15 <= s <= entropy_bound(prof, params) + 1e-15


@settings(max_examples=200)
@given(profiles(), dims)
def test_hat_form_agrees(prof, d):
    params = LatticeParams(d)
    assert hat_entropy(prof, params) == pytest.approx(entropy(prof, params), abs=1e-12)


@given(profiles())
def test_effective_densities_in_unit_interval(prof):
    assert all(0 <= h <= 1 for h in effective_densities(prof))


@settings(max_examples=100)
@given(profiles(max_norm=0.9), dims)
def test_series_identity(prof, d):
    params = LatticeParams(d)
    s_series, tail = entropy_from_series(prof, params, 60)
    assert abs(s_series - entropy(prof, params)) <= tail + 1e-12


def test_phi_examples(d1):
    phi, tail = phi_series(DensityProfile.from_rho([0.0]), d1)
    assert phi == 0.0 and tail == 0.0
    phi, tail = phi_series(DensityProfile.from_rho([0.5]), d1, 200)
    assert phi == pytest.approx(0.5 - 0.5 * LOG2, abs=1e-15)
    with pytest.raises(OutsideUnitBall):
        phi_series(DensityProfile.from_rho([0.5], 0.5), d1)


@settings(max_examples=100)
@given(profiles(max_norm=0.999), dims)
def test_scaling_identity(prof, d):
    params = LatticeParams(d)
    if prof.sigma_inf >= 0.99:
        return
    scale = 1 - prof.sigma_inf
    primed = DensityProfile.from_rho([r / scale for r in prof.rho])
    assert entropy(prof, params) == pytest.approx(scale * entropy(primed, params), abs=1e-12)


@settings(max_examples=50)
@given(tables())
def test_chemical_potential_duality(pm):
    params, model = pm
    res = pressure(model, params)
    prof = densities(res)
    cp = chemical_potentials(prof, params)
    for j, mu in enumerate(cp.mu):
        lz = model.log_activity(j, params)
        if lz == -math.inf:
            assert mu == -math.inf
        else:
            assert mu == pytest.approx(lz, rel=1e-10, abs=1e-10)
    assert cp.mu_inf == pytest.approx(res.p, rel=1e-10)


def test_chemical_potential_limits(d1):
    cp = chemical_potentials(DensityProfile.from_rho([1e-14, 1e-14]), d1)
    assert cp.mu_inf == pytest.approx(0.0, abs=1e-13)
    ber = bernoulli_chemical_potentials(DensityProfile.from_rho([0.25]))
    assert ber.mu == (pytest.approx(math.log(1 / 3)),) and ber.mu_inf == 0.0
    with pytest.raises(SaturatedProfile):
        chemical_potentials(DensityProfile.from_rho([0.5, 0.5]), d1)


def test_free_energy_examples(d1):
    model = EnergyModel((0.0, 0.0, 0.0), 2.5, 0.0)
    assert free_energy(DensityProfile.from_rho([0.0, 0.0], 1.0), model, d1) == 2.5
    prof = DensityProfile.from_rho([0.3, 0.1])
    assert free_energy(prof, model, d1) == pytest.approx(-entropy(prof, d1))
    with pytest.raises(InfiniteEnergyOccupied):
        free_energy(prof, EnergyModel((0.0, math.inf), 0.0, 0.0), d1)


@given(profiles(max_norm=0.999), st.lists(st.floats(-3, 3), min_size=6, max_size=6), st.floats(-2, 2))
def test_convex_split(prof, E, e_inf):
    params = LatticeParams(1)
    if prof.sigma_inf >= 0.99:
        return
    model = EnergyModel(tuple(E), e_inf, 0.0)
    scale = 1 - prof.sigma_inf
    primed = DensityProfile.from_rho([r / scale for r in prof.rho])
    lhs = free_energy(prof, model, params)
    rhs = scale * free_energy(primed, model, params) + prof.sigma_inf * e_inf
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_legendre_at_condensed_profile(d1):
    model = ConstantEnergyModel(1.0, 0.5)
    th = 0.5
    assert legendre_objective(DensityProfile.from_rho([0.0, 0.0], 1.0), model, d1) == pytest.approx(th)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        with pytest.raises(TableLegendreWarning):
            legendre_objective(DensityProfile.from_rho([0.0], 1.0), TableModel((1.0,)), d1)


def _perturb(rng, prof):
    rho = [max(r + rng.gauss(0, 0.02) * max(r, 1e-3), 0.0) for r in prof.rho]
    excess = sum(rho)
    if excess >= 1:
        rho = [r / (excess + 1e-3) for r in rho]
    return DensityProfile.from_rho(rho)


def test_legendre_maximality():
    rng = random.Random(5)
    params = LatticeParams(1)
    model = TableModel((1.0, 0.7, 1.5, 0.3))
    res = pressure(model, params)
    prof = densities(res)
    best = legendre_objective(prof, model, params)
    assert best == pytest.approx(res.p, rel=1e-10)
    for _ in range(200):
        assert legendre_objective(_perturb(rng, prof), model, params) < best


def test_logcount_examples(d1):
    assert exact_multicanonical_logcount(d1, 1, [1, 0]) == pytest.approx(LOG2)
    assert exact_multicanonical_logcount(d1, 3, [0, 0, 0, 0]) == 0.0
    assert exact_multicanonical_logcount(d1, 2, [0, 0, 1]) == 0.0
    with pytest.raises(InfeasibleCounts):
        exact_multicanonical_logcount(d1, 1, [1, 1])
    with pytest.raises(InfeasibleCounts):
        exact_multicanonical_logcount(d1, 1, [0, 0, 1])


def test_logcount_matches_enumeration():
    for d, n in ((1, 3), (1, 4), (2, 1), (2, 2)):
        params = LatticeParams(d)
        from hiercubes.oracle import counts_table
        for counts, mult in counts_table(params, n):
            assert math.exp(exact_multicanonical_logcount(params, n, list(counts))) == pytest.approx(mult, rel=1e-12)
            assert multicanonical_count(params, n, counts) == mult


def test_round_counts_respects_volume(d1):
    prof = DensityProfile.from_rho([0.3, 0.1, 0.05])
    for n in (2, 5, 10):
        c = round_counts(prof, d1, n)
        assert sum(x * d1.block_volume(j) for j, x in enumerate(c)) <= d1.block_volume(n)
        exact_multicanonical_logcount(d1, n, c)


def test_stirling_convergence(d1):
    prof = DensityProfile.from_rho([0.3, 0.1, 0.05])
    s = entropy(prof, d1)
    gaps = []
    for n in (12, 16, 20):
        c = round_counts(prof, d1, n)
        gaps.append(abs(exact_multicanonical_logcount(d1, n, c) / d1.block_volume(n) - s))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[-1] < 2e-2
