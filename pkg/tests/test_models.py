import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from seqrecover.errors import DomainError
from seqrecover.models import (
    BernoulliPair,
    GaussianShift,
    block_llr,
    kl_divergence,
    llr,
    null_quantile_gamma,
    sample,
    tilt,
    tilted_divergences,
)

thetas = st.floats(0.05, 5.0)
probs = st.floats(0.02, 0.98)


@st.composite
def bernoulli_pairs(draw):
    p0 = draw(probs)
    p1 = draw(probs.filter(lambda p: abs(p - p0) > 1e-3))
    return BernoulliPair(p0, p1)


models = st.one_of(thetas.map(GaussianShift), bernoulli_pairs())


def quad(f, lo=-12.0, hi=12.0):
    return integrate.quad(f, lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)[0]


# -- construction ------------------------------------------------------------


@pytest.mark.parametrize("theta", [0.0, -1.0, math.inf, math.nan])
def test_gaussian_rejects_bad_theta(theta):
    with pytest.raises(DomainError):
        GaussianShift(theta)


@pytest.mark.parametrize("p0,p1", [(0.3, 0.3), (0.0, 0.5), (0.5, 1.0), (-0.1, 0.2)])
def test_bernoulli_rejects_bad_probabilities(p0, p1):
    with pytest.raises(DomainError):
        BernoulliPair(p0, p1)


# -- sampling ----------------------------------------------------------------


def test_bernoulli_sample_support():
    rng = np.random.default_rng(0)
    draws = {int(sample(BernoulliPair(0.2, 0.8), "null", rng)) for _ in range(200)}
    assert draws <= {0, 1}


def test_gaussian_alt_sample_mean():
    rng = np.random.default_rng(1)
    ys = GaussianShift(2.0).sample("alt", rng, size=10**6)
    assert abs(ys.mean() - 2.0) < 4.0 / math.sqrt(10**6)


def test_bernoulli_null_frequency():
    rng = np.random.default_rng(2)
    ys = BernoulliPair(0.2, 0.8).sample("null", rng, size=10**6)
    sigma = math.sqrt(0.2 * 0.8 / 10**6)
    assert abs(ys.mean() - 0.2) < 3 * sigma


def test_sample_is_deterministic_in_rng_state():
    a = sample(GaussianShift(1.0), "null", np.random.default_rng(7))
    b = sample(GaussianShift(1.0), "null", np.random.default_rng(7))
    assert a == b


# -- llr / block_llr ---------------------------------------------------------


def test_llr_values():
    assert llr(GaussianShift(2.0), 1.0) == 0.0
    assert llr(GaussianShift(2.0), 0.0) == pytest.approx(-2.0, abs=1e-15)
    assert llr(BernoulliPair(0.5, 0.9), 1) == pytest.approx(0.587786664902119, abs=1e-12)


def test_llr_rejects_non_binary_bernoulli():
    with pytest.raises(DomainError):
        llr(BernoulliPair(0.5, 0.9), 2)


def test_block_llr_examples():
    assert block_llr(GaussianShift(2.0), [1, 1, 1]) == 0.0
    expected = (math.log(0.9 / 0.5) + math.log(0.1 / 0.5)) / 2
    assert expected == pytest.approx(-0.510825623765991, abs=1e-12)
    assert block_llr(BernoulliPair(0.5, 0.9), [1, 0]) == pytest.approx(expected, abs=1e-14)


def test_block_llr_rejects_empty():
    with pytest.raises(DomainError):
        block_llr(GaussianShift(1.0), [])


@given(models, st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_block_llr_single_is_llr(model, seed):
    y = model.sample("null", np.random.default_rng(seed))
    assert block_llr(model, [y]) == pytest.approx(float(llr(model, y)), abs=1e-12)


@given(models, st.integers(1, 12), st.integers(1, 12), st.integers(0, 1000))
@settings(max_examples=60, deadline=None)
def test_block_llr_concatenation_is_weighted_mean(model, m1, m2, seed):
    rng = np.random.default_rng(seed)
    a = model.sample("alt", rng, size=m1)
    b = model.sample("null", rng, size=m2)
    joint = block_llr(model, np.concatenate([a, b]))
    weighted = (m1 * block_llr(model, a) + m2 * block_llr(model, b)) / (m1 + m2)
    assert joint == pytest.approx(weighted, rel=1e-12, abs=1e-12)


# -- divergences -------------------------------------------------------------


def test_gaussian_kl_matches_quadrature():
    theta = 2.0
    f0 = stats.norm(0, 1)
    f1 = stats.norm(theta, 1)
    d01 = quad(lambda y: f0.pdf(y) * (f0.logpdf(y) - f1.logpdf(y)))
    d10 = quad(lambda y: f1.pdf(y) * (f1.logpdf(y) - f0.logpdf(y)), -10, 14)
    assert kl_divergence(GaussianShift(theta), "d01") == pytest.approx(2.0, abs=1e-15)
    assert d01 == pytest.approx(2.0, abs=1e-8)
    assert d10 == pytest.approx(2.0, abs=1e-8)


def test_bernoulli_kl_value():
    d10 = kl_divergence(BernoulliPair(0.2, 0.8), "d10")
    direct = 0.8 * math.log(0.8 / 0.2) + 0.2 * math.log(0.2 / 0.8)
    assert d10 == pytest.approx(direct, abs=1e-15)
    assert d10 == pytest.approx(0.831776616671934, abs=1e-12)


def test_kl_rejects_bad_direction():
    with pytest.raises(DomainError):
        kl_divergence(GaussianShift(1.0), "d11")


@given(models)
def test_kl_nonnegative(model):
    assert kl_divergence(model, "d01") >= 0.0
    assert kl_divergence(model, "d10") >= 0.0


# -- tilting -----------------------------------------------------------------


def test_gaussian_tilt_half_is_unit_normal_at_one():
    theta, lam = 2.0, 0.5
    f0, f1 = stats.norm(0, 1), stats.norm(theta, 1)
    unnorm = lambda y: f0.pdf(y) ** lam * f1.pdf(y) ** (1 - lam)  # noqa: E731
    z = quad(unnorm)
    tilted = tilt(GaussianShift(theta), lam)
    assert tilted.mean == 1.0
    for y in (-1.0, 0.0, 1.0, 2.5):
        assert tilted.pdf(y) == pytest.approx(unnorm(y) / z, abs=1e-8)


@pytest.mark.parametrize("model", [GaussianShift(1.3), BernoulliPair(0.3, 0.6)])
def test_tilt_endpoints(model):
    rng_pts = [0, 1] if isinstance(model, BernoulliPair) else [-1.0, 0.4, 2.0]
    base = stats.norm if isinstance(model, GaussianShift) else None
    for y in rng_pts:
        if base is not None:
            f0, f1 = base.pdf(y), base.pdf(y, loc=model.theta)
        else:
            f0 = model.p0 if y else 1 - model.p0
            f1 = model.p1 if y else 1 - model.p1
        assert tilt(model, 0.0).pdf(y) == pytest.approx(f1, abs=1e-14)
        assert tilt(model, 1.0).pdf(y) == pytest.approx(f0, abs=1e-14)


@pytest.mark.parametrize("lam", [-0.1, 1.5])
def test_tilt_rejects_lambda_outside_unit_interval(lam):
    with pytest.raises(DomainError):
        tilt(GaussianShift(1.0), lam)
    with pytest.raises(DomainError):
        tilted_divergences(BernoulliPair(0.2, 0.4), lam)


@given(models, st.floats(0.0, 1.0))
@settings(max_examples=40, deadline=None)
def test_tilt_total_mass_is_one(model, lam):
    assert tilt(model, lam).total_mass() == pytest.approx(1.0, abs=1e-9)


def test_gaussian_tilted_divergences_match_quadrature():
    theta, lam = 2.0, 0.5
    assert tilted_divergences(GaussianShift(theta), lam) == (0.5, 0.5)
    fl = stats.norm((1 - lam) * theta, 1)
    f0, f1 = stats.norm(0, 1), stats.norm(theta, 1)
    to0 = quad(lambda y: fl.pdf(y) * (fl.logpdf(y) - f0.logpdf(y)))
    to1 = quad(lambda y: fl.pdf(y) * (fl.logpdf(y) - f1.logpdf(y)))
    assert to0 == pytest.approx(0.5, abs=1e-8)
    assert to1 == pytest.approx(0.5, abs=1e-8)


def test_gaussian_tilted_divergences_at_null_endpoint():
    assert tilted_divergences(GaussianShift(2.0), 1.0) == (0.0, 2.0)


def _two_point_tilted_divergences(p0, p1, lam):
    # independent enumeration over y in {0, 1}
    f0 = {0: 1 - p0, 1: p0}
    f1 = {0: 1 - p1, 1: p1}
    w = {y: f0[y] ** lam * f1[y] ** (1 - lam) for y in (0, 1)}
    z = sum(w.values())
    fl = {y: w[y] / z for y in (0, 1)}
    return (
        sum(fl[y] * math.log(fl[y] / f0[y]) for y in (0, 1)),
        sum(fl[y] * math.log(fl[y] / f1[y]) for y in (0, 1)),
    )


def test_bernoulli_tilted_divergences_symmetric_pair():
    to0, to1 = tilted_divergences(BernoulliPair(0.2, 0.8), 0.5)
    assert to0 == pytest.approx(to1, abs=1e-15)
    oracle = _two_point_tilted_divergences(0.2, 0.8, 0.5)
    assert (to0, to1) == pytest.approx(oracle, abs=1e-14)


@given(bernoulli_pairs(), st.floats(0.0, 1.0))
@settings(max_examples=40)
def test_bernoulli_tilted_divergences_match_enumeration(model, lam):
    oracle = _two_point_tilted_divergences(model.p0, model.p1, lam)
    assert tilted_divergences(model, lam) == pytest.approx(oracle, abs=1e-12)


@given(models)
@settings(max_examples=40)
def test_tilted_divergence_endpoints(model):
    d01, d10 = model.kl("d01"), model.kl("d10")
    at0 = tilted_divergences(model, 0.0)
    at1 = tilted_divergences(model, 1.0)
    assert at0[0] == pytest.approx(d10, abs=1e-9) and abs(at0[1]) <= 1e-9
    assert abs(at1[0]) <= 1e-9 and at1[1] == pytest.approx(d01, abs=1e-9)


# -- null quantile -----------------------------------------------------------


@given(thetas)
def test_gaussian_median_threshold_single_sample(theta):
    gamma, achieved = null_quantile_gamma(GaussianShift(theta), 1, 0.5)
    assert gamma == pytest.approx(-(theta**2) / 2, abs=1e-15)
    assert achieved == 0.5


def test_gaussian_median_threshold_block_four():
    assert null_quantile_gamma(GaussianShift(2.0), 4, 0.5) == (-2.0, 0.5)


def test_bernoulli_quantile_single_sample():
    gamma, achieved = null_quantile_gamma(BernoulliPair(0.5, 0.9), 1, 0.5)
    assert gamma == pytest.approx(math.log(0.1 / 0.5), abs=1e-15)
    assert gamma == pytest.approx(-1.609438, abs=1e-6)
    assert achieved == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("rho", [0.3, 0.49, 1.0, 1.2])
def test_quantile_rejects_rho_outside_range(rho):
    with pytest.raises(DomainError):
        null_quantile_gamma(GaussianShift(1.0), 2, rho)


def test_quantile_rejects_zero_block():
    with pytest.raises(DomainError):
        null_quantile_gamma(GaussianShift(1.0), 0, 0.5)


def _brute_force_quantile(model, block, rho):
    # every outcome sequence, no binomial shortcut
    outcomes = []
    for seq in itertools.product((0, 1), repeat=block):
        ones = sum(seq)
        prob = model.p0**ones * (1 - model.p0) ** (block - ones)
        outcomes.append((block_llr(model, seq), prob))
    values = sorted({round(t, 12) for t, _ in outcomes})
    for v in values:
        mass = sum(p for t, p in outcomes if round(t, 12) <= v)
        if mass >= rho - 1e-12:
            return v, mass
    raise AssertionError("unreachable")


@given(bernoulli_pairs(), st.integers(1, 8), st.floats(0.5, 0.99))
@settings(max_examples=60, deadline=None)
def test_bernoulli_quantile_matches_brute_force(model, block, rho):
    gamma, achieved = null_quantile_gamma(model, block, rho)
    want_gamma, want_mass = _brute_force_quantile(model, block, rho)
    assert gamma == pytest.approx(want_gamma, abs=1e-10)
    assert achieved == pytest.approx(want_mass, abs=1e-10)
    assert achieved >= rho - 1e-12


@pytest.mark.parametrize(
    "model,block,rho",
    [
        (GaussianShift(2.0), 4, 0.5),
        (GaussianShift(0.7), 3, 0.8),
        (BernoulliPair(0.2, 0.8), 5, 0.6),
        (BernoulliPair(0.6, 0.3), 4, 0.75),
    ],
)
def test_quantile_calibration_by_simulation(model, block, rho):
    gamma, achieved = null_quantile_gamma(model, block, rho)
    rng = np.random.default_rng(123)
    trials = 10**5
    t = model.block_stat(model.sample("null", rng, size=(trials, block)), axis=1)
    frac = np.mean(t <= gamma)
    sigma = math.sqrt(achieved * (1 - achieved) / trials)
    assert abs(frac - achieved) <= 4 * sigma
