from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from qvorder.levy_models import ClockModel, GaussianJumps, LevyTriplet, ModelSpec
from qvorder.path_engine import SimConfig, make_partition, simulate_paired
from qvorder.pricing import PayoffSpec, expected_rv, payoff_eval, price_on_samples, price_option, swap_rate

BS = ModelSpec("levy", LevyTriplet(b=-0.02, sigma2=0.04), model_id="bs")
MERTON0 = ModelSpec("levy", LevyTriplet(sigma2=0.04, jumps=GaussianJumps(1.0, 0.1)), model_id="merton0")
CIR = ClockModel("integrated_cir", kappa=2.0, theta=0.04, xi=0.3, v0=0.04)


@pytest.fixture(scope="module")
def merton_samples():
    return simulate_paired(MERTON0, make_partition(1.0, 4), SimConfig(seed=31), 50_000)


def test_payoff_examples():
    assert payoff_eval(PayoffSpec("call", 0.04), 0.05, 0.04) == pytest.approx(0.01)
    assert payoff_eval(PayoffSpec("put", 0.04), 0.05, 0.04) == 0.0
    assert payoff_eval(PayoffSpec("straddle", 0.04), 0.04, 0.04) == 0.0
    assert payoff_eval(PayoffSpec("swap", 0.04), 0.05, 0.04) == pytest.approx(0.01)
    assert payoff_eval(PayoffSpec("volswap", 0.2), 0.04, 0.2) == pytest.approx(0.0)
    with pytest.raises(ValueError, match="negative"):
        payoff_eval(PayoffSpec("call"), -1e-9, 0.0)


def test_payoff_spec_validation():
    assert not PayoffSpec("volswap").convex and PayoffSpec("call").convex
    for bad in (dict(kind="digital"), dict(kind="call", strike_mode="floating"), dict(kind="call", strike=-1.0)):
        with pytest.raises(ValueError):
            PayoffSpec(**bad)


def test_expected_rv_examples():
    one = expected_rv(BS, make_partition(1.0, 1))
    assert one.route == "analytic" and one.value == pytest.approx(0.0404, rel=1e-14)
    assert expected_rv(BS, make_partition(1.0, 10_000)).value == pytest.approx(0.04, abs=1e-7)
    for n in (1, 4, 52):
        assert expected_rv(MERTON0, make_partition(1.0, n)).value == pytest.approx(0.05, rel=1e-12)


def test_expected_rv_matches_mc(merton_samples):
    rv = merton_samples.rv
    assert abs(rv.mean() - 0.05) < 3 * rv.std(ddof=1) / math.sqrt(rv.size)


def test_expected_rv_clocked_route():
    model = ModelSpec("time_changed", LevyTriplet(sigma2=1.0), clock=CIR, model_id="tc")
    r = expected_rv(model, make_partition(1.0, 4), SimConfig(clock_steps=256), n_paths=20_000)
    assert r.route == "mc" and abs(r.value - 0.04) < 3 * r.se


def test_swap_rate_examples():
    assert swap_rate(BS, 1.0, "qv") == pytest.approx(0.04)
    assert swap_rate(BS, 1.0, "pqv") == pytest.approx(0.04)
    assert swap_rate(BS, 1.0, "rv", make_partition(1.0, 1)) == pytest.approx(0.0404)
    P = make_partition(1.0, 4)
    assert swap_rate(MERTON0, 1.0, "rv", P) == pytest.approx(swap_rate(MERTON0, 1.0, "qv"), rel=1e-12)
    with pytest.raises(ValueError, match="partition"):
        swap_rate(BS, 1.0, "rv")
    with pytest.raises(ValueError):
        swap_rate(BS, 1.0, "iv")


@pytest.mark.parametrize("basis", ["rv", "qv", "pqv"])
def test_swap_at_swap_rate_is_zero(merton_samples, basis):
    r = price_on_samples(merton_samples, PayoffSpec("swap", 1.0, "relative"), basis)
    assert r.estimate == 0.0
    fixed = price_on_samples(merton_samples, PayoffSpec("swap", swap_rate(MERTON0, 1.0, "qv")), basis)
    assert abs(fixed.estimate) < 3 * fixed.se + 1e-15


def test_call_at_zero_strike_is_mean_and_put_is_zero(merton_samples):
    c = price_on_samples(merton_samples, PayoffSpec("call", 0.0), "qv")
    assert c.estimate == pytest.approx(merton_samples.qv.mean(), rel=1e-14)
    assert abs(c.estimate - 0.05) < 3 * c.se
    for basis in ("rv", "qv", "pqv"):
        assert price_on_samples(merton_samples, PayoffSpec("put", 0.0), basis).estimate == 0.0


@pytest.mark.parametrize("basis", ["rv", "qv"])
@pytest.mark.parametrize("K", [0.0, 0.03, 0.05, 0.08])
def test_put_call_parity(merton_samples, basis, K):
    r = 0.03
    c = price_on_samples(merton_samples, PayoffSpec("call", K), basis, r=r).estimate
    p = price_on_samples(merton_samples, PayoffSpec("put", K), basis, r=r).estimate
    fwd = math.exp(-r) * (merton_samples.basis(basis).mean() - K)
    assert abs(c - p - fwd) < 1e-12


def test_monotone_in_strike(merton_samples):
    Ks = np.linspace(0.0, 0.15, 31)
    calls = [price_on_samples(merton_samples, PayoffSpec("call", K), "rv").estimate for K in Ks]
    puts = [price_on_samples(merton_samples, PayoffSpec("put", K), "rv").estimate for K in Ks]
    assert np.all(np.diff(calls) <= 0) and np.all(np.diff(puts) >= 0)


def test_discount_factor_is_multiplicative(merton_samples):
    spec = PayoffSpec("straddle", 0.05)
    p0 = price_on_samples(merton_samples, spec, "rv", r=0.0)
    for r in (0.01, 0.02):
        pr = price_on_samples(merton_samples, spec, "rv", r=r)
        assert pr.estimate == pytest.approx(math.exp(-r) * p0.estimate, rel=1e-14)
        assert pr.se == pytest.approx(math.exp(-r) * p0.se, rel=1e-12)


def test_confidence_interval_width(merton_samples):
    r = price_on_samples(merton_samples, PayoffSpec("call", 0.04), "rv", alpha=0.1)
    half = stats.norm.ppf(0.95) * r.se
    assert r.ci_high - r.estimate == pytest.approx(half) and r.estimate - r.ci_low == pytest.approx(half)
    pay = np.maximum(merton_samples.rv - 0.04, 0)
    assert r.se == pytest.approx(pay.std(ddof=1) / math.sqrt(pay.size), rel=1e-12)
    assert r.paths == 50_000


def test_relative_strike_uses_same_basis(merton_samples):
    r_rv = price_on_samples(merton_samples, PayoffSpec("call", 0.9, "relative"), "rv")
    r_qv = price_on_samples(merton_samples, PayoffSpec("call", 0.9, "relative"), "qv")
    assert r_rv.swap_rate == pytest.approx(merton_samples.rv.mean())
    assert r_qv.strike == pytest.approx(0.9 * merton_samples.qv.mean())


def test_volswap_rejected_in_order_context(merton_samples):
    with pytest.raises(ValueError, match="convex"):
        price_on_samples(merton_samples, PayoffSpec("volswap", 0.2), "rv", order_context=True)
    price_on_samples(merton_samples, PayoffSpec("volswap", 0.2), "rv")


def test_price_option_common_paths():
    P = make_partition(1.0, 4)
    cfg = SimConfig(seed=32)
    a = price_option(MERTON0, PayoffSpec("call", 0.04), "rv", P, cfg, 5000)
    s = simulate_paired(MERTON0, P, cfg, 5000)
    b = price_on_samples(s, PayoffSpec("call", 0.04), "rv")
    assert a.estimate == b.estimate and a.se == b.se
