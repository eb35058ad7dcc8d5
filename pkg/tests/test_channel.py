"""Link-level model checks: inversion threshold, rate law, broadcast SNR.

scipy is used here purely as an independent oracle (adaptive quadrature and
vectorized exp1 for grid searches); the package itself never imports it.
"""

import math

import numpy as np
import pytest
from scipy import integrate, special

from hfl_sim.channel import (
    RADIO_PRESETS,
    TABLE_PRESET,
    TEXT_PRESET,
    FadingModel,
    LinkBudget,
    RadioParams,
    allocated_power,
    broadcast_rate_per_subcarrier,
    broadcast_snr,
    expected_ul_rate,
    inverse_gain_tail,
    link_budget,
    normalized_gain,
    optimize_threshold,
    rho,
)


def unit_budget(**kw):
    base = dict(p_max=1.0, n0_b0=1.0, b0=1.0, distance=1.0, alpha=2.8, ber=1e-3)
    base.update(kw)
    return LinkBudget(**base)


def random_budget(rng):
    return link_budget(TABLE_PRESET, float(rng.uniform(50.0, 700.0)), TABLE_PRESET.p_mu)


def quad_tail(gamma_th):
    val, _ = integrate.quad(
        lambda g: math.exp(-g) / g, gamma_th, np.inf, epsabs=1e-13, epsrel=1e-13
    )
    return val


def test_normalized_gain_examples():
    assert normalized_gain(0.0, unit_budget()) == 0.0
    assert normalized_gain(1.0, unit_budget()) == 1.0
    assert normalized_gain(2.0, unit_budget(n0_b0=0.5, distance=2.0, alpha=2.0)) == 1.0


def test_inverse_gain_tail_against_quadrature():
    # series/continued-fraction implementation vs adaptive quadrature
    assert inverse_gain_tail(1.0) == pytest.approx(0.21938393439552029, abs=1e-12)
    assert inverse_gain_tail(10.0) == pytest.approx(4.156968929685326e-6, rel=1e-10)
    for g in (0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0):
        assert abs(inverse_gain_tail(g) - quad_tail(g)) <= 1e-9
        assert inverse_gain_tail(g) == pytest.approx(float(special.exp1(g)), rel=1e-10)


def test_inverse_gain_tail_monotone_and_domain():
    assert inverse_gain_tail(0.5) > inverse_gain_tail(1.0)
    with pytest.raises(ValueError):
        inverse_gain_tail(0.0)
    with pytest.raises(ValueError):
        inverse_gain_tail(-1.0)


def test_rho_formula():
    b = unit_budget()
    assert rho(1.0, 1, b) == pytest.approx(1.0 / quad_tail(1.0), rel=1e-9)
    assert rho(1.0, 1, b) == pytest.approx(4.558218917694912, rel=1e-9)
    assert rho(1.0, 2, b) == pytest.approx(rho(1.0, 1, b) / 2.0, rel=1e-12)
    assert rho(2.0, 1, b) > rho(1.0, 1, b)
    with pytest.raises(ValueError):
        rho(1.0, 0, b)


def test_allocated_power_branches():
    b = unit_budget(n0_b0=2.0)
    level = 3.0
    assert allocated_power(0.5, 1.0, level, b) == 0.0
    # boundary is inclusive: gamma == gamma_th transmits
    assert allocated_power(1.0, 1.0, level, b) == pytest.approx(
        level / normalized_gain(1.0, b)
    )
    assert allocated_power(4.0, 1.0, level, b) == pytest.approx(
        level / normalized_gain(4.0, b)
    )


def test_mean_power_meets_cap():
    # truncated inversion spends exactly p_max/n on average
    b = link_budget(TABLE_PRESET, 300.0, TABLE_PRESET.p_mu)
    n = 4
    sol = optimize_threshold(n, b)
    cap = b.p_max / n
    rng = np.random.default_rng(17)
    gains = rng.standard_exponential(1_000_000)
    scale = b.n0_b0 * b.distance**b.alpha
    powers = np.where(gains >= sol.gamma_th, sol.rho * scale / gains, 0.0)
    # vectorized expression agrees with the scalar branch function
    for g in gains[:50]:
        expect = allocated_power(float(g), sol.gamma_th, sol.rho, b)
        got = sol.rho * scale / g if g >= sol.gamma_th else 0.0
        assert got == pytest.approx(expect, rel=1e-12)
    mean = powers.mean()
    sem = powers.std(ddof=1) / math.sqrt(powers.size)
    assert mean <= cap + 3.0 * sem
    assert abs(mean - cap) <= 0.01 * cap


def grid_best_rate(n, budget, points=1_000_000):
    gap = 1.5 / (-math.log(5.0 * budget.ber))
    denom = n * budget.n0_b0 * budget.distance**budget.alpha
    g = np.linspace(1e-6, 50.0, points)
    rate = budget.b0 * np.log2(1.0 + gap * budget.p_max / (denom * special.exp1(g))) * np.exp(-g)
    return float(rate.max())


def test_optimize_threshold_beats_fixed_candidates():
    rng = np.random.default_rng(2)
    for _ in range(5):
        b = random_budget(rng)
        n = int(rng.integers(1, 8))
        sol = optimize_threshold(n, b)
        gap = 1.5 / (-math.log(5.0 * b.ber))
        denom = n * b.n0_b0 * b.distance**b.alpha
        for g in (0.01, 0.1, 1.0, 5.0):
            cand = b.b0 * math.log2(1.0 + gap * b.p_max / (denom * inverse_gain_tail(g))) * math.exp(-g)
            assert sol.expected_rate >= cand - 1e-9 * abs(cand)


def test_optimize_threshold_matches_grid_oracle():
    rng = np.random.default_rng(3)
    for _ in range(5):
        b = random_budget(rng)
        n = int(rng.integers(1, 8))
        sol = optimize_threshold(n, b)
        best = grid_best_rate(n, b)
        assert abs(sol.expected_rate - best) <= 1e-6 * best


def test_per_carrier_rate_decreases_with_more_carriers():
    b = link_budget(TABLE_PRESET, 200.0, TABLE_PRESET.p_mu)
    rates = [optimize_threshold(n, b).expected_rate for n in (1, 2, 4, 8)]
    assert all(rates[i + 1] < rates[i] for i in range(3))


def test_expected_ul_rate_properties():
    b = link_budget(TABLE_PRESET, 150.0, TABLE_PRESET.p_mu)
    assert expected_ul_rate(1, b) == optimize_threshold(1, b).expected_rate
    rng = np.random.default_rng(11)
    for _ in range(10):
        bb = random_budget(rng)
        rates = [expected_ul_rate(n, bb) for n in range(1, 33)]
        assert all(r > 0.0 and math.isfinite(r) for r in rates)
        assert all(rates[i + 1] >= rates[i] for i in range(31))
    boosted = LinkBudget(
        p_max=b.p_max * 10.0, n0_b0=b.n0_b0, b0=b.b0, distance=b.distance,
        alpha=b.alpha, ber=b.ber,
    )
    assert expected_ul_rate(3, boosted) > expected_ul_rate(3, b)


def test_broadcast_snr():
    b = link_budget(TABLE_PRESET, 100.0, TABLE_PRESET.p_mbs)
    assert broadcast_snr(0.0, b, 600) == 0.0
    assert broadcast_snr(1.0, b, 600) == pytest.approx(
        broadcast_snr(1.0, b, 300) / 2.0, rel=1e-12
    )
    # hand arithmetic: 20 / (600 * 1e-15 * 100**2.8), with 100**2.8 = 10**5.6
    assert broadcast_snr(1.0, b, 600) == pytest.approx(83729547.71698608, rel=1e-12)
    with pytest.raises(ValueError):
        broadcast_snr(1.0, b, 0)


def test_broadcast_rate_per_subcarrier():
    budgets = [link_budget(TABLE_PRESET, d, TABLE_PRESET.p_mbs) for d in (80.0, 200.0, 500.0)]
    gains = [0.7, 1.3, 0.9]
    per_user = [
        b.b0 * math.log2(1.0 + broadcast_snr(g, b, 600))
        for g, b in zip(gains, budgets)
    ]
    assert broadcast_rate_per_subcarrier(gains, budgets, 600) == min(per_user)
    assert broadcast_rate_per_subcarrier([gains[0]], budgets[:1], 600) == per_user[0]
    assert broadcast_rate_per_subcarrier([0.0, 1.0, 1.0], budgets, 600) == 0.0
    with pytest.raises(ValueError):
        broadcast_rate_per_subcarrier([], [], 600)
    with pytest.raises(ValueError):
        broadcast_rate_per_subcarrier([1.0], budgets, 600)


def test_fading_model_streams():
    with pytest.raises(ValueError):
        FadingModel(kind="nakagami")
    fm = FadingModel(seed=5)
    a = FadingModel.draw(fm.spawn("dl", 3), (1000,))
    b = FadingModel.draw(fm.spawn("dl", 3), (1000,))
    c = FadingModel.draw(fm.spawn("dl", 4), (1000,))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    big = FadingModel.draw(fm.generator(), (1_000_000,))
    assert big.mean() == pytest.approx(1.0, rel=0.01)
    assert big.min() >= 0.0


def test_link_budget_validation():
    with pytest.raises(ValueError, match="p_max"):
        unit_budget(p_max=0.0)
    with pytest.raises(ValueError, match="distance"):
        unit_budget(distance=0.5)
    with pytest.raises(ValueError, match="alpha"):
        unit_budget(alpha=1.5)
    with pytest.raises(ValueError, match="ber"):
        unit_budget(ber=0.5)
    with pytest.raises(ValueError, match="n0_b0"):
        unit_budget(n0_b0=0.0)


def test_radio_presets():
    assert TABLE_PRESET.m_subcarriers == 600
    assert TEXT_PRESET.m_subcarriers == 300
    assert RADIO_PRESETS == {"table2": TABLE_PRESET, "text": TEXT_PRESET}
    assert TABLE_PRESET.validate() == []
    errs = RadioParams(alpha=7.0, ber=0.0).validate()
    assert any("alpha" in e for e in errs) and any("ber" in e for e in errs)
