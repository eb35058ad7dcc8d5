"""Uplink and downlink link-level models.

Uplink: Rayleigh block fading (unit-mean exponential power gain), truncated
channel inversion so every transmitted symbol is received at a fixed SNR rho,
and an M-QAM rate backed off to meet a target bit error rate.  The expected
per-carrier rate

    U(g_th) = B0 * log2(1 + 1.5 * rho(g_th) / (-ln(5 * BER))) * P(gamma >= g_th)

is maximized over the inversion threshold g_th, with P(gamma >= g_th)
= exp(-g_th) under the unit-mean exponential gain law.

Downlink: a rateless broadcast whose per-carrier rate is set by the worst
instantaneous user SNR (no inversion, full transmit power split over the
carriers in use).
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

EULER_GAMMA = 0.57721566490153286060651209008240243

# Threshold search window and golden-section stopping width.
GAMMA_TH_LO = 1e-6
GAMMA_TH_HI = 50.0
GAMMA_TH_TOL = 1e-8
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class LinkBudget:
    """Static link parameters for one transmitter-receiver pair.

    n0_b0 is the noise power per sub-carrier in watts (noise density times
    sub-carrier bandwidth).
    """

    p_max: float
    n0_b0: float
    b0: float
    distance: float
    alpha: float
    ber: float

    def __post_init__(self):
        errs = []
        if not self.p_max > 0:
            errs.append("p_max must be > 0")
        if not self.n0_b0 > 0:
            errs.append("n0_b0 must be > 0")
        if not self.b0 > 0:
            errs.append("b0 must be > 0")
        if not self.distance >= 1.0:
            errs.append("distance must be >= 1 m")
        if not 2.0 <= self.alpha <= 6.0:
            errs.append("alpha must lie in [2, 6]")
        if not 0.0 < self.ber < 0.2:
            errs.append("ber must lie in (0, 0.2)")
        if errs:
            raise ValueError("; ".join(errs))


@dataclass(frozen=True)
class ThresholdSolution:
    gamma_th: float
    rho: float
    expected_rate: float


@dataclass(frozen=True)
class RadioParams:
    """System-level radio constants; defaults are the standard parameter set
    (600 sub-carriers of 30 kHz, -150 dBW noise per sub-carrier)."""

    m_subcarriers: int = 600
    b0: float = 30e3
    noise_per_subcarrier: float = 1e-15
    p_mbs: float = 20.0
    p_sbs: float = 6.3
    p_mu: float = 0.2
    alpha: float = 2.8
    ber: float = 1e-3

    def validate(self) -> list[str]:
        errs = []
        if self.m_subcarriers < 1:
            errs.append("radio.m_subcarriers must be >= 1")
        if not self.b0 > 0:
            errs.append("radio.b0 must be > 0")
        if not self.noise_per_subcarrier > 0:
            errs.append("radio.noise_per_subcarrier must be > 0")
        for name in ("p_mbs", "p_sbs", "p_mu"):
            if not getattr(self, name) > 0:
                errs.append(f"radio.{name} must be > 0")
        if not 2.0 <= self.alpha <= 6.0:
            errs.append("radio.alpha must lie in [2, 6]")
        if not 0.0 < self.ber < 0.2:
            errs.append("radio.ber must lie in (0, 0.2)")
        return errs


TABLE_PRESET = RadioParams()
TEXT_PRESET = RadioParams(m_subcarriers=300)
RADIO_PRESETS = {"table2": TABLE_PRESET, "text": TEXT_PRESET}


def link_budget(radio: RadioParams, dist: float, p_max: float) -> LinkBudget:
    return LinkBudget(
        p_max=p_max,
        n0_b0=radio.noise_per_subcarrier,
        b0=radio.b0,
        distance=dist,
        alpha=radio.alpha,
        ber=radio.ber,
    )


@dataclass(frozen=True)
class FadingModel:
    """Unit-mean exponential (Rayleigh power) block fading.

    Sub-streams are derived as SeedSequence(seed, spawn_key=key) so parallel
    consumers never share a stream; string key parts are crc32-hashed.
    """

    kind: str = "exp_unit_mean"
    seed: int = 0

    def __post_init__(self):
        if self.kind != "exp_unit_mean":
            raise ValueError(f"unknown fading kind {self.kind!r}")

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed))

    def spawn(self, *key) -> np.random.Generator:
        ints = tuple(
            zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in key
        )
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=ints))

    @staticmethod
    def draw(rng: np.random.Generator, shape) -> np.ndarray:
        return rng.standard_exponential(shape)


def normalized_gain(gamma: float, budget: LinkBudget) -> float:
    """Channel gain over noise and path loss: gamma / (N0*B0 * d**alpha)."""
    return gamma / (budget.n0_b0 * budget.distance**budget.alpha)


def inverse_gain_tail(gamma_th: float) -> float:
    """Tail expectation of the inverse gain under the unit-mean exponential
    law: integral of exp(-g)/g for g from gamma_th to infinity.

    Power series below 1, modified-Lentz continued fraction above; absolute
    error is below 1e-10 over the working range.
    """
    x = float(gamma_th)
    if not x > 0.0:
        raise ValueError("gamma_th must be > 0")
    if x <= 1.0:
        total = -EULER_GAMMA - math.log(x)
        term = 1.0
        for k in range(1, 80):
            term *= -x / k
            total -= term / k
            if abs(term) < 1e-18 * (1.0 + abs(total)) * k:
                break
        return total
    b = x + 1.0
    c = 1e308
    d = 1.0 / b
    h = d
    for i in range(1, 200):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x)


def rho(gamma_th: float, n_assigned: int, budget: LinkBudget) -> float:
    """Receive-SNR level of truncated inversion that spends the full power
    budget on average when it is split across n_assigned carriers."""
    if n_assigned < 1:
        raise ValueError("n_assigned must be >= 1")
    denom = n_assigned * budget.n0_b0 * budget.distance**budget.alpha
    return budget.p_max / (denom * inverse_gain_tail(gamma_th))


def allocated_power(gamma: float, gamma_th: float, rho_level: float, budget: LinkBudget) -> float:
    """Instantaneous transmit power: rho / normalized gain above the threshold
    (boundary included), zero below it."""
    if gamma < gamma_th:
        return 0.0
    return rho_level / normalized_gain(gamma, budget)


def _qam_snr_gap(ber: float) -> float:
    return 1.5 / (-math.log(5.0 * ber))


def optimize_threshold(n_assigned: int, budget: LinkBudget) -> ThresholdSolution:
    """Maximize the expected per-carrier rate over the inversion threshold.

    Golden-section search over [1e-6, 50], refined until the bracket is
    narrower than 1e-8. The objective is treated as unimodal.
    """
    if n_assigned < 1:
        raise ValueError("n_assigned must be >= 1")
    gap = _qam_snr_gap(budget.ber)
    denom = n_assigned * budget.n0_b0 * budget.distance**budget.alpha
    scale = gap * budget.p_max / denom

    def rate(g: float) -> float:
        return budget.b0 * math.log2(1.0 + scale / inverse_gain_tail(g)) * math.exp(-g)

    lo, hi = GAMMA_TH_LO, GAMMA_TH_HI
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = rate(c), rate(d)
    while hi - lo > GAMMA_TH_TOL:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = rate(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = rate(d)
    g = 0.5 * (lo + hi)
    return ThresholdSolution(
        gamma_th=g,
        rho=budget.p_max / (denom * inverse_gain_tail(g)),
        expected_rate=rate(g),
    )


def expected_ul_rate(n_assigned: int, budget: LinkBudget) -> float:
    """Expected uplink rate over n_assigned i.i.d. carriers, each operating at
    the per-carrier optimum."""
    return n_assigned * optimize_threshold(n_assigned, budget).expected_rate


def broadcast_snr(gamma: float, budget: LinkBudget, total_subcarriers: int) -> float:
    """Downlink per-carrier SNR with the transmit power split evenly over
    total_subcarriers carriers."""
    if total_subcarriers < 1:
        raise ValueError("total_subcarriers must be >= 1")
    denom = total_subcarriers * budget.n0_b0 * budget.distance**budget.alpha
    return budget.p_max * gamma / denom


def broadcast_rate_per_subcarrier(
    gains, budgets: list[LinkBudget], total_subcarriers: int
) -> float:
    """Rateless broadcast rate on one carrier: the minimum over users of
    B0 * log2(1 + SNR_user)."""
    if not budgets:
        raise ValueError("at least one user required")
    if len(gains) != len(budgets):
        raise ValueError("one gain per user required")
    return min(
        b.b0 * math.log2(1.0 + broadcast_snr(g, b, total_subcarriers))
        for g, b in zip(gains, budgets)
    )
