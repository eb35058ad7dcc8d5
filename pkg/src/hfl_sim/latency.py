"""Latency accounting for one training iteration.

Flat operation: every MU uploads its payload straight to the MBS over its
allocated carriers, then the MBS broadcasts the aggregate back; the iteration
time is the slowest upload plus the broadcast completion time.

Hierarchical operation: MUs exchange with their SBS for H local iterations,
then the SBSs sync with the MBS over the fronthaul.  The period latency is

    max_n sum_i (gu_n(i) + gd_n(i)) + theta_u + theta_d + max_n gd_n

and the per-iteration time divides that by H.  Broadcast completion times
are Monte Carlo means over replicas of the slotted rateless broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .allocation import AllocationResult, InfeasibleAllocation, allocate_maxmin
from .channel import FadingModel, LinkBudget, RadioParams, link_budget
from .sparsify import SparsifierConfig, kept_count
from .topology import NetworkLayout

INFINITE_LATENCY = math.inf

# Cap on elements drawn per slot when vectorizing replicas, to bound memory.
_MAX_DRAW_ELEMENTS = 20_000_000


@dataclass(frozen=True)
class PayloadSpec:
    """One transmitted model or gradient: q_params entries of q_bits each;
    a sparsified payload carries only the kept entries plus their indices."""

    q_params: int
    q_bits: int
    sparsity: float = 0.0
    index_bits: int | None = None

    def validate(self) -> list[str]:
        errs = []
        if self.q_params < 1:
            errs.append("payload.q_params must be >= 1")
        if self.q_bits < 1:
            errs.append("payload.q_bits must be >= 1")
        if not 0.0 <= self.sparsity < 1.0:
            errs.append("payload.sparsity must lie in [0, 1)")
        if self.index_bits is not None and self.index_bits < 1:
            errs.append("payload.index_bits must be >= 1")
        return errs

    def resolved_index_bits(self) -> int:
        if self.index_bits is not None:
            return self.index_bits
        return max(1, math.ceil(math.log2(self.q_params)))


@dataclass(frozen=True)
class LatencyConfig:
    slot_duration_ts: float = 1e-3
    fronthaul_multiplier: float = 100.0
    mc_replicas: int = 200

    def validate(self) -> list[str]:
        errs = []
        if not self.slot_duration_ts > 0:
            errs.append("latency.slot_duration_ts must be > 0")
        if not self.fronthaul_multiplier > 0:
            errs.append("latency.fronthaul_multiplier must be > 0")
        if self.mc_replicas < 1:
            errs.append("latency.mc_replicas must be >= 1")
        return errs


@dataclass
class LatencyBreakdown:
    t_ul_per_mu: list[float] = field(default_factory=list)
    t_ul: float = 0.0
    t_dl: float = 0.0
    gamma_u_per_cluster: list[float] = field(default_factory=list)
    gamma_d_per_cluster: list[float] = field(default_factory=list)
    theta_u: float = 0.0
    theta_d: float = 0.0
    gamma_period: float = 0.0
    gamma_per_iter: float = 0.0

    def to_dict(self) -> dict:
        return {
            "t_ul_per_mu": list(self.t_ul_per_mu),
            "t_ul": self.t_ul,
            "t_dl": self.t_dl,
            "gamma_u_per_cluster": list(self.gamma_u_per_cluster),
            "gamma_d_per_cluster": list(self.gamma_d_per_cluster),
            "theta_u": self.theta_u,
            "theta_d": self.theta_d,
            "gamma_period": self.gamma_period,
            "gamma_per_iter": self.gamma_per_iter,
        }


def payload_bits(spec: PayloadSpec) -> int:
    """Bits on the wire: dense Q*Qhat, sparse kept*(Qhat + index_bits)."""
    problems = spec.validate()
    if problems:
        raise ValueError("; ".join(problems))
    if spec.sparsity == 0.0:
        return spec.q_params * spec.q_bits
    kept = kept_count(spec.q_params, spec.sparsity)
    return kept * (spec.q_bits + spec.resolved_index_bits())


def ul_latency(rate: float, payload: int) -> float:
    """Upload seconds at a fixed expected rate; zero rate reports the
    INFINITE_LATENCY sentinel instead of raising."""
    if payload < 0:
        raise ValueError("payload must be >= 0")
    if payload == 0:
        return 0.0
    if rate <= 0.0:
        return INFINITE_LATENCY
    return payload / rate


def broadcast_latency(
    payload: int,
    users: list[LinkBudget],
    total_subcarriers: int,
    cfg: LatencyConfig,
    rng: np.random.Generator,
    gain_sampler=None,
) -> float:
    """Monte Carlo mean completion time of the slotted rateless broadcast.

    Each slot draws fresh gains per user and carrier; a carrier delivers at
    the worst-user rate and the payload completes when the accumulated bits
    reach the payload size.  Replicas advance in lockstep so the result is
    deterministic for a given generator state.
    """
    if not users:
        raise ValueError("at least one user required")
    if payload < 0:
        raise ValueError("payload must be >= 0")
    if total_subcarriers < 1:
        raise ValueError("total_subcarriers must be >= 1")
    if payload == 0:
        return 0.0
    draw = gain_sampler if gain_sampler is not None else FadingModel.draw
    n_users = len(users)
    b0 = users[0].b0
    coef = np.array(
        [u.p_max / (total_subcarriers * u.n0_b0 * u.distance**u.alpha) for u in users]
    )

    chunk = max(1, _MAX_DRAW_ELEMENTS // (n_users * total_subcarriers))
    times = np.empty(cfg.mc_replicas)
    for start in range(0, cfg.mc_replicas, chunk):
        stop = min(start + chunk, cfg.mc_replicas)
        size = stop - start
        remaining = np.full(size, float(payload))
        slot_of = np.zeros(size, dtype=np.int64)
        active = np.arange(size)
        t = 0
        while active.size:
            t += 1
            gains = draw(rng, (active.size, n_users, total_subcarriers))
            snr = coef[None, :, None] * gains
            per_carrier = b0 * np.min(np.log2(1.0 + snr), axis=1)
            remaining[active] -= cfg.slot_duration_ts * per_carrier.sum(axis=1)
            done = remaining[active] <= 0.0
            slot_of[active[done]] = t
            active = active[~done]
        times[start:stop] = slot_of * cfg.slot_duration_ts
    return float(times.mean())


@dataclass(frozen=True)
class HopPayloads:
    """Payload of each hop of one iteration: MU uplink, SBS downlink, SBS
    fronthaul uplink, MBS downlink."""

    ul_mu: PayloadSpec
    dl_sbs: PayloadSpec
    ul_sbs: PayloadSpec
    dl_mbs: PayloadSpec


def hop_payloads(
    q_params: int, q_bits: int, sparsifier: SparsifierConfig | None = None
) -> HopPayloads:
    sp = sparsifier if sparsifier is not None else SparsifierConfig()
    mk = lambda phi: PayloadSpec(q_params=q_params, q_bits=q_bits, sparsity=phi)
    return HopPayloads(
        ul_mu=mk(sp.phi_ul_mu),
        dl_sbs=mk(sp.phi_dl_sbs),
        ul_sbs=mk(sp.phi_ul_sbs),
        dl_mbs=mk(sp.phi_dl_mbs),
    )


def mu_sbs_budgets(layout: NetworkLayout, cluster: int, radio: RadioParams) -> list[LinkBudget]:
    return [
        link_budget(radio, layout.mu_sbs_distance(k), radio.p_mu)
        for k in layout.cluster_members(cluster)
    ]


def mu_mbs_budgets(layout: NetworkLayout, radio: RadioParams) -> list[LinkBudget]:
    return [
        link_budget(radio, layout.mu_mbs_distance(k), radio.p_mu)
        for k in range(layout.n_mus)
    ]


def cluster_round_latency(
    cluster: int,
    layout: NetworkLayout,
    alloc: AllocationResult,
    ul_spec: PayloadSpec,
    cfg: LatencyConfig,
    radio: RadioParams,
    rng: np.random.Generator,
    dl_spec: PayloadSpec | None = None,
) -> tuple[float, float]:
    """Latency of one local round in a cluster: slowest member upload and the
    SBS broadcast completion over the cluster's carrier share."""
    members = layout.cluster_members(cluster)
    if len(members) != len(alloc.counts):
        raise ValueError("allocation does not match the cluster size")
    ul_bits = payload_bits(ul_spec)
    gamma_u = max(ul_latency(r, ul_bits) for r in alloc.rates)
    budgets = [
        link_budget(radio, layout.mu_sbs_distance(k), radio.p_sbs) for k in members
    ]
    gamma_d = broadcast_latency(
        payload_bits(dl_spec if dl_spec is not None else ul_spec),
        budgets,
        sum(alloc.counts),
        cfg,
        rng,
    )
    return gamma_u, gamma_d


def period_latency(
    per_iter: list[list[tuple[float, float]]],
    theta_u: float,
    theta_d: float,
    final_dl: float,
    h_period: int,
) -> LatencyBreakdown:
    """Combine per-cluster round latencies over one averaging period."""
    if h_period < 1:
        raise ValueError("h_period must be >= 1")
    if not per_iter:
        raise ValueError("at least one cluster required")
    if any(len(rounds) != h_period for rounds in per_iter):
        raise ValueError("each cluster needs exactly h_period round latencies")
    sums = [sum(gu + gd for gu, gd in rounds) for rounds in per_iter]
    gamma_period = max(sums) + theta_u + theta_d + final_dl
    return LatencyBreakdown(
        gamma_u_per_cluster=[sum(gu for gu, _ in r) / h_period for r in per_iter],
        gamma_d_per_cluster=[sum(gd for _, gd in r) / h_period for r in per_iter],
        theta_u=theta_u,
        theta_d=theta_d,
        gamma_period=gamma_period,
        gamma_per_iter=gamma_period / h_period,
    )


def fl_iteration_latency(
    layout: NetworkLayout,
    alloc: AllocationResult,
    ul_spec: PayloadSpec,
    cfg: LatencyConfig,
    radio: RadioParams,
    rng: np.random.Generator,
    dl_spec: PayloadSpec | None = None,
) -> float:
    """Slowest MU upload to the MBS plus the MBS broadcast completion."""
    per_mu, t_dl = _fl_parts(layout, alloc, ul_spec, cfg, radio, rng, dl_spec)
    return max(per_mu) + t_dl


def _fl_parts(layout, alloc, ul_spec, cfg, radio, rng, dl_spec=None):
    if layout.n_mus != len(alloc.counts):
        raise ValueError("allocation does not cover every MU")
    ul_bits = payload_bits(ul_spec)
    per_mu = [ul_latency(r, ul_bits) for r in alloc.rates]
    budgets = [
        link_budget(radio, layout.mu_mbs_distance(k), radio.p_mbs)
        for k in range(layout.n_mus)
    ]
    t_dl = broadcast_latency(
        payload_bits(dl_spec if dl_spec is not None else ul_spec),
        budgets,
        radio.m_subcarriers,
        cfg,
        rng,
    )
    return per_mu, t_dl


def fl_breakdown(
    layout: NetworkLayout,
    payloads: HopPayloads,
    cfg: LatencyConfig,
    radio: RadioParams,
    fading: FadingModel,
) -> LatencyBreakdown:
    """Allocate all carriers at the MBS and report the flat iteration parts."""
    alloc = allocate_maxmin(mu_mbs_budgets(layout, radio), radio.m_subcarriers)
    per_mu, t_dl = _fl_parts(
        layout, alloc, payloads.ul_mu, cfg, radio, fading.spawn("fl-dl"), payloads.dl_mbs
    )
    return LatencyBreakdown(t_ul_per_mu=per_mu, t_ul=max(per_mu), t_dl=t_dl)


@dataclass
class HflRoundQuantities:
    """Per-cluster round latencies and fronthaul terms; everything that does
    not depend on the averaging period H."""

    gamma_u: list[float]
    gamma_d: list[float]
    theta_u: float
    theta_d: float
    final_dl: float
    allocations: list[AllocationResult]
    m_per_cluster: int

    def period(self, h_period: int) -> LatencyBreakdown:
        per_iter = [
            [(gu, gd)] * h_period for gu, gd in zip(self.gamma_u, self.gamma_d)
        ]
        return period_latency(per_iter, self.theta_u, self.theta_d, self.final_dl, h_period)


def hfl_round_quantities(
    layout: NetworkLayout,
    payloads: HopPayloads,
    cfg: LatencyConfig,
    radio: RadioParams,
    fading: FadingModel,
    n_colors: int | None = None,
) -> HflRoundQuantities:
    """Allocate each cluster's carrier share and measure its round latencies.

    The spectrum is split over the reuse colors; fronthaul rates are the
    configured multiple of the layout-mean access rates.  The closing model
    broadcast reuses the per-iteration downlink estimate (same payload and
    machinery).
    """
    nc = n_colors if n_colors is not None else layout.n_colors
    if nc < 1:
        raise ValueError("n_colors must be >= 1")
    m_cluster = radio.m_subcarriers // nc
    gamma_u: list[float] = []
    gamma_d: list[float] = []
    allocs: list[AllocationResult] = []
    for n in range(layout.n_clusters):
        budgets = mu_sbs_budgets(layout, n, radio)
        if m_cluster < len(budgets):
            raise InfeasibleAllocation(
                f"cluster {n}: {m_cluster} carriers for {len(budgets)} MUs"
            )
        alloc = allocate_maxmin(budgets, m_cluster)
        gu, gd = cluster_round_latency(
            n,
            layout,
            alloc,
            payloads.ul_mu,
            cfg,
            radio,
            fading.spawn("hfl-dl", n),
            dl_spec=payloads.dl_sbs,
        )
        gamma_u.append(gu)
        gamma_d.append(gd)
        allocs.append(alloc)

    all_rates = [r for a in allocs for r in a.rates]
    u_sbs = cfg.fronthaul_multiplier * (sum(all_rates) / len(all_rates))
    theta_u = payload_bits(payloads.ul_sbs) / u_sbs

    dl_bits = payload_bits(payloads.dl_sbs)
    dl_rates = [dl_bits / gd for gd in gamma_d]
    r_sbs = cfg.fronthaul_multiplier * (sum(dl_rates) / len(dl_rates))
    theta_d = payload_bits(payloads.dl_mbs) / r_sbs

    return HflRoundQuantities(
        gamma_u=gamma_u,
        gamma_d=gamma_d,
        theta_u=theta_u,
        theta_d=theta_d,
        final_dl=max(gamma_d),
        allocations=allocs,
        m_per_cluster=m_cluster,
    )


def hfl_breakdown(
    layout: NetworkLayout,
    payloads: HopPayloads,
    h_period: int,
    cfg: LatencyConfig,
    radio: RadioParams,
    fading: FadingModel,
    n_colors: int | None = None,
) -> LatencyBreakdown:
    return hfl_round_quantities(layout, payloads, cfg, radio, fading, n_colors).period(
        h_period
    )
