"""Simulator for hierarchical federated learning over a heterogeneous
cellular network: hexagonal topology, truncated-inversion uplinks, max-min
sub-carrier allocation, rateless broadcast downlinks, latency composition,
and sparsified training loops."""

__version__ = "0.1.0"

from .topology import (
    GeoPoint,
    LayoutConfig,
    NetworkLayout,
    build_layout,
    color_clusters,
    distance,
    layout_from_json,
    layout_to_json,
)
from .channel import (
    FadingModel,
    LinkBudget,
    RadioParams,
    RADIO_PRESETS,
    ThresholdSolution,
    broadcast_rate_per_subcarrier,
    broadcast_snr,
    expected_ul_rate,
    inverse_gain_tail,
    link_budget,
    normalized_gain,
    optimize_threshold,
    allocated_power,
    rho,
)
from .allocation import (
    AllocationResult,
    InfeasibleAllocation,
    allocate_maxmin,
    assign_carrier_indices,
    brute_force_allocate,
)
from .sparsify import (
    ErrorBuffers,
    SparseVector,
    SparsifierConfig,
    apply_discounted_error,
    kept_count,
    mu_sparse_step,
    threshold_mask,
    top_fraction,
)
from .latency import (
    HopPayloads,
    LatencyBreakdown,
    LatencyConfig,
    PayloadSpec,
    broadcast_latency,
    cluster_round_latency,
    fl_breakdown,
    fl_iteration_latency,
    hfl_breakdown,
    hfl_round_quantities,
    hop_payloads,
    payload_bits,
    period_latency,
    ul_latency,
)
from .learning import (
    ALGORITHMS,
    Dataset,
    MetricHistory,
    Model,
    ModelShapes,
    TrainConfig,
    TrainState,
    evaluate,
    fl_step,
    forward_loss_grad,
    hfl_step,
    init_model,
    init_state,
    load_model,
    make_synthetic,
    minibatch_indices,
    save_model,
    sparse_fl_step,
    sparse_hfl_step,
    train,
)
from .sim import (
    ConfigError,
    EXPERIMENTS,
    SimConfig,
    TaskConfig,
    describe_presets,
    run_experiment,
    validate_config,
)
