"""Desk-scale training stack: linear softmax and one-hidden-layer models with
analytic gradients, a synthetic Gaussian-mixture classification task, and the
four federated loops (flat / hierarchical, dense / sparsified).

Conventions shared by every loop:
  - mini-batch draws depend only on (seed, mu index, iteration), so two
    algorithms started from the same seed see identical batches;
  - iteration counter t is 1-based and the hierarchical loops sync whenever
    t is divisible by the averaging period;
  - transmitted bits are tallied per hop under the keys ul_mu, dl_sbs,
    ul_sbs, dl_mbs (flat operation uses ul_mu and dl_mbs only).

Bit accounting: a dense message costs Q*Qhat bits, a sparsified one
kept*(Qhat + index_bits).  Dense hierarchical rounds broadcast the fresh
model to the clusters after each sync, so their dl_sbs hop carries H+1
messages per period; the sparsified hierarchical loop folds the sync into
its regular per-iteration downlink difference.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .sparsify import ErrorBuffers, SparsifierConfig, kept_count, mu_sparse_step, top_fraction
from .topology import NetworkLayout

MODEL_KINDS = ("softmax_linear", "mlp")
HOPS = ("ul_mu", "dl_sbs", "ul_sbs", "dl_mbs")

# Sub-stream tags so init, data generation and batch draws never collide.
_INIT_KEY = 1
_DATA_KEY = 2
_BATCH_KEY = 3


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class ModelShapes:
    n_features: int
    n_classes: int
    hidden_dim: int | None = None


@dataclass
class Model:
    kind: str
    params: np.ndarray
    shapes: ModelShapes

    @property
    def dim(self) -> int:
        return int(self.params.size)


def param_count(kind: str, shapes: ModelShapes) -> int:
    f, c = shapes.n_features, shapes.n_classes
    if kind == "softmax_linear":
        return c * f + c
    if kind == "mlp":
        h = shapes.hidden_dim
        if not h:
            raise ValueError("mlp needs hidden_dim")
        return h * f + h + c * h + c
    raise ValueError(f"unknown model kind {kind!r}")


def init_model(
    kind: str,
    n_features: int,
    n_classes: int,
    hidden_dim: int | None = None,
    seed: int = 0,
    init_scale: float = 0.01,
) -> Model:
    shapes = ModelShapes(n_features, n_classes, hidden_dim if kind == "mlp" else None)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_INIT_KEY,)))
    params = init_scale * rng.standard_normal(param_count(kind, shapes))
    return Model(kind=kind, params=params, shapes=shapes)


def _unpack_softmax(params: np.ndarray, s: ModelShapes):
    c, f = s.n_classes, s.n_features
    return params[: c * f].reshape(c, f), params[c * f : c * f + c]


def _unpack_mlp(params: np.ndarray, s: ModelShapes):
    f, c, h = s.n_features, s.n_classes, s.hidden_dim
    o = 0
    w1 = params[o : o + h * f].reshape(h, f)
    o += h * f
    b1 = params[o : o + h]
    o += h
    w2 = params[o : o + c * h].reshape(c, h)
    o += c * h
    b2 = params[o : o + c]
    return w1, b1, w2, b2


def _softmax_xent(logits: np.ndarray, y: np.ndarray):
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(y)
    loss = -float(logp[np.arange(n), y].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    return loss, dlogits


def predict_logits(model: Model, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    if model.kind == "softmax_linear":
        w, b = _unpack_softmax(model.params, model.shapes)
        return x @ w.T + b
    if model.kind == "mlp":
        w1, b1, w2, b2 = _unpack_mlp(model.params, model.shapes)
        return np.maximum(x @ w1.T + b1, 0.0) @ w2.T + b2
    raise ValueError(f"unknown model kind {model.kind!r}")


def forward_loss_grad(
    model: Model, features, labels, weight_decay: float = 0.0
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus (wd/2)*||w||^2 and its exact gradient, flat."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != model.shapes.n_features:
        raise ValueError("feature matrix does not match the model input width")
    if y.shape != (x.shape[0],):
        raise ValueError("one label per sample required")
    if model.kind == "softmax_linear":
        w, b = _unpack_softmax(model.params, model.shapes)
        loss, dlogits = _softmax_xent(x @ w.T + b, y)
        grad = np.concatenate([(dlogits.T @ x).ravel(), dlogits.sum(axis=0)])
    elif model.kind == "mlp":
        w1, b1, w2, b2 = _unpack_mlp(model.params, model.shapes)
        z1 = x @ w1.T + b1
        a1 = np.maximum(z1, 0.0)
        loss, dlogits = _softmax_xent(a1 @ w2.T + b2, y)
        dz1 = (dlogits @ w2) * (z1 > 0.0)
        grad = np.concatenate(
            [
                (dz1.T @ x).ravel(),
                dz1.sum(axis=0),
                (dlogits.T @ a1).ravel(),
                dlogits.sum(axis=0),
            ]
        )
    else:
        raise ValueError(f"unknown model kind {model.kind!r}")
    if weight_decay:
        loss += 0.5 * weight_decay * float(model.params @ model.params)
        grad = grad + weight_decay * model.params
    return loss, grad


def evaluate(model: Model, features, labels) -> float:
    """Classification accuracy; argmax breaks ties on the lowest class index."""
    logits = predict_logits(model, features)
    pred = np.argmax(logits, axis=1)
    return float((pred == np.asarray(labels)).mean())


def save_model(model: Model, path: str | Path) -> None:
    """Flat little-endian float64 binary plus a JSON shape header."""
    path = Path(path)
    model.params.astype("<f8").tofile(path.with_suffix(".bin"))
    header = {
        "kind": model.kind,
        "n_features": model.shapes.n_features,
        "n_classes": model.shapes.n_classes,
        "hidden_dim": model.shapes.hidden_dim,
        "dtype": "<f8",
        "count": model.dim,
    }
    path.with_suffix(".json").write_text(json.dumps(header, sort_keys=True))


def load_model(path: str | Path) -> Model:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    params = np.fromfile(path.with_suffix(".bin"), dtype=header["dtype"]).astype(float)
    if params.size != header["count"]:
        raise ValueError("checkpoint length does not match its header")
    shapes = ModelShapes(header["n_features"], header["n_classes"], header["hidden_dim"])
    return Model(kind=header["kind"], params=params, shapes=shapes)


# ---------------------------------------------------------------------------
# data


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    shards: list[np.ndarray]
    test_features: np.ndarray | None = None
    test_labels: np.ndarray | None = None

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])


def shard_indices(n_samples: int, n_shards: int) -> list[np.ndarray]:
    """Contiguous split of the sample order into n_shards pieces."""
    if n_shards < 1 or n_shards > n_samples:
        raise ValueError("need 1 <= n_shards <= n_samples")
    return [np.asarray(s) for s in np.array_split(np.arange(n_samples), n_shards)]


def make_synthetic(
    n_samples: int = 20000,
    n_features: int = 32,
    n_classes: int = 4,
    n_test: int = 4000,
    n_shards: int = 1,
    seed: int = 0,
    class_scale: float = 3.0,
) -> Dataset:
    """Gaussian mixture: class centers of norm class_scale, unit noise.

    Labels are drawn i.i.d., so the natural sample order is already mixed and
    the contiguous shards stay class-balanced.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_DATA_KEY,)))
    centers = rng.standard_normal((n_classes, n_features))
    centers *= class_scale / np.linalg.norm(centers, axis=1, keepdims=True)
    y = rng.integers(0, n_classes, size=n_samples + n_test)
    x = centers[y] + rng.standard_normal((n_samples + n_test, n_features))
    return Dataset(
        features=x[:n_samples],
        labels=y[:n_samples],
        shards=shard_indices(n_samples, n_shards),
        test_features=x[n_samples:],
        test_labels=y[n_samples:],
    )


def load_csv_dataset(
    train_path: str | Path, test_path: str | Path | None = None, n_shards: int = 1
) -> Dataset:
    """CSV rows are feature columns followed by an integer label column."""
    raw = np.loadtxt(train_path, delimiter=",", ndmin=2)
    test_x = test_y = None
    if test_path is not None:
        test = np.loadtxt(test_path, delimiter=",", ndmin=2)
        test_x, test_y = test[:, :-1], test[:, -1].astype(np.int64)
    return Dataset(
        features=raw[:, :-1],
        labels=raw[:, -1].astype(np.int64),
        shards=shard_indices(raw.shape[0], n_shards),
        test_features=test_x,
        test_labels=test_y,
    )


def minibatch_indices(seed: int, mu: int, t: int, shard: np.ndarray, batch_size: int):
    """Sample batch_size shard entries without replacement; depends only on
    (seed, mu, t) so every algorithm sees the same batches."""
    if len(shard) < batch_size:
        raise ValueError("shard smaller than the batch size")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_BATCH_KEY, mu, t)))
    pick = rng.choice(len(shard), size=batch_size, replace=False)
    return shard[np.sort(pick)]


# ---------------------------------------------------------------------------
# configuration and state


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 0.1
    warmup_epochs: int = 0
    decay_epochs: tuple[int, ...] = ()
    decay_factor: float = 0.1
    weight_decay: float = 0.0
    h_period: int = 4
    epochs: int = 10
    seed: int = 0
    q_bits: int = 32
    aggregate: str = "sum"
    sparsifier: SparsifierConfig = field(default_factory=SparsifierConfig)

    def validate(self) -> list[str]:
        errs = []
        if self.batch_size < 1:
            errs.append("train.batch_size must be >= 1")
        if not self.learning_rate > 0:
            errs.append("train.learning_rate must be > 0")
        if self.warmup_epochs < 0:
            errs.append("train.warmup_epochs must be >= 0")
        if any(e < 0 for e in self.decay_epochs):
            errs.append("train.decay_epochs must be >= 0")
        if not 0.0 < self.decay_factor <= 1.0:
            errs.append("train.decay_factor must lie in (0, 1]")
        if self.weight_decay < 0:
            errs.append("train.weight_decay must be >= 0")
        if self.h_period < 1:
            errs.append("train.h_period must be >= 1")
        if self.epochs < 0:
            errs.append("train.epochs must be >= 0")
        if self.q_bits < 1:
            errs.append("train.q_bits must be >= 1")
        if self.aggregate not in ("sum", "mean"):
            errs.append("train.aggregate must be 'sum' or 'mean'")
        errs.extend(self.sparsifier.validate())
        return errs


def learning_rate(cfg: TrainConfig, t: int, steps_per_epoch: int) -> float:
    """Per-iteration linear warm-up to the base rate, then a step decay at
    each configured epoch boundary."""
    warm = cfg.warmup_epochs * steps_per_epoch
    if warm and t <= warm:
        return cfg.learning_rate * t / warm
    epoch = (t - 1) // steps_per_epoch
    drops = sum(1 for e in cfg.decay_epochs if epoch >= e)
    return cfg.learning_rate * cfg.decay_factor**drops


@dataclass
class TrainState:
    models: list[Model]
    buffers: list[ErrorBuffers]
    sbs_refs: list[np.ndarray]
    sbs_dl_err: list[np.ndarray]
    sbs_ul_err: list[np.ndarray]
    mbs_ref: np.ndarray
    mbs_err: np.ndarray
    steps_per_epoch: int
    t: int = 0
    sync_count: int = 0
    last_loss: float = math.nan
    bits: dict[str, int] = field(default_factory=lambda: {h: 0 for h in HOPS})

    @property
    def dim(self) -> int:
        return self.models[0].dim


def clusters_from(layout: NetworkLayout | None, n_mus: int) -> list[list[int]]:
    if layout is None:
        return [list(range(n_mus))]
    clusters = [layout.cluster_members(n) for n in range(layout.n_clusters)]
    if sorted(k for c in clusters for k in c) != list(range(n_mus)):
        raise ValueError("layout does not cover the shard list")
    return clusters


def init_state(
    template: Model, n_mus: int, n_clusters: int, dataset: Dataset, cfg: TrainConfig
) -> TrainState:
    if len(dataset.shards) != n_mus:
        raise ValueError("one shard per MU required")
    steps = max(1, min(len(s) for s in dataset.shards) // cfg.batch_size)
    dim = template.dim
    return TrainState(
        models=[replace(template, params=template.params.copy()) for _ in range(n_mus)],
        buffers=[ErrorBuffers.zeros(dim) for _ in range(n_mus)],
        sbs_refs=[template.params.copy() for _ in range(n_clusters)],
        sbs_dl_err=[np.zeros(dim) for _ in range(n_clusters)],
        sbs_ul_err=[np.zeros(dim) for _ in range(n_clusters)],
        mbs_ref=template.params.copy(),
        mbs_err=np.zeros(dim),
        steps_per_epoch=steps,
    )


def _mu_gradient(state: TrainState, data: Dataset, cfg: TrainConfig, k: int, t: int):
    idx = minibatch_indices(cfg.seed, k, t, data.shards[k], cfg.batch_size)
    return forward_loss_grad(
        state.models[k], data.features[idx], data.labels[idx], cfg.weight_decay
    )


def _index_bits(dim: int) -> int:
    return max(1, math.ceil(math.log2(dim)))


def _sparse_message_bits(dim: int, phi: float, q_bits: int) -> int:
    if phi == 0.0:
        return dim * q_bits
    return kept_count(dim, phi) * (q_bits + _index_bits(dim))


# ---------------------------------------------------------------------------
# the four steps


def fl_step(state: TrainState, data: Dataset, cfg: TrainConfig) -> TrainState:
    """Flat dense round: every MU uploads its gradient, the server averages,
    everyone applies the same update."""
    t = state.t + 1
    lr = learning_rate(cfg, t, state.steps_per_epoch)
    n_mus = len(state.models)
    losses = np.empty(n_mus)
    grads = np.empty((n_mus, state.dim))
    for k in range(n_mus):
        losses[k], grads[k] = _mu_gradient(state, data, cfg, k, t)
    g = grads.mean(axis=0)
    for m in state.models:
        m.params -= lr * g
    state.bits["ul_mu"] += n_mus * state.dim * cfg.q_bits
    state.bits["dl_mbs"] += state.dim * cfg.q_bits
    state.t = t
    state.last_loss = float(losses.mean())
    return state


def hfl_step(
    state: TrainState, data: Dataset, layout: NetworkLayout | None, cfg: TrainConfig
) -> TrainState:
    """Hierarchical dense round: cluster-mean updates every iteration, global
    model average whenever t is divisible by the period."""
    t = state.t + 1
    lr = learning_rate(cfg, t, state.steps_per_epoch)
    clusters = clusters_from(layout, len(state.models))
    losses = []
    for members in clusters:
        grads = np.empty((len(members), state.dim))
        for i, k in enumerate(members):
            loss, grads[i] = _mu_gradient(state, data, cfg, k, t)
            losses.append(loss)
        g = grads.mean(axis=0)
        for k in members:
            state.models[k].params -= lr * g
    n_mus = len(state.models)
    n_cl = len(clusters)
    state.bits["ul_mu"] += n_mus * state.dim * cfg.q_bits
    state.bits["dl_sbs"] += n_cl * state.dim * cfg.q_bits
    if t % cfg.h_period == 0:
        cluster_models = np.stack([state.models[m[0]].params for m in clusters])
        w = cluster_models.mean(axis=0)
        for m in state.models:
            m.params = w.copy()
        state.sync_count += 1
        state.bits["ul_sbs"] += n_cl * state.dim * cfg.q_bits
        state.bits["dl_mbs"] += state.dim * cfg.q_bits
        state.bits["dl_sbs"] += n_cl * state.dim * cfg.q_bits
    state.t = t
    state.last_loss = float(np.mean(losses))
    return state


def sparse_fl_step(state: TrainState, data: Dataset, cfg: TrainConfig) -> TrainState:
    """Flat sparsified round: each MU sends a compressed gradient, the server
    combines them (sum by default, mean via cfg.aggregate) and broadcasts the
    dense aggregate."""
    t = state.t + 1
    lr = learning_rate(cfg, t, state.steps_per_epoch)
    sp = cfg.sparsifier
    n_mus = len(state.models)
    losses = np.empty(n_mus)
    agg = np.zeros(state.dim)
    for k in range(n_mus):
        losses[k], g = _mu_gradient(state, data, cfg, k, t)
        payload, state.buffers[k] = mu_sparse_step(state.buffers[k], g, sp.sigma, sp.phi_ul_mu)
        agg += payload.densify()
    if cfg.aggregate == "mean":
        agg /= n_mus
    for m in state.models:
        m.params -= lr * agg
    state.bits["ul_mu"] += n_mus * _sparse_message_bits(state.dim, sp.phi_ul_mu, cfg.q_bits)
    state.bits["dl_mbs"] += state.dim * cfg.q_bits
    state.t = t
    state.last_loss = float(losses.mean())
    return state


def sparse_hfl_step(
    state: TrainState, data: Dataset, layout: NetworkLayout | None, cfg: TrainConfig
) -> TrainState:
    """Hierarchical sparsified round built on reference models.

    Uplink: compressed MU gradients, cluster-averaged at the SBS.  The SBS
    tracks W_n against its broadcast reference; on sync iterations the SBSs
    exchange compressed model differences with the MBS (combined by
    cfg.aggregate, residuals discounted by beta_m), and every iteration ends
    with the SBS broadcasting the compressed difference of its own reference
    (residual discounted by beta_s).
    """
    t = state.t + 1
    lr = learning_rate(cfg, t, state.steps_per_epoch)
    sp = cfg.sparsifier
    clusters = clusters_from(layout, len(state.models))
    n_cl = len(clusters)
    dim = state.dim

    losses = []
    sbs_models = []
    for n, members in enumerate(clusters):
        payloads = np.empty((len(members), dim))
        for i, k in enumerate(members):
            loss, g = _mu_gradient(state, data, cfg, k, t)
            losses.append(loss)
            payload, state.buffers[k] = mu_sparse_step(
                state.buffers[k], g, sp.sigma, sp.phi_ul_mu
            )
            payloads[i] = payload.densify()
        g_n = payloads.mean(axis=0)
        sbs_models.append(state.sbs_refs[n] - lr * g_n + sp.beta_s * state.sbs_dl_err[n])
    state.bits["ul_mu"] += len(state.models) * _sparse_message_bits(
        dim, sp.phi_ul_mu, cfg.q_bits
    )

    if t % cfg.h_period == 0:
        sent = np.empty((n_cl, dim))
        for n in range(n_cl):
            delta_n = sbs_models[n] - state.mbs_ref
            omega_n = top_fraction(delta_n, sp.phi_ul_sbs).densify()
            state.sbs_ul_err[n] = delta_n - omega_n
            sent[n] = omega_n
        combined = sent.sum(axis=0) if cfg.aggregate == "sum" else sent.mean(axis=0)
        delta_w = combined + sp.beta_m * state.mbs_err
        omega_w = top_fraction(delta_w, sp.phi_dl_mbs).densify()
        state.mbs_err = delta_w - omega_w
        for n in range(n_cl):
            sbs_models[n] = state.mbs_ref + omega_w + state.sbs_ul_err[n] / n_cl
        state.mbs_ref = state.mbs_ref + omega_w
        state.sync_count += 1
        state.bits["ul_sbs"] += n_cl * _sparse_message_bits(dim, sp.phi_ul_sbs, cfg.q_bits)
        state.bits["dl_mbs"] += _sparse_message_bits(dim, sp.phi_dl_mbs, cfg.q_bits)

    for n, members in enumerate(clusters):
        delta = sbs_models[n] - state.sbs_refs[n]
        omega = top_fraction(delta, sp.phi_dl_sbs).densify()
        state.sbs_refs[n] = state.sbs_refs[n] + omega
        state.sbs_dl_err[n] = delta - omega
        for k in members:
            state.models[k].params = state.sbs_refs[n].copy()
    state.bits["dl_sbs"] += n_cl * _sparse_message_bits(dim, sp.phi_dl_sbs, cfg.q_bits)

    state.t = t
    state.last_loss = float(np.mean(losses))
    return state


ALGORITHMS = ("fl", "hfl", "sparse_fl", "sparse_hfl")


def _apply_step(algorithm: str, state, data, layout, cfg):
    if algorithm == "fl":
        return fl_step(state, data, cfg)
    if algorithm == "hfl":
        return hfl_step(state, data, layout, cfg)
    if algorithm == "sparse_fl":
        return sparse_fl_step(state, data, cfg)
    if algorithm == "sparse_hfl":
        return sparse_hfl_step(state, data, layout, cfg)
    raise ValueError(f"unknown algorithm {algorithm!r}")


# ---------------------------------------------------------------------------
# history and the driver


@dataclass
class MetricHistory:
    algorithm: str
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    test_accuracy: list[float] = field(default_factory=list)
    bits: list[dict[str, int]] = field(default_factory=list)
    sim_seconds: list[float] = field(default_factory=list)
    final_model: Model | None = None

    CSV_COLUMNS = (
        "epoch",
        "train_loss",
        "test_accuracy",
        "bits_ul_mu",
        "bits_dl_sbs",
        "bits_ul_sbs",
        "bits_dl_mbs",
        "sim_seconds",
    )

    def rows(self) -> list[dict]:
        out = []
        for i, e in enumerate(self.epochs):
            row = {
                "epoch": e,
                "train_loss": self.train_loss[i],
                "test_accuracy": self.test_accuracy[i],
                "sim_seconds": self.sim_seconds[i],
            }
            for hop in HOPS:
                row[f"bits_{hop}"] = self.bits[i][hop]
            out.append(row)
        return out

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.CSV_COLUMNS)
            writer.writeheader()
            for row in self.rows():
                writer.writerow(row)

    def to_json(self) -> str:
        return json.dumps({"algorithm": self.algorithm, "rows": self.rows()}, sort_keys=True)


def consensus_model(state: TrainState) -> Model:
    """Across-MU parameter average; equals the shared model whenever the MUs
    agree (always in flat operation, at sync points in hierarchical)."""
    mean = np.stack([m.params for m in state.models]).mean(axis=0)
    return replace(state.models[0], params=mean)


def train(
    algorithm: str,
    dataset: Dataset,
    layout: NetworkLayout | None,
    cfg: TrainConfig,
    model_kind: str = "softmax_linear",
    hidden_dim: int | None = None,
    seconds_per_iteration: float = 0.0,
) -> MetricHistory:
    """Run one algorithm for cfg.epochs epochs and record per-epoch metrics.

    Test accuracy (when the dataset has a holdout) is measured on the
    across-MU average model; simulated seconds accumulate the supplied
    per-iteration latency.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    problems = cfg.validate()
    if problems:
        raise ValueError("; ".join(problems))
    n_mus = len(dataset.shards)
    n_clusters = layout.n_clusters if layout is not None else 1
    template = init_model(
        model_kind,
        dataset.n_features,
        dataset.n_classes,
        hidden_dim=hidden_dim,
        seed=cfg.seed,
    )
    state = init_state(template, n_mus, n_clusters, dataset, cfg)
    history = MetricHistory(algorithm=algorithm)
    for epoch in range(1, cfg.epochs + 1):
        epoch_losses = []
        for _ in range(state.steps_per_epoch):
            state = _apply_step(algorithm, state, dataset, layout, cfg)
            epoch_losses.append(state.last_loss)
        snapshot = consensus_model(state)
        if dataset.test_features is not None:
            acc = evaluate(snapshot, dataset.test_features, dataset.test_labels)
        else:
            acc = math.nan
        history.epochs.append(epoch)
        history.train_loss.append(float(np.mean(epoch_losses)))
        history.test_accuracy.append(acc)
        history.bits.append(dict(state.bits))
        history.sim_seconds.append(seconds_per_iteration * state.t)
    history.final_model = consensus_model(state)
    return history
