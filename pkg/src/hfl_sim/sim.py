"""Experiment orchestration: JSON config validation, named radio presets,
sweep execution, and deterministic CSV/JSON reports.

Every report re-runs to identical bytes for the same config and seed: all
randomness flows from SeedSequence streams derived from the master seed, and
rows are emitted in sweep order.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .channel import RADIO_PRESETS, RadioParams
from .latency import (
    HopPayloads,
    LatencyBreakdown,
    LatencyConfig,
    fl_breakdown,
    hfl_round_quantities,
    hop_payloads,
    payload_bits,
)
from .channel import FadingModel
from .learning import (
    ALGORITHMS,
    MODEL_KINDS,
    Dataset,
    TrainConfig,
    load_csv_dataset,
    make_synthetic,
    param_count,
    ModelShapes,
    train,
)
from .sparsify import SparsifierConfig
from .topology import LayoutConfig, NetworkLayout, build_layout, layout_from_json

EXPERIMENTS = (
    "latency_speedup_vs_mus",
    "latency_speedup_vs_alpha",
    "sparsity_speedup",
    "training_run",
)

DEFAULT_SWEEPS = {
    "latency_speedup_vs_mus": {"mus_per_cluster": [2, 4, 8], "h_period": [2, 4, 6]},
    "latency_speedup_vs_alpha": {"alpha": [2.0, 2.4, 2.8, 3.2]},
    "sparsity_speedup": {"mus_per_cluster": [2, 4, 8]},
    "training_run": {},
}

_SWEEP_KEYS = {
    "latency_speedup_vs_mus": {"mus_per_cluster", "h_period"},
    "latency_speedup_vs_alpha": {"alpha"},
    "sparsity_speedup": {"mus_per_cluster"},
    "training_run": set(),
}

# Sparsities applied when an experiment needs a sparse arm and the config
# leaves the sparsifier dense.
SPARSE_DEFAULT = SparsifierConfig(
    phi_ul_mu=0.99, phi_dl_sbs=0.9, phi_ul_sbs=0.9, phi_dl_mbs=0.9
)


class ConfigError(Exception):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass(frozen=True)
class TaskConfig:
    n_samples: int = 20000
    n_features: int = 32
    n_classes: int = 4
    n_test: int = 4000
    class_scale: float = 3.0
    model: str = "softmax_linear"
    hidden_dim: int = 64
    algorithms: tuple[str, ...] = ("fl", "hfl", "sparse_fl", "sparse_hfl")
    train_csv: str | None = None
    test_csv: str | None = None

    def validate(self) -> list[str]:
        errs = []
        for name in ("n_samples", "n_features", "n_classes", "n_test", "hidden_dim"):
            if getattr(self, name) < 1:
                errs.append(f"task.{name} must be >= 1")
        if not self.class_scale > 0:
            errs.append("task.class_scale must be > 0")
        if self.model not in MODEL_KINDS:
            errs.append(f"task.model must be one of {MODEL_KINDS}")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                errs.append(f"task.algorithms: unknown algorithm {a!r}")
        return errs


@dataclass
class SimConfig:
    preset: str = "table2"
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    radio: RadioParams = field(default_factory=RadioParams)
    latency: LatencyConfig = field(default_factory=LatencyConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    experiment: str = "latency_speedup_vs_mus"
    sweep: dict = field(default_factory=dict)
    output_dir: str = "out"
    seed: int = 0
    q_params: int = 1_000_000
    n_colors_override: int | None = None
    layout_file: str | None = None

    def resolved(self) -> dict:
        raw = dataclasses.asdict(self)
        return json.loads(json.dumps(raw, sort_keys=True))

    def sha256(self) -> str:
        # output_dir is plumbing: the same physics written elsewhere must
        # hash (and therefore serialize) identically.
        payload = {k: v for k, v in self.resolved().items() if k != "output_dir"}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _coerce_override(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def _apply_overrides(raw: dict, overrides) -> list[str]:
    errs = []
    for item in overrides or ():
        if "=" not in item:
            errs.append(f"--set {item!r}: expected KEY=VALUE")
            continue
        key, value = item.split("=", 1)
        node = raw
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                errs.append(f"--set {key}: {p} is not a section")
                break
        else:
            node[parts[-1]] = _coerce_override(value)
    return errs


def _build_section(name, cls, raw, errors, defaults=None, coerce=None):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        errors.append(f"{name}: expected an object")
        raw = {}
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = dict(defaults or {})
    for k, v in raw.items():
        if k not in known:
            errors.append(f"{name}.{k}: unknown field")
            continue
        if coerce and k in coerce:
            try:
                v = coerce[k](v)
            except (TypeError, ValueError):
                errors.append(f"{name}.{k}: invalid value {v!r}")
                continue
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"{name}: {exc}")
        return cls()


def validate_config(
    raw,
    overrides=None,
    out_dir: str | None = None,
    seed: int | None = None,
) -> SimConfig:
    """Parse and validate a JSON config, collecting every violation before
    raising ConfigError.  `overrides` are CLI KEY=VALUE pairs applied on top."""
    errors: list[str] = []
    if isinstance(raw, str):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be a JSON object"])
    raw = json.loads(json.dumps(raw))
    errors.extend(_apply_overrides(raw, overrides))
    if seed is not None:
        raw["seed"] = seed
    if out_dir is not None:
        raw["output_dir"] = out_dir

    top_known = {
        "preset",
        "layout",
        "radio",
        "latency",
        "train",
        "task",
        "experiment",
        "sweep",
        "output_dir",
        "seed",
        "q_params",
        "n_colors_override",
        "layout_file",
    }
    for k in raw:
        if k not in top_known:
            errors.append(f"{k}: unknown field")

    preset = raw.get("preset", "table2")
    if preset not in RADIO_PRESETS:
        errors.append(f"preset: unknown preset {preset!r} (choose from {sorted(RADIO_PRESETS)})")
        preset = "table2"

    master_seed = raw.get("seed", 0)
    if not isinstance(master_seed, int) or master_seed < 0:
        errors.append("seed: must be a non-negative integer")
        master_seed = 0

    layout_raw = dict(raw.get("layout") or {})
    if "seed" not in layout_raw:
        layout_raw["seed"] = master_seed
    layout_cfg = _build_section("layout", LayoutConfig, layout_raw, errors)

    radio_defaults = dataclasses.asdict(RADIO_PRESETS[preset])
    radio = _build_section("radio", RadioParams, raw.get("radio"), errors, radio_defaults)

    latency_cfg = _build_section("latency", LatencyConfig, raw.get("latency"), errors)

    train_raw = dict(raw.get("train") or {})
    if "seed" not in train_raw:
        train_raw["seed"] = master_seed
    if "sparsifier" in train_raw:
        sparsifier = _build_section(
            "train.sparsifier", SparsifierConfig, train_raw.pop("sparsifier"), errors
        )
    else:
        # stock hop sparsities; pass an explicit all-zero sparsifier to run
        # the dense variants
        sparsifier = SPARSE_DEFAULT
    train_cfg = _build_section(
        "train",
        TrainConfig,
        train_raw,
        errors,
        {"sparsifier": sparsifier},
        coerce={"decay_epochs": tuple},
    )

    task = _build_section(
        "task", TaskConfig, raw.get("task"), errors, coerce={"algorithms": tuple}
    )

    experiment = raw.get("experiment", "latency_speedup_vs_mus")
    if experiment not in EXPERIMENTS:
        errors.append(f"experiment: unknown experiment {experiment!r}")
        experiment = "latency_speedup_vs_mus"

    sweep = raw.get("sweep") or {}
    if not isinstance(sweep, dict):
        errors.append("sweep: expected an object of lists")
        sweep = {}
    allowed = _SWEEP_KEYS[experiment]
    for k, values in sweep.items():
        if k not in allowed:
            errors.append(f"sweep.{k}: not swept by {experiment}")
            continue
        if not isinstance(values, list) or not values:
            errors.append(f"sweep.{k}: expected a non-empty list")
            continue
        if k in ("mus_per_cluster", "h_period"):
            if any(not isinstance(v, int) or v < 1 for v in values):
                errors.append(f"sweep.{k}: entries must be integers >= 1")
        if k == "alpha":
            if any(not 2.0 <= float(v) <= 6.0 for v in values):
                errors.append("sweep.alpha: entries must lie in [2, 6]")
    sweep = {k: list(v) for k, v in sweep.items() if k in allowed and isinstance(v, list)}

    q_params = raw.get("q_params", 1_000_000)
    if not isinstance(q_params, int) or q_params < 1:
        errors.append("q_params: must be an integer >= 1")
        q_params = 1_000_000

    n_colors_override = raw.get("n_colors_override")
    if n_colors_override is not None and (
        not isinstance(n_colors_override, int) or n_colors_override < 1
    ):
        errors.append("n_colors_override: must be an integer >= 1 or null")
        n_colors_override = None

    layout_file = raw.get("layout_file")
    if layout_file is not None and not isinstance(layout_file, str):
        errors.append("layout_file: must be a path string or null")
        layout_file = None
    if layout_file is not None and "mus_per_cluster" in allowed:
        errors.append("layout_file: incompatible with a mus_per_cluster sweep")

    output_dir = raw.get("output_dir", "out")
    if not isinstance(output_dir, str) or not output_dir:
        errors.append("output_dir: must be a non-empty string")
        output_dir = "out"

    errors.extend(layout_cfg.validate())
    errors.extend(radio.validate())
    errors.extend(latency_cfg.validate())
    errors.extend(train_cfg.validate())
    errors.extend(task.validate())

    if errors:
        raise ConfigError(errors)
    return SimConfig(
        preset=preset,
        layout=layout_cfg,
        radio=radio,
        latency=latency_cfg,
        train=train_cfg,
        task=task,
        experiment=experiment,
        sweep=sweep,
        output_dir=output_dir,
        seed=master_seed,
        q_params=q_params,
        n_colors_override=n_colors_override,
        layout_file=layout_file,
    )


def describe_presets() -> dict:
    return {
        "radio_presets": {k: dataclasses.asdict(v) for k, v in RADIO_PRESETS.items()},
        "experiments": list(EXPERIMENTS),
        "default_sweeps": DEFAULT_SWEEPS,
        "sparse_default": dataclasses.asdict(SPARSE_DEFAULT),
    }


# ---------------------------------------------------------------------------
# execution


def _derive_seed(base: int, *parts) -> int:
    key = tuple(zlib.crc32(p.encode()) if isinstance(p, str) else int(p) for p in parts)
    seq = np.random.SeedSequence(base, spawn_key=key)
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _combined(fl_bd: LatencyBreakdown, hfl_bd: LatencyBreakdown) -> LatencyBreakdown:
    return LatencyBreakdown(
        t_ul_per_mu=fl_bd.t_ul_per_mu,
        t_ul=fl_bd.t_ul,
        t_dl=fl_bd.t_dl,
        gamma_u_per_cluster=hfl_bd.gamma_u_per_cluster,
        gamma_d_per_cluster=hfl_bd.gamma_d_per_cluster,
        theta_u=hfl_bd.theta_u,
        theta_d=hfl_bd.theta_d,
        gamma_period=hfl_bd.gamma_period,
        gamma_per_iter=hfl_bd.gamma_per_iter,
    )


def _breakdown_cells(bd: LatencyBreakdown) -> dict:
    cells = {}
    for k, v in bd.to_dict().items():
        cells[k] = json.dumps(v) if isinstance(v, list) else v
    return cells

_BREAKDOWN_COLUMNS = (
    "t_ul_per_mu",
    "t_ul",
    "t_dl",
    "gamma_u_per_cluster",
    "gamma_d_per_cluster",
    "theta_u",
    "theta_d",
    "gamma_period",
    "gamma_per_iter",
)


def _write_csv(path: Path, columns, rows) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    os.replace(tmp, path)


def _write_json(path: Path, payload) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    os.replace(tmp, path)


def _layout_for(cfg: SimConfig, mus_per_cluster: int) -> NetworkLayout:
    # geometry is pinned by the layout config (seed included); sweep points
    # only change the density while point seeds drive the fading draws
    if cfg.layout_file is not None:
        return layout_from_json(Path(cfg.layout_file).read_text())
    return build_layout(replace(cfg.layout, mus_per_cluster=mus_per_cluster))


def _sparse_arm(cfg: SimConfig) -> SparsifierConfig:
    return cfg.train.sparsifier if cfg.train.sparsifier.any_sparse() else SPARSE_DEFAULT


def run_experiment(cfg: SimConfig) -> list[Path]:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    runner = {
        "latency_speedup_vs_mus": _run_vs_mus,
        "latency_speedup_vs_alpha": _run_vs_alpha,
        "sparsity_speedup": _run_sparsity,
        "training_run": _run_training,
    }[cfg.experiment]
    files, rows = runner(cfg, out)
    manifest = {
        "experiment": cfg.experiment,
        "config": cfg.resolved(),
        "config_sha256": cfg.sha256(),
        "seed": cfg.seed,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "files": [f.name for f in files],
        "rows": rows,
    }
    manifest_path = out / "manifest.json"
    _write_json(manifest_path, manifest)
    return files + [manifest_path]


def _sweep_values(cfg: SimConfig, key: str) -> list:
    return cfg.sweep.get(key, DEFAULT_SWEEPS[cfg.experiment][key])


def _run_vs_mus(cfg: SimConfig, out: Path):
    mus_values = _sweep_values(cfg, "mus_per_cluster")
    h_values = _sweep_values(cfg, "h_period")
    sha = cfg.sha256()
    rows = []
    for i, mpc in enumerate(mus_values):
        point_seed = _derive_seed(cfg.seed, "mus", i)
        layout = _layout_for(cfg, mpc)
        fading = FadingModel(seed=point_seed)
        payloads = hop_payloads(cfg.q_params, cfg.train.q_bits, cfg.train.sparsifier)
        fl_bd = fl_breakdown(layout, payloads, cfg.latency, cfg.radio, fading)
        quantities = hfl_round_quantities(
            layout, payloads, cfg.latency, cfg.radio, fading, cfg.n_colors_override
        )
        t_fl = fl_bd.t_ul + fl_bd.t_dl
        for h in h_values:
            bd = _combined(fl_bd, quantities.period(h))
            row = {
                "mus_per_cluster": mpc,
                "h_period": h,
                "n_mus": layout.n_mus,
                "n_colors": cfg.n_colors_override or layout.n_colors,
                **_breakdown_cells(bd),
                "t_fl": t_fl,
                "speedup": t_fl / bd.gamma_per_iter,
                "point_seed": point_seed,
                "config_sha256": sha,
            }
            rows.append(row)
    columns = (
        ["mus_per_cluster", "h_period", "n_mus", "n_colors"]
        + list(_BREAKDOWN_COLUMNS)
        + ["t_fl", "speedup", "point_seed", "config_sha256"]
    )
    path = out / "latency_speedup_vs_mus.csv"
    _write_csv(path, columns, rows)
    return [path], rows


def _run_vs_alpha(cfg: SimConfig, out: Path):
    alphas = _sweep_values(cfg, "alpha")
    sha = cfg.sha256()
    point_seed = _derive_seed(cfg.seed, "alpha")
    layout = _layout_for(cfg, cfg.layout.mus_per_cluster)
    h = cfg.train.h_period
    rows = []
    for a in alphas:
        radio = replace(cfg.radio, alpha=float(a))
        fading = FadingModel(seed=point_seed)
        payloads = hop_payloads(cfg.q_params, cfg.train.q_bits, cfg.train.sparsifier)
        fl_bd = fl_breakdown(layout, payloads, cfg.latency, radio, fading)
        bd = _combined(
            fl_bd,
            hfl_round_quantities(
                layout, payloads, cfg.latency, radio, fading, cfg.n_colors_override
            ).period(h),
        )
        t_fl = fl_bd.t_ul + fl_bd.t_dl
        rows.append(
            {
                "alpha": float(a),
                "h_period": h,
                "mus_per_cluster": cfg.layout.mus_per_cluster,
                "n_mus": layout.n_mus,
                "n_colors": cfg.n_colors_override or layout.n_colors,
                **_breakdown_cells(bd),
                "t_fl": t_fl,
                "speedup": t_fl / bd.gamma_per_iter,
                "point_seed": point_seed,
                "config_sha256": sha,
            }
        )
    columns = (
        ["alpha", "h_period", "mus_per_cluster", "n_mus", "n_colors"]
        + list(_BREAKDOWN_COLUMNS)
        + ["t_fl", "speedup", "point_seed", "config_sha256"]
    )
    path = out / "latency_speedup_vs_alpha.csv"
    _write_csv(path, columns, rows)
    return [path], rows


def _run_sparsity(cfg: SimConfig, out: Path):
    mus_values = _sweep_values(cfg, "mus_per_cluster")
    sha = cfg.sha256()
    h = cfg.train.h_period
    sparse_cfg = _sparse_arm(cfg)
    rows = []
    for i, mpc in enumerate(mus_values):
        point_seed = _derive_seed(cfg.seed, "sparsity", i)
        layout = _layout_for(cfg, mpc)
        arms = {}
        for arm, sp in (("dense", None), ("sparse", sparse_cfg)):
            fading = FadingModel(seed=point_seed)
            payloads = hop_payloads(cfg.q_params, cfg.train.q_bits, sp)
            fl_bd = fl_breakdown(layout, payloads, cfg.latency, cfg.radio, fading)
            qty = hfl_round_quantities(
                layout, payloads, cfg.latency, cfg.radio, fading, cfg.n_colors_override
            )
            arms[arm] = {
                "t_fl": fl_bd.t_ul + fl_bd.t_dl,
                "gamma_per_iter": qty.period(h).gamma_per_iter,
                "ul_bits": payload_bits(payloads.ul_mu),
            }
        rows.append(
            {
                "mus_per_cluster": mpc,
                "h_period": h,
                "n_mus": layout.n_mus,
                "n_colors": cfg.n_colors_override or layout.n_colors,
                "t_fl_dense": arms["dense"]["t_fl"],
                "t_fl_sparse": arms["sparse"]["t_fl"],
                "fl_ratio": arms["sparse"]["t_fl"] / arms["dense"]["t_fl"],
                "gamma_per_iter_dense": arms["dense"]["gamma_per_iter"],
                "gamma_per_iter_sparse": arms["sparse"]["gamma_per_iter"],
                "hfl_ratio": arms["sparse"]["gamma_per_iter"]
                / arms["dense"]["gamma_per_iter"],
                "ul_payload_bits_dense": arms["dense"]["ul_bits"],
                "ul_payload_bits_sparse": arms["sparse"]["ul_bits"],
                "ul_payload_ratio": arms["sparse"]["ul_bits"] / arms["dense"]["ul_bits"],
                "point_seed": point_seed,
                "config_sha256": sha,
            }
        )
    columns = [
        "mus_per_cluster",
        "h_period",
        "n_mus",
        "n_colors",
        "t_fl_dense",
        "t_fl_sparse",
        "fl_ratio",
        "gamma_per_iter_dense",
        "gamma_per_iter_sparse",
        "hfl_ratio",
        "ul_payload_bits_dense",
        "ul_payload_bits_sparse",
        "ul_payload_ratio",
        "point_seed",
        "config_sha256",
    ]
    path = out / "sparsity_speedup.csv"
    _write_csv(path, columns, rows)
    return [path], rows


def _training_dataset(cfg: SimConfig, n_shards: int) -> Dataset:
    t = cfg.task
    if t.train_csv is not None:
        return load_csv_dataset(t.train_csv, t.test_csv, n_shards=n_shards)
    return make_synthetic(
        n_samples=t.n_samples,
        n_features=t.n_features,
        n_classes=t.n_classes,
        n_test=t.n_test,
        n_shards=n_shards,
        seed=cfg.train.seed,
        class_scale=t.class_scale,
    )


def _iteration_seconds(cfg: SimConfig, layout, algorithm: str, dim: int) -> float:
    """Per-iteration latency joined to the training loop: flat algorithms pay
    the flat iteration time, hierarchical ones the per-iteration period."""
    sp = cfg.train.sparsifier if algorithm.startswith("sparse") else None
    payloads = hop_payloads(dim, cfg.train.q_bits, sp)
    fading = FadingModel(seed=_derive_seed(cfg.seed, "train-latency"))
    if algorithm in ("fl", "sparse_fl"):
        bd = fl_breakdown(layout, payloads, cfg.latency, cfg.radio, fading)
        return bd.t_ul + bd.t_dl
    qty = hfl_round_quantities(
        layout, payloads, cfg.latency, cfg.radio, fading, cfg.n_colors_override
    )
    return qty.period(cfg.train.h_period).gamma_per_iter


def _run_training(cfg: SimConfig, out: Path):
    if cfg.layout_file is not None:
        layout = layout_from_json(Path(cfg.layout_file).read_text())
    else:
        layout = build_layout(cfg.layout)
    dataset = _training_dataset(cfg, layout.n_mus)
    shapes = ModelShapes(
        cfg.task.n_features,
        cfg.task.n_classes,
        cfg.task.hidden_dim if cfg.task.model == "mlp" else None,
    )
    dim = param_count(cfg.task.model, shapes)
    files = []
    rows = []
    for algorithm in cfg.task.algorithms:
        seconds = _iteration_seconds(cfg, layout, algorithm, dim)
        history = train(
            algorithm,
            dataset,
            layout,
            cfg.train,
            model_kind=cfg.task.model,
            hidden_dim=cfg.task.hidden_dim,
            seconds_per_iteration=seconds,
        )
        path = out / f"training_{algorithm}.csv"
        tmp = path.with_name(path.name + ".tmp")
        history.write_csv(tmp)
        os.replace(tmp, path)
        files.append(path)
        for row in history.rows():
            rows.append({"algorithm": algorithm, **row})
    return files, rows
