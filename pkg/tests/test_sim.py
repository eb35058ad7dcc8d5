"""Config validation, experiment execution, report determinism, and the CLI
exit-code contract."""

import csv
import json
from pathlib import Path

import pytest

from hfl_sim.cli import main
from hfl_sim.learning import MetricHistory
from hfl_sim.sim import (
    EXPERIMENTS,
    SPARSE_DEFAULT,
    ConfigError,
    describe_presets,
    run_experiment,
    validate_config,
)


def test_default_config():
    cfg = validate_config({})
    assert cfg.preset == "table2"
    assert cfg.radio.m_subcarriers == 600
    assert cfg.radio.alpha == 2.8
    assert cfg.radio.ber == 1e-3
    assert cfg.layout.n_clusters == 7 and cfg.layout.mus_per_cluster == 4
    assert cfg.layout.reuse_distance_d_th == 0.0
    assert cfg.q_params == 1_000_000
    assert cfg.train.sparsifier == SPARSE_DEFAULT
    assert cfg.experiment == "latency_speedup_vs_mus"
    assert cfg.seed == 0


def test_text_preset_and_json_string_input():
    cfg = validate_config('{"preset": "text"}')
    assert cfg.radio.m_subcarriers == 300
    with pytest.raises(ConfigError, match="not valid JSON"):
        validate_config("{nope")
    with pytest.raises(ConfigError, match="root must be"):
        validate_config("[1, 2]")


def test_invalid_values_rejected():
    with pytest.raises(ConfigError, match="ber"):
        validate_config({"radio": {"ber": 0.0}})
    with pytest.raises(ConfigError, match="preset"):
        validate_config({"preset": "table9"})
    with pytest.raises(ConfigError, match="seed"):
        validate_config({"seed": -1})


def test_unknown_fields_are_named():
    for raw, fragment in [
        ({"fo0": 1}, "fo0: unknown field"),
        ({"radio": {"bandwidth": 1}}, "radio.bandwidth: unknown field"),
        ({"train": {"sparsifier": {"phi": 1}}}, "train.sparsifier.phi: unknown field"),
        ({"task": {"dataset": "mnist"}}, "task.dataset: unknown field"),
    ]:
        with pytest.raises(ConfigError) as err:
            validate_config(raw)
        assert any(fragment in e for e in err.value.errors)


def test_all_violations_reported_together():
    raw = {
        "seed": -3,
        "preset": "bogus",
        "layout": {"n_clusters": 9},
        "radio": {"alpha": 9.0},
        "train": {"batch_size": 0},
    }
    with pytest.raises(ConfigError) as err:
        validate_config(raw)
    text = "\n".join(err.value.errors)
    assert len(err.value.errors) >= 5
    for needle in ("seed", "preset", "n_clusters", "alpha", "batch_size"):
        assert needle in text


def test_master_seed_propagates():
    cfg = validate_config({"seed": 5})
    assert cfg.layout.seed == 5 and cfg.train.seed == 5
    cfg = validate_config({"seed": 5, "layout": {"seed": 3}})
    assert cfg.layout.seed == 3 and cfg.train.seed == 5
    # the CLI-level seed wins over the file
    cfg = validate_config({"seed": 5}, seed=8)
    assert cfg.seed == 8 and cfg.layout.seed == 8 and cfg.train.seed == 8


def test_overrides():
    cfg = validate_config(
        {},
        overrides=[
            "layout.mus_per_cluster=8",
            "radio.alpha=3.0",
            "train.sparsifier.phi_ul_mu=0.5",
            "preset=text",
            "experiment=sparsity_speedup",
        ],
    )
    assert cfg.layout.mus_per_cluster == 8
    assert cfg.radio.alpha == 3.0
    assert cfg.train.sparsifier.phi_ul_mu == 0.5
    assert cfg.preset == "text" and cfg.radio.m_subcarriers == 300
    assert cfg.experiment == "sparsity_speedup"
    with pytest.raises(ConfigError, match="KEY=VALUE"):
        validate_config({}, overrides=["radio.alpha"])


def test_sweep_validation():
    with pytest.raises(ConfigError, match="not swept"):
        validate_config({"sweep": {"alpha": [2.0]}})
    with pytest.raises(ConfigError, match="non-empty"):
        validate_config({"sweep": {"mus_per_cluster": []}})
    with pytest.raises(ConfigError, match="integers"):
        validate_config({"sweep": {"mus_per_cluster": [0]}})
    with pytest.raises(ConfigError, match="alpha"):
        validate_config(
            {"experiment": "latency_speedup_vs_alpha", "sweep": {"alpha": [7.0]}}
        )
    cfg = validate_config({"sweep": {"mus_per_cluster": [2, 3], "h_period": [2]}})
    assert cfg.sweep == {"mus_per_cluster": [2, 3], "h_period": [2]}


def test_layout_file_incompatible_with_mus_sweep(tmp_path):
    with pytest.raises(ConfigError, match="layout_file"):
        validate_config({"layout_file": str(tmp_path / "l.json")})
    cfg = validate_config(
        {"experiment": "latency_speedup_vs_alpha", "layout_file": "l.json"}
    )
    assert cfg.layout_file == "l.json"


def test_sha256_ignores_output_dir():
    a = validate_config({"seed": 1}, out_dir="x")
    b = validate_config({"seed": 1}, out_dir="y")
    c = validate_config({"seed": 2}, out_dir="x")
    assert a.sha256() == b.sha256()
    assert a.sha256() != c.sha256()


def test_describe_presets():
    info = describe_presets()
    assert set(info["radio_presets"]) == {"table2", "text"}
    assert info["experiments"] == list(EXPERIMENTS)
    assert info["sparse_default"]["phi_ul_mu"] == 0.99


def tiny_latency_raw(**extra):
    raw = {
        "q_params": 2000,
        "latency": {"mc_replicas": 5},
        "sweep": {"mus_per_cluster": [2, 3], "h_period": [2, 3]},
    }
    raw.update(extra)
    return raw


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_vs_mus_report(tmp_path):
    cfg = validate_config(tiny_latency_raw(), out_dir=str(tmp_path / "a"), seed=1)
    files = run_experiment(cfg)
    csv_path, manifest_path = files
    assert csv_path.name == "latency_speedup_vs_mus.csv"
    rows = read_csv(csv_path)
    assert len(rows) == 4
    assert list(rows[0]) == [
        "mus_per_cluster", "h_period", "n_mus", "n_colors",
        "t_ul_per_mu", "t_ul", "t_dl",
        "gamma_u_per_cluster", "gamma_d_per_cluster",
        "theta_u", "theta_d", "gamma_period", "gamma_per_iter",
        "t_fl", "speedup", "point_seed", "config_sha256",
    ]
    for row in rows:
        assert int(row["n_mus"]) == 7 * int(row["mus_per_cluster"])
        assert int(row["n_colors"]) == 1
        assert float(row["speedup"]) > 0.0
        assert float(row["gamma_per_iter"]) == pytest.approx(
            float(row["gamma_period"]) / int(row["h_period"])
        )
        assert row["config_sha256"] == cfg.sha256()
        assert len(json.loads(row["gamma_u_per_cluster"])) == 7
    manifest = json.loads(manifest_path.read_text())
    assert manifest["experiment"] == "latency_speedup_vs_mus"
    assert manifest["config_sha256"] == cfg.sha256()
    assert len(manifest["rows"]) == 4
    assert manifest["files"] == ["latency_speedup_vs_mus.csv"]


def test_reports_are_byte_identical_across_reruns(tmp_path):
    a = validate_config(tiny_latency_raw(), out_dir=str(tmp_path / "a"), seed=3)
    b = validate_config(tiny_latency_raw(), out_dir=str(tmp_path / "b"), seed=3)
    fa = run_experiment(a)
    fb = run_experiment(b)
    assert fa[0].read_bytes() == fb[0].read_bytes()
    ma = json.loads(fa[1].read_text())
    mb = json.loads(fb[1].read_text())
    assert ma["config_sha256"] == mb["config_sha256"]
    assert ma["rows"] == mb["rows"]


def test_vs_alpha_uses_one_layout(tmp_path):
    raw = {
        "experiment": "latency_speedup_vs_alpha",
        "q_params": 2000,
        "latency": {"mc_replicas": 5},
        "sweep": {"alpha": [2.0, 3.0]},
    }
    cfg = validate_config(raw, out_dir=str(tmp_path), seed=2)
    rows = read_csv(run_experiment(cfg)[0])
    assert len(rows) == 2
    assert [float(r["alpha"]) for r in rows] == [2.0, 3.0]
    assert rows[0]["point_seed"] == rows[1]["point_seed"]
    assert rows[0]["n_mus"] == rows[1]["n_mus"]


def test_sparsity_contrast_survives_dense_config(tmp_path):
    # an explicit all-zero sparsifier selects the dense algorithms, but the
    # contrast experiment still compares against the default sparse arm
    raw = {
        "experiment": "sparsity_speedup",
        "q_params": 2000,
        "latency": {"mc_replicas": 5},
        "sweep": {"mus_per_cluster": [2]},
        "train": {
            "sparsifier": {
                "phi_ul_mu": 0.0, "phi_dl_sbs": 0.0,
                "phi_ul_sbs": 0.0, "phi_dl_mbs": 0.0,
            }
        },
    }
    cfg = validate_config(raw, out_dir=str(tmp_path), seed=1)
    assert not cfg.train.sparsifier.any_sparse()
    rows = read_csv(run_experiment(cfg)[0])
    assert len(rows) == 1
    row = rows[0]
    assert int(row["ul_payload_bits_dense"]) == 2000 * 32
    assert int(row["ul_payload_bits_sparse"]) < int(row["ul_payload_bits_dense"])
    assert 0.0 < float(row["ul_payload_ratio"]) < 1.0


def training_raw(tmp_path, algorithms):
    return {
        "experiment": "training_run",
        "layout": {"mus_per_cluster": 2},
        "task": {
            "n_samples": 84,
            "n_features": 4,
            "n_classes": 3,
            "n_test": 12,
            "algorithms": algorithms,
        },
        "train": {"batch_size": 4, "epochs": 2, "h_period": 2},
        "latency": {"mc_replicas": 5},
        "output_dir": str(tmp_path / "train"),
    }


def test_training_run_reports(tmp_path):
    cfg = validate_config(training_raw(tmp_path, ["fl", "hfl"]), seed=4)
    files = run_experiment(cfg)
    names = [f.name for f in files]
    assert names == ["training_fl.csv", "training_hfl.csv", "manifest.json"]
    for path in files[:2]:
        rows = read_csv(path)
        assert list(rows[0]) == list(MetricHistory.CSV_COLUMNS)
        assert len(rows) == 2
        seconds = [float(r["sim_seconds"]) for r in rows]
        assert 0.0 < seconds[0] < seconds[1]
    manifest = json.loads(files[2].read_text())
    assert {r["algorithm"] for r in manifest["rows"]} == {"fl", "hfl"}


def run_cli(args):
    return main(args)


def test_cli_presets(capsys):
    assert run_cli(["presets"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert "radio_presets" in info and "default_sweeps" in info


def test_cli_run_success(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(tiny_latency_raw()))
    rc = run_cli(
        ["run", "--config", str(cfg_path), "--out", str(tmp_path / "out"), "--seed", "1"]
    )
    out = capsys.readouterr().out.strip().splitlines()
    assert rc == 0
    assert [Path(p).name for p in out] == ["latency_speedup_vs_mus.csv", "manifest.json"]
    assert all(Path(p).is_file() for p in out)


def test_cli_set_override_applies(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(tiny_latency_raw()))
    rc = run_cli(
        [
            "run", "--config", str(cfg_path),
            "--set", 'sweep.mus_per_cluster=[2]',
            "--set", 'sweep.h_period=[4]',
            "--out", str(tmp_path / "out"),
        ]
    )
    assert rc == 0
    rows = read_csv(tmp_path / "out" / "latency_speedup_vs_mus.csv")
    assert len(rows) == 1 and rows[0]["h_period"] == "4"


def test_cli_config_error(tmp_path, capsys):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"radio": {"ber": 0.0}, "seed": -1}))
    rc = run_cli(["run", "--config", str(cfg_path)])
    err = capsys.readouterr().err
    assert rc == 2
    assert err.count("config error:") >= 2


def test_cli_missing_config(tmp_path, capsys):
    rc = run_cli(["run", "--config", str(tmp_path / "nope.json")])
    assert rc == 2
    assert "cannot read" in capsys.readouterr().err


def test_cli_runtime_failure(tmp_path, capsys):
    broken = tmp_path / "layout.json"
    broken.write_text("{}")
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(
        json.dumps(
            {
                "experiment": "latency_speedup_vs_alpha",
                "layout_file": str(broken),
                "q_params": 2000,
                "latency": {"mc_replicas": 5},
            }
        )
    )
    rc = run_cli(["run", "--config", str(cfg_path), "--out", str(tmp_path / "out")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")
