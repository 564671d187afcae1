"""End-to-end command behavior: outputs, determinism, exit codes."""

import json

import numpy as np
import pytest

from hiforge.cli import main
from hiforge.io import load_checkpoint, load_rtf_csv, save_checkpoint
from hiforge.model import init_params
from hiforge.synth import default_pair_specs

TINY_MODEL = {
    "patch_len": 16,
    "patch_stride": 16,
    "embed_dim": 8,
    "attn_dim": 8,
    "n_heads": 2,
    "kernel_sizes": [3, 5, 7],
    "ffn_ratio": 2,
    "n_encoder_blocks": 1,
    "n_decoder_blocks": 1,
    "dropout": 0.0,
}


def pair_spec_dict(seed=3):
    source, target = default_pair_specs(seed=seed)
    return {"source": source.to_dict(), "target": target.to_dict()}


def train_config(out_dir, epochs=3, seed=0):
    return {
        "seed": seed,
        "synth": pair_spec_dict(),
        "omega": 32,
        "penalty": {"penalty": 10.0, "m_max": 10},
        "model": dict(TINY_MODEL),
        "train": {"epochs": epochs, "batch_size": 8},
        "metrics": {"ma_window": 5, "xi": 2.0, "horizon": 10},
        "output_dir": str(out_dir),
    }


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec_file = root / "pair.json"
    spec_file.write_text(json.dumps(pair_spec_dict()))
    assert main(["synth", "--spec", str(spec_file), "--out", str(root / "data")]) == 0
    config = train_config(root / "runs")
    config_file = root / "config.json"
    config_file.write_text(json.dumps(config))
    assert main(["train", "--config", str(config_file)]) == 0
    run_dirs = list((root / "runs").iterdir())
    assert len(run_dirs) == 1
    return {
        "root": root,
        "source_csv": root / "data" / "source.csv",
        "target_csv": root / "data" / "target.csv",
        "run": run_dirs[0],
        "config_file": config_file,
        "config": config,
    }


# -- parser basics -------------------------------------------------------


def test_version_flag(capsys):
    assert main(["--version"]) == 0
    assert "hiforge" in capsys.readouterr().out


def test_no_command_is_usage_error(capsys):
    assert main([]) == 1


def test_unknown_flag_is_usage_error(capsys):
    assert main(["segment", "--nope"]) == 1


def test_missing_input_file_is_usage_error(tmp_path, capsys):
    code = main(["segment", "--input", str(tmp_path / "absent.csv"), "--omega", "8"])
    assert code == 1
    assert "error" in capsys.readouterr().err


# -- synth ---------------------------------------------------------------


def test_synth_outputs_and_determinism(workdir, tmp_path, capsys):
    spec_file = workdir["root"] / "pair.json"
    out = tmp_path / "again"
    assert main(["synth", "--spec", str(spec_file), "--out", str(out)]) == 0
    for name in ("source.csv", "source.json", "target.csv", "truth.json"):
        assert (out / name).exists()
    assert (out / "source.csv").read_bytes() == workdir["source_csv"].read_bytes()
    truth = json.loads((out / "truth.json").read_text())
    assert truth["source"]["n_stages"] == 3
    assert truth["source"]["snapshot_boundaries"] == [20, 40, 60]
    assert truth["source"]["labels"][-1] == 1.0


def test_synth_single_spec(tmp_path):
    spec = pair_spec_dict()["source"]
    spec_file = tmp_path / "one.json"
    spec_file.write_text(json.dumps(spec))
    out = tmp_path / "one"
    assert main(["synth", "--spec", str(spec_file), "--out", str(out)]) == 0
    series = load_rtf_csv(out / "series.csv")
    assert series.snapshots.shape == (60, 2, 64)


def test_synth_bad_spec(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nothing": True}))
    assert main(["synth", "--spec", str(bad), "--out", str(tmp_path / "x")]) == 1


# -- segment -------------------------------------------------------------


def test_segment_stdout_record(workdir, capsys):
    code = main(["segment", "--input", str(workdir["source_csv"]), "--omega", "32"])
    assert code == 0
    record = json.loads(capsys.readouterr().out)
    assert record["n_stages"] == 3
    assert record["boundaries"] == [0, 40, 80, 120]
    assert record["algorithm"] == "kcp"
    assert record["meta"]["config_hash"]


def test_segment_baseline_to_file(workdir, tmp_path, capsys):
    out = tmp_path / "seg.json"
    code = main(
        [
            "segment",
            "--input",
            str(workdir["source_csv"]),
            "--omega",
            "32",
            "--algo",
            "dynp",
            "--stages",
            "3",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    record = json.loads(out.read_text())
    assert record["algorithm"] == "dynp"
    assert record["n_stages"] == 3


def test_segment_corrupt_csv_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,ch0\n1,0.0\n2,oops\n")
    (tmp_path / "bad.json").write_text(
        json.dumps(
            {
                "domain": "S",
                "sampling_interval_seconds": 1.0,
                "snapshot_len": 1,
                "failure_index": 2,
            }
        )
    )
    assert main(["segment", "--input", str(bad), "--omega", "1"]) == 2


# -- sample-plan ---------------------------------------------------------


def test_sample_plan_synchronized(workdir, capsys):
    code = main(
        [
            "sample-plan",
            "--source",
            str(workdir["source_csv"]),
            "--target",
            str(workdir["target_csv"]),
            "--omega",
            "32",
            "--seed",
            "0",
        ]
    )
    assert code == 0
    record = json.loads(capsys.readouterr().out)
    assert record["mode"] == "synchronized"
    assert record["n_stages"] == 3
    assert len(record["batches"]) > 0
    stages = {b["stage"] for b in record["batches"]}
    assert stages == {0, 1, 2}


def test_sample_plan_random_mode(workdir, capsys):
    code = main(
        [
            "sample-plan",
            "--source",
            str(workdir["source_csv"]),
            "--target",
            str(workdir["target_csv"]),
            "--omega",
            "32",
            "--mode",
            "random",
            "--seed",
            "0",
        ]
    )
    assert code == 0
    record = json.loads(capsys.readouterr().out)
    assert {b["stage"] for b in record["batches"]} == {0}


# -- train ---------------------------------------------------------------


def test_train_outputs(workdir):
    run = workdir["run"]
    for name in (
        "checkpoint.ckpt",
        "diagnostics.csv",
        "timing.csv",
        "config.json",
        "segmentation_source.json",
        "segmentation_target.json",
        "source.csv",
        "target.csv",
    ):
        assert (run / name).exists(), name
    seg = json.loads((run / "segmentation_source.json").read_text())
    assert seg["n_stages"] == 3
    diag = (run / "diagnostics.csv").read_text()
    data_lines = [l for l in diag.strip().splitlines() if not l.startswith("#")]
    assert len(data_lines) == 1 + 3
    assert data_lines[0].startswith("epoch,scf,mmd,rec,")


def test_train_rerun_byte_identical(workdir, tmp_path):
    config = train_config(tmp_path / "other")
    config_file = tmp_path / "config.json"
    config_file.write_text(json.dumps(config))
    assert main(["train", "--config", str(config_file)]) == 0
    runs = list((tmp_path / "other").iterdir())
    assert len(runs) == 1
    assert runs[0].name == workdir["run"].name
    for name in ("diagnostics.csv", "checkpoint.ckpt"):
        assert (runs[0] / name).read_bytes() == (workdir["run"] / name).read_bytes()


def test_train_missing_seed(tmp_path, capsys):
    config = train_config(tmp_path / "x")
    del config["seed"]
    config_file = tmp_path / "noseed.json"
    config_file.write_text(json.dumps(config))
    assert main(["train", "--config", str(config_file)]) == 1
    assert "seed" in capsys.readouterr().err


def test_train_unknown_model_key(tmp_path, capsys):
    config = train_config(tmp_path / "x")
    config["model"]["layers"] = 3
    config_file = tmp_path / "badkey.json"
    config_file.write_text(json.dumps(config))
    assert main(["train", "--config", str(config_file)]) == 1
    assert "layers" in capsys.readouterr().err


# -- eval-hi -------------------------------------------------------------


def test_eval_hi_stdout(workdir, capsys):
    code = main(
        [
            "eval-hi",
            "--checkpoint",
            str(workdir["run"] / "checkpoint.ckpt"),
            "--input",
            str(workdir["target_csv"]),
        ]
    )
    assert code == 0
    record = json.loads(capsys.readouterr().out)
    for key in ("mon", "cor", "rob", "ci"):
        assert 0.0 <= record[key] <= 1.0
    assert record["ma_window"] == 5


def test_eval_hi_writes_files(workdir, tmp_path):
    out = tmp_path / "eval"
    code = main(
        [
            "eval-hi",
            "--checkpoint",
            str(workdir["run"] / "checkpoint.ckpt"),
            "--input",
            str(workdir["target_csv"]),
            "--out",
            str(out),
        ]
    )
    assert code == 0
    hi_lines = (out / "hi.csv").read_text().strip().splitlines()
    target = load_rtf_csv(workdir["target_csv"])
    assert sum(1 for l in hi_lines if not l.startswith("#")) == target.n_snapshots + 1
    report = json.loads((out / "report.json").read_text())
    assert abs(
        report["ci"]
        - (0.4 * report["mon"] + 0.3 * report["cor"] + 0.3 * report["rob"])
    ) <= 1e-12


# -- pi-control ----------------------------------------------------------


def test_pi_control_from_diagnostics(workdir, capsys):
    code = main(
        [
            "pi-control",
            "--losses",
            str(workdir["run"] / "diagnostics.csv"),
            "--horizon",
            "3",
        ]
    )
    assert code == 0
    assert float(capsys.readouterr().out.strip()) >= 0.0


def test_pi_control_constant_curve(tmp_path, capsys):
    path = tmp_path / "flat.csv"
    path.write_text("epoch,loss\n" + "\n".join(f"{i},2.0" for i in range(1, 13)) + "\n")
    assert main(["pi-control", "--losses", str(path)]) == 0
    assert float(capsys.readouterr().out.strip()) == 0.0


def test_pi_control_horizon_too_long(workdir, capsys):
    code = main(
        [
            "pi-control",
            "--losses",
            str(workdir["run"] / "diagnostics.csv"),
            "--horizon",
            "10",
        ]
    )
    assert code == 2


# -- erf -----------------------------------------------------------------


def test_erf_stdout_and_file(workdir, tmp_path, capsys):
    ckpt = str(workdir["run"] / "checkpoint.ckpt")
    code = main(["erf", "--checkpoint", ckpt, "--input", str(workdir["target_csv"])])
    assert code == 0
    out_text = capsys.readouterr().out
    assert out_text.strip().splitlines()[-1].startswith("breadth=")
    out_file = tmp_path / "erf.csv"
    code = main(
        [
            "erf",
            "--checkpoint",
            ckpt,
            "--input",
            str(workdir["target_csv"]),
            "--out",
            str(out_file),
        ]
    )
    assert code == 0
    text = out_file.read_text()
    assert "# breadth=" in text
    rows = [l for l in text.strip().splitlines() if not l.startswith("#")]
    assert rows[0] == "t,erf"
    assert len(rows) == 64 + 1
    assert all(float(r.split(",")[1]) >= 0.0 for r in rows[1:])


# -- features ------------------------------------------------------------


def test_features_export(workdir, capsys):
    code = main(
        [
            "features",
            "--checkpoint",
            str(workdir["run"] / "checkpoint.ckpt"),
            "--input",
            str(workdir["target_csv"]),
        ]
    )
    assert code == 0
    lines = [
        l for l in capsys.readouterr().out.strip().splitlines() if not l.startswith("#")
    ]
    header = lines[0].split(",")
    assert header[:2] == ["domain", "snapshot"]
    assert len(header) == 2 + 2 * 8
    target = load_rtf_csv(workdir["target_csv"])
    assert len(lines) == 1 + 2 * target.n_snapshots
    assert {l.split(",")[0] for l in lines[1:]} == {"S", "T"}


# -- numerical failure path ----------------------------------------------


def test_poisoned_checkpoint_is_numerical_error(workdir, tmp_path, capsys):
    params, cfg, extra = load_checkpoint(workdir["run"] / "checkpoint.ckpt")
    params.t("embed.w").data[0, 0] = np.inf
    bad = tmp_path / "poisoned.ckpt"
    save_checkpoint(bad, params, cfg, extra=extra)
    code = main(
        ["eval-hi", "--checkpoint", str(bad), "--input", str(workdir["target_csv"])]
    )
    assert code == 3
    assert "numerical" in capsys.readouterr().err
