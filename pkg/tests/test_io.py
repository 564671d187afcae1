"""Round trips, parse errors with line numbers, and checkpoint container checks."""

import json

import numpy as np
import pytest

from hiforge.errors import DataError
from hiforge.io import (
    config_hash,
    fmt,
    load_checkpoint,
    load_losses_csv,
    load_rtf_csv,
    save_checkpoint,
    save_hi_csv,
    save_json_record,
    save_loss_csv,
    save_rtf_csv,
    save_timing_csv,
    segmentation_payload,
    sidecar_path,
)
from hiforge.model import ModelConfig, init_params
from hiforge.segmentation import StageSegmentation
from hiforge.series import RtFSeries
from hiforge.training import RunDiagnostics


def sample_series(seed=0, t=4, c=2, length=8):
    rng = np.random.default_rng(seed)
    return RtFSeries(
        snapshots=rng.normal(size=(t, c, length)),
        domain="S",
        sampling_interval_seconds=2.5,
        failure_index=t,
    )


def write_csv(tmp_path, text, sidecar=None, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    if sidecar is not None:
        sidecar_path(path).write_text(json.dumps(sidecar))
    return path


DEFAULT_SIDECAR = {
    "domain": "S",
    "sampling_interval_seconds": 1.0,
    "snapshot_len": 4,
    "failure_index": 2,
}


# -- signal CSV ----------------------------------------------------------


def test_rtf_round_trip_value_identical(tmp_path):
    series = sample_series()
    path = tmp_path / "series.csv"
    save_rtf_csv(path, series, meta={"config_hash": "abc", "seed": 0})
    loaded = load_rtf_csv(path)
    np.testing.assert_array_equal(loaded.snapshots, series.snapshots)
    assert loaded.domain == "S"
    assert loaded.sampling_interval_seconds == 2.5
    assert loaded.failure_index == 4


def test_rtf_write_deterministic(tmp_path):
    series = sample_series(seed=1)
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    save_rtf_csv(a, series, meta={"seed": 1})
    save_rtf_csv(b, series, meta={"seed": 1})
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().startswith("# seed=1\n")


def test_rtf_two_channel_grouping(tmp_path):
    rows = ["t,ch0,ch1"]
    for t in range(8):
        rows.append(f"{t + 1},{float(t)},{float(10 + t)}")
    path = write_csv(tmp_path, "\n".join(rows) + "\n", DEFAULT_SIDECAR)
    series = load_rtf_csv(path)
    assert series.snapshots.shape == (2, 2, 4)
    np.testing.assert_array_equal(series.snapshots[0, 0], [0.0, 1.0, 2.0, 3.0])
    np.testing.assert_array_equal(series.snapshots[1, 1], [14.0, 15.0, 16.0, 17.0])


def test_rtf_partial_snapshot_rejected(tmp_path):
    rows = ["t,ch0"] + [f"{t + 1},{float(t)}" for t in range(7)]
    path = write_csv(tmp_path, "\n".join(rows) + "\n", DEFAULT_SIDECAR)
    with pytest.raises(DataError, match="partial snapshot"):
        load_rtf_csv(path)


def test_rtf_ragged_row_names_line(tmp_path):
    text = "t,ch0,ch1\n1,0.0,0.0\n2,1.0\n"
    path = write_csv(tmp_path, text, DEFAULT_SIDECAR)
    with pytest.raises(DataError, match="line 3"):
        load_rtf_csv(path)


def test_rtf_non_numeric_names_line(tmp_path):
    text = "t,ch0\n1,0.0\n2,oops\n"
    path = write_csv(tmp_path, text, DEFAULT_SIDECAR)
    with pytest.raises(DataError, match="line 3"):
        load_rtf_csv(path)


def test_rtf_missing_sidecar(tmp_path):
    path = write_csv(tmp_path, "t,ch0\n1,0.0\n")
    with pytest.raises(DataError, match="sidecar"):
        load_rtf_csv(path)


def test_rtf_bad_header(tmp_path):
    path = write_csv(tmp_path, "time,c0\n1,0.0\n", DEFAULT_SIDECAR)
    with pytest.raises(DataError, match="header"):
        load_rtf_csv(path)


def test_rtf_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_rtf_csv(tmp_path / "absent.csv")


def test_sidecar_path_shapes():
    assert str(sidecar_path("x/series.csv")).endswith("series.json")
    assert str(sidecar_path("x/blob.bin")).endswith("blob.bin.json")


# -- loss curves ---------------------------------------------------------


def sample_diag():
    diag = RunDiagnostics()
    diag.append(1, (0.5, 0.2, 1.0), (1.0, 1.0, 1.0), 0.01)
    diag.append(2, (0.4, 0.1, 0.9), (1.1, 0.9, 1.0), 0.02)
    return diag


def test_loss_csv_round_trip(tmp_path):
    diag = sample_diag()
    path = tmp_path / "diagnostics.csv"
    save_loss_csv(path, diag, meta={"config_hash": "ff", "seed": 7})
    losses = load_losses_csv(path)
    np.testing.assert_allclose(losses, diag.total)
    text = path.read_text()
    assert "# config_hash=ff" in text
    assert "wall" not in text


def test_timing_csv_separate(tmp_path):
    diag = sample_diag()
    path = tmp_path / "timing.csv"
    save_timing_csv(path, diag)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,wall_seconds"
    assert len(lines) == 3


def test_losses_two_column_fallback(tmp_path):
    path = tmp_path / "curve.csv"
    path.write_text("epoch,loss\n1,3.0\n2,1.5\n")
    np.testing.assert_allclose(load_losses_csv(path), [3.0, 1.5])


def test_losses_bad_header(tmp_path):
    path = tmp_path / "curve.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(DataError, match="total"):
        load_losses_csv(path)


def test_hi_csv_format(tmp_path):
    path = tmp_path / "hi.csv"
    save_hi_csv(path, [0.25, 0.5], meta={"seed": 1})
    assert path.read_text() == "# seed=1\nt,hi\n1,0.25\n2,0.5\n"


# -- JSON records --------------------------------------------------------


def test_json_record_sorted_and_meta(tmp_path):
    path = tmp_path / "record.json"
    save_json_record(path, {"b": 2, "a": 1}, meta={"seed": 3})
    data = json.loads(path.read_text())
    assert data["meta"]["seed"] == 3
    assert data["a"] == 1 and data["b"] == 2
    save_json_record(tmp_path / "again.json", {"b": 2, "a": 1}, meta={"seed": 3})
    assert path.read_bytes() == (tmp_path / "again.json").read_bytes()


def test_segmentation_payload_fields():
    seg = StageSegmentation(
        boundaries=[0, 3, 7], omega=4, n_windows=7, algorithm="kcp", objective=1.5
    )
    payload = segmentation_payload(seg)
    assert payload["boundaries"] == [0, 3, 7]
    assert payload["n_stages"] == 2
    assert payload["objective"] == 1.5
    assert payload["algorithm"] == "kcp"


# -- config hashing ------------------------------------------------------


def test_config_hash_ignores_output_dir():
    base = {"seed": 1, "omega": 8, "output_dir": "runs/a"}
    moved = {"seed": 1, "omega": 8, "output_dir": "elsewhere"}
    assert config_hash(base) == config_hash(moved)
    assert config_hash(base) != config_hash({**base, "seed": 2})
    assert len(config_hash(base)) == 64


def test_fmt_round_trip():
    for v in (0.1, 1.0, -2.5e-8, 3.141592653589793):
        assert float(fmt(v)) == v


# -- checkpoints ---------------------------------------------------------


def tiny_cfg():
    return ModelConfig(
        n_channels=2,
        snapshot_len=32,
        patch_len=8,
        patch_stride=8,
        embed_dim=8,
        attn_dim=8,
        n_heads=2,
        kernel_sizes=(3, 5, 7),
        ffn_ratio=2,
        n_encoder_blocks=1,
        n_decoder_blocks=1,
        dropout=0.0,
    )


def test_checkpoint_round_trip(tmp_path):
    cfg = tiny_cfg()
    params = init_params(cfg, seed=5)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, cfg, extra={"seed": 5, "omega": 64})
    loaded, loaded_cfg, extra = load_checkpoint(path)
    assert loaded_cfg == cfg
    assert extra == {"seed": 5, "omega": 64}
    assert list(loaded.params) == list(params.params)
    for name, t in params.params.items():
        assert loaded.t(name).data.tobytes() == t.data.tobytes()
    for name, b in params.buffers.items():
        assert loaded.buf(name).tobytes() == b.tobytes()


def test_checkpoint_write_deterministic(tmp_path):
    cfg = tiny_cfg()
    params = init_params(cfg, seed=5)
    a = tmp_path / "a.ckpt"
    b = tmp_path / "b.ckpt"
    save_checkpoint(a, params, cfg, extra={"seed": 5})
    save_checkpoint(b, params, cfg, extra={"seed": 5})
    assert a.read_bytes() == b.read_bytes()


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(DataError, match="not a checkpoint"):
        load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    cfg = tiny_cfg()
    params = init_params(cfg, seed=5)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, cfg)
    blob = path.read_bytes()
    clipped = tmp_path / "clipped.ckpt"
    clipped.write_bytes(blob[: len(blob) - 16])
    with pytest.raises(DataError, match="payload|truncated"):
        load_checkpoint(clipped)


def test_checkpoint_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "absent.ckpt")
