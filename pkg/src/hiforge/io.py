"""File formats: signal CSVs with JSON sidecars, loss curves, JSON records,
and a small binary checkpoint container.

Every emitted file is byte-deterministic for a given config and seed: floats
are serialized with ``repr``, JSON keys are sorted, and all writes go through
a temp-file-then-rename step so readers never observe partial output. Wall
clock timings live in their own file for the same reason.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError
from .model import ModelConfig, ParamStore
from .series import RtFSeries

CHECKPOINT_MAGIC = b"HIFC"
CHECKPOINT_FORMAT = 1
SIDECAR_KEYS = ("domain", "sampling_interval_seconds", "snapshot_len", "failure_index")
LOSS_COLUMNS = (
    "epoch",
    "scf",
    "mmd",
    "rec",
    "lambda_scf",
    "lambda_mmd",
    "lambda_rec",
    "total",
)


def fmt(x):
    """Shortest round-trip decimal form; identical bytes for identical values."""
    return repr(float(x))


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config):
    """Digest of the canonicalized config; the output directory is excluded
    so moving results does not change their identity."""
    trimmed = {k: v for k, v in config.items() if k != "output_dir"}
    return hashlib.sha256(canonical_json(trimmed).encode("utf-8")).hexdigest()


def atomic_write_bytes(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def meta_header_lines(meta):
    return [f"# {k}={meta[k]}" for k in sorted(meta)] if meta else []


def sidecar_path(path):
    path = Path(path)
    if path.suffix == ".csv":
        return path.with_suffix(".json")
    return Path(str(path) + ".json")


# -- signal CSV ----------------------------------------------------------


def save_rtf_csv(path, series, meta=None):
    """Write the scalar stream row-wise plus the metadata sidecar."""
    streams = series.channel_streams()
    c = series.n_channels
    lines = meta_header_lines(meta)
    lines.append("t," + ",".join(f"ch{i}" for i in range(c)))
    for t in range(streams.shape[1]):
        lines.append(f"{t + 1}," + ",".join(fmt(v) for v in streams[:, t]))
    atomic_write_text(path, "\n".join(lines) + "\n")
    sidecar = {
        "domain": series.domain,
        "sampling_interval_seconds": series.sampling_interval_seconds,
        "snapshot_len": series.snapshot_len,
        "failure_index": series.failure_index,
    }
    atomic_write_text(
        sidecar_path(path), json.dumps(sidecar, sort_keys=True, indent=2) + "\n"
    )


def load_rtf_csv(path):
    """Parse a signal CSV and its sidecar back into a series.

    Parse failures carry the 1-based line number; a trailing snapshot that
    does not fill ``snapshot_len`` rows is rejected.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    side = sidecar_path(path)
    if not side.exists():
        raise DataError(f"missing metadata sidecar: {side}")
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as err:
        raise DataError(f"{side}: invalid JSON ({err})") from err
    missing = [k for k in SIDECAR_KEYS if k not in meta]
    if missing:
        raise DataError(f"{side}: missing keys {missing}")
    header = None
    n_fields = None
    columns = []
    for ln, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if header is None:
            expect = ["t"] + [f"ch{i}" for i in range(len(fields) - 1)]
            if fields != expect:
                raise DataError(f"line {ln}: bad header {fields}, expected {expect}")
            header = fields
            n_fields = len(fields)
            continue
        if len(fields) != n_fields:
            raise DataError(
                f"line {ln}: expected {n_fields} fields, got {len(fields)}"
            )
        try:
            columns.append([float(v) for v in fields[1:]])
        except ValueError as err:
            raise DataError(f"line {ln}: non-numeric value ({err})") from err
    if header is None:
        raise DataError(f"{path}: no header row")
    length = int(meta["snapshot_len"])
    stream = np.asarray(columns, dtype=np.float64).T
    if stream.size == 0:
        raise DataError(f"{path}: no data rows")
    total = stream.shape[1]
    if total % length != 0:
        raise DataError(
            f"{path}: partial snapshot ({total} rows, snapshot_len {length})"
        )
    snapshots = stream.reshape(stream.shape[0], total // length, length)
    return RtFSeries(
        snapshots=np.ascontiguousarray(snapshots.transpose(1, 0, 2)),
        domain=str(meta["domain"]),
        sampling_interval_seconds=float(meta["sampling_interval_seconds"]),
        failure_index=int(meta["failure_index"]),
    )


# -- loss curves ---------------------------------------------------------


def save_loss_csv(path, diag, meta=None):
    lines = meta_header_lines(meta)
    lines.append(",".join(LOSS_COLUMNS))
    for epoch, scf, mmd, rec, l1, l2, l3, total in diag.rows():
        lines.append(
            f"{epoch}," + ",".join(fmt(v) for v in (scf, mmd, rec, l1, l2, l3, total))
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def save_timing_csv(path, diag, meta=None):
    lines = meta_header_lines(meta)
    lines.append("epoch,wall_seconds")
    for epoch, wall in zip(diag.epochs, diag.wall_seconds):
        lines.append(f"{epoch},{fmt(wall)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_losses_csv(path):
    """Loss values from a curve file: the ``total`` column if present,
    otherwise the single value column."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    header = None
    values = []
    for ln, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if header is None:
            header = fields
            if "total" in header:
                column = header.index("total")
            elif len(header) == 2 and header[0] == "epoch":
                column = 1
            else:
                raise DataError(
                    f"line {ln}: no 'total' column in header {header}"
                )
            continue
        if len(fields) != len(header):
            raise DataError(
                f"line {ln}: expected {len(header)} fields, got {len(fields)}"
            )
        try:
            values.append(float(fields[column]))
        except ValueError as err:
            raise DataError(f"line {ln}: non-numeric value ({err})") from err
    if header is None:
        raise DataError(f"{path}: no header row")
    return np.asarray(values, dtype=np.float64)


# -- indicator series ----------------------------------------------------


def save_hi_csv(path, hi, meta=None):
    lines = meta_header_lines(meta)
    lines.append("t,hi")
    for t, v in enumerate(hi, start=1):
        lines.append(f"{t},{fmt(v)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def save_erf_csv(path, erf, meta=None):
    lines = meta_header_lines(meta)
    lines.append("t,erf")
    for t, v in enumerate(erf, start=1):
        lines.append(f"{t},{fmt(v)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


# -- JSON records --------------------------------------------------------


def save_json_record(path, payload, meta=None):
    record = {"meta": dict(meta or {})}
    record.update(payload)
    atomic_write_text(path, json.dumps(record, sort_keys=True, indent=2) + "\n")


def segmentation_payload(seg):
    return {
        "boundaries": [int(b) for b in seg.boundaries],
        "n_stages": seg.n_stages,
        "n_windows": seg.n_windows,
        "omega": seg.omega,
        "algorithm": seg.algorithm,
        "objective": None if seg.objective is None else float(seg.objective),
        "cost": None if seg.cost is None else float(seg.cost),
    }


# -- checkpoints ---------------------------------------------------------


def save_checkpoint(path, params, model_cfg, extra=None):
    """Binary container: magic, format version, JSON header, float64 payload."""
    header = {
        "model_config": asdict(model_cfg),
        "params": [[name, list(t.data.shape)] for name, t in params.params.items()],
        "buffers": [[name, list(b.shape)] for name, b in params.buffers.items()],
        "extra": dict(extra or {}),
        "tool_version": __version__,
    }
    header_bytes = canonical_json(header).encode("utf-8")
    chunks = [t.data for t in params.params.values()]
    chunks += list(params.buffers.values())
    if chunks:
        flat = np.concatenate([np.ravel(c) for c in chunks]).astype("<f8")
    else:
        flat = np.zeros(0, dtype="<f8")
    payload = b"".join(
        [
            CHECKPOINT_MAGIC,
            struct.pack("<II", CHECKPOINT_FORMAT, len(header_bytes)),
            header_bytes,
            flat.tobytes(),
        ]
    )
    atomic_write_bytes(path, payload)


def load_checkpoint(path):
    """Returns ``(params, model_cfg, extra)``; rejects malformed containers."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    blob = path.read_bytes()
    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: unsupported checkpoint format {version}")
    if len(blob) < 12 + header_len:
        raise DataError(f"{path}: truncated header")
    try:
        header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise DataError(f"{path}: corrupt header ({err})") from err
    cfg_dict = dict(header["model_config"])
    cfg_dict["kernel_sizes"] = tuple(cfg_dict["kernel_sizes"])
    model_cfg = ModelConfig(**cfg_dict)
    flat = np.frombuffer(blob[12 + header_len :], dtype="<f8")
    expected = sum(int(np.prod(shape)) for _, shape in header["params"])
    expected += sum(int(np.prod(shape)) for _, shape in header["buffers"])
    if flat.size != expected:
        raise DataError(
            f"{path}: payload holds {flat.size} values, header declares {expected}"
        )
    store = ParamStore()
    offset = 0
    for name, shape in header["params"]:
        count = int(np.prod(shape))
        store.add_param(name, flat[offset : offset + count].reshape(shape).copy())
        offset += count
    for name, shape in header["buffers"]:
        count = int(np.prod(shape))
        store.add_buffer(name, flat[offset : offset + count].reshape(shape).copy())
        offset += count
    return store, model_cfg, header.get("extra", {})
