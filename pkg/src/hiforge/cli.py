"""Command-line surface for the full pipeline.

Exit codes: 0 success, 1 usage or configuration problems (including missing
files), 2 malformed data, 3 numerical failure during computation. Every
emitted file embeds the config hash, the seed, and the tool version, and is
byte-identical across reruns with the same inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import Tensor, no_grad
from .errors import ConfigError, DataError, DimensionError, NumericalError, UsageError
from .estimators import HiConstructor, StageSegmenter
from .io import (
    atomic_write_text,
    config_hash,
    fmt,
    load_checkpoint,
    load_losses_csv,
    load_rtf_csv,
    save_checkpoint,
    save_erf_csv,
    save_hi_csv,
    save_json_record,
    save_loss_csv,
    save_rtf_csv,
    save_timing_csv,
    segmentation_payload,
)
from .metrics import erf_breadth, erf_map, evaluate_hi, pi_control
from .model import encode_batch, pooled_features, predict_hi_series
from .sampling import StagePlan, build_stage_plan, sample_epoch
from .synth import SynthSpec, generate_synth
from .training import SCF_FORMS, WEIGHTINGS

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

MODE_ALIASES = {"sync": "synchronized", "synchronized": "synchronized", "random": "random"}

MODEL_KEYS = (
    "patch_len",
    "patch_stride",
    "embed_dim",
    "attn_dim",
    "n_heads",
    "kernel_sizes",
    "ffn_ratio",
    "n_encoder_blocks",
    "n_decoder_blocks",
    "dropout",
    "cross_attention",
    "decode_from",
)
TRAIN_KEYS = (
    "epochs",
    "batch_size",
    "lr",
    "sampling_mode",
    "weighting",
    "fixed_weights",
    "temperature",
    "scf_alpha",
    "scf_form",
    "mmd_sigma",
)
METRIC_KEYS = ("ma_window", "xi", "horizon")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sigma_arg(text):
    if text == "median":
        return text
    try:
        return float(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(
            f"sigma must be 'median' or a number, got '{text}'"
        ) from err


def _meta(hash_, seed):
    return {"config_hash": hash_, "seed": seed, "version": __version__}


def _emit_json(payload, meta, out):
    if out is None:
        record = {"meta": meta}
        record.update(payload)
        print(json.dumps(record, sort_keys=True, indent=2))
    else:
        save_json_record(out, payload, meta=meta)
        print(out)


def _load_json_file(path, kind):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid {kind} JSON ({err})") from err


# -- synth ---------------------------------------------------------------


def cmd_synth(args):
    raw = _load_json_file(args.spec, "synth spec")
    hash_ = config_hash(raw)
    out = Path(args.out)
    if "stages" in raw:
        specs = {"series": SynthSpec.from_dict(raw)}
    elif "source" in raw and "target" in raw:
        specs = {
            "source": SynthSpec.from_dict(raw["source"]),
            "target": SynthSpec.from_dict(raw["target"]),
        }
    else:
        raise ConfigError(
            "synth spec must be one spec object or {'source': ..., 'target': ...}"
        )
    truth_payload = {}
    for name, spec in specs.items():
        series, truth = generate_synth(spec)
        save_rtf_csv(out / f"{name}.csv", series, meta=_meta(hash_, spec.seed))
        truth_payload[name] = {
            "snapshot_boundaries": [int(b) for b in truth.snapshot_boundaries],
            "n_stages": spec.n_stages,
            "labels": [float(v) for v in truth.labels],
        }
        print(out / f"{name}.csv")
    save_json_record(out / "truth.json", truth_payload, meta=_meta(hash_, None))
    print(out / "truth.json")
    return EXIT_OK


# -- segment -------------------------------------------------------------


def cmd_segment(args):
    series = load_rtf_csv(args.input)
    seg = StageSegmenter(
        omega=args.omega,
        algorithm=args.algo,
        penalty=args.penalty,
        m_max=args.m_max,
        n_stages=args.stages,
        sigma=args.sigma,
    ).fit(series)
    config = {
        "command": "segment",
        "input": str(args.input),
        "omega": args.omega,
        "algo": args.algo,
        "penalty": args.penalty,
        "m_max": args.m_max,
        "stages": args.stages,
        "sigma": args.sigma,
    }
    _emit_json(
        segmentation_payload(seg.segmentation_),
        _meta(config_hash(config), None),
        args.out,
    )
    return EXIT_OK


# -- sample-plan ---------------------------------------------------------


def _stage_pair_from_files(source_path, target_path, omega, penalty, m_max, sigma):
    source = load_rtf_csv(source_path)
    target = load_rtf_csv(target_path)
    seg_source = StageSegmenter(
        omega=omega, penalty=penalty, m_max=m_max, sigma=sigma
    ).fit(source)
    seg_target = StageSegmenter(
        omega=omega, n_stages=seg_source.n_stages_, sigma=sigma
    ).fit(target)
    return source, target, seg_source, seg_target


def cmd_sample_plan(args):
    source, target, seg_source, seg_target = _stage_pair_from_files(
        args.source, args.target, args.omega, args.penalty, args.m_max, args.sigma
    )
    plan = build_stage_plan(source, seg_source.segmentation_, target, seg_target.segmentation_)
    mode = MODE_ALIASES[args.mode]
    batches = sample_epoch(
        plan, args.batch_size, seed=(args.seed, 31, args.epoch), mode=mode
    )
    config = {
        "command": "sample-plan",
        "source": str(args.source),
        "target": str(args.target),
        "omega": args.omega,
        "mode": mode,
        "batch_size": args.batch_size,
        "seed": args.seed,
        "epoch": args.epoch,
        "penalty": args.penalty,
        "m_max": args.m_max,
        "sigma": args.sigma,
    }
    payload = {
        "mode": mode,
        "batch_size": args.batch_size,
        "epoch": args.epoch,
        "n_stages": plan.n_stages,
        "pool_sizes": {
            "source": [len(p) for p in plan.source_pools],
            "target": [len(p) for p in plan.target_pools],
        },
        "batches": [
            {
                "stage": int(b.stage),
                "source": [int(i) for i in b.source_indices],
                "target": [int(i) for i in b.target_indices],
            }
            for b in batches
        ],
    }
    _emit_json(payload, _meta(config_hash(config), args.seed), args.out)
    return EXIT_OK


# -- train ---------------------------------------------------------------


def _pick(config, section, allowed):
    sub = config.get(section, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"config section '{section}' must be an object")
    unknown = sorted(set(sub) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {unknown}")
    return sub


def _resolve_inputs(config, out_dir, hash_):
    if "synth" in config:
        synth = config["synth"]
        if not ("source" in synth and "target" in synth):
            raise ConfigError("'synth' needs 'source' and 'target' spec objects")
        source_spec = SynthSpec.from_dict(synth["source"])
        target_spec = SynthSpec.from_dict(synth["target"])
        source, _ = generate_synth(source_spec)
        target, _ = generate_synth(target_spec)
        save_rtf_csv(out_dir / "source.csv", source, meta=_meta(hash_, source_spec.seed))
        save_rtf_csv(out_dir / "target.csv", target, meta=_meta(hash_, target_spec.seed))
        return source, target
    if "source" in config and "target" in config:
        return load_rtf_csv(config["source"]), load_rtf_csv(config["target"])
    raise ConfigError("config needs either 'synth' or 'source'/'target' paths")


def cmd_train(args):
    config = _load_json_file(args.config, "experiment config")
    if "seed" not in config:
        raise ConfigError("config must set 'seed'")
    model = _pick(config, "model", MODEL_KEYS)
    train_section = _pick(config, "train", TRAIN_KEYS)
    metric_section = _pick(config, "metrics", METRIC_KEYS)
    if "kernel_sizes" in model:
        model = {**model, "kernel_sizes": tuple(model["kernel_sizes"])}
    if "fixed_weights" in train_section:
        train_section = {
            **train_section,
            "fixed_weights": tuple(train_section["fixed_weights"]),
        }
    penalty = config.get("penalty", {})
    if isinstance(penalty, (int, float)):
        penalty = {"penalty": float(penalty)}
    hash_ = config_hash(config)
    out_dir = Path(config.get("output_dir", "runs")) / hash_[:12]
    source, target = _resolve_inputs(config, out_dir, hash_)
    estimator = HiConstructor(
        omega=config.get("omega", 64),
        penalty=penalty.get("penalty", 10.0),
        m_max=penalty.get("m_max", 10),
        sigma=config.get("sigma", "median"),
        seed=config["seed"],
        ma_window=metric_section.get("ma_window", 5),
        xi=metric_section.get("xi", 2.0),
        **model,
        **train_section,
    )
    estimator.fit(source, target)
    meta = _meta(hash_, config["seed"])
    save_json_record(out_dir / "config.json", {"config": config}, meta=meta)
    save_json_record(
        out_dir / "segmentation_source.json",
        segmentation_payload(estimator.source_segmentation_),
        meta=meta,
    )
    save_json_record(
        out_dir / "segmentation_target.json",
        segmentation_payload(estimator.target_segmentation_),
        meta=meta,
    )
    save_checkpoint(
        out_dir / "checkpoint.ckpt",
        estimator.params_,
        estimator.model_config_,
        extra={
            "config_hash": hash_,
            "seed": config["seed"],
            "omega": estimator.omega,
            "ma_window": estimator.ma_window,
            "xi": estimator.xi,
            "horizon": metric_section.get("horizon", 10),
        },
    )
    save_loss_csv(out_dir / "diagnostics.csv", estimator.diagnostics_, meta=meta)
    save_timing_csv(out_dir / "timing.csv", estimator.diagnostics_, meta=meta)
    diag = estimator.diagnostics_
    if diag.n_epochs:
        print(f"final_total={fmt(diag.total[-1])}")
    print(out_dir)
    return EXIT_OK


# -- eval-hi -------------------------------------------------------------


def cmd_eval_hi(args):
    params, model_cfg, extra = load_checkpoint(args.checkpoint)
    series = load_rtf_csv(args.input)
    hi = predict_hi_series(params, series, model_cfg)
    window = args.window if args.window is not None else int(extra.get("ma_window", 5))
    xi = args.xi if args.xi is not None else float(extra.get("xi", 2.0))
    report = evaluate_hi(hi, window=window, xi=xi)
    meta = _meta(extra.get("config_hash", ""), extra.get("seed"))
    if args.out is not None:
        out = Path(args.out)
        save_hi_csv(out / "hi.csv", hi, meta=meta)
        save_json_record(out / "report.json", report.as_dict(), meta=meta)
        print(out / "hi.csv")
        print(out / "report.json")
    else:
        record = {"meta": meta}
        record.update(report.as_dict())
        print(json.dumps(record, sort_keys=True, indent=2))
    return EXIT_OK


# -- pi-control ----------------------------------------------------------


def cmd_pi_control(args):
    losses = load_losses_csv(args.losses)
    print(fmt(pi_control(losses, horizon=args.horizon)))
    return EXIT_OK


# -- erf -----------------------------------------------------------------


def cmd_erf(args):
    params, model_cfg, extra = load_checkpoint(args.checkpoint)
    series = load_rtf_csv(args.input)
    plan = StagePlan(
        source_pools=[np.arange(series.n_snapshots)],
        target_pools=[np.arange(series.n_snapshots)],
    )
    batches = sample_epoch(plan, args.batch_size, seed=(args.seed, 9))
    erf = erf_map(params, model_cfg, series, series, batches, n_batches=args.batches)
    breadth = erf_breadth(erf)
    meta = _meta(extra.get("config_hash", ""), args.seed)
    meta["breadth"] = fmt(breadth)
    if args.out is not None:
        save_erf_csv(args.out, erf, meta=meta)
        print(args.out)
    else:
        for t, v in enumerate(erf, start=1):
            print(f"{t},{fmt(v)}")
    print(f"breadth={fmt(breadth)}")
    return EXIT_OK


# -- features ------------------------------------------------------------


def cmd_features(args):
    params, model_cfg, extra = load_checkpoint(args.checkpoint)
    series = load_rtf_csv(args.input)
    rows = {"S": [], "T": []}
    with no_grad():
        for start in range(0, series.n_snapshots, args.batch_size):
            chunk = Tensor(series.snapshots[start : start + args.batch_size])
            result = encode_batch(params, chunk, chunk, model_cfg, train=False)
            fs, ft = pooled_features(result)
            rows["S"].append(fs.data)
            rows["T"].append(ft.data)
    width = rows["S"][0].shape[1]
    lines = [f"# {k}={v}" for k, v in sorted(_meta(extra.get("config_hash", ""), extra.get("seed")).items())]
    lines.append("domain,snapshot," + ",".join(f"f{i}" for i in range(width)))
    for domain in ("S", "T"):
        stacked = np.concatenate(rows[domain], axis=0)
        for idx, row in enumerate(stacked, start=1):
            lines.append(f"{domain},{idx}," + ",".join(fmt(v) for v in row))
    text = "\n".join(lines) + "\n"
    if args.out is not None:
        atomic_write_text(args.out, text)
        print(args.out)
    else:
        print(text, end="")
    return EXIT_OK


# -- parser --------------------------------------------------------------


def build_parser():
    parser = _Parser(
        prog="hiforge",
        description="Domain-adaptive health-indicator construction pipeline.",
    )
    parser.add_argument("--version", action="version", version=f"hiforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate synthetic run-to-failure data")
    p.add_argument("--spec", required=True, help="synth spec JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("segment", help="stage one recording")
    p.add_argument("--input", required=True, help="signal CSV")
    p.add_argument("--omega", required=True, type=int, help="RMS window width")
    p.add_argument(
        "--algo", default="kcp", choices=["kcp", "binseg", "bottomup", "dynp"]
    )
    p.add_argument("--penalty", type=float, default=10.0)
    p.add_argument("--m-max", type=int, default=10)
    p.add_argument("--stages", type=int, default=None, help="fixed stage count")
    p.add_argument("--sigma", type=_sigma_arg, default="median")
    p.add_argument("--out", default=None, help="write JSON here instead of stdout")
    p.set_defaults(handler=cmd_segment)

    p = sub.add_parser("sample-plan", help="emit one epoch's batch plan")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--omega", required=True, type=int)
    p.add_argument("--mode", default="sync", choices=["sync", "random"])
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--epoch", type=int, default=1)
    p.add_argument("--penalty", type=float, default=10.0)
    p.add_argument("--m-max", type=int, default=10)
    p.add_argument("--sigma", type=_sigma_arg, default="median")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_sample_plan)

    p = sub.add_parser("train", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval-hi", help="indicator series and quality report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--xi", type=float, default=None)
    p.add_argument("--out", default=None, help="directory for hi.csv and report.json")
    p.set_defaults(handler=cmd_eval_hi)

    p = sub.add_parser("pi-control", help="stability of the last loss window")
    p.add_argument("--losses", required=True, help="loss curve CSV")
    p.add_argument("--horizon", type=int, default=10)
    p.set_defaults(handler=cmd_pi_control)

    p = sub.add_parser("erf", help="input-sensitivity map of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--batches", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_erf)

    p = sub.add_parser("features", help="pooled encoder features per domain")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_features)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    try:
        return args.handler(args)
    except FileNotFoundError as err:
        print(f"hiforge: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, UsageError) as err:
        print(f"hiforge: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DimensionError) as err:
        print(f"hiforge: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as err:
        print(f"hiforge: numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
