"""``edfa-twin`` command line: synth, ingest, train, transfer, eval, matrix, sweep.

Structured summaries go to stdout as one JSON object.  Failures print
``{"error": <reason>, "message": ...}`` on stderr and exit with status 2.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as rio
from .config import RunConfig, load_config
from .dataset import split
from .errors import ConfigError, EdfaTwinError
from .evaluate import (evaluate, export_cdf, render_cdf_svg, shot_sweep, tl_matrix, write_report,
                       write_sweep_csv)
from .grid import Kind
from .nn import load_checkpoint, save_checkpoint
from .synth import device_from_seed, generate_campaign, ila_raw_capture
from .train import train_direct
from .transfer import (Mode, attach_reference, heterogeneous_transfer, homogeneous_transfer,
                       tl_shot_sampler)

log = logging.getLogger("edfa_twin")

MANIFEST = "manifest.json"
REFERENCE_BATCH = 128


def _seed_streams(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _sidecar(out: Path, command: str, cfg: RunConfig, extra: dict | None = None) -> Path:
    """Resolved configuration written next to an output file."""
    doc = {"schema_version": rio.SCHEMA_VERSION, "command": command, "config_hash": cfg.hash(),
           "config": cfg.to_dict(), **(extra or {})}
    path = out.with_name(out.name + ".config.json")
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_dataset(path) -> list:
    """Records from a file, or from a directory written by ``synth``/``ingest``."""
    path = Path(path)
    if path.is_dir():
        manifest = json.loads((path / MANIFEST).read_text(encoding="utf-8")) if (path / MANIFEST).exists() else {}
        name = manifest.get("records_file")
        if name is None:
            candidates = [p for p in ("records.csv", "records.jsonl") if (path / p).exists()]
            if not candidates:
                raise ConfigError(f"{path}: no records file found")
            name = candidates[0]
        if manifest.get("ila_raw"):
            return rio.ingest_ila_raw(path / name)
        path = path / name
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    return rio.ingest(path)


def _config(args) -> RunConfig:
    return load_config(getattr(args, "config", None), seed=getattr(args, "seed", None))


def cmd_synth(args) -> dict:
    cfg = _config(args)
    if args.gains:
        cfg = cfg.replace("campaign", gains=[float(g) for g in args.gains.split(",")])
    profile = device_from_seed(cfg.seed, args.kind)
    records = generate_campaign(profile, cfg.campaign, np.random.default_rng(cfg.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ila_raw = args.ila_raw and profile.kind is Kind.ILA
    if ila_raw:
        rng = np.random.default_rng([cfg.seed, 1])
        name = "ila_raw.csv"
        rio.write_ila_raw([ila_raw_capture(r, rng) for r in records], out / name)
    else:
        name = f"records.{args.format}"
        rio.write_records(records, out / name, args.format)
    manifest = {"schema_version": rio.SCHEMA_VERSION, "command": "synth", "config_hash": cfg.hash(),
                "config": cfg.to_dict(), "device": profile.to_dict(), "records_file": name,
                "ila_raw": bool(ila_raw), "n_records": len(records)}
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {"out": str(out), "device_id": profile.device_id, "n_records": len(records)}


def cmd_ingest(args) -> dict:
    cfg = _config(args)
    src = Path(args.input)
    if args.ila_normalize:
        records, bad = rio.normalize_ila_file(src, args.format)
    else:
        records, bad = rio.read_records(src, args.format)
    for where, problems in bad:
        log.warning("%s entry %d rejected: %s", src, where, ",".join(problems))
    rejected = len(bad)
    out = Path(args.out)
    fmt = "jsonl" if out.suffix == ".jsonl" else "csv"
    rio.write_records(records, out, fmt)
    _sidecar(out, "ingest", cfg, {"source": str(src), "rejected": rejected})
    return {"out": str(out), "n_records": len(records), "n_rejected": rejected}


def _split(cfg: RunConfig, records):
    return split(records, cfg.split)


def cmd_train(args) -> dict:
    cfg = _config(args)
    records = load_dataset(args.data)
    train_records, test_records = _split(cfg, records)
    net = train_direct(train_records, cfg.pretrain, cfg.finetune, cfg.seed,
                       skip_pretrain=args.skip_pretrain)
    ref_rng, = _seed_streams(cfg.seed + 1, 1)
    net = attach_reference(net, train_records, min(REFERENCE_BATCH, len(train_records)), ref_rng)
    net.metadata.update(config_hash=cfg.hash(), data=str(args.data))
    out = Path(args.out)
    save_checkpoint(net, out)
    _sidecar(out, "train", cfg)
    mae = evaluate(net, test_records).mae
    return {"out": str(out), "n_train": len(train_records), "n_test": len(test_records),
            "test_mae_db": mae}


def _transfer(source, target_train, mode: Mode, shots: int, cfg: RunConfig, seed: int):
    pick, run = _seed_streams(seed, 2)
    picked = tl_shot_sampler(target_train, mode, shots, pick)
    if mode is Mode.HOMO:
        return homogeneous_transfer(source, picked, cfg.homo, run)
    return heterogeneous_transfer(source, picked, cfg.hetero, run)


def _default_shots(cfg: RunConfig, mode: Mode) -> int:
    return cfg.homo.shots_per_gain_setting if mode is Mode.HOMO else cfg.hetero.shots_per_gain_setting


def cmd_transfer(args) -> dict:
    cfg = _config(args)
    mode = Mode(args.mode)
    if args.epochs is not None:
        cfg = cfg.replace(mode.value, epochs=args.epochs)
    shots = args.shots if args.shots is not None else _default_shots(cfg, mode)
    cfg = cfg.replace(mode.value, shots_per_gain_setting=shots)
    source = load_checkpoint(args.source)
    target_train, target_test = _split(cfg, load_dataset(args.target_data))
    net = _transfer(source, target_train, mode, shots, cfg, cfg.seed)
    net.metadata.update(config_hash=cfg.hash())
    out = Path(args.out)
    save_checkpoint(net, out)
    summary = {"test_mae_db": evaluate(net, target_test).mae,
               "source_mae_db": evaluate(source, target_test).mae}
    manifest = {"schema_version": rio.SCHEMA_VERSION, "source_checkpoint": str(args.source),
                "target_data": str(args.target_data), "mode": mode.value,
                "config_hash": cfg.hash(), "config": cfg.to_dict(), "output_checkpoint": str(out),
                "metrics": summary}
    out.with_name(out.name + ".manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {"out": str(out), **summary}


def cmd_eval(args) -> dict:
    cfg = _config(args)
    net = load_checkpoint(args.ckpt)
    records = load_dataset(args.data)
    test = records if args.all else _split(cfg, records)[1]
    report = evaluate(net, test, meta={"checkpoint": str(args.ckpt), "data": str(args.data),
                                       "config_hash": cfg.hash()})
    out = Path(args.report)
    write_report(report, out)
    if args.cdf:
        _sidecar(export_cdf(report, args.cdf), "eval", cfg)
    if args.svg:
        _sidecar(render_cdf_svg(report, args.svg), "eval", cfg)
    return {"report": str(out), "mae_db": report.mae, "p95_db": report.overall["p95_db"]}


def _parse_list(text: str, cast=str):
    return [cast(x) for x in text.split(",") if x.strip()]


def cmd_matrix(args) -> dict:
    cfg = _config(args)
    mode = Mode(args.mode)
    if args.epochs is not None:
        cfg = cfg.replace(mode.value, epochs=args.epochs)
    paths = _parse_list(args.devices)
    devices = {}
    for p in paths:
        devices[Path(p).name] = _split(cfg, load_dataset(p))

    def train_fn(train_records):
        net = train_direct(train_records, cfg.pretrain, cfg.finetune, cfg.seed)
        return attach_reference(net, train_records, min(REFERENCE_BATCH, len(train_records)),
                                _seed_streams(cfg.seed + 1, 1)[0])

    def transfer_fn(source, target_train):
        return _transfer(source, target_train, mode, _default_shots(cfg, mode), cfg, cfg.seed)

    m = tl_matrix(devices, train_fn, transfer_fn)
    out = Path(args.out)
    doc = {**m.to_dict(), "mode": mode.value, "config_hash": cfg.hash()}
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _sidecar(out, "matrix", cfg)
    return {"out": str(out), "mae_db": m.mae.tolist()}


def cmd_sweep(args) -> dict:
    cfg = _config(args)
    mode = Mode(args.mode)
    if args.epochs is not None:
        cfg = cfg.replace(mode.value, epochs=args.epochs)
    source = load_checkpoint(args.source)
    target_train, target_test = _split(cfg, load_dataset(args.target_data))
    shots = _parse_list(args.shots, int)
    seeds = _parse_list(args.seeds, int)

    def transfer_fn(src, train_records, n, seed):
        return _transfer(src, train_records, mode, n, cfg.replace(mode.value, shots_per_gain_setting=n), seed)

    result = shot_sweep(source, target_train, target_test, shots, seeds, transfer_fn)
    out = Path(args.out)
    write_sweep_csv(result, out)
    _sidecar(out, "sweep", cfg, {"mean_mae_db": {str(k): v for k, v in result["mean_mae_db"].items()}})
    return {"out": str(out), "mean_mae_db": result["mean_mae_db"]}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edfa-twin", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML run configuration")
        sp.add_argument("--seed", type=int, help="overrides the config file and EDFA_TWIN_SEED")
        return sp

    s = common(sub.add_parser("synth", help="generate a synthetic measurement campaign"))
    s.add_argument("--kind", required=True, choices=[k.value for k in Kind])
    s.add_argument("--gains", help="comma-separated gain settings (dB)")
    s.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    s.add_argument("--ila-raw", action="store_true", help="write raw auxiliary-ROADM captures (ILA only)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = common(sub.add_parser("ingest", help="validate (and renormalize) a record file"))
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    s.add_argument("--ila-normalize", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = common(sub.add_parser("train", help="pretrain + fine-tune a direct model"))
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--skip-pretrain", action="store_true")
    s.set_defaults(func=cmd_train)

    s = common(sub.add_parser("transfer", help="transfer a checkpoint onto a new device"))
    s.add_argument("--source", required=True)
    s.add_argument("--target-data", required=True)
    s.add_argument("--mode", required=True, choices=[m.value for m in Mode])
    s.add_argument("--shots", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_transfer)

    s = common(sub.add_parser("eval", help="evaluate a checkpoint on a dataset's test split"))
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--cdf")
    s.add_argument("--svg")
    s.add_argument("--all", action="store_true", help="evaluate on every record, not the test split")
    s.set_defaults(func=cmd_eval)

    s = common(sub.add_parser("matrix", help="direct/transfer MAE grid over several devices"))
    s.add_argument("--devices", required=True, help="comma-separated dataset directories")
    s.add_argument("--mode", required=True, choices=[m.value for m in Mode])
    s.add_argument("--epochs", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_matrix)

    s = common(sub.add_parser("sweep", help="transfer MAE against shots per gain setting"))
    s.add_argument("--source", required=True)
    s.add_argument("--target-data", required=True)
    s.add_argument("--mode", default="hetero", choices=[m.value for m in Mode])
    s.add_argument("--shots", default="8,16,32,48")
    s.add_argument("--seeds", default="0")
    s.add_argument("--epochs", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = args.func(args)
    except EdfaTwinError as e:
        sys.stderr.write(json.dumps({"error": e.reason, "message": str(e)}) + "\n")
        return 2
    except OSError as e:
        sys.stderr.write(json.dumps({"error": "io_error", "message": str(e)}) + "\n")
        return 2
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
