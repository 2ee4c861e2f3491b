"""CSV / JSONL encodings of measurement records and raw ILA captures."""
from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path

import numpy as np

from .dataset import IlaRawRecord, normalize_ila_record
from .errors import EmptyMask, NonPositivePower, ParseError, SchemaMismatch
from .grid import N_CHANNELS, MeasurementRecord, validate_record

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"

SCALAR_COLUMNS = ["schema_version", "device_id", "kind", "direction", "gain_target_db", "tilt_db",
                  "config_class", "total_in_dbm", "total_out_dbm", "voa_in_dbm", "voa_out_dbm",
                  "voa_attn_db"]
P_IN_COLUMNS = [f"p_in_{i}" for i in range(1, N_CHANNELS + 1)]
P_OUT_COLUMNS = [f"p_out_{i}" for i in range(1, N_CHANNELS + 1)]
MASK_COLUMNS = [f"mask_{i}" for i in range(1, N_CHANNELS + 1)]
COLUMNS = SCALAR_COLUMNS + P_IN_COLUMNS + P_OUT_COLUMNS + MASK_COLUMNS
ILA_TOTAL_COLUMNS = ["p_in_aux_total_mw", "p_out_aux_total_mw", "p_in_ila_total_mw",
                     "p_out_ila_total_mw"]
ILA_RAW_COLUMNS = COLUMNS + ILA_TOTAL_COLUMNS

_OPTIONAL = ("voa_in_dbm", "voa_out_dbm", "voa_attn_db")


def _fmt(x: float) -> str:
    # repr is the shortest string that round-trips the double exactly
    return repr(float(x))


def record_to_row(r: MeasurementRecord) -> dict:
    row = {
        "schema_version": SCHEMA_VERSION, "device_id": r.device_id, "kind": r.kind.value,
        "direction": r.direction.value, "gain_target_db": _fmt(r.gain_target_db),
        "tilt_db": _fmt(r.tilt_db), "config_class": r.config_class.value,
        "total_in_dbm": _fmt(r.total_in_dbm), "total_out_dbm": _fmt(r.total_out_dbm),
    }
    for name in _OPTIONAL:
        v = getattr(r, name)
        row[name] = "" if v is None else _fmt(v)
    row.update(zip(P_IN_COLUMNS, map(_fmt, r.p_in)))
    row.update(zip(P_OUT_COLUMNS, map(_fmt, r.p_out)))
    row.update(zip(MASK_COLUMNS, ("1" if b else "0" for b in r.mask)))
    return row


def _float(row, key, line):
    try:
        v = row[key]
        return float(v)
    except (KeyError, TypeError, ValueError):
        raise ParseError(f"row {line}: bad value for {key!r}: {row.get(key)!r}") from None


def _optional(row, key, line):
    v = row.get(key)
    if v is None or v == "":
        return None
    return _float(row, key, line)


def _mask(row, line):
    bits = []
    for key in MASK_COLUMNS:
        v = str(row.get(key, ""))
        if v not in ("0", "1"):
            raise ParseError(f"row {line}: mask bit {key} must be 0 or 1, got {v!r}")
        bits.append(v == "1")
    return np.array(bits)


def row_to_record(row: dict, line: int) -> MeasurementRecord:
    if str(row.get("schema_version")) != SCHEMA_VERSION:
        raise SchemaMismatch(f"row {line}: schema_version {row.get('schema_version')!r}, "
                             f"expected {SCHEMA_VERSION!r}")
    try:
        return MeasurementRecord(
            device_id=str(row["device_id"]), kind=row["kind"], direction=row["direction"],
            gain_target_db=_float(row, "gain_target_db", line),
            tilt_db=_float(row, "tilt_db", line), config_class=row["config_class"],
            total_in_dbm=_float(row, "total_in_dbm", line),
            total_out_dbm=_float(row, "total_out_dbm", line),
            voa_in_dbm=_optional(row, "voa_in_dbm", line),
            voa_out_dbm=_optional(row, "voa_out_dbm", line),
            voa_attn_db=_optional(row, "voa_attn_db", line),
            p_in=[_float(row, k, line) for k in P_IN_COLUMNS],
            p_out=[_float(row, k, line) for k in P_OUT_COLUMNS],
            mask=_mask(row, line))
    except KeyError as e:
        raise ParseError(f"row {line}: missing column {e}") from None
    except ValueError as e:
        if isinstance(e, ParseError):
            raise
        raise ParseError(f"row {line}: {e}") from None


def write_records(records, path, fmt: str = "csv") -> Path:
    path = Path(path)
    rows = [record_to_row(r) for r in records]
    if fmt == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    elif fmt == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(_jsonl_row(row)) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def _jsonl_row(row: dict) -> dict:
    out = {}
    for k, v in row.items():
        if k in ("schema_version", "device_id", "kind", "direction", "config_class"):
            out[k] = v
        elif k.startswith("mask_"):
            out[k] = int(v)
        else:
            out[k] = None if v == "" else float(v)
    return out


def _stringify(obj: dict) -> dict:
    out = {}
    for k, v in obj.items():
        if v is None:
            out[k] = ""
        elif isinstance(v, float):
            if not math.isfinite(v):
                out[k] = "nan"
            else:
                out[k] = _fmt(v)
        else:
            out[k] = str(v)
    return out


def _iter_rows(path: Path, fmt: str, columns):
    if fmt == "csv":
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in columns if c not in header]
            if missing:
                raise SchemaMismatch(f"{path}: missing columns {missing[:5]}...")
            for line, row in enumerate(reader, start=2):
                yield line, row
    elif fmt == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for line, text in enumerate(fh, start=1):
                if not text.strip():
                    continue
                try:
                    obj = json.loads(text)
                except json.JSONDecodeError as e:
                    raise ParseError(f"line {line}: {e}") from None
                if not isinstance(obj, dict):
                    raise ParseError(f"line {line}: expected an object")
                yield line, _stringify(obj)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def read_records(path, fmt: str = "csv"):
    """Parse a record file; returns ``(records, rejected)`` with ``rejected`` as (row, violations)."""
    path = Path(path)
    records, rejected = [], []
    for line, row in _iter_rows(path, fmt, COLUMNS):
        r = row_to_record(row, line)
        problems = validate_record(r)
        if problems:
            rejected.append((line, problems))
        else:
            records.append(r)
    return records, rejected


def ingest(path, fmt: str | None = None, *, strict: bool = False) -> list[MeasurementRecord]:
    """Read and validate records; invalid rows are logged and dropped (or raise when ``strict``)."""
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix == ".jsonl" else "csv")
    records, rejected = read_records(path, fmt)
    for line, problems in rejected:
        log.warning("%s row %d rejected: %s", path, line, ",".join(problems))
    if strict and rejected:
        line, problems = rejected[0]
        raise ParseError(f"row {line}: {','.join(problems)}")
    return records


def raw_to_row(raw: IlaRawRecord) -> dict:
    row = {
        "schema_version": SCHEMA_VERSION, "device_id": raw.device_id, "kind": "ILA",
        "direction": raw.direction.value, "gain_target_db": _fmt(raw.gain_target_db),
        "tilt_db": _fmt(raw.tilt_db), "config_class": raw.config_class.value,
        # OCM channel sums as seen at the auxiliary ROADMs
        "total_in_dbm": _fmt(10 * np.log10(raw.p_in_aux_total)),
        "total_out_dbm": _fmt(10 * np.log10(raw.p_out_aux_total)),
        "voa_in_dbm": "", "voa_out_dbm": "", "voa_attn_db": "",
    }
    row.update(zip(P_IN_COLUMNS, map(_fmt, raw.aux_in_spectrum_dbm)))
    row.update(zip(P_OUT_COLUMNS, map(_fmt, raw.aux_out_spectrum_dbm)))
    row.update(zip(MASK_COLUMNS, ("1" if b else "0" for b in raw.mask)))
    row.update(zip(ILA_TOTAL_COLUMNS, map(_fmt, (raw.p_in_aux_total, raw.p_out_aux_total,
                                                  raw.p_in_ila_total, raw.p_out_ila_total))))
    return row


def write_ila_raw(raws, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=ILA_RAW_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(raw_to_row(r) for r in raws)
    return path


def read_ila_raw(path, fmt: str = "csv") -> list[IlaRawRecord]:
    out = []
    for line, row in _iter_rows(Path(path), fmt, ILA_RAW_COLUMNS):
        if str(row.get("schema_version")) != SCHEMA_VERSION:
            raise SchemaMismatch(f"row {line}: schema_version {row.get('schema_version')!r}")
        out.append(IlaRawRecord(
            aux_in_spectrum_dbm=np.array([_float(row, k, line) for k in P_IN_COLUMNS]),
            aux_out_spectrum_dbm=np.array([_float(row, k, line) for k in P_OUT_COLUMNS]),
            p_in_aux_total=_float(row, "p_in_aux_total_mw", line),
            p_out_aux_total=_float(row, "p_out_aux_total_mw", line),
            p_in_ila_total=_float(row, "p_in_ila_total_mw", line),
            p_out_ila_total=_float(row, "p_out_ila_total_mw", line),
            mask=_mask(row, line), gain_target_db=_float(row, "gain_target_db", line),
            device_id=str(row["device_id"]), direction=row["direction"],
            config_class=row["config_class"], tilt_db=_float(row, "tilt_db", line)))
    return out


def normalize_ila_file(path, fmt: str = "csv"):
    """Raw ILA captures renormalized onto the ILA PM totals; returns ``(records, rejected)``."""
    records, rejected = [], []
    for i, raw in enumerate(read_ila_raw(path, fmt), start=1):
        try:
            r = normalize_ila_record(raw)
        except (EmptyMask, NonPositivePower) as e:
            rejected.append((i, [e.reason]))
            continue
        problems = validate_record(r)
        if problems:
            rejected.append((i, problems))
        else:
            records.append(r)
    return records, rejected


def ingest_ila_raw(path, fmt: str = "csv") -> list[MeasurementRecord]:
    records, rejected = normalize_ila_file(path, fmt)
    for i, problems in rejected:
        log.warning("%s: ILA capture %d rejected: %s", path, i, ",".join(problems))
    return records
