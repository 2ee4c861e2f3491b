"""ILA renormalization, feature assembly, standardization and train/test splits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStatistics, EmptyMask, InsufficientRecords, NonPositivePower
from .grid import (FLOOR_DBM, N_CHANNELS, ConfigClass, Direction, Kind, MeasurementRecord,
                   as_mask, dbm_to_mw, mw_to_dbm)

SENTINEL = -999.0
N_FEATURES = 6 + 2 * N_CHANNELS
# feature layout: G0, P_in, P_out, P^V_in, P^V_out, P^V_attn, P(l_1..l_95), c_1..c_95
VOA_SLOTS = (3, 4, 5)
POWER_SLICE = slice(6, 6 + N_CHANNELS)
MASK_SLICE = slice(6 + N_CHANNELS, N_FEATURES)


@dataclass(frozen=True, eq=False)
class IlaRawRecord:
    """One ILA capture: OCM spectra at the auxiliary ROADMs plus PM totals in mW."""

    aux_in_spectrum_dbm: np.ndarray
    aux_out_spectrum_dbm: np.ndarray
    p_in_aux_total: float
    p_out_aux_total: float
    p_in_ila_total: float
    p_out_ila_total: float
    mask: np.ndarray
    gain_target_db: float
    device_id: str
    direction: Direction = Direction.AB
    config_class: ConfigClass = ConfigClass.RANDOM
    tilt_db: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "config_class", ConfigClass(self.config_class))
        object.__setattr__(self, "mask", as_mask(self.mask))


def ila_scaling_factors(raw: IlaRawRecord) -> tuple[float, float]:
    """(sigma_in, sigma_out) mapping auxiliary OCM channel sums onto the ILA PM totals."""
    for name in ("p_in_aux_total", "p_out_aux_total", "p_in_ila_total", "p_out_ila_total"):
        if not getattr(raw, name) > 0:
            raise NonPositivePower(f"{name} must be > 0 mW")
    mask = as_mask(raw.mask)
    if not mask.any():
        raise EmptyMask("ILA capture with no active channel")
    ocm_in = np.sum(dbm_to_mw(np.asarray(raw.aux_in_spectrum_dbm)[mask]))
    ocm_out = np.sum(dbm_to_mw(np.asarray(raw.aux_out_spectrum_dbm)[mask]))
    return float(raw.p_in_ila_total / ocm_in), float(raw.p_out_ila_total / ocm_out)


def normalize_ila_record(raw: IlaRawRecord) -> MeasurementRecord:
    """Rescale the auxiliary OCM spectra in mW so active-channel sums equal the ILA PM totals."""
    sigma_in, sigma_out = ila_scaling_factors(raw)
    mask = as_mask(raw.mask)
    p_in = np.full(N_CHANNELS, FLOOR_DBM)
    p_out = np.full(N_CHANNELS, FLOOR_DBM)
    p_in[mask] = mw_to_dbm(sigma_in * dbm_to_mw(np.asarray(raw.aux_in_spectrum_dbm)[mask]))
    p_out[mask] = mw_to_dbm(sigma_out * dbm_to_mw(np.asarray(raw.aux_out_spectrum_dbm)[mask]))
    return MeasurementRecord(
        device_id=raw.device_id, kind=Kind.ILA, direction=raw.direction,
        gain_target_db=float(raw.gain_target_db), p_in=p_in, p_out=p_out, mask=mask,
        total_in_dbm=mw_to_dbm(raw.p_in_ila_total), total_out_dbm=mw_to_dbm(raw.p_out_ila_total),
        config_class=raw.config_class, tilt_db=raw.tilt_db)


def assemble_features(record: MeasurementRecord) -> np.ndarray:
    """196-entry input vector; VOA slots carry the -999 sentinel for ILA records."""
    v = np.empty(N_FEATURES)
    v[0] = record.gain_target_db
    v[1] = record.total_in_dbm
    v[2] = record.total_out_dbm
    if record.kind.has_voa:
        v[3], v[4], v[5] = record.voa_in_dbm, record.voa_out_dbm, record.voa_attn_db
    else:
        v[3:6] = SENTINEL
    v[POWER_SLICE] = np.where(record.mask, record.p_in, FLOOR_DBM)
    v[MASK_SLICE] = record.mask
    return v


def feature_matrix(records) -> np.ndarray:
    return np.stack([assemble_features(r) for r in records]) if records else np.empty((0, N_FEATURES))


def target_matrix(records) -> tuple[np.ndarray, np.ndarray]:
    """Measured gains (zero on inactive channels) and the matching float mask."""
    mask = np.stack([r.mask for r in records]).astype(np.float64)
    gain = np.stack([np.where(r.mask, r.p_out - r.p_in, 0.0) for r in records])
    return gain, mask


def _sentinel_rows(X: np.ndarray) -> np.ndarray:
    """Boolean (N, d) marking sentinel entries; only the VOA slots may hold a sentinel."""
    hit = np.zeros(X.shape, dtype=bool)
    cols = list(VOA_SLOTS)
    hit[:, cols] = X[:, cols] == SENTINEL
    return hit


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    sentinel: float = SENTINEL

    def apply(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Z = (X - self.mean) / self.std
        sent = _sentinel_rows(X)
        Z[sent] = self.sentinel
        return Z

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "sentinel": self.sentinel}

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64),
                   float(d["sentinel"]))


def fit_standardizer(X) -> Standardizer:
    """Per-feature z-score statistics computed over non-sentinel entries.

    A feature with no non-sentinel observations (the VOA slots of an ILA-only training set)
    gets mean 0 and std 1; exactly one observation is degenerate.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DegenerateStatistics("at least two training vectors are required")
    valid = ~_sentinel_rows(X)
    counts = valid.sum(axis=0)
    if np.any(counts == 1):
        raise DegenerateStatistics(f"features {np.flatnonzero(counts == 1).tolist()} have a "
                                   "single non-sentinel observation")
    safe = np.maximum(counts, 1)
    mean = np.where(valid, X, 0.0).sum(axis=0) / safe
    var = np.where(valid, (X - mean) ** 2, 0.0).sum(axis=0) / safe
    std = np.sqrt(var)
    std = np.where(std > 1e-12, std, 1.0)
    mean = np.where(counts == 0, 0.0, mean)
    return Standardizer(mean, std)


def apply_standardizer(s: Standardizer, v) -> np.ndarray:
    out = s.apply(v)
    return out[0] if np.ndim(v) == 1 else out


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.86
    test_fraction: float = 0.14
    seed: int = 0
    test_count: int | None = 436

    def n_test(self, n_records: int) -> int:
        if self.test_count is not None:
            return self.test_count
        return int(round(self.test_fraction * n_records))


def split(records, spec: SplitSpec = SplitSpec()):
    """Per gain setting, hold out ``n_test`` Random/Goalpost records; the rest train.

    Both halves keep the input order.
    """
    rng = np.random.default_rng(spec.seed)
    test_idx = set()
    gains = sorted({r.gain_target_db for r in records})
    for g in gains:
        members = [i for i, r in enumerate(records) if r.gain_target_db == g]
        pool = [i for i in members if records[i].config_class is not ConfigClass.FIXED]
        n_test = spec.n_test(len(members))
        if len(pool) < n_test:
            raise InsufficientRecords(f"gain {g} dB: {len(pool)} Random/Goalpost records, "
                                      f"{n_test} needed for the test set")
        test_idx.update(int(i) for i in rng.choice(pool, size=n_test, replace=False))
    train = [r for i, r in enumerate(records) if i not in test_idx]
    test = [r for i, r in enumerate(records) if i in test_idx]
    return train, test
