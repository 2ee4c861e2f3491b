"""Channel grid, power-unit conversions and the measurement record model."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMask, NonPositivePower

N_CHANNELS = 95
SPACING_GHZ = 50.0
F_START_THZ = 191.35
FLOOR_DBM = -60.0


class Kind(str, enum.Enum):
    BOOSTER = "Booster"
    PREAMP = "Preamp"
    ILA = "ILA"

    @property
    def has_voa(self) -> bool:
        return self is not Kind.ILA


class Direction(str, enum.Enum):
    AB = "AB"
    BA = "BA"
    NA = "NA"


class ConfigClass(str, enum.Enum):
    FIXED = "Fixed"
    RANDOM = "Random"
    GOALPOST = "Goalpost"


@dataclass(frozen=True)
class ChannelPlan:
    """Fixed 95 x 50 GHz grid; channel 1 sits at ``f_start_thz``."""

    n_channels: int = N_CHANNELS
    spacing_ghz: float = SPACING_GHZ
    f_start_thz: float = F_START_THZ

    def __post_init__(self):
        if self.n_channels != N_CHANNELS or self.spacing_ghz != SPACING_GHZ:
            raise ValueError("channel plan is fixed at 95 x 50 GHz")

    def frequencies_ghz(self) -> np.ndarray:
        # integer GHz keeps the 50 GHz step exact
        start = int(round(self.f_start_thz * 1000.0))
        return start + np.arange(self.n_channels, dtype=np.int64) * int(self.spacing_ghz)

    def frequencies_thz(self) -> np.ndarray:
        return self.frequencies_ghz() / 1000.0

    def frequency_thz(self, channel: int) -> float:
        """Centre frequency of 1-based ``channel``."""
        if not 1 <= channel <= self.n_channels:
            raise IndexError(channel)
        return float(self.frequencies_thz()[channel - 1])


def dbm_to_mw(p):
    out = np.power(10.0, np.asarray(p, dtype=np.float64) / 10.0)
    return out if out.ndim else float(out)


def mw_to_dbm(p):
    arr = np.asarray(p, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise NonPositivePower(f"power must be > 0 mW, got {p!r}")
    out = 10.0 * np.log10(arr)
    return out if out.ndim else float(out)


def as_mask(bits) -> np.ndarray:
    mask = np.asarray(bits).astype(bool)
    if mask.shape != (N_CHANNELS,):
        raise ValueError(f"channel mask must have {N_CHANNELS} entries, got shape {mask.shape}")
    return mask


def compute_gain(p_in, p_out, mask) -> np.ndarray:
    """Per-channel gain in dB; inactive channels are NaN so they drop out of every metric."""
    mask = as_mask(mask)
    if not mask.any():
        raise EmptyMask("gain requested on an empty channel mask")
    gain = np.full(N_CHANNELS, np.nan)
    gain[mask] = np.asarray(p_out, dtype=np.float64)[mask] - np.asarray(p_in, dtype=np.float64)[mask]
    return gain


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    device_id: str
    kind: Kind
    direction: Direction
    gain_target_db: float
    p_in: np.ndarray
    p_out: np.ndarray
    mask: np.ndarray
    total_in_dbm: float
    total_out_dbm: float
    config_class: ConfigClass
    tilt_db: float = 0.0
    voa_in_dbm: float | None = None
    voa_out_dbm: float | None = None
    voa_attn_db: float | None = None
    # not serialized; lets validate_record check gain_target_db against the device's list
    gain_settings: tuple = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "config_class", ConfigClass(self.config_class))
        object.__setattr__(self, "p_in", _frozen(self.p_in))
        object.__setattr__(self, "p_out", _frozen(self.p_out))
        object.__setattr__(self, "mask", _frozen(self.mask, bool))

    @property
    def gain(self) -> np.ndarray:
        return compute_gain(self.p_in, self.p_out, self.mask)

    @property
    def n_active(self) -> int:
        return int(self.mask.sum())

    def __eq__(self, other):
        if not isinstance(other, MeasurementRecord):
            return NotImplemented
        scalars = ("device_id", "kind", "direction", "gain_target_db", "total_in_dbm", "total_out_dbm",
                   "config_class", "tilt_db", "voa_in_dbm", "voa_out_dbm", "voa_attn_db")
        return (all(getattr(self, s) == getattr(other, s) for s in scalars)
                and np.array_equal(self.p_in, other.p_in)
                and np.array_equal(self.p_out, other.p_out)
                and np.array_equal(self.mask, other.mask))

    __hash__ = None


VOA_FIELDS = ("voa_in_dbm", "voa_out_dbm", "voa_attn_db")


def validate_record(r: MeasurementRecord, gain_settings=None) -> list[str]:
    """Return the list of invariant violations (empty when the record is well formed)."""
    out = []
    voa = [getattr(r, f) for f in VOA_FIELDS]
    if r.kind.has_voa:
        if any(v is None for v in voa):
            out.append("voa_missing")
    elif any(v is not None for v in voa):
        out.append("voa_on_ila")
    mask = np.asarray(r.mask)
    if mask.shape != (N_CHANNELS,):
        out.append("mask_length")
    elif not mask.any():
        out.append("empty_mask")
    if np.shape(r.p_in) != (N_CHANNELS,) or np.shape(r.p_out) != (N_CHANNELS,):
        out.append("spectrum_length")
    elif mask.shape == (N_CHANNELS,) and not (np.all(np.isfinite(r.p_in[mask]))
                                              and np.all(np.isfinite(r.p_out[mask]))):
        out.append("non_finite_power")
    settings = gain_settings if gain_settings is not None else r.gain_settings
    if settings and r.gain_target_db not in tuple(settings):
        out.append("gain_not_in_settings")
    return out
