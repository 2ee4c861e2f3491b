"""Deterministic synthetic EDFA used as ground truth in place of testbed hardware.

A device's gain at target setting ``g0`` and channel index ``i`` (``u = (i-1)/94``) is::

    g0 + s(g0) * sum_k a_k sin(2 pi f_k u + phi_k)      ripple
       + tilt * (u - 1/2)                               linear tilt
       + loading_sens * (1 - n_active/95) * cos(pi u)   loading-dependent shape

with ``s(g0) = 1 + gain_sens * (g0 - 18)``.  Gaussian measurement noise is added by
:func:`simulate_measurement` only.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .dataset import IlaRawRecord
from .errors import EmptyMask, UnsupportedGain
from .grid import (FLOOR_DBM, N_CHANNELS, ConfigClass, Direction, Kind, MeasurementRecord,
                   as_mask, dbm_to_mw, mw_to_dbm)
from .loading import gen_fixed_configs, gen_goalpost_configs, gen_random_configs

N_RIPPLE_TERMS = 4
GAIN_PIVOT_DB = 18.0

RIPPLE_AMP_MAX = {Kind.BOOSTER: 0.4, Kind.PREAMP: 0.6, Kind.ILA: 0.8}
LOADING_SENS = {Kind.BOOSTER: 0.5, Kind.PREAMP: 0.6, Kind.ILA: 0.8}
MEAS_NOISE_DB = {Kind.BOOSTER: 0.02, Kind.PREAMP: 0.02, Kind.ILA: 0.05}
GAIN_SETTINGS = {Kind.BOOSTER: (15.0, 20.0, 25.0), Kind.PREAMP: (15.0, 20.0, 25.0),
                 Kind.ILA: (10.0, 15.0, 20.0)}
_KIND_CODE = {Kind.BOOSTER: 0, Kind.PREAMP: 1, Kind.ILA: 2}

_U = np.arange(N_CHANNELS) / (N_CHANNELS - 1)


class GainMode(str, enum.Enum):
    HIGH = "High"
    LOW = "Low"


@dataclass(frozen=True)
class DeviceProfile:
    seed: int
    kind: Kind
    ripple_amp: tuple
    ripple_freq: tuple
    ripple_phase: tuple
    ripple_amp_max: float
    tilt_coeff: float
    loading_sens: float
    gain_sens: float
    gain_settings: tuple
    gain_mode: GainMode
    voa_max_attn_db: float
    voa_stage1_gain_db: float
    meas_noise_db: float
    direction: Direction = Direction.NA

    @property
    def device_id(self) -> str:
        return f"{self.kind.value}-{self.seed}"

    def ripple(self, g0: float) -> np.ndarray:
        s = 1.0 + self.gain_sens * (g0 - GAIN_PIVOT_DB)
        terms = np.zeros(N_CHANNELS)
        for a, f, phi in zip(self.ripple_amp, self.ripple_freq, self.ripple_phase):
            terms += a * np.sin(2.0 * np.pi * f * _U + phi)
        return s * terms

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["kind"] = self.kind.value
        d["gain_mode"] = self.gain_mode.value
        d["direction"] = self.direction.value
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def device_from_seed(seed: int, kind, **overrides) -> DeviceProfile:
    """Draw a reproducible device; identical ``(seed, kind)`` gives an identical profile."""
    kind = Kind(kind)
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, _KIND_CODE[kind]])
    amp_max = RIPPLE_AMP_MAX[kind]
    # sum of amplitudes never exceeds amp_max, so |ripple| <= amp_max at the pivot setting
    amps = amp_max / N_RIPPLE_TERMS * rng.uniform(0.4, 1.0, N_RIPPLE_TERMS)
    freqs = rng.integers(1, 6, N_RIPPLE_TERMS)
    phases = rng.uniform(0.0, 2.0 * np.pi, N_RIPPLE_TERMS)
    params = dict(
        seed=int(seed),
        kind=kind,
        ripple_amp=tuple(float(a) for a in amps),
        ripple_freq=tuple(int(f) for f in freqs),
        ripple_phase=tuple(float(p) for p in phases),
        ripple_amp_max=amp_max,
        tilt_coeff=float(rng.uniform(-0.3, 0.3)),
        loading_sens=float(LOADING_SENS[kind] * rng.uniform(0.9, 1.1)),
        gain_sens=float(rng.uniform(0.0, 0.03)),
        gain_settings=GAIN_SETTINGS[kind],
        gain_mode=GainMode.LOW if kind is Kind.ILA else GainMode.HIGH,
        voa_max_attn_db=0.0 if kind is Kind.ILA else 15.0,
        voa_stage1_gain_db=0.0 if kind is Kind.ILA else float(rng.uniform(10.0, 14.0)),
        meas_noise_db=MEAS_NOISE_DB[kind],
        direction=Direction.AB if kind is Kind.ILA else Direction.NA,
    )
    params.update(overrides)
    if "gain_settings" in overrides:
        params["gain_settings"] = tuple(float(g) for g in overrides["gain_settings"])
    return DeviceProfile(**params)


def flat_device(kind=Kind.BOOSTER, seed=0, **overrides) -> DeviceProfile:
    """A device with no ripple, tilt or loading dependence (gain equals the target)."""
    base = dict(ripple_amp=(0.0,) * N_RIPPLE_TERMS, tilt_coeff=0.0, loading_sens=0.0,
                gain_sens=0.0)
    base.update(overrides)
    return device_from_seed(seed, kind, **base)


def _check_gain(profile: DeviceProfile, g0: float):
    if float(g0) not in profile.gain_settings:
        raise UnsupportedGain(f"{g0} dB is not a gain setting of {profile.device_id} "
                              f"{profile.gain_settings}")


def gain_curve(profile: DeviceProfile, g0: float, n_active: int) -> np.ndarray:
    """Noise-free gain on all 95 channels for a load of ``n_active`` channels."""
    _check_gain(profile, g0)
    loading = profile.loading_sens * (1.0 - n_active / N_CHANNELS) * np.cos(np.pi * _U)
    return g0 + profile.ripple(g0) + profile.tilt_coeff * (_U - 0.5) + loading


def true_gain(profile: DeviceProfile, g0: float, mask, p_in=None) -> np.ndarray:
    """Noise-free gain spectrum; NaN on inactive channels.

    ``p_in`` is accepted for interface symmetry; the synthetic device has no input-power
    dependence beyond the channel count.
    """
    mask = as_mask(mask)
    if not mask.any():
        raise EmptyMask("true_gain on an empty mask")
    g = np.full(N_CHANNELS, np.nan)
    g[mask] = gain_curve(profile, g0, int(mask.sum()))[mask]
    return g


def voa_telemetry(profile: DeviceProfile, g0: float, total_in_dbm: float):
    """(voa_in, voa_out, attn) from the clamped headroom rule."""
    attn = float(np.clip(max(profile.gain_settings) + 5.0 - g0, 0.0, profile.voa_max_attn_db))
    voa_in = total_in_dbm + profile.voa_stage1_gain_db
    return voa_in, voa_in - attn, attn


def simulate_measurement(profile: DeviceProfile, g0: float, mask, launch_dbm_per_ch,
                         rng: np.random.Generator,
                         config_class=ConfigClass.RANDOM) -> MeasurementRecord:
    mask = as_mask(mask)
    if not mask.any():
        raise EmptyMask("cannot measure an empty channel load")
    g = gain_curve(profile, g0, int(mask.sum()))
    launch = np.broadcast_to(np.asarray(launch_dbm_per_ch, dtype=np.float64), (N_CHANNELS,))
    # always draw 95 noise samples so the stream position does not depend on the mask
    noise = rng.normal(0.0, 1.0, N_CHANNELS) * profile.meas_noise_db
    p_in = np.where(mask, launch, FLOOR_DBM)
    p_out = np.where(mask, launch + g + noise, FLOOR_DBM)
    total_in = mw_to_dbm(np.sum(dbm_to_mw(p_in[mask])))
    total_out = mw_to_dbm(np.sum(dbm_to_mw(p_out[mask])))
    voa = dict(voa_in_dbm=None, voa_out_dbm=None, voa_attn_db=None)
    if profile.kind.has_voa:
        vin, vout, attn = voa_telemetry(profile, g0, total_in)
        voa = dict(voa_in_dbm=vin, voa_out_dbm=vout, voa_attn_db=attn)
    return MeasurementRecord(
        device_id=profile.device_id, kind=profile.kind, direction=profile.direction,
        gain_target_db=float(g0), p_in=p_in, p_out=p_out, mask=mask,
        total_in_dbm=float(total_in), total_out_dbm=float(total_out),
        config_class=ConfigClass(config_class), gain_settings=profile.gain_settings, **voa)


@dataclass(frozen=True)
class CampaignConfig:
    """Records per gain setting for each loading class (defaults sum to 3,168)."""

    n_fixed: int = 388
    n_random: int = 1780
    n_goalpost: int = 1000
    launch_min_dbm: float = -24.0
    launch_max_dbm: float = -14.0
    launch_jitter_db: float = 0.1
    gains: tuple | None = field(default=None)

    @property
    def per_setting(self) -> int:
        return self.n_fixed + self.n_random + self.n_goalpost


def _launch(cfg: CampaignConfig, rng):
    level = rng.uniform(cfg.launch_min_dbm, cfg.launch_max_dbm)
    return level + cfg.launch_jitter_db * rng.normal(0.0, 1.0, N_CHANNELS)


def generate_campaign(profile: DeviceProfile, campaign_cfg: CampaignConfig | None = None,
                      rng: np.random.Generator | None = None) -> list[MeasurementRecord]:
    """Measurement campaign over every gain setting; Fixed masks cycle through the 194-mask family."""
    cfg = campaign_cfg or CampaignConfig()
    rng = rng if rng is not None else np.random.default_rng(profile.seed)
    gains = cfg.gains if cfg.gains is not None else profile.gain_settings
    fixed_family = gen_fixed_configs()
    records = []
    for g0 in gains:
        _check_gain(profile, g0)
        plan = [(fixed_family[i % len(fixed_family)], ConfigClass.FIXED) for i in range(cfg.n_fixed)]
        plan += [(m, ConfigClass.RANDOM) for m in gen_random_configs(cfg.n_random, rng)]
        plan += [(m, ConfigClass.GOALPOST) for m in gen_goalpost_configs(cfg.n_goalpost, rng)]
        for mask, cls in plan:
            records.append(simulate_measurement(profile, g0, mask, _launch(cfg, rng), rng, cls))
    return records


def ila_raw_capture(record: MeasurementRecord, rng: np.random.Generator,
                    span_loss_db=(2.0, 6.0), ase_fraction: float = 0.02) -> IlaRawRecord:
    """What the auxiliary ROADMs around an ILA would report for ``record``.

    Each OCM spectrum sits behind a span loss drawn from ``span_loss_db``; the auxiliary PMs
    also see a little out-of-band ASE.  The ILA's own PMs read the record totals, so
    renormalization recovers the record's per-channel powers.
    """
    mask = record.mask
    loss_in, loss_out = rng.uniform(*span_loss_db, size=2)
    aux_in = np.where(mask, record.p_in - loss_in, FLOOR_DBM)
    aux_out = np.where(mask, record.p_out + loss_out, FLOOR_DBM)
    ocm_in = float(np.sum(dbm_to_mw(aux_in[mask])))
    ocm_out = float(np.sum(dbm_to_mw(aux_out[mask])))
    return IlaRawRecord(
        aux_in_spectrum_dbm=aux_in, aux_out_spectrum_dbm=aux_out,
        p_in_aux_total=ocm_in * (1.0 + ase_fraction), p_out_aux_total=ocm_out * (1.0 + ase_fraction),
        p_in_ila_total=float(dbm_to_mw(record.total_in_dbm)),
        p_out_ila_total=float(dbm_to_mw(record.total_out_dbm)),
        mask=mask, gain_target_db=record.gain_target_db, device_id=record.device_id,
        direction=record.direction, config_class=record.config_class, tilt_db=record.tilt_db)
