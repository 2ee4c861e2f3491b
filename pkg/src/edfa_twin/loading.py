"""Channel-loading (mask) generators for the Fixed, Random and Goalpost classes."""
from __future__ import annotations

import numpy as np

from .grid import N_CHANNELS

# 1-based inclusive goalpost bands: short / medium / long wavelengths
GOALPOST_BANDS = ((1, 32), (33, 64), (65, 95))


def _mask(channels) -> np.ndarray:
    """Mask from 1-based channel numbers."""
    m = np.zeros(N_CHANNELS, dtype=bool)
    m[np.asarray(list(channels), dtype=int) - 1] = True
    return m


def gen_fixed_configs() -> list[np.ndarray]:
    """Full, lower/upper half, even/odd, every single channel and every adjacent pair (194 masks)."""
    idx = np.arange(1, N_CHANNELS + 1)
    masks = [
        np.ones(N_CHANNELS, dtype=bool),
        _mask(range(1, 48)),
        _mask(range(48, N_CHANNELS + 1)),
        _mask(idx[idx % 2 == 0]),
        _mask(idx[idx % 2 == 1]),
    ]
    masks += [_mask([i]) for i in idx]
    masks += [_mask([i, i + 1]) for i in idx[:-1]]
    return masks


def gen_random_configs(n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """``n`` masks with popcount uniform on [1, 95] and channels drawn without replacement."""
    out = []
    for _ in range(n):
        k = int(rng.integers(1, N_CHANNELS + 1))
        m = np.zeros(N_CHANNELS, dtype=bool)
        m[rng.choice(N_CHANNELS, size=k, replace=False)] = True
        out.append(m)
    return out


def goalpost_mask(counts) -> np.ndarray:
    """Activate ``counts[b]`` contiguous channels from the lower edge of each band."""
    m = np.zeros(N_CHANNELS, dtype=bool)
    for (lo, hi), k in zip(GOALPOST_BANDS, counts):
        if not 0 <= k <= hi - lo + 1:
            raise ValueError(f"band {lo}-{hi} cannot hold {k} channels")
        m[lo - 1:lo - 1 + k] = True
    return m


def gen_goalpost_configs(n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Balanced (same count per band) or unbalanced (not all counts equal) goalpost masks."""
    widths = [hi - lo + 1 for lo, hi in GOALPOST_BANDS]
    kmax = min(widths)
    out = []
    for _ in range(n):
        if rng.random() < 0.5:
            counts = [int(rng.integers(1, kmax + 1))] * 3
        else:
            while True:
                counts = [int(rng.integers(1, w + 1)) for w in widths]
                if len(set(counts)) > 1:
                    break
        out.append(goalpost_mask(counts))
    return out
