"""Degradations: sampling masks, deadlines, Gaussian/impulse/stripe noise.

Every function is pure (the input is never modified) and draws all of its
randomness from the ``rng`` it is handed, so a fixed seed replays bit-exactly.

Two meanings of "deadline" coexist. :func:`deadline_mask` produces a known
observation mask for inpainting. Inside :func:`apply_mixed` deadlines are
zeroed columns whose location the denoiser is not told.
"""

from dataclasses import dataclass

import numpy as np


def _round_half_up(v):
    return int(np.floor(v + 0.5))


def _check_fraction(name, value):
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


def random_mask(rng, shape, sr):
    """Each entry observed independently with probability ``sr``."""
    if not 0.0 < sr <= 1.0:
        raise ValueError(f"sampling rate must lie in (0, 1], got {sr}")
    return rng.random(size=tuple(shape)) < sr


def deadline_mask(rng, shape, columns):
    """Mask with ``columns`` whole columns missing in every channel."""
    h, w, c = shape
    if not 0 <= columns <= w:
        raise ValueError(f"columns must lie in [0, {w}], got {columns}")
    mask = np.ones(shape, dtype=bool)
    lost = rng.choice(w, size=columns, replace=False)
    mask[:, lost, :] = False
    return mask


def add_gaussian(rng, x, sigma):
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return x + sigma * rng.standard_normal(x.shape)


def add_impulse(rng, x, ratio):
    """Salt-and-pepper: exactly round(ratio * size) entries set to 0 or 1."""
    _check_fraction("ratio", ratio)
    out = np.array(x, dtype=np.float64, copy=True)
    n = _round_half_up(ratio * out.size)
    idx = rng.permutation(out.size)[:n]
    out.reshape(-1)[idx] = (rng.random(n) < 0.5).astype(np.float64)
    return out


def _pick_bands(rng, channels, fraction):
    n = _round_half_up(fraction * channels)
    return np.sort(rng.choice(channels, size=n, replace=False))


def add_stripes(rng, x, bands_fraction, stripes_per_band, magnitude_range=(-0.25, 0.25)):
    """Constant additive offsets down random columns of randomly chosen bands."""
    _check_fraction("bands_fraction", bands_fraction)
    lo, hi = magnitude_range
    if lo > hi or stripes_per_band < 0:
        raise ValueError("invalid stripe parameters")
    out = np.array(x, dtype=np.float64, copy=True)
    w = out.shape[1]
    for band in _pick_bands(rng, out.shape[2], bands_fraction):
        cols = rng.choice(w, size=min(stripes_per_band, w), replace=False)
        out[:, cols, band] += rng.uniform(lo, hi, size=len(cols))
    return out


@dataclass(frozen=True)
class MixedNoisePreset:
    gaussian_sigma_range: tuple = (0.0, 0.0)
    impulse_ratio: float = 0.0
    affected_band_fraction: float = 0.0
    stripes_per_band: int = 0
    deadlines_per_band: int = 0
    stripe_range: tuple = (-0.25, 0.25)

    def __post_init__(self):
        lo, hi = self.gaussian_sigma_range
        if not 0 <= lo <= hi:
            raise ValueError("gaussian_sigma_range must be ordered and nonnegative")
        _check_fraction("impulse_ratio", self.impulse_ratio)
        _check_fraction("affected_band_fraction", self.affected_band_fraction)
        if self.stripes_per_band < 0 or self.deadlines_per_band < 0:
            raise ValueError("stripe and deadline counts must be nonnegative")
        if self.stripe_range[0] > self.stripe_range[1]:
            raise ValueError("stripe_range must be ordered")


WEAK = MixedNoisePreset(
    gaussian_sigma_range=(0.1, 0.4),
    impulse_ratio=0.1,
    affected_band_fraction=0.2,
    stripes_per_band=35,
    deadlines_per_band=35,
)
STRONG = MixedNoisePreset(
    gaussian_sigma_range=(0.1, 0.4),
    impulse_ratio=0.25,
    affected_band_fraction=0.5,
    stripes_per_band=35,
    deadlines_per_band=35,
)
PRESETS = {"weak": WEAK, "strong": STRONG}


def apply_mixed(rng, x, preset):
    """Composite noise, applied in this fixed order.

    1. per-band Gaussian with sigma ~ U(gaussian_sigma_range)
    2. salt-and-pepper on ``impulse_ratio`` of all entries
    3. on round(affected_band_fraction * C) bands: stripes, then zeroed
       deadline columns (at most W of each per band)
    """
    if isinstance(preset, str):
        preset = PRESETS[preset]
    out = np.array(x, dtype=np.float64, copy=True)
    h, w, c = out.shape
    lo, hi = preset.gaussian_sigma_range
    sigmas = rng.uniform(lo, hi, size=c)
    out = out + sigmas * rng.standard_normal(out.shape)
    out = add_impulse(rng, out, preset.impulse_ratio)
    for band in _pick_bands(rng, c, preset.affected_band_fraction):
        cols = rng.choice(w, size=min(preset.stripes_per_band, w), replace=False)
        out[:, cols, band] += rng.uniform(*preset.stripe_range, size=len(cols))
        dead = rng.choice(w, size=min(preset.deadlines_per_band, w), replace=False)
        out[:, dead, band] = 0.0
    return out


def stack_temporal(volumes):
    """Concatenate acquisitions along the channel axis, in order."""
    volumes = [np.asarray(v, dtype=np.float64) for v in volumes]
    if not volumes:
        raise ValueError("need at least one volume")
    h, w = volumes[0].shape[:2]
    for v in volumes:
        if v.ndim != 3 or v.shape[:2] != (h, w):
            raise ValueError(f"spatial size mismatch: {v.shape[:2]} vs {(h, w)}")
    return np.concatenate(volumes, axis=2)
