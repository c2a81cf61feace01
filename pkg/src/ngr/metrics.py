"""Full-reference quality metrics for (H, W, C) volumes with values in [0, 1].

PSNR is averaged over bands (MPSNR). That is a convention chosen here so
RGB, video and spectral results are aggregated the same way; published tables
may aggregate differently.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PSNR_CAP = 100.0
SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(x, ref):
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    if ref.ndim == 2:
        ref = ref[:, :, None]
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")
    return x, ref


def psnr(x, ref):
    """Mean over bands of 10 log10(1 / MSE_b), each band capped at 100 dB."""
    x, ref = _pair(x, ref)
    mse = np.mean((x - ref) ** 2, axis=(0, 1))
    with np.errstate(divide="ignore"):
        per_band = np.where(mse > 0, -10.0 * np.log10(np.maximum(mse, 1e-300)), PSNR_CAP)
    return float(np.mean(np.minimum(per_band, PSNR_CAP)))


def _gaussian_window():
    r = np.arange(SSIM_WIN) - SSIM_WIN // 2
    g = np.exp(-(r**2) / (2 * SSIM_SIGMA**2))
    return g / g.sum()


def _filter_valid(img, g):
    # separable 'valid' Gaussian correlation over the two spatial axes
    rows = sliding_window_view(img, len(g), axis=0) @ g
    return sliding_window_view(rows, len(g), axis=1) @ g


def ssim(x, ref):
    """Gaussian-window SSIM (11x11, sigma 1.5, dynamic range 1), mean over windows then bands."""
    x, ref = _pair(x, ref)
    if x.shape[0] < SSIM_WIN or x.shape[1] < SSIM_WIN:
        raise ValueError(f"SSIM needs spatial size >= {SSIM_WIN}, got {x.shape[:2]}")
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    g = _gaussian_window()
    mx = _filter_valid(x, g)
    my = _filter_valid(ref, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(ref * ref, g) - my * my
    sxy = _filter_valid(x * ref, g) - mx * my
    smap = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
    return float(np.mean(smap.mean(axis=(0, 1))))


def sam(x, ref, return_skipped=False):
    """Mean spectral angle in degrees; pixels where either spectrum is zero are skipped."""
    x, ref = _pair(x, ref)
    if x.shape[2] < 2:
        raise ValueError("SAM needs at least two channels")
    nx = np.linalg.norm(x, axis=2)
    nr = np.linalg.norm(ref, axis=2)
    valid = (nx > 0) & (nr > 0)
    skipped = int(valid.size - valid.sum())
    if not valid.any():
        angle = 0.0
    else:
        # angle between unit vectors u, v is 2 atan2(|u - v|, |u + v|); unlike
        # arccos of the cosine it is exact near 0
        u = x[valid] / nx[valid][:, None]
        v = ref[valid] / nr[valid][:, None]
        theta = 2.0 * np.arctan2(np.linalg.norm(u - v, axis=1), np.linalg.norm(u + v, axis=1))
        angle = float(np.degrees(np.mean(theta)))
    return (angle, skipped) if return_skipped else angle


def ergas(x, ref):
    """100 * sqrt(mean_b MSE_b / mean(ref_b)^2), scale ratio 1."""
    x, ref = _pair(x, ref)
    means = ref.mean(axis=(0, 1))
    if np.any(means == 0):
        raise ValueError("ERGAS undefined: a reference band has zero mean")
    mse = np.mean((x - ref) ** 2, axis=(0, 1))
    return float(100.0 * np.sqrt(np.mean(mse / means**2)))


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    sam: float | None = None
    ergas: float | None = None

    FIELDS = ("psnr", "ssim", "sam", "ergas")

    def csv_row(self):
        return ",".join("" if v is None else f"{v:.6f}" for v in (self.psnr, self.ssim, self.sam, self.ergas))


def evaluate(x, ref):
    x, ref = _pair(x, ref)
    multi = x.shape[2] >= 2
    return MetricReport(
        psnr=psnr(x, ref),
        ssim=ssim(x, ref),
        sam=sam(x, ref) if multi else None,
        ergas=ergas(x, ref) if multi else None,
    )
