import math

import numpy as np
import pytest

from ngr import metrics
from ngr.tensor import make_rng


def test_psnr_values():
    ref = np.zeros((8, 8, 3))
    assert metrics.psnr(ref + 0.1, ref) == pytest.approx(20.0)
    assert metrics.psnr(ref, ref) == 100.0
    assert metrics.psnr(np.zeros((4, 4, 2)), np.ones((4, 4, 2))) == 0.0
    with pytest.raises(ValueError):
        metrics.psnr(ref, ref[:, :, :2])


def test_psnr_is_mean_over_bands():
    ref = np.zeros((4, 4, 2))
    x = ref.copy()
    x[:, :, 0] = 0.1  # band 0 at 20 dB, band 1 capped
    assert metrics.psnr(x, ref) == pytest.approx(60.0)


def test_psnr_decreases_with_noise():
    rng = make_rng(0)
    ref = rng.random((32, 32, 3))
    values = [metrics.psnr(ref + s * rng.standard_normal(ref.shape), ref) for s in (0.01, 0.05, 0.1)]
    assert values[0] > values[1] > values[2]


def test_ssim_identity_and_constants():
    x = make_rng(1).random((16, 16, 2))
    assert metrics.ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    a = np.full((16, 16, 1), 0.3)
    b = np.full((16, 16, 1), 0.7)
    closed = (2 * 0.21 + 1e-4) / (0.09 + 0.49 + 1e-4)
    assert metrics.ssim(a, b) == pytest.approx(closed, abs=1e-12)
    assert abs(metrics.ssim(a, b) - 0.7242) < 1e-3
    with pytest.raises(ValueError):
        metrics.ssim(np.zeros((10, 16, 1)), np.zeros((10, 16, 1)))


def direct_ssim(x, y):
    """Window-by-window SSIM with explicit sums over an 11x11 Gaussian window."""
    r = np.arange(11) - 5
    g1 = np.exp(-(r**2) / (2 * 1.5**2))
    w = np.outer(g1, g1)
    w /= w.sum()
    c1, c2 = 0.01**2, 0.03**2
    h, wd, c = x.shape
    bands = []
    for b in range(c):
        vals = []
        for i in range(h - 10):
            for j in range(wd - 10):
                px = x[i:i + 11, j:j + 11, b]
                py = y[i:i + 11, j:j + 11, b]
                mx = np.sum(w * px)
                my = np.sum(w * py)
                vx = np.sum(w * (px - mx) ** 2)
                vy = np.sum(w * (py - my) ** 2)
                cov = np.sum(w * (px - mx) * (py - my))
                vals.append((2 * mx * my + c1) * (2 * cov + c2) / ((mx**2 + my**2 + c1) * (vx + vy + c2)))
        bands.append(np.mean(vals))
    return float(np.mean(bands))


def test_ssim_matches_direct_summation():
    rng = make_rng(2)
    ref = rng.random((20, 17, 2))
    x = np.clip(ref + 0.1 * rng.standard_normal(ref.shape), 0, 1)
    assert abs(metrics.ssim(x, ref) - direct_ssim(x, ref)) < 1e-6


def test_sam():
    rng = make_rng(3)
    x = rng.random((5, 5, 4)) + 0.1
    assert metrics.sam(x, x) == 0.0
    assert metrics.sam(2 * x, x) == pytest.approx(0.0, abs=1e-6)
    a = np.zeros((3, 3, 2))
    a[:, :, 0] = 1
    b = np.zeros((3, 3, 2))
    b[:, :, 1] = 1
    assert metrics.sam(a, b) == pytest.approx(90.0)
    scale = rng.random((5, 5, 1)) + 0.5
    assert metrics.sam(x * scale, x) == pytest.approx(0.0, abs=1e-6)
    z = x.copy()
    z[0, 0] = 0
    _, skipped = metrics.sam(z, x, return_skipped=True)
    assert skipped == 1
    with pytest.raises(ValueError):
        metrics.sam(x[:, :, :1], x[:, :, :1])


def test_ergas():
    ref = np.full((10, 10, 1), 0.5)
    x = ref + 0.05
    assert metrics.ergas(x, ref) == pytest.approx(10.0)
    assert metrics.ergas(ref, ref) == 0.0
    with pytest.raises(ValueError):
        metrics.ergas(ref, np.zeros_like(ref))


def test_ergas_matches_brute_force():
    rng = make_rng(4)
    ref = rng.random((6, 5, 3)) + 0.1
    x = ref + 0.05 * rng.standard_normal(ref.shape)
    total = 0.0
    for b in range(3):
        se = 0.0
        mean = 0.0
        for i in range(6):
            for j in range(5):
                se += (x[i, j, b] - ref[i, j, b]) ** 2
                mean += ref[i, j, b]
        total += (se / 30) / (mean / 30) ** 2
    assert abs(metrics.ergas(x, ref) - 100 * math.sqrt(total / 3)) < 1e-10


def test_evaluate_report():
    ref = make_rng(5).random((12, 12, 3))
    rep = metrics.evaluate(ref, ref)
    assert rep.psnr == 100.0 and rep.ssim == pytest.approx(1.0)
    assert rep.sam == pytest.approx(0.0, abs=1e-6) and rep.ergas == 0.0
    assert rep.csv_row().count(",") == 3
    gray = metrics.evaluate(ref[:, :, :1], ref[:, :, :1])
    assert gray.sam is None and gray.csv_row().endswith(",,")
