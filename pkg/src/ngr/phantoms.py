"""Synthetic test volumes with known ground truth.

All share one geometry across channels (so the channel axis is strongly
correlated, as in RGB, video and spectral data) with per-channel intensities.
Values stay inside [0.05, 0.95].
"""

import numpy as np

from ngr.tensor import make_rng


def _shapes_layer(rng, h, w, count):
    yy, xx = np.mgrid[0:h, 0:w] / np.array([h, w])[:, None, None]
    layers = []
    for i in range(count):
        cy, cx = rng.uniform(0.15, 0.85, size=2)
        size = rng.uniform(0.08, 0.25)
        kind = i % 3
        if kind == 0:
            region = (yy - cy) ** 2 + (xx - cx) ** 2 < size**2
        elif kind == 1:
            aspect = rng.uniform(0.5, 1.5)
            region = (np.abs(yy - cy) < size) & (np.abs(xx - cx) < size * aspect)
        else:
            region = (yy - cy) > (xx - cx) * rng.uniform(-1.5, 1.5) + size * 0.5
            region &= np.abs(yy - cy) < size * 1.5
            region &= np.abs(xx - cx) < size * 1.5
        layers.append(region)
    return layers


def piecewise_constant(shape, seed=0, regions=6):
    """Flat background plus overlapping flat shapes."""
    h, w, c = shape
    rng = make_rng(seed)
    base = rng.uniform(0.3, 0.6, size=c)
    img = np.broadcast_to(base, (h, w, c)).copy()
    for region in _shapes_layer(rng, h, w, regions):
        img[region] = rng.uniform(0.1, 0.9, size=c)
    return np.clip(img, 0.05, 0.95)


def piecewise_smooth(shape, seed=0, regions=6):
    """Smooth shaded background and shapes, each with its own gentle ramp."""
    h, w, c = shape
    rng = make_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w] / np.array([h, w])[:, None, None]
    freq = rng.uniform(0.5, 1.5, size=2)
    phase = rng.uniform(0, 2 * np.pi, size=2)
    shade = 0.5 * (np.sin(2 * np.pi * freq[0] * yy + phase[0]) + np.cos(2 * np.pi * freq[1] * xx + phase[1]))
    base = rng.uniform(0.35, 0.6, size=c)
    amp = rng.uniform(0.08, 0.15, size=c)
    img = base + amp * shade[:, :, None]
    for region in _shapes_layer(rng, h, w, regions):
        level = rng.uniform(0.15, 0.85, size=c)
        ramp = rng.uniform(-0.3, 0.3, size=2)
        tilt = ramp[0] * (yy - 0.5) + ramp[1] * (xx - 0.5)
        img[region] = (level + tilt[:, :, None])[region]
    return np.clip(img, 0.05, 0.95)


def constant(shape, value=0.5):
    return np.full(shape, float(value))


SUITE = {
    "smooth0": lambda shape: piecewise_smooth(shape, seed=0),
    "smooth1": lambda shape: piecewise_smooth(shape, seed=1),
    "flat0": lambda shape: piecewise_constant(shape, seed=0),
}


def suite(shape, names=None):
    """``{name: volume}`` for the named synthetic images (all by default)."""
    names = list(SUITE) if names is None else names
    return {name: SUITE[name](shape) for name in names}
