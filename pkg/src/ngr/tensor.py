"""Dense H x W x C volumes: circular gradients, their adjoints and spectra, 3-D FFT.

A volume is a float64 ``numpy.ndarray`` of shape ``(height, width, channels)``.
Axis ``h`` is array axis 0 (rows), ``v`` is axis 1 (columns) and ``t`` is
axis 2 (channels/bands/frames). All differences are periodic, which is what
makes ``mu + sum_i lambda_i grad_i^T grad_i`` diagonal in the DFT basis.

Randomness goes through :func:`make_rng`, a ``numpy.random.Generator`` over
PCG64. Its streams are fixed by seed and identical across platforms.
"""

from enum import Enum

import numpy as np


class Axis(str, Enum):
    h = "h"
    v = "v"
    t = "t"

    @property
    def index(self):
        return _AXIS_INDEX[self]


_AXIS_INDEX = {Axis.h: 0, Axis.v: 1, Axis.t: 2}
AXES = (Axis.h, Axis.v, Axis.t)


def _axis(axis):
    if isinstance(axis, (int, np.integer)) and not isinstance(axis, Axis):
        if axis not in (0, 1, 2):
            raise ValueError(f"axis must be 0, 1 or 2, got {axis}")
        return int(axis)
    return Axis(axis).index


def as_volume(x):
    """Return ``x`` as a float64 array of shape (H, W, C); 2-D input gains C=1."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or min(x.shape) < 1:
        raise ValueError(f"expected a non-empty H x W x C volume, got shape {x.shape}")
    return x


def make_rng(seed):
    """PCG64 generator from an int or a tuple of ints (hashed by ``SeedSequence``)."""
    if isinstance(seed, (tuple, list)):
        return np.random.Generator(np.random.PCG64([int(s) for s in seed]))
    return np.random.Generator(np.random.PCG64(int(seed)))


def grad(x, axis):
    """Circular forward difference: ``out[k] = x[k+1 mod N] - x[k]``."""
    ax = _axis(axis)
    return np.roll(x, -1, axis=ax) - x


def grad_adjoint(g, axis):
    """Adjoint of :func:`grad`: ``out[k] = g[k-1 mod N] - g[k]``."""
    ax = _axis(axis)
    return np.roll(g, 1, axis=ax) - g


def grad_spectrum(n):
    """|DFT of the length-n circular forward difference|^2, i.e. 4 sin^2(pi k / n)."""
    if n < 1:
        raise ValueError("n must be positive")
    k = np.arange(n)
    return 4.0 * np.sin(np.pi * k / n) ** 2


def fft3(x):
    return np.fft.fftn(x, axes=(0, 1, 2))


def ifft3(z):
    return np.fft.ifftn(z, axes=(0, 1, 2)).real


def gradient_symbol(shape, weights):
    """Broadcastable ``sum_i w_i |F(grad_i)|^2`` for a volume of ``shape``.

    Returns an array of shape (H, W, C) only through broadcasting of three
    1-D spectra; callers add the screening term themselves.
    """
    h, w, c = shape
    wh, wv, wt = weights
    return (
        wh * grad_spectrum(h)[:, None, None]
        + wv * grad_spectrum(w)[None, :, None]
        + wt * grad_spectrum(c)[None, None, :]
    )


def screened_poisson_solve(rhs, mu, weights):
    """Solve ``(mu I + sum_i w_i grad_i^T grad_i) x = rhs`` exactly via the DFT."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    denom = mu + gradient_symbol(rhs.shape, weights)
    return ifft3(fft3(rhs) / denom)


def uniform(rng, shape, lo=0.0, hi=1.0):
    """I.i.d. samples in ``[lo, hi)``."""
    if not lo < hi:
        raise ValueError(f"need lo < hi, got lo={lo}, hi={hi}")
    return lo + (hi - lo) * rng.random(size=tuple(shape))
