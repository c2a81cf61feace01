"""Untrained gradient-prediction network with hand-written backpropagation.

The network maps a fixed random input volume to three gradient maps, one per
axis. The trunk is ``blocks`` layers of conv -> per-channel normalization ->
leaky ReLU (same padding), followed by three independent linear conv heads that
each emit an image-shaped volume.

Two trunk layouts exist. ``"hourglass"`` (the default) halves the resolution
with 2x2 average pooling after each of the first ``(blocks - 1) // 2`` layers,
and doubles it with nearest-neighbour upsampling before each of the last as
many, adding the matching encoder activation when ``skip`` is set. ``"flat"``
keeps full resolution and, with ``skip``, adds the first hidden activation to
the last.

Activations are channels-last. Convolutions are im2col + one matmul, so the
cost is dominated by BLAS and results are deterministic for a fixed thread
count. ``NetConfig.precision`` selects the arithmetic of the forward and
backward passes; parameters, gradients, outputs and Adam moments are float64
regardless.

Parameters are a plain ``dict`` of arrays in declaration order::

    trunk0.weight (k, k, in, width)   trunk0.bias (width,)
    ...
    head_h.weight (k, k, width, C)    head_h.bias (C,)
    head_v.* / head_t.*
"""

import struct
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ngr.errors import FormatError

HEADS = ("h", "v", "t")
NORM_EPS = 1e-5

CHECKPOINT_MAGIC = b"NGRW"
CHECKPOINT_VERSION = 1
_NORM_CODES = {"none": 0, "per-channel": 1}
_PRECISION_CODES = {"float64": 0, "float32": 1}
_ARCH_CODES = {"flat": 0, "hourglass": 1}
_CONFIG_STRUCT = struct.Struct("<IIIBdBIIBIBd")


@dataclass(frozen=True)
class NetConfig:
    blocks: int = 5
    width: int = 48
    kernel: int = 3
    skip: bool = True
    leaky_slope: float = 0.2
    normalization: str = "per-channel"
    # None means "same as the image being restored"
    input_channels: int | None = None
    output_channels: int | None = None
    # arithmetic of forward/backward only; params and gradients stay float64
    precision: str = "float32"
    # trunk block b convolves with dilation dilation_growth ** b (1 = plain)
    dilation_growth: int = 1
    # "flat": same-resolution stack; "hourglass": (blocks - 1) // 2 pooling levels
    # down, one or two bottom blocks, as many upsampling levels back with
    # additive skips
    architecture: str = "hourglass"
    # scale on the He-normal draw for the head weights
    head_gain: float = 0.01

    def __post_init__(self):
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError("kernel must be a positive odd integer")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ValueError("leaky_slope must lie in (0, 1)")
        if self.normalization not in _NORM_CODES:
            raise ValueError(f"normalization must be one of {sorted(_NORM_CODES)}")
        if self.precision not in _PRECISION_CODES:
            raise ValueError(f"precision must be one of {sorted(_PRECISION_CODES)}")
        if self.architecture not in _ARCH_CODES:
            raise ValueError(f"architecture must be one of {sorted(_ARCH_CODES)}")
        if self.head_gain < 0:
            raise ValueError("head_gain must be nonnegative")
        if self.dilation_growth < 1:
            raise ValueError("dilation_growth must be >= 1")
        for name in ("input_channels", "output_channels"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValueError(f"{name} must be positive")

    def resolved(self, channels):
        """Fill unset channel counts from the image channel count."""
        return replace(
            self,
            input_channels=self.input_channels or channels,
            output_channels=self.output_channels or channels,
        )

    @property
    def levels(self):
        return (self.blocks - 1) // 2 if self.architecture == "hourglass" else 0

    def dilation(self, block):
        return self.dilation_growth**block

    def _check_resolved(self):
        if self.input_channels is None or self.output_channels is None:
            raise ValueError("NetConfig channel counts unresolved; call cfg.resolved(C)")


def param_shapes(cfg):
    """Ordered mapping name -> shape for a resolved config."""
    cfg._check_resolved()
    k = cfg.kernel
    shapes = {}
    c_in = cfg.input_channels
    for b in range(cfg.blocks):
        shapes[f"trunk{b}.weight"] = (k, k, c_in, cfg.width)
        shapes[f"trunk{b}.bias"] = (cfg.width,)
        c_in = cfg.width
    for a in HEADS:
        shapes[f"head_{a}.weight"] = (k, k, cfg.width, cfg.output_channels)
        shapes[f"head_{a}.bias"] = (cfg.output_channels,)
    return shapes


def init_input(rng, shape, amplitude=0.1):
    """Fixed network input: uniform noise in ``[0, amplitude)``."""
    if not amplitude > 0:
        raise ValueError(f"amplitude must be positive, got {amplitude}")
    return amplitude * rng.random(size=tuple(shape))


def init_params(rng, cfg):
    """He-normal weights (variance 2 / fan_in), zero biases.

    Head weights are additionally scaled by ``cfg.head_gain``; the draw
    sequence does not depend on the gain.
    """
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
        else:
            fan_in = shape[0] * shape[1] * shape[2]
            std = np.sqrt(2.0 / fan_in)
            if name.startswith("head_"):
                std *= cfg.head_gain
            params[name] = rng.standard_normal(shape) * std
    return params


def zeros_like_params(params):
    return {name: np.zeros_like(p) for name, p in params.items()}


# --- layers -----------------------------------------------------------------


def _im2col(x, k, dilation=1):
    """(H, W, C) -> (H*W, k*k*C) patches, zero padded, ordered (dy, dx, c)."""
    h, w, c = x.shape
    p = dilation * (k // 2)
    span = dilation * (k - 1) + 1
    xp = np.pad(x, ((p, p), (p, p), (0, 0)))
    windows = sliding_window_view(xp, (span, span), axis=(0, 1))[..., ::dilation, ::dilation]
    return windows.transpose(0, 1, 3, 4, 2).reshape(h * w, k * k * c)


def _conv_input_grad(dz, weight, dilation=1):
    """Gradient w.r.t. a same-padded conv input: correlate with the flipped kernel."""
    k = weight.shape[0]
    flipped = weight[::-1, ::-1].transpose(0, 1, 3, 2).reshape(-1, weight.shape[2])
    h, w, _ = dz.shape
    return (_im2col(dz, k, dilation) @ flipped).reshape(h, w, weight.shape[2])


def _norm_forward(z):
    mean = z.mean(axis=(0, 1))
    var = z.var(axis=(0, 1))
    inv_std = 1.0 / np.sqrt(var + NORM_EPS)
    zhat = (z - mean) * inv_std
    return zhat, inv_std


def _norm_backward(dzhat, zhat, inv_std):
    n = zhat.shape[0] * zhat.shape[1]
    s1 = dzhat.sum(axis=(0, 1))
    s2 = (dzhat * zhat).sum(axis=(0, 1))
    return inv_std * (dzhat - s1 / n - zhat * (s2 / n))


@dataclass
class ForwardCache:
    """Intermediates of one forward pass, consumed by :func:`backward`."""

    cols: list = field(default_factory=list)
    normed: list = field(default_factory=list)
    inv_std: list = field(default_factory=list)
    head_cols: np.ndarray | None = None
    shape: tuple = ()
    # hourglass only: input shape of each upsampling step
    shapes: list = field(default_factory=list)


def _check_input(cfg, x):
    cfg._check_resolved()
    if x.ndim != 3 or x.shape[2] != cfg.input_channels:
        raise ValueError(
            f"network input must be H x W x {cfg.input_channels}, got shape {x.shape}"
        )


def _head_matrix(params, cfg, dtype):
    # the three heads share their input, so they run as one matmul
    mats = [params[f"head_{a}.weight"].reshape(-1, cfg.output_channels) for a in HEADS]
    return np.concatenate(mats, axis=1).astype(dtype, copy=False)


def _pool(a):
    """2x2 average pool; odd sizes are edge-padded first."""
    h, w, _ = a.shape
    if h % 2 or w % 2:
        a = np.pad(a, ((0, h % 2), (0, w % 2), (0, 0)), mode="edge")
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def _pool_backward(d, shape):
    h, w, _ = shape
    up = 0.25 * np.repeat(np.repeat(d, 2, axis=0), 2, axis=1)
    # fold the gradient of edge-padded copies back onto the edge they copied
    if h % 2:
        up[h - 1] += up[h]
        up = up[:h]
    if w % 2:
        up[:, w - 1] += up[:, w]
        up = up[:, :w]
    return up


def _upsample(a, shape):
    """Nearest-neighbour 2x upsample cropped to ``shape``."""
    return np.repeat(np.repeat(a, 2, axis=0), 2, axis=1)[: shape[0], : shape[1]]


def _upsample_backward(d, small_shape):
    hs, ws, c = small_shape
    full = np.zeros((2 * hs, 2 * ws, c), dtype=d.dtype)
    full[: d.shape[0], : d.shape[1]] = d
    return full.reshape(hs, 2, ws, 2, c).sum(axis=(1, 3))


def _block_forward(params, cfg, b, a, cache):
    dtype = a.dtype
    h, w, _ = a.shape
    cols = _im2col(a, cfg.kernel, cfg.dilation(b))
    wmat = params[f"trunk{b}.weight"].reshape(-1, cfg.width).astype(dtype, copy=False)
    z = cols @ wmat
    z += params[f"trunk{b}.bias"].astype(dtype, copy=False)
    z = z.reshape(h, w, cfg.width)
    if cfg.normalization == "per-channel":
        z, inv_std = _norm_forward(z)
    else:
        inv_std = None
    cache.cols.append(cols)
    cache.normed.append(z)
    cache.inv_std.append(inv_std)
    return np.where(z > 0, z, z * dtype.type(cfg.leaky_slope))


def _block_backward(params, cfg, b, da, cache, grads, need_input_grad):
    z = cache.normed[b]
    h, w, _ = z.shape
    dz = np.where(z > 0, da, da * z.dtype.type(cfg.leaky_slope))
    if cfg.normalization == "per-channel":
        dz = _norm_backward(dz, z, cache.inv_std[b])
    dflat = dz.reshape(h * w, cfg.width)
    wshape = params[f"trunk{b}.weight"].shape
    grads[f"trunk{b}.weight"] = (cache.cols[b].T @ dflat).astype(np.float64).reshape(wshape)
    if cfg.normalization == "per-channel":
        # the normalization removes any per-channel shift, so this gradient is
        # exactly zero; the summed roundoff would let Adam random-walk the bias
        grads[f"trunk{b}.bias"] = np.zeros(cfg.width)
    else:
        grads[f"trunk{b}.bias"] = dflat.sum(axis=0, dtype=np.float64)
    if not need_input_grad:
        return None
    weight = params[f"trunk{b}.weight"].astype(z.dtype, copy=False)
    return _conv_input_grad(dz, weight, cfg.dilation(b))


def _trunk_forward(params, cfg, a, cache):
    if cfg.architecture == "flat":
        first = None
        for b in range(cfg.blocks):
            a = _block_forward(params, cfg, b, a, cache)
            if b == 0:
                first = a
        if cfg.skip and cfg.blocks > 1:
            a = a + first
        return a

    levels = cfg.levels
    first_up = cfg.blocks - levels
    skips = []
    for b in range(cfg.blocks):
        if b >= first_up:
            skip = skips[cfg.blocks - 1 - b]
            cache.shapes.append(a.shape)
            a = _upsample(a, skip.shape)
            if cfg.skip:
                a = a + skip
        a = _block_forward(params, cfg, b, a, cache)
        if b < levels:
            skips.append(a)
            a = _pool(a)
    return a


def _trunk_backward(params, cfg, da, cache, grads):
    if cfg.architecture == "flat":
        dfirst = da if (cfg.skip and cfg.blocks > 1) else None
        for b in reversed(range(cfg.blocks)):
            if b == 0 and dfirst is not None:
                da = da + dfirst
            da = _block_backward(params, cfg, b, da, cache, grads, b > 0)
        return

    levels = cfg.levels
    first_up = cfg.blocks - levels
    dskips = [None] * levels
    for b in reversed(range(cfg.blocks)):
        if b < levels:
            da = _pool_backward(da, cache.normed[b].shape)
            if dskips[b] is not None:
                da = da + dskips[b]
        da = _block_backward(params, cfg, b, da, cache, grads, b > 0)
        if b >= first_up:
            if cfg.skip:
                dskips[cfg.blocks - 1 - b] = da
            da = _upsample_backward(da, cache.shapes[b - first_up])


def forward_cached(params, cfg, x):
    """Forward pass returning ``((g_h, g_v, g_t), cache)``."""
    _check_input(cfg, x)
    dtype = np.dtype(cfg.precision)
    h, w, _ = x.shape
    cache = ForwardCache(shape=(h, w))
    a = _trunk_forward(params, cfg, x.astype(dtype, copy=False), cache)

    head_cols = _im2col(a, cfg.kernel)
    cache.head_cols = head_cols
    out = (head_cols @ _head_matrix(params, cfg, dtype)).astype(np.float64)
    c = cfg.output_channels
    triple = tuple(
        (out[:, i * c:(i + 1) * c] + params[f"head_{a}.bias"]).reshape(h, w, c)
        for i, a in enumerate(HEADS)
    )
    return triple, cache


def forward(params, cfg, x):
    """Predict the three gradient maps for the fixed input ``x``."""
    return forward_cached(params, cfg, x)[0]


def backward(params, cfg, cache, dtriple):
    """Reverse-mode gradients given d(loss)/d(output) for each head."""
    dtype = np.dtype(cfg.precision)
    h, w = cache.shape
    c = cfg.output_channels
    grads = {}

    dout = np.concatenate([d.reshape(h * w, c) for d in dtriple], axis=1)
    dout_lp = dout.astype(dtype, copy=False)
    dwheads = (cache.head_cols.T @ dout_lp).astype(np.float64)
    for i, a in enumerate(HEADS):
        wshape = params[f"head_{a}.weight"].shape
        grads[f"head_{a}.weight"] = dwheads[:, i * c:(i + 1) * c].reshape(wshape)
        grads[f"head_{a}.bias"] = dout[:, i * c:(i + 1) * c].sum(axis=0)
    heads = np.concatenate([params[f"head_{a}.weight"] for a in HEADS], axis=3)
    da = _conv_input_grad(dout_lp.reshape(h, w, 3 * c), heads.astype(dtype, copy=False))
    _trunk_backward(params, cfg, da, cache, grads)
    return {name: grads[name] for name in params}


def _check_weights(weights):
    weights = tuple(float(v) for v in weights)
    if len(weights) != 3:
        raise ValueError("need exactly three axis weights")
    if any(v < 0 for v in weights):
        raise ValueError(f"axis weights must be nonnegative, got {weights}")
    return weights


def loss_from_prediction(triple, target, weights):
    weights = _check_weights(weights)
    return sum(0.5 * lam * float(np.sum((t - p) ** 2)) for lam, t, p in zip(weights, target, triple))


def loss_and_grad(params, cfg, x, target, weights, cached=None):
    """Weighted gradient-matching loss and its exact parameter gradients.

    ``loss = sum_i weights[i] / 2 * ||target[i] - f_i(x)||^2``.
    ``cached`` may carry ``(triple, cache)`` from a prior forward pass with
    the same ``params``.
    """
    weights = _check_weights(weights)
    triple, cache = cached if cached is not None else forward_cached(params, cfg, x)
    for t, p in zip(target, triple):
        if t.shape != p.shape:
            raise ValueError(f"target shape {t.shape} does not match prediction {p.shape}")
    loss = loss_from_prediction(triple, target, weights)
    dtriple = [lam * (p - t) for lam, t, p in zip(weights, target, triple)]
    return loss, backward(params, cfg, cache, dtriple)


# --- Adam -------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict | None = None
    v: dict | None = None


def adam_step(params, grads, state):
    """One bias-corrected Adam update. Returns new ``(params, state)``."""
    m = state.m if state.m is not None else zeros_like_params(params)
    v = state.v if state.v is not None else zeros_like_params(params)
    t = state.t + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        mi = state.beta1 * m[name] + (1.0 - state.beta1) * g
        vi = state.beta2 * v[name] + (1.0 - state.beta2) * (g * g)
        new_params[name] = p - state.lr * (mi / bc1) / (np.sqrt(vi / bc2) + state.eps)
        new_m[name] = mi
        new_v[name] = vi
    return new_params, replace(state, t=t, m=new_m, v=new_v)


# --- checkpoints ------------------------------------------------------------


def _pack_config(cfg):
    cfg._check_resolved()
    return _CONFIG_STRUCT.pack(
        cfg.blocks,
        cfg.width,
        cfg.kernel,
        int(cfg.skip),
        cfg.leaky_slope,
        _NORM_CODES[cfg.normalization],
        cfg.input_channels,
        cfg.output_channels,
        _PRECISION_CODES[cfg.precision],
        cfg.dilation_growth,
        _ARCH_CODES[cfg.architecture],
        cfg.head_gain,
    )


def _unpack_config(raw):
    (blocks, width, kernel, skip, slope, norm, c_in, c_out, prec, growth, arch,
     head_gain) = _CONFIG_STRUCT.unpack(raw)
    norms = {v: k for k, v in _NORM_CODES.items()}
    precisions = {v: k for k, v in _PRECISION_CODES.items()}
    archs = {v: k for k, v in _ARCH_CODES.items()}
    if norm not in norms or prec not in precisions or arch not in archs or skip not in (0, 1):
        raise FormatError("corrupt network config in checkpoint header")
    try:
        return NetConfig(
            blocks, width, kernel, bool(skip), slope, norms[norm], c_in, c_out,
            precisions[prec], growth, archs[arch], head_gain,
        )
    except ValueError as exc:
        raise FormatError(f"invalid network config in checkpoint: {exc}") from exc


def save_params(params, cfg, path):
    shapes = param_shapes(cfg)
    if list(shapes) != list(params):
        raise ValueError("params do not match config")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(_pack_config(cfg))
        for name, shape in shapes.items():
            arr = np.asarray(params[name], dtype="<f8")
            if arr.shape != shape:
                raise ValueError(f"{name}: shape {arr.shape} != {shape}")
            f.write(np.ascontiguousarray(arr).tobytes())


def read_checkpoint(path):
    """Return ``(cfg, params)`` stored at ``path``."""
    with open(path, "rb") as f:
        raw = f.read()
    head = 8 + _CONFIG_STRUCT.size
    if len(raw) < head or raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a network checkpoint")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    cfg = _unpack_config(raw[8:head])
    shapes = param_shapes(cfg)
    expected = head + 8 * sum(int(np.prod(s)) for s in shapes.values())
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    params = {}
    offset = head
    for name, shape in shapes.items():
        n = int(np.prod(shape))
        params[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(shape).astype(np.float64)
        offset += 8 * n
    if not all(np.isfinite(p).all() for p in params.values()):
        raise FormatError(f"{path}: non-finite parameter values")
    return cfg, params


def load_params(path, cfg):
    """Load parameters, refusing a checkpoint written for a different architecture."""
    stored, params = read_checkpoint(path)
    if stored != cfg:
        raise FormatError(f"{path}: checkpoint config {stored} does not match {cfg}")
    return params
