"""Persistence: PNG images, raw tensor files, masks, config files, CSV.

Tensor file layout (all little-endian)::

    b"NGRT" | u32 version | u32 H | u32 W | u32 C | C planes of H*W float32, row-major

Volumes are float64 in memory and float32 on disk; reading a file and writing
it back reproduces it byte for byte.
"""

import csv
import dataclasses
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from ngr.baselines import TvConfig
from ngr.errors import ConfigError, FormatError
from ngr.net import NetConfig
from ngr.solver import DenoiseConfig, SolverConfig

TENSOR_MAGIC = b"NGRT"
TENSOR_VERSION = 1
_TENSOR_HEADER = struct.Struct("<4sIIII")
_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


# --- tensors ----------------------------------------------------------------


def write_tensor(x, path):
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        raise ValueError(f"expected an H x W x C volume, got shape {x.shape}")
    h, w, c = x.shape
    payload = np.ascontiguousarray(x.transpose(2, 0, 1), dtype="<f4")
    if not np.isfinite(payload).all():
        raise ValueError("refusing to write non-finite values")
    with open(path, "wb") as f:
        f.write(_TENSOR_HEADER.pack(TENSOR_MAGIC, TENSOR_VERSION, h, w, c))
        f.write(payload.tobytes())


def read_tensor(path):
    raw = Path(path).read_bytes()
    if len(raw) < _TENSOR_HEADER.size:
        raise FormatError(f"{path}: too short for a tensor header")
    magic, version, h, w, c = _TENSOR_HEADER.unpack_from(raw)
    if magic != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != TENSOR_VERSION:
        raise FormatError(f"{path}: unsupported tensor version {version}")
    if min(h, w, c) < 1:
        raise FormatError(f"{path}: empty dimensions {h}x{w}x{c}")
    expected = _TENSOR_HEADER.size + 4 * h * w * c
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    planes = np.frombuffer(raw, dtype="<f4", offset=_TENSOR_HEADER.size).reshape(c, h, w)
    if not np.isfinite(planes).all():
        raise FormatError(f"{path}: non-finite payload")
    return planes.transpose(1, 2, 0).astype(np.float64)


def write_mask(mask, path):
    write_tensor(np.asarray(mask, dtype=np.float64), path)


def read_mask(path):
    m = read_tensor(path)
    if not np.isin(m, (0.0, 1.0)).all():
        raise FormatError(f"{path}: mask entries must be 0 or 1")
    return m > 0.5


# --- PNG --------------------------------------------------------------------


def _png_header(path):
    with open(path, "rb") as f:
        head = f.read(33)
    if len(head) < 33 or head[:8] != _PNG_SIGNATURE or head[12:16] != b"IHDR":
        raise FormatError(f"{path}: not a PNG file")
    return head[24], head[25]


def read_png(path):
    """8-bit grayscale or RGB PNG -> (H, W, C) float64 in [0, 1]."""
    depth, color = _png_header(path)
    if depth != 8:
        raise FormatError(f"{path}: unsupported bit depth {depth} (need 8)")
    if color not in (0, 2):
        raise FormatError(f"{path}: unsupported color type {color} (need grayscale or RGB)")
    with Image.open(path) as im:
        arr = np.asarray(im, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr / 255.0


def write_png(x, path):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[2] not in (1, 3):
        raise ValueError(f"PNG output needs 1 or 3 channels, got shape {x.shape}")
    # inputs are nonnegative after the clamp, so floor(v + 0.5) rounds half away from zero
    q = np.floor(np.clip(x, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    mode = "L" if q.shape[2] == 1 else "RGB"
    Image.fromarray(q[:, :, 0] if mode == "L" else q, mode=mode).save(path, format="PNG")


def read_volume(path):
    """Dispatch on extension: ``.png`` images, anything else is a tensor file."""
    if str(path).lower().endswith(".png"):
        return read_png(path)
    return read_tensor(path)


def write_volume(x, path):
    if str(path).lower().endswith(".png"):
        write_png(x, path)
    else:
        write_tensor(x, path)


# --- config -----------------------------------------------------------------

_NET_PREFIX = "net_"
_KINDS = {"solver": SolverConfig, "denoise": DenoiseConfig, "tv": TvConfig}


def _config_keys(cls):
    keys = {f.name: f for f in dataclasses.fields(cls) if f.name != "net"}
    if any(f.name == "net" for f in dataclasses.fields(cls)):
        for f in dataclasses.fields(NetConfig):
            keys[_NET_PREFIX + f.name] = f
    return keys


def _defaults(cls, name):
    if name.startswith(_NET_PREFIX) and name not in {f.name for f in dataclasses.fields(cls)}:
        return getattr(NetConfig(), name[len(_NET_PREFIX):])
    return getattr(cls(), name)


def _parse_value(raw, default, field_type):
    text = raw.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if default is None and "int" in str(field_type):
        return None if text.lower() == "none" else int(text)
    return text


def _build(cls, values):
    net_values = {k[len(_NET_PREFIX):]: v for k, v in values.items() if k.startswith(_NET_PREFIX)}
    plain = {k: v for k, v in values.items() if not k.startswith(_NET_PREFIX)}
    if net_values:
        plain["net"] = NetConfig(**net_values)
    return cls(**plain)


def parse_config(text, kind="solver"):
    """Parse ``key = value`` lines (``#`` comments) into a config dataclass.

    Unknown keys and malformed or invalid values raise :class:`ConfigError`
    carrying the offending line number. Missing keys keep their defaults.
    Network settings use a ``net_`` prefix, e.g. ``net_width = 32``.
    """
    try:
        cls = _KINDS[kind]
    except KeyError:
        raise ConfigError(f"unknown config kind {kind!r}") from None
    keys = _config_keys(cls)
    values, lines = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {line.strip()!r}", line=lineno)
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in keys:
            raise ConfigError(f"unknown key {key!r}", line=lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        try:
            values[key] = _parse_value(raw, _defaults(cls, key), keys[key].type)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", line=lineno) from None
        lines[key] = lineno

    try:
        return _build(cls, values)
    except (ValueError, TypeError) as exc:
        # find the first line whose value breaks an invariant
        partial = {}
        for key in sorted(values, key=lines.get):
            partial[key] = values[key]
            try:
                _build(cls, partial)
            except (ValueError, TypeError) as inner:
                raise ConfigError(str(inner), line=lines[key]) from None
        raise ConfigError(str(exc)) from None


def read_config(path, kind="solver"):
    return parse_config(Path(path).read_text(), kind)


def format_config(cfg):
    """Inverse of :func:`parse_config`: every field written out explicitly."""
    out = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name == "net":
            for nf in dataclasses.fields(NetConfig):
                out.append(f"{_NET_PREFIX}{nf.name} = {_format_value(getattr(value, nf.name))}")
        else:
            out.append(f"{f.name} = {_format_value(value)}")
    return "\n".join(out) + "\n"


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


# --- CSV --------------------------------------------------------------------


def write_trace(trace, path, timing=False):
    """Iteration trace as CSV. ``wall_ms`` is only written when ``timing`` is set,
    so that default traces are reproducible byte for byte."""
    header = ["iter", "objective", "residual_max"] + (["wall_ms"] if timing else [])
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(trace)):
            row = [trace.iters[i], repr(trace.objective[i]), repr(trace.residual[i])]
            if timing:
                row.append(f"{trace.wall_ms[i]:.3f}")
            writer.writerow(row)


def write_rows(rows, path, fieldnames):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
