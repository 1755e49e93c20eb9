"""Bit-exact image and heatmap I/O plus rendering helpers.

Formats:
  * binary PPM (P6) for RGB and PGM (P5) for grayscale, maxval 255
  * FMAP1, a tiny float container for heatmaps:
    ``FMAP1\\n<w> <h>\\n`` followed by w*h little-endian float32, row-major
"""

import numpy as np


class ImageFormatError(ValueError):
    """Malformed image or heatmap file; message carries the byte offset."""


# ---------------------------------------------------------------- netpbm

def _read_token(data, pos):
    # netpbm headers are whitespace-separated; '#' starts a comment
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < n and data[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ImageFormatError(f"unexpected end of header at byte {start}")
    return data[start:pos], pos


def decode_netpbm(data):
    """Decode P5/P6 bytes into a uint8 array [H,W] or [H,W,3]."""
    magic, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"bad magic {magic!r} at byte 0")
    vals = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            vals.append(int(tok))
        except ValueError:
            raise ImageFormatError(f"non-numeric header token {tok!r} near byte {pos}")
    w, h, maxval = vals
    if maxval != 255:
        raise ImageFormatError(f"maxval {maxval} unsupported (must be 255)")
    pos += 1  # exactly one whitespace byte after maxval
    channels = 3 if magic == b"P6" else 1
    need = w * h * channels
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise ImageFormatError(
            f"truncated payload: need {need} bytes at offset {pos}, "
            f"have {len(data) - pos}")
    arr = np.frombuffer(payload, dtype=np.uint8)
    if channels == 3:
        return arr.reshape(h, w, 3).copy()
    return arr.reshape(h, w).copy()


def encode_netpbm(arr):
    """Encode uint8 [H,W] as P5 or [H,W,3] as P6."""
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise ImageFormatError(f"expected uint8 pixels, got {arr.dtype}")
    if arr.ndim == 2:
        magic, (h, w) = b"P5", arr.shape
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic, (h, w) = b"P6", arr.shape[:2]
    else:
        raise ImageFormatError(f"cannot encode shape {arr.shape}")
    header = magic + b"\n" + f"{w} {h}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(arr).tobytes()


def read_image(path):
    with open(path, "rb") as fh:
        return decode_netpbm(fh.read())


def write_image(arr, path):
    with open(path, "wb") as fh:
        fh.write(encode_netpbm(arr))


# ----------------------------------------------------------------- FMAP

FMAP_MAGIC = b"FMAP1\n"


def encode_fmap(heat):
    heat = np.asarray(heat, dtype="<f4")
    if heat.ndim != 2:
        raise ImageFormatError(f"FMAP stores 2-D maps, got shape {heat.shape}")
    h, w = heat.shape
    return FMAP_MAGIC + f"{w} {h}\n".encode("ascii") + np.ascontiguousarray(heat).tobytes()


def decode_fmap(data):
    if not data.startswith(FMAP_MAGIC):
        raise ImageFormatError("bad FMAP magic at byte 0")
    end = data.find(b"\n", len(FMAP_MAGIC))
    if end < 0:
        raise ImageFormatError(f"unterminated FMAP size line at byte {len(FMAP_MAGIC)}")
    try:
        w, h = (int(t) for t in data[len(FMAP_MAGIC):end].split())
    except ValueError:
        raise ImageFormatError(f"bad FMAP size line at byte {len(FMAP_MAGIC)}")
    need = 4 * w * h
    payload = data[end + 1:]
    if len(payload) != need:
        raise ImageFormatError(
            f"FMAP payload is {len(payload)} bytes at offset {end + 1}, need {need}")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w).copy()


def read_fmap(path):
    with open(path, "rb") as fh:
        return decode_fmap(fh.read())


def write_fmap(heat, path):
    with open(path, "wb") as fh:
        fh.write(encode_fmap(heat))


# ------------------------------------------------------------- resizing

def bilinear_resize(grid, new_w, new_h):
    """Bilinear resampling with half-pixel centers and clamped borders.

    Source coordinate of destination pixel d is (d + 0.5) * scale - 0.5.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {grid.shape}")
    h, w = grid.shape
    if new_w < 1 or new_h < 1:
        raise ValueError("target dims must be >= 1")
    if (new_h, new_w) == (h, w):
        return grid.astype(np.float32)

    def axis_coords(n_src, n_dst):
        src = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
        src = np.clip(src, 0, n_src - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_src - 1)
        frac = src - lo
        return lo, hi, frac

    ylo, yhi, fy = axis_coords(h, new_h)
    xlo, xhi, fx = axis_coords(w, new_w)
    tl = grid[np.ix_(ylo, xlo)]
    tr = grid[np.ix_(ylo, xhi)]
    bl = grid[np.ix_(yhi, xlo)]
    br = grid[np.ix_(yhi, xhi)]
    top = tl + (tr - tl) * fx[None, :]
    bot = bl + (br - bl) * fx[None, :]
    return (top + (bot - top) * fy[:, None]).astype(np.float32)


# ------------------------------------------------------------ rendering

# piecewise-linear jet: value -> RGB control points
_JET_POINTS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
_JET_COLORS = np.array([
    (0, 0, 131),
    (0, 60, 170),
    (5, 255, 255),
    (255, 255, 0),
    (255, 0, 0),
], dtype=np.float64)


def colormap_jet(norm):
    """Map a [0,1] grid through the jet colormap; returns uint8 [H,W,3]."""
    v = np.clip(np.asarray(norm, dtype=np.float64), 0.0, 1.0)
    rgb = np.empty(v.shape + (3,), dtype=np.float64)
    for ch in range(3):
        rgb[..., ch] = np.interp(v, _JET_POINTS, _JET_COLORS[:, ch])
    return np.floor(rgb + 0.5).astype(np.uint8)


def overlay(image, heat_rgb, alpha=0.5):
    """Blend a rendered heatmap over an image: round(a*heat + (1-a)*img)."""
    image = np.asarray(image, dtype=np.float64)
    heat_rgb = np.asarray(heat_rgb, dtype=np.float64)
    if image.ndim == 2:
        image = np.stack([image] * 3, axis=-1)
    if image.shape != heat_rgb.shape:
        raise ValueError(f"shape mismatch {image.shape} vs {heat_rgb.shape}")
    out = alpha * heat_rgb + (1 - alpha) * image
    return np.floor(out + 0.5).astype(np.uint8)


def tensor_to_image(x):
    """[C,H,W] float in [0,1] -> uint8 [H,W] or [H,W,3]."""
    x = np.asarray(x)
    q = np.floor(np.clip(x, 0, 1) * 255 + 0.5).astype(np.uint8)
    if q.shape[0] == 1:
        return q[0]
    return np.moveaxis(q, 0, -1)


def image_to_tensor(arr):
    """uint8 [H,W] or [H,W,3] -> [C,H,W] float32 in [0,1]."""
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    else:
        arr = np.moveaxis(arr, -1, 0)
    return (arr.astype(np.float32) / 255.0)
